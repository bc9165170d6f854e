use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{Resolved, RunConfig};
use super::export::{render_geometry, GeometryFormat};
use super::run::decompositions;
use super::HarnessError;
use crate::construction::{glue, ConstructionParams, GluedMeasure};
use crate::currents::{check_divergence_free, default_quantum, pair_with_gradient, read_csv, PolyhedralCurrent};
use crate::densities::{check_density_properties, inequality_chain_check, RecessionEvaluator};
use crate::fields::PiecewiseConstantField;
use crate::geometry::{Triangulation, Vec3};
use crate::numerics::seeded_rng;

/// A deliberate defect, to confirm that the suite catches it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    /// Adds `u ⊗ n` to one tetrahedron's matrix at an interior face.
    NormalJump,
    /// Adds a dangling segment inside the first tetrahedron.
    LedgerImbalance,
}

impl std::str::FromStr for Fault {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "normal-jump" => Ok(Fault::NormalJump),
            "ledger-imbalance" => Ok(Fault::LedgerImbalance),
            other => Err(format!("unknown fault `{other}` (expected normal-jump or ledger-imbalance)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            detail,
        });
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let _ = writeln!(s, "[{}] {}: {}", if c.passed { "pass" } else { "FAIL" }, c.name, c.detail);
        }
        let _ = writeln!(s, "{}", if self.passed() { "all checks passed" } else { "verification failed" });
        s
    }
}

/// `(largest |⟨μ, ∇φ⟩| / (‖μ‖ Lip φ), count)` over random bumps
/// `φ(x) = c (1 − |x − x₀|²/r²)²` supported in balls inside `Ω`.
pub fn gradient_pairing_check(mu: &PolyhedralCurrent, mesh: &Triangulation, count: usize, seed: u64) -> (f64, usize) {
    let mass = mu.total_variation();
    if mass == 0.0 {
        return (0.0, 0);
    }
    let faces: Vec<_> = mesh.boundary_faces().map(|(tri, _)| tri).collect();
    let mut rng = seeded_rng(&[seed, 0xB0B]);
    let mut worst: f64 = 0.0;
    let mut done = 0;
    let mut attempts = 0;
    while done < count && attempts < 100 * count.max(1) {
        attempts += 1;
        let tet = &mesh.tetra()[rng.gen_range(0..mesh.len())];
        let mut w: [f64; 4] = std::array::from_fn(|_| rng.gen_range(0.05..1.0));
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= total);
        let c: Vec3 = tet.vertices().iter().zip(&w).map(|(v, x)| v * *x).sum();
        let dist = faces.iter().map(|f| f.distance(&c)).fold(f64::INFINITY, f64::min);
        let r = 0.9 * dist * rng.gen_range(0.3..1.0);
        if !(r > 0.0) {
            continue;
        }
        let coef: Vec<f64> = (0..mu.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let cnorm = coef.iter().map(|x| x * x).sum::<f64>().sqrt();
        let lip = 8.0 / (3.0 * 3f64.sqrt() * r) * cnorm;
        let phi = |x: &Vec3, out: &mut [f64]| {
            let s = (x - c).norm_squared() / (r * r);
            let v = if s < 1.0 { (1.0 - s).powi(2) } else { 0.0 };
            for (o, k) in out.iter_mut().zip(&coef) {
                *o = k * v;
            }
        };
        worst = worst.max(pair_with_gradient(mu, phi).abs() / (mass * lip));
        done += 1;
    }
    (worst, done)
}

/// The lattice-point counting bound for a convex polygon of perimeter `L`
/// in a square lattice of spacing `s`: the count differs from `area/s²` by
/// at most the number of lattice cells meeting the boundary, `4(L/s + 1)`.
/// The cells here have perimeter at most `3 diam(T)/k` and `s = 1/k²`.
pub fn lattice_count_bound(diam: f64, k: usize) -> f64 {
    4.0 * (3.0 * diam * k as f64 + 1.0)
}

fn inject_normal_jump(field: &PiecewiseConstantField) -> Result<PiecewiseConstantField, HarnessError> {
    let mesh = field.mesh();
    let Some((face, (a, _), _)) = mesh.adjacency().interior().next() else {
        return Err(HarnessError::Verify("normal-jump fault needs an interior face".into()));
    };
    let v = mesh.vertices();
    let n = (v[face[1]] - v[face[0]]).cross(&(v[face[2]] - v[face[0]])).normalize();
    let scale = field.max_abs().max(1.0) * 0.1;
    let mut ms = field.matrices().to_vec();
    let mut bump = DMatrix::zeros(field.dim(), 3);
    for c in 0..3 {
        bump[(0, c)] = scale * n[c];
    }
    ms[a] += bump;
    Ok(PiecewiseConstantField::unchecked(mesh.clone(), ms)?)
}

/// Runs the property suites on the configured inputs at the smallest `k`.
pub fn verify(cfg: &RunConfig, fault: Option<Fault>) -> Result<VerifyReport, HarnessError> {
    let resolved = cfg.resolve()?;
    let field = match fault {
        Some(Fault::NormalJump) => inject_normal_jump(&resolved.field)?,
        _ => resolved.field.clone(),
    };
    let r = Resolved { field, ..resolved };
    let mut rep = VerifyReport::default();
    let mesh = r.field.mesh();
    let tol = cfg.tolerances;

    let jumps = r.field.check_normal_jumps();
    let detail = match jumps.worst_face {
        Some((face, (a, b))) if !jumps.passes(tol.normal_jump) => format!(
            "face {face:?} between tets {a} and {b}: relative jump {:.3e} > {:.1e}",
            jumps.relative, tol.normal_jump
        ),
        _ => format!("relative jump {:.3e}", jumps.relative),
    };
    rep.push("normal-jump", jumps.passes(tol.normal_jump), detail);

    let decs = decompositions(&r);
    let resum = decs
        .iter()
        .zip(r.field.matrices())
        .map(|(d, a)| (d.resum(r.field.dim()) - a).abs().max())
        .fold(0.0, f64::max);
    rep.push("rank-one-resum", resum <= 1e-12 * r.field.max_abs().max(1.0), format!("max error {resum:.3e}"));

    let props = check_density_properties(&r.psi, 200, 64, cfg.seed);
    let witness = [("lower bound", &props.lower_bound), ("upper bound", &props.upper_bound), ("subadditivity", &props.subadditivity)]
        .into_iter()
        .find_map(|(name, p)| p.witness.as_ref().map(|w| format!("{name} fails at z = {:?}, z' = {:?}, t = {:?}", w.0, w.1, w.2)));
    let detail = witness.unwrap_or_else(|| {
        format!("{}: psi/|z| in [{:.4}, {:.4}]", props.name, props.fitted_lower, props.fitted_upper)
    });
    rep.push("density-properties", props.all_passed(), detail);

    let rec = RecessionEvaluator::new(r.psi.clone(), cfg.density.s_max).map_err(|e| HarnessError::Density(e.to_string()))?;
    let chain = inequality_chain_check(&r.psi, &rec, &cfg.dictionary, 20, cfg.seed);
    let detail = match chain.violations.first() {
        Some(v) => format!("{} of {} samples violate: {v}", chain.violations.len(), chain.checked),
        None => format!("{} samples, largest violation {:.3e}", chain.checked, chain.max_violation),
    };
    rep.push("inequality-chain", chain.passed, detail);

    let k = cfg.ks.iter().copied().min().expect("validated");
    let q = default_quantum(mesh.domain());
    let params = ConstructionParams::for_domain(k, cfg.seed, mesh.domain());
    let glued: Option<GluedMeasure> = if r.field.is_zero() {
        None
    } else {
        match glue(&r.field, &decs, &params) {
            Ok(g) => Some(g),
            Err(e) => {
                rep.push("construction", false, e.to_string());
                return Ok(rep);
            }
        }
    };
    let mut mu = glued.as_ref().map_or_else(|| PolyhedralCurrent::new(r.field.dim()), |g| g.measure());
    if fault == Some(Fault::LedgerImbalance) {
        let c = mesh.tetra()[0].barycenter();
        let d = mesh.tetra()[0].diam() * 1e-2;
        let mut b = vec![0.0; mu.dim().max(1)];
        b[0] = r.field.max_abs().max(1.0);
        if mu.dim() == 0 {
            mu = PolyhedralCurrent::new(1);
        }
        mu.push(c + Vec3::new(0.31, 0.17, 0.07) * d, c + Vec3::new(-0.13, 0.29, 0.11) * d, &b)?;
    }
    let mass = mu.total_variation_on(mesh);
    let div = check_divergence_free(&mu, mesh, q, tol.ledger * mass.max(f64::MIN_POSITIVE))?;
    let detail = match (&div.offending.first(), div.worst) {
        (Some((p, m)), _) => format!(
            "node ({:.6}, {:.6}, {:.6}) carries {m:?}; {} offending of {} interior nodes",
            p.x,
            p.y,
            p.z,
            div.offending.len(),
            div.interior_nodes
        ),
        (None, Some((_, w))) => format!("{} interior nodes with round-off, largest {w:.3e}", div.interior_nodes),
        (None, None) => "every interior node balances exactly".into(),
    };
    rep.push("ledger-imbalance", div.divergence_free, detail);

    let (worst, n) = gradient_pairing_check(&mu, mesh, 20, cfg.seed);
    rep.push(
        "gradient-pairing",
        worst <= tol.ledger,
        format!("{n} bumps, largest |<mu, grad phi>| / (|mu| Lip) = {worst:.3e}"),
    );

    if let Some(g) = &glued {
        let mut worst: f64 = 0.0;
        let mut passed = true;
        for p in &g.pieces {
            let gap = p.lattice_count_gap();
            let bound = lattice_count_bound(mesh.tetra()[p.tet].diam(), k);
            passed &= gap <= bound;
            worst = worst.max(gap / bound);
        }
        rep.push("lattice-count", passed, format!("largest count gap is {worst:.3} of the bound"));
    }

    let csv = render_geometry(&mu, GeometryFormat::Csv)?;
    let back = read_csv(csv.as_slice())?;
    rep.push("csv-round-trip", back == mu, format!("{} segments", mu.len()));

    if let Some(g) = &glued {
        let same = glue(&r.field, &decs, &params)?.measure() == g.measure();
        rep.push("determinism", same, format!("k = {k}, seed = {}", cfg.seed));
    }

    Ok(rep)
}
