//! Line-tension energies of polyhedral currents and the upper-bound and
//! lower-bound experiments comparing `E_σ`, `F_∞` and `E₀`.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::construction::{glue, ConstructionError, ConstructionParams};
use crate::currents::{
    decompose_into_loops, default_quantum, resum_loops, round_multiplicities, CurrentError, Decomposition,
    PolyhedralCurrent, SegmentRef,
};
use crate::densities::{
    certificate_within, convex_envelope, Density, DictionaryParams, EnvelopeError, RecessionEvaluator,
};
use crate::fields::{PiecewiseConstantField, RankOneDecomposition};
use crate::geometry::{Region, Vec3};
use crate::numerics::{loglog_slope, sci, Extended};

#[derive(Debug, Error)]
pub enum EnergyError {
    #[error("σ must be positive, got {0}")]
    BadSigma(f64),
    #[error(transparent)]
    Current(#[from] CurrentError),
    #[error(transparent)]
    Construction(#[from] ConstructionError),
    #[error("tet {tet}: {source}")]
    Envelope { tet: usize, source: EnvelopeError },
}

const CHUNK: usize = 4096;

/// `Σ_s f(s) · H¹(s ∩ window)` with a fixed chunking so the floating-point
/// sum does not depend on the thread count. `f` returning `None` means `+∞`.
fn segment_sum<R, F>(mu: &PolyhedralCurrent, window: &R, f: F) -> Extended
where
    R: Region + ?Sized,
    F: Fn(SegmentRef<'_>) -> Option<f64> + Sync,
{
    let n = mu.len();
    let chunks: Vec<Extended> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = 0.0;
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                let s = mu.segment(i);
                if s.burgers.iter().all(|b| *b == 0.0) {
                    continue;
                }
                let len = window.clipped_length(&s.start, &s.end);
                if len == 0.0 {
                    continue;
                }
                match f(s) {
                    Some(v) => acc += v * len,
                    None => return Extended::Infinite,
                }
            }
            Extended::Finite(acc)
        })
        .collect();
    chunks.into_iter().fold(Extended::Finite(0.0), Extended::add)
}

/// Relative tolerance for `b/σ ∈ Z^N`.
pub const LATTICE_TOL: f64 = 1e-9;

/// `E_σ(μ) = Σ σ ψ(b/σ, τ) H¹(s ∩ Ω)`; `+∞` when some `b/σ` is not integral.
pub fn e_sigma<R: Region + ?Sized>(
    mu: &PolyhedralCurrent,
    psi: &Density,
    sigma: f64,
    window: &R,
) -> Result<Extended, EnergyError> {
    if !(sigma > 0.0) {
        return Err(EnergyError::BadSigma(sigma));
    }
    Ok(segment_sum(mu, window, |s| {
        let mut z = Vec::with_capacity(s.burgers.len());
        for b in s.burgers {
            let q = b / sigma;
            let r = q.round();
            if (q - r).abs() > LATTICE_TOL * q.abs().max(1.0) {
                return None;
            }
            z.push(r as i64);
        }
        Some(sigma * psi.eval(&z, &s.tangent()))
    }))
}

/// `F_∞(μ, Ω) = Σ ψ_∞(θ, τ) H¹(s ∩ Ω)`; `+∞` when some `θ` lies outside the
/// integer cone.
pub fn f_infinity<R: Region + ?Sized>(mu: &PolyhedralCurrent, rec: &RecessionEvaluator, window: &R) -> Extended {
    segment_sum(mu, window, |s| rec.evaluate(s.burgers, &s.tangent()).value.finite())
}

/// `Σ_i g̃(A_i) |T_i|` and the certificates, one per tetrahedron.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeReduction {
    pub eps: f64,
    /// `Σ g̃(A_i)|T_i|` on the finest dictionary.
    pub e0: f64,
    /// `Σ (value of the chosen certificate) |T_i|`.
    pub bound: f64,
    pub volume: f64,
    pub values: Vec<f64>,
    pub chosen: Vec<f64>,
    #[serde(skip)]
    pub decompositions: Vec<RankOneDecomposition>,
}

/// Step one of the upper bound: per tetrahedron, a certificate within `ε` of
/// `g̃(A_i)` whose atoms become the lattice directions.
pub fn reduce_to_recession(
    field: &PiecewiseConstantField,
    rec: &RecessionEvaluator,
    dict: &DictionaryParams,
    eps: f64,
) -> Result<EnvelopeReduction, EnergyError> {
    let solves: Vec<_> = field
        .matrices()
        .par_iter()
        .enumerate()
        .map(|(tet, a)| {
            let finest = convex_envelope(a, rec, dict).map_err(|source| EnergyError::Envelope { tet, source })?;
            let chosen =
                certificate_within(a, rec, dict, eps).map_err(|source| EnergyError::Envelope { tet, source })?;
            Ok((finest.value, chosen))
        })
        .collect::<Result<_, EnergyError>>()?;
    let vols: Vec<f64> = field.mesh().tetra().iter().map(|t| t.volume()).collect();
    let mut out = EnvelopeReduction {
        eps,
        e0: 0.0,
        bound: 0.0,
        volume: vols.iter().sum(),
        values: Vec::new(),
        chosen: Vec::new(),
        decompositions: Vec::new(),
    };
    for ((finest, chosen), v) in solves.into_iter().zip(&vols) {
        out.e0 += finest * v;
        out.bound += chosen.value * v;
        out.values.push(finest);
        out.chosen.push(chosen.value);
        out.decompositions.push(RankOneDecomposition {
            terms: chosen.certificate.directions(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyRow {
    pub k: usize,
    pub sigma: f64,
    pub eps: f64,
    /// `Σ g̃(A_i)|T_i|`, the computable stand-in for `E₀(μ)`.
    pub e0: f64,
    /// `Σ (g̃(A_i) + slack) |T_i|` for the certificates used.
    pub certificate_bound: f64,
    pub f_infinity: Extended,
    /// `F_∞ / (E₀ + ε L³) − 1`.
    pub f_infinity_excess: f64,
    /// `F_∞` of the re-summed loops `μ̃`.
    pub f_infinity_loops: Extended,
    pub e_sigma: Extended,
    pub gap: f64,
    /// `c̄ σ √N Σ_loops H¹(loop ∩ Ω)`.
    pub gap_bound: f64,
    pub mass: f64,
    pub eta_mass: f64,
    pub loops: usize,
    pub dust: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyReport {
    pub density: String,
    pub rows: Vec<EnergyRow>,
    /// Fitted slope of `|E_σ − F_∞|` against `σ` at the largest `k` and
    /// smallest `ε`, over rows with a nonzero gap.
    pub sigma_rate: Option<f64>,
    pub reductions: Vec<EnvelopeReduction>,
}

impl EnergyReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "k,sigma,eps,e0,certificate_bound,f_infinity,f_infinity_excess,f_infinity_loops,e_sigma,gap,gap_bound,mass,eta_mass,loops,dust\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{:e},{:e},{},{},{},{},{},{},{},{},{},{},{},{:.6e}",
                r.k,
                r.sigma,
                r.eps,
                sci(r.e0),
                sci(r.certificate_bound),
                fmt_ext(r.f_infinity),
                sci(r.f_infinity_excess),
                fmt_ext(r.f_infinity_loops),
                fmt_ext(r.e_sigma),
                sci(r.gap),
                sci(r.gap_bound),
                sci(r.mass),
                sci(r.eta_mass),
                r.loops,
                r.dust + 0.0
            );
        }
        s
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "density = {}", self.density);
        for red in &self.reductions {
            let _ = writeln!(s, "eps = {:e}: e0 = {:.9}, certificate bound = {:.9}", red.eps, red.e0, red.bound);
        }
        match self.sigma_rate {
            Some(r) => {
                let _ = writeln!(s, "sigma rate = {r:.4}");
            }
            None => {
                let _ = writeln!(s, "sigma rate = n/a");
            }
        }
        s
    }
}

fn fmt_ext(v: Extended) -> String {
    match v {
        Extended::Finite(x) => sci(x),
        Extended::Infinite => "inf".into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentParams {
    pub ks: Vec<usize>,
    pub sigmas: Vec<f64>,
    pub eps: Vec<f64>,
    pub dictionary: DictionaryParams,
    pub s_max: u64,
    pub seed: u64,
}

/// Loop decomposition of the full measure; nodes not inside the open region
/// (ray far ends, boundary barycenters) are exempt.
pub fn loops_of<R: Region + ?Sized>(
    mu: &PolyhedralCurrent,
    region: &R,
    quantum: f64,
) -> Result<Decomposition, CurrentError> {
    decompose_into_loops(mu, quantum, |p: &Vec3| !region.contains_open(p, quantum), 1e-12)
}

/// Certificates per tetrahedron, `μ_k^ε` for every `k`, `F_∞`, loop
/// decomposition and `E_σ` of the rounded loops for every `σ`.
pub fn upper_bound_experiment(
    field: &PiecewiseConstantField,
    psi: &Density,
    params: &ExperimentParams,
) -> Result<EnergyReport, EnergyError> {
    let rec = RecessionEvaluator::new(psi.clone(), params.s_max).expect("s_max >= 1");
    let domain = *field.mesh().domain();
    let omega = field.mesh();
    let q = default_quantum(&domain);
    let n = field.dim() as f64;
    let mut report = EnergyReport {
        density: psi.name(),
        rows: Vec::new(),
        sigma_rate: None,
        reductions: Vec::new(),
    };
    for &eps in &params.eps {
        let red = reduce_to_recession(field, &rec, &params.dictionary, eps)?;
        let target = red.e0 + eps * red.volume;
        for &k in &params.ks {
            let cp = ConstructionParams::for_domain(k, params.seed, &domain);
            let glued = if field.is_zero() {
                None
            } else {
                Some(glue(field, &red.decompositions, &cp)?)
            };
            let mu = glued.as_ref().map_or_else(|| PolyhedralCurrent::new(field.dim()), |g| g.measure());
            let f_inf = f_infinity(&mu, &rec, omega);
            let eta_mass = glued
                .as_ref()
                .map_or(0.0, |g| g.corrector().total_variation_on(omega));
            let decomp = loops_of(&mu, omega, q)?;
            let tilde = resum_loops(&decomp.loops, decomp.dim, q)?;
            let f_loops = f_infinity(&tilde, &rec, omega);
            let loop_len: f64 = decomp
                .loops
                .iter()
                .map(|l| l.segments().map(|(a, b)| omega.clipped_length(&a, &b)).sum::<f64>())
                .sum();
            for &sigma in &params.sigmas {
                let hat = round_multiplicities(&decomp, sigma, q)?;
                let es = e_sigma(&hat, psi, sigma, omega)?;
                let gap = match (es, f_loops) {
                    (Extended::Finite(a), Extended::Finite(b)) => (a - b).abs(),
                    _ => f64::INFINITY,
                };
                report.rows.push(EnergyRow {
                    k,
                    sigma,
                    eps,
                    e0: red.e0,
                    certificate_bound: red.bound,
                    f_infinity: f_inf,
                    f_infinity_excess: if target > 0.0 { f_inf.to_f64() / target - 1.0 } else { 0.0 },
                    f_infinity_loops: f_loops,
                    e_sigma: es,
                    gap,
                    gap_bound: psi.upper * sigma * n.sqrt() * loop_len,
                    mass: mu.total_variation_on(omega),
                    eta_mass,
                    loops: decomp.loops.len(),
                    dust: decomp.dust,
                });
            }
        }
        report.reductions.push(red);
    }
    let kmax = params.ks.iter().copied().max();
    let emin = params.eps.iter().copied().fold(f64::INFINITY, f64::min);
    let (xs, ys): (Vec<f64>, Vec<f64>) = report
        .rows
        .iter()
        .filter(|r| Some(r.k) == kmax && r.eps == emin && r.gap > 0.0 && r.gap.is_finite())
        .map(|r| (r.sigma, r.gap))
        .unzip();
    report.sigma_rate = loglog_slope(&xs, &ys);
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowerBoundReport {
    /// Rows with `E_σ ≥ Σ g̃(b ⊗ t) H¹` on the sampled segments.
    pub rows_checked: usize,
    pub segments_checked: usize,
    pub violations: Vec<String>,
    pub e0: f64,
    pub liminf_estimate: f64,
    pub limsup_estimate: f64,
    /// `limsup / (E₀ + ε L³) − 1`.
    pub sandwich_gap: f64,
}

impl LowerBoundReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Segment-wise form of the lower-bound chain on a rounded measure: for every
/// sampled segment `σ ψ(b/σ, t) ≥ g̃(b ⊗ t) − tol`, which follows from
/// `ψ(sb,t)/s ≥ ψ_∞(b,t) ≥ g̃(b ⊗ t)`. Also reports the energy sandwich.
pub fn lower_bound_diagnostics(
    psi: &Density,
    rec: &RecessionEvaluator,
    dict: &DictionaryParams,
    report: &EnergyReport,
    rounded: &[(f64, PolyhedralCurrent)],
    samples: usize,
) -> LowerBoundReport {
    let mut out = LowerBoundReport {
        rows_checked: 0,
        segments_checked: 0,
        violations: Vec::new(),
        e0: 0.0,
        liminf_estimate: 0.0,
        limsup_estimate: 0.0,
        sandwich_gap: 0.0,
    };
    for (sigma, mu) in rounded {
        out.rows_checked += 1;
        let stride = (mu.len() / samples.max(1)).max(1);
        for i in (0..mu.len()).step_by(stride).take(samples) {
            let s = mu.segment(i);
            let t = s.tangent();
            let z: Vec<i64> = s.burgers.iter().map(|b| (b / sigma).round() as i64).collect();
            let lhs = sigma * psi.eval(&z, &t);
            let mut a = DMatrix::zeros(s.burgers.len(), 3);
            for (r, b) in s.burgers.iter().enumerate() {
                for c in 0..3 {
                    a[(r, c)] = b * t[c];
                }
            }
            let g = match convex_envelope(&a, rec, dict) {
                Ok(sol) => sol.value,
                Err(e) => {
                    out.violations.push(format!("σ={sigma:e}, segment {i}: {e}"));
                    continue;
                }
            };
            out.segments_checked += 1;
            if lhs < g - 1e-8 * g.max(1.0) {
                out.violations.push(format!("σ={sigma:e}, segment {i}: E_σ density {lhs} < g̃ {g}"));
            }
        }
    }
    let kmax = report.rows.iter().map(|r| r.k).max();
    let finest: Vec<&EnergyRow> = report.rows.iter().filter(|r| Some(r.k) == kmax).collect();
    if let Some(first) = finest.first() {
        out.e0 = first.e0;
        let vals: Vec<f64> = finest.iter().map(|r| r.e_sigma.to_f64()).collect();
        out.liminf_estimate = vals.iter().copied().fold(f64::INFINITY, f64::min);
        out.limsup_estimate = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let target = first.e0 + first.eps * report.reductions.first().map_or(0.0, |r| r.volume);
        out.sandwich_gap = if target > 0.0 { out.limsup_estimate / target - 1.0 } else { 0.0 };
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Aabb, Triangulation};

    fn unit_box() -> Aabb {
        Aabb::new([-1.0; 3], [2.0; 3])
    }

    fn square(b: &[f64]) -> PolyhedralCurrent {
        let p = [
            Vec3::new(0.0, 0.0, 0.5),
            Vec3::new(1.0, 0.0, 0.5),
            Vec3::new(1.0, 1.0, 0.5),
            Vec3::new(0.0, 1.0, 0.5),
        ];
        let mut c = PolyhedralCurrent::new(b.len());
        for i in 0..4 {
            c.push(p[i], p[(i + 1) % 4], b).unwrap();
        }
        c
    }

    #[test]
    fn unit_segment_energy_is_sigma() {
        let mut c = PolyhedralCurrent::new(2);
        c.push(Vec3::zeros(), Vec3::x(), &[0.25, 0.0]).unwrap();
        let e = e_sigma(&c, &Density::iso(2), 0.25, &unit_box()).unwrap();
        assert_eq!(e, Extended::Finite(0.25));
        assert!(matches!(e_sigma(&c, &Density::iso(2), 0.0, &unit_box()), Err(EnergyError::BadSigma(_))));
        assert_eq!(e_sigma(&c, &Density::iso(2), 0.1, &unit_box()).unwrap(), Extended::Infinite);
    }

    #[test]
    fn coincident_segments_versus_double_multiplicity() {
        let mut two = PolyhedralCurrent::new(1);
        two.push(Vec3::zeros(), Vec3::x(), &[0.5]).unwrap();
        two.push(Vec3::zeros(), Vec3::x(), &[0.5]).unwrap();
        let mut one = PolyhedralCurrent::new(1);
        one.push(Vec3::zeros(), Vec3::x(), &[1.0]).unwrap();
        let w = unit_box();
        let iso = Density::iso(1);
        assert_eq!(e_sigma(&one, &iso, 0.5, &w).unwrap(), e_sigma(&two, &iso, 0.5, &w).unwrap());
        let off = Density::offset(1, 1.0);
        assert!(e_sigma(&one, &off, 0.5, &w).unwrap().to_f64() < e_sigma(&two, &off, 0.5, &w).unwrap().to_f64());
    }

    #[test]
    fn iso_energy_does_not_depend_on_sigma() {
        let c = square(&[0.5, -0.25]);
        let w = unit_box();
        let a = e_sigma(&c, &Density::iso(2), 0.25, &w).unwrap().to_f64();
        let b = e_sigma(&c, &Density::iso(2), 0.125, &w).unwrap().to_f64();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn square_loop_recession_energy() {
        let rec = RecessionEvaluator::new(Density::iso(1), 64).unwrap();
        assert!((f_infinity(&square(&[1.0]), &rec, &unit_box()).to_f64() - 4.0).abs() < 1e-15);
        assert!((f_infinity(&square(&[2.5]), &rec, &unit_box()).to_f64() - 10.0).abs() < 1e-14);
        let rec2 = RecessionEvaluator::new(Density::iso(2), 64).unwrap();
        assert_eq!(f_infinity(&square(&[1.0, 2f64.sqrt()]), &rec2, &unit_box()), Extended::Infinite);
    }

    #[test]
    fn f_infinity_is_additive_over_disjoint_boxes() {
        let rec = RecessionEvaluator::new(Density::slip_e3(1), 64).unwrap();
        let c = square(&[1.0]);
        let left = Aabb::new([-1.0; 3], [0.5, 2.0, 2.0]);
        let right = Aabb::new([0.5, -1.0, -1.0], [2.0; 3]);
        let total = f_infinity(&c, &rec, &unit_box()).to_f64();
        let parts = f_infinity(&c, &rec, &left).to_f64() + f_infinity(&c, &rec, &right).to_f64();
        assert!((total - parts).abs() < 1e-14);
    }

    #[test]
    fn zero_field_gives_zero_rows() {
        let mesh = Triangulation::single_tet().unwrap();
        let field = PiecewiseConstantField::constant(mesh, &DMatrix::zeros(1, 3));
        let params = ExperimentParams {
            ks: vec![2],
            sigmas: vec![0.5],
            eps: vec![0.01],
            dictionary: DictionaryParams { z_max: 1, directions: 16 },
            s_max: 16,
            seed: 1,
        };
        let r = upper_bound_experiment(&field, &Density::iso(1), &params).unwrap();
        assert_eq!(r.rows.len(), 1);
        let row = &r.rows[0];
        assert_eq!((row.e0, row.f_infinity.to_f64(), row.e_sigma.to_f64(), row.mass), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn rank_one_tet_converges_to_volume() {
        let mesh = Triangulation::single_tet().unwrap();
        let a = DMatrix::from_row_slice(1, 3, &[0.0, 0.0, 1.0]);
        let vol = mesh.total_volume();
        let field = PiecewiseConstantField::constant(mesh, &a);
        let params = ExperimentParams {
            ks: vec![4, 8],
            sigmas: vec![1.0 / 4096.0],
            eps: vec![0.01],
            dictionary: DictionaryParams { z_max: 1, directions: 32 },
            s_max: 16,
            seed: 1,
        };
        let r = upper_bound_experiment(&field, &Density::iso(1), &params).unwrap();
        assert!((r.reductions[0].e0 - vol).abs() < 1e-12);
        let (r4, r8) = (&r.rows[0], &r.rows[1]);
        assert!(r8.f_infinity_excess < r4.f_infinity_excess);
        for row in &r.rows {
            assert!(row.gap <= row.gap_bound + 1e-12);
        }
    }
}
