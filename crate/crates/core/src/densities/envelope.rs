use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::recession::rank_one_factor;
use super::simplex::{LinearProgram, LpError, Pricing};
use super::{Density, RecessionEvaluator};
use crate::geometry::Vec3;
use crate::numerics::{fibonacci_sphere, gcd, integer_direction, seeded_rng};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvelopeError {
    #[error("dictionary cannot express the target ({0}); increase z_max or the number of directions")]
    Infeasible(LpError),
    #[error("linear program failed: {0}")]
    Lp(LpError),
    #[error("target has {got} rows, density expects {expected}")]
    Dimension { expected: usize, got: usize },
}

/// Dictionary size: integer vectors with `|z|∞ ≤ z_max` and `directions`
/// Fibonacci-sphere points (plus antipodes).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DictionaryParams {
    pub z_max: i64,
    pub directions: usize,
}

impl Default for DictionaryParams {
    fn default() -> Self {
        Self {
            z_max: 3,
            directions: 256,
        }
    }
}

/// Candidate rank-one atoms `z ⊗ t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    pub z: Vec<Vec<i64>>,
    pub t: Vec<Vec3>,
}

fn first_nonzero_positive(z: &[i64]) -> bool {
    z.iter().find(|&&v| v != 0).is_some_and(|&v| v > 0)
}

/// Primitive integer vectors with `|z|∞ ≤ z_max` whose first nonzero entry is
/// positive. Their negatives are covered by the antipodal directions.
fn half_lattice(dim: usize, z_max: i64) -> Vec<Vec<i64>> {
    let side = (2 * z_max + 1) as usize;
    let mut out = Vec::new();
    let mut z = vec![0i64; dim];
    for code in 0..side.pow(dim as u32) {
        let mut c = code;
        for v in z.iter_mut() {
            *v = (c % side) as i64 - z_max;
            c /= side;
        }
        if first_nonzero_positive(&z) && z.iter().fold(0, |g, &v| gcd(g, v)) == 1 {
            out.push(z.clone());
        }
    }
    // Shorter vectors first, then lexicographic, so nested levels agree on
    // the ordering of shared atoms.
    out.sort_by(|a, b| {
        let na: i64 = a.iter().map(|v| v * v).sum();
        let nb: i64 = b.iter().map(|v| v * v).sum();
        na.cmp(&nb).then_with(|| a.cmp(b))
    });
    out
}

impl Dictionary {
    pub fn base(dim: usize, params: &DictionaryParams) -> Self {
        let mut t = fibonacci_sphere(params.directions);
        let anti: Vec<Vec3> = t.iter().map(|v| -v).collect();
        t.extend(anti);
        Self {
            z: half_lattice(dim, params.z_max),
            t,
        }
    }

    /// Adds the atoms suggested by the target: `±e_j` and the right singular
    /// vectors `±v_k` as directions, and `±z` for every left singular vector
    /// that points along an integer direction.
    pub fn inject_target(&mut self, a: &DMatrix<f64>) {
        for j in 0..3 {
            let mut e = Vec3::zeros();
            e[j] = 1.0;
            self.push_t(e);
            self.push_t(-e);
        }
        let svd = a.clone().svd(true, true);
        let smax = svd.singular_values.iter().fold(0.0_f64, |m, v| m.max(*v));
        if let (Some(u), Some(vt)) = (svd.u.as_ref(), svd.v_t.as_ref()) {
            for k in 0..svd.singular_values.len() {
                if svd.singular_values[k] <= 1e-12 * smax {
                    continue;
                }
                let v = Vec3::new(vt[(k, 0)], vt[(k, 1)], vt[(k, 2)]);
                self.push_t(v);
                self.push_t(-v);
                let col: Vec<f64> = u.column(k).iter().copied().collect();
                if let Some(z) = integer_direction(&col, 1024, 1e-9) {
                    let neg: Vec<i64> = z.iter().map(|v| -v).collect();
                    self.push_z(z);
                    self.push_z(neg);
                }
            }
        }
        if let Some((b, t)) = rank_one_factor(a, 1e-10) {
            if let Some(z) = integer_direction(&b, 1024, 1e-9) {
                let neg: Vec<i64> = z.iter().map(|v| -v).collect();
                self.push_z(z);
                self.push_z(neg);
                self.push_t(t);
                self.push_t(-t);
            }
        }
    }

    fn push_t(&mut self, t: Vec3) {
        if !self.t.contains(&t) {
            self.t.push(t);
        }
    }

    fn push_z(&mut self, z: Vec<i64>) {
        if !self.z.contains(&z) {
            self.z.push(z);
        }
    }

    pub fn len(&self) -> usize {
        self.z.len() * self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateTerm {
    /// `b = weight · z`.
    pub b: Vec<f64>,
    pub t: [f64; 3],
    pub z: Vec<i64>,
    pub weight: f64,
    /// `ψ_∞(b, t)`.
    pub cost: f64,
}

/// Rank-one decomposition `A = Σ b_d ⊗ t_d` with `b_d` in the integer cone.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Certificate {
    pub terms: Vec<CertificateTerm>,
}

impl Certificate {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn resum(&self, dim: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(dim, 3);
        for term in &self.terms {
            for i in 0..dim {
                for c in 0..3 {
                    m[(i, c)] += term.b[i] * term.t[c];
                }
            }
        }
        m
    }

    pub fn cost(&self) -> f64 {
        self.terms.iter().map(|t| t.cost).sum()
    }

    pub fn directions(&self) -> Vec<(Vec<f64>, Vec3)> {
        self.terms
            .iter()
            .map(|t| (t.b.clone(), Vec3::new(t.t[0], t.t[1], t.t[2])))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeSolution {
    /// `g̃(A)`, an upper bound for `g(A)`.
    pub value: f64,
    pub certificate: Certificate,
    /// `max |Σ b ⊗ t − A|`.
    pub residual: f64,
    pub iterations: usize,
    pub dictionary_size: usize,
    pub z_max: i64,
}

/// `g̃(A) = min Σ c_d ψ_∞(z_d, t_d)` over `Σ c_d z_d ⊗ t_d = A`, `c ≥ 0`.
///
/// The target is first scaled by a power of two so that `max |A|` lies in
/// `[1, 2)`; the LP for `A` and `2A` is then bit-identical and
/// `g̃(2A) = 2 g̃(A)` holds exactly.
pub fn convex_envelope(
    a: &DMatrix<f64>,
    rec: &RecessionEvaluator,
    params: &DictionaryParams,
) -> Result<EnvelopeSolution, EnvelopeError> {
    let dim = rec.dim();
    if a.nrows() != dim || a.ncols() != 3 {
        return Err(EnvelopeError::Dimension {
            expected: dim,
            got: a.nrows(),
        });
    }
    let amax = a.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if amax == 0.0 {
        return Ok(EnvelopeSolution {
            value: 0.0,
            certificate: Certificate::default(),
            residual: 0.0,
            iterations: 0,
            dictionary_size: 0,
            z_max: params.z_max,
        });
    }
    let scale = 2f64.powi(-(amax.log2().floor() as i32));
    let target = a * scale;
    let mut dict = Dictionary::base(dim, params);
    dict.inject_target(&target);
    solve_scaled(a, &target, scale, &dict, rec, params.z_max)
}

fn solve_scaled(
    a: &DMatrix<f64>,
    target: &DMatrix<f64>,
    scale: f64,
    dict: &Dictionary,
    rec: &RecessionEvaluator,
    z_max: i64,
) -> Result<EnvelopeSolution, EnvelopeError> {
    let dim = rec.dim();
    let m = 3 * dim;
    let mut columns = Vec::with_capacity(dict.len());
    let mut costs = Vec::with_capacity(dict.len());
    let mut atoms = Vec::with_capacity(dict.len());
    for z in &dict.z {
        let zn = z.iter().map(|&v| (v * v) as f64).sum::<f64>().sqrt();
        for t in &dict.t {
            let mut col = vec![0.0; m];
            for i in 0..dim {
                for c in 0..3 {
                    col[3 * i + c] = z[i] as f64 * t[c];
                }
            }
            columns.push(col);
            costs.push(zn * rec.unit_ratio(z, t).0);
            atoms.push((z, *t));
        }
    }
    let rhs: Vec<f64> = (0..m).map(|k| target[(k / 3, k % 3)]).collect();
    let lp = LinearProgram {
        rows: m,
        columns,
        costs,
        rhs,
    };
    let sol = lp.solve(1e-9, Pricing::Dantzig, 100_000).map_err(|e| match e {
        LpError::Infeasible(_) => EnvelopeError::Infeasible(e),
        other => EnvelopeError::Lp(other),
    })?;
    let mut terms = Vec::with_capacity(sol.support.len());
    let mut value = 0.0;
    for &(j, w) in &sol.support {
        let (z, t) = atoms[j];
        let weight = w / scale;
        let cost = lp.costs[j] * weight;
        value += cost;
        terms.push(CertificateTerm {
            b: z.iter().map(|&v| v as f64 * weight).collect(),
            t: [t.x, t.y, t.z],
            z: z.clone(),
            weight,
            cost,
        });
    }
    let certificate = Certificate { terms };
    let back = certificate.resum(dim);
    let residual = (back - a).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    Ok(EnvelopeSolution {
        value,
        certificate,
        residual,
        iterations: sol.iterations,
        dictionary_size: dict.len(),
        z_max,
    })
}

/// Certificate within `ε` of the finest value: solves on nested dictionaries
/// `z_max = 1, 2, …` and returns the coarsest level whose value is at most
/// `g̃_finest + ε`. Larger `ε` can only select a coarser, costlier level.
pub fn certificate_within(
    a: &DMatrix<f64>,
    rec: &RecessionEvaluator,
    params: &DictionaryParams,
    eps: f64,
) -> Result<EnvelopeSolution, EnvelopeError> {
    let levels: Vec<EnvelopeSolution> = (1..=params.z_max.max(1))
        .map(|z_max| {
            convex_envelope(
                a,
                rec,
                &DictionaryParams {
                    z_max,
                    directions: params.directions,
                },
            )
        })
        .collect::<Result<_, _>>()?;
    let finest = levels.last().expect("at least one level").value;
    Ok(levels
        .into_iter()
        .find(|s| s.value <= finest + eps)
        .expect("finest level qualifies"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainReport {
    pub checked: usize,
    pub passed: bool,
    pub max_violation: f64,
    pub violations: Vec<String>,
}

/// Samples the chain `ψ(sz,t)/s ≥ ψ(ksz,t)/(ks)` and
/// `ψ(z,t) ≥ ψ_∞(z,t) ≥ g̃(z ⊗ t)` (up to the LP tolerance).
pub fn inequality_chain_check(
    psi: &Density,
    rec: &RecessionEvaluator,
    params: &DictionaryParams,
    samples: usize,
    seed: u64,
) -> ChainReport {
    let mut rng = seeded_rng(&[seed, 0xC4A1]);
    let dirs = fibonacci_sphere(1000);
    let mut report = ChainReport {
        checked: 0,
        passed: true,
        max_violation: 0.0,
        violations: Vec::new(),
    };
    let note = |report: &mut ChainReport, excess: f64, tol: f64, what: String| {
        report.checked += 1;
        report.max_violation = report.max_violation.max(excess);
        if excess > tol {
            report.passed = false;
            report.violations.push(what);
        }
    };
    for n in 0..samples {
        let z: Vec<i64> = if n < psi.dim {
            (0..psi.dim).map(|i| (i == n) as i64).collect()
        } else {
            loop {
                let z: Vec<i64> = (0..psi.dim).map(|_| rng.gen_range(-10..=10)).collect();
                if z.iter().any(|&v| v != 0) {
                    break z;
                }
            }
        };
        let t = dirs[rng.gen_range(0..dirs.len())];
        for s in 1..=3i64 {
            for k in 2..=3i64 {
                let sz: Vec<i64> = z.iter().map(|v| v * s).collect();
                let ksz: Vec<i64> = z.iter().map(|v| v * s * k).collect();
                let lhs = psi.eval(&sz, &t) / s as f64;
                let rhs = psi.eval(&ksz, &t) / (k * s) as f64;
                note(&mut report, rhs - lhs, 1e-12 * lhs.max(1.0), format!("ψ(sz,t)/s < ψ(ksz,t)/(ks) at z={z:?}, s={s}, k={k}"));
            }
        }
        let zf: Vec<f64> = z.iter().map(|&v| v as f64).collect();
        let direct = psi.eval(&z, &t);
        let r = rec.evaluate(&zf, &t).value.to_f64();
        note(&mut report, r - direct, 1e-12 * direct.max(1.0), format!("ψ_∞ > ψ at z={z:?}"));
        let mut a = DMatrix::zeros(psi.dim, 3);
        for i in 0..psi.dim {
            for c in 0..3 {
                a[(i, c)] = zf[i] * t[c];
            }
        }
        match convex_envelope(&a, rec, params) {
            Ok(sol) => note(&mut report, sol.value - r, 1e-8 * r.max(1.0), format!("g̃(z⊗t) > ψ_∞ at z={z:?}")),
            Err(e) => note(&mut report, f64::INFINITY, 0.0, format!("envelope failed at z={z:?}: {e}")),
        }
    }
    report
}
