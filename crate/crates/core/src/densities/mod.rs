//! Line-tension densities `ψ(z, t)` on `Z^N × S²`, their structural checks,
//! the recession function `ψ_∞`, `g_∞` on rank-one matrices and the convex
//! envelope `g̃` computed by linear programming.

mod envelope;
mod recession;
mod simplex;
mod table;

pub use envelope::{
    certificate_within, convex_envelope, inequality_chain_check, Certificate, CertificateTerm,
    ChainReport, Dictionary, DictionaryParams,
    EnvelopeError, EnvelopeSolution,
};
pub use recession::{g_infinity, RecessionEvaluator, RecessionValue};
pub use simplex::{LinearProgram, LpError, LpSolution, Pricing};
pub use table::TableDensity;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::geometry::Vec3;
use crate::numerics::{fibonacci_sphere, seeded_rng};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DensityError {
    #[error("unknown density `{0}`")]
    Unknown(String),
    #[error("density table line {row}: {message}")]
    Table { row: usize, message: String },
    #[error("recession needs s_max >= 1")]
    BadSmax,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DensityKind {
    /// `|z|`.
    Iso,
    /// `(2 − |⟨t, e₃⟩|) |z|`: cheapest for lines along `e₃`.
    SlipE3,
    /// `|z| + α` for `z ≠ 0`.
    Offset(f64),
    /// `|z|^p`.
    Power(f64),
    Table(TableDensity),
}

/// A density with its declared growth constants `c |z| ≤ ψ(z,t) ≤ c̄ |z|`.
#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    pub dim: usize,
    pub kind: DensityKind,
    pub lower: f64,
    pub upper: f64,
}

fn norm_i(z: &[i64]) -> f64 {
    z.iter().map(|&v| (v * v) as f64).sum::<f64>().sqrt()
}

impl Density {
    pub fn iso(dim: usize) -> Self {
        Self {
            dim,
            kind: DensityKind::Iso,
            lower: 1.0,
            upper: 1.0,
        }
    }

    pub fn slip_e3(dim: usize) -> Self {
        Self {
            dim,
            kind: DensityKind::SlipE3,
            lower: 1.0,
            upper: 2.0,
        }
    }

    pub fn offset(dim: usize, alpha: f64) -> Self {
        Self {
            dim,
            kind: DensityKind::Offset(alpha),
            lower: 1.0,
            upper: 1.0 + alpha,
        }
    }

    pub fn power(dim: usize, p: f64) -> Self {
        Self {
            dim,
            kind: DensityKind::Power(p),
            lower: 1.0,
            upper: 1.0,
        }
    }

    pub fn table(table: TableDensity) -> Self {
        Self {
            dim: table.dim(),
            lower: table.lower(),
            upper: table.upper(),
            kind: DensityKind::Table(table),
        }
    }

    /// Builtin names: `iso`, `aniso:slip-e3`, `offset:<α>`, `power:<p>`.
    pub fn parse_name(name: &str, dim: usize) -> Result<Self, DensityError> {
        let unknown = || DensityError::Unknown(name.to_string());
        match name.trim() {
            "iso" => Ok(Self::iso(dim)),
            "aniso:slip-e3" => Ok(Self::slip_e3(dim)),
            other => {
                if let Some(a) = other.strip_prefix("offset:") {
                    let a: f64 = a.parse().map_err(|_| unknown())?;
                    if a >= 0.0 {
                        return Ok(Self::offset(dim, a));
                    }
                } else if let Some(p) = other.strip_prefix("power:") {
                    let p: f64 = p.parse().map_err(|_| unknown())?;
                    if p > 0.0 {
                        return Ok(Self::power(dim, p));
                    }
                }
                Err(unknown())
            }
        }
    }

    pub fn name(&self) -> String {
        match &self.kind {
            DensityKind::Iso => "iso".into(),
            DensityKind::SlipE3 => "aniso:slip-e3".into(),
            DensityKind::Offset(a) => format!("offset:{a}"),
            DensityKind::Power(p) => format!("power:{p}"),
            DensityKind::Table(_) => "table".into(),
        }
    }

    /// Tabulated densities cannot be certified elliptic from finitely many
    /// samples; reports flag them as assumed.
    pub fn assumed_elliptic(&self) -> bool {
        matches!(self.kind, DensityKind::Table(_))
    }

    pub fn eval(&self, z: &[i64], t: &Vec3) -> f64 {
        let n = norm_i(z);
        if n == 0.0 {
            return 0.0;
        }
        match &self.kind {
            DensityKind::Iso => n,
            DensityKind::SlipE3 => (2.0 - t.z.abs().min(1.0)) * n,
            DensityKind::Offset(a) => n + a,
            DensityKind::Power(p) => n.powf(*p),
            DensityKind::Table(tab) => tab.eval(z, t),
        }
    }

    /// `ψ` at a real vector that is integral up to rounding.
    pub fn eval_rounded(&self, b: &[f64], t: &Vec3) -> f64 {
        let z: Vec<i64> = b.iter().map(|v| v.round() as i64).collect();
        self.eval(&z, t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyResult {
    pub passed: bool,
    pub checked: usize,
    /// First violating sample, as `(z, z′, t)`; `z′` is empty when unused.
    pub witness: Option<(Vec<i64>, Vec<i64>, [f64; 3])>,
    pub worst_excess: f64,
}

impl PropertyResult {
    fn new() -> Self {
        Self {
            passed: true,
            checked: 0,
            witness: None,
            worst_excess: 0.0,
        }
    }

    fn record(&mut self, excess: f64, tol: f64, z: &[i64], zp: &[i64], t: &Vec3) {
        self.checked += 1;
        if excess > self.worst_excess {
            self.worst_excess = excess;
        }
        if excess > tol && self.passed {
            self.passed = false;
            self.witness = Some((z.to_vec(), zp.to_vec(), [t.x, t.y, t.z]));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityReport {
    pub name: String,
    pub lower_bound: PropertyResult,
    pub upper_bound: PropertyResult,
    pub subadditivity: PropertyResult,
    /// Observed `min ψ/|z|` and `max ψ/|z|` over the samples.
    pub fitted_lower: f64,
    pub fitted_upper: f64,
    pub assumed_elliptic: bool,
}

impl DensityReport {
    pub fn all_passed(&self) -> bool {
        self.lower_bound.passed && self.upper_bound.passed && self.subadditivity.passed
    }
}

fn random_z<R: Rng>(rng: &mut R, dim: usize, max: i64) -> Vec<i64> {
    loop {
        let z: Vec<i64> = (0..dim).map(|_| rng.gen_range(-max..=max)).collect();
        if z.iter().any(|&v| v != 0) {
            return z;
        }
    }
}

/// Growth bounds and subadditivity over `pairs` random pairs with
/// `|z|∞ ≤ 10`, each tried against `directions` sample directions. Basis
/// pairs `z = z′ = e_i` come first so that simple counterexamples are the
/// reported witnesses.
pub fn check_density_properties(
    psi: &Density,
    pairs: usize,
    directions: usize,
    seed: u64,
) -> DensityReport {
    let tol = 1e-12;
    let dirs = fibonacci_sphere(directions.max(1));
    let mut rng = seeded_rng(&[seed, 0xD0]);
    let mut zs: Vec<(Vec<i64>, Vec<i64>)> = (0..psi.dim)
        .map(|i| {
            let mut e = vec![0; psi.dim];
            e[i] = 1;
            (e.clone(), e)
        })
        .collect();
    for _ in 0..pairs {
        zs.push((random_z(&mut rng, psi.dim, 10), random_z(&mut rng, psi.dim, 10)));
    }
    let mut lower = PropertyResult::new();
    let mut upper = PropertyResult::new();
    let mut sub = PropertyResult::new();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
    for (z, zp) in &zs {
        let sum: Vec<i64> = z.iter().zip(zp).map(|(a, b)| a + b).collect();
        for t in &dirs {
            for w in [z, zp] {
                let v = psi.eval(w, t);
                let n = norm_i(w);
                lo = lo.min(v / n);
                hi = hi.max(v / n);
                lower.record(psi.lower * n - v, tol * n, w, &[], t);
                upper.record(v - psi.upper * n, tol * n, w, &[], t);
            }
            let lhs = psi.eval(&sum, t);
            let rhs = psi.eval(z, t) + psi.eval(zp, t);
            sub.record(lhs - rhs, tol * rhs.max(1.0), z, zp, t);
        }
    }
    DensityReport {
        name: psi.name(),
        lower_bound: lower,
        upper_bound: upper,
        subadditivity: sub,
        fitted_lower: lo,
        fitted_upper: hi,
        assumed_elliptic: psi.assumed_elliptic(),
    }
}
