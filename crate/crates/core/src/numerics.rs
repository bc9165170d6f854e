//! Small numerical helpers shared across modules: extended reals, quadrature
//! rules, rate fitting and deterministic seeding.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;

/// A value in `[0, +∞]`. Infinite energies are carried as a flag, never as a
/// large float.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Extended {
    Finite(f64),
    Infinite,
}

impl Extended {
    pub fn is_finite(&self) -> bool {
        matches!(self, Extended::Finite(_))
    }

    pub fn finite(&self) -> Option<f64> {
        match *self {
            Extended::Finite(v) => Some(v),
            Extended::Infinite => None,
        }
    }

    /// Finite value, or `f64::INFINITY` for display and comparisons.
    pub fn to_f64(&self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }

    pub fn add(self, other: Extended) -> Extended {
        match (self, other) {
            (Extended::Finite(a), Extended::Finite(b)) => Extended::Finite(a + b),
            _ => Extended::Infinite,
        }
    }

    pub fn scale(self, s: f64) -> Extended {
        match self {
            Extended::Finite(a) => Extended::Finite(a * s),
            Extended::Infinite => Extended::Infinite,
        }
    }
}

impl std::fmt::Display for Extended {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Extended::Finite(v) => write!(f, "{v}"),
            Extended::Infinite => write!(f, "inf"),
        }
    }
}

/// Gauss–Legendre nodes and weights on `[0, 1]`, exact for polynomials of
/// degree `2 * order - 1`.
pub fn gauss_legendre_unit(order: usize) -> Vec<(f64, f64)> {
    assert!(order >= 1, "quadrature order must be positive");
    let n = order;
    let mut rule = Vec::with_capacity(n);
    for i in 0..n {
        // Chebyshev initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.push((0.5 * (x + 1.0), 0.5 * w));
    }
    rule.sort_by(|a, b| a.0.total_cmp(&b.0));
    rule
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Collapsed-coordinate quadrature on a tetrahedron. Exact for polynomials of
/// total degree `<= 2 * order - 3`.
pub fn tetra_quadrature(vertices: &[Vec3; 4], order: usize) -> Vec<(Vec3, f64)> {
    let gl = gauss_legendre_unit(order);
    let e1 = vertices[1] - vertices[0];
    let e2 = vertices[2] - vertices[0];
    let e3 = vertices[3] - vertices[0];
    let jac = e1.cross(&e2).dot(&e3).abs();
    let mut pts = Vec::with_capacity(order * order * order);
    for &(u, wu) in &gl {
        for &(v, wv) in &gl {
            for &(w, ww) in &gl {
                let a = u;
                let b = v * (1.0 - u);
                let c = w * (1.0 - u) * (1.0 - v);
                let weight = wu * wv * ww * (1.0 - u) * (1.0 - u) * (1.0 - v) * jac;
                pts.push((vertices[0] + e1 * a + e2 * b + e3 * c, weight));
            }
        }
    }
    pts
}

/// Least-squares slope of `log(y)` against `log(x)`.
/// `{:.15e}` with negative zero printed as zero, for stable report bytes.
pub fn sci(x: f64) -> String {
    format!("{:.15e}", x + 0.0)
}

pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

/// SplitMix64 finalizer, used to derive independent deterministic seeds.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic RNG for a tuple of integer labels.
pub fn seeded_rng(labels: &[u64]) -> ChaCha8Rng {
    let mut h = 0x5151_7E4D_u64;
    for &l in labels {
        h = mix64(h ^ mix64(l));
    }
    ChaCha8Rng::seed_from_u64(h)
}

/// Primitive integer vector `z` with `b` a positive multiple of `z`, if one
/// exists with `|z|∞ ≤ max_multiple` up to the relative direction tolerance
/// `tol`. This is the membership test for the cone `{λz : λ > 0, z ∈ Z^N}`.
pub fn integer_direction(b: &[f64], max_multiple: u64, tol: f64) -> Option<Vec<i64>> {
    let inf = b.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if !(inf > 0.0) || !inf.is_finite() {
        return None;
    }
    let norm = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    for j in 1..=max_multiple {
        let z: Vec<i64> = b.iter().map(|x| (j as f64 * x / inf).round() as i64).collect();
        let zn = z.iter().map(|&v| (v * v) as f64).sum::<f64>().sqrt();
        if zn == 0.0 {
            continue;
        }
        let err = b
            .iter()
            .zip(&z)
            .map(|(x, &v)| (x / norm - v as f64 / zn).powi(2))
            .sum::<f64>()
            .sqrt();
        if err <= tol {
            let g = z.iter().fold(0i64, |g, &v| gcd(g, v.abs()));
            return Some(z.into_iter().map(|v| v / g).collect());
        }
    }
    None
}

pub fn gcd(mut a: i64, mut b: i64) -> i64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a.abs()
}

/// Points on the unit sphere from a spherical Fibonacci lattice.
pub fn fibonacci_sphere(count: usize) -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
    (0..count)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / count as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            Vec3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}
