use nalgebra::DMatrix;
use serde::Serialize;

use super::{Density, DensityError};
use crate::geometry::Vec3;
use crate::numerics::{integer_direction, Extended};

/// Estimate of `ψ_∞(b, t)` with the spread of `ψ(m z, t)/(m |z|)` over the
/// last quarter of the sampled multiples as an error bar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecessionValue {
    pub value: Extended,
    pub error_bar: f64,
}

/// `ψ_∞(b, t) = liminf_{s→∞} ψ(s b, t)/s`, evaluated along the multiples of
/// the primitive integer vector `z` parallel to `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecessionEvaluator {
    pub psi: Density,
    pub s_max: u64,
    /// Largest multiple tried when searching for an integer direction.
    pub direction_cap: u64,
    pub direction_tol: f64,
}

impl RecessionEvaluator {
    pub fn new(psi: Density, s_max: u64) -> Result<Self, DensityError> {
        if s_max < 1 {
            return Err(DensityError::BadSmax);
        }
        Ok(Self {
            psi,
            s_max,
            direction_cap: 1024,
            direction_tol: 1e-9,
        })
    }

    pub fn dim(&self) -> usize {
        self.psi.dim
    }

    /// Running minimum of `ψ(m z, t)/(m |z|)` for `m ≤ s_max`, times `|b|`.
    /// Directions outside the integer cone give `+∞`.
    pub fn evaluate(&self, b: &[f64], t: &Vec3) -> RecessionValue {
        let bn = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        if bn == 0.0 {
            return RecessionValue {
                value: Extended::Finite(0.0),
                error_bar: 0.0,
            };
        }
        let Some(z) = integer_direction(b, self.direction_cap, self.direction_tol) else {
            return RecessionValue {
                value: Extended::Infinite,
                error_bar: 0.0,
            };
        };
        let (ratio, bar) = self.unit_ratio(&z, t);
        RecessionValue {
            value: Extended::Finite(bn * ratio),
            error_bar: bn * bar,
        }
    }

    /// `ψ_∞(z/|z|, t)` for a primitive integer `z`, and the oscillation bar.
    pub fn unit_ratio(&self, z: &[i64], t: &Vec3) -> (f64, f64) {
        let zn = z.iter().map(|&v| (v * v) as f64).sum::<f64>().sqrt();
        let mut best = f64::INFINITY;
        let quart = (self.s_max * 3 / 4).max(1);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let mut scaled = vec![0i64; z.len()];
        for m in 1..=self.s_max {
            for (s, &v) in scaled.iter_mut().zip(z) {
                *s = v * m as i64;
            }
            let r = self.psi.eval(&scaled, t) / (m as f64 * zn);
            best = best.min(r);
            if m >= quart {
                lo = lo.min(r);
                hi = hi.max(r);
            }
        }
        (best, (hi - lo).max(0.0))
    }
}

/// `g_∞(A) = ψ_∞(b, t)` when `A = b ⊗ t` (second singular value at most
/// `1e−10 · σ₁`), `+∞` otherwise. Of the two factorizations `±(b, t)` the one
/// with `t` in the upper half space (by the first nonzero coordinate) is used.
pub fn g_infinity(a: &DMatrix<f64>, rec: &RecessionEvaluator) -> Extended {
    let Some((b, t)) = rank_one_factor(a, 1e-10) else {
        return Extended::Infinite;
    };
    rec.evaluate(&b, &t).value
}

pub(crate) fn rank_one_factor(a: &DMatrix<f64>, rel: f64) -> Option<(Vec<f64>, Vec3)> {
    let svd = a.clone().svd(true, true);
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let s1 = svd.singular_values[order[0]];
    if s1 == 0.0 {
        return Some((vec![0.0; a.nrows()], Vec3::z()));
    }
    if order.len() > 1 && svd.singular_values[order[1]] > rel * s1 {
        return None;
    }
    let u = svd.u.as_ref()?.column(order[0]).clone_owned();
    let vt = svd.v_t.as_ref()?;
    let mut t = Vec3::new(vt[(order[0], 0)], vt[(order[0], 1)], vt[(order[0], 2)]);
    let mut sign = 1.0;
    let lead = t.iter().find(|v| v.abs() > 1e-12).copied().unwrap_or(1.0);
    if lead < 0.0 {
        t = -t;
        sign = -1.0;
    }
    let b = u.iter().map(|v| sign * s1 * v).collect();
    Some((b, t))
}
