use std::collections::BTreeMap;

use super::DensityError;
use crate::geometry::Vec3;
use crate::numerics::gcd;

/// Tabulated density: values at listed integer vectors and directions given
/// by polar angle `θ` (from `e₃`) and azimuth `φ`.
///
/// Lookup uses the nearest tabulated direction for the same `z`. A vector
/// absent from the table but a multiple `m z₀` of a tabulated primitive `z₀`
/// gets `m ψ(z₀, t)`; anything else falls back to `c̄ |z|`, with `c̄` the
/// largest tabulated ratio `ψ/|z|`.
#[derive(Debug, Clone, PartialEq)]
pub struct TableDensity {
    dim: usize,
    entries: BTreeMap<Vec<i64>, Vec<(Vec3, f64)>>,
    lower: f64,
    upper: f64,
}

fn norm_i(z: &[i64]) -> f64 {
    z.iter().map(|&v| (v * v) as f64).sum::<f64>().sqrt()
}

impl TableDensity {
    /// CSV with header `z1,…,zN,theta,phi,value`.
    pub fn parse(text: &str) -> Result<Self, DensityError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| {
            let l = l.trim();
            !l.is_empty() && !l.starts_with('#')
        });
        let (_, header) = lines.next().ok_or(DensityError::Table {
            row: 0,
            message: "empty table".into(),
        })?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.len() < 4 || cols[cols.len() - 3..] != ["theta", "phi", "value"] {
            return Err(DensityError::Table {
                row: 1,
                message: "header must be z1,..,zN,theta,phi,value".into(),
            });
        }
        let dim = cols.len() - 3;
        let mut entries: BTreeMap<Vec<i64>, Vec<(Vec3, f64)>> = BTreeMap::new();
        let (mut lower, mut upper) = (f64::INFINITY, 0.0_f64);
        for (i, line) in lines {
            let row = i + 1;
            let bad = |m: String| DensityError::Table { row, message: m };
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != dim + 3 {
                return Err(bad(format!("expected {} columns, found {}", dim + 3, f.len())));
            }
            let z: Vec<i64> = f[..dim]
                .iter()
                .map(|s| s.parse::<i64>().map_err(|e| bad(format!("z: {e}"))))
                .collect::<Result<_, _>>()?;
            let num = |s: &str| s.parse::<f64>().map_err(|e| bad(e.to_string()));
            let (theta, phi, value) = (num(f[dim])?, num(f[dim + 1])?, num(f[dim + 2])?);
            if !(value.is_finite() && value >= 0.0) {
                return Err(bad(format!("value {value} must be finite and nonnegative")));
            }
            let n = norm_i(&z);
            if n == 0.0 {
                if value != 0.0 {
                    return Err(bad("ψ(0, t) must vanish".into()));
                }
                continue;
            }
            lower = lower.min(value / n);
            upper = upper.max(value / n);
            let t = Vec3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos());
            entries.entry(z).or_default().push((t, value));
        }
        if entries.is_empty() {
            return Err(DensityError::Table {
                row: 0,
                message: "no nonzero entries".into(),
            });
        }
        Ok(Self {
            dim,
            entries,
            lower,
            upper,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    fn nearest(list: &[(Vec3, f64)], t: &Vec3) -> f64 {
        list.iter()
            .max_by(|a, b| a.0.dot(t).total_cmp(&b.0.dot(t)))
            .map(|e| e.1)
            .unwrap_or(0.0)
    }

    pub fn eval(&self, z: &[i64], t: &Vec3) -> f64 {
        if let Some(list) = self.entries.get(z) {
            return Self::nearest(list, t);
        }
        let g = z.iter().fold(0, |g, &v| gcd(g, v));
        if g > 1 {
            let z0: Vec<i64> = z.iter().map(|v| v / g).collect();
            if let Some(list) = self.entries.get(&z0) {
                return g as f64 * Self::nearest(list, t);
            }
        }
        self.upper * norm_i(z)
    }
}
