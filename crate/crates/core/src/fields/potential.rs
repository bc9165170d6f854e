use serde::{Deserialize, Serialize};

use super::FieldError;
use crate::geometry::Vec3;

/// One monomial `coefficient · x^px y^py z^pz` in component `component` of
/// the vector potential of row `row`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialTerm {
    pub row: usize,
    pub component: usize,
    pub exponents: [u32; 3],
    pub coefficient: f64,
}

/// Polynomial map `R³ → R^{N×3}`; row `i` is a vector potential whose curl
/// is row `i` of the field.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub rows: usize,
    pub terms: Vec<PotentialTerm>,
}

fn monomial(e: [u32; 3], x: &Vec3) -> f64 {
    x.x.powi(e[0] as i32) * x.y.powi(e[1] as i32) * x.z.powi(e[2] as i32)
}

/// `∂/∂x_axis` of a monomial as (factor, exponents).
fn derivative(e: [u32; 3], axis: usize) -> Option<(f64, [u32; 3])> {
    if e[axis] == 0 {
        return None;
    }
    let mut d = e;
    d[axis] -= 1;
    Some((e[axis] as f64, d))
}

impl PotentialSpec {
    pub fn new(rows: usize) -> Self {
        Self {
            rows,
            terms: Vec::new(),
        }
    }

    pub fn add(&mut self, row: usize, component: usize, exponents: [u32; 3], coefficient: f64) {
        self.terms.push(PotentialTerm {
            row,
            component,
            exponents,
            coefficient,
        });
    }

    /// Potential with constant curl `field`: row `i` is `½ a_i × x`.
    pub fn constant_curl(field: &[[f64; 3]]) -> Self {
        let mut p = Self::new(field.len());
        for (i, a) in field.iter().enumerate() {
            // (a × x)_0 = a_1 z − a_2 y, (a × x)_1 = a_2 x − a_0 z, (a × x)_2 = a_0 y − a_1 x.
            p.add(i, 0, [0, 0, 1], 0.5 * a[1]);
            p.add(i, 0, [0, 1, 0], -0.5 * a[2]);
            p.add(i, 1, [1, 0, 0], 0.5 * a[2]);
            p.add(i, 1, [0, 0, 1], -0.5 * a[0]);
            p.add(i, 2, [0, 1, 0], 0.5 * a[0]);
            p.add(i, 2, [1, 0, 0], -0.5 * a[1]);
        }
        p
    }

    pub fn degree(&self) -> u32 {
        self.terms
            .iter()
            .map(|t| t.exponents.iter().sum::<u32>())
            .max()
            .unwrap_or(0)
    }

    pub fn validate(&self, max_degree: u32) -> Result<(), FieldError> {
        for (i, t) in self.terms.iter().enumerate() {
            if t.row >= self.rows || t.component >= 3 {
                return Err(FieldError::Potential(format!(
                    "term {i}: row {} / component {} out of range",
                    t.row, t.component
                )));
            }
            if !t.coefficient.is_finite() {
                return Err(FieldError::Potential(format!("term {i}: non-finite coefficient")));
            }
        }
        if self.degree() > max_degree {
            return Err(FieldError::Potential(format!(
                "degree {} exceeds the bound {max_degree}",
                self.degree()
            )));
        }
        Ok(())
    }

    pub fn eval_row(&self, row: usize, x: &Vec3) -> Vec3 {
        let mut v = Vec3::zeros();
        for t in self.terms.iter().filter(|t| t.row == row) {
            v[t.component] += t.coefficient * monomial(t.exponents, x);
        }
        v
    }

    /// `∂_axis φ_row(x)` by coefficient arithmetic.
    pub fn partial_row(&self, row: usize, axis: usize, x: &Vec3) -> Vec3 {
        let mut v = Vec3::zeros();
        for t in self.terms.iter().filter(|t| t.row == row) {
            if let Some((f, e)) = derivative(t.exponents, axis) {
                v[t.component] += t.coefficient * f * monomial(e, x);
            }
        }
        v
    }

    /// Exact `curl φ_row(x)`.
    pub fn curl_row(&self, row: usize, x: &Vec3) -> Vec3 {
        let dx = self.partial_row(row, 0, x);
        let dy = self.partial_row(row, 1, x);
        let dz = self.partial_row(row, 2, x);
        Vec3::new(dy.z - dz.y, dz.x - dx.z, dx.y - dy.x)
    }

    /// Parses `row,component,px,py,pz,coefficient` lines (header and `#`
    /// comments allowed).
    pub fn parse(text: &str, rows: usize) -> Result<Self, FieldError> {
        let mut p = Self::new(rows);
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("row") {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = |m: String| FieldError::Parse { line: i + 1, message: m };
            if cols.len() != 6 {
                return Err(bad(format!("expected 6 columns, found {}", cols.len())));
            }
            let int = |s: &str| s.parse::<u32>().map_err(|e| bad(e.to_string()));
            let row = int(cols[0])? as usize;
            let comp = int(cols[1])? as usize;
            let e = [int(cols[2])?, int(cols[3])?, int(cols[4])?];
            let c = cols[5].parse::<f64>().map_err(|e| bad(e.to_string()))?;
            p.add(row, comp, e, c);
        }
        p.validate(u32::MAX)?;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_curl_potential() {
        let a = [[1.0, -2.0, 0.5], [0.0, 3.0, 1.0]];
        let p = PotentialSpec::constant_curl(&a);
        let x = Vec3::new(0.3, -0.7, 1.1);
        for (i, r) in a.iter().enumerate() {
            let c = p.curl_row(i, &x);
            assert!((c - Vec3::new(r[0], r[1], r[2])).norm() < 1e-15);
        }
    }

    #[test]
    fn parse_potential_file() {
        let text = "row,component,px,py,pz,coefficient\n0,2,1,1,0,2.5\n";
        let p = PotentialSpec::parse(text, 1).unwrap();
        let x = Vec3::new(2.0, 3.0, 0.0);
        assert!((p.eval_row(0, &x).z - 15.0).abs() < 1e-15);
        assert!(PotentialSpec::parse("0,3,0,0,0,1\n", 1).is_err());
        assert!(PotentialSpec::parse("0,1,0,0\n", 1).is_err());
    }
}
