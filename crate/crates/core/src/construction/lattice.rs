use crate::geometry::Vec3;

/// Parallel lines `𝒢_k + R t` through a square lattice of spacing `1/k²` in
/// the plane orthogonal to `t`, each carrying `b / k⁴`.
#[derive(Debug, Clone, PartialEq)]
pub struct LineLattice {
    pub b: Vec<f64>,
    pub t: Vec3,
    pub v1: Vec3,
    pub v2: Vec3,
    pub spacing: f64,
    /// Shift in lattice units, in `[0, 1)²`.
    pub offset: [f64; 2],
    pub k: usize,
}

/// `v₁ = normalize(t × a)` with `a` the coordinate axis least aligned with
/// `t` (first axis wins ties), `v₂ = t × v₁`.
pub fn plane_basis(t: &Vec3) -> (Vec3, Vec3) {
    let mut axis = 0;
    for c in 1..3 {
        if t[c].abs() < t[axis].abs() {
            axis = c;
        }
    }
    let mut a = Vec3::zeros();
    a[axis] = 1.0;
    let v1 = t.cross(&a).normalize();
    let v2 = t.cross(&v1);
    (v1, v2)
}

impl LineLattice {
    pub fn new(b: &[f64], t: &Vec3, k: usize, offset: [f64; 2]) -> Self {
        let t = t.normalize();
        let (v1, v2) = plane_basis(&t);
        let kf = k as f64;
        Self {
            b: b.to_vec(),
            t,
            v1,
            v2,
            spacing: 1.0 / (kf * kf),
            offset,
            k,
        }
    }

    /// `b / k⁴`.
    pub fn weight(&self) -> Vec<f64> {
        let k4 = (self.k as f64).powi(4);
        self.b.iter().map(|v| v / k4).collect()
    }

    /// Area of one lattice cell, `1/k⁴`.
    pub fn cell_area(&self) -> f64 {
        self.spacing * self.spacing
    }

    /// Point of line `(m, n)` in the plane through the origin orthogonal to `t`.
    pub fn origin(&self, m: i64, n: i64) -> Vec3 {
        let a = (m as f64 + self.offset[0]) * self.spacing;
        let c = (n as f64 + self.offset[1]) * self.spacing;
        self.v1 * a + self.v2 * c
    }

    /// Index ranges of lines whose shadow falls in the bounding rectangle of
    /// the projected points.
    pub fn index_window<'a>(&self, pts: impl IntoIterator<Item = &'a Vec3>) -> ([i64; 2], [i64; 2]) {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in pts {
            let c = [p.dot(&self.v1) / self.spacing, p.dot(&self.v2) / self.spacing];
            for a in 0..2 {
                lo[a] = lo[a].min(c[a] - self.offset[a]);
                hi[a] = hi[a].max(c[a] - self.offset[a]);
            }
        }
        (
            [lo[0].floor() as i64, hi[0].ceil() as i64],
            [lo[1].floor() as i64, hi[1].ceil() as i64],
        )
    }

    /// Origins of all lines meeting the axis-aligned box `[min, max]`.
    pub fn lines_meeting_box(&self, min: &Vec3, max: &Vec3) -> Vec<Vec3> {
        let corners: Vec<Vec3> = (0..8)
            .map(|c| {
                Vec3::new(
                    if c & 1 == 0 { min.x } else { max.x },
                    if c & 2 == 0 { min.y } else { max.y },
                    if c & 4 == 0 { min.z } else { max.z },
                )
            })
            .collect();
        let (mr, nr) = self.index_window(&corners);
        let mut out = Vec::new();
        for m in mr[0]..=mr[1] {
            for n in nr[0]..=nr[1] {
                let q = self.origin(m, n);
                if line_meets_box(&q, &self.t, min, max) {
                    out.push(q);
                }
            }
        }
        out
    }
}

fn line_meets_box(q: &Vec3, t: &Vec3, min: &Vec3, max: &Vec3) -> bool {
    let (mut s0, mut s1) = (f64::NEG_INFINITY, f64::INFINITY);
    for a in 0..3 {
        if t[a] == 0.0 {
            if q[a] < min[a] || q[a] > max[a] {
                return false;
            }
            continue;
        }
        let (u, v) = ((min[a] - q[a]) / t[a], (max[a] - q[a]) / t[a]);
        s0 = s0.max(u.min(v));
        s1 = s1.min(u.max(v));
    }
    s0 < s1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_is_orthonormal() {
        for t in [Vec3::z(), Vec3::new(1.0, 2.0, -0.5).normalize(), Vec3::new(0.6, 0.8, 0.0)] {
            let (v1, v2) = plane_basis(&t);
            assert!(v1.dot(&t).abs() < 1e-15 && v2.dot(&t).abs() < 1e-15 && v1.dot(&v2).abs() < 1e-15);
            assert!((v1.norm() - 1.0).abs() < 1e-15 && (v2.norm() - 1.0).abs() < 1e-15);
        }
        let (v1, v2) = plane_basis(&Vec3::z());
        assert_eq!((v1, v2), (Vec3::y(), -Vec3::x()));
    }

    #[test]
    fn vertical_lattice_at_k2() {
        let l = LineLattice::new(&[1.0], &Vec3::z(), 2, [0.5, 0.5]);
        assert_eq!(l.spacing, 0.25);
        assert_eq!(l.cell_area(), 1.0 / 16.0);
        assert_eq!(l.weight(), vec![1.0 / 16.0]);
        let lines = l.lines_meeting_box(&Vec3::zeros(), &Vec3::new(1.0, 1.0, 1.0));
        assert_eq!(lines.len(), 16);
        for q in &lines {
            let (x, y) = (q.x * 4.0 - 0.5, q.y * 4.0 - 0.5);
            assert!((x - x.round()).abs() < 1e-12 && (y - y.round()).abs() < 1e-12);
        }
    }

    #[test]
    fn line_lengths_approximate_volume() {
        // (1/k⁴) Σ length inside the unit box → 1.
        let t = Vec3::new(0.3, -0.5, 0.8).normalize();
        let (min, max) = (Vec3::zeros(), Vec3::new(1.0, 1.0, 1.0));
        let mut prev = f64::INFINITY;
        for k in [2usize, 4, 8] {
            let l = LineLattice::new(&[1.0], &t, k, [0.37, 0.61]);
            let bx = crate::geometry::Aabb::new([0.0; 3], [1.0; 3]);
            let total: f64 = l
                .lines_meeting_box(&min, &max)
                .iter()
                .map(|q| bx.clipped_length(&(q - t * 10.0), &(q + t * 10.0)))
                .sum();
            let gap = (total * l.cell_area() - 1.0).abs();
            assert!(gap < prev.max(0.05));
            prev = gap;
        }
        assert!(prev < 0.02);
    }
}
