use super::{lex_cmp, GeometryError, Vec3};

/// Relative volume tolerance: a tetrahedron is rejected when
/// `|vol| <= DEGENERACY * diam³`.
const DEGENERACY: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    pub a: Vec3,
    pub b: Vec3,
    pub c: Vec3,
}

impl Triangle {
    pub fn new(a: Vec3, b: Vec3, c: Vec3) -> Self {
        Self { a, b, c }
    }

    pub fn area(&self) -> f64 {
        0.5 * (self.b - self.a).cross(&(self.c - self.a)).norm()
    }

    /// Right-handed unit normal of `(a, b, c)`.
    pub fn normal(&self) -> Vec3 {
        (self.b - self.a).cross(&(self.c - self.a)).normalize()
    }

    pub fn centroid(&self) -> Vec3 {
        (self.a + self.b + self.c) / 3.0
    }

    pub fn vertices(&self) -> [Vec3; 3] {
        [self.a, self.b, self.c]
    }

    pub fn diam(&self) -> f64 {
        (self.b - self.a)
            .norm()
            .max((self.c - self.b).norm())
            .max((self.a - self.c).norm())
    }

    /// Image under `x ↦ center + s (x - center)`.
    pub fn scaled_about(&self, center: &Vec3, s: f64) -> Triangle {
        let f = |p: Vec3| center + (p - center) * s;
        Triangle::new(f(self.a), f(self.b), f(self.c))
    }

    /// Euclidean distance from `p` to the closed triangle.
    pub fn distance(&self, p: &Vec3) -> f64 {
        let n = self.normal();
        let foot = p - n * n.dot(&(p - self.a));
        let inside = [(self.a, self.b), (self.b, self.c), (self.c, self.a)]
            .iter()
            .all(|(u, v)| (v - u).cross(&(foot - u)).dot(&n) >= 0.0);
        if inside {
            return n.dot(&(p - self.a)).abs();
        }
        let seg = |u: &Vec3, v: &Vec3| {
            let e = v - u;
            let s = ((p - u).dot(&e) / e.dot(&e)).clamp(0.0, 1.0);
            (p - (u + e * s)).norm()
        };
        seg(&self.a, &self.b).min(seg(&self.b, &self.c)).min(seg(&self.c, &self.a))
    }

    /// Smallest distance from `p` to the three edge lines.
    pub fn contour_distance(&self, p: &Vec3) -> f64 {
        let d = |u: &Vec3, v: &Vec3| {
            let e = v - u;
            (p - u).cross(&e).norm() / e.norm()
        };
        d(&self.a, &self.b).min(d(&self.b, &self.c)).min(d(&self.c, &self.a))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tetra {
    vertices: [Vec3; 4],
}

impl Tetra {
    /// Builds a tetrahedron with positive orientation, swapping the last two
    /// vertices if needed.
    pub fn new(mut vertices: [Vec3; 4]) -> Result<Self, GeometryError> {
        let diam = diameter(&vertices);
        let vol = signed_volume(&vertices);
        let tolerance = DEGENERACY * diam.powi(3);
        if !(vol.abs() > tolerance) {
            return Err(GeometryError::DegenerateTetra {
                volume: vol.abs(),
                tolerance,
            });
        }
        if vol < 0.0 {
            vertices.swap(2, 3);
        }
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[Vec3; 4] {
        &self.vertices
    }

    pub fn signed_volume(&self) -> f64 {
        signed_volume(&self.vertices)
    }

    pub fn volume(&self) -> f64 {
        self.signed_volume().abs()
    }

    pub fn barycenter(&self) -> Vec3 {
        (self.vertices[0] + self.vertices[1] + self.vertices[2] + self.vertices[3]) / 4.0
    }

    pub fn diam(&self) -> f64 {
        diameter(&self.vertices)
    }

    /// Face `i` (opposite vertex `i`) with its vertices sorted
    /// lexicographically, and the outward unit normal.
    ///
    /// Sorting makes the face triangle of two tetrahedra sharing it
    /// bit-identical, and the two outward normals exact negatives.
    pub fn face(&self, i: usize) -> (Triangle, Vec3) {
        let mut v: Vec<Vec3> = (0..4).filter(|&j| j != i).map(|j| self.vertices[j]).collect();
        v.sort_by(lex_cmp);
        let tri = Triangle::new(v[0], v[1], v[2]);
        let n = tri.normal();
        let opposite = self.vertices[i];
        if n.dot(&(opposite - tri.a)) > 0.0 {
            (tri, -n)
        } else {
            (tri, n)
        }
    }

    pub fn faces(&self) -> [(Triangle, Vec3); 4] {
        [self.face(0), self.face(1), self.face(2), self.face(3)]
    }

    pub fn boundary_area(&self) -> f64 {
        self.faces().iter().map(|(t, _)| t.area()).sum()
    }

    /// Radius of the inscribed ball, `3 V / H²(∂T)`.
    pub fn inradius(&self) -> f64 {
        3.0 * self.volume() / self.boundary_area()
    }

    /// Signed distance to the boundary: positive inside.
    pub fn depth(&self, p: &Vec3) -> f64 {
        self.faces()
            .iter()
            .map(|(tri, n)| n.dot(&(tri.a - p)))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, p: &Vec3, tol: f64) -> bool {
        self.depth(p) >= -tol
    }

    /// Parameter interval of `a + s (b - a)`, `s ∈ [0, 1]`, inside the
    /// closed tetrahedron.
    pub fn clip_segment(&self, a: &Vec3, b: &Vec3) -> Option<(f64, f64)> {
        let d = b - a;
        let (mut s0, mut s1) = (0.0_f64, 1.0_f64);
        for (tri, n) in self.faces() {
            let denom = n.dot(&d);
            let dist = n.dot(&(tri.a - a));
            if denom == 0.0 {
                if dist < 0.0 {
                    return None;
                }
                continue;
            }
            let s = dist / denom;
            if denom > 0.0 {
                s1 = s1.min(s);
            } else {
                s0 = s0.max(s);
            }
            if s0 >= s1 {
                return None;
            }
        }
        Some((s0, s1))
    }

    /// Image under `x ↦ b + s (x - b)` with `b` the barycenter.
    pub fn scaled_about_barycenter(&self, s: f64) -> Result<Tetra, GeometryError> {
        let c = self.barycenter();
        let v = self.vertices.map(|p| c + (p - c) * s);
        Tetra::new(v)
    }
}

fn signed_volume(v: &[Vec3; 4]) -> f64 {
    (v[1] - v[0]).cross(&(v[2] - v[0])).dot(&(v[3] - v[0])) / 6.0
}

fn diameter(v: &[Vec3; 4]) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..4 {
        for j in i + 1..4 {
            d = d.max((v[i] - v[j]).norm());
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> Tetra {
        Tetra::new([
            Vec3::zeros(),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
        ])
        .unwrap()
    }

    #[test]
    fn orientation_is_fixed() {
        let t = Tetra::new([
            Vec3::zeros(),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
        ])
        .unwrap();
        assert!(t.signed_volume() > 0.0);
        assert!((t.volume() - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn barycenter_is_vertex_mean() {
        let t = reference();
        assert!((t.barycenter() - Vec3::new(0.25, 0.25, 0.25)).norm() < 1e-15);
    }

    #[test]
    fn degenerate_rejected() {
        let r = Tetra::new([
            Vec3::zeros(),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(1.0, 1.0, 0.0),
        ]);
        assert!(matches!(r, Err(GeometryError::DegenerateTetra { .. })));
    }

    #[test]
    fn outward_normals_and_divergence_identity() {
        let t = reference();
        let mut s = Vec3::zeros();
        for (tri, n) in t.faces() {
            assert!(n.dot(&(tri.centroid() - t.barycenter())) > 0.0);
            s += n * tri.area();
        }
        assert!(s.norm() < 1e-15);
    }

    #[test]
    fn inradius_of_reference_simplex() {
        let t = reference();
        let expected = 1.0 / (3.0 + 3.0_f64.sqrt());
        assert!((t.inradius() - expected).abs() < 1e-15);
        assert!(t.contains(&t.barycenter(), 0.0));
        assert!(!t.contains(&Vec3::new(1.0, 1.0, 1.0), 1e-9));
    }
}
