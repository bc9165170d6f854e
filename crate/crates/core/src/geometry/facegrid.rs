use super::{GeometryError, Tetra, Triangle, Vec3};

/// One of the `4k²` boundary triangles `Δ(k,h)` and, after
/// [`FaceGrid::shrink_and_project`], its projection `δ(k,h)` onto `∂T_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceCell {
    /// Face of the parent tetrahedron (opposite vertex index).
    pub face: usize,
    pub outer: Triangle,
    /// Barycenter `d(T,k,h)` of the outer triangle.
    pub barycenter: Vec3,
    /// Outward unit normal `n_h`.
    pub normal: Vec3,
    pub outer_area: f64,
    pub inner: Option<Triangle>,
    pub inner_area: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
struct FaceFrame {
    /// Canonical (sorted) face vertices of `T`.
    outer: Triangle,
    normal: Vec3,
}

/// Congruent subdivision of `∂T` into `4k²` triangles.
///
/// Cell `h` lives on face `h / k²`; within a face the `k(k+1)/2` upward
/// triangles come first, in `(i, j)` order, followed by the `k(k-1)/2`
/// downward ones.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceGrid {
    parent: Tetra,
    k: usize,
    frames: [FaceFrame; 4],
    cells: Vec<FaceCell>,
    /// `1 - 1/k²` once projected.
    scale: Option<f64>,
}

impl FaceGrid {
    /// Splits every edge of every face into `k` equal pieces.
    pub fn subdivide(parent: &Tetra, k: usize) -> Result<Self, GeometryError> {
        if k == 0 {
            return Err(GeometryError::ZeroLevel);
        }
        let faces = parent.faces();
        let frames = faces.map(|(outer, normal)| FaceFrame { outer, normal });
        let mut cells = Vec::with_capacity(4 * k * k);
        for (f, frame) in frames.iter().enumerate() {
            for tri in sub_triangles(&frame.outer, k) {
                cells.push(FaceCell {
                    face: f,
                    outer: tri,
                    barycenter: tri.centroid(),
                    normal: frame.normal,
                    outer_area: tri.area(),
                    inner: None,
                    inner_area: None,
                });
            }
        }
        Ok(Self {
            parent: *parent,
            k,
            frames,
            cells,
            scale: None,
        })
    }

    /// Projects every `Δ(k,h)` onto `∂T_k`, `T_k = (1 - 1/k²) T` about the
    /// barycenter, giving `δ(k,h) = (1 - 1/k²) Δ(k,h)`.
    pub fn shrink_and_project(mut self) -> Result<Self, GeometryError> {
        if self.k < 2 {
            return Err(GeometryError::LevelTooSmall(self.k));
        }
        let s = inner_scale(self.k);
        let c = self.parent.barycenter();
        for cell in &mut self.cells {
            let inner = cell.outer.scaled_about(&c, s);
            cell.inner_area = Some(inner.area());
            cell.inner = Some(inner);
        }
        self.scale = Some(s);
        Ok(self)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn parent(&self) -> &Tetra {
        &self.parent
    }

    pub fn cells(&self) -> &[FaceCell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn scale(&self) -> Option<f64> {
        self.scale
    }

    /// The shrunken tetrahedron `T_k`, when projected.
    pub fn inner_tetra(&self) -> Option<Tetra> {
        self.scale
            .and_then(|s| self.parent.scaled_about_barycenter(s).ok())
    }

    /// The largest `|x − y|` over `x ∈ Δ(k,h)`, `y ∈ δ(k,h)`, and the largest
    /// distance between a point of `Δ(k,h)` and its projection, both
    /// maximized over `h` and attained at vertices. `None` before projection.
    pub fn cell_offsets(&self) -> Option<(f64, f64)> {
        let s = self.scale?;
        let c = self.parent.barycenter();
        let (mut any, mut paired): (f64, f64) = (0.0, 0.0);
        for cell in &self.cells {
            let inner = cell.inner?.vertices();
            for x in cell.outer.vertices() {
                paired = paired.max((1.0 - s) * (x - c).norm());
                for y in &inner {
                    any = any.max((x - y).norm());
                }
            }
        }
        Some((any, paired))
    }

    pub fn total_outer_area(&self) -> f64 {
        self.cells.iter().map(|c| c.outer_area).sum()
    }

    /// Locates the inner triangle of face `face` containing `x` (assumed on
    /// the plane of that face of `T_k`). Returns the cell index and the
    /// distance from `x` to that triangle's contour.
    pub fn locate_inner(&self, face: usize, x: &Vec3) -> Option<(usize, f64)> {
        let s = self.scale?;
        let c = self.parent.barycenter();
        let frame = &self.frames[face];
        let q = frame.outer.scaled_about(&c, s);
        let e1 = q.b - q.a;
        let e2 = q.c - q.a;
        let r = x - q.a;
        let (g11, g12, g22) = (e1.dot(&e1), e1.dot(&e2), e2.dot(&e2));
        let (r1, r2) = (r.dot(&e1), r.dot(&e2));
        let det = g11 * g22 - g12 * g12;
        let l1 = (r1 * g22 - r2 * g12) / det;
        let l2 = (r2 * g11 - r1 * g12) / det;
        let k = self.k;
        let u = l1 * k as f64;
        let v = l2 * k as f64;
        if !(u.is_finite() && v.is_finite()) {
            return None;
        }
        let i = u.floor();
        let j = v.floor();
        if i < 0.0 || j < 0.0 {
            return None;
        }
        let (i, j) = (i as usize, j as usize);
        let up = (u - i as f64) + (v - j as f64) < 1.0;
        let local = if up {
            if i + j > k - 1 {
                return None;
            }
            up_index(k, i, j)
        } else {
            if i + j > k.saturating_sub(2) || k < 2 {
                return None;
            }
            k * (k + 1) / 2 + down_index(k, i, j)
        };
        let h = face * k * k + local;
        let tri = self.cells[h].inner?;
        Some((h, tri.contour_distance(x)))
    }
}

/// `1 - 1/k²`.
pub fn inner_scale(k: usize) -> f64 {
    1.0 - 1.0 / (k as f64 * k as f64)
}

fn grid_point(t: &Triangle, k: usize, i: usize, j: usize) -> Vec3 {
    let kf = k as f64;
    t.a + (t.b - t.a) * (i as f64 / kf) + (t.c - t.a) * (j as f64 / kf)
}

fn up_index(k: usize, i: usize, j: usize) -> usize {
    // Rows of constant i hold k - i upward triangles.
    let before: usize = (0..i).map(|r| k - r).sum();
    before + j
}

fn down_index(k: usize, i: usize, j: usize) -> usize {
    let before: usize = (0..i).map(|r| k - 1 - r).sum();
    before + j
}

fn sub_triangles(t: &Triangle, k: usize) -> Vec<Triangle> {
    let mut out = Vec::with_capacity(k * k);
    for i in 0..k {
        for j in 0..k - i {
            out.push(Triangle::new(
                grid_point(t, k, i, j),
                grid_point(t, k, i + 1, j),
                grid_point(t, k, i, j + 1),
            ));
        }
    }
    for i in 0..k.saturating_sub(1) {
        for j in 0..k - 1 - i {
            out.push(Triangle::new(
                grid_point(t, k, i + 1, j),
                grid_point(t, k, i + 1, j + 1),
                grid_point(t, k, i, j + 1),
            ));
        }
    }
    out
}
