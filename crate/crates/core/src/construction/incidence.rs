use serde::Serialize;

use super::lattice::LineLattice;
use crate::geometry::{line_triangle_intersection, FaceGrid, Incidence, Plane, Tetra, Vec3};

/// Below this `|⟨t, n⟩|` a line counts as parallel to a plane.
const PARALLEL: f64 = 1e-12;

/// A surviving lattice line inside `T_k`, entering through `δ(k, cell_in)`
/// and leaving through `δ(k, cell_out)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chord {
    pub entry: Vec3,
    pub exit: Vec3,
    pub cell_in: usize,
    pub cell_out: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct CullCounts {
    /// Crossing `∂T_k` within `ε` of a cell contour (edges and vertices
    /// included).
    pub contour: usize,
    /// Lying within `ε` of a plane of the forbidden family.
    pub plane: usize,
    /// Entry or exit point not attributable to a single cell.
    pub ambiguous: usize,
}

impl CullCounts {
    pub fn total(&self) -> usize {
        self.contour + self.plane + self.ambiguous
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClipOutcome {
    pub chords: Vec<Chord>,
    /// `N(k, j, h)` for every cell `h`.
    pub counts: Vec<u32>,
    pub lines_tested: usize,
    pub culled: CullCounts,
    /// `Σ |b|/k⁴ · length` over culled lines that reached the interior.
    pub culled_mass: f64,
}

/// Clips the lattice lines against `T_k`, drops every line with a degenerate
/// incidence, and records the surviving entry and exit points by cell.
///
/// `grid` must be projected; `eps` is an absolute length.
pub fn clip_cull_and_count(lattice: &LineLattice, grid: &FaceGrid, planes: &[Plane], eps: f64) -> ClipOutcome {
    let inner = grid.inner_tetra().expect("face grid must be projected before clipping");
    let faces: Vec<(Vec3, Vec3)> = inner.faces().iter().map(|(tri, n)| (tri.a, *n)).collect();
    let t = lattice.t;
    let weight = lattice.weight().iter().map(|v| v * v).sum::<f64>().sqrt();
    let near_planes: Vec<&Plane> = planes.iter().filter(|p| p.normal.dot(&t).abs() <= PARALLEL).collect();

    let mut out = ClipOutcome {
        chords: Vec::new(),
        counts: vec![0; grid.len()],
        lines_tested: 0,
        culled: CullCounts::default(),
        culled_mass: 0.0,
    };
    let (mr, nr) = lattice.index_window(inner.vertices());
    for m in mr[0]..=mr[1] {
        for n in nr[0]..=nr[1] {
            let q = lattice.origin(m, n);
            let Some(clip) = clip_line(&q, &t, &faces, eps) else {
                continue;
            };
            out.lines_tested += 1;
            let (s_in, f_in, s_out, f_out) = match clip {
                LineClip::Chord(a, fa, b, fb) => (a, fa, b, fb),
                LineClip::Degenerate => {
                    out.culled.contour += 1;
                    continue;
                }
            };
            let chord_mass = weight * (s_out - s_in);
            if near_planes.iter().any(|p| p.signed_distance(&q).abs() <= eps) {
                out.culled.plane += 1;
                out.culled_mass += chord_mass;
                continue;
            }
            let (entry, exit) = (q + t * s_in, q + t * s_out);
            let located = (grid.locate_inner(f_in, &entry), grid.locate_inner(f_out, &exit));
            let (Some((h_in, d_in)), Some((h_out, d_out))) = located else {
                out.culled.ambiguous += 1;
                out.culled_mass += chord_mass;
                continue;
            };
            if d_in <= eps || d_out <= eps {
                out.culled.contour += 1;
                out.culled_mass += chord_mass;
                continue;
            }
            out.counts[h_in] += 1;
            out.counts[h_out] += 1;
            out.chords.push(Chord {
                entry,
                exit,
                cell_in: h_in,
                cell_out: h_out,
            });
        }
    }
    out
}

enum LineClip {
    /// Entry parameter and face, exit parameter and face.
    Chord(f64, usize, f64, usize),
    Degenerate,
}

/// Slab clipping of `q + s t` against the faces `(point, outward normal)`.
/// `None` when the line misses the tetrahedron.
fn clip_line(q: &Vec3, t: &Vec3, faces: &[(Vec3, Vec3)], eps: f64) -> Option<LineClip> {
    let (mut s_in, mut s_out) = (f64::NEG_INFINITY, f64::INFINITY);
    let (mut f_in, mut f_out) = (usize::MAX, usize::MAX);
    let mut grazing = false;
    for (f, (a, n)) in faces.iter().enumerate() {
        let denom = n.dot(t);
        let dist = n.dot(&(a - q));
        if denom.abs() <= PARALLEL {
            if dist < -eps {
                return None;
            }
            grazing |= dist <= eps;
            continue;
        }
        let s = dist / denom;
        if denom > 0.0 {
            if s < s_out {
                s_out = s;
                f_out = f;
            }
        } else if s > s_in {
            s_in = s;
            f_in = f;
        }
    }
    if s_out <= s_in {
        return None;
    }
    if grazing || s_out - s_in <= eps || f_in == usize::MAX || f_out == usize::MAX {
        return Some(LineClip::Degenerate);
    }
    Some(LineClip::Chord(s_in, f_in, s_out, f_out))
}

/// Oracle for the counts: tests every lattice line against every inner cell
/// triangle independently. Lines with any degenerate hit are skipped, as in
/// [`clip_cull_and_count`].
pub fn brute_force_counts(lattice: &LineLattice, grid: &FaceGrid, eps: f64) -> Vec<u32> {
    let inner: &Tetra = &grid.inner_tetra().expect("face grid must be projected");
    let tris: Vec<_> = grid.cells().iter().map(|c| c.inner.expect("projected cell")).collect();
    let mut counts = vec![0u32; grid.len()];
    let (mr, nr) = lattice.index_window(inner.vertices());
    for m in mr[0]..=mr[1] {
        for n in nr[0]..=nr[1] {
            let q = lattice.origin(m, n);
            let mut hits = Vec::new();
            let mut degenerate = false;
            for (h, tri) in tris.iter().enumerate() {
                match line_triangle_intersection(&q, &lattice.t, tri, eps) {
                    Incidence::Point(_) => hits.push(h),
                    Incidence::Degenerate => degenerate = true,
                    Incidence::Empty => {}
                }
            }
            if !degenerate && hits.len() == 2 {
                for h in hits {
                    counts[h] += 1;
                }
            }
        }
    }
    counts
}
