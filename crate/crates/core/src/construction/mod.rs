//! Polyhedral line measures realizing a constant matrix on a tetrahedron,
//! glued across a triangulation into a divergence-free approximant of a
//! piecewise-constant field.
//!
//! On each tetrahedron `T` the measure is `ν + ω + ρ`: lattice lines clipped
//! to the shrunken `T_k`, connectors from the line ends to the barycenters of
//! the boundary cells of `∂T`, and rays from each barycenter to far away
//! that correct the deposited mass `B` to the area-weighted value `B̂`.
//! Interior barycenters are shared bit-for-bit by the two tetrahedra of a
//! face, so the `B̂` masses cancel there.

mod incidence;
mod lattice;

pub use incidence::{brute_force_counts, clip_cull_and_count, Chord, ClipOutcome, CullCounts};
pub use lattice::{plane_basis, LineLattice};

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::currents::{
    boundary_ledger, default_quantum, pair_with_matrix_field, CurrentError, PolyhedralCurrent,
};
use crate::fields::{FieldError, PiecewiseConstantField, RankOneDecomposition, NORMAL_JUMP_TOL};
use crate::geometry::{Aabb, FaceGrid, GeometryError, Plane, Region, Tetra, Triangulation, Vec3};
use crate::numerics::{fibonacci_sphere, loglog_slope, mix64, seeded_rng};

#[derive(Debug, Error)]
pub enum ConstructionError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Current(#[from] CurrentError),
    #[error("tet {tet}, term {term}: {culled} culled lines exceed the budget {budget} after {retries} offsets")]
    OffsetExhausted {
        tet: usize,
        term: usize,
        culled: usize,
        budget: usize,
        retries: usize,
    },
    #[error("tet {tet}, cell {cell}: no admissible ray direction")]
    NoRayDirection { tet: usize, cell: usize },
    #[error("tet {tet}: decomposition misses the matrix by {residual:e}")]
    Decomposition { tet: usize, residual: f64 },
    #[error("{got} decompositions for {expected} tetrahedra")]
    Count { expected: usize, got: usize },
    #[error("normal jump {violation:e} on face {face:?} exceeds {tolerance:e}")]
    NormalJump {
        face: [usize; 3],
        violation: f64,
        tolerance: f64,
    },
    #[error("k = {0} is below 2")]
    Level(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstructionParams {
    pub k: usize,
    pub seed: u64,
    /// Degeneracy tolerance relative to `diam(T)`.
    pub eps_rel: f64,
    /// Minimum angle `δ` (radians) between a ray and the planes of the
    /// forbidden family, the lattice directions and the other rays at the
    /// same barycenter; also the minimum elevation above the face.
    pub angle: f64,
    /// Ray length `R_t`.
    pub ray_length: f64,
    pub max_retries: usize,
    pub ray_candidates: usize,
}

impl ConstructionParams {
    /// Defaults for a domain box: rays of length four times its circumradius.
    pub fn for_domain(k: usize, seed: u64, domain: &Aabb) -> Self {
        Self {
            k,
            seed,
            eps_rel: 1e-9,
            angle: 1e-3,
            ray_length: 4.0 * domain.circumradius(),
            max_retries: 32,
            ray_candidates: 4096,
        }
    }

    /// Lines with a degenerate incidence tolerated per term, `2 k³`.
    pub fn cull_budget(&self) -> usize {
        2 * self.k.pow(3)
    }
}

/// Per-term bookkeeping of one tetrahedron's lattice.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TermRecord {
    pub b: Vec<f64>,
    pub t: [f64; 3],
    pub offset: [f64; 2],
    pub retries: usize,
    pub chords: usize,
    pub culled: CullCounts,
    pub culled_mass: f64,
    /// `N(k, j, h)` per cell.
    pub counts: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TetraConstruction {
    pub tet: usize,
    pub k: usize,
    pub dim: usize,
    pub nu: PolyhedralCurrent,
    pub omega: PolyhedralCurrent,
    pub rho: PolyhedralCurrent,
    pub terms: Vec<TermRecord>,
    /// Barycenters `d(T, k, h)`.
    pub barycenters: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub outer_area: Vec<f64>,
    pub inner_area: Vec<f64>,
    /// `B(T, k, h)`.
    pub exact_mass: Vec<Vec<f64>>,
    /// `B̂(h) = H²(Δ) A n_h`.
    pub averaged_mass: Vec<Vec<f64>>,
    pub matrix: DMatrix<f64>,
}

impl TetraConstruction {
    fn empty(tet: usize, k: usize, a: &DMatrix<f64>) -> Self {
        let dim = a.nrows();
        Self {
            tet,
            k,
            dim,
            nu: PolyhedralCurrent::new(dim),
            omega: PolyhedralCurrent::new(dim),
            rho: PolyhedralCurrent::new(dim),
            terms: Vec::new(),
            barycenters: Vec::new(),
            normals: Vec::new(),
            outer_area: Vec::new(),
            inner_area: Vec::new(),
            exact_mass: Vec::new(),
            averaged_mass: Vec::new(),
            matrix: a.clone(),
        }
    }

    /// `ν + ω + ρ`.
    pub fn measure(&self) -> PolyhedralCurrent {
        let mut m = self.nu.clone();
        m.append(&self.omega);
        m.append(&self.rho);
        m
    }

    /// `ν + ω`, whose boundary sits exactly on the barycenters.
    pub fn lines_and_connectors(&self) -> PolyhedralCurrent {
        let mut m = self.nu.clone();
        m.append(&self.omega);
        m
    }

    /// `max_h |B(T,k,h) − H²(δ(k,h)) A n_h|`.
    pub fn inner_mass_gap(&self) -> f64 {
        self.cell_gaps(&self.inner_area)
    }

    /// `max_h |B(T,k,h) − B̂(h)|`.
    pub fn outer_mass_gap(&self) -> f64 {
        self.cell_gaps(&self.outer_area)
    }

    fn cell_gaps(&self, areas: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for h in 0..self.barycenters.len() {
            let an = &self.matrix * DMatrix::from_column_slice(3, 1, self.normals[h].as_slice());
            let gap: f64 = (0..self.dim)
                .map(|i| (self.exact_mass[h][i] - areas[h] * an[(i, 0)]).powi(2))
                .sum::<f64>()
                .sqrt();
            worst = worst.max(gap);
        }
        worst
    }

    /// `max_h |H²(δ)/H²(P) − N(k,j,h)|` over the terms, with
    /// `H²(P) = 1/(k⁴ |⟨t, n_h⟩|)`.
    pub fn lattice_count_gap(&self) -> f64 {
        let k4 = (self.k as f64).powi(4);
        let mut worst: f64 = 0.0;
        for term in &self.terms {
            let t = Vec3::from(term.t);
            for (h, &n) in term.counts.iter().enumerate() {
                let expected = self.inner_area[h] * k4 * t.dot(&self.normals[h]).abs();
                worst = worst.max((expected - n as f64).abs());
            }
        }
        worst
    }

    pub fn manifest(&self) -> TetraManifest {
        TetraManifest {
            tet: self.tet,
            k: self.k,
            terms: self.terms.clone(),
            exact_mass: self.exact_mass.clone(),
            averaged_mass: self.averaged_mass.clone(),
            nu_segments: self.nu.len(),
            omega_segments: self.omega.len(),
            rho_segments: self.rho.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TetraManifest {
    pub tet: usize,
    pub k: usize,
    pub terms: Vec<TermRecord>,
    pub exact_mass: Vec<Vec<f64>>,
    pub averaged_mass: Vec<Vec<f64>>,
    pub nu_segments: usize,
    pub omega_segments: usize,
    pub rho_segments: usize,
}

/// `ω`: for every chord, `[p_out, d(h_out)]` and `[d(h_in), p_in]` carrying
/// `b/k⁴`, so that each barycenter receives `sign(⟨t, n_h⟩) b/k⁴` per point.
pub fn connect_to_barycenters(
    chords: &[Chord],
    barycenters: &[Vec3],
    weight: &[f64],
    omega: &mut PolyhedralCurrent,
) -> Result<(), CurrentError> {
    for c in chords {
        for (a, b) in [(c.exit, barycenters[c.cell_out]), (barycenters[c.cell_in], c.entry)] {
            match omega.push(a, b, weight) {
                // A line end landing exactly on the barycenter needs no connector.
                Err(CurrentError::ZeroLength { .. }) => {}
                other => other?,
            }
        }
    }
    Ok(())
}

/// `B(h) = Σ_j N(k,j,h) sign(⟨t_j, n_h⟩) b_j/k⁴` and `B̂(h) = H²(Δ(k,h)) A n_h`.
pub fn exact_and_averaged_mass(
    terms: &[TermRecord],
    grid: &FaceGrid,
    a: &DMatrix<f64>,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let dim = a.nrows();
    let k4 = (grid.k() as f64).powi(4);
    let mut exact = vec![vec![0.0; dim]; grid.len()];
    let mut averaged = vec![vec![0.0; dim]; grid.len()];
    for (h, cell) in grid.cells().iter().enumerate() {
        for term in terms {
            let s = Vec3::from(term.t).dot(&cell.normal);
            if s == 0.0 || term.counts[h] == 0 {
                continue;
            }
            let f = term.counts[h] as f64 * s.signum() / k4;
            for i in 0..dim {
                exact[h][i] += f * term.b[i];
            }
        }
        for i in 0..dim {
            let an: f64 = (0..3).map(|c| a[(i, c)] * cell.normal[c]).sum();
            averaged[h][i] = cell.outer_area * an;
        }
    }
    (exact, averaged)
}

/// `ρ`: for every cell and every component `c` with `(B̂ − B)_c ≠ 0`, a ray
/// from `d + R_t τ` to `d` carrying `(B̂ − B)_c e_c`. Splitting by component
/// keeps every multiplicity a multiple of an integer vector.
#[allow(clippy::too_many_arguments)]
pub fn correction_rays(
    tet: usize,
    grid: &FaceGrid,
    exact: &[Vec<f64>],
    averaged: &[Vec<f64>],
    planes: &[Plane],
    avoid: &[Vec3],
    candidates: &[Vec3],
    params: &ConstructionParams,
) -> Result<PolyhedralCurrent, ConstructionError> {
    let dim = exact.first().map_or(0, Vec::len);
    let mut rho = PolyhedralCurrent::new(dim);
    let (sin_d, cos_d) = (params.angle.sin(), params.angle.cos());
    let mut e = vec![0.0; dim];
    for (h, cell) in grid.cells().iter().enumerate() {
        let mut chosen: Vec<Vec3> = Vec::new();
        for c in 0..dim {
            let m = averaged[h][c] - exact[h][c];
            if m == 0.0 {
                continue;
            }
            let start = mix64(params.seed ^ mix64(tet as u64) ^ mix64((h as u64) << 8 | c as u64)) as usize;
            let ok = |tau: &Vec3| {
                tau.dot(&cell.normal) >= sin_d
                    && planes.iter().all(|p| p.normal.dot(tau).abs() >= sin_d)
                    && avoid.iter().chain(&chosen).all(|v| v.dot(tau).abs() <= cos_d)
            };
            let tau = (0..candidates.len())
                .map(|i| candidates[(start + i) % candidates.len()])
                .find(ok)
                .ok_or(ConstructionError::NoRayDirection { tet, cell: h })?;
            chosen.push(tau);
            e.iter_mut().for_each(|v| *v = 0.0);
            e[c] = m;
            rho.push(cell.barycenter + tau * params.ray_length, cell.barycenter, &e)?;
        }
    }
    Ok(rho)
}

/// `μ_k = ν_k + ω_k + ρ_k` on one tetrahedron for `A = Σ b_j ⊗ t_j`.
pub fn build_tetra_measure(
    tet_index: usize,
    tet: &Tetra,
    a: &DMatrix<f64>,
    decomposition: &RankOneDecomposition,
    planes: &[Plane],
    params: &ConstructionParams,
) -> Result<TetraConstruction, ConstructionError> {
    let k = params.k;
    if k < 2 {
        return Err(ConstructionError::Level(k));
    }
    let dim = a.nrows();
    let residual = (decomposition.resum(dim) - a).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let scale = a.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if residual > 1e-9 * scale.max(f64::MIN_POSITIVE) && residual > 0.0 {
        return Err(ConstructionError::Decomposition { tet: tet_index, residual });
    }
    let mut out = TetraConstruction::empty(tet_index, k, a);
    if scale == 0.0 {
        return Ok(out);
    }
    let grid = FaceGrid::subdivide(tet, k)?.shrink_and_project()?;
    let eps = params.eps_rel * tet.diam();
    out.barycenters = grid.cells().iter().map(|c| c.barycenter).collect();
    out.normals = grid.cells().iter().map(|c| c.normal).collect();
    out.outer_area = grid.cells().iter().map(|c| c.outer_area).collect();
    out.inner_area = grid.cells().iter().map(|c| c.inner_area.unwrap_or(0.0)).collect();

    for (j, (b, t)) in decomposition.terms.iter().enumerate() {
        if b.iter().all(|v| *v == 0.0) {
            continue;
        }
        let mut accepted = None;
        let mut last_culled = 0;
        for retry in 0..params.max_retries {
            let mut rng = seeded_rng(&[params.seed, tet_index as u64, j as u64, k as u64, retry as u64]);
            let offset = [rng.gen::<f64>(), rng.gen::<f64>()];
            let lattice = LineLattice::new(b, t, k, offset);
            let clip = clip_cull_and_count(&lattice, &grid, planes, eps);
            last_culled = clip.culled.total();
            if last_culled <= params.cull_budget() {
                accepted = Some((lattice, clip, retry));
                break;
            }
        }
        let (lattice, clip, retries) = accepted.ok_or(ConstructionError::OffsetExhausted {
            tet: tet_index,
            term: j,
            culled: last_culled,
            budget: params.cull_budget(),
            retries: params.max_retries,
        })?;
        let w = lattice.weight();
        for c in &clip.chords {
            out.nu.push(c.entry, c.exit, &w)?;
        }
        connect_to_barycenters(&clip.chords, &out.barycenters, &w, &mut out.omega)?;
        out.terms.push(TermRecord {
            b: b.clone(),
            t: [lattice.t.x, lattice.t.y, lattice.t.z],
            offset: lattice.offset,
            retries,
            chords: clip.chords.len(),
            culled: clip.culled,
            culled_mass: clip.culled_mass,
            counts: clip.counts,
        });
    }
    let (exact, averaged) = exact_and_averaged_mass(&out.terms, &grid, a);
    let avoid: Vec<Vec3> = out.terms.iter().map(|t| Vec3::from(t.t)).collect();
    let candidates = fibonacci_sphere(params.ray_candidates);
    out.rho = correction_rays(tet_index, &grid, &exact, &averaged, planes, &avoid, &candidates, params)?;
    out.exact_mass = exact;
    out.averaged_mass = averaged;
    Ok(out)
}

/// The glued measure `μ_k = Σ_T (ν + ω + ρ)` and its pieces.
#[derive(Debug, Clone, PartialEq)]
pub struct GluedMeasure {
    pub k: usize,
    pub dim: usize,
    /// `Ω`, the union of the tetrahedra.
    pub region: Triangulation,
    pub pieces: Vec<TetraConstruction>,
}

impl GluedMeasure {
    pub fn measure(&self) -> PolyhedralCurrent {
        let mut m = PolyhedralCurrent::new(self.dim);
        for p in &self.pieces {
            m.append(&p.nu);
            m.append(&p.omega);
            m.append(&p.rho);
        }
        m
    }

    /// `η_k = Σ_T (ω + ρ)`.
    pub fn corrector(&self) -> PolyhedralCurrent {
        let mut m = PolyhedralCurrent::new(self.dim);
        for p in &self.pieces {
            m.append(&p.omega);
            m.append(&p.rho);
        }
        m
    }

    pub fn nu_mass(&self) -> f64 {
        self.pieces.iter().map(|p| p.nu.total_variation()).sum()
    }

    pub fn omega_mass(&self) -> f64 {
        self.pieces.iter().map(|p| p.omega.total_variation()).sum()
    }

    /// `‖ρ‖(Ω)`.
    pub fn rho_mass_in_domain(&self) -> f64 {
        self.pieces.iter().map(|p| p.rho.total_variation_on(&self.region)).sum()
    }

    pub fn segment_count(&self) -> usize {
        self.pieces.iter().map(|p| p.nu.len() + p.omega.len() + p.rho.len()).sum()
    }

    pub fn manifest(&self) -> Vec<TetraManifest> {
        self.pieces.iter().map(TetraConstruction::manifest).collect()
    }
}

/// Builds every tetrahedron's measure in parallel and concatenates them in
/// tetrahedron order.
pub fn glue(
    field: &PiecewiseConstantField,
    decompositions: &[RankOneDecomposition],
    params: &ConstructionParams,
) -> Result<GluedMeasure, ConstructionError> {
    let mesh = field.mesh();
    if decompositions.len() != mesh.len() {
        return Err(ConstructionError::Count {
            expected: mesh.len(),
            got: decompositions.len(),
        });
    }
    let jumps = field.check_normal_jumps();
    if !jumps.passes(NORMAL_JUMP_TOL) {
        return Err(ConstructionError::NormalJump {
            face: jumps.worst_face.map_or([0; 3], |f| f.0),
            violation: jumps.max_violation,
            tolerance: NORMAL_JUMP_TOL,
        });
    }
    let planes = mesh.face_planes();
    let pieces: Vec<TetraConstruction> = mesh
        .tetra()
        .par_iter()
        .enumerate()
        .map(|(i, t)| build_tetra_measure(i, t, &field.matrices()[i], &decompositions[i], &planes, params))
        .collect::<Result<_, _>>()?;
    Ok(GluedMeasure {
        k: params.k,
        dim: field.dim(),
        region: mesh.clone(),
        pieces,
    })
}

/// `φ(x) = β(x) x^α E_{rc}` with `β` the quadratic bubble of the domain box,
/// so `φ` vanishes on `∂Ω`; it is set to zero outside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BubbleTest {
    pub row: usize,
    pub col: usize,
    pub exponents: [u32; 3],
}

impl BubbleTest {
    pub fn eval(&self, domain: &Aabb, x: &Vec3, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut v = 1.0;
        for a in 0..3 {
            let (lo, hi) = (domain.min[a], domain.max[a]);
            if x[a] <= lo || x[a] >= hi {
                return;
            }
            let u = (x[a] - lo) / (hi - lo);
            v *= 4.0 * u * (1.0 - u) * u.powi(self.exponents[a] as i32);
        }
        out[3 * self.row + self.col] = v;
    }

    /// A fixed family of `count` tests cycling through matrix entries and
    /// monomials of degree at most two.
    pub fn family(dim: usize, count: usize) -> Vec<BubbleTest> {
        const EXPONENTS: [[u32; 3]; 10] = [
            [0, 0, 0],
            [1, 0, 0],
            [0, 1, 0],
            [0, 0, 1],
            [1, 1, 0],
            [0, 1, 1],
            [1, 0, 1],
            [2, 0, 0],
            [0, 2, 0],
            [0, 0, 2],
        ];
        (0..count)
            .map(|i| BubbleTest {
                row: i % dim,
                col: (i / dim) % 3,
                exponents: EXPONENTS[i % EXPONENTS.len()],
            })
            .collect()
    }
}

/// `|⟨μ, φ⟩ − ∫_Ω ⟨φ, A⟩ dx|` for each test.
pub fn weak_gaps(mu: &PolyhedralCurrent, field: &PiecewiseConstantField, tests: &[BubbleTest]) -> Vec<f64> {
    let domain = *field.mesh().domain();
    let inside = mu.clipped(field.mesh());
    tests
        .iter()
        .map(|t| {
            let lhs = pair_with_matrix_field(&inside, |x, m| t.eval(&domain, x, m), 6);
            let rhs = field.integrate_against(|x, m| t.eval(&domain, x, m), 8);
            (lhs - rhs).abs()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub k: usize,
    pub segments: usize,
    pub mass_in_domain: f64,
    pub nu_mass: f64,
    pub omega_mass: f64,
    pub rho_mass_in_domain: f64,
    /// Largest interior ledger norm relative to `‖μ_k‖(Ω)`.
    pub ledger_residual: f64,
    pub weak_gaps: Vec<f64>,
    pub culled_lines: usize,
    /// Largest `|x − y|` over `x ∈ Δ(k,h)`, `y ∈ δ(k,h)` and all cells.
    pub cell_offset: f64,
    /// Largest distance between a point of `Δ(k,h)` and its projection.
    pub projection_offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub field_l1: f64,
    pub rows: Vec<ConvergenceRow>,
    pub omega_slope: Option<f64>,
    pub rho_slope: Option<f64>,
    /// Fitted exponents of the two offsets against `k`.
    pub cell_offset_slope: Option<f64>,
    pub projection_offset_slope: Option<f64>,
}

/// The two offsets of [`FaceGrid::cell_offsets`], maximized over the mesh.
fn mesh_cell_offsets(mesh: &Triangulation, k: usize) -> Result<(f64, f64), GeometryError> {
    let mut out: (f64, f64) = (0.0, 0.0);
    for t in mesh.tetra() {
        let (a, b) = FaceGrid::subdivide(t, k)?.shrink_and_project()?.cell_offsets().unwrap_or((0.0, 0.0));
        out = (out.0.max(a), out.1.max(b));
    }
    Ok(out)
}

/// Largest ledger norm over nodes of `μ` inside the open region.
pub fn interior_ledger_residual<R: Region + ?Sized>(
    mu: &PolyhedralCurrent,
    region: &R,
    quantum: f64,
) -> Result<f64, CurrentError> {
    let q = quantum;
    let ledger = boundary_ledger(mu, q, 0.0)?;
    Ok(ledger
        .iter()
        .filter(|e| region.contains_open(&e.point, q))
        .map(|e| e.norm())
        .fold(0.0, f64::max))
}

/// Approximants for every `k` with masses, ledger residuals and weak* gaps.
/// A zero field yields no measures.
pub fn approximate_measure_pipeline(
    field: &PiecewiseConstantField,
    decompositions: &[RankOneDecomposition],
    ks: &[usize],
    seed: u64,
    tests: &[BubbleTest],
) -> Result<(Vec<GluedMeasure>, ConvergenceReport), ConstructionError> {
    let mut report = ConvergenceReport {
        field_l1: field.l1_norm(),
        rows: Vec::new(),
        omega_slope: None,
        rho_slope: None,
        cell_offset_slope: None,
        projection_offset_slope: None,
    };
    if field.is_zero() {
        return Ok((Vec::new(), report));
    }
    let domain = *field.mesh().domain();
    let mut measures = Vec::with_capacity(ks.len());
    for &k in ks {
        let params = ConstructionParams::for_domain(k, seed, &domain);
        let glued = glue(field, decompositions, &params)?;
        let mu = glued.measure();
        let mass = mu.total_variation_on(field.mesh());
        let residual = interior_ledger_residual(&mu, field.mesh(), default_quantum(&domain))?;
        let (cell_offset, projection_offset) = mesh_cell_offsets(field.mesh(), k)?;
        report.rows.push(ConvergenceRow {
            k,
            segments: mu.len(),
            mass_in_domain: mass,
            nu_mass: glued.nu_mass(),
            omega_mass: glued.omega_mass(),
            rho_mass_in_domain: glued.rho_mass_in_domain(),
            ledger_residual: if mass > 0.0 { residual / mass } else { residual },
            weak_gaps: weak_gaps(&mu, field, tests),
            culled_lines: glued
                .pieces
                .iter()
                .flat_map(|p| p.terms.iter().map(|t| t.culled.total()))
                .sum(),
            cell_offset,
            projection_offset,
        });
        measures.push(glued);
    }
    let kf: Vec<f64> = report.rows.iter().map(|r| r.k as f64).collect();
    let om: Vec<f64> = report.rows.iter().map(|r| r.omega_mass).collect();
    let rh: Vec<f64> = report.rows.iter().map(|r| r.rho_mass_in_domain).collect();
    report.omega_slope = loglog_slope(&kf, &om);
    report.rho_slope = loglog_slope(&kf, &rh);
    let co: Vec<f64> = report.rows.iter().map(|r| r.cell_offset).collect();
    let po: Vec<f64> = report.rows.iter().map(|r| r.projection_offset).collect();
    report.cell_offset_slope = loglog_slope(&kf, &co);
    report.projection_offset_slope = loglog_slope(&kf, &po);
    Ok((measures, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::currents::pair_with_ledger;
    use crate::fields::coordinate_rank_one_decomposition;
    use crate::geometry::Triangulation;

    fn unit_tet() -> Tetra {
        Tetra::new([
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
        ])
        .unwrap()
    }

    fn e1_e3() -> DMatrix<f64> {
        DMatrix::from_row_slice(1, 3, &[0.0, 0.0, 1.0])
    }

    fn params(k: usize) -> ConstructionParams {
        ConstructionParams::for_domain(k, 7, &Aabb::new([0.0; 3], [1.0; 3]))
    }

    #[test]
    fn zero_matrix_gives_empty_measure() {
        let a = DMatrix::zeros(2, 3);
        let c = build_tetra_measure(0, &unit_tet(), &a, &RankOneDecomposition::default(), &[], &params(4)).unwrap();
        assert!(c.measure().is_empty());
    }

    #[test]
    fn ledger_sits_on_barycenters() {
        let a = e1_e3();
        let d = coordinate_rank_one_decomposition(&a);
        let c = build_tetra_measure(0, &unit_tet(), &a, &d, &[], &params(4)).unwrap();
        let q = 1e-12;
        let ledger = boundary_ledger(&c.lines_and_connectors(), q, 1e-15).unwrap();
        for e in ledger.iter() {
            let h = c.barycenters.iter().position(|d| (d - e.point).norm() < q).expect("node at a barycenter");
            assert!((e.mass[0] + c.exact_mass[h][0]).abs() < 1e-12);
        }
        // With the rays the ledger becomes −B̂ at every barycenter (plus far ends).
        let full = boundary_ledger(&c.measure(), q, 0.0).unwrap();
        for (h, d) in c.barycenters.iter().enumerate() {
            let m = full.get(d, q).map_or(0.0, |e| e.mass[0]);
            assert!((m + c.averaged_mass[h][0]).abs() < 1e-12);
        }
        let pairing = pair_with_ledger(&full, |x, out| out[0] = x.x * x.z);
        assert!(pairing.is_finite());
    }

    #[test]
    fn averaged_masses_sum_to_zero() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 0.5, -0.25, 0.0, 2.0, 1.0]);
        let d = coordinate_rank_one_decomposition(&a);
        let c = build_tetra_measure(0, &unit_tet(), &a, &d, &[], &params(3)).unwrap();
        for i in 0..2 {
            let s: f64 = c.averaged_mass.iter().map(|m| m[i]).sum();
            assert!(s.abs() < 1e-14);
        }
    }

    #[test]
    fn orthogonal_incidence_masses() {
        // t = e₃ is the outward normal of no face here, but B = N b/k⁴ per cell.
        let a = e1_e3();
        let d = coordinate_rank_one_decomposition(&a);
        let c = build_tetra_measure(0, &unit_tet(), &a, &d, &[], &params(4)).unwrap();
        let k4 = 256.0;
        for (h, n) in c.terms[0].counts.iter().enumerate() {
            let s = c.normals[h].z.signum();
            if *n > 0 {
                assert!((c.exact_mass[h][0] - s * *n as f64 / k4).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn reversing_direction_negates_connectors() {
        let grid = FaceGrid::subdivide(&unit_tet(), 4).unwrap().shrink_and_project().unwrap();
        let lat = LineLattice::new(&[1.0], &Vec3::new(0.2, 0.1, 0.97).normalize(), 4, [0.4, 0.3]);
        let clip = clip_cull_and_count(&lat, &grid, &[], 1e-10);
        let bary: Vec<Vec3> = grid.cells().iter().map(|c| c.barycenter).collect();
        let reversed: Vec<Chord> = clip
            .chords
            .iter()
            .map(|c| Chord { entry: c.exit, exit: c.entry, cell_in: c.cell_out, cell_out: c.cell_in })
            .collect();
        let (mut fwd, mut bwd) = (PolyhedralCurrent::new(1), PolyhedralCurrent::new(1));
        connect_to_barycenters(&clip.chords, &bary, &lat.weight(), &mut fwd).unwrap();
        connect_to_barycenters(&reversed, &bary, &lat.weight(), &mut bwd).unwrap();
        let (lf, lb) = (boundary_ledger(&fwd, 1e-12, 0.0).unwrap(), boundary_ledger(&bwd, 1e-12, 0.0).unwrap());
        assert_eq!(lf.len(), lb.len());
        for (key, e) in &lf.entries {
            assert!((e.mass[0] + lb.entries[key].mass[0]).abs() < 1e-15);
        }
    }

    #[test]
    fn shared_face_barycenters_cancel_exactly() {
        let mesh = Triangulation::kuhn_subdivision(1).unwrap();
        let a = DMatrix::from_row_slice(1, 3, &[0.3, -0.2, 0.9]);
        let field = PiecewiseConstantField::constant(mesh, &a);
        let decs: Vec<_> = (0..field.mesh().len()).map(|_| coordinate_rank_one_decomposition(&a)).collect();
        let glued = glue(&field, &decs, &params(3)).unwrap();
        let r = interior_ledger_residual(&glued.measure(), &glued.region, default_quantum(glued.region.domain())).unwrap();
        assert!(r < 1e-13 * glued.measure().total_variation(), "{r}");
        // The B̂ entries at a shared barycenter are exact negatives.
        let mut matched = 0;
        for (i, p0) in glued.pieces.iter().enumerate() {
            for p1 in &glued.pieces[i + 1..] {
                for (h, d) in p0.barycenters.iter().enumerate() {
                    if let Some(g) = p1.barycenters.iter().position(|e| e == d) {
                        assert_eq!(p0.averaged_mass[h][0], -p1.averaged_mass[g][0]);
                        matched += 1;
                    }
                }
            }
        }
        assert!(matched > 0);
    }

    #[test]
    fn decomposition_must_match() {
        let a = e1_e3();
        let wrong = RankOneDecomposition { terms: vec![(vec![2.0], Vec3::z())] };
        assert!(matches!(
            build_tetra_measure(0, &unit_tet(), &a, &wrong, &[], &params(2)),
            Err(ConstructionError::Decomposition { .. })
        ));
    }
}
