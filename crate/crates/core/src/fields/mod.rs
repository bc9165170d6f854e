//! Piecewise-constant divergence-free fields on tetrahedral meshes: building
//! them as curls of interpolated potentials, checking normal continuity
//! across faces, rank-one coordinate splitting and the effective energy.

mod potential;

pub use potential::{PotentialSpec, PotentialTerm};

use nalgebra::{DMatrix, Matrix3};
use thiserror::Error;

use crate::geometry::{Tetra, Triangulation, Vec3};
use crate::numerics::{tetra_quadrature, Extended};

/// Default tolerance for `A_i ν = A_j ν`, relative to `max |A|`.
pub const NORMAL_JUMP_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("normal jump {violation:e} across face {face:?} between tetrahedra {tets:?} exceeds tolerance {tolerance:e}")]
    NormalJump {
        face: [usize; 3],
        tets: (usize, usize),
        violation: f64,
        tolerance: f64,
    },
    #[error("expected {expected} matrices, got {got}")]
    Count { expected: usize, got: usize },
    #[error("matrix {index} has shape {rows}x{cols}, expected {dim}x3")]
    Shape {
        index: usize,
        rows: usize,
        cols: usize,
        dim: usize,
    },
    #[error("interpolation on tetrahedron {0} is singular")]
    Singular(usize),
    #[error("potential: {0}")]
    Potential(String),
    #[error("field input line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// One `N × 3` matrix per tetrahedron.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseConstantField {
    mesh: Triangulation,
    dim: usize,
    matrices: Vec<DMatrix<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpReport {
    pub max_violation: f64,
    pub relative: f64,
    /// Face vertex indices and the two tetrahedra of the worst face.
    pub worst_face: Option<([usize; 3], (usize, usize))>,
}

impl JumpReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.relative <= tol
    }
}

impl PiecewiseConstantField {
    /// Validated input route: explicit matrices must satisfy the normal-jump
    /// condition to `tol` relative to `max |A|`.
    pub fn from_matrices(
        mesh: Triangulation,
        matrices: Vec<DMatrix<f64>>,
        tol: f64,
    ) -> Result<Self, FieldError> {
        let field = Self::unchecked(mesh, matrices)?;
        let r = field.check_normal_jumps();
        if !r.passes(tol) {
            let (face, tets) = r.worst_face.expect("violation has a face");
            return Err(FieldError::NormalJump {
                face,
                tets,
                violation: r.max_violation,
                tolerance: tol,
            });
        }
        Ok(field)
    }

    /// Builds without the jump check (used to inject faults in verification).
    pub fn unchecked(mesh: Triangulation, matrices: Vec<DMatrix<f64>>) -> Result<Self, FieldError> {
        if matrices.len() != mesh.len() {
            return Err(FieldError::Count {
                expected: mesh.len(),
                got: matrices.len(),
            });
        }
        let dim = matrices.first().map(|m| m.nrows()).unwrap_or(0);
        for (i, m) in matrices.iter().enumerate() {
            if m.nrows() != dim || m.ncols() != 3 {
                return Err(FieldError::Shape {
                    index: i,
                    rows: m.nrows(),
                    cols: m.ncols(),
                    dim,
                });
            }
        }
        Ok(Self { mesh, dim, matrices })
    }

    pub fn constant(mesh: Triangulation, a: &DMatrix<f64>) -> Self {
        let matrices = vec![a.clone(); mesh.len()];
        Self {
            dim: a.nrows(),
            mesh,
            matrices,
        }
    }

    pub fn mesh(&self) -> &Triangulation {
        &self.mesh
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.matrices
    }

    pub fn is_zero(&self) -> bool {
        self.matrices.iter().all(|m| m.iter().all(|v| *v == 0.0))
    }

    pub fn max_abs(&self) -> f64 {
        self.matrices
            .iter()
            .flat_map(|m| m.iter())
            .fold(0.0_f64, |a, v| a.max(v.abs()))
    }

    /// `‖A‖_{L¹} = Σ |A_i|_F · |T_i|`.
    pub fn l1_norm(&self) -> f64 {
        self.matrices
            .iter()
            .zip(self.mesh.tetra())
            .map(|(m, t)| m.norm() * t.volume())
            .sum()
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        Self {
            mesh: self.mesh.clone(),
            dim: self.dim,
            matrices: self.matrices.iter().map(|m| m * lambda).collect(),
        }
    }

    /// `max |A_i ν − A_j ν|` over interior faces.
    pub fn check_normal_jumps(&self) -> JumpReport {
        let mut worst = 0.0;
        let mut face = None;
        for (key, (ti, fi), (tj, _)) in self.mesh.adjacency().interior() {
            let (_, n) = self.mesh.tetra()[ti].face(fi);
            let d = (&self.matrices[ti] - &self.matrices[tj]) * nalgebra::DVector::from_column_slice(n.as_slice());
            let v = d.norm();
            if face.is_none() || v > worst {
                worst = v;
                face = Some((*key, (ti, tj)));
            }
        }
        let scale = self.max_abs();
        JumpReport {
            max_violation: worst,
            relative: if scale > 0.0 { worst / scale } else { worst },
            worst_face: face,
        }
    }

    /// `Σ_i ∫_{T_i} ⟨φ, A_i⟩ dx` with a tetrahedral rule of the given order.
    /// `phi` writes the `N × 3` matrix row-major.
    pub fn integrate_against<F>(&self, phi: F, order: usize) -> f64
    where
        F: Fn(&Vec3, &mut [f64]),
    {
        let mut buf = vec![0.0; 3 * self.dim];
        let mut acc = 0.0;
        for (t, a) in self.mesh.tetra().iter().zip(&self.matrices) {
            for (x, w) in tetra_quadrature(t.vertices(), order) {
                phi(&x, &mut buf);
                let mut v = 0.0;
                for i in 0..self.dim {
                    for c in 0..3 {
                        v += a[(i, c)] * buf[3 * i + c];
                    }
                }
                acc += w * v;
            }
        }
        acc
    }
}

/// Row-wise curl of the affine interpolant of `phi` on every tetrahedron.
pub fn curl_of_interpolated_potential(
    phi: &PotentialSpec,
    mesh: &Triangulation,
) -> Result<PiecewiseConstantField, FieldError> {
    phi.validate(u32::MAX)?;
    let n = phi.rows;
    let mut matrices = Vec::with_capacity(mesh.len());
    for (ti, t) in mesh.tetra().iter().enumerate() {
        let v = t.vertices();
        let e = Matrix3::from_rows(&[
            (v[1] - v[0]).transpose(),
            (v[2] - v[0]).transpose(),
            (v[3] - v[0]).transpose(),
        ]);
        let lu = e.lu();
        let mut a = DMatrix::zeros(n, 3);
        for row in 0..n {
            let vals: Vec<Vec3> = v.iter().map(|p| phi.eval_row(row, p)).collect();
            // grad[c] = ∇ of component c of the interpolant.
            let mut grad = [Vec3::zeros(); 3];
            for (c, g) in grad.iter_mut().enumerate() {
                let rhs = Vec3::new(
                    vals[1][c] - vals[0][c],
                    vals[2][c] - vals[0][c],
                    vals[3][c] - vals[0][c],
                );
                *g = lu.solve(&rhs).ok_or(FieldError::Singular(ti))?;
            }
            // curl = (∂_y φ_z − ∂_z φ_y, ∂_z φ_x − ∂_x φ_z, ∂_x φ_y − ∂_y φ_x).
            a[(row, 0)] = grad[2].y - grad[1].z;
            a[(row, 1)] = grad[0].z - grad[2].x;
            a[(row, 2)] = grad[1].x - grad[0].y;
        }
        matrices.push(a);
    }
    Ok(PiecewiseConstantField {
        mesh: mesh.clone(),
        dim: n,
        matrices,
    })
}

/// `‖A − curl φ‖_{L¹}` with the Frobenius norm, by quadrature.
pub fn curl_l1_error(field: &PiecewiseConstantField, phi: &PotentialSpec, order: usize) -> f64 {
    let mut acc = 0.0;
    for (t, a) in field.mesh.tetra().iter().zip(&field.matrices) {
        acc += l1_on_tet(t, a, phi, order);
    }
    acc
}

fn l1_on_tet(t: &Tetra, a: &DMatrix<f64>, phi: &PotentialSpec, order: usize) -> f64 {
    tetra_quadrature(t.vertices(), order)
        .into_iter()
        .map(|(x, w)| {
            let mut s = 0.0;
            for row in 0..a.nrows() {
                let c = phi.curl_row(row, &x);
                for k in 0..3 {
                    s += (a[(row, k)] - c[k]).powi(2);
                }
            }
            w * s.sqrt()
        })
        .sum()
}

/// Terms `(b, t)` with `b ∈ R^N`, `t ∈ S²` and `Σ b ⊗ t = A`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RankOneDecomposition {
    pub terms: Vec<(Vec<f64>, Vec3)>,
}

impl RankOneDecomposition {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn resum(&self, dim: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(dim, 3);
        for (b, t) in &self.terms {
            for i in 0..dim {
                for c in 0..3 {
                    m[(i, c)] += b[i] * t[c];
                }
            }
        }
        m
    }
}

/// `A = Σ (|A_ij| e_i) ⊗ (sign(A_ij) e_j)` over nonzero entries, so every
/// `b` is a positive multiple of a standard basis vector.
pub fn coordinate_rank_one_decomposition(a: &DMatrix<f64>) -> RankOneDecomposition {
    let mut terms = Vec::new();
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            let v = a[(i, j)];
            if v == 0.0 {
                continue;
            }
            let mut b = vec![0.0; a.nrows()];
            b[i] = v.abs();
            let mut t = Vec3::zeros();
            t[j] = v.signum();
            terms.push((b, t));
        }
    }
    RankOneDecomposition { terms }
}

/// `E₀ = Σ_i g(A_i) · |T_i ∩ Ω|`. Tetrahedra lie in the closed domain box, so
/// the intersection volume is the tetrahedron volume.
pub fn e0_energy<G>(field: &PiecewiseConstantField, g: G) -> Extended
where
    G: Fn(&DMatrix<f64>) -> Extended,
{
    let mut total = Extended::Finite(0.0);
    for (a, t) in field.matrices.iter().zip(field.mesh.tetra()) {
        if a.iter().all(|v| *v == 0.0) {
            continue;
        }
        total = total.add(g(a).scale(t.volume()));
    }
    total
}

/// Per-tet matrix table: `tet,a11,a12,a13,a21,…` with `N × 3` entries
/// row-major.
pub fn parse_field_csv(text: &str, mesh: Triangulation, tol: f64) -> Result<PiecewiseConstantField, FieldError> {
    let mut rows: Vec<Option<DMatrix<f64>>> = vec![None; mesh.len()];
    let mut dim = None;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("tet") {
            continue;
        }
        let bad = |m: String| FieldError::Parse { line: i + 1, message: m };
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        let tet = cols[0].parse::<usize>().map_err(|e| bad(e.to_string()))?;
        let vals: Result<Vec<f64>, _> = cols[1..].iter().map(|s| s.parse::<f64>()).collect();
        let vals = vals.map_err(|e| bad(e.to_string()))?;
        if vals.is_empty() || vals.len() % 3 != 0 {
            return Err(bad(format!("{} entries is not a multiple of 3", vals.len())));
        }
        let n = vals.len() / 3;
        if *dim.get_or_insert(n) != n {
            return Err(bad(format!("row has {n} matrix rows, expected {}", dim.unwrap_or(n))));
        }
        if tet >= mesh.len() {
            return Err(bad(format!("tetrahedron {tet} out of range")));
        }
        rows[tet] = Some(DMatrix::from_row_slice(n, 3, &vals));
    }
    if dim.is_none() {
        return Err(FieldError::Parse {
            line: 0,
            message: "no matrices".into(),
        });
    }
    let matrices = rows
        .into_iter()
        .enumerate()
        .map(|(i, m)| {
            m.ok_or(FieldError::Parse {
                line: 0,
                message: format!("missing matrix for tetrahedron {i}"),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    PiecewiseConstantField::from_matrices(mesh, matrices, tol)
}
