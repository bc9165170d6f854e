//! Polyhedral divergence-free matrix-valued line measures
//! `μ = θ ⊗ τ H¹⌞Γ`: storage, boundary ledgers, pairings with test
//! functions, loop decomposition and lattice rounding.

mod io;
mod ledger;
mod loops;
mod pairing;

pub use io::{read_csv, to_obj, write_csv, write_obj_loops};
pub use ledger::{
    boundary_ledger, check_divergence_free, default_quantum, BoundaryLedger, DivergenceReport,
    LedgerEntry, NodeKey, NodeMap,
};
pub use loops::{decompose_into_loops, resum_loops, round_multiplicities, Decomposition, Loop};
pub use pairing::{pair_with_gradient, pair_with_ledger, pair_with_matrix_field};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{lex_cmp, Region, Vec3};
use crate::numerics::integer_direction;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CurrentError {
    #[error("segment {index} has zero length")]
    ZeroLength { index: usize },
    #[error("burgers vector of length {got} does not match dimension {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("ambiguous node merge: {a:?} and {b:?} are closer than the quantum {quantum:e}")]
    AmbiguousNode { a: [f64; 3], b: [f64; 3], quantum: f64 },
    #[error("flow is not balanced at node {node:?} (residual {residual:e})")]
    Imbalanced { node: [f64; 3], residual: f64 },
    #[error("rounding step must be positive, got {0}")]
    BadSigma(f64),
    #[error("csv line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error("io: {0}")]
    Io(String),
}

/// How the multiplicities of a current sit in `R^N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MultiplicityClass {
    /// Every burgers vector lies in `σ Z^N`.
    Lattice(f64),
    /// Every burgers vector is a positive multiple of an integer vector.
    Cone,
    General,
}

/// Borrowed view of one oriented segment.
#[derive(Debug, Clone, Copy)]
pub struct SegmentRef<'a> {
    pub start: Vec3,
    pub end: Vec3,
    pub burgers: &'a [f64],
}

impl SegmentRef<'_> {
    pub fn length(&self) -> f64 {
        (self.end - self.start).norm()
    }

    pub fn tangent(&self) -> Vec3 {
        (self.end - self.start) / self.length()
    }

    pub fn burgers_norm(&self) -> f64 {
        self.burgers.iter().map(|b| b * b).sum::<f64>().sqrt()
    }
}

/// A finite list of oriented straight segments with multiplicities in `R^N`,
/// stored column-wise: endpoints in one array and the burgers vectors packed
/// in a flat array of stride `dim`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PolyhedralCurrent {
    dim: usize,
    points: Vec<[Vec3; 2]>,
    burgers: Vec<f64>,
}

impl PolyhedralCurrent {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            points: Vec::new(),
            burgers: Vec::new(),
        }
    }

    pub fn with_capacity(dim: usize, segments: usize) -> Self {
        Self {
            dim,
            points: Vec::with_capacity(segments),
            burgers: Vec::with_capacity(segments * dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn push(&mut self, start: Vec3, end: Vec3, burgers: &[f64]) -> Result<(), CurrentError> {
        if burgers.len() != self.dim {
            return Err(CurrentError::Dimension {
                expected: self.dim,
                got: burgers.len(),
            });
        }
        if start == end {
            return Err(CurrentError::ZeroLength { index: self.len() });
        }
        self.points.push([start, end]);
        self.burgers.extend_from_slice(burgers);
        Ok(())
    }

    pub fn segment(&self, i: usize) -> SegmentRef<'_> {
        let [start, end] = self.points[i];
        SegmentRef {
            start,
            end,
            burgers: &self.burgers[i * self.dim..(i + 1) * self.dim],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = SegmentRef<'_>> + '_ {
        (0..self.len()).map(move |i| self.segment(i))
    }

    /// Measure sum: concatenates the segment lists.
    pub fn append(&mut self, other: &PolyhedralCurrent) {
        assert_eq!(self.dim, other.dim, "dimension mismatch in append");
        self.points.extend_from_slice(&other.points);
        self.burgers.extend_from_slice(&other.burgers);
    }

    pub fn scaled(&self, lambda: f64) -> PolyhedralCurrent {
        let mut out = self.clone();
        for b in &mut out.burgers {
            *b *= lambda;
        }
        out
    }

    /// Stores every segment with its lexicographically smaller endpoint first,
    /// negating the burgers vector of reversed segments.
    pub fn canonicalize(&mut self) {
        for i in 0..self.points.len() {
            let [a, b] = self.points[i];
            if lex_cmp(&b, &a).is_lt() {
                self.points[i] = [b, a];
                for v in &mut self.burgers[i * self.dim..(i + 1) * self.dim] {
                    *v = -*v;
                }
            }
        }
    }

    pub fn canonical(&self) -> PolyhedralCurrent {
        let mut c = self.clone();
        c.canonicalize();
        c
    }

    /// `‖μ‖ = Σ |b| · length`.
    pub fn total_variation(&self) -> f64 {
        self.iter().map(|s| s.burgers_norm() * s.length()).sum()
    }

    /// `‖μ‖(K)`.
    pub fn total_variation_on<R: Region + ?Sized>(&self, window: &R) -> f64 {
        self.iter()
            .map(|s| s.burgers_norm() * window.clipped_length(&s.start, &s.end))
            .sum()
    }

    /// Restriction `μ⌞K`, cutting segments at the boundary of `K`.
    pub fn clipped<R: Region + ?Sized>(&self, window: &R) -> PolyhedralCurrent {
        let mut out = PolyhedralCurrent::new(self.dim);
        for s in self.iter() {
            for (s0, s1) in window.clip_intervals(&s.start, &s.end) {
                let d = s.end - s.start;
                let (a, b) = (s.start + d * s0, s.start + d * s1);
                if a != b {
                    out.points.push([a, b]);
                    out.burgers.extend_from_slice(s.burgers);
                }
            }
        }
        out
    }

    /// Total length of the support, counted with multiplicity of segments.
    pub fn total_length(&self) -> f64 {
        self.iter().map(|s| s.length()).sum()
    }

    /// `Lattice(σ)` if all burgers are in `σ Z^N` within relative tolerance
    /// `tol`, otherwise `Cone` if all lie in the integer cone, else `General`.
    pub fn multiplicity_class(&self, sigma: Option<f64>, tol: f64) -> MultiplicityClass {
        if let Some(s) = sigma {
            let on_lattice = self.burgers.iter().all(|b| {
                let q = b / s;
                (q - q.round()).abs() <= tol * q.abs().max(1.0)
            });
            if on_lattice {
                return MultiplicityClass::Lattice(s);
            }
        }
        let in_cone = (0..self.len()).all(|i| {
            let b = self.segment(i).burgers;
            integer_direction(b, 1024, 1e-9).is_some()
        });
        if in_cone {
            MultiplicityClass::Cone
        } else {
            MultiplicityClass::General
        }
    }

    /// Merges segments with the same quantized endpoints (in either
    /// orientation) by summing their burgers vectors, dropping those whose
    /// sum vanishes. Output segments run from the smaller node key to the
    /// larger one, sorted by key.
    pub fn merged(&self, quantum: f64) -> Result<PolyhedralCurrent, CurrentError> {
        let mut nodes = NodeMap::new(quantum);
        let mut edges: std::collections::BTreeMap<(NodeKey, NodeKey), Vec<f64>> =
            Default::default();
        for s in self.iter() {
            let ia = nodes.insert(&s.start)?;
            let ib = nodes.insert(&s.end)?;
            let (ka, kb) = (nodes.key(ia), nodes.key(ib));
            let (key, sign) = if ka <= kb { ((ka, kb), 1.0) } else { ((kb, ka), -1.0) };
            let acc = edges.entry(key).or_insert_with(|| vec![0.0; self.dim]);
            for (a, v) in acc.iter_mut().zip(s.burgers) {
                *a += sign * v;
            }
        }
        let mut out = PolyhedralCurrent::with_capacity(self.dim, edges.len());
        for ((ka, kb), b) in edges {
            if ka == kb || b.iter().all(|v| *v == 0.0) {
                continue;
            }
            let pa = nodes.point(nodes.index(&ka).expect("known node"));
            let pb = nodes.point(nodes.index(&kb).expect("known node"));
            out.push(pa, pb, &b)?;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: f64, y: f64, z: f64) -> Vec3 {
        Vec3::new(x, y, z)
    }

    #[test]
    fn total_variation_of_unit_segment() {
        let mut c = PolyhedralCurrent::new(3);
        c.push(v(0.0, 0.0, 0.0), v(1.0, 0.0, 0.0), &[3.0, 4.0, 0.0]).unwrap();
        assert_eq!(c.total_variation(), 5.0);
        assert_eq!(PolyhedralCurrent::new(3).total_variation(), 0.0);
    }

    #[test]
    fn zero_length_and_dimension_rejected() {
        let mut c = PolyhedralCurrent::new(2);
        assert!(c.push(v(0.0, 0.0, 0.0), v(0.0, 0.0, 0.0), &[1.0, 0.0]).is_err());
        assert!(c.push(v(0.0, 0.0, 0.0), v(1.0, 0.0, 0.0), &[1.0]).is_err());
    }

    #[test]
    fn canonicalization_reverses_and_negates() {
        let mut c = PolyhedralCurrent::new(1);
        c.push(v(1.0, 0.0, 0.0), v(0.0, 0.0, 0.0), &[2.0]).unwrap();
        c.canonicalize();
        let s = c.segment(0);
        assert_eq!(s.start, v(0.0, 0.0, 0.0));
        assert_eq!(s.burgers, &[-2.0]);
    }

    #[test]
    fn merging_cancels_opposite_copies() {
        let mut c = PolyhedralCurrent::new(1);
        c.push(v(0.0, 0.0, 0.0), v(1.0, 0.0, 0.0), &[2.0]).unwrap();
        c.push(v(1.0, 0.0, 0.0), v(0.0, 0.0, 0.0), &[2.0]).unwrap();
        c.push(v(0.0, 0.0, 0.0), v(0.0, 1.0, 0.0), &[1.0]).unwrap();
        c.push(v(0.0, 0.0, 0.0), v(0.0, 1.0, 0.0), &[1.0]).unwrap();
        let m = c.merged(1e-9).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.segment(0).burgers, &[2.0]);
    }

    #[test]
    fn multiplicity_classes() {
        let mut c = PolyhedralCurrent::new(2);
        c.push(v(0.0, 0.0, 0.0), v(1.0, 0.0, 0.0), &[0.5, -1.0]).unwrap();
        assert_eq!(c.multiplicity_class(Some(0.5), 1e-12), MultiplicityClass::Lattice(0.5));
        assert_eq!(c.multiplicity_class(Some(0.3), 1e-12), MultiplicityClass::Cone);
        c.push(v(0.0, 0.0, 0.0), v(0.0, 1.0, 0.0), &[1.0, 2.0_f64.sqrt()]).unwrap();
        assert_eq!(c.multiplicity_class(None, 1e-12), MultiplicityClass::General);
    }
}
