use std::collections::{BTreeMap, HashMap};

use super::{CurrentError, PolyhedralCurrent};
use crate::geometry::{Aabb, Region, Vec3};

/// Integer grid coordinates of a node after snapping to the quantum.
pub type NodeKey = [i64; 3];

/// Default node quantum: `2⁻³⁰ ×` the domain diameter.
pub fn default_quantum(domain: &Aabb) -> f64 {
    domain.diameter() * 2f64.powi(-30)
}

/// Deduplicates points on a grid of spacing `quantum`.
///
/// Bit-identical points merge. Two different points that fall in the same
/// or a neighbouring cell within one quantum of each other are reported as
/// an ambiguous merge instead of being silently snapped together.
#[derive(Debug, Clone)]
pub struct NodeMap {
    quantum: f64,
    index: HashMap<NodeKey, usize>,
    points: Vec<Vec3>,
    keys: Vec<NodeKey>,
}

impl NodeMap {
    pub fn new(quantum: f64) -> Self {
        assert!(quantum > 0.0, "node quantum must be positive");
        Self {
            quantum,
            index: HashMap::new(),
            points: Vec::new(),
            keys: Vec::new(),
        }
    }

    pub fn quantum(&self) -> f64 {
        self.quantum
    }

    pub fn key_of(&self, p: &Vec3) -> NodeKey {
        [0, 1, 2].map(|a| (p[a] / self.quantum).round() as i64)
    }

    pub fn insert(&mut self, p: &Vec3) -> Result<usize, CurrentError> {
        let key = self.key_of(p);
        if let Some(&i) = self.index.get(&key) {
            let q = self.points[i];
            if q == *p {
                return Ok(i);
            }
            return Err(self.ambiguous(&q, p));
        }
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if dx == 0 && dy == 0 && dz == 0 {
                        continue;
                    }
                    let nk = [key[0] + dx, key[1] + dy, key[2] + dz];
                    if let Some(&i) = self.index.get(&nk) {
                        let q = self.points[i];
                        if (q - p).norm() < self.quantum {
                            return Err(self.ambiguous(&q, p));
                        }
                    }
                }
            }
        }
        let i = self.points.len();
        self.index.insert(key, i);
        self.points.push(*p);
        self.keys.push(key);
        Ok(i)
    }

    fn ambiguous(&self, a: &Vec3, b: &Vec3) -> CurrentError {
        CurrentError::AmbiguousNode {
            a: [a.x, a.y, a.z],
            b: [b.x, b.y, b.z],
            quantum: self.quantum,
        }
    }

    pub fn index(&self, key: &NodeKey) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn key(&self, i: usize) -> NodeKey {
        self.keys[i]
    }

    pub fn point(&self, i: usize) -> Vec3 {
        self.points[i]
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LedgerEntry {
    pub point: Vec3,
    pub mass: Vec<f64>,
}

impl LedgerEntry {
    pub fn norm(&self) -> f64 {
        self.mass.iter().map(|m| m * m).sum::<f64>().sqrt()
    }
}

/// Net vector mass at each node, with `+b` at the start and `−b` at the end
/// of every segment (so `Div μ = Σ mass δ_node`).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BoundaryLedger {
    pub dim: usize,
    pub entries: BTreeMap<NodeKey, LedgerEntry>,
}

impl BoundaryLedger {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, p: &Vec3, quantum: f64) -> Option<&LedgerEntry> {
        let key = [0, 1, 2].map(|a| (p[a] / quantum).round() as i64);
        self.entries.get(&key)
    }

    pub fn iter(&self) -> impl Iterator<Item = &LedgerEntry> {
        self.entries.values()
    }
}

/// Accumulates the ledger, dropping entries whose mass norm is at most
/// `mass_tol`.
pub fn boundary_ledger(
    mu: &PolyhedralCurrent,
    quantum: f64,
    mass_tol: f64,
) -> Result<BoundaryLedger, CurrentError> {
    let dim = mu.dim();
    let mut nodes = NodeMap::new(quantum);
    let mut mass: Vec<Vec<f64>> = Vec::new();
    for s in mu.iter() {
        for (p, sign) in [(&s.start, 1.0), (&s.end, -1.0)] {
            let i = nodes.insert(p)?;
            if i == mass.len() {
                mass.push(vec![0.0; dim]);
            }
            for (m, b) in mass[i].iter_mut().zip(s.burgers) {
                *m += sign * b;
            }
        }
    }
    let mut entries = BTreeMap::new();
    for (i, m) in mass.into_iter().enumerate() {
        let entry = LedgerEntry {
            point: nodes.point(i),
            mass: m,
        };
        if entry.norm() > mass_tol {
            entries.insert(nodes.key(i), entry);
        }
    }
    Ok(BoundaryLedger { dim, entries })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceReport {
    pub divergence_free: bool,
    /// Largest interior mass norm and where it sits.
    pub worst: Option<(Vec3, f64)>,
    /// Interior nodes above the tolerance.
    pub offending: Vec<(Vec3, Vec<f64>)>,
    pub interior_nodes: usize,
    pub exempt_nodes: usize,
}

/// Divergence test on the open set `region`: every ledger node strictly
/// inside (farther than one quantum from the boundary) must carry mass of
/// norm at most `tol`. Nodes on or outside the boundary are exempt.
pub fn check_divergence_free(
    mu: &PolyhedralCurrent,
    region: &(impl Region + ?Sized),
    quantum: f64,
    tol: f64,
) -> Result<DivergenceReport, CurrentError> {
    let ledger = boundary_ledger(mu, quantum, 0.0)?;
    let mut report = DivergenceReport {
        divergence_free: true,
        worst: None,
        offending: Vec::new(),
        interior_nodes: 0,
        exempt_nodes: 0,
    };
    for e in ledger.iter() {
        if !region.contains_open(&e.point, quantum) {
            report.exempt_nodes += 1;
            continue;
        }
        report.interior_nodes += 1;
        let n = e.norm();
        if report.worst.is_none_or(|(_, w)| n > w) {
            report.worst = Some((e.point, n));
        }
        if n > tol {
            report.divergence_free = false;
            report.offending.push((e.point, e.mass.clone()));
        }
    }
    Ok(report)
}
