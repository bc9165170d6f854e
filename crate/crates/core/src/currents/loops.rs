use std::collections::{BTreeMap, HashMap};

use super::{CurrentError, NodeKey, NodeMap, PolyhedralCurrent};
use crate::geometry::Vec3;

/// A polygonal line with constant burgers vector. Closed loops repeat no
/// vertex; open ones run between two exempt nodes (outside the region where
/// divergence is tested).
#[derive(Debug, Clone, PartialEq)]
pub struct Loop {
    pub nodes: Vec<Vec3>,
    pub closed: bool,
    pub burgers: Vec<f64>,
}

impl Loop {
    pub fn segments(&self) -> impl Iterator<Item = (Vec3, Vec3)> + '_ {
        let n = self.nodes.len();
        let count = if self.closed { n } else { n.saturating_sub(1) };
        (0..count).map(move |i| (self.nodes[i], self.nodes[(i + 1) % n]))
    }

    pub fn length(&self) -> f64 {
        self.segments().map(|(a, b)| (b - a).norm()).sum()
    }

    /// Componentwise `σ ⌊θ/σ⌋`.
    pub fn rounded(&self, sigma: f64) -> Loop {
        Loop {
            nodes: self.nodes.clone(),
            closed: self.closed,
            burgers: self.burgers.iter().map(|b| sigma * (b / sigma).floor()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub dim: usize,
    pub loops: Vec<Loop>,
    /// Largest flow left on an edge and discarded as round-off.
    pub dust: f64,
}

impl Decomposition {
    pub fn total_length(&self) -> f64 {
        self.loops.iter().map(Loop::length).sum()
    }
}

struct FlowEdge {
    to: usize,
    flow: f64,
}

/// Splits a divergence-free current into loops with constant burgers.
///
/// Each coordinate of the burgers vectors is treated as a real edge flow on
/// the graph of quantized nodes, and cycles are peeled by walking along the
/// lexicographically first out-edge until a node repeats. Nodes for which
/// `exempt` holds are joined to a virtual node, so flow entering or leaving
/// through them comes out as open paths. Loops that end up on the same node
/// cycle are merged, so a single loop with burgers `b` is returned as one
/// loop even when several coordinates of `b` are nonzero.
///
/// Flows below `rel_tol × max |flow|` are treated as zero; an interior node
/// whose imbalance exceeds that threshold is an error.
pub fn decompose_into_loops<E>(
    mu: &PolyhedralCurrent,
    quantum: f64,
    exempt: E,
    rel_tol: f64,
) -> Result<Decomposition, CurrentError>
where
    E: Fn(&Vec3) -> bool,
{
    let dim = mu.dim();
    let mut nodes = NodeMap::new(quantum);
    let mut edges: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for s in mu.iter() {
        let a = nodes.insert(&s.start)?;
        let b = nodes.insert(&s.end)?;
        if a == b {
            continue;
        }
        let (key, sign) = if a < b { ((a, b), 1.0) } else { ((b, a), -1.0) };
        let acc = edges.entry(key).or_insert_with(|| vec![0.0; dim]);
        for (x, v) in acc.iter_mut().zip(s.burgers) {
            *x += sign * v;
        }
    }
    let n = nodes.len();
    let virt = n;
    // Neighbour ordering by node key, the virtual node last.
    let order_key = |i: usize| -> (bool, NodeKey) {
        if i == virt {
            (true, [0; 3])
        } else {
            (false, nodes.key(i))
        }
    };
    let is_exempt: Vec<bool> = (0..n).map(|i| exempt(&nodes.point(i))).collect();
    let mut start_order: Vec<usize> = (0..n).collect();
    start_order.sort_by_key(|&i| nodes.key(i));
    start_order.push(virt);

    let mut cycles: Vec<(Vec<usize>, Vec<f64>)> = Vec::new();
    let mut cycle_index: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut dust: f64 = 0.0;

    for c in 0..dim {
        let fmax = edges.values().fold(0.0_f64, |m, b| m.max(b[c].abs()));
        if fmax == 0.0 {
            continue;
        }
        let thr = rel_tol * fmax;
        let mut out: Vec<Vec<FlowEdge>> = (0..=n).map(|_| Vec::new()).collect();
        let mut balance = vec![0.0; n];
        for (&(a, b), v) in &edges {
            let f = v[c];
            if f.abs() <= thr {
                dust = dust.max(f.abs());
                continue;
            }
            let (from, to, f) = if f > 0.0 { (a, b, f) } else { (b, a, -f) };
            out[from].push(FlowEdge { to, flow: f });
            balance[from] += f;
            balance[to] -= f;
        }
        for (i, &bal) in balance.iter().enumerate() {
            if bal.abs() <= thr {
                continue;
            }
            if !is_exempt[i] {
                let p = nodes.point(i);
                return Err(CurrentError::Imbalanced {
                    node: [p.x, p.y, p.z],
                    residual: bal,
                });
            }
            if bal > 0.0 {
                out[virt].push(FlowEdge { to: i, flow: bal });
            } else {
                out[i].push(FlowEdge { to: virt, flow: -bal });
            }
        }
        for list in &mut out {
            list.sort_by_key(|e| order_key(e.to));
        }
        let mut ptr = vec![0usize; n + 1];
        let mut pos = vec![usize::MAX; n + 1];
        // Walk state: nodes on the current path and the edge used to leave each.
        let mut path: Vec<usize> = Vec::new();
        let mut via: Vec<usize> = Vec::new();
        for &s in &start_order {
            loop {
                if path.is_empty() {
                    if next_edge(&out[s], &mut ptr[s], thr).is_none() {
                        break;
                    }
                    path.push(s);
                    pos[s] = 0;
                }
                let u = *path.last().expect("nonempty path");
                match next_edge(&out[u], &mut ptr[u], thr) {
                    None => {
                        // Dead end: the flow into `u` exceeds what leaves it
                        // only by round-off. Drop the last edge and back up.
                        path.pop();
                        pos[u] = usize::MAX;
                        if let Some(e) = via.pop() {
                            let prev = *path.last().expect("edge has a tail");
                            dust = dust.max(out[prev][e].flow);
                            out[prev][e].flow = 0.0;
                        }
                    }
                    Some(e) => {
                        let v = out[u][e].to;
                        via.push(e);
                        if pos[v] == usize::MAX {
                            pos[v] = path.len();
                            path.push(v);
                            continue;
                        }
                        let start = pos[v];
                        let m = (start..path.len())
                            .map(|i| out[path[i]][via[i]].flow)
                            .fold(f64::INFINITY, f64::min);
                        for i in start..path.len() {
                            let fe = &mut out[path[i]][via[i]];
                            fe.flow -= m;
                            if fe.flow <= thr {
                                dust = dust.max(fe.flow.abs());
                                fe.flow = 0.0;
                            }
                        }
                        let cyc: Vec<usize> = path[start..].to_vec();
                        push_cycle(&mut cycles, &mut cycle_index, cyc, c, m, dim, virt);
                        for &w in &path[start + 1..] {
                            pos[w] = usize::MAX;
                        }
                        path.truncate(start + 1);
                        via.truncate(start);
                    }
                }
            }
            for &w in &path {
                pos[w] = usize::MAX;
            }
            path.clear();
            via.clear();
        }
    }

    let loops = cycles
        .into_iter()
        .map(|(cyc, burgers)| {
            if let Some(k) = cyc.iter().position(|&i| i == virt) {
                let mut seq: Vec<usize> = cyc[k + 1..].to_vec();
                seq.extend_from_slice(&cyc[..k]);
                Loop {
                    nodes: seq.into_iter().map(|i| nodes.point(i)).collect(),
                    closed: false,
                    burgers,
                }
            } else {
                Loop {
                    nodes: cyc.into_iter().map(|i| nodes.point(i)).collect(),
                    closed: true,
                    burgers,
                }
            }
        })
        .collect();
    Ok(Decomposition { dim, loops, dust })
}

fn next_edge(list: &[FlowEdge], ptr: &mut usize, thr: f64) -> Option<usize> {
    while *ptr < list.len() && list[*ptr].flow <= thr {
        *ptr += 1;
    }
    (*ptr < list.len()).then_some(*ptr)
}

fn push_cycle(
    cycles: &mut Vec<(Vec<usize>, Vec<f64>)>,
    index: &mut HashMap<Vec<usize>, usize>,
    mut cyc: Vec<usize>,
    component: usize,
    flow: f64,
    dim: usize,
    virt: usize,
) {
    // Rotate to a canonical starting node and pick the smaller of the two
    // orientations, so a cycle and its reverse share a key.
    let first = if let Some(k) = cyc.iter().position(|&i| i == virt) {
        k
    } else {
        let min = *cyc.iter().min().expect("nonempty cycle");
        cyc.iter().position(|&i| i == min).expect("min present")
    };
    cyc.rotate_left(first);
    let mut flow = flow;
    let mut rev = cyc.clone();
    rev[1..].reverse();
    if rev < cyc {
        cyc = rev;
        flow = -flow;
    }
    match index.get(&cyc) {
        Some(&i) => cycles[i].1[component] += flow,
        None => {
            let mut b = vec![0.0; dim];
            b[component] = flow;
            index.insert(cyc.clone(), cycles.len());
            cycles.push((cyc, b));
        }
    }
}

/// `Σ_i θ_i ⊗ t_i H¹⌞Γ_i` with coincident segments merged.
pub fn resum_loops(
    loops: &[Loop],
    dim: usize,
    quantum: f64,
) -> Result<PolyhedralCurrent, CurrentError> {
    let mut c = PolyhedralCurrent::new(dim);
    for l in loops {
        if l.burgers.iter().all(|b| *b == 0.0) {
            continue;
        }
        for (a, b) in l.segments() {
            c.push(a, b, &l.burgers)?;
        }
    }
    c.merged(quantum)
}

/// Rounds every loop to `σ ⌊θ_i/σ⌋` and then re-sums. Rounding happens per
/// loop before summation; rounding the summed current instead can differ.
pub fn round_multiplicities(
    decomposition: &Decomposition,
    sigma: f64,
    quantum: f64,
) -> Result<PolyhedralCurrent, CurrentError> {
    if !(sigma > 0.0) {
        return Err(CurrentError::BadSigma(sigma));
    }
    let rounded: Vec<Loop> = decomposition.loops.iter().map(|l| l.rounded(sigma)).collect();
    resum_loops(&rounded, decomposition.dim, quantum)
}

#[cfg(test)]
mod tests {
    use super::super::{check_divergence_free, MultiplicityClass};
    use super::*;
    use crate::geometry::Aabb;

    fn v(x: f64, y: f64, z: f64) -> Vec3 {
        Vec3::new(x, y, z)
    }

    fn polygon(c: &mut PolyhedralCurrent, pts: &[Vec3], b: &[f64]) {
        for i in 0..pts.len() {
            c.push(pts[i], pts[(i + 1) % pts.len()], b).unwrap();
        }
    }

    fn same_measure(a: &PolyhedralCurrent, b: &PolyhedralCurrent) -> bool {
        let am = a.merged(1e-9).unwrap();
        let bm = b.merged(1e-9).unwrap();
        am.len() == bm.len()
            && am.iter().zip(bm.iter()).all(|(x, y)| {
                x.start == y.start
                    && x.end == y.end
                    && x.burgers.iter().zip(y.burgers).all(|(p, q)| (p - q).abs() < 1e-12)
            })
    }

    #[test]
    fn single_square_is_one_loop() {
        let mut c = PolyhedralCurrent::new(3);
        let sq = [v(0.0, 0.0, 0.0), v(1.0, 0.0, 0.0), v(1.0, 1.0, 0.0), v(0.0, 1.0, 0.0)];
        polygon(&mut c, &sq, &[1.0, -2.0, 0.5]);
        let d = decompose_into_loops(&c, 1e-9, |_| false, 1e-12).unwrap();
        assert_eq!(d.loops.len(), 1);
        assert!(d.loops[0].closed);
        let back = resum_loops(&d.loops, 3, 1e-9).unwrap();
        assert!(same_measure(&back, &c));
    }

    #[test]
    fn squares_sharing_an_edge() {
        let mut c = PolyhedralCurrent::new(1);
        polygon(
            &mut c,
            &[v(0.0, 0.0, 0.0), v(1.0, 0.0, 0.0), v(1.0, 1.0, 0.0), v(0.0, 1.0, 0.0)],
            &[1.0],
        );
        polygon(
            &mut c,
            &[v(1.0, 0.0, 0.0), v(2.0, 0.0, 0.0), v(2.0, 1.0, 0.0), v(1.0, 1.0, 0.0)],
            &[1.0],
        );
        let d = decompose_into_loops(&c, 1e-9, |_| false, 1e-12).unwrap();
        assert!(!d.loops.is_empty() && d.loops.len() <= 2);
        assert!(same_measure(&resum_loops(&d.loops, 1, 1e-9).unwrap(), &c));
    }

    #[test]
    fn figure_eight_with_multiplicities() {
        let mut c = PolyhedralCurrent::new(1);
        let o = v(0.0, 0.0, 0.0);
        polygon(&mut c, &[o, v(1.0, 0.0, 0.0), v(1.0, 1.0, 0.0)], &[2.0]);
        polygon(&mut c, &[o, v(-1.0, 0.0, 0.0), v(-1.0, -1.0, 0.0)], &[1.0]);
        let d = decompose_into_loops(&c, 1e-9, |_| false, 1e-12).unwrap();
        let back = resum_loops(&d.loops, 1, 1e-9).unwrap();
        assert!(same_measure(&back, &c));
        let mut mults: Vec<f64> = d.loops.iter().map(|l| l.burgers[0]).collect();
        mults.sort_by(f64::total_cmp);
        assert_eq!(mults, vec![1.0, 2.0]);
    }

    #[test]
    fn open_paths_between_exempt_nodes() {
        let omega = Aabb::new([0.0; 3], [1.0; 3]);
        let mut c = PolyhedralCurrent::new(1);
        c.push(v(0.0, 0.5, 0.5), v(0.5, 0.5, 0.5), &[1.0]).unwrap();
        c.push(v(0.5, 0.5, 0.5), v(1.0, 0.5, 0.5), &[1.0]).unwrap();
        let d = decompose_into_loops(&c, 1e-9, |p| !omega.contains_open(p, 1e-9), 1e-12).unwrap();
        assert_eq!(d.loops.len(), 1);
        assert!(!d.loops[0].closed);
        assert_eq!(d.loops[0].nodes.len(), 3);
        // Without exemption the same input is rejected.
        assert!(matches!(
            decompose_into_loops(&c, 1e-9, |_| false, 1e-12),
            Err(CurrentError::Imbalanced { .. })
        ));
    }

    #[test]
    fn floor_rounding() {
        let l = Loop {
            nodes: vec![v(0.0, 0.0, 0.0), v(1.0, 0.0, 0.0), v(0.0, 1.0, 0.0)],
            closed: true,
            burgers: vec![1.7, -0.3, 0.0],
        };
        assert_eq!(l.rounded(0.5).burgers, vec![1.5, -0.5, 0.0]);
    }

    #[test]
    fn rounded_current_is_closed_and_on_lattice() {
        let mut c = PolyhedralCurrent::new(2);
        polygon(
            &mut c,
            &[v(0.2, 0.2, 0.5), v(0.8, 0.2, 0.5), v(0.8, 0.8, 0.5)],
            &[2.0_f64.sqrt(), 0.3],
        );
        let d = decompose_into_loops(&c, 1e-9, |_| false, 1e-12).unwrap();
        let omega = Aabb::new([0.0; 3], [1.0; 3]);
        for j in 1..=10 {
            let sigma = 2f64.powi(-j);
            let r = round_multiplicities(&d, sigma, 1e-9).unwrap();
            assert!(matches!(r.multiplicity_class(Some(sigma), 1e-12), MultiplicityClass::Lattice(_)));
            assert!(check_divergence_free(&r, &omega, 1e-9, 1e-12).unwrap().divergence_free);
            let gap = (c.total_variation() - r.total_variation()).abs();
            assert!(gap <= sigma * 2.0_f64.sqrt() * d.total_length());
        }
        assert!(round_multiplicities(&d, 0.0, 1e-9).is_err());
    }
}
