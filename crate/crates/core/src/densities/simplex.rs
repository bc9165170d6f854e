use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("infeasible: phase-one residual {0:e}")]
    Infeasible(f64),
    #[error("unbounded")]
    Unbounded,
    #[error("iteration limit {0} reached")]
    IterationLimit(usize),
    #[error("basis became singular")]
    Singular,
}

/// Entering-variable rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pricing {
    /// Smallest index with negative reduced cost; never cycles.
    Bland,
    /// Most negative reduced cost, switching to Bland's rule after a run of
    /// degenerate pivots.
    Dantzig,
}

/// `min cᵀx  s.t.  A x = b, x ≥ 0` with dense columns.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub rows: usize,
    pub columns: Vec<Vec<f64>>,
    pub costs: Vec<f64>,
    pub rhs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    /// Nonzero basic structural variables as `(column, value)`.
    pub support: Vec<(usize, f64)>,
    pub objective: f64,
    pub iterations: usize,
}

const REFACTOR_EVERY: usize = 64;
const DEGENERATE_RUN: usize = 32;

struct State<'a> {
    lp: &'a LinearProgram,
    sign: Vec<f64>,
    basis: Vec<usize>,
    binv: DMatrix<f64>,
    xb: Vec<f64>,
    rhs: Vec<f64>,
}

impl State<'_> {
    fn n(&self) -> usize {
        self.lp.columns.len()
    }

    fn column(&self, j: usize, out: &mut [f64]) {
        let m = self.lp.rows;
        if j < self.n() {
            for i in 0..m {
                out[i] = self.sign[i] * self.lp.columns[j][i];
            }
        } else {
            out.iter_mut().for_each(|v| *v = 0.0);
            out[j - self.n()] = 1.0;
        }
    }

    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.lp.rows;
        let mut b = DMatrix::zeros(m, m);
        let mut col = vec![0.0; m];
        for (k, &j) in self.basis.iter().enumerate() {
            self.column(j, &mut col);
            for i in 0..m {
                b[(i, k)] = col[i];
            }
        }
        self.binv = b.try_inverse().ok_or(LpError::Singular)?;
        for i in 0..m {
            self.xb[i] = (0..m).map(|k| self.binv[(i, k)] * self.rhs[k]).sum();
        }
        Ok(())
    }
}

impl LinearProgram {
    pub fn solve(&self, tol: f64, pricing: Pricing, max_iter: usize) -> Result<LpSolution, LpError> {
        let m = self.rows;
        let n = self.columns.len();
        let sign: Vec<f64> = self.rhs.iter().map(|&v| if v < 0.0 { -1.0 } else { 1.0 }).collect();
        let rhs: Vec<f64> = self.rhs.iter().zip(&sign).map(|(v, s)| v * s).collect();
        let mut st = State {
            lp: self,
            sign,
            basis: (n..n + m).collect(),
            binv: DMatrix::identity(m, m),
            xb: rhs.clone(),
            rhs,
        };
        let scale = 1.0 + st.rhs.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let mut iterations = 0;

        let phase1: Vec<f64> = (0..n + m).map(|j| if j < n { 0.0 } else { 1.0 }).collect();
        iterations += run_phase(&mut st, &phase1, true, tol, pricing, max_iter)?;
        let residual: f64 = st
            .basis
            .iter()
            .zip(&st.xb)
            .filter(|(&j, _)| j >= n)
            .map(|(_, v)| v.abs())
            .sum();
        if residual > tol * scale {
            return Err(LpError::Infeasible(residual));
        }
        let phase2: Vec<f64> = (0..n + m)
            .map(|j| if j < n { self.costs[j] } else { 0.0 })
            .collect();
        iterations += run_phase(&mut st, &phase2, false, tol, pricing, max_iter.saturating_sub(iterations))?;
        st.refactor()?;
        let mut support = Vec::new();
        let mut objective = 0.0;
        for (&j, &v) in st.basis.iter().zip(&st.xb) {
            if j < n && v > tol * scale {
                support.push((j, v));
                objective += self.costs[j] * v;
            }
        }
        support.sort_by_key(|e| e.0);
        Ok(LpSolution {
            support,
            objective,
            iterations,
        })
    }
}

fn run_phase(
    st: &mut State<'_>,
    cost: &[f64],
    phase_one: bool,
    tol: f64,
    pricing: Pricing,
    max_iter: usize,
) -> Result<usize, LpError> {
    let m = st.lp.rows;
    let n = st.n();
    let cmax = cost.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
    let mut col = vec![0.0; m];
    let mut in_basis = vec![false; n + m];
    for &j in &st.basis {
        in_basis[j] = true;
    }
    let mut degenerate_run = 0usize;
    for it in 0..max_iter {
        if it > 0 && it % REFACTOR_EVERY == 0 {
            st.refactor()?;
        }
        // Duals y = c_Bᵀ B⁻¹.
        let mut y = vec![0.0; m];
        for (k, &j) in st.basis.iter().enumerate() {
            let cb = cost[j];
            if cb != 0.0 {
                for i in 0..m {
                    y[i] += cb * st.binv[(k, i)];
                }
            }
        }
        let use_bland = pricing == Pricing::Bland || degenerate_run >= DEGENERATE_RUN;
        let mut entering = None;
        let mut best = -tol * cmax;
        let candidates = if phase_one { n + m } else { n };
        for j in 0..candidates {
            if in_basis[j] {
                continue;
            }
            st.column(j, &mut col);
            let r = cost[j] - y.iter().zip(&col).map(|(a, b)| a * b).sum::<f64>();
            if r < best {
                entering = Some(j);
                if use_bland {
                    break;
                }
                best = r;
            }
        }
        let Some(q) = entering else {
            return Ok(it);
        };
        st.column(q, &mut col);
        let d: Vec<f64> = (0..m)
            .map(|i| (0..m).map(|k| st.binv[(i, k)] * col[k]).sum())
            .collect();
        // Ratio test; basic artificials in phase two must stay at zero, so any
        // nonzero entry in their row forces them out first.
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            let forced = !phase_one && st.basis[i] >= n && d[i].abs() > tol;
            if !(d[i] > tol || forced) {
                continue;
            }
            let ratio = if forced { 0.0 } else { st.xb[i].max(0.0) / d[i] };
            let better = match leave {
                None => true,
                Some((r, best_ratio)) => {
                    ratio < best_ratio - tol * 1e-3
                        || (ratio <= best_ratio + tol * 1e-3 && st.basis[i] < st.basis[r])
                }
            };
            if better {
                leave = Some((i, ratio));
            }
        }
        let Some((r, theta)) = leave else {
            return Err(LpError::Unbounded);
        };
        degenerate_run = if theta <= tol { degenerate_run + 1 } else { 0 };
        for i in 0..m {
            st.xb[i] -= theta * d[i];
        }
        st.xb[r] = theta;
        let piv = d[r];
        for k in 0..m {
            st.binv[(r, k)] /= piv;
        }
        for i in 0..m {
            if i != r && d[i] != 0.0 {
                let f = d[i];
                for k in 0..m {
                    let v = st.binv[(r, k)];
                    st.binv[(i, k)] -= f * v;
                }
            }
        }
        in_basis[st.basis[r]] = false;
        in_basis[q] = true;
        st.basis[r] = q;
    }
    Err(LpError::IterationLimit(max_iter))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_lp() {
        // min x + 2y + 3z  s.t. x + y + z = 1, x − y = 0.
        let lp = LinearProgram {
            rows: 2,
            columns: vec![vec![1.0, 1.0], vec![1.0, -1.0], vec![1.0, 0.0]],
            costs: vec![1.0, 2.0, 3.0],
            rhs: vec![1.0, 0.0],
        };
        for p in [Pricing::Bland, Pricing::Dantzig] {
            let s = lp.solve(1e-9, p, 100).unwrap();
            assert!((s.objective - 1.5).abs() < 1e-12);
            assert_eq!(s.support.len(), 2);
        }
    }

    #[test]
    fn infeasible_detected() {
        let lp = LinearProgram {
            rows: 1,
            columns: vec![vec![1.0]],
            costs: vec![1.0],
            rhs: vec![-1.0],
        };
        assert!(matches!(lp.solve(1e-9, Pricing::Bland, 100), Err(LpError::Infeasible(_))));
    }

    #[test]
    fn unbounded_detected() {
        // x + y − z = 1 with cost x + y − 2z: z can grow with y.
        let lp = LinearProgram {
            rows: 1,
            columns: vec![vec![1.0], vec![1.0], vec![-1.0]],
            costs: vec![1.0, 1.0, -2.0],
            rhs: vec![1.0],
        };
        assert_eq!(lp.solve(1e-9, Pricing::Bland, 100), Err(LpError::Unbounded));
    }

    #[test]
    fn degenerate_problem_terminates() {
        // Classic cycling example (Beale) in equality form with slacks.
        let cols = vec![
            vec![0.25, 0.5, 0.0],
            vec![-8.0, -12.0, 0.0],
            vec![-1.0, -0.5, 1.0],
            vec![9.0, 3.0, 0.0],
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ];
        let lp = LinearProgram {
            rows: 3,
            columns: cols,
            costs: vec![-0.75, 20.0, -0.5, 6.0, 0.0, 0.0, 0.0],
            rhs: vec![0.0, 0.0, 1.0],
        };
        let s = lp.solve(1e-9, Pricing::Bland, 1000).unwrap();
        assert!((s.objective + 1.25).abs() < 1e-9);
    }
}
