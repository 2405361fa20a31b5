//! Dense two-phase tableau simplex for small linear programs
//! `maximize c'x  s.t.  A x {<=, >=, =} b,  x >= 0`,
//! with dual values and an optimality certificate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coefs: Vec<f64>,
    pub rel: Relation,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("problem is infeasible (phase-one residual {residual:.3e})")]
    Infeasible { residual: f64 },
    #[error("problem is unbounded along column {column}")]
    Unbounded { column: usize },
    #[error("iteration limit {0} reached")]
    IterationLimit(usize),
    #[error("row {row} has {got} coefficients, expected {expected}")]
    Shape { row: usize, got: usize, expected: usize },
}

/// Residuals proving optimality of a primal/dual pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    /// Largest violation of a primal row or of x >= 0.
    pub primal_residual: f64,
    /// Largest violation of a dual sign condition or reduced-cost sign.
    pub dual_residual: f64,
    /// Largest |y_i·slack_i| or |x_j·reduced_cost_j|.
    pub complementary_slackness: f64,
    /// |c'x − b'y|.
    pub duality_gap: f64,
}

impl Certificate {
    pub fn max_residual(&self) -> f64 {
        self.primal_residual
            .max(self.dual_residual)
            .max(self.complementary_slackness)
            .max(self.duality_gap)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// One dual value per row, in the sign convention of a maximisation.
    pub duals: Vec<f64>,
    pub iterations: usize,
    pub certificate: Certificate,
}

const PIVOT_TOL: f64 = 1e-10;
const COST_TOL: f64 = 1e-10;
const FEAS_TOL: f64 = 1e-8;
const STALL_LIMIT: usize = 50;

struct Tableau {
    m: usize,
    width: usize,
    t: Vec<f64>,
    obj: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.width + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.at(i, self.width - 1)
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width;
        let p = self.t[r * w + c];
        for j in 0..w {
            self.t[r * w + j] /= p;
        }
        let (before, rest) = self.t.split_at_mut(r * w);
        let (prow, after) = rest.split_at_mut(w);
        for row in before.chunks_mut(w).chain(after.chunks_mut(w)) {
            let f = row[c];
            if f != 0.0 {
                for (x, pr) in row.iter_mut().zip(prow.iter()) {
                    *x -= f * pr;
                }
            }
        }
        let f = self.obj[c];
        if f != 0.0 {
            for (x, pr) in self.obj.iter_mut().zip(prow.iter()) {
                *x -= f * pr;
            }
        }
        self.basis[r] = c;
    }

    /// Recomputes the objective row for column costs `cost`.
    fn set_objective(&mut self, cost: &[f64]) {
        let w = self.width;
        for j in 0..w {
            let mut z = 0.0;
            for i in 0..self.m {
                z += cost[self.basis[i]] * self.t[i * w + j];
            }
            self.obj[j] = z - if j < w - 1 { cost[j] } else { 0.0 };
        }
    }

    /// Runs simplex iterations on the current objective row.
    fn optimise(&mut self, allowed: &[bool], iterations: &mut usize, limit: usize) -> Result<(), LpError> {
        let mut stall = 0usize;
        let mut last_value = self.obj[self.width - 1];
        loop {
            if *iterations >= limit {
                return Err(LpError::IterationLimit(limit));
            }
            let bland = stall > STALL_LIMIT;
            let mut enter = None;
            let mut best = -COST_TOL;
            for j in 0..self.width - 1 {
                if !allowed[j] {
                    continue;
                }
                let r = self.obj[j];
                if bland {
                    if r < -COST_TOL {
                        enter = Some(j);
                        break;
                    }
                } else if r < best {
                    best = r;
                    enter = Some(j);
                }
            }
            let Some(c) = enter else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let a = self.at(i, c);
                if a > PIVOT_TOL {
                    let ratio = self.rhs(i) / a;
                    match leave {
                        None => leave = Some((i, ratio)),
                        Some((li, lr)) => {
                            let tie = (ratio - lr).abs() <= 1e-12 * lr.abs().max(1.0);
                            if ratio < lr && !tie || tie && self.basis[i] < self.basis[li] {
                                leave = Some((i, ratio));
                            }
                        }
                    }
                }
            }
            let Some((r, _)) = leave else {
                return Err(LpError::Unbounded { column: c });
            };
            self.pivot(r, c);
            *iterations += 1;
            let value = self.obj[self.width - 1];
            if value > last_value + 1e-12 * last_value.abs().max(1.0) {
                stall = 0;
                last_value = value;
            } else {
                stall += 1;
            }
        }
    }
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        Self {
            objective,
            rows: Vec::new(),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_row(&mut self, coefs: Vec<f64>, rel: Relation, rhs: f64) {
        self.rows.push(Row { coefs, rel, rhs });
    }

    pub fn solve(&self) -> Result<LpSolution, LpError> {
        let n = self.n_vars();
        let m = self.rows.len();
        for (i, row) in self.rows.iter().enumerate() {
            if row.coefs.len() != n {
                return Err(LpError::Shape {
                    row: i,
                    got: row.coefs.len(),
                    expected: n,
                });
            }
        }
        // Normalise to non-negative right-hand sides.
        let mut flipped = vec![false; m];
        let mut rels = Vec::with_capacity(m);
        for (i, row) in self.rows.iter().enumerate() {
            let flip = row.rhs < 0.0;
            flipped[i] = flip;
            rels.push(match (row.rel, flip) {
                (Relation::Le, true) => Relation::Ge,
                (Relation::Ge, true) => Relation::Le,
                (r, _) => r,
            });
        }
        let n_slack = rels.iter().filter(|r| **r != Relation::Eq).count();
        let n_art = rels.iter().filter(|r| **r != Relation::Le).count();
        let ncols = n + n_slack + n_art;
        let width = ncols + 1;
        let mut tab = Tableau {
            m,
            width,
            t: vec![0.0; m * width],
            obj: vec![0.0; width],
            basis: vec![0; m],
        };
        let mut row_col = vec![0usize; m];
        let mut is_art = vec![false; ncols];
        let (mut next_slack, mut next_art) = (n, n + n_slack);
        for (i, row) in self.rows.iter().enumerate() {
            let s = if flipped[i] { -1.0 } else { 1.0 };
            for j in 0..n {
                tab.t[i * width + j] = s * row.coefs[j];
            }
            tab.t[i * width + ncols] = s * row.rhs;
            match rels[i] {
                Relation::Le => {
                    tab.t[i * width + next_slack] = 1.0;
                    tab.basis[i] = next_slack;
                    row_col[i] = next_slack;
                    next_slack += 1;
                }
                Relation::Ge => {
                    tab.t[i * width + next_slack] = -1.0;
                    row_col[i] = next_slack;
                    next_slack += 1;
                    tab.t[i * width + next_art] = 1.0;
                    tab.basis[i] = next_art;
                    is_art[next_art] = true;
                    next_art += 1;
                }
                Relation::Eq => {
                    tab.t[i * width + next_art] = 1.0;
                    tab.basis[i] = next_art;
                    row_col[i] = next_art;
                    is_art[next_art] = true;
                    next_art += 1;
                }
            }
        }
        let limit = 50 * (m + ncols) + 1000;
        let mut iterations = 0;

        if n_art > 0 {
            let cost1: Vec<f64> = (0..ncols).map(|j| if is_art[j] { -1.0 } else { 0.0 }).collect();
            tab.set_objective(&cost1);
            let allowed = vec![true; ncols];
            tab.optimise(&allowed, &mut iterations, limit)?;
            let residual = -tab.obj[ncols];
            if residual > FEAS_TOL {
                return Err(LpError::Infeasible { residual });
            }
            for i in 0..m {
                if is_art[tab.basis[i]] {
                    let col = (0..ncols).find(|&j| !is_art[j] && tab.at(i, j).abs() > 1e-9);
                    if let Some(j) = col {
                        tab.pivot(i, j);
                    }
                }
            }
        }

        let mut cost2 = vec![0.0; ncols];
        cost2[..n].copy_from_slice(&self.objective);
        tab.set_objective(&cost2);
        let allowed: Vec<bool> = (0..ncols).map(|j| !is_art[j]).collect();
        tab.optimise(&allowed, &mut iterations, limit)?;

        let mut x = vec![0.0; n];
        for i in 0..m {
            if tab.basis[i] < n {
                x[tab.basis[i]] = tab.rhs(i).max(0.0);
            }
        }
        let duals: Vec<f64> = (0..m)
            .map(|i| {
                let r = tab.obj[row_col[i]];
                let y = match rels[i] {
                    Relation::Le | Relation::Eq => r,
                    Relation::Ge => -r,
                };
                if flipped[i] {
                    -y
                } else {
                    y
                }
            })
            .collect();
        let objective = self.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        let certificate = self.certify(&x, &duals);
        Ok(LpSolution {
            x,
            objective,
            duals,
            iterations,
            certificate,
        })
    }

    /// Checks primal and dual feasibility and complementary slackness of a pair.
    pub fn certify(&self, x: &[f64], y: &[f64]) -> Certificate {
        let n = self.n_vars();
        let mut primal: f64 = x.iter().map(|v| (-v).max(0.0)).fold(0.0, f64::max);
        let mut dual: f64 = 0.0;
        let mut cs: f64 = 0.0;
        let mut by = 0.0;
        let mut reduced = self.objective.clone();
        for (row, &yi) in self.rows.iter().zip(y) {
            let ax: f64 = row.coefs.iter().zip(x).map(|(a, v)| a * v).sum();
            let slack = row.rhs - ax;
            let (viol, sign_viol) = match row.rel {
                Relation::Le => ((-slack).max(0.0), (-yi).max(0.0)),
                Relation::Ge => (slack.max(0.0), yi.max(0.0)),
                Relation::Eq => (slack.abs(), 0.0),
            };
            primal = primal.max(viol);
            dual = dual.max(sign_viol);
            cs = cs.max((yi * slack).abs());
            by += row.rhs * yi;
            for j in 0..n {
                reduced[j] -= yi * row.coefs[j];
            }
        }
        for j in 0..n {
            dual = dual.max(reduced[j].max(0.0));
            cs = cs.max((x[j] * reduced[j]).abs());
        }
        let cx: f64 = self.objective.iter().zip(x).map(|(c, v)| c * v).sum();
        Certificate {
            primal_residual: primal,
            dual_residual: dual,
            complementary_slackness: cs,
            duality_gap: (cx - by).abs(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_maximisation() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36
        let mut lp = LinearProgram::new(vec![3.0, 5.0]);
        lp.add_row(vec![1.0, 0.0], Relation::Le, 4.0);
        lp.add_row(vec![0.0, 2.0], Relation::Le, 12.0);
        lp.add_row(vec![3.0, 2.0], Relation::Le, 18.0);
        let s = lp.solve().unwrap();
        assert!((s.objective - 36.0).abs() < 1e-9);
        assert!((s.x[0] - 2.0).abs() < 1e-9 && (s.x[1] - 6.0).abs() < 1e-9);
        assert!((s.duals[0]).abs() < 1e-9);
        assert!((s.duals[1] - 1.5).abs() < 1e-9);
        assert!((s.duals[2] - 1.0).abs() < 1e-9);
        assert!(s.certificate.max_residual() < 1e-9);
    }

    #[test]
    fn equality_and_ge_rows() {
        // max x + 2y, x + y = 3, x >= 1 (as -x <= -1 flipped), y <= 1.5
        let mut lp = LinearProgram::new(vec![1.0, 2.0]);
        lp.add_row(vec![1.0, 1.0], Relation::Eq, 3.0);
        lp.add_row(vec![-1.0, 0.0], Relation::Le, -1.0);
        lp.add_row(vec![0.0, 1.0], Relation::Le, 1.5);
        let s = lp.solve().unwrap();
        assert!((s.x[0] - 1.5).abs() < 1e-9 && (s.x[1] - 1.5).abs() < 1e-9);
        assert!((s.objective - 4.5).abs() < 1e-9);
        assert!(s.certificate.max_residual() < 1e-9);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(vec![1.0]);
        lp.add_row(vec![1.0], Relation::Ge, 2.0);
        lp.add_row(vec![1.0], Relation::Le, 1.0);
        assert!(matches!(lp.solve(), Err(LpError::Infeasible { .. })));
        let mut lp = LinearProgram::new(vec![1.0, 0.0]);
        lp.add_row(vec![-1.0, 1.0], Relation::Le, 1.0);
        assert!(matches!(lp.solve(), Err(LpError::Unbounded { .. })));
    }

    #[test]
    fn redundant_equalities() {
        let mut lp = LinearProgram::new(vec![1.0, 1.0]);
        lp.add_row(vec![1.0, 1.0], Relation::Eq, 2.0);
        lp.add_row(vec![2.0, 2.0], Relation::Eq, 4.0);
        lp.add_row(vec![1.0, 0.0], Relation::Le, 1.5);
        let s = lp.solve().unwrap();
        assert!((s.objective - 2.0).abs() < 1e-9);
        assert!(s.certificate.primal_residual < 1e-9);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut lp = LinearProgram::new(vec![1.0, 1.0]);
        lp.add_row(vec![1.0], Relation::Le, 1.0);
        assert!(matches!(lp.solve(), Err(LpError::Shape { .. })));
    }
}
