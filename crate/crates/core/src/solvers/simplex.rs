//! Dense-tableau, bounded-variable primal simplex with Bland's rule.
//!
//! Every original variable is rewritten as a nonnegative column with an
//! optional finite upper bound (shifted, mirrored or split into two).
//! Rows with a negative right-hand side get an artificial variable and a
//! phase-one objective; nonbasic variables rest at either bound.

use std::time::Instant;

use super::lp::{SolveResult, SolveStatus, StandardFormLP};
use crate::error::Result;

pub const DEFAULT_MAX_ITERS: usize = 100_000;

const PIVOT_TOL: f64 = 1e-9;
/// Reduced-cost optimality tolerance.
const OPT_TOL: f64 = 1e-9;
const RATIO_TIE_TOL: f64 = 1e-12;
/// Phase-one objective threshold for declaring infeasibility.
const PHASE_ONE_TOL: f64 = 1e-7;

/// How an internal column contributes to an original variable.
#[derive(Debug, Clone, Copy)]
struct ColumnSource {
    var: usize,
    sign: f64,
}

enum PhaseOutcome {
    Optimal,
    Unbounded,
    IterationLimit,
}

struct Tableau {
    m: usize,
    ncols: usize,
    /// `B^{-1} [A' | S | R]`, row-major.
    t: Vec<f64>,
    beta: Vec<f64>,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    at_upper: Vec<bool>,
    upper: Vec<f64>,
    excluded: Vec<bool>,
    cost: Vec<f64>,
    reduced: Vec<f64>,
    /// Column index of the slack of each row and its coefficient (+-1).
    slack_col: Vec<usize>,
    row_sign: Vec<f64>,
    rhs: Vec<f64>,
}

impl Tableau {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.ncols + j]
    }

    fn compute_reduced_costs(&mut self) {
        self.reduced.copy_from_slice(&self.cost);
        for i in 0..self.m {
            let cb = self.cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.t[i * self.ncols..(i + 1) * self.ncols];
                for (d, a) in self.reduced.iter_mut().zip(row) {
                    *d -= cb * a;
                }
            }
        }
    }

    /// Recomputes basic values from the inverse basis held in the slack
    /// columns: `beta = B^{-1} b - sum_{j at upper} T_j u_j`.
    fn refresh_basic_values(&mut self) {
        for i in 0..self.m {
            let mut v = 0.0;
            for (k, &sc) in self.slack_col.iter().enumerate() {
                // B^{-1} column k equals T[:, slack_k] * sign_k since the
                // initial slack column was sign_k * e_k.
                v += self.at(i, sc) * self.row_sign[k] * self.rhs[k];
            }
            for j in 0..self.ncols {
                if !self.is_basic[j] && self.at_upper[j] {
                    v -= self.at(i, j) * self.upper[j];
                }
            }
            self.beta[i] = v;
        }
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let n = self.ncols;
        let piv = self.t[r * n + q];
        {
            let row = &mut self.t[r * n..(r + 1) * n];
            for v in row.iter_mut() {
                *v /= piv;
            }
            row[q] = 1.0;
        }
        let pivot_row: Vec<f64> = self.t[r * n..(r + 1) * n].to_vec();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * n + q];
            if f != 0.0 {
                let row = &mut self.t[i * n..(i + 1) * n];
                for (v, p) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * p;
                }
                row[q] = 0.0;
            }
        }
        let dq = self.reduced[q];
        if dq != 0.0 {
            for (d, p) in self.reduced.iter_mut().zip(&pivot_row) {
                *d -= dq * p;
            }
            self.reduced[q] = 0.0;
        }
        let leaving = self.basis[r];
        self.is_basic[leaving] = false;
        self.basis[r] = q;
        self.is_basic[q] = true;
        self.at_upper[q] = false;
    }

    fn entering(&self) -> Option<usize> {
        (0..self.ncols).find(|&j| {
            !self.is_basic[j]
                && !self.excluded[j]
                && ((!self.at_upper[j] && self.reduced[j] > OPT_TOL)
                    || (self.at_upper[j] && self.reduced[j] < -OPT_TOL))
        })
    }

    fn run(&mut self, max_iters: usize, iters: &mut usize) -> PhaseOutcome {
        loop {
            let Some(q) = self.entering() else {
                return PhaseOutcome::Optimal;
            };
            if *iters >= max_iters {
                return PhaseOutcome::IterationLimit;
            }
            *iters += 1;
            let dir = if self.at_upper[q] { -1.0 } else { 1.0 };

            // Ratio test; ties go to the smallest basic variable index.
            let mut best_t = f64::INFINITY;
            let mut leave: Option<(usize, bool)> = None;
            for i in 0..self.m {
                let a = dir * self.at(i, q);
                let (ti, to_upper) = if a > PIVOT_TOL {
                    (self.beta[i].max(0.0) / a, false)
                } else if a < -PIVOT_TOL && self.upper[self.basis[i]].is_finite() {
                    let room = (self.upper[self.basis[i]] - self.beta[i]).max(0.0);
                    (room / -a, true)
                } else {
                    continue;
                };
                let better = match leave {
                    None => true,
                    Some((r, _)) => {
                        ti < best_t - RATIO_TIE_TOL
                            || (ti <= best_t + RATIO_TIE_TOL && self.basis[i] < self.basis[r])
                    }
                };
                if better {
                    best_t = ti;
                    leave = Some((i, to_upper));
                }
            }

            let span = self.upper[q];
            if span.is_finite() && span <= best_t {
                for i in 0..self.m {
                    let a = self.at(i, q);
                    if a != 0.0 {
                        self.beta[i] -= dir * a * span;
                    }
                }
                self.at_upper[q] = !self.at_upper[q];
                continue;
            }
            let Some((r, to_upper)) = leave else {
                return PhaseOutcome::Unbounded;
            };

            let start = if self.at_upper[q] { self.upper[q] } else { 0.0 };
            for i in 0..self.m {
                let a = self.at(i, q);
                if a != 0.0 {
                    self.beta[i] -= dir * a * best_t;
                }
            }
            let leaving = self.basis[r];
            self.beta[r] = start + dir * best_t;
            self.pivot(r, q);
            self.at_upper[leaving] = to_upper;
        }
    }
}

pub fn simplex_solve(lp: &StandardFormLP, max_iters: usize) -> Result<SolveResult> {
    let started = Instant::now();
    lp.validate()?;
    let m = lp.n_rows();
    let n = lp.n_vars();

    // Reduce every variable to nonnegative internal columns.
    let mut sources: Vec<ColumnSource> = Vec::with_capacity(n);
    let mut col_upper: Vec<f64> = Vec::with_capacity(n);
    let mut shift = vec![0.0; n];
    for j in 0..n {
        let (lo, hi) = (lp.lower[j], lp.upper[j]);
        if lo.is_finite() {
            shift[j] = lo;
            sources.push(ColumnSource { var: j, sign: 1.0 });
            col_upper.push(hi - lo);
        } else if hi.is_finite() {
            shift[j] = hi;
            sources.push(ColumnSource { var: j, sign: -1.0 });
            col_upper.push(f64::INFINITY);
        } else {
            sources.push(ColumnSource { var: j, sign: 1.0 });
            col_upper.push(f64::INFINITY);
            sources.push(ColumnSource { var: j, sign: -1.0 });
            col_upper.push(f64::INFINITY);
        }
    }
    let n_struct = sources.len();

    // Shifted right-hand side b' = b - A * shift.
    let mut rhs: Vec<f64> = (0..m)
        .map(|i| lp.rhs[i] - crate::linalg::dot(lp.constraints.row(i), &shift))
        .collect();
    let row_sign: Vec<f64> = rhs.iter().map(|b| if *b < 0.0 { -1.0 } else { 1.0 }).collect();
    for (b, s) in rhs.iter_mut().zip(&row_sign) {
        *b *= s;
    }
    let art_rows: Vec<usize> = (0..m).filter(|&i| row_sign[i] < 0.0).collect();
    let n_art = art_rows.len();
    let ncols = n_struct + m + n_art;

    let mut t = vec![0.0; m * ncols];
    for i in 0..m {
        let row = &mut t[i * ncols..(i + 1) * ncols];
        for (c, src) in sources.iter().enumerate() {
            row[c] = row_sign[i] * src.sign * lp.constraints[(i, src.var)];
        }
        row[n_struct + i] = row_sign[i];
    }
    let mut basis: Vec<usize> = (0..m).map(|i| n_struct + i).collect();
    for (a, &i) in art_rows.iter().enumerate() {
        let col = n_struct + m + a;
        t[i * ncols + col] = 1.0;
        basis[i] = col;
    }
    let mut is_basic = vec![false; ncols];
    for &b in &basis {
        is_basic[b] = true;
    }
    let mut upper = col_upper;
    upper.extend(std::iter::repeat(f64::INFINITY).take(m + n_art));

    let mut tab = Tableau {
        m,
        ncols,
        t,
        beta: rhs.clone(),
        basis,
        is_basic,
        at_upper: vec![false; ncols],
        upper,
        excluded: vec![false; ncols],
        cost: vec![0.0; ncols],
        reduced: vec![0.0; ncols],
        slack_col: (0..m).map(|i| n_struct + i).collect(),
        row_sign,
        rhs,
    };

    let mut iters = 0;
    if n_art > 0 {
        for a in 0..n_art {
            tab.cost[n_struct + m + a] = -1.0;
        }
        tab.compute_reduced_costs();
        match tab.run(max_iters, &mut iters) {
            PhaseOutcome::Optimal => {}
            PhaseOutcome::IterationLimit => {
                return Ok(SolveResult::without_solution(
                    SolveStatus::IterationLimit,
                    iters,
                    started.elapsed().as_secs_f64(),
                ))
            }
            // Phase one is bounded above by zero.
            PhaseOutcome::Unbounded => unreachable!("phase one objective is bounded"),
        }
        tab.refresh_basic_values();
        let infeasibility: f64 = (0..m)
            .filter(|&i| tab.basis[i] >= n_struct + m)
            .map(|i| tab.beta[i].max(0.0))
            .sum();
        if infeasibility > PHASE_ONE_TOL * (1.0 + crate::linalg::norm_inf(&tab.rhs)) {
            return Ok(SolveResult::without_solution(
                SolveStatus::Infeasible,
                iters,
                started.elapsed().as_secs_f64(),
            ));
        }
        for a in 0..n_art {
            let col = n_struct + m + a;
            tab.excluded[col] = true;
            tab.upper[col] = 0.0;
            tab.cost[col] = 0.0;
        }
        for i in 0..m {
            if tab.basis[i] >= n_struct + m {
                tab.beta[i] = 0.0;
            }
        }
    }

    for (c, src) in sources.iter().enumerate() {
        tab.cost[c] = src.sign * lp.objective[src.var];
    }
    tab.compute_reduced_costs();
    let outcome = tab.run(max_iters, &mut iters);
    let elapsed = started.elapsed().as_secs_f64();
    match outcome {
        PhaseOutcome::Optimal => {}
        PhaseOutcome::Unbounded => {
            return Ok(SolveResult::without_solution(SolveStatus::Unbounded, iters, elapsed))
        }
        PhaseOutcome::IterationLimit => {
            return Ok(SolveResult::without_solution(
                SolveStatus::IterationLimit,
                iters,
                elapsed,
            ))
        }
    }
    tab.refresh_basic_values();

    let mut internal = vec![0.0; ncols];
    for j in 0..ncols {
        if !tab.is_basic[j] && tab.at_upper[j] {
            internal[j] = tab.upper[j];
        }
    }
    for i in 0..m {
        internal[tab.basis[i]] = tab.beta[i];
    }
    let mut x = shift;
    for (c, src) in sources.iter().enumerate() {
        x[src.var] += src.sign * internal[c];
    }
    // Snap round-off outside the bounds back in.
    for ((v, lo), hi) in x.iter_mut().zip(&lp.lower).zip(&lp.upper) {
        *v = v.clamp(*lo, *hi);
    }
    let objective = lp.objective_value(&x);
    Ok(SolveResult {
        status: SolveStatus::Optimal,
        x_star: Some(x),
        objective_value: Some(objective),
        solve_time: started.elapsed().as_secs_f64(),
        iterations: iters,
        node_count: 0,
        incumbent: None,
        incumbent_history: Vec::new(),
    })
}
