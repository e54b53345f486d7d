use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::{dot, DenseMatrix};

/// `maximize c^T x  s.t.  A x <= b,  lower <= x <= upper`.
///
/// Bounds may be infinite; the simplex reduces every variable to a
/// nonnegative one before solving.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardFormLP {
    pub objective: Vec<f64>,
    pub constraints: DenseMatrix,
    pub rhs: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl StandardFormLP {
    /// All variables default to `[0, 1]`.
    pub fn new(objective: Vec<f64>, constraints: DenseMatrix, rhs: Vec<f64>) -> Result<Self> {
        let n = objective.len();
        let lp = Self {
            objective,
            constraints,
            rhs,
            lower: vec![0.0; n],
            upper: vec![1.0; n],
        };
        lp.validate()?;
        Ok(lp)
    }

    pub fn with_bounds(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        self.lower = lower;
        self.upper = upper;
        self.validate()?;
        Ok(self)
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_vars();
        check_len("LP constraint columns", n, self.constraints.cols())?;
        check_len("LP constraint rows", self.rhs.len(), self.constraints.rows())?;
        check_len("LP lower bounds", n, self.lower.len())?;
        check_len("LP upper bounds", n, self.upper.len())?;
        for (lo, hi) in self.lower.iter().zip(&self.upper) {
            if lo.is_nan() || hi.is_nan() || lo > hi || *lo == f64::INFINITY || *hi == f64::NEG_INFINITY {
                return Err(Error::Config(format!("invalid variable bounds [{lo}, {hi}]")));
            }
        }
        if self.objective.iter().chain(&self.rhs).any(|v| !v.is_finite()) || !self.constraints.is_finite() {
            return Err(Error::Config("LP data must be finite".into()));
        }
        Ok(())
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        dot(&self.objective, x)
    }

    /// Largest violation of rows and bounds at `x` (0 if feasible).
    pub fn max_residual(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, b) in self.rhs.iter().enumerate() {
            worst = worst.max(dot(self.constraints.row(i), x) - b);
        }
        for ((v, lo), hi) in x.iter().zip(&self.lower).zip(&self.upper) {
            worst = worst.max(lo - v).max(v - hi);
        }
        worst
    }

    /// Plain-text dump for manual inspection: objective row, constraint rows,
    /// then bounds. Not a stable format.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let fmt_row = |row: &[f64]| row.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(" ");
        let _ = writeln!(s, "max {}", fmt_row(&self.objective));
        for i in 0..self.n_rows() {
            let _ = writeln!(s, "row {i}: {} <= {:.6}", fmt_row(self.constraints.row(i)), self.rhs[i]);
        }
        for (j, (lo, hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            let _ = writeln!(s, "bound {j}: [{lo}, {hi}]");
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    NodeLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Present iff `status == Optimal`.
    pub x_star: Option<Vec<f64>>,
    pub objective_value: Option<f64>,
    pub solve_time: f64,
    pub iterations: usize,
    /// Branch-and-bound nodes whose relaxation was solved; 0 for plain LPs.
    pub node_count: usize,
    /// Best integer solution found when a node limit stops the search.
    pub incumbent: Option<(Vec<f64>, f64)>,
    /// Incumbent objective after each visited node (branch and bound only).
    pub incumbent_history: Vec<f64>,
}

impl SolveResult {
    pub(crate) fn without_solution(status: SolveStatus, iterations: usize, solve_time: f64) -> Self {
        Self {
            status,
            x_star: None,
            objective_value: None,
            solve_time,
            iterations,
            node_count: 0,
            incumbent: None,
            incumbent_history: Vec::new(),
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}
