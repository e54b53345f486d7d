//! Exact-penalty self-supervised loss and the squared-error baseline.
//!
//! `L(x) = -f(x) + nu * sum_j max(0, g_j(x))` where `g_j` is the worst case
//! of robust constraint `j`.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::axpy;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    nu: f64,
}

impl PenaltyConfig {
    pub fn new(nu: f64) -> Result<Self> {
        if !(nu > 0.0) || !nu.is_finite() {
            return Err(Error::Config(format!(
                "penalty coefficient must be positive and finite, got {nu}"
            )));
        }
        Ok(Self { nu })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    /// `-f(x)`
    pub objective_term: f64,
    /// `nu * sum_j max(0, g_j)`
    pub penalty_term: f64,
    pub total: f64,
    pub per_constraint_violation: Vec<f64>,
}

impl LossBreakdown {
    pub fn is_robust_feasible(&self) -> bool {
        self.penalty_term == 0.0
    }
}

pub fn ssl_loss(objective: f64, worst_cases: &[f64], cfg: &PenaltyConfig) -> Result<LossBreakdown> {
    if !objective.is_finite() || worst_cases.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numerical(
            "objective and worst-case values must be finite".into(),
        ));
    }
    let per_constraint_violation: Vec<f64> = worst_cases.iter().map(|g| g.max(0.0)).collect();
    let penalty_term = cfg.nu * per_constraint_violation.iter().sum::<f64>();
    let objective_term = -objective;
    Ok(LossBreakdown {
        objective_term,
        penalty_term,
        total: objective_term + penalty_term,
        per_constraint_violation,
    })
}

/// Subgradient of [`ssl_loss`] w.r.t. the decision vector. Constraint `j`
/// contributes only when `worst_cases[j] > 0`.
pub fn ssl_loss_grad_x<G: AsRef<[f64]>>(
    objective_grad: &[f64],
    worst_case_grads: &[G],
    worst_cases: &[f64],
    cfg: &PenaltyConfig,
) -> Result<Vec<f64>> {
    check_len(
        "ssl_loss_grad_x constraints",
        worst_cases.len(),
        worst_case_grads.len(),
    )?;
    let mut grad: Vec<f64> = objective_grad.iter().map(|g| -g).collect();
    for (g_j, value) in worst_case_grads.iter().zip(worst_cases) {
        let g_j = g_j.as_ref();
        check_len("ssl_loss_grad_x decision", objective_grad.len(), g_j.len())?;
        if *value > 0.0 {
            axpy(cfg.nu, g_j, &mut grad);
        }
    }
    Ok(grad)
}

/// Squared l2 distance and its gradient w.r.t. the prediction.
pub fn sl_loss(x_pred: &[f64], x_star: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_len("sl_loss", x_star.len(), x_pred.len())?;
    let diff: Vec<f64> = x_pred.iter().zip(x_star).map(|(p, s)| p - s).collect();
    let loss = diff.iter().map(|d| d * d).sum();
    let grad = diff.iter().map(|d| 2.0 * d).collect();
    Ok((loss, grad))
}
