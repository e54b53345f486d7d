//! Multi-retailer inventory with a linear decision rule for sales.
//!
//! Decisions are stocking levels `x` (N), the rule `y(u) = Y u + y0` with
//! `Y` (N x k) and `y0` (N). The profit variable is eliminated at its optimum:
//! `f = r^T (Y u_hat + y0) - rho ||Y^T r||_* - c_o^T x`. Penalized rows:
//!
//! - `i < N`:       `Y_i u_hat + y0_i - x_i + rho ||Y_i||_*`
//! - `N <= i < 2N`: `(Y_i - Q_i) u_hat + y0_i - d0_i + rho ||Y_i - Q_i||_*`
//! - last:          `1^T x - C`
//!
//! Flat decision layout is `[x (N), Y row-major (N*k), y0 (N)]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ProblemEval;
use crate::error::{check_len, Error, Result};
use crate::linalg::dot;
use crate::uncertainty::{dual_norm, dual_norm_subgradient, robust_affine, NormKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InventoryInstance {
    pub revenue: Vec<f64>,
    pub unit_cost: Vec<f64>,
    pub base_demand: Vec<f64>,
    /// `N` rows of length `k`.
    pub sensitivity: Vec<Vec<f64>>,
    pub nominal_u: Vec<f64>,
    pub rho: f64,
    pub capacity: f64,
    pub x_upper: Vec<f64>,
    pub norm_kind: NormKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InventoryGenConfig {
    pub n_retailers: usize,
    pub k: usize,
    pub rho: f64,
    pub norm: NormKind,
    pub count: usize,
    pub seed: u64,
}

/// Borrowed view of a flat inventory decision vector.
pub struct InventoryDecision<'a> {
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub y0: &'a [f64],
    k: usize,
}

impl<'a> InventoryDecision<'a> {
    pub fn y_row(&self, i: usize) -> &'a [f64] {
        &self.y[i * self.k..(i + 1) * self.k]
    }
}

impl InventoryInstance {
    pub fn n_retailers(&self) -> usize {
        self.revenue.len()
    }

    pub fn k(&self) -> usize {
        self.nominal_u.len()
    }

    pub fn decision_dim(&self) -> usize {
        let n = self.n_retailers();
        2 * n + n * self.k()
    }

    pub fn n_constraints(&self) -> usize {
        2 * self.n_retailers() + 1
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_retailers();
        let k = self.k();
        if n == 0 || k == 0 {
            return Err(Error::Dataset("inventory needs N >= 1 and k >= 1".into()));
        }
        check_len("inventory unit_cost", n, self.unit_cost.len())?;
        check_len("inventory base_demand", n, self.base_demand.len())?;
        check_len("inventory x_upper", n, self.x_upper.len())?;
        check_len("inventory sensitivity rows", n, self.sensitivity.len())?;
        for row in &self.sensitivity {
            check_len("inventory sensitivity row", k, row.len())?;
        }
        for i in 0..n {
            if !(self.revenue[i] > self.unit_cost[i]) || !(self.unit_cost[i] >= 0.0) {
                return Err(Error::Dataset("inventory needs r > c_o >= 0".into()));
            }
            if !(self.base_demand[i] >= 0.0) || !(self.x_upper[i] > 0.0) {
                return Err(Error::Dataset(
                    "inventory needs base demand >= 0 and x_upper > 0".into(),
                ));
            }
        }
        if !(self.capacity > 0.0) || !(self.rho >= 0.0) {
            return Err(Error::Dataset("inventory needs C > 0 and rho >= 0".into()));
        }
        let all_finite = self
            .revenue
            .iter()
            .chain(&self.unit_cost)
            .chain(&self.base_demand)
            .chain(self.sensitivity.iter().flatten())
            .chain(&self.nominal_u)
            .chain(&self.x_upper)
            .all(|v| v.is_finite())
            && self.capacity.is_finite()
            && self.rho.is_finite();
        if !all_finite {
            return Err(Error::Dataset("inventory fields must be finite".into()));
        }
        Ok(())
    }

    pub fn features(&self) -> Vec<f64> {
        let mut z = Vec::with_capacity(3 * self.n_retailers() + self.n_retailers() * self.k() + self.k());
        z.extend_from_slice(&self.revenue);
        z.extend_from_slice(&self.unit_cost);
        z.extend_from_slice(&self.base_demand);
        for row in &self.sensitivity {
            z.extend_from_slice(row);
        }
        z.extend_from_slice(&self.nominal_u);
        z
    }

    pub fn split<'a>(&self, flat: &'a [f64]) -> Result<InventoryDecision<'a>> {
        check_len("inventory decision", self.decision_dim(), flat.len())?;
        let n = self.n_retailers();
        let nk = n * self.k();
        Ok(InventoryDecision {
            x: &flat[..n],
            y: &flat[n..n + nk],
            y0: &flat[n + nk..],
            k: self.k(),
        })
    }

    /// `Y^T r`
    fn profit_exposure(&self, d: &InventoryDecision<'_>) -> Vec<f64> {
        let mut out = vec![0.0; self.k()];
        for (i, r) in self.revenue.iter().enumerate() {
            for (o, y) in out.iter_mut().zip(d.y_row(i)) {
                *o += r * y;
            }
        }
        out
    }

    /// Worst-case profit with the profit variable eliminated.
    pub fn objective(&self, flat: &[f64]) -> Result<f64> {
        let d = self.split(flat)?;
        Ok(self.objective_of(&d))
    }

    fn objective_of(&self, d: &InventoryDecision<'_>) -> f64 {
        let exposure = self.profit_exposure(d);
        robust_affine(
            &exposure,
            dot(&self.revenue, d.y0) - dot(&self.unit_cost, d.x),
            &self.nominal_u,
            self.rho,
            self.norm_kind,
            -1.0,
        )
    }

    pub fn worst_cases(&self, flat: &[f64]) -> Result<Vec<f64>> {
        let d = self.split(flat)?;
        Ok(self.worst_cases_of(&d))
    }

    fn worst_cases_of(&self, d: &InventoryDecision<'_>) -> Vec<f64> {
        let n = self.n_retailers();
        let mut out = Vec::with_capacity(self.n_constraints());
        for i in 0..n {
            out.push(robust_affine(
                d.y_row(i),
                d.y0[i] - d.x[i],
                &self.nominal_u,
                self.rho,
                self.norm_kind,
                1.0,
            ));
        }
        for i in 0..n {
            let diff: Vec<f64> = d.y_row(i).iter().zip(&self.sensitivity[i]).map(|(y, q)| y - q).collect();
            out.push(robust_affine(
                &diff,
                d.y0[i] - self.base_demand[i],
                &self.nominal_u,
                self.rho,
                self.norm_kind,
                1.0,
            ));
        }
        out.push(d.x.iter().sum::<f64>() - self.capacity);
        out
    }

    pub fn evaluate(&self, flat: &[f64]) -> Result<ProblemEval> {
        let d = self.split(flat)?;
        let n = self.n_retailers();
        let k = self.k();
        let dim = self.decision_dim();
        let y_at = |i: usize, l: usize| n + i * k + l;
        let y0_at = |i: usize| n + n * k + i;

        let mut objective_grad = vec![0.0; dim];
        for i in 0..n {
            objective_grad[i] = -self.unit_cost[i];
            objective_grad[y0_at(i)] = self.revenue[i];
        }
        let exposure_sub = dual_norm_subgradient(&self.profit_exposure(&d), self.norm_kind);
        for i in 0..n {
            for l in 0..k {
                objective_grad[y_at(i, l)] =
                    self.revenue[i] * (self.nominal_u[l] - self.rho * exposure_sub[l]);
            }
        }

        let mut worst_case_grads = Vec::with_capacity(self.n_constraints());
        for i in 0..n {
            let sub = dual_norm_subgradient(d.y_row(i), self.norm_kind);
            let mut g = vec![0.0; dim];
            g[i] = -1.0;
            for l in 0..k {
                g[y_at(i, l)] = self.nominal_u[l] + self.rho * sub[l];
            }
            g[y0_at(i)] = 1.0;
            worst_case_grads.push(g);
        }
        for i in 0..n {
            let diff: Vec<f64> = d.y_row(i).iter().zip(&self.sensitivity[i]).map(|(y, q)| y - q).collect();
            let sub = dual_norm_subgradient(&diff, self.norm_kind);
            let mut g = vec![0.0; dim];
            for l in 0..k {
                g[y_at(i, l)] = self.nominal_u[l] + self.rho * sub[l];
            }
            g[y0_at(i)] = 1.0;
            worst_case_grads.push(g);
        }
        let mut cap = vec![0.0; dim];
        cap[..n].iter_mut().for_each(|v| *v = 1.0);
        worst_case_grads.push(cap);

        Ok(ProblemEval {
            objective: self.objective_of(&d),
            objective_grad,
            worst_cases: self.worst_cases_of(&d),
            worst_case_grads,
        })
    }

    /// `rho ||Y^T r||_*`, the price of adjustability in the objective.
    pub fn profit_norm_term(&self, flat: &[f64]) -> Result<f64> {
        let d = self.split(flat)?;
        Ok(self.rho * dual_norm(&self.profit_exposure(&d), self.norm_kind))
    }

    /// A robust-feasible decision: no stock, no adjustable sales, and a
    /// constant sales level no larger than the worst-case demand or zero.
    pub fn constructed_feasible_point(&self) -> Vec<f64> {
        let n = self.n_retailers();
        let mut flat = vec![0.0; self.decision_dim()];
        for i in 0..n {
            let q = &self.sensitivity[i];
            let worst_demand = self.base_demand[i] + dot(q, &self.nominal_u)
                - self.rho * dual_norm(q, self.norm_kind);
            flat[n + n * self.k() + i] = worst_demand.min(0.0);
        }
        flat
    }
}

pub fn generate_inventory(cfg: &InventoryGenConfig) -> Result<Vec<InventoryInstance>> {
    if cfg.n_retailers == 0 || cfg.k == 0 || cfg.count == 0 {
        return Err(Error::Config(
            "inventory generation needs N >= 1, k >= 1 and count >= 1".into(),
        ));
    }
    if !(cfg.rho >= 0.0) || !cfg.rho.is_finite() {
        return Err(Error::Config(format!("rho must be >= 0, got {}", cfg.rho)));
    }
    let n = cfg.n_retailers;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let instances = (0..cfg.count)
        .map(|_| {
            let revenue: Vec<f64> = (0..n).map(|_| rng.random_range(5.0..10.0)).collect();
            let unit_cost: Vec<f64> = revenue
                .iter()
                .map(|&r| loop {
                    let c = rng.random_range(1.0..4.0);
                    if c < r {
                        break c;
                    }
                })
                .collect();
            let base_demand: Vec<f64> = (0..n).map(|_| rng.random_range(10.0..30.0)).collect();
            let sensitivity = (0..n)
                .map(|_| (0..cfg.k).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect();
            let nominal_u = (0..cfg.k).map(|_| rng.random_range(-1.0..1.0)).collect();
            let capacity = 0.8 * base_demand.iter().sum::<f64>();
            let x_upper = base_demand.iter().map(|d| 2.0 * d).collect();
            InventoryInstance {
                revenue,
                unit_cost,
                base_demand,
                sensitivity,
                nominal_u,
                rho: cfg.rho,
                capacity,
                x_upper,
                norm_kind: cfg.norm,
            }
        })
        .collect();
    Ok(instances)
}
