//! Robust counterparts as linear programs (box uncertainty only).

use super::lp::StandardFormLP;
use crate::error::{Error, Result};
use crate::linalg::{dot, DenseMatrix};
use crate::problems::{Instance, InventoryInstance, KnapsackInstance};
use crate::uncertainty::NormKind;

fn require_box(norm: NormKind) -> Result<()> {
    match norm {
        NormKind::Box => Ok(()),
        NormKind::Ellipsoid => Err(Error::UnsupportedOracle(
            "the reference LP solver handles box uncertainty only; ellipsoidal counterparts are second-order cone programs".into(),
        )),
    }
}

/// `max v^T x  s.t. (W_hat_j + rho 1)^T x <= C_j,  0 <= x <= 1`.
///
/// With `x >= 0`, `||x||_1 = 1^T x`, so the row-wise box counterpart is linear.
pub fn knapsack_counterpart_lp(inst: &KnapsackInstance) -> Result<StandardFormLP> {
    require_box(inst.norm_kind)?;
    let d = inst.d_x();
    let rows: Vec<Vec<f64>> = inst
        .nominal_weights
        .iter()
        .map(|row| row.iter().map(|w| w + inst.rho).collect())
        .collect();
    StandardFormLP::new(inst.values.clone(), DenseMatrix::from_rows(&rows)?, inst.capacities.clone())?
        .with_bounds(vec![0.0; d], vec![1.0; d])
}

/// Column layout of the inventory counterpart.
#[derive(Debug, Clone, Copy)]
pub struct InventoryLpLayout {
    pub n: usize,
    pub k: usize,
}

impl InventoryLpLayout {
    pub fn profit(&self) -> usize {
        0
    }
    pub fn x(&self, i: usize) -> usize {
        1 + i
    }
    pub fn y(&self, i: usize, l: usize) -> usize {
        1 + self.n + i * self.k + l
    }
    pub fn y0(&self, i: usize) -> usize {
        1 + self.n + self.n * self.k + i
    }
    /// `t^P >= |Y^T r|`
    pub fn t_profit(&self, l: usize) -> usize {
        1 + 2 * self.n + self.n * self.k + l
    }
    /// `T >= |Y|`
    pub fn t_stock(&self, i: usize, l: usize) -> usize {
        1 + 2 * self.n + self.n * self.k + self.k + i * self.k + l
    }
    /// `S >= |Y - Q|`
    pub fn t_demand(&self, i: usize, l: usize) -> usize {
        1 + 2 * self.n + 2 * self.n * self.k + self.k + i * self.k + l
    }
    pub fn n_vars(&self) -> usize {
        1 + 2 * self.n + 3 * self.n * self.k + self.k
    }

    /// `[x, Y, y0]` in the evaluator's flat layout.
    pub fn decision(&self, lp_x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.n + self.n * self.k);
        out.extend((0..self.n).map(|i| lp_x[self.x(i)]));
        for i in 0..self.n {
            out.extend((0..self.k).map(|l| lp_x[self.y(i, l)]));
        }
        out.extend((0..self.n).map(|i| lp_x[self.y0(i)]));
        out
    }
}

/// One-stage counterpart with explicit profit `P` and absolute-value
/// linearizations of the l1 dual norms.
pub fn inventory_counterpart_lp(inst: &InventoryInstance) -> Result<(StandardFormLP, InventoryLpLayout)> {
    require_box(inst.norm_kind)?;
    let n = inst.n_retailers();
    let k = inst.k();
    let lay = InventoryLpLayout { n, k };
    let nv = lay.n_vars();
    let u = &inst.nominal_u;
    let rho = inst.rho;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut rhs = Vec::new();

    // P - r^T (Y u_hat + y0) + c_o^T x + rho 1^T t^P <= 0
    let mut row = vec![0.0; nv];
    row[lay.profit()] = 1.0;
    for i in 0..n {
        for l in 0..k {
            row[lay.y(i, l)] = -inst.revenue[i] * u[l];
        }
        row[lay.y0(i)] = -inst.revenue[i];
        row[lay.x(i)] = inst.unit_cost[i];
    }
    for l in 0..k {
        row[lay.t_profit(l)] = rho;
    }
    rows.push(row);
    rhs.push(0.0);
    for l in 0..k {
        for sign in [1.0, -1.0] {
            let mut row = vec![0.0; nv];
            for i in 0..n {
                row[lay.y(i, l)] = sign * inst.revenue[i];
            }
            row[lay.t_profit(l)] = -1.0;
            rows.push(row);
            rhs.push(0.0);
        }
    }

    for i in 0..n {
        // Y_i u_hat + y0_i - x_i + rho 1^T T_i <= 0
        let mut row = vec![0.0; nv];
        for l in 0..k {
            row[lay.y(i, l)] = u[l];
            row[lay.t_stock(i, l)] = rho;
        }
        row[lay.y0(i)] = 1.0;
        row[lay.x(i)] = -1.0;
        rows.push(row);
        rhs.push(0.0);
        for l in 0..k {
            for sign in [1.0, -1.0] {
                let mut row = vec![0.0; nv];
                row[lay.y(i, l)] = sign;
                row[lay.t_stock(i, l)] = -1.0;
                rows.push(row);
                rhs.push(0.0);
            }
        }
    }

    for i in 0..n {
        // (Y_i - Q_i) u_hat + y0_i - d0_i + rho 1^T S_i <= 0
        let q = &inst.sensitivity[i];
        let mut row = vec![0.0; nv];
        for l in 0..k {
            row[lay.y(i, l)] = u[l];
            row[lay.t_demand(i, l)] = rho;
        }
        row[lay.y0(i)] = 1.0;
        rows.push(row);
        rhs.push(inst.base_demand[i] + dot(q, u));
        for l in 0..k {
            for sign in [1.0, -1.0] {
                // sign (Y_il - Q_il) <= S_il
                let mut row = vec![0.0; nv];
                row[lay.y(i, l)] = sign;
                row[lay.t_demand(i, l)] = -1.0;
                rows.push(row);
                rhs.push(sign * q[l]);
            }
        }
    }

    let mut row = vec![0.0; nv];
    for i in 0..n {
        row[lay.x(i)] = 1.0;
    }
    rows.push(row);
    rhs.push(inst.capacity);

    let mut lower = vec![0.0; nv];
    let mut upper = vec![f64::INFINITY; nv];
    lower[lay.profit()] = f64::NEG_INFINITY;
    for i in 0..n {
        upper[lay.x(i)] = inst.x_upper[i];
        lower[lay.y0(i)] = f64::NEG_INFINITY;
        for l in 0..k {
            lower[lay.y(i, l)] = f64::NEG_INFINITY;
        }
    }
    let mut objective = vec![0.0; nv];
    objective[lay.profit()] = 1.0;
    let lp = StandardFormLP::new(objective, DenseMatrix::from_rows(&rows)?, rhs)?.with_bounds(lower, upper)?;
    Ok((lp, lay))
}

/// Counterpart LP of any instance (the continuous relaxation for binary knapsack).
pub fn build_counterpart_lp(inst: &Instance) -> Result<StandardFormLP> {
    match inst {
        Instance::Knapsack(k) => knapsack_counterpart_lp(k),
        Instance::Inventory(i) => inventory_counterpart_lp(i).map(|(lp, _)| lp),
    }
}
