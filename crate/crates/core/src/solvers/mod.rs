//! Reference solvers standing in for a commercial optimizer: the robust
//! counterparts as LPs, a bounded-variable simplex, and branch and bound.

mod bnb;
mod counterpart;
mod lp;
mod simplex;

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use bnb::{branch_and_bound_binary, DEFAULT_MAX_NODES};
pub use counterpart::{build_counterpart_lp, inventory_counterpart_lp, knapsack_counterpart_lp, InventoryLpLayout};
pub use lp::{SolveResult, SolveStatus, StandardFormLP};
pub use simplex::{simplex_solve, DEFAULT_MAX_ITERS};

use crate::error::{Error, Result};
use crate::problems::{App, Instance};

/// Worst-case values at or below this count as satisfied.
pub const FEASIBILITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feasibility {
    /// `max_j g_j`, clamped below at 0.
    pub max_violation: f64,
    pub feasible: bool,
}

pub fn feasibility_check(inst: &Instance, flat: &[f64]) -> Result<Feasibility> {
    let g = inst.worst_cases(flat)?;
    let worst = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(Feasibility {
        max_violation: worst.max(0.0),
        feasible: g.iter().all(|v| *v <= FEASIBILITY_TOL),
    })
}

/// Robust optimum of one instance in the evaluator's flat decision layout.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub x_star: Vec<f64>,
    pub f_star: f64,
    /// Wall time for building and solving, in seconds.
    pub solve_time: f64,
    pub iterations: usize,
    pub node_count: usize,
}

/// Builds and solves the counterpart: simplex for continuous decisions,
/// branch and bound for binary knapsack.
pub fn solve_instance(app: App, inst: &Instance) -> Result<OracleSolution> {
    inst.check_app(app)?;
    let started = Instant::now();
    let (x_star, result) = match (app, inst) {
        (App::KnapsackBin, Instance::Knapsack(k)) => {
            let r = branch_and_bound_binary(k, DEFAULT_MAX_NODES)?;
            (r.x_star.clone(), r)
        }
        (App::KnapsackCont, Instance::Knapsack(k)) => {
            let r = simplex_solve(&knapsack_counterpart_lp(k)?, DEFAULT_MAX_ITERS)?;
            (r.x_star.clone(), r)
        }
        (App::Inventory, Instance::Inventory(i)) => {
            let (lp, layout) = inventory_counterpart_lp(i)?;
            let r = simplex_solve(&lp, DEFAULT_MAX_ITERS)?;
            (r.x_star.as_deref().map(|x| layout.decision(x)), r)
        }
        _ => unreachable!("checked by check_app"),
    };
    let solve_time = started.elapsed().as_secs_f64();
    let x_star = x_star.ok_or_else(|| {
        Error::Numerical(format!("reference solver stopped with status {:?}", result.status))
    })?;
    let f_star = inst.objective(&x_star)?;
    Ok(OracleSolution {
        x_star,
        f_star,
        solve_time,
        iterations: result.iterations,
        node_count: result.node_count,
    })
}

/// One line of a labels file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub id: usize,
    pub x_star: Vec<f64>,
    pub f_star: f64,
    pub solve_time: f64,
}

pub fn write_labels(path: &Path, labels: &[LabelRecord]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for rec in labels {
        serde_json::to_writer(&mut w, rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_labels(path: &Path) -> Result<Vec<LabelRecord>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    out.sort_by_key(|r: &LabelRecord| r.id);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{generate_knapsack, KnapsackGenConfig, KnapsackInstance};
    use crate::uncertainty::NormKind;

    fn tiny() -> KnapsackInstance {
        KnapsackInstance {
            values: vec![2.0],
            nominal_weights: vec![vec![1.0]],
            capacities: vec![1.2],
            rho: 0.5,
            norm_kind: NormKind::Box,
        }
    }

    #[test]
    fn one_item_counterpart() {
        // 1.5 x <= 1.2  =>  x* = 0.8, f* = 1.6
        let r = simplex_solve(&knapsack_counterpart_lp(&tiny()).unwrap(), DEFAULT_MAX_ITERS).unwrap();
        assert!((r.x_star.unwrap()[0] - 0.8).abs() < 1e-12);
        assert!((r.objective_value.unwrap() - 1.6).abs() < 1e-12);
    }

    #[test]
    fn zero_radius_counterpart_is_nominal() {
        let mut inst = tiny();
        inst.rho = 0.0;
        let lp = knapsack_counterpart_lp(&inst).unwrap();
        assert_eq!(lp.constraints.data(), &[1.0]);
        assert_eq!(lp.rhs, vec![1.2]);
    }

    #[test]
    fn ellipsoid_unsupported() {
        let mut inst = tiny();
        inst.norm_kind = NormKind::Ellipsoid;
        assert!(matches!(knapsack_counterpart_lp(&inst), Err(Error::UnsupportedOracle(_))));
        assert!(matches!(
            solve_instance(App::KnapsackCont, &Instance::Knapsack(inst)),
            Err(Error::UnsupportedOracle(_))
        ));
    }

    #[test]
    fn feasibility_examples() {
        let inst = Instance::Knapsack(KnapsackInstance {
            values: vec![1.0, 1.0],
            nominal_weights: vec![vec![1.0, 2.0]],
            capacities: vec![2.0],
            rho: 0.5,
            norm_kind: NormKind::Box,
        });
        let f0 = feasibility_check(&inst, &[0.0, 0.0]).unwrap();
        assert!(f0.feasible);
        assert_eq!(f0.max_violation, 0.0);
        // (W_hat + rho 1) . 1 - C = 1.5 + 2.5 - 2 = 2
        let f1 = feasibility_check(&inst, &[1.0, 1.0]).unwrap();
        assert!(!f1.feasible);
        assert!((f1.max_violation - 2.0).abs() < 1e-12);
    }

    #[test]
    fn oracle_solution_is_feasible() {
        let instances = generate_knapsack(&KnapsackGenConfig {
            d_x: 10,
            m: 3,
            rho: 0.1,
            norm: NormKind::Box,
            count: 20,
            seed: 3,
        })
        .unwrap();
        for k in instances {
            let inst = Instance::Knapsack(k);
            for app in [App::KnapsackCont, App::KnapsackBin] {
                let sol = solve_instance(app, &inst).unwrap();
                assert!(feasibility_check(&inst, &sol.x_star).unwrap().feasible);
            }
        }
    }

    #[test]
    fn lp_dump_layout() {
        let dump = knapsack_counterpart_lp(&tiny()).unwrap().dump();
        let lines: Vec<&str> = dump.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("max"));
        assert!(lines[1].starts_with("row 0"));
        assert!(lines[2].starts_with("bound 0"));
    }
}
