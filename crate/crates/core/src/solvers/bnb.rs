//! Best-first branch and bound for the robust binary knapsack.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use super::counterpart::knapsack_counterpart_lp;
use super::lp::{SolveResult, SolveStatus};
use super::simplex::{simplex_solve, DEFAULT_MAX_ITERS};
use crate::error::Result;
use crate::problems::KnapsackInstance;

pub const DEFAULT_MAX_NODES: usize = 200_000;

const INTEGRALITY_TOL: f64 = 1e-9;
const PRUNE_TOL: f64 = 1e-9;
const ROW_TOL: f64 = 1e-9;

struct Node {
    bound: f64,
    id: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // Max-heap on bound; earlier nodes first on ties.
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound
            .total_cmp(&other.bound)
            .then_with(|| other.id.cmp(&self.id))
    }
}

fn rows_satisfied(inst: &KnapsackInstance, x: &[f64]) -> bool {
    inst.nominal_weights
        .iter()
        .zip(&inst.capacities)
        .all(|(row, c)| row.iter().zip(x).map(|(w, x)| (w + inst.rho) * x).sum::<f64>() <= c + ROW_TOL)
}

pub fn branch_and_bound_binary(inst: &KnapsackInstance, max_nodes: usize) -> Result<SolveResult> {
    let started = Instant::now();
    let root = knapsack_counterpart_lp(inst)?;
    let d = inst.d_x();

    // x = 0 is always robust feasible since capacities are positive.
    let mut best_x = vec![0.0; d];
    let mut best_obj = inst.objective(&best_x);
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut nodes = 0;
    let mut next_id = 1;

    let mut heap = BinaryHeap::new();
    heap.push(Node {
        bound: f64::INFINITY,
        id: 0,
        lower: root.lower.clone(),
        upper: root.upper.clone(),
    });

    while let Some(node) = heap.pop() {
        if node.bound <= best_obj + PRUNE_TOL {
            // Best-first: every remaining node is dominated as well.
            break;
        }
        if nodes >= max_nodes {
            return Ok(SolveResult {
                status: SolveStatus::NodeLimit,
                x_star: None,
                objective_value: None,
                solve_time: started.elapsed().as_secs_f64(),
                iterations,
                node_count: nodes,
                incumbent: Some((best_x, best_obj)),
                incumbent_history: history,
            });
        }
        nodes += 1;
        let mut lp = root.clone();
        lp.lower = node.lower;
        lp.upper = node.upper;
        let relax = simplex_solve(&lp, DEFAULT_MAX_ITERS)?;
        iterations += relax.iterations;
        history.push(best_obj);
        let (Some(x), Some(bound)) = (relax.x_star, relax.objective_value) else {
            continue;
        };
        if bound <= best_obj + PRUNE_TOL {
            continue;
        }
        let branch = x
            .iter()
            .enumerate()
            .filter(|(_, v)| (**v - v.round()).abs() > INTEGRALITY_TOL)
            .max_by(|a, b| {
                let fa = (a.1 - 0.5).abs();
                let fb = (b.1 - 0.5).abs();
                // most fractional, smallest index on ties
                fb.total_cmp(&fa).then_with(|| b.0.cmp(&a.0))
            })
            .map(|(i, _)| i);
        match branch {
            None => {
                let rounded: Vec<f64> = x.iter().map(|v| v.round()).collect();
                let obj = inst.objective(&rounded);
                if rows_satisfied(inst, &rounded) && obj > best_obj {
                    best_obj = obj;
                    best_x = rounded;
                    *history.last_mut().unwrap() = best_obj;
                }
            }
            Some(i) => {
                for fix in [1.0, 0.0] {
                    let mut lower = lp.lower.clone();
                    let mut upper = lp.upper.clone();
                    lower[i] = fix;
                    upper[i] = fix;
                    heap.push(Node {
                        bound,
                        id: next_id,
                        lower,
                        upper,
                    });
                    next_id += 1;
                }
            }
        }
    }

    Ok(SolveResult {
        status: SolveStatus::Optimal,
        x_star: Some(best_x),
        objective_value: Some(best_obj),
        solve_time: started.elapsed().as_secs_f64(),
        iterations,
        node_count: nodes,
        incumbent: None,
        incumbent_history: history,
    })
}
