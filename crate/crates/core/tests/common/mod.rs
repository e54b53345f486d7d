//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use rand::Rng;
use robust_proxy::linalg::DenseMatrix;
use robust_proxy::problems::{InventoryInstance, KnapsackInstance};
use robust_proxy::solvers::StandardFormLP;

/// All `2^d` vertices of the box `center ± rho`.
pub fn box_vertices(center: &[f64], rho: f64) -> Vec<Vec<f64>> {
    let d = center.len();
    (0..1u64 << d)
        .map(|mask| {
            center
                .iter()
                .enumerate()
                .map(|(i, c)| if mask >> i & 1 == 1 { c + rho } else { c - rho })
                .collect()
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Worst-case constraint values by maximizing each weight row over the box.
pub fn knapsack_worst_brute(inst: &KnapsackInstance, x: &[f64]) -> Vec<f64> {
    inst.nominal_weights
        .iter()
        .zip(&inst.capacities)
        .map(|(row, cap)| {
            box_vertices(row, inst.rho)
                .iter()
                .map(|w| dot(w, x) - cap)
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

/// Worst-case profit and constraint values of a linear decision rule,
/// enumerating demand scenarios at the box vertices.
pub fn inventory_worst_brute(inst: &InventoryInstance, flat: &[f64]) -> (f64, Vec<f64>) {
    let n = inst.revenue.len();
    let k = inst.nominal_u.len();
    let x = &flat[..n];
    let y = &flat[n..n + n * k];
    let y0 = &flat[n + n * k..];
    let sales = |i: usize, u: &[f64]| dot(&y[i * k..(i + 1) * k], u) + y0[i];
    let vertices = box_vertices(&inst.nominal_u, inst.rho);
    let profit = vertices
        .iter()
        .map(|u| (0..n).map(|i| inst.revenue[i] * sales(i, u)).sum::<f64>() - dot(&inst.unit_cost, x))
        .fold(f64::INFINITY, f64::min);
    let mut g = Vec::with_capacity(2 * n + 1);
    for i in 0..n {
        g.push(vertices.iter().map(|u| sales(i, u) - x[i]).fold(f64::NEG_INFINITY, f64::max));
    }
    for i in 0..n {
        g.push(
            vertices
                .iter()
                .map(|u| sales(i, u) - inst.base_demand[i] - dot(&inst.sensitivity[i], u))
                .fold(f64::NEG_INFINITY, f64::max),
        );
    }
    g.push(x.iter().sum::<f64>() - inst.capacity);
    (profit, g)
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

fn combinations(n: usize, k: usize, start: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
    if cur.len() == k {
        f(cur);
        return;
    }
    for i in start..n {
        if n - i < k - cur.len() {
            break;
        }
        cur.push(i);
        combinations(n, k, i + 1, cur, f);
        cur.pop();
    }
}

/// Best objective over all basic feasible solutions of a box-bounded LP,
/// `None` when no vertex is feasible.
pub fn lp_vertex_enumeration(lp: &StandardFormLP) -> Option<f64> {
    let n = lp.n_vars();
    let mut rows: Vec<(Vec<f64>, f64)> = (0..lp.n_rows())
        .map(|i| (lp.constraints.row(i).to_vec(), lp.rhs[i]))
        .collect();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        rows.push((e.clone(), lp.upper[j]));
        e[j] = -1.0;
        rows.push((e, -lp.lower[j]));
    }
    let mut best: Option<f64> = None;
    combinations(rows.len(), n, 0, &mut Vec::new(), &mut |active| {
        let a = active.iter().map(|&i| rows[i].0.clone()).collect();
        let b = active.iter().map(|&i| rows[i].1).collect();
        if let Some(x) = solve_square(a, b) {
            if rows.iter().all(|(r, rhs)| dot(r, &x) <= rhs + 1e-9) {
                let v = dot(&lp.objective, &x);
                best = Some(best.map_or(v, |b: f64| b.max(v)));
            }
        }
    });
    best
}

pub fn random_lp<R: Rng>(rng: &mut R, n: usize, m: usize) -> StandardFormLP {
    let c = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let a = DenseMatrix::from_vec(m, n, (0..m * n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let b = (0..m).map(|_| rng.random_range(-1.0..2.0)).collect();
    let lower: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..0.5)).collect();
    let upper = lower.iter().map(|l| l + rng.random_range(0.5..3.0)).collect();
    StandardFormLP::new(c, a, b).unwrap().with_bounds(lower, upper).unwrap()
}

/// Best robust-feasible binary value by trying all `2^d_x` selections.
pub fn knapsack_exhaustive(inst: &KnapsackInstance) -> f64 {
    let d = inst.values.len();
    let mut best = 0.0f64;
    for mask in 0..1u64 << d {
        let x: Vec<f64> = (0..d).map(|i| (mask >> i & 1) as f64).collect();
        let fits = inst
            .nominal_weights
            .iter()
            .zip(&inst.capacities)
            .all(|(row, cap)| row.iter().zip(&x).map(|(w, xi)| (w + inst.rho) * xi).sum::<f64>() <= cap + 1e-9);
        if fits {
            best = best.max(dot(&inst.values, &x));
        }
    }
    best
}

/// Central differences of `f` at `params`.
pub fn central_diff(params: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..p.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let up = f(&p);
            p[i] = orig - h;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    diff / scale.max(1e-8)
}

pub mod micro {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use robust_proxy::domain::LayerMode;
    use robust_proxy::nn::{Activation, MlpModel};
    use robust_proxy::problems::{
        generate_inventory, generate_knapsack, output_dim, parameterize_flat, App, Instance, InventoryGenConfig,
        KnapsackGenConfig, Standardizer,
    };
    use robust_proxy::training::{ssl_instance_grad, ssl_instance_loss, TrainMode};
    use robust_proxy::uncertainty::NormKind;
    use robust_proxy::ProxyModel;

    pub struct Case {
        pub model: ProxyModel,
        pub instance: Instance,
        pub nu: f64,
    }

    const KINK: f64 = 1e-3;

    /// A random tiny proxy and instance; `d_x <= 5`, hidden width `<= 8`.
    pub fn case(seed: u64) -> Case {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let app = [App::KnapsackCont, App::KnapsackBin, App::Inventory][rng.random_range(0..3)];
        let norm = if rng.random_bool(0.5) { NormKind::Box } else { NormKind::Ellipsoid };
        let batch: Vec<Instance> = match app {
            App::Inventory => generate_inventory(&InventoryGenConfig {
                n_retailers: 1,
                k: rng.random_range(1..=3),
                rho: rng.random_range(0.1..1.0),
                norm,
                count: 8,
                seed,
            })
            .unwrap()
            .into_iter()
            .map(Instance::Inventory)
            .collect(),
            _ => generate_knapsack(&KnapsackGenConfig {
                d_x: rng.random_range(2..=5),
                m: rng.random_range(1..=3),
                rho: rng.random_range(0.05..0.3),
                norm,
                count: 8,
                seed,
            })
            .unwrap()
            .into_iter()
            .map(Instance::Knapsack)
            .collect(),
        };
        let standardizer = Standardizer::fit(&batch.iter().map(Instance::features).collect::<Vec<_>>()).unwrap();
        let hidden = rng.random_range(2..=8);
        let dims = [standardizer.dim(), hidden, output_dim(app, &batch[0]).unwrap()];
        let mut mlp = MlpModel::new(&dims, Activation::Tanh, seed).unwrap();
        if app == App::KnapsackBin {
            // Keep a good share of outputs inside the clip's linear zone.
            let p: Vec<f64> = mlp.params().iter().map(|v| v * 0.05).collect();
            mlp.set_params(&p).unwrap();
        }
        let model = ProxyModel {
            app,
            mlp,
            standardizer,
            gamma: 0.1,
            nu: None,
            mode: TrainMode::Ssl,
            train_config: None,
        };
        Case { model, instance: batch[rng.random_range(0..batch.len())].clone(), nu: rng.random_range(1.0..50.0) }
    }

    fn near_zero(v: &[f64]) -> bool {
        v.iter().any(|x| x.abs() < KINK)
    }

    /// True when the composed loss is within `KINK` of a nondifferentiable point.
    pub fn near_kink(c: &Case) -> bool {
        let w = c.model.raw_output(&c.instance).unwrap();
        if c.model.app == App::KnapsackBin {
            let g = c.model.gamma;
            if w.iter().any(|v| (v / g).abs() < KINK || (v / g - 1.0).abs() < KINK) {
                return true;
            }
        }
        let flat = parameterize_flat(c.model.app, LayerMode::Train, c.model.gamma, &c.instance, &w).unwrap();
        if near_zero(&c.instance.worst_cases(&flat).unwrap()) {
            return true;
        }
        let norm = c.instance.norm_kind();
        let norm_kink = |a: &[f64]| match norm {
            NormKind::Box => near_zero(a),
            NormKind::Ellipsoid => a.iter().map(|x| x * x).sum::<f64>().sqrt() < KINK,
        };
        match &c.instance {
            Instance::Knapsack(_) => norm_kink(&flat),
            Instance::Inventory(inv) => {
                let k = inv.nominal_u.len();
                let y = &flat[1..1 + k];
                let exposure: Vec<f64> = y.iter().map(|v| v * inv.revenue[0]).collect();
                let diff: Vec<f64> = y.iter().zip(&inv.sensitivity[0]).map(|(a, b)| a - b).collect();
                norm_kink(y) || norm_kink(&exposure) || norm_kink(&diff)
            }
        }
    }

    /// Relative error between the analytic gradient and central differences.
    pub fn gradient_error(c: &Case) -> f64 {
        let (_, grad) = ssl_instance_grad(&c.model, &c.instance, c.nu).unwrap();
        let base = c.model.mlp.params();
        let mut probe = c.model.clone();
        let fd = super::central_diff(&base, 1e-6, |p| {
            probe.mlp.set_params(p).unwrap();
            ssl_instance_loss(&probe, &c.instance, c.nu).unwrap()
        });
        super::rel_err(&grad, &fd)
    }
}
