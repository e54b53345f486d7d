//! Multidimensional knapsack with row-wise uncertain weights.
//!
//! Each weight row `W_j` ranges over its own ball around `W_hat_j`, so the
//! robust constraint `W_j x <= C_j` has worst case
//! `W_hat_j^T x + rho ||x||_* - C_j`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ProblemEval;
use crate::error::{check_len, Error, Result};
use crate::linalg::dot;
use crate::uncertainty::{dual_norm_subgradient, robust_affine, NormKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnapsackInstance {
    pub values: Vec<f64>,
    /// `m` rows of length `d_x`.
    pub nominal_weights: Vec<Vec<f64>>,
    pub capacities: Vec<f64>,
    pub rho: f64,
    pub norm_kind: NormKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnapsackGenConfig {
    pub d_x: usize,
    pub m: usize,
    pub rho: f64,
    pub norm: NormKind,
    pub count: usize,
    pub seed: u64,
}

impl KnapsackInstance {
    pub fn d_x(&self) -> usize {
        self.values.len()
    }

    pub fn m(&self) -> usize {
        self.capacities.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d_x = self.d_x();
        if d_x == 0 || self.m() == 0 {
            return Err(Error::Dataset("knapsack needs d_x >= 1 and m >= 1".into()));
        }
        check_len("knapsack weight rows", self.m(), self.nominal_weights.len())?;
        for row in &self.nominal_weights {
            check_len("knapsack weight row", d_x, row.len())?;
            if row.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
                return Err(Error::Dataset("knapsack weights must be finite and >= 0".into()));
            }
        }
        if self.capacities.iter().any(|c| !(*c > 0.0) || !c.is_finite()) {
            return Err(Error::Dataset("knapsack capacities must be positive".into()));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Dataset("knapsack values must be finite".into()));
        }
        if !(self.rho >= 0.0) || !self.rho.is_finite() {
            return Err(Error::Dataset("rho must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn features(&self) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.d_x() * (self.m() + 1) + self.m());
        z.extend_from_slice(&self.values);
        for row in &self.nominal_weights {
            z.extend_from_slice(row);
        }
        z.extend_from_slice(&self.capacities);
        z
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        dot(&self.values, x)
    }

    /// Worst case of each capacity row at `x`.
    pub fn worst_cases(&self, x: &[f64]) -> Vec<f64> {
        self.nominal_weights
            .iter()
            .zip(&self.capacities)
            .map(|(row, c)| robust_affine(x, -c, row, self.rho, self.norm_kind, 1.0))
            .collect()
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<ProblemEval> {
        check_len("knapsack decision", self.d_x(), x.len())?;
        let sub = dual_norm_subgradient(x, self.norm_kind);
        let worst_case_grads = self
            .nominal_weights
            .iter()
            .map(|row| row.iter().zip(&sub).map(|(w, s)| w + self.rho * s).collect())
            .collect();
        Ok(ProblemEval {
            objective: self.objective(x),
            objective_grad: self.values.clone(),
            worst_cases: self.worst_cases(x),
            worst_case_grads,
        })
    }
}

pub fn generate_knapsack(cfg: &KnapsackGenConfig) -> Result<Vec<KnapsackInstance>> {
    if cfg.d_x == 0 || cfg.m == 0 || cfg.count == 0 {
        return Err(Error::Config(
            "knapsack generation needs d_x >= 1, m >= 1 and count >= 1".into(),
        ));
    }
    if !(cfg.rho >= 0.0) || !cfg.rho.is_finite() {
        return Err(Error::Config(format!("rho must be >= 0, got {}", cfg.rho)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let instances = (0..cfg.count)
        .map(|_| {
            let values: Vec<f64> = (0..cfg.d_x).map(|_| rng.random_range(1.0..10.0)).collect();
            let nominal_weights: Vec<Vec<f64>> = (0..cfg.m)
                .map(|_| (0..cfg.d_x).map(|_| rng.random_range(0.5..1.5)).collect())
                .collect();
            let capacities = nominal_weights
                .iter()
                .map(|row| rng.random_range(0.2..0.4) * row.iter().sum::<f64>())
                .collect();
            KnapsackInstance {
                values,
                nominal_weights,
                capacities,
                rho: cfg.rho,
                norm_kind: cfg.norm,
            }
        })
        .collect();
    Ok(instances)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(seed: u64) -> KnapsackGenConfig {
        KnapsackGenConfig {
            d_x: 6,
            m: 3,
            rho: 0.1,
            norm: NormKind::Box,
            count: 20,
            seed,
        }
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(generate_knapsack(&cfg(7)).unwrap(), generate_knapsack(&cfg(7)).unwrap());
        assert_ne!(generate_knapsack(&cfg(7)).unwrap(), generate_knapsack(&cfg(8)).unwrap());
    }

    #[test]
    fn invalid_sizes() {
        let mut c = cfg(1);
        c.m = 0;
        assert!(generate_knapsack(&c).is_err());
        let mut c = cfg(1);
        c.count = 0;
        assert!(generate_knapsack(&c).is_err());
    }

    #[test]
    fn zero_decision_is_strictly_feasible() {
        for inst in generate_knapsack(&cfg(3)).unwrap() {
            inst.validate().unwrap();
            let e = inst.evaluate(&vec![0.0; inst.d_x()]).unwrap();
            assert_eq!(e.objective, 0.0);
            for (g, c) in e.worst_cases.iter().zip(&inst.capacities) {
                assert_eq!(*g, -c);
                assert!(*g < 0.0);
            }
        }
    }

    #[test]
    fn value_distribution_mean() {
        let c = KnapsackGenConfig {
            d_x: 100,
            m: 1,
            rho: 0.1,
            norm: NormKind::Box,
            count: 100,
            seed: 99,
        };
        let all: Vec<f64> = generate_knapsack(&c)
            .unwrap()
            .into_iter()
            .flat_map(|i| i.values)
            .collect();
        assert_eq!(all.len(), 10_000);
        let mean = all.iter().sum::<f64>() / all.len() as f64;
        assert!((5.4..=5.6).contains(&mean), "mean {mean}");
    }

    #[test]
    fn tight_two_item_example() {
        let inst = KnapsackInstance {
            values: vec![1.0, 1.0],
            nominal_weights: vec![vec![1.0, 1.0]],
            capacities: vec![3.0],
            rho: 0.5,
            norm_kind: NormKind::Box,
        };
        // worst-case weights (1.5, 1.5) at x = (1, 1) use exactly the capacity
        let e = inst.evaluate(&[1.0, 1.0]).unwrap();
        assert!(e.worst_cases[0].abs() < 1e-15);
        assert_eq!(e.worst_case_grads[0], vec![1.5, 1.5]);
    }

    #[test]
    fn zero_radius_is_nominal() {
        let mut inst = generate_knapsack(&cfg(5)).unwrap().remove(0);
        inst.rho = 0.0;
        let x = [0.2, 0.9, 0.1, 0.4, 0.5, 0.7];
        let e = inst.evaluate(&x).unwrap();
        for (j, g) in e.worst_cases.iter().enumerate() {
            let nominal = dot(&inst.nominal_weights[j], &x) - inst.capacities[j];
            assert!((g - nominal).abs() < 1e-14);
        }
    }

    #[test]
    fn features_layout() {
        let inst = KnapsackInstance {
            values: vec![1.0, 2.0],
            nominal_weights: vec![vec![3.0, 4.0]],
            capacities: vec![5.0],
            rho: 0.1,
            norm_kind: NormKind::Box,
        };
        assert_eq!(inst.features(), vec![1.0, 2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn shape_mismatch() {
        let inst = generate_knapsack(&cfg(5)).unwrap().remove(0);
        assert!(inst.evaluate(&[0.0; 2]).is_err());
    }
}
