//! Final-layer maps that keep network outputs inside the decision domain.
//!
//! Box domains use a (scaled) sigmoid in both modes. The binary hypercube
//! uses a step map at test time, `x_i = 1(w_i > 0)`, and at training time
//! the clipped surrogate `x_i = min(1, max(0, w_i / gamma))`, which is the
//! maximizer of `w^T x - gamma/2 ||x||^2` over `[0, 1]^n`.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

pub const DEFAULT_GAMMA: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainKind {
    UnitBoxSigmoid,
    ScaledBoxSigmoid { upper: Vec<f64> },
    Binary { gamma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerMode {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainLayer {
    kind: DomainKind,
    mode: LayerMode,
}

#[inline]
pub fn sigmoid(w: f64) -> f64 {
    if w >= 0.0 {
        1.0 / (1.0 + (-w).exp())
    } else {
        let e = w.exp();
        e / (1.0 + e)
    }
}

impl DomainLayer {
    pub fn new(kind: DomainKind, mode: LayerMode) -> Result<Self> {
        match &kind {
            DomainKind::Binary { gamma } if !(*gamma > 0.0) || !gamma.is_finite() => {
                return Err(Error::Config(format!(
                    "binary domain smoothing gamma must be positive, got {gamma}"
                )));
            }
            DomainKind::ScaledBoxSigmoid { upper } if upper.iter().any(|c| !(*c > 0.0)) => {
                return Err(Error::Config(
                    "scaled box upper bounds must be positive".into(),
                ));
            }
            _ => {}
        }
        Ok(Self { kind, mode })
    }

    pub fn unit_box(mode: LayerMode) -> Self {
        Self {
            kind: DomainKind::UnitBoxSigmoid,
            mode,
        }
    }

    pub fn binary(gamma: f64, mode: LayerMode) -> Result<Self> {
        Self::new(DomainKind::Binary { gamma }, mode)
    }

    pub fn scaled_box(upper: Vec<f64>, mode: LayerMode) -> Result<Self> {
        Self::new(DomainKind::ScaledBoxSigmoid { upper }, mode)
    }

    pub fn kind(&self) -> &DomainKind {
        &self.kind
    }

    pub fn mode(&self) -> LayerMode {
        self.mode
    }

    pub fn apply(&self, w: &[f64]) -> Result<Vec<f64>> {
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("domain layer input must be finite".into()));
        }
        Ok(match (&self.kind, self.mode) {
            (DomainKind::UnitBoxSigmoid, _) => w.iter().map(|&v| sigmoid(v)).collect(),
            (DomainKind::ScaledBoxSigmoid { upper }, _) => {
                check_len("scaled box domain", upper.len(), w.len())?;
                w.iter().zip(upper).map(|(&v, c)| c * sigmoid(v)).collect()
            }
            (DomainKind::Binary { gamma }, LayerMode::Train) => {
                w.iter().map(|&v| (v / gamma).clamp(0.0, 1.0)).collect()
            }
            (DomainKind::Binary { .. }, LayerMode::Test) => {
                w.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect()
            }
        })
    }

    /// Chain rule through [`DomainLayer::apply`]. Only defined in train mode.
    pub fn apply_grad(&self, w: &[f64], dl_dx: &[f64]) -> Result<Vec<f64>> {
        if self.mode == LayerMode::Test {
            return Err(Error::TestModeGradient);
        }
        check_len("domain layer gradient", w.len(), dl_dx.len())?;
        Ok(match &self.kind {
            DomainKind::UnitBoxSigmoid => w
                .iter()
                .zip(dl_dx)
                .map(|(&v, g)| {
                    let s = sigmoid(v);
                    g * s * (1.0 - s)
                })
                .collect(),
            DomainKind::ScaledBoxSigmoid { upper } => {
                check_len("scaled box domain", upper.len(), w.len())?;
                w.iter()
                    .zip(dl_dx)
                    .zip(upper)
                    .map(|((&v, g), c)| {
                        let s = sigmoid(v);
                        g * c * s * (1.0 - s)
                    })
                    .collect()
            }
            DomainKind::Binary { gamma } => w
                .iter()
                .zip(dl_dx)
                .map(|(&v, g)| {
                    let t = v / gamma;
                    if t > 0.0 && t < 1.0 {
                        g / gamma
                    } else {
                        0.0
                    }
                })
                .collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_test_mode_step() {
        let layer = DomainLayer::binary(0.5, LayerMode::Test).unwrap();
        assert_eq!(layer.apply(&[0.3, -0.3, 0.0]).unwrap(), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn binary_train_mode_clip() {
        let layer = DomainLayer::binary(0.5, LayerMode::Train).unwrap();
        let x = layer.apply(&[0.3, -0.3, 1.0]).unwrap();
        assert!((x[0] - 0.6).abs() < 1e-15);
        assert_eq!(&x[1..], &[0.0, 1.0]);
    }

    #[test]
    fn sigmoid_at_zero() {
        let layer = DomainLayer::unit_box(LayerMode::Train);
        assert_eq!(layer.apply(&[0.0; 4]).unwrap(), vec![0.5; 4]);
        let scaled = DomainLayer::scaled_box(vec![2.0, 6.0], LayerMode::Test).unwrap();
        assert_eq!(scaled.apply(&[0.0, 0.0]).unwrap(), vec![1.0, 3.0]);
    }

    #[test]
    fn invalid_configs() {
        assert!(DomainLayer::binary(0.0, LayerMode::Train).is_err());
        assert!(DomainLayer::scaled_box(vec![1.0, 0.0], LayerMode::Train).is_err());
    }

    #[test]
    fn binary_grad_interior_and_saturated() {
        let layer = DomainLayer::binary(1.0, LayerMode::Train).unwrap();
        assert_eq!(layer.apply_grad(&[0.5], &[2.0]).unwrap(), vec![2.0]);
        assert_eq!(layer.apply_grad(&[2.0], &[2.0]).unwrap(), vec![0.0]);
        assert_eq!(layer.apply_grad(&[-1.0], &[2.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn test_mode_has_no_gradient() {
        let layer = DomainLayer::binary(1.0, LayerMode::Test).unwrap();
        assert!(matches!(
            layer.apply_grad(&[0.5], &[1.0]),
            Err(Error::TestModeGradient)
        ));
    }

    #[test]
    fn sigmoid_grads_match_finite_differences() {
        let w = [0.3, -1.7, 2.2, -0.05];
        let dl = [1.0, -0.5, 2.0, 0.25];
        let layers = [
            DomainLayer::unit_box(LayerMode::Train),
            DomainLayer::scaled_box(vec![1.5, 3.0, 0.2, 7.0], LayerMode::Train).unwrap(),
        ];
        let h = 1e-6;
        for layer in &layers {
            let g = layer.apply_grad(&w, &dl).unwrap();
            for i in 0..w.len() {
                let mut p = w;
                let mut m = w;
                p[i] += h;
                m[i] -= h;
                let xp = layer.apply(&p).unwrap();
                let xm = layer.apply(&m).unwrap();
                let fd: f64 = (0..w.len()).map(|k| dl[k] * (xp[k] - xm[k]) / (2.0 * h)).sum();
                assert!((fd - g[i]).abs() < 1e-6, "{fd} vs {}", g[i]);
            }
        }
    }

    /// Maximizes `w^T x - gamma/2 ||x||^2` over the unit box by projected gradient.
    fn projected_gradient_oracle(w: &[f64], gamma: f64) -> Vec<f64> {
        let mut x = vec![0.5; w.len()];
        let step = 0.5 / gamma;
        for _ in 0..2000 {
            for (xi, wi) in x.iter_mut().zip(w) {
                *xi = (*xi + step * (wi - gamma * *xi)).clamp(0.0, 1.0);
            }
        }
        x
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn outputs_stay_in_domain(w in prop::collection::vec(-50.0f64..50.0, 1..16), gamma in 1e-3f64..5.0) {
                let test = DomainLayer::binary(gamma, LayerMode::Test).unwrap().apply(&w).unwrap();
                prop_assert!(test.iter().all(|v| *v == 0.0 || *v == 1.0));
                let train = DomainLayer::binary(gamma, LayerMode::Train).unwrap().apply(&w).unwrap();
                prop_assert!(train.iter().all(|v| (0.0..=1.0).contains(v)));
                let sig = DomainLayer::unit_box(LayerMode::Train).apply(&w).unwrap();
                prop_assert!(sig.iter().all(|v| (0.0..=1.0).contains(v)));
            }

            #[test]
            fn surrogate_agrees_with_step_when_gamma_below_margin(
                w in prop::collection::vec(prop_oneof![-10.0f64..-0.05, 0.05f64..10.0], 1..16),
                frac in 0.01f64..0.99,
            ) {
                let delta = w.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
                let gamma = frac * delta;
                let train = DomainLayer::binary(gamma, LayerMode::Train).unwrap().apply(&w).unwrap();
                let test = DomainLayer::binary(gamma, LayerMode::Test).unwrap().apply(&w).unwrap();
                prop_assert_eq!(train, test);
            }

            #[test]
            fn clip_solves_smoothed_linear_program(w in prop::collection::vec(-3.0f64..3.0, 1..10), gamma in 0.05f64..2.0) {
                let clip = DomainLayer::binary(gamma, LayerMode::Train).unwrap().apply(&w).unwrap();
                let oracle = projected_gradient_oracle(&w, gamma);
                for (a, b) in clip.iter().zip(&oracle) {
                    prop_assert!((a - b).abs() <= 1e-6);
                }
            }
        }
    }
}
