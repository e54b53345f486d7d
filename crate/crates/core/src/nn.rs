//! Fully connected network with hand-derived reverse-mode gradients and Adam.
//!
//! Hidden layers use a configurable activation; the output layer is linear.
//! The raw output `w` is handed to a domain layer (see [`crate::domain`])
//! which maps it into the decision domain.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::{axpy, DenseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation output `a`.
    #[inline]
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::Config(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// Shape `(out, in)`.
    pub weights: DenseMatrix,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct MlpModel {
    layer_dims: Vec<usize>,
    layers: Vec<Layer>,
    hidden_activation: Activation,
    seed: u64,
    // Bumped on every parameter update so stale tapes are detected.
    version: u64,
}

impl PartialEq for MlpModel {
    fn eq(&self, other: &Self) -> bool {
        self.layer_dims == other.layer_dims
            && self.layers == other.layers
            && self.hidden_activation == other.hidden_activation
            && self.seed == other.seed
    }
}

/// Activations cached by [`MlpModel::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    layer_dims: Vec<usize>,
    version: u64,
    /// `activations[0]` is the input, `activations[L]` the raw output.
    activations: Vec<Vec<f64>>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.activations.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

fn validate_dims(layer_dims: &[usize]) -> Result<()> {
    if layer_dims.len() < 2 {
        return Err(Error::Config(
            "a network needs at least an input and an output dimension".into(),
        ));
    }
    if layer_dims.contains(&0) {
        return Err(Error::Config("layer dimensions must be positive".into()));
    }
    Ok(())
}

impl MlpModel {
    /// Xavier-uniform weights, zero biases.
    pub fn new(layer_dims: &[usize], hidden_activation: Activation, seed: u64) -> Result<Self> {
        validate_dims(layer_dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = layer_dims
            .windows(2)
            .map(|pair| {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-bound..=bound))
                    .collect();
                Layer {
                    weights: DenseMatrix::from_vec(fan_out, fan_in, data)
                        .expect("dimensions computed above"),
                    biases: vec![0.0; fan_out],
                }
            })
            .collect();
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            layers,
            hidden_activation,
            seed,
            version: 0,
        })
    }

    pub fn zeros(layer_dims: &[usize], hidden_activation: Activation) -> Result<Self> {
        validate_dims(layer_dims)?;
        let layers = layer_dims
            .windows(2)
            .map(|p| Layer {
                weights: DenseMatrix::zeros(p[1], p[0]),
                biases: vec![0.0; p[1]],
            })
            .collect();
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            layers,
            hidden_activation,
            seed: 0,
            version: 0,
        })
    }

    pub fn from_layers(layers: Vec<Layer>, hidden_activation: Activation, seed: u64) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::Config("a network needs at least one layer".into()))?;
        let mut layer_dims = vec![first.weights.cols()];
        for layer in &layers {
            check_len("layer input width", *layer_dims.last().unwrap(), layer.weights.cols())?;
            check_len("layer bias length", layer.weights.rows(), layer.biases.len())?;
            if !layer.weights.is_finite() || layer.biases.iter().any(|b| !b.is_finite()) {
                return Err(Error::Numerical("network parameters must be finite".into()));
            }
            layer_dims.push(layer.weights.rows());
        }
        validate_dims(&layer_dims)?;
        Ok(Self {
            layer_dims,
            layers,
            hidden_activation,
            seed,
            version: 0,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        self.version += 1;
        &mut self.layers
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden_activation
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.data().len() + l.biases.len())
            .sum()
    }

    /// Flattened parameters, layer by layer: weights (row-major) then biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(l.weights.data());
            out.extend_from_slice(&l.biases);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        check_len("MlpModel::set_params", self.num_params(), params.len())?;
        let mut offset = 0;
        for l in self.layers_mut() {
            let n = l.weights.data().len();
            l.weights.data_mut().copy_from_slice(&params[offset..offset + n]);
            offset += n;
            let nb = l.biases.len();
            l.biases.copy_from_slice(&params[offset..offset + nb]);
            offset += nb;
        }
        Ok(())
    }

    pub fn forward(&self, z: &[f64]) -> Result<(Vec<f64>, Tape)> {
        check_len("network input", self.input_dim(), z.len())?;
        let last = self.layers.len() - 1;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(z.to_vec());
        for (idx, layer) in self.layers.iter().enumerate() {
            let mut out = layer.biases.clone();
            for (o, row) in out.iter_mut().zip(layer.weights.data().chunks_exact(layer.weights.cols())) {
                *o += crate::linalg::dot(row, activations.last().unwrap());
            }
            if idx != last {
                for v in &mut out {
                    *v = self.hidden_activation.apply(*v);
                }
            }
            activations.push(out);
        }
        let w = activations.last().unwrap().clone();
        Ok((
            w,
            Tape {
                layer_dims: self.layer_dims.clone(),
                version: self.version,
                activations,
            },
        ))
    }

    /// Forward pass without recording a tape.
    pub fn predict(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_len("network input", self.input_dim(), z.len())?;
        let last = self.layers.len() - 1;
        let mut current = z.to_vec();
        for (idx, layer) in self.layers.iter().enumerate() {
            let mut out = layer.biases.clone();
            for (o, row) in out.iter_mut().zip(layer.weights.data().chunks_exact(layer.weights.cols())) {
                *o += crate::linalg::dot(row, &current);
            }
            if idx != last {
                for v in &mut out {
                    *v = self.hidden_activation.apply(*v);
                }
            }
            current = out;
        }
        Ok(current)
    }

    /// Batched forward pass; `inputs` holds one instance per row.
    pub fn predict_batch(&self, inputs: &DenseMatrix) -> Result<DenseMatrix> {
        check_len("batched network input", self.input_dim(), inputs.cols())?;
        let batch = inputs.rows();
        let last = self.layers.len() - 1;
        let mut current = inputs.clone();
        for (idx, layer) in self.layers.iter().enumerate() {
            let (n_out, n_in) = (layer.weights.rows(), layer.weights.cols());
            let mut out = DenseMatrix::zeros(batch, n_out);
            for r in 0..batch {
                out.row_mut(r).copy_from_slice(&layer.biases);
            }
            // out (batch x n_out) += current (batch x n_in) * W^T (n_in x n_out)
            unsafe {
                matrixmultiply::dgemm(
                    batch,
                    n_in,
                    n_out,
                    1.0,
                    current.data().as_ptr(),
                    n_in as isize,
                    1,
                    layer.weights.data().as_ptr(),
                    1,
                    n_in as isize,
                    1.0,
                    out.data_mut().as_mut_ptr(),
                    n_out as isize,
                    1,
                );
            }
            if idx != last {
                for v in out.data_mut() {
                    *v = self.hidden_activation.apply(*v);
                }
            }
            current = out;
        }
        Ok(current)
    }

    /// Gradient of `dl_dw . w` with respect to every weight and bias.
    pub fn backward(&self, tape: &Tape, dl_dw: &[f64]) -> Result<MlpGrad> {
        if tape.layer_dims != self.layer_dims {
            return Err(Error::Tape(format!(
                "tape recorded for layer dims {:?}, model has {:?}",
                tape.layer_dims, self.layer_dims
            )));
        }
        if tape.version != self.version {
            return Err(Error::Tape(
                "model parameters changed since the forward pass".into(),
            ));
        }
        check_len("output gradient", self.output_dim(), dl_dw.len())?;

        let mut grad = MlpGrad::zeros_like(self);
        let mut delta = dl_dw.to_vec();
        for idx in (0..self.layers.len()).rev() {
            let input = &tape.activations[idx];
            grad.weights[idx].rank1_acc(1.0, &delta, input);
            axpy(1.0, &delta, &mut grad.biases[idx]);
            if idx > 0 {
                let mut upstream = vec![0.0; input.len()];
                self.layers[idx].weights.matvec_t_acc(&delta, &mut upstream);
                for (u, a) in upstream.iter_mut().zip(input) {
                    *u *= self.hidden_activation.derivative_from_output(*a);
                }
                delta = upstream;
            }
        }
        Ok(grad)
    }
}

/// Gradient with the same shape as an [`MlpModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrad {
    pub weights: Vec<DenseMatrix>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpGrad {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Self {
            weights: model
                .layers
                .iter()
                .map(|l| DenseMatrix::zeros(l.weights.rows(), l.weights.cols()))
                .collect(),
            biases: model.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }

    pub fn add_scaled(&mut self, alpha: f64, other: &MlpGrad) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            axpy(alpha, b.data(), a.data_mut());
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            axpy(alpha, b, a);
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for w in &mut self.weights {
            w.data_mut().iter_mut().for_each(|v| *v *= alpha);
        }
        for b in &mut self.biases {
            b.iter_mut().for_each(|v| *v *= alpha);
        }
    }

    /// Flattened in the same order as [`MlpModel::params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.data());
            out.extend_from_slice(b);
        }
        out
    }

    fn same_shape(&self, model: &MlpModel) -> bool {
        self.weights.len() == model.layers.len()
            && self
                .weights
                .iter()
                .zip(&self.biases)
                .zip(&model.layers)
                .all(|((w, b), l)| {
                    w.rows() == l.weights.rows()
                        && w.cols() == l.weights.cols()
                        && b.len() == l.biases.len()
                })
    }

    fn first_non_finite_layer(&self) -> Option<usize> {
        self.weights
            .iter()
            .zip(&self.biases)
            .position(|(w, b)| !w.is_finite() || b.iter().any(|v| !v.is_finite()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Decoupled weight decay on weight matrices (biases are not decayed).
    #[serde(default)]
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    first_moment: MlpGrad,
    second_moment: MlpGrad,
    step: u64,
}

impl AdamState {
    pub fn new(model: &MlpModel, config: AdamConfig) -> Self {
        Self {
            config,
            first_moment: MlpGrad::zeros_like(model),
            second_moment: MlpGrad::zeros_like(model),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update. The model is left untouched on error.
    pub fn step(&mut self, model: &mut MlpModel, grad: &MlpGrad) -> Result<()> {
        if !grad.same_shape(model) || !self.first_moment.same_shape(model) {
            return Err(Error::Shape {
                context: "adam step",
                expected: model.num_params(),
                got: grad.flatten().len(),
            });
        }
        if let Some(layer) = grad.first_non_finite_layer() {
            return Err(Error::NonFiniteGradient { layer });
        }
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
            weight_decay,
        } = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);

        let update = |param: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], decay: f64| {
            for (((p, &g), m), v) in param.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= learning_rate * (m_hat / (v_hat.sqrt() + epsilon) + decay * *p);
            }
        };

        let layers = model.layers_mut();
        for (idx, layer) in layers.iter_mut().enumerate() {
            update(
                layer.weights.data_mut(),
                grad.weights[idx].data(),
                self.first_moment.weights[idx].data_mut(),
                self.second_moment.weights[idx].data_mut(),
                weight_decay,
            );
            update(
                &mut layer.biases,
                &grad.biases[idx],
                &mut self.first_moment.biases[idx],
                &mut self.second_moment.biases[idx],
                0.0,
            );
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weight_model_outputs_last_bias() {
        let mut m = MlpModel::zeros(&[3, 4, 2], Activation::Tanh).unwrap();
        m.layers_mut()[1].biases = vec![0.25, -1.5];
        let (w, _) = m.forward(&[1.0, -2.0, 3.0]).unwrap();
        assert_eq!(w, vec![0.25, -1.5]);
    }

    #[test]
    fn identity_single_layer() {
        let layer = Layer {
            weights: DenseMatrix::identity(2),
            biases: vec![0.0, 0.0],
        };
        let m = MlpModel::from_layers(vec![layer], Activation::Relu, 0).unwrap();
        assert_eq!(m.forward(&[1.0, 2.0]).unwrap().0, vec![1.0, 2.0]);
    }

    #[test]
    fn input_shape_error() {
        let m = MlpModel::new(&[3, 2], Activation::Tanh, 1).unwrap();
        assert!(matches!(m.forward(&[1.0]), Err(Error::Shape { .. })));
    }

    #[test]
    fn xavier_bounds() {
        let dims = [7, 13, 5];
        let m = MlpModel::new(&dims, Activation::Tanh, 42).unwrap();
        for (l, pair) in m.layers().iter().zip(dims.windows(2)) {
            let bound = (6.0 / (pair[0] + pair[1]) as f64).sqrt();
            assert!(l.weights.data().iter().all(|w| w.abs() <= bound));
            assert!(l.biases.iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn zero_output_gradient_gives_zero_grad() {
        let m = MlpModel::new(&[3, 5, 2], Activation::Tanh, 3).unwrap();
        let (_, tape) = m.forward(&[0.1, 0.2, 0.3]).unwrap();
        let g = m.backward(&tape, &[0.0, 0.0]).unwrap();
        assert!(g.flatten().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_linear_layer_gradient() {
        let m = MlpModel::new(&[3, 2], Activation::Tanh, 9).unwrap();
        let z = [0.5, -1.0, 2.0];
        let (_, tape) = m.forward(&z).unwrap();
        let g = m.backward(&tape, &[1.0, 0.0]).unwrap();
        assert_eq!(g.weights[0].row(0), &z);
        assert_eq!(g.weights[0].row(1), &[0.0, 0.0, 0.0]);
        assert_eq!(g.biases[0], vec![1.0, 0.0]);
    }

    #[test]
    fn stale_tape_rejected() {
        let mut m = MlpModel::new(&[2, 3, 1], Activation::Tanh, 1).unwrap();
        let (_, tape) = m.forward(&[1.0, 1.0]).unwrap();
        let g = MlpGrad::zeros_like(&m);
        let mut adam = AdamState::new(&m, AdamConfig::default());
        adam.step(&mut m, &g).unwrap();
        assert!(matches!(m.backward(&tape, &[1.0]), Err(Error::Tape(_))));

        let other = MlpModel::new(&[2, 4, 1], Activation::Tanh, 1).unwrap();
        let (_, tape) = other.forward(&[1.0, 1.0]).unwrap();
        assert!(matches!(m.backward(&tape, &[1.0]), Err(Error::Tape(_))));
    }

    #[test]
    fn adam_zero_gradient_keeps_model() {
        let mut m = MlpModel::new(&[2, 3, 1], Activation::Tanh, 5).unwrap();
        let before = m.params();
        let mut adam = AdamState::new(&m, AdamConfig::default());
        let zero = MlpGrad::zeros_like(&m);
        adam.step(&mut m, &zero).unwrap();
        assert_eq!(m.params(), before);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut m = MlpModel::zeros(&[1, 1], Activation::Tanh).unwrap();
        let mut g = MlpGrad::zeros_like(&m);
        g.weights[0].data_mut()[0] = 1.0;
        let cfg = AdamConfig {
            learning_rate: 0.1,
            ..AdamConfig::default()
        };
        let mut adam = AdamState::new(&m, cfg);
        adam.step(&mut m, &g).unwrap();
        // m_hat = 1, v_hat = 1 => step = lr / (1 + eps)
        let expected = -0.1 / (1.0 + 1e-8);
        assert!((m.layers()[0].weights.data()[0] - expected).abs() < 1e-15);
        assert_eq!(m.layers()[0].biases[0], 0.0);
    }

    #[test]
    fn adam_steps_bounded_by_lr() {
        let mut m = MlpModel::zeros(&[1, 1], Activation::Tanh).unwrap();
        let mut g = MlpGrad::zeros_like(&m);
        g.weights[0].data_mut()[0] = 1.0;
        let mut adam = AdamState::new(&m, AdamConfig::default());
        let mut prev = 0.0;
        for _ in 0..2 {
            adam.step(&mut m, &g).unwrap();
            let w = m.layers()[0].weights.data()[0];
            let step = (w - prev).abs();
            assert!(step > 0.0 && step <= 1e-3 + 1e-15);
            prev = w;
        }
        assert_eq!(adam.step_count(), 2);
    }

    #[test]
    fn adam_rejects_non_finite_with_layer_index() {
        let mut m = MlpModel::new(&[2, 3, 1], Activation::Tanh, 5).unwrap();
        let before = m.params();
        let mut g = MlpGrad::zeros_like(&m);
        g.biases[1][0] = f64::NAN;
        let mut adam = AdamState::new(&m, AdamConfig::default());
        assert!(matches!(
            adam.step(&mut m, &g),
            Err(Error::NonFiniteGradient { layer: 1 })
        ));
        assert_eq!(m.params(), before);
    }

    #[test]
    fn batch_prediction_matches_single() {
        let m = MlpModel::new(&[4, 6, 3], Activation::Tanh, 11).unwrap();
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|i| (0..4).map(|j| (i * 4 + j) as f64 * 0.1 - 1.0).collect())
            .collect();
        let batch = m.predict_batch(&DenseMatrix::from_rows(&rows).unwrap()).unwrap();
        for (i, row) in rows.iter().enumerate() {
            let single = m.predict(row).unwrap();
            for (a, b) in single.iter().zip(batch.row(i)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
