//! A trained proxy (network, domain layer, feature standardization) and its
//! JSON checkpoint format.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::LayerMode;
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::nn::{Activation, Layer, MlpModel};
use crate::problems::{parameterize_flat, App, Instance, Standardizer};
use crate::training::{TrainConfig, TrainMode};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ProxyModel {
    pub app: App,
    pub mlp: MlpModel,
    pub standardizer: Standardizer,
    pub gamma: f64,
    /// Penalty coefficient used in training; `None` for the supervised baseline.
    pub nu: Option<f64>,
    pub mode: TrainMode,
    pub train_config: Option<TrainConfig>,
}

impl ProxyModel {
    pub fn features(&self, inst: &Instance) -> Result<Vec<f64>> {
        self.standardizer.transform(&inst.features())
    }

    /// Raw network output for an instance.
    pub fn raw_output(&self, inst: &Instance) -> Result<Vec<f64>> {
        self.mlp.predict(&self.features(inst)?)
    }

    /// Flat decision vector through the domain layer in the given mode.
    pub fn decide(&self, inst: &Instance, mode: LayerMode) -> Result<Vec<f64>> {
        let w = self.raw_output(inst)?;
        parameterize_flat(self.app, mode, self.gamma, inst, &w)
    }

    /// Test-mode decisions for many instances through one batched forward pass.
    pub fn decide_batch(&self, instances: &[&Instance]) -> Result<Vec<Vec<f64>>> {
        if instances.is_empty() {
            return Ok(Vec::new());
        }
        let mut data = Vec::with_capacity(instances.len() * self.mlp.input_dim());
        for inst in instances {
            data.extend(self.features(inst)?);
        }
        let inputs = DenseMatrix::from_vec(instances.len(), self.mlp.input_dim(), data)?;
        let outputs = self.mlp.predict_batch(&inputs)?;
        instances
            .iter()
            .enumerate()
            .map(|(i, inst)| parameterize_flat(self.app, LayerMode::Test, self.gamma, inst, outputs.row(i)))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&Checkpoint::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        match value.get("format_version").and_then(|v| v.as_u64()) {
            Some(v) if v == FORMAT_VERSION as u64 => {}
            other => {
                return Err(Error::Checkpoint(format!(
                    "unsupported format_version {other:?}, expected {FORMAT_VERSION}"
                )))
            }
        }
        let ck: Checkpoint = serde_json::from_value(value)?;
        ck.into_model()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format_version: u32,
    app: App,
    layer_dims: Vec<usize>,
    /// Row-major `(out, in)` per layer.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    hidden_activation: Activation,
    domain_layer: String,
    gamma: f64,
    nu: Option<f64>,
    seed: u64,
    mode: TrainMode,
    standardizer: Standardizer,
    train_config: Option<TrainConfig>,
}

impl From<&ProxyModel> for Checkpoint {
    fn from(m: &ProxyModel) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            app: m.app,
            layer_dims: m.mlp.layer_dims().to_vec(),
            weights: m.mlp.layers().iter().map(|l| l.weights.data().to_vec()).collect(),
            biases: m.mlp.layers().iter().map(|l| l.biases.clone()).collect(),
            hidden_activation: m.mlp.hidden_activation(),
            domain_layer: m.app.domain_layer_name().to_string(),
            gamma: m.gamma,
            nu: m.nu,
            seed: m.mlp.seed(),
            mode: m.mode,
            standardizer: m.standardizer.clone(),
            train_config: m.train_config.clone(),
        }
    }
}

impl Checkpoint {
    fn into_model(self) -> Result<ProxyModel> {
        if self.domain_layer != self.app.domain_layer_name() {
            return Err(Error::Checkpoint(format!(
                "domain layer `{}` does not match app {}",
                self.domain_layer, self.app
            )));
        }
        if self.weights.len() + 1 != self.layer_dims.len() || self.biases.len() != self.weights.len() {
            return Err(Error::Checkpoint("layer count does not match layer_dims".into()));
        }
        let layers = self
            .weights
            .into_iter()
            .zip(self.biases)
            .zip(self.layer_dims.windows(2))
            .map(|((w, b), dims)| {
                Ok(Layer {
                    weights: DenseMatrix::from_vec(dims[1], dims[0], w)?,
                    biases: b,
                })
            })
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mlp = MlpModel::from_layers(layers, self.hidden_activation, self.seed)?;
        if self.standardizer.dim() != mlp.input_dim() {
            return Err(Error::Checkpoint(
                "standardizer width does not match the network input".into(),
            ));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::Checkpoint("gamma must be positive".into()));
        }
        Ok(ProxyModel {
            app: self.app,
            mlp,
            standardizer: self.standardizer,
            gamma: self.gamma,
            nu: self.nu,
            mode: self.mode,
            train_config: self.train_config,
        })
    }
}
