//! Mini-batch training of proxies: self-supervised with the exact-penalty
//! loss, or supervised regression onto solved labels.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::ProxyModel;
use crate::domain::{LayerMode, DEFAULT_GAMMA};
use crate::error::{check_len, Error, Result};
use crate::nn::{Activation, AdamConfig, AdamState, MlpGrad, MlpModel};
use crate::penalty::{sl_loss, ssl_loss, ssl_loss_grad_x, PenaltyConfig};
use crate::problems::{output_dim, parameterize_backward, parameterize_flat, App, Instance, Standardizer};
use crate::solvers::feasibility_check;
use crate::uncertainty::NormKind;

/// Instances per parallel work unit when accumulating a batch gradient.
const CHUNK: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    Ssl,
    Supervised,
}

impl std::str::FromStr for TrainMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ssl" => Ok(TrainMode::Ssl),
            "supervised" | "sl" => Ok(TrainMode::Supervised),
            other => Err(Error::Config(format!("unknown mode `{other}` (expected ssl or supervised)"))),
        }
    }
}

/// Which validation statistic picks the returned checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    ValLoss,
    /// Highest validation feasible %, ties broken by loss.
    ValFeasibility,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self { train: 0.70, val: 0.15, test: 0.15 }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|f| !(0.0..=1.0).contains(f)) || ((parts.iter().sum::<f64>()) - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split fractions must lie in [0, 1] and sum to 1, got {parts:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub app: App,
    pub nu: f64,
    pub gamma: f64,
    pub rho: f64,
    pub norm_kind: NormKind,
    pub hidden_dims: Vec<usize>,
    pub hidden_activation: Activation,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Decoupled weight decay passed to Adam.
    #[serde(default)]
    pub weight_decay: f64,
    pub seed: u64,
    pub split: SplitFractions,
    pub mode: TrainMode,
    pub selection: Selection,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            app: App::KnapsackCont,
            nu: 10.0,
            gamma: DEFAULT_GAMMA,
            rho: App::KnapsackCont.default_rho(),
            norm_kind: NormKind::Box,
            hidden_dims: vec![128],
            hidden_activation: Activation::Tanh,
            epochs: 200,
            batch_size: 64,
            learning_rate: 1e-3,
            weight_decay: 0.0,
            seed: 0,
            split: SplitFractions::default(),
            mode: TrainMode::Ssl,
            selection: Selection::ValLoss,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.split.validate()?;
        if self.mode == TrainMode::Ssl && !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::Config(format!("nu must be positive in ssl mode, got {}", self.nu)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("gamma must be positive, got {}", self.gamma)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config("weight decay must be nonnegative".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.hidden_dims.contains(&0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded shuffle of `0..n` cut into train/val/test. Train and val sizes are
/// floored; the test set takes the remainder.
pub fn split_dataset(n: usize, fractions: &SplitFractions, seed: u64) -> Result<Split> {
    fractions.validate()?;
    if n < 10 {
        return Err(Error::Config(format!("dataset has {n} instances, at least 10 are needed to split")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    // Small epsilon keeps 0.7 * 100 from flooring to 69.
    let n_train = ((n as f64) * fractions.train + 1e-9).floor() as usize;
    let n_val = (((n as f64) * fractions.val + 1e-9).floor() as usize).min(n - n_train);
    let test = idx.split_off(n_train + n_val);
    let val = idx.split_off(n_train);
    Ok(Split { train: idx, val, test })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_feasible_pct: f64,
    pub val_mean_max_violation: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
    /// Epoch whose weights were kept.
    pub best_epoch: Option<usize>,
}

impl TrainLog {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

enum Target<'a> {
    Ssl(PenaltyConfig),
    Labels(&'a [Vec<f64>]),
}

/// Network plus everything needed to turn an instance into a loss.
struct Pipeline<'a> {
    app: App,
    gamma: f64,
    mlp: &'a MlpModel,
}

impl Pipeline<'_> {
    fn loss(&self, inst: &Instance, z: &[f64], target: &Target, i: usize) -> Result<f64> {
        let w = self.mlp.predict(z)?;
        let flat = parameterize_flat(self.app, LayerMode::Train, self.gamma, inst, &w)?;
        match target {
            Target::Ssl(cfg) => {
                let ev = inst.evaluate(&flat)?;
                Ok(ssl_loss(ev.objective, &ev.worst_cases, cfg)?.total)
            }
            Target::Labels(labels) => Ok(sl_loss(&flat, &labels[i])?.0),
        }
    }

    fn loss_and_grad(&self, inst: &Instance, z: &[f64], target: &Target, i: usize) -> Result<(f64, MlpGrad)> {
        let (w, tape) = self.mlp.forward(z)?;
        let flat = parameterize_flat(self.app, LayerMode::Train, self.gamma, inst, &w)?;
        let (loss, dflat) = match target {
            Target::Ssl(cfg) => {
                let ev = inst.evaluate(&flat)?;
                let total = ssl_loss(ev.objective, &ev.worst_cases, cfg)?.total;
                let g = ssl_loss_grad_x(&ev.objective_grad, &ev.worst_case_grads, &ev.worst_cases, cfg)?;
                (total, g)
            }
            Target::Labels(labels) => sl_loss(&flat, &labels[i])?,
        };
        let dw = parameterize_backward(self.app, self.gamma, inst, &w, &dflat)?;
        Ok((loss, self.mlp.backward(&tape, &dw)?))
    }
}

/// Composed training loss of one instance for the given model; the same
/// quantity whose gradient [`ssl_instance_grad`] returns.
pub fn ssl_instance_loss(model: &ProxyModel, inst: &Instance, nu: f64) -> Result<f64> {
    let pipe = Pipeline { app: model.app, gamma: model.gamma, mlp: &model.mlp };
    pipe.loss(inst, &model.features(inst)?, &Target::Ssl(PenaltyConfig::new(nu)?), 0)
}

/// Loss and parameter gradient (flattened like [`MlpModel::params`]).
pub fn ssl_instance_grad(model: &ProxyModel, inst: &Instance, nu: f64) -> Result<(f64, Vec<f64>)> {
    let pipe = Pipeline { app: model.app, gamma: model.gamma, mlp: &model.mlp };
    let (loss, grad) = pipe.loss_and_grad(inst, &model.features(inst)?, &Target::Ssl(PenaltyConfig::new(nu)?), 0)?;
    Ok((loss, grad.flatten()))
}

struct Prepared<'a> {
    instances: &'a [Instance],
    features: Vec<Vec<f64>>,
}

fn prepare<'a>(instances: &'a [Instance], std: &Standardizer) -> Result<Prepared<'a>> {
    let features = instances.iter().map(|i| std.transform(&i.features())).collect::<Result<_>>()?;
    Ok(Prepared { instances, features })
}

fn batch_gradient(pipe: &Pipeline, data: &Prepared, target: &Target, batch: &[usize]) -> Result<(f64, MlpGrad)> {
    let parts: Vec<Result<(f64, MlpGrad)>> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = MlpGrad::zeros_like(pipe.mlp);
            let mut loss = 0.0;
            for &i in chunk {
                let (l, g) = pipe.loss_and_grad(&data.instances[i], &data.features[i], target, i)?;
                loss += l;
                acc.add_scaled(1.0, &g);
            }
            Ok((loss, acc))
        })
        .collect();
    let mut total = MlpGrad::zeros_like(pipe.mlp);
    let mut loss = 0.0;
    for part in parts {
        let (l, g) = part?;
        loss += l;
        total.add_scaled(1.0, &g);
    }
    let scale = 1.0 / batch.len() as f64;
    total.scale(scale);
    Ok((loss * scale, total))
}

struct ValStats {
    loss: f64,
    feasible_pct: f64,
    mean_max_violation: f64,
}

fn validate_model(pipe: &Pipeline, data: &Prepared, target: &Target) -> Result<ValStats> {
    let n = data.instances.len();
    if n == 0 {
        return Ok(ValStats { loss: f64::NAN, feasible_pct: f64::NAN, mean_max_violation: f64::NAN });
    }
    let rows: Vec<Result<(f64, bool, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let inst = &data.instances[i];
            let z = &data.features[i];
            let loss = pipe.loss(inst, z, target, i)?;
            let w = pipe.mlp.predict(z)?;
            let flat = parameterize_flat(pipe.app, LayerMode::Test, pipe.gamma, inst, &w)?;
            let f = feasibility_check(inst, &flat)?;
            Ok((loss, f.feasible, f.max_violation))
        })
        .collect();
    let (mut loss, mut feasible, mut viol) = (0.0, 0usize, 0.0);
    for r in rows {
        let (l, f, v) = r?;
        loss += l;
        feasible += f as usize;
        viol += v;
    }
    Ok(ValStats {
        loss: loss / n as f64,
        feasible_pct: 100.0 * feasible as f64 / n as f64,
        mean_max_violation: viol / n as f64,
    })
}

fn is_better(sel: Selection, cand: &ValStats, best: &ValStats) -> bool {
    match sel {
        Selection::ValLoss => cand.loss < best.loss,
        Selection::ValFeasibility => {
            cand.feasible_pct > best.feasible_pct
                || (cand.feasible_pct == best.feasible_pct && cand.loss < best.loss)
        }
    }
}

fn fit(cfg: &TrainConfig, train: &[Instance], val: &[Instance], target_train: Target, target_val: Target) -> Result<(ProxyModel, TrainLog)> {
    cfg.validate()?;
    let first = train
        .first()
        .ok_or_else(|| Error::Config("training split is empty".into()))?;
    for inst in train.iter().chain(val) {
        inst.check_app(cfg.app)?;
        check_len("instance feature width", first.features().len(), inst.features().len())?;
        check_len("instance decision width", first.decision_dim(), inst.decision_dim())?;
    }
    let raw: Vec<Vec<f64>> = train.iter().map(Instance::features).collect();
    let standardizer = Standardizer::fit(&raw)?;
    let mut dims = vec![standardizer.dim()];
    dims.extend(&cfg.hidden_dims);
    dims.push(output_dim(cfg.app, first)?);
    let mut mlp = MlpModel::new(&dims, cfg.hidden_activation, cfg.seed)?;
    let adam_cfg = AdamConfig {
        learning_rate: cfg.learning_rate,
        weight_decay: cfg.weight_decay,
        ..AdamConfig::default()
    };
    let mut adam = AdamState::new(&mlp, adam_cfg);

    let train_data = prepare(train, &standardizer)?;
    let val_data = prepare(val, &standardizer)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_ba7c);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = TrainLog::default();
    let mut best: Option<(ValStats, MlpModel)> = None;

    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            if batch.is_empty() {
                continue;
            }
            let pipe = Pipeline { app: cfg.app, gamma: cfg.gamma, mlp: &mlp };
            let (loss, grad) = batch_gradient(&pipe, &train_data, &target_train, batch)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            adam.step(&mut mlp, &grad)?;
            loss_sum += loss;
            batches += 1;
        }
        let pipe = Pipeline { app: cfg.app, gamma: cfg.gamma, mlp: &mlp };
        // Without a validation split the training data stands in for selection.
        let stats = if val.is_empty() {
            validate_model(&pipe, &train_data, &target_train)?
        } else {
            validate_model(&pipe, &val_data, &target_val)?
        };
        if !stats.loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: batches });
        }
        log.records.push(EpochRecord {
            epoch,
            train_loss: loss_sum / batches.max(1) as f64,
            val_loss: stats.loss,
            val_feasible_pct: stats.feasible_pct,
            val_mean_max_violation: stats.mean_max_violation,
            seconds: started.elapsed().as_secs_f64(),
        });
        log::debug!(
            "epoch {epoch}: train {:.5} val {:.5} feasible {:.1}%",
            loss_sum / batches.max(1) as f64,
            stats.loss,
            stats.feasible_pct
        );
        if best.as_ref().map_or(true, |(b, _)| is_better(cfg.selection, &stats, b)) {
            log.best_epoch = Some(epoch);
            best = Some((stats, mlp.clone()));
        }
    }
    let mlp = best.map_or(mlp, |(_, m)| m);
    let model = ProxyModel {
        app: cfg.app,
        mlp,
        standardizer,
        gamma: cfg.gamma,
        nu: (cfg.mode == TrainMode::Ssl).then_some(cfg.nu),
        mode: cfg.mode,
        train_config: Some(cfg.clone()),
    };
    Ok((model, log))
}

/// Self-supervised training on the exact-penalty loss. Never reads labels.
pub fn train_ssl(cfg: &TrainConfig, train: &[Instance], val: &[Instance]) -> Result<(ProxyModel, TrainLog)> {
    if cfg.mode != TrainMode::Ssl {
        return Err(Error::Config("train_ssl called with a supervised config".into()));
    }
    let p = PenaltyConfig::new(cfg.nu)?;
    fit(cfg, train, val, Target::Ssl(p), Target::Ssl(p))
}

/// Supervised baseline: squared distance between the train-mode decision and
/// the solved label, per instance.
pub fn train_supervised(
    cfg: &TrainConfig,
    train: &[Instance],
    train_labels: Option<&[Vec<f64>]>,
    val: &[Instance],
    val_labels: Option<&[Vec<f64>]>,
) -> Result<(ProxyModel, TrainLog)> {
    if cfg.mode != TrainMode::Supervised {
        return Err(Error::Config("train_supervised called with an ssl config".into()));
    }
    let missing = || Error::MissingLabels("no solved labels for the supervised baseline; run `solve` first".into());
    let train_labels = train_labels.ok_or_else(missing)?;
    let val_labels = if val.is_empty() { &[][..] } else { val_labels.ok_or_else(missing)? };
    check_len("training labels", train.len(), train_labels.len())?;
    check_len("validation labels", val.len(), val_labels.len())?;
    for (inst, label) in train.iter().zip(train_labels).chain(val.iter().zip(val_labels)) {
        check_len("label width", inst.decision_dim(), label.len())?;
    }
    fit(cfg, train, val, Target::Labels(train_labels), Target::Labels(val_labels))
}
