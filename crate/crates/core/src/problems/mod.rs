//! Application families: instance records, generators, decision
//! parameterization, feature vectors and JSON Lines datasets.

mod inventory;
mod knapsack;

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use inventory::{generate_inventory, InventoryDecision, InventoryGenConfig, InventoryInstance};
pub use knapsack::{generate_knapsack, KnapsackGenConfig, KnapsackInstance};

use crate::domain::{DomainLayer, LayerMode};
use crate::error::{check_len, Error, Result};
use crate::linalg::DenseMatrix;

pub const GEN_VERSION: &str = "1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum App {
    #[serde(rename = "knapsack-cont")]
    KnapsackCont,
    #[serde(rename = "knapsack-bin")]
    KnapsackBin,
    #[serde(rename = "inventory")]
    Inventory,
}

impl App {
    pub fn as_str(self) -> &'static str {
        match self {
            App::KnapsackCont => "knapsack-cont",
            App::KnapsackBin => "knapsack-bin",
            App::Inventory => "inventory",
        }
    }

    pub fn default_rho(self) -> f64 {
        match self {
            App::KnapsackCont | App::KnapsackBin => 0.1,
            App::Inventory => 0.5,
        }
    }

    pub fn is_knapsack(self) -> bool {
        matches!(self, App::KnapsackCont | App::KnapsackBin)
    }

    /// Name of the final-layer map, as stored in checkpoints.
    pub fn domain_layer_name(self) -> &'static str {
        match self {
            App::KnapsackCont => "unit_box_sigmoid",
            App::KnapsackBin => "binary",
            App::Inventory => "scaled_box_sigmoid",
        }
    }
}

impl std::fmt::Display for App {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for App {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "knapsack-cont" | "knapsack" => Ok(App::KnapsackCont),
            "knapsack-bin" => Ok(App::KnapsackBin),
            "inventory" => Ok(App::Inventory),
            other => Err(Error::Config(format!(
                "unknown app `{other}` (expected knapsack-cont, knapsack-bin or inventory)"
            ))),
        }
    }
}

/// Objective, worst-case constraint values and their (sub)gradients with
/// respect to the flat decision vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemEval {
    pub objective: f64,
    pub objective_grad: Vec<f64>,
    pub worst_cases: Vec<f64>,
    pub worst_case_grads: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Instance {
    Knapsack(KnapsackInstance),
    Inventory(InventoryInstance),
}

impl Instance {
    pub fn validate(&self) -> Result<()> {
        match self {
            Instance::Knapsack(k) => k.validate(),
            Instance::Inventory(i) => i.validate(),
        }
    }

    pub fn decision_dim(&self) -> usize {
        match self {
            Instance::Knapsack(k) => k.d_x(),
            Instance::Inventory(i) => i.decision_dim(),
        }
    }

    pub fn n_constraints(&self) -> usize {
        match self {
            Instance::Knapsack(k) => k.m(),
            Instance::Inventory(i) => i.n_constraints(),
        }
    }

    pub fn norm_kind(&self) -> crate::uncertainty::NormKind {
        match self {
            Instance::Knapsack(k) => k.norm_kind,
            Instance::Inventory(i) => i.norm_kind,
        }
    }

    /// Raw (unstandardized) instance parameters.
    pub fn features(&self) -> Vec<f64> {
        match self {
            Instance::Knapsack(k) => k.features(),
            Instance::Inventory(i) => i.features(),
        }
    }

    pub fn evaluate(&self, flat: &[f64]) -> Result<ProblemEval> {
        match self {
            Instance::Knapsack(k) => k.evaluate(flat),
            Instance::Inventory(i) => i.evaluate(flat),
        }
    }

    pub fn objective(&self, flat: &[f64]) -> Result<f64> {
        match self {
            Instance::Knapsack(k) => {
                check_len("knapsack decision", k.d_x(), flat.len())?;
                Ok(k.objective(flat))
            }
            Instance::Inventory(i) => i.objective(flat),
        }
    }

    pub fn worst_cases(&self, flat: &[f64]) -> Result<Vec<f64>> {
        match self {
            Instance::Knapsack(k) => {
                check_len("knapsack decision", k.d_x(), flat.len())?;
                Ok(k.worst_cases(flat))
            }
            Instance::Inventory(i) => i.worst_cases(flat),
        }
    }

    fn matches(&self, app: App) -> bool {
        matches!(
            (self, app),
            (Instance::Knapsack(_), App::KnapsackCont | App::KnapsackBin)
                | (Instance::Inventory(_), App::Inventory)
        )
    }

    pub fn check_app(&self, app: App) -> Result<()> {
        if self.matches(app) {
            Ok(())
        } else {
            Err(Error::Config(format!("instance does not belong to app {app}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DecisionVars {
    Knapsack {
        x: Vec<f64>,
    },
    Inventory {
        x: Vec<f64>,
        y: DenseMatrix,
        y0: Vec<f64>,
    },
}

impl DecisionVars {
    pub fn x(&self) -> &[f64] {
        match self {
            DecisionVars::Knapsack { x } | DecisionVars::Inventory { x, .. } => x,
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        match self {
            DecisionVars::Knapsack { x } => x.clone(),
            DecisionVars::Inventory { x, y, y0 } => {
                let mut out = x.clone();
                out.extend_from_slice(y.data());
                out.extend_from_slice(y0);
                out
            }
        }
    }
}

/// Network output width for an instance of `app`.
pub fn output_dim(app: App, inst: &Instance) -> Result<usize> {
    inst.check_app(app)?;
    Ok(inst.decision_dim())
}

/// Maps raw network output `w` to a flat decision vector inside the domain.
pub fn parameterize_flat(app: App, mode: LayerMode, gamma: f64, inst: &Instance, w: &[f64]) -> Result<Vec<f64>> {
    check_len("network output width", output_dim(app, inst)?, w.len())?;
    match (app, inst) {
        (App::KnapsackCont, _) => DomainLayer::unit_box(mode).apply(w),
        (App::KnapsackBin, _) => DomainLayer::binary(gamma, mode)?.apply(w),
        (App::Inventory, Instance::Inventory(inv)) => {
            let n = inv.n_retailers();
            let mut out = DomainLayer::scaled_box(inv.x_upper.clone(), mode)?.apply(&w[..n])?;
            out.extend_from_slice(&w[n..]);
            Ok(out)
        }
        _ => unreachable!("checked by output_dim"),
    }
}

/// Chain rule through [`parameterize_flat`] in train mode.
pub fn parameterize_backward(app: App, gamma: f64, inst: &Instance, w: &[f64], dl_dflat: &[f64]) -> Result<Vec<f64>> {
    check_len("network output width", output_dim(app, inst)?, w.len())?;
    check_len("decision gradient", w.len(), dl_dflat.len())?;
    match (app, inst) {
        (App::KnapsackCont, _) => DomainLayer::unit_box(LayerMode::Train).apply_grad(w, dl_dflat),
        (App::KnapsackBin, _) => DomainLayer::binary(gamma, LayerMode::Train)?.apply_grad(w, dl_dflat),
        (App::Inventory, Instance::Inventory(inv)) => {
            let n = inv.n_retailers();
            let mut out = DomainLayer::scaled_box(inv.x_upper.clone(), LayerMode::Train)?
                .apply_grad(&w[..n], &dl_dflat[..n])?;
            out.extend_from_slice(&dl_dflat[n..]);
            Ok(out)
        }
        _ => unreachable!("checked by output_dim"),
    }
}

pub fn decision_parameterize(app: App, mode: LayerMode, gamma: f64, inst: &Instance, w: &[f64]) -> Result<DecisionVars> {
    let flat = parameterize_flat(app, mode, gamma, inst, w)?;
    Ok(match inst {
        Instance::Knapsack(_) => DecisionVars::Knapsack { x: flat },
        Instance::Inventory(inv) => {
            let n = inv.n_retailers();
            let k = inv.k();
            DecisionVars::Inventory {
                x: flat[..n].to_vec(),
                y: DenseMatrix::from_vec(n, k, flat[n..n + n * k].to_vec())?,
                y0: flat[n + n * k..].to_vec(),
            }
        }
    })
}

/// Per-feature affine standardization fitted on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Population statistics; constant features keep unit scale.
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::Config("cannot standardize an empty split".into()))?;
        let d = first.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for row in rows {
            check_len("feature vector", d, row.len())?;
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for row in rows {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, raw: &[f64]) -> Result<Vec<f64>> {
        check_len("feature vector", self.dim(), raw.len())?;
        Ok(raw
            .iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect())
    }
}

/// Standardized feature vector of an instance.
pub fn feature_vector(inst: &Instance, standardizer: &Standardizer) -> Result<Vec<f64>> {
    standardizer.transform(&inst.features())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub app: App,
    pub seed: u64,
    pub gen_version: String,
    pub instances: Vec<Instance>,
}

#[derive(Serialize)]
struct RecordOut<'a> {
    app: App,
    seed: u64,
    gen_version: &'a str,
    fields: &'a Instance,
}

#[derive(Deserialize)]
struct RecordIn {
    app: App,
    seed: u64,
    gen_version: String,
    fields: serde_json::Value,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GenConfig {
    Knapsack { app: App, cfg: KnapsackGenConfig },
    Inventory(InventoryGenConfig),
}

impl Dataset {
    pub fn generate(gen: &GenConfig) -> Result<Self> {
        let (app, seed, instances) = match gen {
            GenConfig::Knapsack { app, cfg } => {
                if !app.is_knapsack() {
                    return Err(Error::Config(format!("{app} is not a knapsack app")));
                }
                let inst = generate_knapsack(cfg)?.into_iter().map(Instance::Knapsack).collect();
                (*app, cfg.seed, inst)
            }
            GenConfig::Inventory(cfg) => {
                let inst = generate_inventory(cfg)?.into_iter().map(Instance::Inventory).collect();
                (App::Inventory, cfg.seed, inst)
            }
        };
        Ok(Self {
            app,
            seed,
            gen_version: GEN_VERSION.to_string(),
            instances,
        })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn to_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for inst in &self.instances {
            let rec = RecordOut {
                app: self.app,
                seed: self.seed,
                gen_version: &self.gen_version,
                fields: inst,
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn from_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let mut header: Option<(App, u64, String)> = None;
        let mut instances = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: RecordIn = serde_json::from_str(&line)?;
            match &header {
                None => header = Some((rec.app, rec.seed, rec.gen_version.clone())),
                Some((app, _, _)) if *app != rec.app => {
                    return Err(Error::Dataset(format!(
                        "line {}: app {} differs from {}",
                        lineno + 1,
                        rec.app,
                        app
                    )))
                }
                _ => {}
            }
            let inst = if rec.app.is_knapsack() {
                Instance::Knapsack(serde_json::from_value(rec.fields)?)
            } else {
                Instance::Inventory(serde_json::from_value(rec.fields)?)
            };
            inst.validate()
                .map_err(|e| Error::Dataset(format!("line {}: {e}", lineno + 1)))?;
            instances.push(inst);
        }
        let (app, seed, gen_version) =
            header.ok_or_else(|| Error::Dataset("dataset file is empty".into()))?;
        Ok(Self {
            app,
            seed,
            gen_version,
            instances,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        self.to_jsonl(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_jsonl(BufReader::new(std::fs::File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::uncertainty::NormKind;

    fn inventory_instance() -> Instance {
        Instance::Inventory(
            generate_inventory(&InventoryGenConfig {
                n_retailers: 3,
                k: 2,
                rho: 0.5,
                norm: NormKind::Box,
                count: 1,
                seed: 1,
            })
            .unwrap()
            .remove(0),
        )
    }

    fn knapsack_instance(d_x: usize, m: usize) -> Instance {
        Instance::Knapsack(
            generate_knapsack(&KnapsackGenConfig {
                d_x,
                m,
                rho: 0.1,
                norm: NormKind::Box,
                count: 1,
                seed: 1,
            })
            .unwrap()
            .remove(0),
        )
    }

    #[test]
    fn inventory_zero_output() {
        let inst = inventory_instance();
        let Instance::Inventory(inv) = &inst else { unreachable!() };
        let w = vec![0.0; inst.decision_dim()];
        let vars = decision_parameterize(App::Inventory, LayerMode::Test, 0.1, &inst, &w).unwrap();
        let DecisionVars::Inventory { x, y, y0 } = vars else { panic!() };
        let half: Vec<f64> = inv.x_upper.iter().map(|c| c / 2.0).collect();
        assert_eq!(x, half);
        assert!(y.data().iter().all(|v| *v == 0.0));
        assert!(y0.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn binary_test_mode_step() {
        let inst = knapsack_instance(2, 1);
        let vars = decision_parameterize(App::KnapsackBin, LayerMode::Test, 0.1, &inst, &[1.0, -1.0]).unwrap();
        assert_eq!(vars.x(), &[1.0, 0.0]);
    }

    #[test]
    fn wrong_width_and_app() {
        let inst = knapsack_instance(3, 1);
        assert!(parameterize_flat(App::KnapsackCont, LayerMode::Test, 0.1, &inst, &[0.0; 2]).is_err());
        assert!(parameterize_flat(App::Inventory, LayerMode::Test, 0.1, &inst, &[0.0; 3]).is_err());
    }

    #[test]
    fn parameterized_decisions_stay_in_domain() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let knap = knapsack_instance(4, 2);
        let inv = inventory_instance();
        let Instance::Inventory(inv_rec) = &inv else { unreachable!() };
        for _ in 0..10_000 {
            let w: Vec<f64> = (0..4).map(|_| rng.random_range(-40.0..40.0)).collect();
            for (app, mode) in [
                (App::KnapsackCont, LayerMode::Test),
                (App::KnapsackBin, LayerMode::Train),
                (App::KnapsackBin, LayerMode::Test),
            ] {
                let x = parameterize_flat(app, mode, 0.1, &knap, &w).unwrap();
                assert!(x.iter().all(|v| (0.0..=1.0).contains(v)));
                if mode == LayerMode::Test && app == App::KnapsackBin {
                    assert!(x.iter().all(|v| *v == 0.0 || *v == 1.0));
                }
            }
            let w: Vec<f64> = (0..inv.decision_dim()).map(|_| rng.random_range(-40.0..40.0)).collect();
            let flat = parameterize_flat(App::Inventory, LayerMode::Test, 0.1, &inv, &w).unwrap();
            for (x, c) in flat.iter().zip(&inv_rec.x_upper) {
                assert!((0.0..=*c).contains(x));
            }
            // Evaluation works on every parameterized point.
            inv.evaluate(&flat).unwrap();
        }
    }

    #[test]
    fn feature_dims() {
        assert_eq!(knapsack_instance(2, 1).features().len(), 5);
        let inst = knapsack_instance(5, 3);
        assert_eq!(inst.features(), inst.features());
    }

    #[test]
    fn standardization_statistics() {
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|i| knapsack_instance(3, 2).features().iter().map(|v| v * (1.0 + (i as f64 * 0.731).sin())).collect())
            .collect();
        let s = Standardizer::fit(&rows).unwrap();
        let t: Vec<Vec<f64>> = rows.iter().map(|r| s.transform(r).unwrap()).collect();
        for j in 0..s.dim() {
            let n = t.len() as f64;
            let mean = t.iter().map(|r| r[j]).sum::<f64>() / n;
            let sd = (t.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n).sqrt();
            assert!(mean.abs() <= 1e-9);
            assert!((sd - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn dataset_jsonl_round_trip() {
        let gen = GenConfig::Knapsack {
            app: App::KnapsackBin,
            cfg: KnapsackGenConfig {
                d_x: 4,
                m: 2,
                rho: 0.1,
                norm: NormKind::Ellipsoid,
                count: 5,
                seed: 3,
            },
        };
        let ds = Dataset::generate(&gen).unwrap();
        let mut buf = Vec::new();
        ds.to_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.starts_with(r#"{"app":"knapsack-bin","seed":3,"gen_version":"1","fields":{"values":["#));
        let back = Dataset::from_jsonl(&buf[..]).unwrap();
        assert_eq!(back, ds);

        let inv = Dataset::generate(&GenConfig::Inventory(InventoryGenConfig {
            n_retailers: 2,
            k: 2,
            rho: 0.5,
            norm: NormKind::Box,
            count: 3,
            seed: 1,
        }))
        .unwrap();
        let mut buf = Vec::new();
        inv.to_jsonl(&mut buf).unwrap();
        assert_eq!(Dataset::from_jsonl(&buf[..]).unwrap(), inv);
    }

    #[test]
    fn malformed_dataset_rejected() {
        assert!(Dataset::from_jsonl(&b""[..]).is_err());
        let bad = br#"{"app":"knapsack-cont","seed":1,"gen_version":"1","fields":{"values":[1.0],"nominal_weights":[[1.0,2.0]],"capacities":[1.0],"rho":0.1,"norm_kind":"box"}}"#;
        assert!(Dataset::from_jsonl(&bad[..]).is_err());
    }
}
