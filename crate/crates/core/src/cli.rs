//! Command-line front end: dataset generation, oracle solving, training,
//! evaluation, ν sweeps and timing benchmarks.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::ProxyModel;
use crate::error::{Error, Result};
use crate::eval::{self, AggregateRow, Oracle};
use crate::nn::MlpModel;
use crate::problems::{
    output_dim, App, Dataset, GenConfig, Instance, InventoryGenConfig, KnapsackGenConfig, Standardizer,
};
use crate::solvers::{read_labels, solve_instance, write_labels, LabelRecord};
use crate::training::{split_dataset, train_ssl, train_supervised, Split, TrainConfig, TrainMode};
use crate::uncertainty::NormKind;

pub const SEED_ENV: &str = "ROBUST_PROXY_SEED";

#[derive(Parser, Debug)]
#[command(name = "robust-proxy", version, about = "Neural proxies for robust optimization trained with an exact-penalty loss")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic dataset (dataset.jsonl).
    Gen(RunArgs),
    /// Solve every instance with the reference solver (labels.jsonl).
    Solve(RunArgs),
    /// Train a proxy (checkpoint.json, train_log.csv).
    Train(RunArgs),
    /// Evaluate a checkpoint on the test split (eval_instances.csv, report.csv).
    Eval(RunArgs),
    /// Train and evaluate one model per ν (sweep.csv).
    Sweep(RunArgs),
    /// Time proxy inference against the reference solver (bench.csv).
    Bench(RunArgs),
}

/// Every option is optional so that flag, config-file and default values can
/// be layered. Config files use the same names as the flags.
#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct RunArgs {
    /// knapsack-cont, knapsack-bin or inventory.
    #[arg(long)]
    pub app: Option<App>,
    /// Knapsack items.
    #[arg(long)]
    pub dx: Option<usize>,
    /// Knapsack constraints.
    #[arg(long)]
    pub m: Option<usize>,
    /// Inventory retailers.
    #[arg(long)]
    pub nretail: Option<usize>,
    /// Inventory uncertainty dimension.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub rho: Option<f64>,
    /// box or ellipsoid.
    #[arg(long)]
    pub norm: Option<NormKind>,
    /// Penalty coefficient (ssl mode only).
    #[arg(long)]
    pub nu: Option<f64>,
    /// Binary surrogate width.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Decoupled weight decay.
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    /// ssl or supervised.
    #[arg(long)]
    pub mode: Option<TrainMode>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Dataset file (defaults to <out>/dataset.jsonl).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Labels file from `solve`.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Checkpoint file (defaults to <out>/checkpoint.json).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// ν values for `sweep`, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub sweep: Option<Vec<f64>>,
    /// Solve test instances inline when no labels file is given.
    #[arg(long)]
    pub oracle: Option<bool>,
    /// Batch size used by `bench` for batched inference.
    #[arg(long)]
    pub bench_batch: Option<usize>,
    /// JSON file with defaults for any of the options above.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

macro_rules! layer {
    ($dst:ident, $src:ident; $($f:ident),*) => {
        $( if $dst.$f.is_none() { $dst.$f = $src.$f.clone(); } )*
    };
}

impl RunArgs {
    /// Flags first, then the config file, then the seed environment variable.
    pub fn resolve(mut self) -> Result<RunArgs> {
        if let Some(path) = self.config.clone() {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
            let file: RunArgs = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("bad config {}: {e}", path.display())))?;
            layer!(self, file; app, dx, m, nretail, k, rho, norm, nu, gamma, count, seed, epochs,
                batch_size, lr, weight_decay, hidden, mode, out, jobs, data, labels, checkpoint, sweep, oracle, bench_batch);
        }
        if self.seed.is_none() {
            if let Ok(v) = std::env::var(SEED_ENV) {
                self.seed = Some(v.trim().parse().map_err(|_| {
                    Error::Config(format!("{SEED_ENV} must be an unsigned integer, got `{v}`"))
                })?);
            }
        }
        Ok(self)
    }

    fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    fn app(&self) -> Result<App> {
        self.app.ok_or_else(|| Error::Config("--app is required".into()))
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    fn data_path(&self) -> PathBuf {
        self.data.clone().unwrap_or_else(|| self.out_dir().join("dataset.jsonl"))
    }

    fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| self.out_dir().join("checkpoint.json"))
    }

    fn gen_config(&self) -> Result<GenConfig> {
        let app = self.app()?;
        let rho = self.rho.unwrap_or(app.default_rho());
        let norm = self.norm.unwrap_or(NormKind::Box);
        let count = self.count.unwrap_or(2000);
        let seed = self.seed();
        Ok(match app {
            App::Inventory => GenConfig::Inventory(InventoryGenConfig {
                n_retailers: self.nretail.unwrap_or(10),
                k: self.k.unwrap_or(3),
                rho,
                norm,
                count,
                seed,
            }),
            _ => GenConfig::Knapsack {
                app,
                cfg: KnapsackGenConfig { d_x: self.dx.unwrap_or(20), m: self.m.unwrap_or(5), rho, norm, count, seed },
            },
        })
    }

    fn train_config(&self, app: App) -> Result<TrainConfig> {
        let mode = self.mode.unwrap_or(TrainMode::Ssl);
        if mode == TrainMode::Supervised && self.nu.is_some() {
            return Err(Error::Config("--nu only applies to ssl mode".into()));
        }
        let d = TrainConfig::default();
        let cfg = TrainConfig {
            app,
            nu: self.nu.unwrap_or(d.nu),
            gamma: self.gamma.unwrap_or(d.gamma),
            rho: self.rho.unwrap_or(app.default_rho()),
            norm_kind: self.norm.unwrap_or(NormKind::Box),
            hidden_dims: self.hidden.clone().unwrap_or(d.hidden_dims),
            epochs: self.epochs.unwrap_or(d.epochs),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            learning_rate: self.lr.unwrap_or(d.learning_rate),
            weight_decay: self.weight_decay.unwrap_or(d.weight_decay),
            seed: self.seed(),
            mode,
            ..d
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn echo(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("effective_config.json"), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

fn load_dataset(args: &RunArgs) -> Result<Dataset> {
    let path = args.data_path();
    let ds = Dataset::read(&path).map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))?;
    if let Some(app) = args.app {
        if app != ds.app {
            return Err(Error::Config(format!("--app {app} does not match dataset app {}", ds.app)));
        }
    }
    Ok(ds)
}

fn subset(ds: &Dataset, idx: &[usize]) -> Vec<Instance> {
    idx.iter().map(|&i| ds.instances[i].clone()).collect()
}

fn label_vectors(labels: &[LabelRecord], idx: &[usize]) -> Result<Vec<Vec<f64>>> {
    idx.iter()
        .map(|&i| {
            labels
                .binary_search_by_key(&i, |r| r.id)
                .map(|p| labels[p].x_star.clone())
                .map_err(|_| Error::MissingLabels(format!("no label for instance {i}; run `solve` on this dataset")))
        })
        .collect()
}

fn train_one(cfg: &TrainConfig, ds: &Dataset, split: &Split, labels: Option<&[LabelRecord]>) -> Result<(ProxyModel, crate::training::TrainLog)> {
    let train = subset(ds, &split.train);
    let val = subset(ds, &split.val);
    match cfg.mode {
        TrainMode::Ssl => train_ssl(cfg, &train, &val),
        TrainMode::Supervised => {
            let labels = labels.ok_or_else(|| {
                Error::MissingLabels("supervised training needs --labels; run `solve` first".into())
            })?;
            let tl = label_vectors(labels, &split.train)?;
            let vl = label_vectors(labels, &split.val)?;
            train_supervised(cfg, &train, Some(&tl), &val, Some(&vl))
        }
    }
}

fn evaluate_split(model: &ProxyModel, ds: &Dataset, split: &Split, labels: Option<&[LabelRecord]>, oracle: bool) -> Result<eval::EvalReport> {
    let test: Vec<(usize, &Instance)> = split.test.iter().map(|&i| (i, &ds.instances[i])).collect();
    let oracle = match labels {
        Some(l) => Oracle::Labels(l),
        None if oracle => Oracle::Solve,
        None => Oracle::Disabled,
    };
    eval::evaluate(model, &test, oracle)
}

fn write_report(dir: &Path, report: &eval::EvalReport) -> Result<AggregateRow> {
    report.write_rows_csv(std::fs::File::create(dir.join("eval_instances.csv"))?)?;
    let agg = report.aggregate();
    eval::save_aggregate(std::slice::from_ref(&agg), &dir.join("report.csv"))?;
    let meta = serde_json::json!({ "warnings": report.warnings, "test_size": report.rows.len() });
    std::fs::write(dir.join("report_meta.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(agg)
}

fn cmd_gen(args: &RunArgs) -> Result<()> {
    let out = args.out_dir();
    args.echo(&out)?;
    let ds = Dataset::generate(&args.gen_config()?)?;
    let path = out.join("dataset.jsonl");
    ds.write(&path)?;
    println!("wrote {} {} instances (seed {}) to {}", ds.len(), ds.app, ds.seed, path.display());
    Ok(())
}

fn cmd_solve(args: &RunArgs) -> Result<()> {
    let out = args.out_dir();
    args.echo(&out)?;
    let ds = load_dataset(args)?;
    let labels = ds
        .instances
        .par_iter()
        .enumerate()
        .map(|(id, inst)| {
            let sol = solve_instance(ds.app, inst)?;
            Ok(LabelRecord { id, x_star: sol.x_star, f_star: sol.f_star, solve_time: sol.solve_time })
        })
        .collect::<Result<Vec<_>>>()?;
    let path = out.join("labels.jsonl");
    write_labels(&path, &labels)?;
    println!("wrote {} labels to {}", labels.len(), path.display());
    Ok(())
}

fn read_optional_labels(args: &RunArgs) -> Result<Option<Vec<LabelRecord>>> {
    args.labels.as_deref().map(read_labels).transpose()
}

fn cmd_train(args: &RunArgs) -> Result<()> {
    let out = args.out_dir();
    let ds = load_dataset(args)?;
    let cfg = args.train_config(ds.app)?;
    args.echo(&out)?;
    let labels = match cfg.mode {
        TrainMode::Ssl => None,
        TrainMode::Supervised => Some(read_optional_labels(args)?.ok_or_else(|| {
            Error::MissingLabels("supervised training needs --labels; run `solve` first".into())
        })?),
    };
    let split = split_dataset(ds.len(), &cfg.split, cfg.seed)?;
    let (model, log) = train_one(&cfg, &ds, &split, labels.as_deref())?;
    model.save(&out.join("checkpoint.json"))?;
    log.save(&out.join("train_log.csv"))?;
    let last = log.records.last();
    println!(
        "trained {} {} model for {} epochs (best epoch {:?}, final val feasible {:.1}%)",
        ds.app,
        eval::model_label(&model),
        log.records.len(),
        log.best_epoch,
        last.map_or(f64::NAN, |r| r.val_feasible_pct)
    );
    Ok(())
}

fn cmd_eval(args: &RunArgs) -> Result<()> {
    let out = args.out_dir();
    args.echo(&out)?;
    let model = ProxyModel::load(&args.checkpoint_path())?;
    let ds = load_dataset(args)?;
    if ds.app != model.app {
        return Err(Error::Config(format!("checkpoint app {} does not match dataset app {}", model.app, ds.app)));
    }
    let tc = model.train_config.clone().unwrap_or_default();
    let split = split_dataset(ds.len(), &tc.split, tc.seed)?;
    let labels = read_optional_labels(args)?;
    let report = evaluate_split(&model, &ds, &split, labels.as_deref(), args.oracle.unwrap_or(true))?;
    let agg = write_report(&out, &report)?;
    println!(
        "{} test instances: feasible {:.1}%, mean max violation {:.4}, mean regret {}",
        report.rows.len(),
        agg.feasible_pct,
        agg.max_violation_mean,
        agg.regret_pct_mean.map_or("n/a".to_string(), |r| format!("{r:.2}%"))
    );
    Ok(())
}

fn default_sweep(app: App) -> Vec<f64> {
    match app {
        App::Inventory => vec![50.0, 100.0, 200.0, 500.0],
        _ => vec![1.0, 10.0, 20.0, 50.0],
    }
}

fn cmd_sweep(args: &RunArgs) -> Result<()> {
    let out = args.out_dir();
    let ds = load_dataset(args)?;
    let nus = args.sweep.clone().unwrap_or_else(|| default_sweep(ds.app));
    if nus.is_empty() || nus.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::Config("sweep values must be positive".into()));
    }
    let mut base = args.clone();
    base.mode = Some(TrainMode::Ssl);
    base.nu = None;
    let base_cfg = base.train_config(ds.app)?;
    args.echo(&out)?;
    let labels = read_optional_labels(args)?;
    let split = split_dataset(ds.len(), &base_cfg.split, base_cfg.seed)?;
    let oracle = args.oracle.unwrap_or(true);

    let mut reports = Vec::new();
    let mut run = |cfg: TrainConfig, name: String| -> Result<()> {
        let dir = out.join(name);
        std::fs::create_dir_all(&dir)?;
        let (model, log) = train_one(&cfg, &ds, &split, labels.as_deref())?;
        model.save(&dir.join("checkpoint.json"))?;
        log.save(&dir.join("train_log.csv"))?;
        let report = evaluate_split(&model, &ds, &split, labels.as_deref(), oracle)?;
        let agg = write_report(&dir, &report)?;
        println!(
            "{} nu={:?}: feasible {:.1}%, violation {:.4}, regret {}",
            agg.model,
            agg.nu,
            agg.feasible_pct,
            agg.max_violation_mean,
            agg.regret_pct_mean.map_or("n/a".to_string(), |r| format!("{r:.2}%"))
        );
        reports.push(report);
        Ok(())
    };
    for &nu in &nus {
        run(TrainConfig { nu, ..base_cfg.clone() }, format!("nu_{nu}"))?;
    }
    if labels.is_some() {
        run(TrainConfig { mode: TrainMode::Supervised, ..base_cfg.clone() }, "supervised".into())?;
    }
    let table = eval::aggregate(&reports)?;
    eval::save_aggregate(&table, &out.join("sweep.csv"))?;
    println!("wrote {} rows to {}", table.len(), out.join("sweep.csv").display());
    Ok(())
}

fn cmd_bench(args: &RunArgs) -> Result<()> {
    let out = args.out_dir();
    args.echo(&out)?;
    let instances = match &args.data {
        Some(_) => load_dataset(args)?.instances,
        None => {
            let mut gen = args.clone();
            gen.count = Some(args.count.unwrap_or(256));
            if gen.dx.is_none() {
                gen.dx = Some(50);
            }
            Dataset::generate(&gen.gen_config()?)?.instances
        }
    };
    let first = instances.first().ok_or_else(|| Error::Config("no instances to bench".into()))?;
    let model = match &args.checkpoint {
        Some(p) => ProxyModel::load(p)?,
        None => {
            // Timing does not depend on the weights, so an untrained network of
            // the configured shape is enough.
            let cfg = args.train_config(args.app()?)?;
            let raw: Vec<Vec<f64>> = instances.iter().map(Instance::features).collect();
            let standardizer = Standardizer::fit(&raw)?;
            let mut dims = vec![standardizer.dim()];
            dims.extend(&cfg.hidden_dims);
            dims.push(output_dim(cfg.app, first)?);
            ProxyModel {
                app: cfg.app,
                mlp: MlpModel::new(&dims, cfg.hidden_activation, cfg.seed)?,
                standardizer,
                gamma: cfg.gamma,
                nu: Some(cfg.nu),
                mode: TrainMode::Ssl,
                train_config: Some(cfg),
            }
        }
    };
    let row = eval::bench(&model, &instances, args.bench_batch.unwrap_or(256))?;
    let mut w = csv::Writer::from_path(out.join("bench.csv"))?;
    w.serialize(&row)?;
    w.flush()?;
    println!(
        "{} instances: proxy {:.2e}s single, {:.2e}s batched; solver {:.2e}s; speedup {:.1}x / {:.1}x",
        row.instances, row.proxy_single_s, row.proxy_batch_s, row.solver_s, row.speedup_single, row.speedup_batch
    );
    Ok(())
}

pub fn execute(cli: Cli) -> Result<()> {
    let (cmd, args): (fn(&RunArgs) -> Result<()>, RunArgs) = match cli.command {
        Command::Gen(a) => (cmd_gen, a),
        Command::Solve(a) => (cmd_solve, a),
        Command::Train(a) => (cmd_train, a),
        Command::Eval(a) => (cmd_eval, a),
        Command::Sweep(a) => (cmd_sweep, a),
        Command::Bench(a) => (cmd_bench, a),
    };
    let args = args.resolve()?;
    if let Some(jobs) = args.jobs {
        // Fails only if a pool already exists, in which case it is reused.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global();
    }
    cmd(&args)
}
