//! Test-set metrics for a trained proxy: regret against the reference
//! oracle, worst-case violation, feasibility rate and timing.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::ProxyModel;
use crate::domain::LayerMode;
use crate::error::{Error, Result};
use crate::problems::{App, Instance};
use crate::solvers::{feasibility_check, solve_instance, LabelRecord};
use crate::training::TrainMode;
use crate::uncertainty::NormKind;

/// Optimal values at or below this magnitude get an absolute gap instead of regret.
pub const REGRET_GUARD: f64 = 1e-9;
pub const TIMING_REPS: usize = 5;

#[derive(Debug, Clone, Copy)]
pub enum Oracle<'a> {
    Disabled,
    /// Solve each test instance with the reference solver.
    Solve,
    /// Use previously solved labels, matched by instance id.
    Labels(&'a [LabelRecord]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRow {
    pub id: usize,
    pub f_hat: f64,
    pub f_star: Option<f64>,
    /// `(f_star - f_hat) / f_star`.
    pub regret: Option<f64>,
    pub regret_pct: Option<f64>,
    pub abs_gap: Option<f64>,
    pub max_violation: f64,
    pub feasible: bool,
    pub proxy_time_s: f64,
    pub solver_time_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub app: App,
    pub model: String,
    pub nu: Option<f64>,
    pub regret_pct_mean: Option<f64>,
    pub max_violation_mean: f64,
    pub feasible_pct: f64,
    pub proxy_time_s: f64,
    pub solver_time_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub app: App,
    pub model: String,
    pub nu: Option<f64>,
    pub rows: Vec<InstanceRow>,
    pub warnings: Vec<String>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn median(mut samples: Vec<f64>) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        samples[n / 2]
    } else {
        0.5 * (samples[n / 2 - 1] + samples[n / 2])
    }
}

fn time_median<T>(mut f: impl FnMut() -> Result<T>) -> Result<f64> {
    let mut samples = Vec::with_capacity(TIMING_REPS);
    for _ in 0..TIMING_REPS {
        let t = Instant::now();
        std::hint::black_box(f()?);
        samples.push(t.elapsed().as_secs_f64());
    }
    Ok(median(samples))
}

impl EvalReport {
    pub fn aggregate(&self) -> AggregateRow {
        let n = self.rows.len().max(1) as f64;
        AggregateRow {
            app: self.app,
            model: self.model.clone(),
            nu: self.nu,
            regret_pct_mean: mean(self.rows.iter().filter_map(|r| r.regret_pct)),
            max_violation_mean: mean(self.rows.iter().map(|r| r.max_violation)).unwrap_or(0.0),
            feasible_pct: 100.0 * self.rows.iter().filter(|r| r.feasible).count() as f64 / n,
            proxy_time_s: mean(self.rows.iter().map(|r| r.proxy_time_s)).unwrap_or(0.0),
            solver_time_s: mean(self.rows.iter().filter_map(|r| r.solver_time_s)),
        }
    }

    pub fn write_rows_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_rows_csv<R: Read>(input: R) -> Result<Vec<InstanceRow>> {
        let mut r = csv::Reader::from_reader(input);
        r.deserialize().map(|row| row.map_err(Error::from)).collect()
    }
}

/// Label used in report tables: `SSL` or `SL`.
pub fn model_label(model: &ProxyModel) -> &'static str {
    match model.mode {
        TrainMode::Ssl => "SSL",
        TrainMode::Supervised => "SL",
    }
}

/// Evaluates an arbitrary decision rule. `decide` must return the flat
/// decision for an instance; it is also what gets timed.
pub fn evaluate_with<F>(
    app: App,
    model: &str,
    nu: Option<f64>,
    test: &[(usize, &Instance)],
    decide: F,
    oracle: Oracle,
) -> Result<EvalReport>
where
    F: Fn(&Instance) -> Result<Vec<f64>> + Sync,
{
    for (_, inst) in test {
        inst.check_app(app)?;
    }
    let mut warnings = Vec::new();
    let mut oracle = oracle;
    if matches!(oracle, Oracle::Solve) && test.iter().any(|(_, i)| i.norm_kind() == NormKind::Ellipsoid) {
        warnings.push("reference oracle does not support ellipsoidal sets; regret columns left empty".to_string());
        oracle = Oracle::Disabled;
    }
    let labels: HashMap<usize, &LabelRecord> = match oracle {
        Oracle::Labels(l) => l.iter().map(|r| (r.id, r)).collect(),
        _ => HashMap::new(),
    };

    let metrics: Vec<Result<(f64, f64, bool)>> = test
        .par_iter()
        .map(|(_, inst)| {
            let x = decide(inst)?;
            let f = feasibility_check(inst, &x)?;
            Ok((inst.objective(&x)?, f.max_violation, f.feasible))
        })
        .collect();

    // Timing runs on this thread only.
    let mut rows = Vec::with_capacity(test.len());
    for ((id, inst), m) in test.iter().zip(metrics) {
        let (f_hat, max_violation, feasible) = m?;
        let proxy_time_s = time_median(|| decide(inst))?;
        let (f_star, solver_time_s) = match oracle {
            Oracle::Disabled => (None, None),
            Oracle::Solve => {
                let sol = solve_instance(app, inst)?;
                (Some(sol.f_star), Some(sol.solve_time))
            }
            Oracle::Labels(_) => {
                let rec = labels.get(id).ok_or_else(|| {
                    Error::MissingLabels(format!("no label for instance {id}; run `solve` on this dataset"))
                })?;
                (Some(rec.f_star), Some(rec.solve_time))
            }
        };
        let (regret, abs_gap) = match f_star {
            Some(fs) if fs.abs() > REGRET_GUARD => (Some((fs - f_hat) / fs), None),
            Some(fs) => (None, Some(fs - f_hat)),
            None => (None, None),
        };
        rows.push(InstanceRow {
            id: *id,
            f_hat,
            f_star,
            regret,
            regret_pct: regret.map(|r| 100.0 * r),
            abs_gap,
            max_violation,
            feasible,
            proxy_time_s,
            solver_time_s,
        });
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(EvalReport { app, model: model.to_string(), nu, rows, warnings })
}

/// Evaluates a trained proxy with its test-mode domain layer.
pub fn evaluate(model: &ProxyModel, test: &[(usize, &Instance)], oracle: Oracle) -> Result<EvalReport> {
    evaluate_with(
        model.app,
        model_label(model),
        model.nu,
        test,
        |inst| model.decide(inst, LayerMode::Test),
        oracle,
    )
}

/// One table row per report; all reports must share an application.
pub fn aggregate(reports: &[EvalReport]) -> Result<Vec<AggregateRow>> {
    let first = reports
        .first()
        .ok_or_else(|| Error::Config("nothing to aggregate".into()))?;
    if let Some(r) = reports.iter().find(|r| r.app != first.app) {
        return Err(Error::Config(format!(
            "cannot aggregate mixed applications ({} and {})",
            first.app, r.app
        )));
    }
    Ok(reports.iter().map(EvalReport::aggregate).collect())
}

pub fn write_aggregate_csv<W: Write>(rows: &[AggregateRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_aggregate_csv<R: Read>(input: R) -> Result<Vec<AggregateRow>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn save_aggregate(rows: &[AggregateRow], path: &Path) -> Result<()> {
    write_aggregate_csv(rows, std::fs::File::create(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchTiming {
    /// Per-instance seconds, one forward pass per instance.
    pub single_s: f64,
    /// Per-instance seconds, amortized over batched forward passes.
    pub batched_s: f64,
}

/// Times the proxy over `instances` both one at a time and in batches of
/// `batch_size`; each figure is the median of [`TIMING_REPS`] passes.
pub fn time_batch_inference(model: &ProxyModel, instances: &[Instance], batch_size: usize) -> Result<BatchTiming> {
    if instances.is_empty() || batch_size == 0 {
        return Err(Error::Config("batch timing needs instances and a positive batch size".into()));
    }
    let refs: Vec<&Instance> = instances.iter().collect();
    let n = instances.len() as f64;
    let single = time_median(|| {
        refs.iter().map(|i| model.decide(i, LayerMode::Test)).collect::<Result<Vec<_>>>()
    })?;
    let batched = time_median(|| {
        let mut out = Vec::with_capacity(refs.len());
        for chunk in refs.chunks(batch_size) {
            out.extend(model.decide_batch(chunk)?);
        }
        Ok(out)
    })?;
    Ok(BatchTiming { single_s: single / n, batched_s: batched / n })
}

/// Per-instance reference solve time (build + solve), median of
/// [`TIMING_REPS`] passes over the set.
pub fn time_reference_solver(app: App, instances: &[Instance]) -> Result<f64> {
    if instances.is_empty() {
        return Err(Error::Config("solver timing needs instances".into()));
    }
    let total = time_median(|| {
        instances.iter().map(|i| solve_instance(app, i).map(|s| s.f_star)).collect::<Result<Vec<_>>>()
    })?;
    Ok(total / instances.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub app: App,
    pub instances: usize,
    pub batch_size: usize,
    pub proxy_single_s: f64,
    pub proxy_batch_s: f64,
    pub solver_s: f64,
    pub speedup_single: f64,
    pub speedup_batch: f64,
}

pub fn bench(model: &ProxyModel, instances: &[Instance], batch_size: usize) -> Result<BenchRow> {
    let timing = time_batch_inference(model, instances, batch_size)?;
    let solver_s = time_reference_solver(model.app, instances)?;
    Ok(BenchRow {
        app: model.app,
        instances: instances.len(),
        batch_size,
        proxy_single_s: timing.single_s,
        proxy_batch_s: timing.batched_s,
        solver_s,
        speedup_single: solver_s / timing.single_s,
        speedup_batch: solver_s / timing.batched_s,
    })
}
