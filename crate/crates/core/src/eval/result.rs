//! Run results: per-fold records, aggregates and their serialized forms.
//!
//! The JSON document holds everything except wall-clock timings, so two
//! runs with the same inputs and seed serialize byte-identically. Timings
//! are written separately by [`RunResult::timing_json`].

use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::cv::{metric_name, Experiment, ParamGrid};
use super::folds::CvPlan;
use super::stats::{confidence_interval_95, mean, std_dev};
use crate::error::Result;
use crate::kernel::KernelConfig;
use crate::model::Task;

/// Hyperparameters chosen by inner CV for one split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub gamma: f64,
    pub gamma_scale: f64,
    pub gamma_edge: Option<f64>,
    pub gamma_edge_scale: Option<f64>,
    pub c: Option<f64>,
    pub lambda: Option<f64>,
    /// Inner-CV accuracy (%) or squared loss at the chosen point.
    pub inner_metric: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub repetition: usize,
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub metric: f64,
    pub selected: Selection,
    pub model_digest: String,
    pub psd_jitter: Option<f64>,
    pub test_bags: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub method: String,
    pub task: Task,
    pub metric: String,
    pub kernel: KernelConfig,
    pub grid: ParamGrid,
    pub plan: CvPlan,
    pub folds: Vec<FoldRecord>,
    pub mean: f64,
    pub std: f64,
    pub ci95: (f64, f64),
    pub repetition_means: Vec<f64>,
    #[serde(skip)]
    pub fold_seconds: Vec<f64>,
}

impl RunResult {
    pub(crate) fn new(exp: &Experiment, task: Task, plan: CvPlan, mut folds: Vec<FoldRecord>, seconds: Vec<f64>) -> Self {
        let mut timed: Vec<(usize, usize, f64)> = folds
            .iter()
            .zip(&seconds)
            .map(|(f, &s)| (f.repetition, f.fold, s))
            .collect();
        timed.sort_by_key(|t| (t.0, t.1));
        folds.sort_by_key(|f| (f.repetition, f.fold));
        let values: Vec<f64> = folds.iter().map(|f| f.metric).collect();
        let reps = folds.iter().map(|f| f.repetition).max().map_or(0, |r| r + 1);
        let repetition_means = (0..reps)
            .map(|r| {
                let v: Vec<f64> = folds.iter().filter(|f| f.repetition == r).map(|f| f.metric).collect();
                mean(&v)
            })
            .collect();
        let m = mean(&values);
        Self {
            method: exp.kind.name().to_owned(),
            task,
            metric: metric_name(task).to_owned(),
            kernel: exp.base,
            grid: exp.grid.clone(),
            plan,
            mean: m,
            std: std_dev(&values),
            ci95: confidence_interval_95(&values).unwrap_or((m, m)),
            repetition_means,
            folds,
            fold_seconds: timed.into_iter().map(|t| t.2).collect(),
        }
    }

    /// Per-fold metric values in (repetition, fold) order.
    pub fn values(&self) -> Vec<f64> {
        self.folds.iter().map(|f| f.metric).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// SHA-256 of the JSON document, hex encoded.
    pub fn digest(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_json()?.as_bytes())))
    }

    pub fn timing_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Timing<'a> {
            method: &'a str,
            total_seconds: f64,
            fold_seconds: &'a [f64],
        }
        Ok(serde_json::to_string_pretty(&Timing {
            method: &self.method,
            total_seconds: self.fold_seconds.iter().sum(),
            fold_seconds: &self.fold_seconds,
        })?)
    }

    /// One-row CSV summary with a header.
    pub fn write_summary_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "method", "task", "metric", "folds", "repetitions", "records", "mean", "std", "ci_low", "ci_high",
        ])?;
        let task = serde_json::to_value(self.task)?;
        out.write_record([
            self.method.clone(),
            task.as_str().unwrap_or_default().to_owned(),
            self.metric.clone(),
            self.plan.folds.to_string(),
            self.plan.repetitions.to_string(),
            self.folds.len().to_string(),
            self.mean.to_string(),
            self.std.to_string(),
            self.ci95.0.to_string(),
            self.ci95.1.to_string(),
        ])?;
        out.flush()?;
        Ok(())
    }
}
