//! Flat `key = value` experiment files. Keys mirror the CLI flags (dashes
//! or underscores); list values are comma separated; `#` starts a comment.
//!
//! ```text
//! kernel = migraph
//! task = classify
//! folds = 10
//! repeats = 10
//! seed = 7
//! data = data/musk1.csv
//! c = 0.1, 1, 10, 100
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::eval::{CvPlan, Experiment, ParamGrid};
use crate::kernel::KernelKind;
use crate::model::Task;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExperimentConfig {
    pub kernel: Option<KernelKind>,
    pub task: Option<Task>,
    pub folds: Option<usize>,
    pub repeats: Option<usize>,
    pub seed: Option<u64>,
    pub data: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub gamma_scales: Option<Vec<f64>>,
    pub gamma_edge_scales: Option<Vec<f64>>,
    pub c: Option<Vec<f64>>,
    pub lambda: Option<Vec<f64>>,
    pub inner_folds: Option<usize>,
    pub epsilon_factor: Option<f64>,
    pub threads: Option<usize>,
}

pub fn parse_task(s: &str) -> Result<Task> {
    match s.trim().to_ascii_lowercase().as_str() {
        "classify" | "binary" => Ok(Task::Binary),
        "multiclass" => Ok(Task::Multiclass),
        "regress" | "regression" => Ok(Task::Regression),
        other => Err(Error::InvalidArgument(format!(
            "unknown task {other:?} (expected classify, multiclass or regress)"
        ))),
    }
}

pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| Error::InvalidArgument(format!("{t:?} is not a number"))))
        .collect()
}

fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::InvalidArgument(format!("invalid value {v:?} for {key}")))
}

impl ExperimentConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                path: path.to_owned(),
                line: i as u64 + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
            let key = key.trim().replace('-', "_");
            let value = value.trim();
            let set = |cfg: &mut Self| -> Result<()> {
                match key.as_str() {
                    "kernel" => cfg.kernel = Some(value.parse()?),
                    "task" => cfg.task = Some(parse_task(value)?),
                    "folds" => cfg.folds = Some(parse_value(&key, value)?),
                    "repeats" | "repetitions" => cfg.repeats = Some(parse_value(&key, value)?),
                    "seed" => cfg.seed = Some(parse_value(&key, value)?),
                    "data" => cfg.data = Some(value.into()),
                    "schema" => cfg.schema = Some(value.into()),
                    "output" | "out" => cfg.output = Some(value.into()),
                    "gamma_scales" | "gammas" => cfg.gamma_scales = Some(parse_list(value)?),
                    "gamma_edge_scales" | "gamma_edges" => cfg.gamma_edge_scales = Some(parse_list(value)?),
                    "c" => cfg.c = Some(parse_list(value)?),
                    "lambda" => cfg.lambda = Some(parse_list(value)?),
                    "inner_folds" => cfg.inner_folds = Some(parse_value(&key, value)?),
                    "epsilon_factor" | "epsilon" => cfg.epsilon_factor = Some(parse_value(&key, value)?),
                    "threads" => cfg.threads = Some(parse_value(&key, value)?),
                    _ => return Err(Error::InvalidArgument(format!("unknown key {key:?}"))),
                }
                Ok(())
            };
            set(&mut cfg).map_err(|e| err(e.to_string()))?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidArgument(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, path)
    }

    /// Fields set in `flags` replace those in `self`.
    pub fn overlay(self, flags: ExperimentConfig) -> Self {
        Self {
            kernel: flags.kernel.or(self.kernel),
            task: flags.task.or(self.task),
            folds: flags.folds.or(self.folds),
            repeats: flags.repeats.or(self.repeats),
            seed: flags.seed.or(self.seed),
            data: flags.data.or(self.data),
            schema: flags.schema.or(self.schema),
            output: flags.output.or(self.output),
            gamma_scales: flags.gamma_scales.or(self.gamma_scales),
            gamma_edge_scales: flags.gamma_edge_scales.or(self.gamma_edge_scales),
            c: flags.c.or(self.c),
            lambda: flags.lambda.or(self.lambda),
            inner_folds: flags.inner_folds.or(self.inner_folds),
            epsilon_factor: flags.epsilon_factor.or(self.epsilon_factor),
            threads: flags.threads.or(self.threads),
        }
    }

    pub fn plan(&self) -> CvPlan {
        let d = CvPlan::default();
        CvPlan {
            folds: self.folds.unwrap_or(d.folds),
            repetitions: self.repeats.unwrap_or(d.repetitions),
            seed: self.seed.unwrap_or(d.seed),
            stratified: true,
        }
    }

    pub fn grid(&self) -> ParamGrid {
        let d = ParamGrid::default();
        ParamGrid {
            gamma_scales: self.gamma_scales.clone().unwrap_or(d.gamma_scales),
            gamma_edge_scales: self.gamma_edge_scales.clone().unwrap_or(d.gamma_edge_scales),
            c: self.c.clone().unwrap_or(d.c),
            lambda: self.lambda.clone().unwrap_or(d.lambda),
        }
    }

    /// Experiment for `kind`, or the configured kernel when `kind` is None.
    pub fn experiment(&self, kind: Option<KernelKind>) -> Result<Experiment> {
        let kind = kind
            .or(self.kernel)
            .ok_or_else(|| Error::InvalidArgument("no kernel given".into()))?;
        let mut exp = Experiment::new(kind).with_grid(self.grid());
        if let Some(k) = self.inner_folds {
            if k < 2 {
                return Err(Error::InvalidArgument(format!("inner folds must be ≥ 2, got {k}")));
            }
            exp.inner_folds = k;
        }
        if let Some(e) = self.epsilon_factor {
            exp.base.epsilon_factor = e;
        }
        exp.base.validate()?;
        Ok(exp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_overlays() {
        let text = "# musk run\nkernel = migraph\ntask=classify\nfolds = 5\nc = 1, 10\ngamma-scales = 0.5,1,2\n";
        let cfg = ExperimentConfig::parse(text, Path::new("x.cfg")).unwrap();
        assert_eq!(cfg.kernel, Some(KernelKind::CliqueWeighted));
        assert_eq!(cfg.task, Some(Task::Binary));
        assert_eq!(cfg.c, Some(vec![1.0, 10.0]));
        let flags = ExperimentConfig {
            folds: Some(3),
            ..Default::default()
        };
        let merged = cfg.overlay(flags);
        assert_eq!(merged.plan().folds, 3);
        assert_eq!(merged.grid().gamma_scales, vec![0.5, 1.0, 2.0]);
        assert_eq!(merged.plan().repetitions, 10);
    }

    #[test]
    fn bad_lines_name_their_line() {
        let err = ExperimentConfig::parse("kernel = migraph\nfolds ten\n", Path::new("x")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = ExperimentConfig::parse("colour = red\n", Path::new("x")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }
}
