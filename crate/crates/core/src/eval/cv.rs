//! Nested cross-validation, leave-one-out and paired comparisons.
//!
//! Every outer split runs the same pipeline:
//!
//! 1. fit min-max ranges, the VDM table and the width scale on the
//!    training bags only;
//! 2. assemble one Gram grid over train ∪ test (entries among training
//!    bags never look at test bags);
//! 3. choose widths and the regularizer by inner k-fold CV on the training
//!    block;
//! 4. retrain on the whole training block and score the test bags.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::folds::{assign, make_folds, rng_for, CvPlan, Folds};
use super::result::{FoldRecord, RunResult, Selection};
use super::stats::{paired_t_test, TTest};
use crate::distance::InstanceMetric;
use crate::error::{Error, Result};
use crate::graph::EdgeFeature;
use crate::kernel::{mean_sq_edge_distance, mean_sq_instance_distance, GramBatch, GramGrid, GramMatrix, KernelConfig, KernelKind};
use crate::learn::{krr_train, ovo_train, svm_train, Model, DEFAULT_TOL};
use crate::model::{Bag, Dataset, Label, MinMaxScaler, Task};
use crate::parallel::{try_map_indexed, Execution};

/// Search grid. Widths are multipliers of `1 / m`, where `m` is the mean
/// squared pairwise distance on the training split (instances for
/// `gamma_scales`, edge features for `gamma_edge_scales`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    pub gamma_scales: Vec<f64>,
    pub gamma_edge_scales: Vec<f64>,
    pub c: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl Default for ParamGrid {
    fn default() -> Self {
        Self {
            gamma_scales: (-4..=4).map(|k| 2f64.powi(k)).collect(),
            gamma_edge_scales: (-2..=2).map(|k| 2f64.powi(k)).collect(),
            c: vec![0.1, 1.0, 10.0, 100.0],
            lambda: vec![1e-3, 1e-2, 0.1, 1.0],
        }
    }
}

impl ParamGrid {
    pub fn validate(&self, kind: KernelKind, task: Task) -> Result<()> {
        let check = |name: &str, v: &[f64]| -> Result<()> {
            if v.is_empty() {
                return Err(Error::InvalidArgument(format!("{name} grid is empty")));
            }
            if let Some(bad) = v.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
                return Err(Error::InvalidArgument(format!("{name} grid holds non-positive value {bad}")));
            }
            Ok(())
        };
        check("gamma", &self.gamma_scales)?;
        if kind == KernelKind::EpsilonGraph {
            check("gamma_edge", &self.gamma_edge_scales)?;
        }
        match task {
            Task::Regression => check("lambda", &self.lambda),
            _ => check("C", &self.c),
        }
    }

    fn regularizers(&self, task: Task) -> &[f64] {
        match task {
            Task::Regression => &self.lambda,
            _ => &self.c,
        }
    }
}

/// A kernel plus everything needed to evaluate it.
#[derive(Clone, Debug, PartialEq)]
pub struct Experiment {
    pub kind: KernelKind,
    /// Non-width settings (ε factor, affinity mode, normalization).
    pub base: KernelConfig,
    pub grid: ParamGrid,
    pub inner_folds: usize,
    pub tol: f64,
    /// Scheduling of outer folds.
    pub exec: Execution,
}

impl Experiment {
    pub fn new(kind: KernelKind) -> Self {
        Self {
            kind,
            base: KernelConfig::default(),
            grid: ParamGrid::default(),
            inner_folds: 3,
            tol: DEFAULT_TOL,
            exec: Execution::default(),
        }
    }

    pub fn with_grid(mut self, grid: ParamGrid) -> Self {
        self.grid = grid;
        self
    }

    pub fn with_exec(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }
}

/// Learning targets in the form each learner consumes.
#[derive(Clone, Debug, PartialEq)]
pub enum Targets {
    Binary(Vec<i8>),
    Class(Vec<u32>),
    Real(Vec<f64>),
}

impl Targets {
    pub fn from_labels(labels: &[Label]) -> Result<Self> {
        let task = labels
            .first()
            .map(Label::task)
            .ok_or_else(|| Error::InvalidArgument("no labels".into()))?;
        if labels.iter().any(|l| l.task() != task) {
            return Err(Error::Validation("labels mix task types".into()));
        }
        Ok(match task {
            Task::Binary => Targets::Binary(labels.iter().filter_map(Label::as_sign).collect()),
            Task::Multiclass => Targets::Class(
                labels
                    .iter()
                    .map(|l| match l {
                        Label::Class(c) => *c,
                        _ => unreachable!(),
                    })
                    .collect(),
            ),
            Task::Regression => Targets::Real(labels.iter().map(Label::as_real).collect()),
        })
    }

    pub fn task(&self) -> Task {
        match self {
            Targets::Binary(_) => Task::Binary,
            Targets::Class(_) => Task::Multiclass,
            Targets::Real(_) => Task::Regression,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Targets::Binary(v) => v.len(),
            Targets::Class(v) => v.len(),
            Targets::Real(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn value(&self, i: usize) -> f64 {
        match self {
            Targets::Binary(v) => v[i] as f64,
            Targets::Class(v) => v[i] as f64,
            Targets::Real(v) => v[i],
        }
    }

    pub fn subset(&self, idx: &[usize]) -> Targets {
        match self {
            Targets::Binary(v) => Targets::Binary(idx.iter().map(|&i| v[i]).collect()),
            Targets::Class(v) => Targets::Class(idx.iter().map(|&i| v[i]).collect()),
            Targets::Real(v) => Targets::Real(idx.iter().map(|&i| v[i]).collect()),
        }
    }

    /// The only class present, for classification targets with one class.
    fn single_class(&self) -> Option<f64> {
        let first = self.value(0);
        match self {
            Targets::Real(_) => None,
            _ => (1..self.len()).all(|i| self.value(i) == first).then_some(first),
        }
    }

    /// Per-sample loss: 0/1 error, or squared error for regression.
    pub fn loss(&self, i: usize, prediction: f64) -> f64 {
        match self {
            Targets::Real(v) => (prediction - v[i]).powi(2),
            _ => f64::from(u8::from(prediction != self.value(i))),
        }
    }
}

/// Trains the task's learner: C-SVM, one-vs-one C-SVM or KRR. KRR
/// predictions are clipped to [0, 1] when every target lies there.
pub fn fit(gram: &GramMatrix, targets: &Targets, regularizer: f64, tol: f64) -> Result<Model> {
    Ok(match targets {
        Targets::Binary(y) => Model::Svm(svm_train(gram, y, regularizer, tol)?),
        Targets::Class(y) => Model::Ovo(ovo_train(gram, y, regularizer, tol)?),
        Targets::Real(y) => {
            let model = krr_train(gram, y, regularizer)?;
            if y.iter().all(|v| (0.0..=1.0).contains(v)) {
                Model::Krr(model.with_clip(0.0, 1.0))
            } else {
                Model::Krr(model)
            }
        }
    })
}

/// Prediction for one bag given its kernel row against the training bags.
pub fn predict(model: &Model, row: &[f64]) -> Result<f64> {
    Ok(match model {
        Model::Svm(m) => m.predict(row)?.1 as f64,
        Model::Ovo(m) => m.predict(row)? as f64,
        Model::Krr(m) => m.predict(row)?,
    })
}

/// Result of fitting one training split.
#[derive(Clone, Debug)]
pub struct SplitFit {
    pub model: Model,
    pub config: KernelConfig,
    pub scaler: MinMaxScaler,
    pub selection: Selection,
    pub psd_jitter: Option<f64>,
    /// Test predictions, in the order of the test indices.
    pub predictions: Vec<f64>,
}

fn transformed(dataset: &Dataset, train: &[usize], test: &[usize]) -> Result<(Vec<Bag>, MinMaxScaler, InstanceMetric)> {
    let scaler = MinMaxScaler::fit(&dataset.schema, train.iter().map(|&i| &dataset.bags[i]))?;
    let bags: Vec<Bag> = train
        .iter()
        .chain(test)
        .map(|&i| scaler.transform_bag(&dataset.bags[i]))
        .collect();
    let metric = if dataset.schema.has_categorical() {
        InstanceMetric::fit(&dataset.schema, bags[..train.len()].iter())?
    } else {
        InstanceMetric::euclidean()
    };
    Ok((bags, scaler, metric))
}

fn positive_or_one(m: f64) -> f64 {
    if m.is_finite() && m > 0.0 {
        m
    } else {
        1.0
    }
}

/// Gram grid over `bags` with widths scaled by statistics of the first
/// `n_train` bags. Returns the grid and the two scale denominators.
fn build_grid(exp: &Experiment, bags: &[Bag], n_train: usize, metric: &InstanceMetric) -> Result<(GramGrid, f64, f64)> {
    let refs: Vec<&Bag> = bags.iter().collect();
    let scale = positive_or_one(mean_sq_instance_distance(&refs[..n_train], metric));
    let gammas: Vec<f64> = exp.grid.gamma_scales.iter().map(|s| s / scale).collect();
    let mut batch = GramBatch::new(refs, metric, Execution::Sequential);
    let (edge_scale, gamma_edges) = if exp.kind == KernelKind::EpsilonGraph {
        batch = batch.with_graphs(exp.base.epsilon_factor);
        let features: Vec<&[EdgeFeature]> = (0..n_train).map(|i| batch.edge_features(i).unwrap_or(&[])).collect();
        let es = positive_or_one(mean_sq_edge_distance(&features));
        (es, exp.grid.gamma_edge_scales.iter().map(|s| s / es).collect())
    } else {
        (1.0, vec![exp.base.gamma_edge])
    };
    let grid = batch.compute(exp.kind, &exp.base, &gammas, &gamma_edges)?;
    Ok((grid, scale, edge_scale))
}

/// Mean inner-CV loss of every regularizer on one training Gram block.
fn inner_losses(gram: &GramMatrix, targets: &Targets, regs: &[f64], inner: &[usize], k: usize, tol: f64) -> Result<Vec<f64>> {
    let n = targets.len();
    let mut totals = vec![0.0; regs.len()];
    for fold in 0..k {
        let tr: Vec<usize> = (0..n).filter(|&i| inner[i] != fold).collect();
        let te: Vec<usize> = (0..n).filter(|&i| inner[i] == fold).collect();
        if te.is_empty() || tr.is_empty() {
            continue;
        }
        let t_tr = targets.subset(&tr);
        let g_tr = gram.select(&tr);
        let cross = gram.cross(&te, &tr);
        for (r, &reg) in regs.iter().enumerate() {
            if let Some(c) = t_tr.single_class() {
                totals[r] += te.iter().map(|&i| targets.loss(i, c)).sum::<f64>();
                continue;
            }
            let model = fit(&g_tr, &t_tr, reg, tol)?;
            for (row, &i) in te.iter().enumerate() {
                totals[r] += targets.loss(i, predict(&model, cross.row(row))?);
            }
        }
    }
    Ok(totals.into_iter().map(|t| t / n as f64).collect())
}

/// Fits `exp` on `train` with nested selection and predicts `test`.
/// Inner folds draw from stream `stream` of a generator seeded with `seed`.
pub fn fit_split(dataset: &Dataset, exp: &Experiment, train: &[usize], test: &[usize], seed: u64, stream: u64) -> Result<SplitFit> {
    if train.len() < 2 {
        return Err(Error::InvalidArgument(format!("training split has {} bags", train.len())));
    }
    let labels = dataset.labels();
    let all_targets = Targets::from_labels(&labels)?;
    let task = all_targets.task();
    exp.grid.validate(exp.kind, task)?;
    let targets = all_targets.subset(train);
    let (bags, scaler, metric) = transformed(dataset, train, test)?;
    let n_train = train.len();
    let (grid, scale, edge_scale) = build_grid(exp, &bags, n_train, &metric)?;

    let k = exp.inner_folds.clamp(2, n_train);
    let train_labels: Vec<Label> = train.iter().map(|&i| labels[i]).collect();
    let inner = assign(&train_labels, k, true, &mut rng_for(seed, stream));
    let train_rows: Vec<usize> = (0..n_train).collect();
    let regs = exp.grid.regularizers(task);
    let n_edges = if exp.kind == KernelKind::EpsilonGraph { grid.gamma_edges.len() } else { 1 };

    let mut best: Option<(f64, usize, usize, usize)> = None;
    for g in 0..grid.gammas.len() {
        for e in 0..n_edges {
            let mut block = grid.gram(g, e).select(&train_rows);
            block.repair_psd();
            let losses = inner_losses(&block, &targets, regs, &inner, k, exp.tol)?;
            for (r, &loss) in losses.iter().enumerate() {
                if best.is_none_or(|b| loss < b.0) {
                    best = Some((loss, g, e, r));
                }
            }
        }
    }
    let (inner_loss, g, e, r) = best.expect("grids are non-empty");

    let full = grid.gram(g, e);
    let mut block = full.select(&train_rows);
    let psd_jitter = block.repair_psd();
    let model = fit(&block, &targets, regs[r], exp.tol)?;
    let test_rows: Vec<usize> = (n_train..n_train + test.len()).collect();
    let cross = full.cross(&test_rows, &train_rows);
    let predictions = (0..test.len())
        .map(|row| predict(&model, cross.row(row)))
        .collect::<Result<Vec<_>>>()?;

    let config = grid.config_for(g, e);
    let graph = exp.kind == KernelKind::EpsilonGraph;
    let selection = Selection {
        gamma: config.gamma_node,
        gamma_scale: exp.grid.gamma_scales[g],
        gamma_edge: graph.then_some(config.gamma_edge),
        gamma_edge_scale: graph.then(|| exp.grid.gamma_edge_scales[e]),
        c: (task != Task::Regression).then_some(regs[r]),
        lambda: (task == Task::Regression).then_some(regs[r]),
        inner_metric: match task {
            Task::Regression => inner_loss,
            _ => 100.0 * (1.0 - inner_loss),
        },
    };
    log::debug!(
        "split: {} train / {} test, mean sq distance {scale:.4}, edge {edge_scale:.4}, selected {:?}",
        n_train,
        test.len(),
        selection
    );
    Ok(SplitFit {
        model,
        config,
        scaler,
        selection,
        psd_jitter,
        predictions,
    })
}

/// Accuracy in percent, or mean squared loss for regression.
pub fn score(targets: &Targets, idx: &[usize], predictions: &[f64]) -> f64 {
    let loss: f64 = idx.iter().zip(predictions).map(|(&i, &p)| targets.loss(i, p)).sum::<f64>() / idx.len() as f64;
    match targets.task() {
        Task::Regression => loss,
        _ => 100.0 * (1.0 - loss),
    }
}

pub(crate) fn metric_name(task: Task) -> &'static str {
    match task {
        Task::Regression => "squared_loss",
        _ => "accuracy",
    }
}

fn inner_stream(repetition: usize, fold: usize) -> u64 {
    ((repetition as u64 + 1) << 32) | fold as u64
}

/// Runs one outer fold of `folds`.
pub fn run_fold(dataset: &Dataset, exp: &Experiment, folds: &Folds, seed: u64, repetition: usize, fold: usize) -> Result<(FoldRecord, f64)> {
    let start = Instant::now();
    let train = folds.train(repetition, fold);
    let test = folds.test(repetition, fold);
    let targets = Targets::from_labels(&dataset.labels())?;
    let fitted = fit_split(dataset, exp, &train, &test, seed, inner_stream(repetition, fold)).map_err(|e| Error::FoldFailed {
        repetition,
        fold,
        source: Box::new(e),
    })?;
    let record = FoldRecord {
        repetition,
        fold,
        n_train: train.len(),
        n_test: test.len(),
        metric: score(&targets, &test, &fitted.predictions),
        selected: fitted.selection,
        model_digest: fitted.model.digest(),
        psd_jitter: fitted.psd_jitter,
        test_bags: test.iter().map(|&i| dataset.bags[i].id().to_owned()).collect(),
    };
    Ok((record, start.elapsed().as_secs_f64()))
}

/// Repeated k-fold CV with nested parameter selection.
pub fn cross_validate(dataset: &Dataset, exp: &Experiment, plan: &CvPlan) -> Result<RunResult> {
    dataset.ensure_valid()?;
    let folds = make_folds(dataset, plan)?;
    cross_validate_on(dataset, exp, plan, &folds)
}

/// CV on a fixed partition, so several methods can share folds.
pub fn cross_validate_on(dataset: &Dataset, exp: &Experiment, plan: &CvPlan, folds: &Folds) -> Result<RunResult> {
    let task = dataset
        .task()
        .ok_or_else(|| Error::InvalidArgument("empty dataset".into()))?;
    exp.grid.validate(exp.kind, task)?;
    let k = folds.k;
    let runs = try_map_indexed(exp.exec, k * folds.repetitions(), |t| {
        run_fold(dataset, exp, folds, plan.seed, t / k, t % k)
    })?;
    let (records, seconds): (Vec<_>, Vec<_>) = runs.into_iter().unzip();
    Ok(RunResult::new(exp, task, *plan, records, seconds))
}

/// Leave-one-out predictions of KRR on a fixed Gram matrix: bag `i` is
/// predicted by the model trained on every other bag.
pub fn loo_predictions(gram: &GramMatrix, targets: &[f64], lambda: f64, held_out: &[usize]) -> Result<Vec<f64>> {
    let n = gram.len();
    held_out
        .iter()
        .map(|&i| {
            let rest: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            let t: Vec<f64> = rest.iter().map(|&j| targets[j]).collect();
            let model = krr_train(&gram.select(&rest), &t, lambda)?;
            model.predict(gram.cross(&[i], &rest).row(0))
        })
        .collect()
}

/// Leave-one-out evaluation. Bags are grouped into `min(10, N)` stratified
/// blocks; parameters for a block are chosen once by inner CV on the other
/// blocks, then every bag in the block is predicted by a model trained on
/// the remaining N − 1 bags.
pub fn leave_one_out(dataset: &Dataset, exp: &Experiment, seed: u64) -> Result<RunResult> {
    dataset.ensure_valid()?;
    let n = dataset.len();
    if n < 3 {
        return Err(Error::InvalidArgument(format!("leave-one-out needs at least 3 bags, got {n}")));
    }
    let plan = CvPlan::new(n.min(10), 1, seed);
    let blocks = make_folds(dataset, &plan)?;
    let targets = Targets::from_labels(&dataset.labels())?;
    let task = targets.task();
    exp.grid.validate(exp.kind, task)?;

    let per_block = try_map_indexed(exp.exec, blocks.k, |b| {
        let start = Instant::now();
        loo_block(dataset, exp, &blocks, &targets, seed, b)
            .map(|recs| (recs, start.elapsed().as_secs_f64()))
            .map_err(|e| Error::FoldFailed {
                repetition: 0,
                fold: b,
                source: Box::new(e),
            })
    })?;
    let mut records = Vec::with_capacity(n);
    let mut seconds = Vec::with_capacity(n);
    for (recs, secs) in per_block {
        let share = secs / recs.len().max(1) as f64;
        seconds.extend(std::iter::repeat_n(share, recs.len()));
        records.extend(recs);
    }
    records.sort_by_key(|r| r.fold);
    let loo_plan = CvPlan {
        folds: n,
        repetitions: 1,
        seed,
        stratified: false,
    };
    Ok(RunResult::new(exp, task, loo_plan, records, seconds))
}

fn loo_block(dataset: &Dataset, exp: &Experiment, blocks: &Folds, targets: &Targets, seed: u64, b: usize) -> Result<Vec<FoldRecord>> {
    let held = blocks.test(0, b);
    let rest = blocks.train(0, b);
    let chosen = fit_split(dataset, exp, &rest, &held, seed, inner_stream(0, b))?;
    let regularizer = chosen.selection.c.or(chosen.selection.lambda).expect("one regularizer");
    let order: Vec<usize> = rest.iter().chain(&held).copied().collect();
    let (bags, _, metric) = transformed(dataset, &rest, &held)?;
    let mut batch = GramBatch::new(bags.iter().collect(), &metric, Execution::Sequential);
    if exp.kind == KernelKind::EpsilonGraph {
        batch = batch.with_graphs(exp.base.epsilon_factor);
    }
    let full = batch
        .compute(exp.kind, &chosen.config, &[chosen.config.gamma_node], &[chosen.config.gamma_edge])?
        .gram(0, 0);
    let mut out = Vec::with_capacity(held.len());
    for (h, &i) in held.iter().enumerate() {
        let row = rest.len() + h;
        let train_rows: Vec<usize> = (0..order.len()).filter(|&r| r != row).collect();
        let train: Vec<usize> = train_rows.iter().map(|&r| order[r]).collect();
        let mut block = full.select(&train_rows);
        let jitter = block.repair_psd();
        let model = fit(&block, &targets.subset(&train), regularizer, exp.tol)?;
        let prediction = predict(&model, full.cross(&[row], &train_rows).row(0))?;
        out.push(FoldRecord {
            repetition: 0,
            fold: i,
            n_train: train.len(),
            n_test: 1,
            metric: score(targets, &[i], &[prediction]),
            selected: chosen.selection.clone(),
            model_digest: model.digest(),
            psd_jitter: jitter,
            test_bags: vec![dataset.bags[i].id().to_owned()],
        });
    }
    Ok(out)
}

/// Two methods evaluated on identical folds, with a paired t-test on the
/// per-fold metrics (`a − b`).
#[derive(Clone, Debug, Serialize)]
pub struct Comparison {
    pub a: RunResult,
    pub b: RunResult,
    pub test: TTest,
}

pub fn compare(dataset: &Dataset, a: &Experiment, b: &Experiment, plan: &CvPlan, alpha: f64) -> Result<Comparison> {
    dataset.ensure_valid()?;
    let folds = make_folds(dataset, plan)?;
    let ra = cross_validate_on(dataset, a, plan, &folds)?;
    let rb = cross_validate_on(dataset, b, plan, &folds)?;
    let test = paired_t_test(&ra.values(), &rb.values(), alpha)?;
    Ok(Comparison { a: ra, b: rb, test })
}
