//! Trained models on disk: the versioned blob from [`crate::learn`] with a
//! JSON metadata string holding what prediction needs besides the training
//! bags (kernel, widths, normalization ranges, schema).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::distance::InstanceMetric;
use crate::error::{Error, Result};
use crate::eval::{fit_split, predict, Experiment, Selection};
use crate::kernel::{GramBatch, KernelConfig, KernelKind};
use crate::learn::Model;
use crate::model::{AttributeSchema, Bag, Dataset, MinMaxScaler, Task};
use crate::parallel::Execution;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub kernel: KernelKind,
    pub task: Task,
    pub config: KernelConfig,
    pub scaler: MinMaxScaler,
    pub schema: AttributeSchema,
    pub selection: Selection,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub model: Model,
    pub meta: ModelMetadata,
}

impl TrainedModel {
    /// Fits on every bag of `dataset`, choosing parameters by inner CV.
    pub fn train(dataset: &Dataset, exp: &Experiment, seed: u64) -> Result<Self> {
        dataset.ensure_valid()?;
        let task = dataset
            .task()
            .ok_or_else(|| Error::InvalidArgument("empty dataset".into()))?;
        let all: Vec<usize> = (0..dataset.len()).collect();
        let fit = fit_split(dataset, exp, &all, &[], seed, 0)?;
        Ok(Self {
            model: fit.model,
            meta: ModelMetadata {
                kernel: exp.kind,
                task,
                config: fit.config,
                scaler: fit.scaler,
                schema: dataset.schema.clone(),
                selection: fit.selection,
            },
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        Ok(self.model.to_bytes(&serde_json::to_string(&self.meta)?))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (model, meta) = Model::from_bytes(bytes)?;
        let meta = serde_json::from_str(&meta).map_err(|e| Error::Format(format!("model metadata: {e}")))?;
        Ok(Self { model, meta })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    fn training_ids(&self) -> Vec<String> {
        match &self.model {
            Model::Svm(m) => m.bag_ids.clone(),
            Model::Krr(m) => m.bag_ids.clone(),
            Model::Ovo(m) => {
                let mut ids = vec![String::new(); m.n_train];
                for p in &m.pairs {
                    for (&i, id) in p.members.iter().zip(&p.model.bag_ids) {
                        ids[i] = id.clone();
                    }
                }
                ids
            }
        }
    }

    /// Predicts every bag of `query`. `train` must hold the training bags
    /// in their original order; with categorical attributes, `query` must
    /// have been read with `train`'s schema so symbol ids agree.
    pub fn predict(&self, train: &Dataset, query: &Dataset) -> Result<Vec<f64>> {
        let ids: Vec<&str> = train.bags.iter().map(Bag::id).collect();
        if self.training_ids() != ids {
            return Err(Error::Validation(
                "training data does not match the bags this model was trained on".into(),
            ));
        }
        if query.schema.kinds() != self.meta.schema.kinds() {
            return Err(Error::SchemaMismatch("query attributes differ from the training schema".into()));
        }
        let scaled: Vec<Bag> = train
            .bags
            .iter()
            .chain(&query.bags)
            .map(|b| self.meta.scaler.transform_bag(b))
            .collect();
        let n_train = train.len();
        let metric = if train.schema.has_categorical() {
            InstanceMetric::fit(&train.schema, scaled[..n_train].iter())?
        } else {
            InstanceMetric::euclidean()
        };
        let mut batch = GramBatch::new(scaled.iter().collect(), &metric, Execution::default());
        if self.meta.kernel == KernelKind::EpsilonGraph {
            batch = batch.with_graphs(self.meta.config.epsilon_factor);
        }
        let cfg = self.meta.config;
        let full = batch
            .compute(self.meta.kernel, &cfg, &[cfg.gamma_node], &[cfg.gamma_edge])?
            .gram(0, 0);
        let train_rows: Vec<usize> = (0..n_train).collect();
        let rows: Vec<usize> = (n_train..scaled.len()).collect();
        let cross = full.cross(&rows, &train_rows);
        (0..rows.len()).map(|r| predict(&self.model, cross.row(r))).collect()
    }
}
