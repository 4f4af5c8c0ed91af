//! Repeated, optionally stratified k-fold partitions.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, Label};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvPlan {
    pub folds: usize,
    pub repetitions: usize,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for CvPlan {
    fn default() -> Self {
        Self {
            folds: 10,
            repetitions: 10,
            seed: 0,
            stratified: true,
        }
    }
}

impl CvPlan {
    pub fn new(folds: usize, repetitions: usize, seed: u64) -> Self {
        Self {
            folds,
            repetitions,
            seed,
            stratified: true,
        }
    }

    pub fn validate(&self, n_bags: usize) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 folds, got {}", self.folds)));
        }
        if self.repetitions == 0 {
            return Err(Error::InvalidArgument("need at least one repetition".into()));
        }
        if n_bags < self.folds {
            return Err(Error::InvalidArgument(format!(
                "{n_bags} bags cannot fill {} folds",
                self.folds
            )));
        }
        Ok(())
    }

    pub fn n_runs(&self) -> usize {
        self.folds * self.repetitions
    }
}

/// Fold index of every bag, one vector per repetition.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Folds {
    pub k: usize,
    pub assignments: Vec<Vec<usize>>,
}

impl Folds {
    pub fn repetitions(&self) -> usize {
        self.assignments.len()
    }

    pub fn test(&self, repetition: usize, fold: usize) -> Vec<usize> {
        let a = &self.assignments[repetition];
        (0..a.len()).filter(|&i| a[i] == fold).collect()
    }

    pub fn train(&self, repetition: usize, fold: usize) -> Vec<usize> {
        let a = &self.assignments[repetition];
        (0..a.len()).filter(|&i| a[i] != fold).collect()
    }
}

/// Grouping key for stratification; regression targets are not stratified.
pub(crate) fn stratum(label: Label) -> Option<i64> {
    match label {
        Label::Binary(s) => Some(s as i64),
        Label::Class(c) => Some(c as i64),
        Label::Real(_) => None,
    }
}

pub(crate) fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Shuffles each stratum and deals its members round-robin, continuing the
/// fold counter across strata so fold sizes differ by at most one.
pub(crate) fn assign(labels: &[Label], k: usize, stratified: bool, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut groups: BTreeMap<Option<i64>, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        let key = if stratified { stratum(l) } else { None };
        groups.entry(key).or_default().push(i);
    }
    let mut out = vec![0; labels.len()];
    let mut next = 0;
    for (key, mut members) in groups {
        if stratified && key.is_some() && members.len() < k {
            log::warn!(
                "class {} has {} bags for {k} folds; some folds will lack it",
                key.unwrap_or_default(),
                members.len()
            );
        }
        members.shuffle(rng);
        for i in members {
            out[i] = next % k;
            next += 1;
        }
    }
    out
}

/// Fold assignments for every repetition of `plan`. Repetition `r` draws
/// from stream `r` of a ChaCha8 generator seeded with `plan.seed`.
pub fn make_folds(dataset: &Dataset, plan: &CvPlan) -> Result<Folds> {
    plan.validate(dataset.len())?;
    let labels = dataset.labels();
    let assignments = (0..plan.repetitions)
        .map(|r| {
            let mut rng = rng_for(plan.seed, (r as u64) << 32);
            assign(&labels, plan.folds, plan.stratified, &mut rng)
        })
        .collect();
    Ok(Folds {
        k: plan.folds,
        assignments,
    })
}
