//! Instance distances: the Value Difference Metric for categorical
//! attributes and the mixed categorical/continuous distance built on it.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AttributeSchema, Bag, InstanceRef, Label};

/// Class-conditional value counts for one categorical value.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValueCounts {
    pub total: u64,
    pub per_class: Vec<u64>,
}

/// Counts backing the VDM, one table per categorical attribute.
///
/// Instances inherit the label of the bag that holds them.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VdmTable {
    classes: Vec<Label>,
    counts: Vec<Vec<ValueCounts>>,
    #[serde(skip)]
    freqs: Vec<Vec<Option<Vec<f64>>>>,
}

impl VdmTable {
    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn classes(&self) -> &[Label] {
        &self.classes
    }

    /// Counts for value `z` of categorical slot `slot`; `None` if unseen.
    pub fn counts(&self, slot: usize, z: u32) -> Option<&ValueCounts> {
        self.counts
            .get(slot)?
            .get(z as usize)
            .filter(|c| c.total > 0)
    }

    /// Class frequency vector N_{Z,z,c}/N_{Z,z}; uniform for unseen values.
    pub fn frequencies(&self, slot: usize, z: u32) -> Vec<f64> {
        match self.freq(slot, z) {
            Some(f) => f.to_vec(),
            None => vec![1.0 / self.n_classes() as f64; self.n_classes()],
        }
    }

    fn freq(&self, slot: usize, z: u32) -> Option<&[f64]> {
        self.freqs
            .get(slot)?
            .get(z as usize)?
            .as_deref()
    }

    fn rebuild_frequencies(&mut self) {
        self.freqs = self
            .counts
            .iter()
            .map(|slot| {
                slot.iter()
                    .map(|c| {
                        (c.total > 0).then(|| {
                            c.per_class
                                .iter()
                                .map(|&k| k as f64 / c.total as f64)
                                .collect()
                        })
                    })
                    .collect()
            })
            .collect();
    }
}

fn class_list<'a>(bags: impl Iterator<Item = &'a Bag>) -> Result<Vec<Label>> {
    let mut classes: Vec<Label> = Vec::new();
    for bag in bags {
        let label = bag.label();
        if matches!(label, Label::Real(_)) {
            return Err(Error::Unsupported(
                "VDM needs class labels; regression targets are not supported".into(),
            ));
        }
        if !classes.contains(&label) {
            classes.push(label);
        }
    }
    classes.sort_by(|a, b| a.as_real().total_cmp(&b.as_real()));
    if let Some(Label::Binary(_)) = classes.first() {
        classes = vec![Label::Binary(-1), Label::Binary(1)];
    }
    Ok(classes)
}

/// Counts categorical values over the instances of `bags`.
pub fn build_vdm_table<'a>(
    schema: &AttributeSchema,
    bags: impl IntoIterator<Item = &'a Bag> + Clone,
) -> Result<VdmTable> {
    if !schema.has_categorical() {
        return Err(Error::InvalidArgument(
            "VDM table requested for a schema without categorical attributes".into(),
        ));
    }
    let classes = class_list(bags.clone().into_iter())?;
    let n_classes = classes.len();
    let mut counts: Vec<Vec<ValueCounts>> = (0..schema.n_categorical())
        .map(|slot| {
            vec![
                ValueCounts {
                    total: 0,
                    per_class: vec![0; n_classes]
                };
                schema.alphabet_size(slot)
            ]
        })
        .collect();
    for bag in bags {
        let class = classes
            .iter()
            .position(|c| *c == bag.label())
            .expect("class list covers every bag");
        for x in bag.instances() {
            for (slot, &z) in x.categorical.iter().enumerate() {
                let table = &mut counts[slot];
                if z as usize >= table.len() {
                    table.resize(
                        z as usize + 1,
                        ValueCounts {
                            total: 0,
                            per_class: vec![0; n_classes],
                        },
                    );
                }
                table[z as usize].total += 1;
                table[z as usize].per_class[class] += 1;
            }
        }
    }
    let mut table = VdmTable {
        classes,
        counts,
        freqs: Vec::new(),
    };
    table.rebuild_frequencies();
    Ok(table)
}

/// VDM between two values of categorical slot `slot`.
pub fn vdm(z1: u32, z2: u32, slot: usize, table: &VdmTable) -> f64 {
    if z1 == z2 {
        return 0.0;
    }
    let uniform = 1.0 / table.n_classes() as f64;
    let f1 = table.freq(slot, z1);
    let f2 = table.freq(slot, z2);
    (0..table.n_classes())
        .map(|c| {
            let p = f1.map_or(uniform, |f| f[c]);
            let q = f2.map_or(uniform, |f| f[c]);
            (p - q) * (p - q)
        })
        .sum()
}

/// Squared Euclidean distance between two equal-length slices.
#[inline]
pub fn sq_euclidean(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..4 {
            let d = x[l] - y[l];
            acc[l] += d * d;
        }
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        let d = x - y;
        tail += d * d;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Squared mixed distance: sum of per-attribute VDM values plus squared
/// continuous differences.
pub fn mixed_sq_distance(x: InstanceRef<'_>, y: InstanceRef<'_>, table: Option<&VdmTable>) -> Result<f64> {
    if x.continuous.len() != y.continuous.len() || x.categorical.len() != y.categorical.len() {
        return Err(Error::SchemaMismatch(format!(
            "instances of arity ({}, {}) and ({}, {})",
            x.continuous.len(),
            x.categorical.len(),
            y.continuous.len(),
            y.categorical.len()
        )));
    }
    let categorical = if x.categorical.is_empty() {
        0.0
    } else {
        let table = table.ok_or_else(|| {
            Error::SchemaMismatch("categorical attributes present but no VDM table given".into())
        })?;
        if table.counts.len() != x.categorical.len() {
            return Err(Error::SchemaMismatch(format!(
                "VDM table covers {} categorical attributes, instances have {}",
                table.counts.len(),
                x.categorical.len()
            )));
        }
        categorical_sum(x.categorical, y.categorical, table)
    };
    Ok(categorical + sq_euclidean(x.continuous, y.continuous))
}

/// Mixed categorical/continuous distance (square root of
/// [`mixed_sq_distance`]).
pub fn mixed_distance(x: InstanceRef<'_>, y: InstanceRef<'_>, table: Option<&VdmTable>) -> Result<f64> {
    mixed_sq_distance(x, y, table).map(f64::sqrt)
}

fn categorical_sum(x: &[u32], y: &[u32], table: &VdmTable) -> f64 {
    x.iter()
        .zip(y)
        .enumerate()
        .map(|(slot, (&a, &b))| vdm(a, b, slot, table))
        .sum()
}

/// The instance metric used throughout: plain Euclidean for continuous data,
/// VDM-augmented when a table is attached. Cheap to clone.
#[derive(Clone, Debug, Default)]
pub struct InstanceMetric {
    vdm: Option<Arc<VdmTable>>,
}

impl InstanceMetric {
    pub fn euclidean() -> Self {
        Self { vdm: None }
    }

    pub fn with_vdm(table: VdmTable) -> Self {
        Self {
            vdm: Some(Arc::new(table)),
        }
    }

    /// Metric for data shaped like `schema`, fitting a VDM table on `bags`
    /// when categorical attributes exist.
    pub fn fit<'a>(
        schema: &AttributeSchema,
        bags: impl IntoIterator<Item = &'a Bag> + Clone,
    ) -> Result<Self> {
        if schema.has_categorical() {
            Ok(Self::with_vdm(build_vdm_table(schema, bags)?))
        } else {
            Ok(Self::euclidean())
        }
    }

    pub fn vdm_table(&self) -> Option<&VdmTable> {
        self.vdm.as_deref()
    }

    /// Squared distance without arity checks. Instances must come from the
    /// same schema the metric was fitted for.
    #[inline]
    pub fn sq_dist(&self, x: InstanceRef<'_>, y: InstanceRef<'_>) -> f64 {
        let cont = sq_euclidean(x.continuous, y.continuous);
        match &self.vdm {
            Some(t) if !x.categorical.is_empty() => cont + categorical_sum(x.categorical, y.categorical, t),
            _ => cont,
        }
    }

    #[inline]
    pub fn dist(&self, x: InstanceRef<'_>, y: InstanceRef<'_>) -> f64 {
        self.sq_dist(x, y).sqrt()
    }
}
