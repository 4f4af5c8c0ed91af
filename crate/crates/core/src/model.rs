//! Bags, instances, labels and attribute schemas.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributeKind {
    Categorical,
    Continuous,
}

/// Per-attribute kinds plus the interned alphabet of every categorical
/// attribute.
///
/// Instances store their continuous values and their categorical symbol ids
/// in two separate arrays, each in column order. `categorical slot k` means
/// the k-th categorical column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeSchema {
    kinds: Vec<AttributeKind>,
    symbols: Vec<Vec<String>>,
}

impl AttributeSchema {
    pub fn new(kinds: Vec<AttributeKind>) -> Self {
        let n_cat = kinds
            .iter()
            .filter(|k| **k == AttributeKind::Categorical)
            .count();
        Self {
            kinds,
            symbols: vec![Vec::new(); n_cat],
        }
    }

    /// Schema with `d` continuous attributes.
    pub fn continuous(d: usize) -> Self {
        Self::new(vec![AttributeKind::Continuous; d])
    }

    pub fn kinds(&self) -> &[AttributeKind] {
        &self.kinds
    }

    pub fn dim(&self) -> usize {
        self.kinds.len()
    }

    pub fn n_categorical(&self) -> usize {
        self.symbols.len()
    }

    pub fn n_continuous(&self) -> usize {
        self.kinds.len() - self.symbols.len()
    }

    pub fn has_categorical(&self) -> bool {
        !self.symbols.is_empty()
    }

    /// Column index of the k-th continuous attribute.
    pub fn continuous_column(&self, k: usize) -> usize {
        self.column_of(AttributeKind::Continuous, k)
    }

    /// Column index of the k-th categorical attribute.
    pub fn categorical_column(&self, k: usize) -> usize {
        self.column_of(AttributeKind::Categorical, k)
    }

    fn column_of(&self, kind: AttributeKind, k: usize) -> usize {
        self.kinds
            .iter()
            .enumerate()
            .filter(|(_, kd)| **kd == kind)
            .nth(k)
            .map(|(c, _)| c)
            .expect("attribute slot out of range")
    }

    /// Returns the id of `symbol` in categorical slot `slot`, adding it if new.
    pub fn intern(&mut self, slot: usize, symbol: &str) -> u32 {
        let alphabet = &mut self.symbols[slot];
        match alphabet.iter().position(|s| s == symbol) {
            Some(i) => i as u32,
            None => {
                alphabet.push(symbol.to_owned());
                (alphabet.len() - 1) as u32
            }
        }
    }

    pub fn symbol(&self, slot: usize, id: u32) -> Option<&str> {
        self.symbols
            .get(slot)
            .and_then(|a| a.get(id as usize))
            .map(String::as_str)
    }

    pub fn alphabet_size(&self, slot: usize) -> usize {
        self.symbols[slot].len()
    }
}

/// Bag label.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Label {
    /// −1 or +1.
    Binary(i8),
    /// Category index, 1-based.
    Class(u32),
    /// Regression target.
    Real(f64),
}

impl Label {
    pub fn task(&self) -> Task {
        match self {
            Label::Binary(_) => Task::Binary,
            Label::Class(_) => Task::Multiclass,
            Label::Real(_) => Task::Regression,
        }
    }

    pub fn as_sign(&self) -> Option<i8> {
        match *self {
            Label::Binary(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_real(&self) -> f64 {
        match *self {
            Label::Binary(s) => s as f64,
            Label::Class(c) => c as f64,
            Label::Real(v) => v,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Binary(s) if *s > 0 => write!(f, "+1"),
            Label::Binary(_) => write!(f, "-1"),
            Label::Class(c) => write!(f, "{c}"),
            Label::Real(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    #[serde(alias = "classify")]
    Binary,
    Multiclass,
    #[serde(alias = "regress")]
    Regression,
}

/// An owned instance, used when assembling bags.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Instance {
    pub continuous: Vec<f64>,
    pub categorical: Vec<u32>,
}

impl Instance {
    pub fn continuous(values: Vec<f64>) -> Self {
        Self {
            continuous: values,
            categorical: Vec::new(),
        }
    }

    pub fn as_ref(&self) -> InstanceRef<'_> {
        InstanceRef {
            continuous: &self.continuous,
            categorical: &self.categorical,
        }
    }
}

/// Borrowed view of one instance inside a bag.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InstanceRef<'a> {
    pub continuous: &'a [f64],
    pub categorical: &'a [u32],
}

/// A labelled, ordered collection of instances stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Bag {
    id: String,
    label: Label,
    len: usize,
    n_cont: usize,
    n_cat: usize,
    continuous: Vec<f64>,
    categorical: Vec<u32>,
}

impl Bag {
    /// Assembles a bag. All instances must have the same arity; an empty
    /// instance list is accepted here and reported by [`validate`].
    pub fn new(id: impl Into<String>, label: Label, instances: Vec<Instance>) -> Result<Self> {
        let id = id.into();
        let (n_cont, n_cat) = instances
            .first()
            .map(|x| (x.continuous.len(), x.categorical.len()))
            .unwrap_or((0, 0));
        let mut continuous = Vec::with_capacity(instances.len() * n_cont);
        let mut categorical = Vec::with_capacity(instances.len() * n_cat);
        for (a, x) in instances.iter().enumerate() {
            if x.continuous.len() != n_cont || x.categorical.len() != n_cat {
                return Err(Error::SchemaMismatch(format!(
                    "bag {id}: instance {a} has arity ({}, {}), expected ({n_cont}, {n_cat})",
                    x.continuous.len(),
                    x.categorical.len()
                )));
            }
            continuous.extend_from_slice(&x.continuous);
            categorical.extend_from_slice(&x.categorical);
        }
        Ok(Self {
            id,
            label,
            len: instances.len(),
            n_cont,
            n_cat,
            continuous,
            categorical,
        })
    }

    /// Bag of purely continuous instances.
    pub fn from_rows(id: impl Into<String>, label: Label, rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(id, label, rows.into_iter().map(Instance::continuous).collect())
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn label(&self) -> Label {
        self.label
    }

    pub fn with_label(mut self, label: Label) -> Self {
        self.label = label;
        self
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn n_continuous(&self) -> usize {
        self.n_cont
    }

    pub fn n_categorical(&self) -> usize {
        self.n_cat
    }

    pub fn instance(&self, a: usize) -> InstanceRef<'_> {
        InstanceRef {
            continuous: &self.continuous[a * self.n_cont..(a + 1) * self.n_cont],
            categorical: &self.categorical[a * self.n_cat..(a + 1) * self.n_cat],
        }
    }

    pub fn instances(&self) -> impl Iterator<Item = InstanceRef<'_>> + '_ {
        (0..self.len).map(move |a| self.instance(a))
    }

    /// Row-major continuous block, `len() * n_continuous()` values.
    pub fn continuous_values(&self) -> &[f64] {
        &self.continuous
    }

    pub(crate) fn continuous_values_mut(&mut self) -> &mut [f64] {
        &mut self.continuous
    }

    pub fn to_instances(&self) -> Vec<Instance> {
        self.instances()
            .map(|x| Instance {
                continuous: x.continuous.to_vec(),
                categorical: x.categorical.to_vec(),
            })
            .collect()
    }
}

/// A schema plus its bags.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub schema: AttributeSchema,
    pub bags: Vec<Bag>,
    /// Set once continuous attributes have been mapped to [0, 1]; enables
    /// the range checks in [`validate`].
    pub normalized: bool,
}

impl Dataset {
    pub fn new(schema: AttributeSchema, bags: Vec<Bag>) -> Self {
        Self {
            schema,
            bags,
            normalized: false,
        }
    }

    pub fn len(&self) -> usize {
        self.bags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bags.is_empty()
    }

    /// Task implied by the first bag's label.
    pub fn task(&self) -> Option<Task> {
        self.bags.first().map(|b| b.label().task())
    }

    pub fn labels(&self) -> Vec<Label> {
        self.bags.iter().map(Bag::label).collect()
    }

    pub fn instance_count(&self) -> usize {
        self.bags.iter().map(Bag::len).sum()
    }

    /// Fails with the joined findings if [`validate`] reports anything.
    pub fn ensure_valid(&self) -> Result<()> {
        let findings = validate(self);
        if findings.is_empty() {
            Ok(())
        } else {
            let joined: Vec<String> = findings.iter().map(|f| f.to_string()).collect();
            Err(Error::Validation(joined.join("; ")))
        }
    }

    /// Subset of bags by index, keeping the schema.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            bags: indices.iter().map(|&i| self.bags[i].clone()).collect(),
            normalized: self.normalized,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FindingKind {
    EmptyBag,
    DuplicateId,
    ArityMismatch,
    MixedLabelKinds,
    InvalidBinaryLabel,
    NonFiniteTarget,
    NonFiniteValue,
    UnknownSymbol,
    OutOfUnitRange,
}

impl FindingKind {
    pub fn describe(self) -> &'static str {
        match self {
            FindingKind::EmptyBag => "empty bag",
            FindingKind::DuplicateId => "duplicate id",
            FindingKind::ArityMismatch => "arity mismatch",
            FindingKind::MixedLabelKinds => "mixed label kinds",
            FindingKind::InvalidBinaryLabel => "invalid binary label",
            FindingKind::NonFiniteTarget => "non-finite target",
            FindingKind::NonFiniteValue => "non-finite value",
            FindingKind::UnknownSymbol => "unknown symbol",
            FindingKind::OutOfUnitRange => "value outside [0, 1]",
        }
    }

    /// Findings that only make sense for normalized data.
    pub fn is_normalization(self) -> bool {
        self == FindingKind::OutOfUnitRange
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub kind: FindingKind,
    pub bag: Option<String>,
    pub detail: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind.describe())?;
        if let Some(bag) = &self.bag {
            write!(f, " (bag {bag})")?;
        }
        if !self.detail.is_empty() {
            write!(f, ": {}", self.detail)?;
        }
        Ok(())
    }
}

/// Checks every dataset invariant; one finding per violation.
pub fn validate(dataset: &Dataset) -> Vec<Finding> {
    let mut out = Vec::new();
    let schema = &dataset.schema;
    let mut seen = HashSet::new();
    let first_task = dataset.task();

    for bag in &dataset.bags {
        let finding = |kind, detail: String| Finding {
            kind,
            bag: Some(bag.id().to_owned()),
            detail,
        };
        if !seen.insert(bag.id()) {
            out.push(finding(FindingKind::DuplicateId, String::new()));
        }
        if bag.is_empty() {
            out.push(finding(FindingKind::EmptyBag, String::new()));
            continue;
        }
        if bag.n_continuous() != schema.n_continuous() || bag.n_categorical() != schema.n_categorical() {
            out.push(finding(
                FindingKind::ArityMismatch,
                format!(
                    "({}, {}) vs schema ({}, {})",
                    bag.n_continuous(),
                    bag.n_categorical(),
                    schema.n_continuous(),
                    schema.n_categorical()
                ),
            ));
            continue;
        }
        match bag.label() {
            Label::Binary(s) if s != 1 && s != -1 => {
                out.push(finding(FindingKind::InvalidBinaryLabel, format!("{s}")))
            }
            Label::Real(v) if !v.is_finite() => {
                out.push(finding(FindingKind::NonFiniteTarget, format!("{v}")))
            }
            _ => {}
        }
        if Some(bag.label().task()) != first_task {
            out.push(finding(FindingKind::MixedLabelKinds, String::new()));
        }
        for (a, x) in bag.instances().enumerate() {
            for (k, &v) in x.continuous.iter().enumerate() {
                let column = schema.continuous_column(k);
                if !v.is_finite() {
                    out.push(finding(
                        FindingKind::NonFiniteValue,
                        format!("instance {a}, attribute {column}"),
                    ));
                } else if dataset.normalized && !(0.0..=1.0).contains(&v) {
                    out.push(finding(
                        FindingKind::OutOfUnitRange,
                        format!("instance {a}, attribute {column}: {v}"),
                    ));
                }
            }
            for (k, &z) in x.categorical.iter().enumerate() {
                if z as usize >= schema.alphabet_size(k) {
                    out.push(finding(
                        FindingKind::UnknownSymbol,
                        format!("instance {a}, attribute {}", schema.categorical_column(k)),
                    ));
                }
            }
        }
    }
    out
}

/// Per-attribute min/max fitted on training bags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    mins: Vec<f64>,
    maxs: Vec<f64>,
}

impl MinMaxScaler {
    /// Fits observed ranges over `bags`. Non-finite values are rejected with
    /// their location.
    pub fn fit<'a>(schema: &AttributeSchema, bags: impl IntoIterator<Item = &'a Bag>) -> Result<Self> {
        let d = schema.n_continuous();
        let mut mins = vec![f64::INFINITY; d];
        let mut maxs = vec![f64::NEG_INFINITY; d];
        for bag in bags {
            if bag.n_continuous() != d {
                return Err(Error::SchemaMismatch(format!(
                    "bag {} has {} continuous attributes, schema has {d}",
                    bag.id(),
                    bag.n_continuous()
                )));
            }
            for (a, x) in bag.instances().enumerate() {
                for (k, &v) in x.continuous.iter().enumerate() {
                    if !v.is_finite() {
                        return Err(Error::Validation(format!(
                            "non-finite value in bag {}, instance {a}, attribute {}",
                            bag.id(),
                            schema.continuous_column(k)
                        )));
                    }
                    mins[k] = mins[k].min(v);
                    maxs[k] = maxs[k].max(v);
                }
            }
        }
        if mins.iter().any(|m| m.is_infinite()) {
            return Err(Error::InvalidArgument(
                "cannot fit normalization on an empty set of instances".into(),
            ));
        }
        Ok(Self { mins, maxs })
    }

    pub fn mins(&self) -> &[f64] {
        &self.mins
    }

    pub fn maxs(&self) -> &[f64] {
        &self.maxs
    }

    /// Maps `v` on continuous attribute `k` into [0, 1]; constant attributes
    /// map to 0 and out-of-range values are clipped.
    #[inline]
    pub fn transform_value(&self, k: usize, v: f64) -> f64 {
        let range = self.maxs[k] - self.mins[k];
        if range <= 0.0 {
            return 0.0;
        }
        ((v - self.mins[k]) / range).clamp(0.0, 1.0)
    }

    pub fn transform_bag(&self, bag: &Bag) -> Bag {
        let mut out = bag.clone();
        let d = self.mins.len();
        if d > 0 {
            for row in out.continuous_values_mut().chunks_mut(d) {
                for (k, v) in row.iter_mut().enumerate() {
                    *v = self.transform_value(k, *v);
                }
            }
        }
        out
    }

    pub fn transform(&self, dataset: &Dataset) -> Dataset {
        Dataset {
            schema: dataset.schema.clone(),
            bags: dataset.bags.iter().map(|b| self.transform_bag(b)).collect(),
            normalized: true,
        }
    }
}

/// Min-max normalizes every continuous attribute using the dataset's own
/// ranges. The fitted scaler is returned for transforming held-out bags.
pub fn normalize_continuous(dataset: &Dataset) -> Result<(Dataset, MinMaxScaler)> {
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    let scaler = MinMaxScaler::fit(&dataset.schema, &dataset.bags)?;
    Ok((scaler.transform(dataset), scaler))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn column_dataset(values: &[f64]) -> Dataset {
        let bag = Bag::from_rows("b", Label::Binary(1), values.iter().map(|&v| vec![v]).collect()).unwrap();
        Dataset::new(AttributeSchema::continuous(1), vec![bag])
    }

    fn column(d: &Dataset) -> Vec<f64> {
        d.bags[0].continuous_values().to_vec()
    }

    #[test]
    fn affine_endpoints() {
        let (n, _) = normalize_continuous(&column_dataset(&[2.0, 4.0, 6.0])).unwrap();
        assert_eq!(column(&n), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn constant_attribute_maps_to_zero() {
        let (n, _) = normalize_continuous(&column_dataset(&[5.0, 5.0])).unwrap();
        assert_eq!(column(&n), vec![0.0, 0.0]);
    }

    #[test]
    fn held_out_values_are_clipped() {
        let (_, scaler) = normalize_continuous(&column_dataset(&[2.0, 6.0])).unwrap();
        assert_eq!(scaler.transform_value(0, 8.0), 1.0);
        assert_eq!(scaler.transform_value(0, -1.0), 0.0);
    }

    #[test]
    fn non_finite_value_is_located() {
        let err = normalize_continuous(&column_dataset(&[1.0, f64::NAN])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bag b") && msg.contains("instance 1") && msg.contains("attribute 0"), "{msg}");
    }

    #[test]
    fn empty_bag_and_duplicate_id() {
        let schema = AttributeSchema::continuous(1);
        let a = Bag::from_rows("a", Label::Binary(1), vec![vec![0.1]]).unwrap();
        let empty = Bag::new("e", Label::Binary(-1), vec![]).unwrap();
        let dup = Bag::from_rows("a", Label::Binary(-1), vec![vec![0.3]]).unwrap();
        let findings = validate(&Dataset::new(schema, vec![a, empty, dup]));
        let kinds: Vec<_> = findings.iter().map(|f| f.kind).collect();
        assert_eq!(kinds, vec![FindingKind::EmptyBag, FindingKind::DuplicateId]);
        assert_eq!(findings[0].kind.describe(), "empty bag");
        assert_eq!(findings[1].kind.describe(), "duplicate id");
    }

    #[test]
    fn bad_labels_are_reported() {
        let schema = AttributeSchema::continuous(1);
        let a = Bag::from_rows("a", Label::Binary(0), vec![vec![0.1]]).unwrap();
        let b = Bag::from_rows("b", Label::Real(0.5), vec![vec![0.1]]).unwrap();
        let kinds: Vec<_> = validate(&Dataset::new(schema, vec![a, b]))
            .into_iter()
            .map(|f| f.kind)
            .collect();
        assert_eq!(kinds, vec![FindingKind::InvalidBinaryLabel, FindingKind::MixedLabelKinds]);
    }

    #[test]
    fn ragged_instances_rejected_at_construction() {
        let r = Bag::from_rows("a", Label::Binary(1), vec![vec![0.1, 0.2], vec![0.3]]);
        assert!(matches!(r, Err(Error::SchemaMismatch(_))));
    }

    #[test]
    fn schema_columns_interleave() {
        use AttributeKind::*;
        let mut s = AttributeSchema::new(vec![Continuous, Categorical, Continuous, Categorical]);
        assert_eq!(s.n_categorical(), 2);
        assert_eq!(s.continuous_column(1), 2);
        assert_eq!(s.categorical_column(1), 3);
        assert_eq!(s.intern(0, "x"), 0);
        assert_eq!(s.intern(0, "y"), 1);
        assert_eq!(s.intern(0, "x"), 0);
        assert_eq!(s.symbol(0, 1), Some("y"));
    }

    fn arb_dataset() -> impl Strategy<Value = Dataset> {
        prop::collection::vec(
            prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 3), 1..5),
            1..6,
        )
        .prop_map(|bags| {
            let bags = bags
                .into_iter()
                .enumerate()
                .map(|(i, rows)| Bag::from_rows(format!("b{i}"), Label::Binary(1), rows).unwrap())
                .collect();
            Dataset::new(AttributeSchema::continuous(3), bags)
        })
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent(d in arb_dataset()) {
            let (once, _) = normalize_continuous(&d).unwrap();
            let (twice, _) = normalize_continuous(&once).unwrap();
            prop_assert_eq!(&once, &twice);
        }

        #[test]
        fn normalized_data_has_no_normalization_findings(d in arb_dataset()) {
            let (n, _) = normalize_continuous(&d).unwrap();
            prop_assert!(validate(&n).iter().all(|f| !f.kind.is_normalization()));
        }
    }
}
