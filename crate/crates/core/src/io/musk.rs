//! Musk converter.
//!
//! Two source layouts are recognised line by line:
//!
//! * UCI `.data`: `molecule,conformation,f1,...,f166,class` with class `1.`
//!   or `0.` (trailing period optional);
//! * numeric MIL exports: `label,bag,f1,...,f166` with label 0/1.
//!
//! The molecule (or bag number) becomes the bag id; class 1 maps to +1 and
//! class 0 to −1. C4.5 `.names` files are skipped.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{AttributeSchema, Bag, Dataset, Label};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConversionReport {
    pub bags: usize,
    pub positive: usize,
    pub negative: usize,
    pub instances: usize,
    pub attributes: usize,
}

impl std::fmt::Display for ConversionReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} bags ({} positive, {} negative), {} instances, {} attributes",
            self.bags, self.positive, self.negative, self.instances, self.attributes
        )
    }
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_owned(),
        line,
        message: message.into(),
    }
}

fn parse_class(text: &str) -> Option<i8> {
    match text.trim().trim_end_matches('.') {
        "1" | "1.0" => Some(1),
        "0" | "0.0" => Some(-1),
        _ => None,
    }
}

struct Pending {
    label: i8,
    rows: Vec<Vec<f64>>,
    keys: HashMap<String, usize>,
}

/// Reads one or more Musk source files into a dataset.
pub fn read_musk(paths: &[PathBuf]) -> Result<Dataset> {
    let mut order: Vec<String> = Vec::new();
    let mut bags: HashMap<String, Pending> = HashMap::new();
    let mut dim: Option<usize> = None;

    for path in paths.iter().filter(|p| p.extension().is_none_or(|e| e != "names")) {
        let file = File::open(path).map_err(|e| Error::InvalidArgument(format!("cannot open {}: {e}", path.display())))?;
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line_no = i as u64 + 1;
            let line = line?;
            let line = line.trim().trim_end_matches('.');
            if line.is_empty() || line.starts_with('|') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() < 3 {
                return Err(parse_error(path, line_no, "too few columns"));
            }
            let numeric = fields[0].parse::<f64>().is_ok();
            let (bag, key, label_text, values) = if numeric {
                (fields[1], None, fields[0], &fields[2..])
            } else {
                (fields[0], Some(fields[1]), fields[fields.len() - 1], &fields[2..fields.len() - 1])
            };
            let label = parse_class(label_text)
                .ok_or_else(|| parse_error(path, line_no, format!("class must be 0 or 1, got {label_text:?}")))?;
            let row = values
                .iter()
                .map(|v| v.parse::<f64>().map_err(|_| parse_error(path, line_no, format!("{v:?} is not a number"))))
                .collect::<Result<Vec<f64>>>()?;
            match dim {
                None => dim = Some(row.len()),
                Some(d) if d != row.len() => {
                    return Err(parse_error(path, line_no, format!("expected {d} features, found {}", row.len())))
                }
                _ => {}
            }
            let entry = bags.entry(bag.to_owned()).or_insert_with(|| {
                order.push(bag.to_owned());
                Pending {
                    label,
                    rows: Vec::new(),
                    keys: HashMap::new(),
                }
            });
            if entry.label != label {
                return Err(parse_error(path, line_no, format!("bag {bag} appears with conflicting labels")));
            }
            if let Some(key) = key {
                if let Some(&prev) = entry.keys.get(key) {
                    if entry.rows[prev] != row {
                        return Err(parse_error(
                            path,
                            line_no,
                            format!("conformation {key} of {bag} repeated with different features"),
                        ));
                    }
                }
                entry.keys.insert(key.to_owned(), entry.rows.len());
            }
            entry.rows.push(row);
        }
    }
    let d = dim.ok_or_else(|| Error::InvalidArgument("no Musk rows found".into()))?;
    let bags = order
        .into_iter()
        .map(|id| {
            let p = bags.remove(&id).expect("bag recorded");
            Bag::from_rows(id, Label::Binary(p.label), p.rows)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset::new(AttributeSchema::continuous(d), bags))
}

pub fn report(dataset: &Dataset) -> ConversionReport {
    let positive = dataset.bags.iter().filter(|b| b.label() == Label::Binary(1)).count();
    ConversionReport {
        bags: dataset.len(),
        positive,
        negative: dataset.len() - positive,
        instances: dataset.instance_count(),
        attributes: dataset.schema.dim(),
    }
}

/// Converts Musk sources into a canonical bag CSV at `output`.
pub fn convert_musk(inputs: &[PathBuf], output: &Path) -> Result<ConversionReport> {
    let dataset = read_musk(inputs)?;
    dataset.ensure_valid()?;
    super::save_bag_csv(&dataset, output)?;
    Ok(report(&dataset))
}
