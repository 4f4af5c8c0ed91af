//! The bag CSV format: header `bag_id,label,f0,...,f{d-1}`, one row per
//! instance, the bag label repeated on each of its rows.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::{AttributeKind, AttributeSchema, Bag, Dataset, Instance, Label, Task};

struct Row {
    line: u64,
    bag: String,
    label: String,
    fields: Vec<String>,
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_owned(),
        line,
        message: message.into(),
    }
}

/// Infers the task from label strings: ±1 only → binary, non-negative
/// integers → multiclass, anything else → regression.
fn infer_task<'a>(labels: impl Iterator<Item = &'a str>) -> Task {
    let mut binary = true;
    let mut integral = true;
    for l in labels {
        match l.trim().parse::<i64>() {
            Ok(v) => {
                binary &= v == 1 || v == -1;
                integral &= v >= 0;
            }
            Err(_) => {
                binary = false;
                integral = false;
            }
        }
    }
    if binary {
        Task::Binary
    } else if integral {
        Task::Multiclass
    } else {
        Task::Regression
    }
}

fn parse_label(text: &str, task: Task) -> std::result::Result<Label, String> {
    let t = text.trim();
    match task {
        Task::Binary => match t.parse::<i8>() {
            Ok(s @ (1 | -1)) => Ok(Label::Binary(s)),
            _ => Err(format!("binary label must be +1 or -1, got {t:?}")),
        },
        Task::Multiclass => t
            .parse::<u32>()
            .map(Label::Class)
            .map_err(|_| format!("class label must be a non-negative integer, got {t:?}")),
        Task::Regression => match t.parse::<f64>() {
            Ok(v) if (0.0..=1.0).contains(&v) => Ok(Label::Real(v)),
            Ok(v) => Err(format!("regression target {v} outside [0, 1]")),
            Err(_) => Err(format!("regression target must be a number, got {t:?}")),
        },
    }
}

/// Reads a bag CSV from `reader`. `path` only labels error messages.
/// Bags are grouped by id in first-appearance order. Without `schema`, all
/// attributes are continuous; without `task`, it is inferred from labels.
pub fn read_bag_csv<R: Read>(reader: R, path: &Path, schema: Option<AttributeSchema>, task: Option<Task>) -> Result<Dataset> {
    let dataset = parse_bag_csv(reader, path, schema, task)?;
    dataset.ensure_valid()?;
    Ok(dataset)
}

/// Like [`read_bag_csv`] but returns the dataset without running
/// [`crate::model::validate`], so every finding can be reported.
pub fn parse_bag_csv<R: Read>(reader: R, path: &Path, schema: Option<AttributeSchema>, task: Option<Task>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.len() < 3 || &header[0] != "bag_id" || &header[1] != "label" {
        return Err(parse_error(path, 1, "header must be bag_id,label,f0,...,f{d-1} with d ≥ 1"));
    }
    let d = header.len() - 2;
    let mut schema = schema.unwrap_or_else(|| AttributeSchema::continuous(d));
    if schema.dim() != d {
        return Err(Error::SchemaMismatch(format!(
            "{} has {d} attributes, schema declares {}",
            path.display(),
            schema.dim()
        )));
    }

    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != header.len() {
            return Err(parse_error(
                path,
                line,
                format!("expected {} columns, found {}", header.len(), rec.len()),
            ));
        }
        rows.push(Row {
            line,
            bag: rec[0].to_owned(),
            label: rec[1].to_owned(),
            fields: rec.iter().skip(2).map(str::to_owned).collect(),
        });
    }
    let task = task.unwrap_or_else(|| infer_task(rows.iter().map(|r| r.label.as_str())));

    // (id, label text, first line, instances)
    let mut groups: Vec<(String, String, Label, Vec<Instance>)> = Vec::new();
    let mut index = std::collections::HashMap::new();
    for row in rows {
        let mut inst = Instance::default();
        let mut slot = 0;
        for (c, (field, kind)) in row.fields.iter().zip(schema.kinds().to_vec()).enumerate() {
            match kind {
                AttributeKind::Continuous => {
                    let v: f64 = field.trim().parse().map_err(|_| {
                        parse_error(path, row.line, format!("column f{c}: {field:?} is not a number"))
                    })?;
                    inst.continuous.push(v);
                }
                AttributeKind::Categorical => {
                    inst.categorical.push(schema.intern(slot, field.trim()));
                    slot += 1;
                }
            }
        }
        match index.get(&row.bag) {
            Some(&g) => {
                let group: &mut (String, String, Label, Vec<Instance>) = &mut groups[g];
                if group.1.trim() != row.label.trim() {
                    return Err(parse_error(
                        path,
                        row.line,
                        format!("bag {} has label {} here but {} earlier", row.bag, row.label, group.1),
                    ));
                }
                group.3.push(inst);
            }
            None => {
                let label = parse_label(&row.label, task).map_err(|m| parse_error(path, row.line, m))?;
                index.insert(row.bag.clone(), groups.len());
                groups.push((row.bag, row.label, label, vec![inst]));
            }
        }
    }
    if groups.is_empty() {
        return Err(parse_error(path, 1, "no data rows"));
    }
    let bags = groups
        .into_iter()
        .map(|(id, _, label, instances)| Bag::new(id, label, instances))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset::new(schema, bags))
}

pub fn load_bag_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    load_bag_csv_with(path, None, None)
}

pub fn load_bag_csv_with(path: impl AsRef<Path>, schema: Option<AttributeSchema>, task: Option<Task>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::InvalidArgument(format!("cannot open {}: {e}", path.display())))?;
    read_bag_csv(BufReader::new(file), path, schema, task)
}

/// Writes the canonical form: shortest round-trip float formatting, labels
/// as `+1`/`-1`, class indices or plain numbers.
pub fn write_bag_csv<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let schema = &dataset.schema;
    let mut out = csv::Writer::from_writer(writer);
    let mut header = vec!["bag_id".to_owned(), "label".to_owned()];
    header.extend((0..schema.dim()).map(|c| format!("f{c}")));
    out.write_record(&header)?;
    for bag in &dataset.bags {
        let label = bag.label().to_string();
        for x in bag.instances() {
            let mut rec = Vec::with_capacity(schema.dim() + 2);
            rec.push(bag.id().to_owned());
            rec.push(label.clone());
            let (mut ci, mut zi) = (0, 0);
            for kind in schema.kinds() {
                match kind {
                    AttributeKind::Continuous => {
                        rec.push(x.continuous[ci].to_string());
                        ci += 1;
                    }
                    AttributeKind::Categorical => {
                        let z = x.categorical[zi];
                        rec.push(schema.symbol(zi, z).map_or_else(|| z.to_string(), str::to_owned));
                        zi += 1;
                    }
                }
            }
            out.write_record(&rec)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn save_bag_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path.as_ref())?;
    let mut w = BufWriter::new(file);
    write_bag_csv(dataset, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Schema file: one attribute kind per entry (`continuous` or
/// `categorical`), separated by commas or whitespace; `#` starts a comment.
pub fn load_schema(path: impl AsRef<Path>) -> Result<AttributeSchema> {
    let path: PathBuf = path.as_ref().to_owned();
    let text = std::fs::read_to_string(&path)?;
    let mut kinds = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let content = line.split('#').next().unwrap_or_default();
        for tok in content.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
            kinds.push(match tok.to_ascii_lowercase().as_str() {
                "continuous" | "c" => AttributeKind::Continuous,
                "categorical" | "n" => AttributeKind::Categorical,
                other => return Err(parse_error(&path, i as u64 + 1, format!("unknown attribute kind {other:?}"))),
            });
        }
    }
    if kinds.is_empty() {
        return Err(parse_error(&path, 1, "schema declares no attributes"));
    }
    Ok(AttributeSchema::new(kinds))
}
