use std::collections::HashMap;
use std::path::{Path, PathBuf};

use super::schema::{ColumnKind, TableSchema};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Numeric(Vec<f64>),
    Categorical(Vec<String>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Typed feature columns (header order) plus the raw label and group cells.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub names: Vec<String>,
    pub columns: Vec<Column>,
    pub label_raw: Vec<String>,
    pub group_raw: Vec<String>,
    pub rows: usize,
    pub dropped_missing: usize,
    pub filtered_out: usize,
}

/// Repeated header names get `.1`, `.2`, ... suffixes.
fn dedup_names(raw: impl IntoIterator<Item = String>) -> Vec<String> {
    let mut seen: HashMap<String, usize> = HashMap::new();
    raw.into_iter()
        .map(|name| {
            let count = seen.entry(name.clone()).or_insert(0);
            let out = if *count == 0 { name.clone() } else { format!("{name}.{count}") };
            *count += 1;
            out
        })
        .collect()
}

fn reader(path: &Path, schema: &TableSchema) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut b = csv::ReaderBuilder::new();
    b.has_headers(false).trim(csv::Trim::All).flexible(true);
    if let Some(c) = schema.comment {
        b.comment(u8::try_from(c).ok());
    }
    Ok(b.from_reader(file))
}

struct Plan {
    header: Vec<String>,
    features: Vec<(usize, ColumnKind)>,
    label: usize,
    group: usize,
    filters: Vec<usize>,
}

fn plan(header: Vec<String>, schema: &TableSchema) -> Result<Plan> {
    let position = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("column `{name}` declared in schema `{}` is not in the file", schema.name)))
    };
    for name in &header {
        let declared = schema.columns.contains_key(name);
        if !declared && name != &schema.label.column && name != &schema.group.column {
            return Err(Error::Ingest {
                row: 0,
                column: name.clone(),
                msg: format!("unknown column, not declared in schema `{}`", schema.name),
            });
        }
    }
    for name in schema.columns.keys() {
        position(name)?;
    }
    let features = header
        .iter()
        .enumerate()
        .filter_map(|(j, name)| match schema.kind_of(name) {
            Some(kind @ (ColumnKind::Numeric | ColumnKind::Categorical)) => Some((j, kind)),
            _ => None,
        })
        .collect();
    let filters = schema.filters.iter().map(|f| position(&f.column)).collect::<Result<_>>()?;
    Ok(Plan { label: position(&schema.label.column)?, group: position(&schema.group.column)?, features, filters, header })
}

/// Reads every file of `schema` from `data_dir`, applies row filters, drops
/// rows with missing values in any used column, and types the feature cells.
pub fn load_table(data_dir: &Path, schema: &TableSchema) -> Result<RawTable> {
    let paths: Vec<PathBuf> = schema.files.iter().map(|f| data_dir.join(f)).collect();
    let mut plan_opt: Option<Plan> = None;
    let mut columns: Vec<Column> = Vec::new();
    let mut label_raw = Vec::new();
    let mut group_raw = Vec::new();
    let (mut dropped_missing, mut filtered_out) = (0, 0);

    for path in &paths {
        let mut rdr = reader(path, schema)?;
        let mut records = rdr.records();
        let header = if schema.has_header {
            let first = records
                .next()
                .ok_or_else(|| Error::Data(format!("{} is empty", path.display())))??;
            dedup_names(first.iter().map(str::to_owned))
        } else {
            dedup_names(schema.column_names.iter().cloned())
        };
        match &plan_opt {
            None => {
                let p = plan(header, schema)?;
                columns = p
                    .features
                    .iter()
                    .map(|&(_, k)| match k {
                        ColumnKind::Numeric => Column::Numeric(Vec::new()),
                        _ => Column::Categorical(Vec::new()),
                    })
                    .collect();
                plan_opt = Some(p);
            }
            Some(p) if p.header != header => {
                return Err(Error::Schema(format!("{} has a different header than earlier files", path.display())))
            }
            Some(_) => {}
        }
        let p = plan_opt.as_ref().expect("plan set above");

        for rec in records {
            let rec = rec?;
            let line = rec.position().map_or(0, |pos| pos.line() as usize);
            if rec.len() == 1 && rec.get(0) == Some("") {
                continue;
            }
            if rec.len() != p.header.len() {
                return Err(Error::Ingest {
                    row: line,
                    column: String::new(),
                    msg: format!("{}: {} fields, expected {}", path.display(), rec.len(), p.header.len()),
                });
            }
            if !schema.filters.iter().zip(&p.filters).all(|(f, &j)| f.keeps(&rec[j])) {
                filtered_out += 1;
                continue;
            }
            let used = p.features.iter().map(|&(j, _)| j).chain([p.label, p.group]);
            if used.into_iter().any(|j| schema.is_missing(&rec[j])) {
                dropped_missing += 1;
                continue;
            }
            for (col, &(j, _)) in columns.iter_mut().zip(&p.features) {
                match col {
                    Column::Numeric(v) => v.push(rec[j].parse::<f64>().map_err(|_| Error::Ingest {
                        row: line,
                        column: p.header[j].clone(),
                        msg: format!("{}: cannot parse `{}` as a number", path.display(), &rec[j]),
                    })?),
                    Column::Categorical(v) => v.push(rec[j].to_owned()),
                }
            }
            label_raw.push(rec[p.label].to_owned());
            group_raw.push(rec[p.group].to_owned());
        }
    }

    let p = plan_opt.ok_or_else(|| Error::Schema("schema lists no files".into()))?;
    let names = p.features.iter().map(|&(j, _)| p.header[j].clone()).collect();
    Ok(RawTable { names, columns, rows: label_raw.len(), label_raw, group_raw, dropped_missing, filtered_out })
}
