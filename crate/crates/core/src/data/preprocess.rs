use super::schema::TableSchema;
use super::table::{Column, RawTable};
use super::DenseMatrix;
use crate::error::{Error, Result};
use crate::model::Group;

#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessed {
    pub features: DenseMatrix,
    pub labels: Vec<f64>,
    pub groups: Vec<Group>,
    pub warnings: Vec<String>,
}

/// Encodes a raw table into a numeric design matrix.
///
/// Categorical columns are one-hot encoded with categories in order of first
/// appearance over the whole table; numeric columns are standardized with the
/// mean and population standard deviation of the `train` rows only. A
/// zero-variance column is kept but scaled to zero. With `drop_group_feature`
/// the group source column never becomes a feature.
pub fn preprocess(
    table: &RawTable,
    schema: &TableSchema,
    train: &[usize],
    drop_group_feature: bool,
) -> Result<Preprocessed> {
    let n = table.rows;
    if train.is_empty() {
        return Err(Error::Data("no training rows to fit preprocessing on".into()));
    }
    let mut warnings = Vec::new();
    let mut out_cols: Vec<Vec<f64>> = Vec::new();
    let mut names = Vec::new();

    for (name, col) in table.names.iter().zip(&table.columns) {
        if drop_group_feature && name == &schema.group.column {
            continue;
        }
        match col {
            Column::Numeric(v) => {
                let t = train.len() as f64;
                let mean = train.iter().map(|&i| v[i]).sum::<f64>() / t;
                let var = train.iter().map(|&i| (v[i] - mean).powi(2)).sum::<f64>() / t;
                let std = var.sqrt();
                let scale = if std > 0.0 {
                    1.0 / std
                } else {
                    let msg = format!("column `{name}` has zero variance on the training rows; scaled to zero");
                    log::warn!("{msg}");
                    warnings.push(msg);
                    0.0
                };
                out_cols.push(v.iter().map(|x| (x - mean) * scale).collect());
                names.push(name.clone());
            }
            Column::Categorical(v) => {
                let mut vocab: Vec<&str> = Vec::new();
                for s in v {
                    if !vocab.contains(&s.as_str()) {
                        vocab.push(s);
                    }
                }
                for cat in vocab {
                    out_cols.push(v.iter().map(|s| if s == cat { 1.0 } else { 0.0 }).collect());
                    names.push(format!("{name}={cat}"));
                }
            }
        }
    }

    let cols = out_cols.len();
    let mut data = Vec::with_capacity(n * cols);
    for i in 0..n {
        data.extend(out_cols.iter().map(|c| c[i]));
    }
    let features = DenseMatrix::new(n, cols, data, names)?;
    let labels = map_labels(table, schema)?;
    let groups = map_groups(table, schema)?;
    Ok(Preprocessed { features, labels, groups, warnings })
}

fn map_labels(table: &RawTable, schema: &TableSchema) -> Result<Vec<f64>> {
    let rule = &schema.label;
    let sign = f64::from(rule.protected_label);
    table
        .label_raw
        .iter()
        .enumerate()
        .map(|(i, raw)| {
            let positive = match (&rule.positive, rule.threshold) {
                (Some(values), _) => values.iter().any(|v| v == raw),
                (None, Some(t)) => {
                    let v: f64 = raw.parse().map_err(|_| Error::Ingest {
                        row: i,
                        column: rule.column.clone(),
                        msg: format!("cannot parse label `{raw}` as a number"),
                    })?;
                    v > t
                }
                (None, None) => unreachable!("validated schema"),
            };
            Ok(if positive { sign } else { -sign })
        })
        .collect()
}

fn map_groups(table: &RawTable, schema: &TableSchema) -> Result<Vec<Group>> {
    let rule = &schema.group;
    table
        .group_raw
        .iter()
        .enumerate()
        .map(|(i, raw)| match (&rule.a, &rule.b, rule.threshold, rule.above.as_deref()) {
            (Some(a), Some(b), _, _) => {
                if a.iter().any(|v| v == raw) {
                    Ok(Group::A)
                } else if b.iter().any(|v| v == raw) {
                    Ok(Group::B)
                } else {
                    Err(Error::Schema(format!(
                        "row {i}: value `{raw}` of `{}` is in neither protected group",
                        rule.column
                    )))
                }
            }
            (_, _, Some(t), Some(above)) => {
                let v: f64 = raw.parse().map_err(|_| Error::Ingest {
                    row: i,
                    column: rule.column.clone(),
                    msg: format!("cannot parse group value `{raw}` as a number"),
                })?;
                let high = if above == "a" { Group::A } else { Group::B };
                Ok(if v > t { high } else { high.other() })
            }
            _ => unreachable!("validated schema"),
        })
        .collect()
}
