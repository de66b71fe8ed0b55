use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    load_table, preprocess, split_indices, vertical_partition, PartitionSpec, RawTable, SplitSpec, TableSchema,
};
use crate::error::Result;
use crate::model::VerticalDataset;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestOptions {
    #[serde(default)]
    pub drop_group_feature: bool,
    #[serde(default)]
    pub intercept: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub name: String,
    pub usable_rows: usize,
    pub dropped_missing: usize,
    pub filtered_out: usize,
    pub train_rows: usize,
    pub test_rows: usize,
    pub widths: Vec<usize>,
    pub feature_names: Vec<String>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SplitDatasets {
    pub train: VerticalDataset,
    pub test: VerticalDataset,
    pub info: DatasetInfo,
}

/// load -> split -> preprocess (fit on train rows) -> partition, for both halves.
pub fn build_split_datasets(
    data_dir: &Path,
    schema: &TableSchema,
    split: &SplitSpec,
    partition: &PartitionSpec,
    opts: IngestOptions,
) -> Result<SplitDatasets> {
    let table = load_table(data_dir, schema)?;
    split_table(&table, schema, split, partition, opts)
}

/// [`build_split_datasets`] for a table that is already loaded.
pub fn split_table(
    table: &RawTable,
    schema: &TableSchema,
    split: &SplitSpec,
    partition: &PartitionSpec,
    opts: IngestOptions,
) -> Result<SplitDatasets> {
    let (train_idx, test_idx) = split_indices(table.rows, split)?;
    let pre = preprocess(table, schema, &train_idx, opts.drop_group_feature)?;
    let widths = partition.widths(pre.features.cols)?;

    let half = |idx: &[usize]| -> Result<VerticalDataset> {
        let m = pre.features.select_rows(idx);
        let blocks = vertical_partition(&m, partition)?;
        let labels = idx.iter().map(|&i| pre.labels[i]).collect();
        let groups = idx.iter().map(|&i| pre.groups[i]).collect();
        let d = VerticalDataset::new(blocks, labels, groups)?;
        Ok(if opts.intercept { d.with_intercept() } else { d })
    };
    let train = half(&train_idx)?;
    let test = half(&test_idx)?;
    let info = DatasetInfo {
        name: schema.name.clone(),
        usable_rows: table.rows,
        dropped_missing: table.dropped_missing,
        filtered_out: table.filtered_out,
        train_rows: train.n(),
        test_rows: test.n(),
        widths: train.widths(),
        feature_names: pre.features.names.clone(),
        warnings: pre.warnings,
    };
    debug_assert_eq!(widths.iter().sum::<usize>() + usize::from(opts.intercept), train.m());
    Ok(SplitDatasets { train, test, info })
}
