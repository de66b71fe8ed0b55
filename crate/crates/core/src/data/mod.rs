//! Ingestion: declarative table schemas, CSV loading, encoding and
//! standardization, train/test splitting, vertical partitioning, and a
//! synthetic generator for tests.

mod partition;
mod pipeline;
mod preprocess;
mod schema;
mod split;
mod synth;
mod table;

pub use partition::{vertical_partition, PartitionSpec};
pub use pipeline::{build_split_datasets, split_table, DatasetInfo, IngestOptions, SplitDatasets};
pub use preprocess::{preprocess, Preprocessed};
pub use schema::{ColumnKind, FilterSpec, GroupRule, LabelRule, TableSchema};
pub use split::{split, split_indices, SplitSpec};
pub use synth::synth_dataset;
pub use table::{load_table, Column, RawTable};

use crate::error::{Error, Result};

/// Row-major dense matrix with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
    pub names: Vec<String>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>, names: Vec<String>) -> Result<Self> {
        if data.len() != rows * cols || names.len() != cols {
            return Err(Error::Dimension(format!(
                "matrix {rows}x{cols} with {} entries and {} names",
                data.len(),
                names.len()
            )));
        }
        Ok(Self { rows, cols, data, names })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.rows).map(move |i| self.data[i * self.cols + j])
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self { rows: idx.len(), cols: self.cols, data, names: self.names.clone() }
    }
}
