use serde::{Deserialize, Serialize};

use super::DenseMatrix;
use crate::error::{Error, Result};
use crate::model::FeatureBlock;

/// How the preprocessed columns are dealt out to the parties. Blocks are
/// contiguous column ranges in preprocessed order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PartitionSpec {
    /// Explicit widths `m_1..m_K`.
    Sizes(Vec<usize>),
    /// Party 1 gets `first` columns, the rest are split evenly.
    FirstParty { first: usize, parties: usize },
    /// Even split across all parties.
    Even { parties: usize },
}

/// `m` split into `parts` near-equal widths; leftmost parts absorb the remainder.
fn even(m: usize, parts: usize) -> Vec<usize> {
    let base = m / parts;
    let extra = m % parts;
    (0..parts).map(|i| base + usize::from(i < extra)).collect()
}

impl PartitionSpec {
    pub fn parties(&self) -> usize {
        match self {
            PartitionSpec::Sizes(s) => s.len(),
            PartitionSpec::FirstParty { parties, .. } | PartitionSpec::Even { parties } => *parties,
        }
    }

    pub fn widths(&self, m: usize) -> Result<Vec<usize>> {
        let widths = match self {
            PartitionSpec::Sizes(s) => s.clone(),
            PartitionSpec::Even { parties } => {
                if *parties == 0 {
                    return Err(Error::Config("partition needs at least one party".into()));
                }
                even(m, *parties)
            }
            PartitionSpec::FirstParty { first, parties } => {
                if *parties < 2 {
                    return Err(Error::Config("first-party rule needs at least two parties".into()));
                }
                if *first > m {
                    return Err(Error::Config(format!("first party width {first} exceeds {m} features")));
                }
                let mut w = vec![*first];
                w.extend(even(m - first, parties - 1));
                w
            }
        };
        let total: usize = widths.iter().sum();
        if total != m {
            return Err(Error::Config(format!("partition widths {widths:?} sum to {total}, expected {m}")));
        }
        Ok(widths)
    }
}

pub fn vertical_partition(features: &DenseMatrix, spec: &PartitionSpec) -> Result<Vec<FeatureBlock>> {
    let widths = spec.widths(features.cols)?;
    let mut start = 0;
    let mut blocks = Vec::with_capacity(widths.len());
    for w in widths {
        let mut data = Vec::with_capacity(features.rows * w);
        for i in 0..features.rows {
            data.extend_from_slice(&features.row(i)[start..start + w]);
        }
        blocks.push(FeatureBlock::new(features.rows, w, data)?);
        start += w;
    }
    Ok(blocks)
}
