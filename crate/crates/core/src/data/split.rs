use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FeatureBlock, VerticalDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub train_count: usize,
    pub seed: u64,
}

/// Uniform sample of `train_count` indices without replacement; the
/// complement is the test set. Both lists are returned ascending.
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    if spec.train_count >= n {
        return Err(Error::Config(format!(
            "train_count {} must be smaller than the {n} available rows",
            spec.train_count
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut train = index::sample(&mut rng, n, spec.train_count).into_vec();
    train.sort_unstable();
    let mut in_train = vec![false; n];
    for &i in &train {
        in_train[i] = true;
    }
    let test = (0..n).filter(|&i| !in_train[i]).collect();
    Ok((train, test))
}

fn select(data: &VerticalDataset, idx: &[usize]) -> Result<VerticalDataset> {
    let blocks = data
        .blocks()
        .iter()
        .map(|b| {
            let mut v = Vec::with_capacity(idx.len() * b.cols());
            for &i in idx {
                v.extend_from_slice(b.row(i));
            }
            FeatureBlock::new(idx.len(), b.cols(), v)
        })
        .collect::<Result<Vec<_>>>()?;
    let labels = idx.iter().map(|&i| data.labels()[i]).collect();
    let groups = idx.iter().map(|&i| data.groups()[i]).collect();
    VerticalDataset::new(blocks, labels, groups)
}

/// Row split of an already-partitioned dataset.
pub fn split(data: &VerticalDataset, spec: &SplitSpec) -> Result<(VerticalDataset, VerticalDataset)> {
    let (train, test) = split_indices(data.n(), spec)?;
    Ok((select(data, &train)?, select(data, &test)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benchmark_split_sizes() {
        for (n, train, test) in [(45_222, 40_000, 5_222), (5_278, 4_800, 478), (1_994, 1_200, 794)] {
            let (a, b) = split_indices(n, &SplitSpec { train_count: train, seed: 1 }).unwrap();
            assert_eq!((a.len(), b.len()), (train, test));
        }
    }

    #[test]
    fn split_is_a_partition_and_seeded() {
        let spec = SplitSpec { train_count: 60, seed: 42 };
        let (a, b) = split_indices(100, &spec).unwrap();
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert_eq!(split_indices(100, &spec).unwrap().0, a);
        assert_ne!(split_indices(100, &SplitSpec { seed: 43, ..spec }).unwrap().0, a);
    }

    #[test]
    fn train_count_must_leave_a_test_set() {
        assert!(split_indices(10, &SplitSpec { train_count: 10, seed: 0 }).is_err());
    }

    #[test]
    fn dataset_split_keeps_widths() {
        let d = crate::data::synth_dataset(30, 6, 3, 0.0, 0).unwrap();
        let (tr, te) = split(&d, &SplitSpec { train_count: 20, seed: 3 }).unwrap();
        assert_eq!((tr.n(), te.n()), (20, 10));
        assert_eq!(tr.widths(), d.widths());
    }
}
