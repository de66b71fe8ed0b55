use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{vertical_partition, DenseMatrix, PartitionSpec};
use crate::error::{Error, Result};
use crate::model::{Group, VerticalDataset};

/// Gaussian features with labels from a random linear rule plus noise.
///
/// Group membership is a fair coin and is not visible in the features.
/// `bias` shifts the latent score of group `b` upward, so some of its
/// positives look negative to any linear model and the two groups'
/// positive-sample losses drift apart. `bias = 0` makes the groups
/// exchangeable. Columns are split evenly across `parties`.
pub fn synth_dataset(n: usize, m: usize, parties: usize, bias: f64, seed: u64) -> Result<VerticalDataset> {
    if parties == 0 || m < parties {
        return Err(Error::Config(format!("cannot split {m} features across {parties} parties")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
    let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    for x in &mut w {
        *x *= 2.0 / norm;
    }

    let mut data = Vec::with_capacity(n * m);
    let mut labels = Vec::with_capacity(n);
    let mut groups = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        let group = if rng.gen_bool(0.5) { Group::A } else { Group::B };
        let noise: f64 = rng.sample::<f64, _>(StandardNormal) * 0.5;
        let shift = if group == Group::B { bias } else { 0.0 };
        let latent: f64 = row.iter().zip(&w).map(|(x, c)| x * c).sum::<f64>() + noise + shift;
        labels.push(if latent >= 0.0 { 1.0 } else { -1.0 });
        groups.push(group);
        data.extend(row);
    }
    let names = (0..m).map(|j| format!("x{j}")).collect();
    let matrix = DenseMatrix::new(n, m, data, names)?;
    let blocks = vertical_partition(&matrix, &PartitionSpec::Even { parties })?;
    VerticalDataset::new(blocks, labels, groups)
}
