//! Fixtures shared by the benchmarks.

use fairvfl_core::data::synth_dataset;
use fairvfl_core::model::{ParamBlocks, VerticalDataset};

/// A synthetic table split over `parties`, with a nonzero parameter vector.
pub fn fixture(n: usize, m: usize, parties: usize) -> (VerticalDataset, ParamBlocks) {
    let d = synth_dataset(n, m, parties, 1.0, 42).expect("valid fixture shape");
    let flat: Vec<f64> = (0..m).map(|j| ((j * 7 % 11) as f64 - 5.0) / 10.0).collect();
    let theta = ParamBlocks::from_flat(&d.widths(), &flat).expect("widths sum to m");
    (d, theta)
}
