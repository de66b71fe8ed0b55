//! Evaluation: accuracy, fairness, harmonic mean, multi-seed aggregation,
//! baseline comparison and sweep reports.

mod sweep;

pub use sweep::{
    q_rounds, q_targets, render_eps_table, render_q_table, rounds_to_target, write_sweep_eps, write_sweep_q, EpsPoint,
    QRounds, QRun,
};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{deo_from_margins, margins, ParamBlocks, VerticalDataset};

/// Percentage of samples with `sign(margin) == y`; a zero margin predicts `+1`.
pub fn accuracy_from_margins(labels: &[f64], margins: &[f64]) -> f64 {
    let hits = margins
        .iter()
        .zip(labels)
        .filter(|(&z, &y)| (if z >= 0.0 { 1.0 } else { -1.0 }) == y)
        .count();
    100.0 * hits as f64 / labels.len() as f64
}

pub fn accuracy(data: &VerticalDataset, theta: &ParamBlocks) -> Result<f64> {
    Ok(accuracy_from_margins(data.labels(), &margins(data, theta)?))
}

/// `100 (1 - DEO)` with the loss-based DEO; negative when DEO exceeds 1.
pub fn fairness_score(data: &VerticalDataset, theta: &ParamBlocks) -> Result<f64> {
    let d = deo_from_margins(data, &margins(data, theta)?)?;
    Ok(100.0 * (1.0 - d.abs()))
}

/// `2 ac fr / (ac + fr)`, and 0 when both are 0.
pub fn harmonic_mean(ac: f64, fr: f64) -> f64 {
    if ac + fr == 0.0 {
        0.0
    } else {
        2.0 * ac * fr / (ac + fr)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RunMeta {
    pub seed: u64,
    pub epsilon: f64,
    pub q: usize,
    pub constrained: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub deo: f64,
    pub fairness: f64,
    pub harmonic_mean: f64,
    pub split: Split,
    pub meta: RunMeta,
}

pub fn evaluate(data: &VerticalDataset, theta: &ParamBlocks, split: Split, meta: RunMeta) -> Result<EvalReport> {
    let z = margins(data, theta)?;
    let accuracy = accuracy_from_margins(data.labels(), &z);
    let deo = deo_from_margins(data, &z)?.abs();
    let fairness = 100.0 * (1.0 - deo);
    Ok(EvalReport { accuracy, deo, fairness, harmonic_mean: harmonic_mean(accuracy, fairness), split, meta })
}

/// Mean and sample standard deviation (`n - 1`; zero for a single value).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        if values.is_empty() {
            return Self { mean: f64::NAN, std: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Self { mean, std }
    }
}

/// Seed-aggregated metrics. `harmonic_mean` is the harmonic mean of the
/// mean accuracy and mean fairness; `harmonic_mean_runs` aggregates the
/// per-run values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub runs: usize,
    pub accuracy: MeanStd,
    pub fairness: MeanStd,
    pub deo: MeanStd,
    pub harmonic_mean: f64,
    pub harmonic_mean_runs: MeanStd,
}

pub fn aggregate(reports: &[EvalReport]) -> Aggregate {
    let col = |f: fn(&EvalReport) -> f64| reports.iter().map(f).collect::<Vec<_>>();
    let accuracy = MeanStd::of(&col(|r| r.accuracy));
    let fairness = MeanStd::of(&col(|r| r.fairness));
    Aggregate {
        runs: reports.len(),
        accuracy,
        fairness,
        deo: MeanStd::of(&col(|r| r.deo)),
        harmonic_mean: harmonic_mean(accuracy.mean, fairness.mean),
        harmonic_mean_runs: MeanStd::of(&col(|r| r.harmonic_mean)),
    }
}

/// Fair run against the unconstrained baseline; deltas are fair minus baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub fair: EvalReport,
    pub baseline: EvalReport,
    pub delta_accuracy: f64,
    pub delta_fairness: f64,
    pub delta_deo: f64,
    pub delta_harmonic_mean: f64,
    pub fair_dominates_hm: bool,
}

pub fn compare_runs(fair: &EvalReport, baseline: &EvalReport) -> Comparison {
    Comparison {
        fair: *fair,
        baseline: *baseline,
        delta_accuracy: fair.accuracy - baseline.accuracy,
        delta_fairness: fair.fairness - baseline.fairness,
        delta_deo: fair.deo - baseline.deo,
        delta_harmonic_mean: fair.harmonic_mean - baseline.harmonic_mean,
        fair_dominates_hm: fair.harmonic_mean >= baseline.harmonic_mean,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_dataset;
    use crate::model::{FeatureBlock, Group};

    #[test]
    fn accuracy_tie_rule() {
        assert_eq!(accuracy_from_margins(&[1.0, -1.0, 1.0], &[2.0, -0.5, 0.1]), 100.0);
        // zero margins predict +1 everywhere: accuracy is the positive share
        assert_eq!(accuracy_from_margins(&[1.0, -1.0, 1.0, 1.0], &[0.0; 4]), 75.0);
        assert_eq!(accuracy_from_margins(&[-1.0], &[-0.0]), 0.0);
    }

    #[test]
    fn fairness_of_zero_model_is_100() {
        let d = synth_dataset(40, 6, 2, 1.5, 3).unwrap();
        assert_eq!(fairness_score(&d, &ParamBlocks::zeros(&d.widths())).unwrap(), 100.0);
    }

    #[test]
    fn fairness_is_not_clamped() {
        // one positive per group, margins far apart: DEO > 1
        let b = FeatureBlock::from_rows(&[vec![1.0], vec![-1.0]]).unwrap();
        let d = VerticalDataset::new(vec![b], vec![1.0, 1.0], vec![Group::A, Group::B]).unwrap();
        let f = fairness_score(&d, &ParamBlocks { blocks: vec![vec![5.0]] }).unwrap();
        assert!(f < 0.0);
    }

    #[test]
    fn harmonic_mean_values() {
        assert!((harmonic_mean(82.5, 95.1) - 88.35).abs() < 0.01);
        assert!((harmonic_mean(67.2, 96.3) - 79.16).abs() < 0.01);
        assert_eq!(harmonic_mean(0.0, 0.0), 0.0);
        assert_eq!(harmonic_mean(42.0, 42.0), 42.0);
    }

    #[test]
    fn sample_std() {
        let m = MeanStd::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        assert!((m.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(MeanStd::of(&[7.0]).std, 0.0);
    }

    #[test]
    fn self_comparison_is_zero() {
        let d = synth_dataset(40, 6, 2, 1.0, 3).unwrap();
        let theta = ParamBlocks::from_flat(&d.widths(), &[0.3, -0.2, 0.1, 0.5, 0.0, -0.4]).unwrap();
        let r = evaluate(&d, &theta, Split::Test, RunMeta::default()).unwrap();
        let c = compare_runs(&r, &r);
        assert_eq!((c.delta_accuracy, c.delta_fairness, c.delta_deo, c.delta_harmonic_mean), (0.0, 0.0, 0.0, 0.0));
        assert!(c.fair_dominates_hm);
    }
}
