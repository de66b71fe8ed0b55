use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::{Aggregate, MeanStd};
use crate::error::{Error, Result};
use crate::numfmt::g6;
use crate::optimizer::TraceRow;

/// Test metrics for one epsilon, aggregated over seeds.
#[derive(Debug, Clone, Serialize)]
pub struct EpsPoint {
    pub epsilon: f64,
    pub test: Aggregate,
    /// Final `|D|` on the training split, which is what the constraint bounds.
    pub train_deo: MeanStd,
}

/// One training run of a Q sweep.
#[derive(Debug, Clone, Serialize)]
pub struct QRun {
    pub q: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub rows: Vec<TraceRow>,
}

/// First round whose training loss is at or below `target`.
pub fn rounds_to_target(rows: &[TraceRow], target: f64) -> Option<usize> {
    rows.iter().find(|r| r.loss <= target).map(|r| r.round)
}

pub fn write_sweep_eps(path: &Path, points: &[EpsPoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "epsilon",
        "runs",
        "accuracy_mean",
        "accuracy_std",
        "fairness_mean",
        "fairness_std",
        "harmonic_mean",
        "test_deo_mean",
        "train_deo_mean",
    ])?;
    for p in points {
        w.write_record([
            g6(p.epsilon),
            p.test.runs.to_string(),
            g6(p.test.accuracy.mean),
            g6(p.test.accuracy.std),
            g6(p.test.fairness.mean),
            g6(p.test.fairness.std),
            g6(p.test.harmonic_mean),
            g6(p.test.deo.mean),
            g6(p.train_deo.mean),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Tidy per-round rows: one line per run per round.
pub fn write_sweep_q(path: &Path, runs: &[QRun]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["q", "seed", "epsilon", "round", "loss", "abs_deo", "gap_total", "kappa"])?;
    for run in runs {
        for r in &run.rows {
            w.write_record([
                run.q.to_string(),
                run.seed.to_string(),
                g6(run.epsilon),
                r.round.to_string(),
                g6(r.loss),
                g6(r.abs_deo),
                r.gap.map(|g| g6(g.total)).unwrap_or_default(),
                r.kappa.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn pm(m: MeanStd) -> String {
    format!("{} ± {}", g6(m.mean), g6(m.std))
}

pub fn render_eps_table(points: &[EpsPoint]) -> String {
    let mut s = format!("{:>10}  {:>20}  {:>20}  {:>10}  {:>10}\n", "epsilon", "AC (%)", "FR (%)", "HM (%)", "train |D|");
    for p in points {
        let _ = writeln!(
            s,
            "{:>10}  {:>20}  {:>20}  {:>10}  {:>10}",
            g6(p.epsilon),
            pm(p.test.accuracy),
            pm(p.test.fairness),
            g6(p.test.harmonic_mean),
            g6(p.train_deo.mean)
        );
    }
    s
}

/// Per run, `(1 + slack)` times the final loss of the smallest-Q run with
/// the same seed and epsilon.
pub fn q_targets(runs: &[QRun], slack: f64) -> Vec<f64> {
    runs.iter()
        .map(|r| {
            let reference = runs
                .iter()
                .filter(|o| o.seed == r.seed && o.epsilon == r.epsilon)
                .min_by_key(|o| o.q)
                .expect("a run is its own reference");
            (1.0 + slack) * reference.rows.last().map_or(f64::NAN, |x| x.loss)
        })
        .collect()
}

/// Rounds-to-target for one `(epsilon, Q)` cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QRounds {
    pub epsilon: f64,
    pub q: usize,
    pub seeds: Vec<u64>,
    pub per_seed: Vec<Option<usize>>,
    /// The slowest seed; `None` if any seed never reached its target.
    pub worst: Option<usize>,
    pub final_loss: MeanStd,
}

/// Groups runs by `(epsilon, Q)`, ascending, with `targets` from [`q_targets`].
pub fn q_rounds(runs: &[QRun], targets: &[f64]) -> Vec<QRounds> {
    let mut keys: Vec<(f64, usize)> = runs.iter().map(|r| (r.epsilon, r.q)).collect();
    keys.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    keys.dedup();
    keys.into_iter()
        .map(|(epsilon, q)| {
            let these: Vec<(&QRun, f64)> =
                runs.iter().zip(targets).filter(|(r, _)| r.epsilon == epsilon && r.q == q).map(|(r, &t)| (r, t)).collect();
            let per_seed: Vec<Option<usize>> = these.iter().map(|(r, t)| rounds_to_target(&r.rows, *t)).collect();
            let worst = per_seed.iter().copied().collect::<Option<Vec<_>>>().and_then(|v| v.into_iter().max());
            let finals: Vec<f64> = these.iter().filter_map(|(r, _)| r.rows.last().map(|x| x.loss)).collect();
            QRounds {
                epsilon,
                q,
                seeds: these.iter().map(|(r, _)| r.seed).collect(),
                per_seed,
                worst,
                final_loss: MeanStd::of(&finals),
            }
        })
        .collect()
}

pub fn render_q_table(cells: &[QRounds]) -> String {
    let mut s = format!("{:>10}  {:>4}  {:>16}  {:>12}\n", "epsilon", "Q", "rounds to target", "final loss");
    for c in cells {
        let rounds = c.worst.map_or("not reached".to_string(), |r| r.to_string());
        let _ = writeln!(s, "{:>10}  {:>4}  {rounds:>16}  {:>12}", g6(c.epsilon), c.q, g6(c.final_loss.mean));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(round: usize, loss: f64) -> TraceRow {
        TraceRow {
            round,
            loss,
            deo: 0.0,
            abs_deo: 0.0,
            lambda1: 0.0,
            lambda2: 0.0,
            gap: None,
            kappa: 0,
            steps: vec![],
            seconds: 0.0,
        }
    }

    #[test]
    fn target_search() {
        let rows: Vec<_> = [0.7, 0.5, 0.4, 0.35].iter().enumerate().map(|(i, &l)| row(i, l)).collect();
        assert_eq!(rounds_to_target(&rows, 0.45), Some(2));
        assert_eq!(rounds_to_target(&rows, 0.4), Some(2));
        assert_eq!(rounds_to_target(&rows, 0.1), None);
    }

    #[test]
    fn q_files_are_tidy() {
        let runs = vec![
            QRun { q: 1, seed: 0, epsilon: 0.05, rows: (0..3).map(|i| row(i, 1.0 / (i + 1) as f64)).collect() },
            QRun { q: 4, seed: 0, epsilon: 0.05, rows: (0..3).map(|i| row(i, 0.5 / (i + 1) as f64)).collect() },
        ];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sweep_q.csv");
        write_sweep_q(&p, &runs).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap().lines().count(), 1 + 6);
    }

    #[test]
    fn targets_follow_the_smallest_q() {
        let mk = |q, seed, losses: &[f64]| QRun {
            q,
            seed,
            epsilon: 0.05,
            rows: losses.iter().enumerate().map(|(i, &l)| row(i, l)).collect(),
        };
        let runs = vec![
            mk(1, 0, &[1.0, 0.8, 0.6, 0.5]),
            mk(4, 0, &[1.0, 0.52, 0.49, 0.48]),
            mk(1, 1, &[1.0, 0.9, 0.7, 0.6]),
            mk(4, 1, &[1.0, 0.9, 0.9, 0.9]),
        ];
        let t = q_targets(&runs, 0.01);
        assert!((t[0] - 0.505).abs() < 1e-12 && (t[1] - 0.505).abs() < 1e-12 && (t[3] - 0.606).abs() < 1e-12);
        let cells = q_rounds(&runs, &t);
        assert_eq!(cells.len(), 2);
        assert_eq!((cells[0].q, cells[0].per_seed.clone(), cells[0].worst), (1, vec![Some(3), Some(3)], Some(3)));
        assert_eq!((cells[1].q, cells[1].per_seed.clone(), cells[1].worst), (4, vec![Some(2), None], None));
        assert!(render_q_table(&cells).contains("not reached"));
    }
}
