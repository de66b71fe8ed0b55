use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::run::{create_dir, describe_setup, train_and_evaluate, write_rounded_json, MethodRun};
use super::{ExperimentConfig, Source};
use crate::data::DatasetInfo;
use crate::error::{Error, Result};
use crate::fedsim::{AsyncMode, AsyncSchedule};
use crate::metrics::{
    aggregate, q_rounds, q_targets, render_eps_table, render_q_table, write_sweep_eps, write_sweep_q, Aggregate,
    EpsPoint, MeanStd, QRounds, QRun,
};
use crate::numfmt::g6;

/// Relative slack on the Q=1 final loss that defines the Q-sweep target.
pub const Q_TARGET_SLACK: f64 = 0.01;

#[derive(Debug, Clone)]
pub struct EpsSweep {
    pub config: ExperimentConfig,
    pub info: DatasetInfo,
    pub points: Vec<EpsPoint>,
    /// `runs[i][j]`: value `i`, seed `j`.
    pub runs: Vec<Vec<MethodRun>>,
    pub baseline: Option<Aggregate>,
    pub baseline_runs: Vec<MethodRun>,
}

/// Trains the fair model once per (epsilon, seed), plus one baseline per seed.
pub fn run_eps_sweep(cfg: &ExperimentConfig, values: &[f64]) -> Result<EpsSweep> {
    if values.is_empty() {
        return Err(Error::Config("epsilon sweep needs at least one value".into()));
    }
    let src = Source::load(cfg)?;
    let per_seed = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let p = src.prepare(cfg.split.train_count, seed)?;
            let fair = values
                .iter()
                .map(|&eps| {
                    let mut t = cfg.train_for_seed(seed);
                    t.epsilon = eps;
                    train_and_evaluate(&p, t, seed)
                })
                .collect::<Result<Vec<_>>>()?;
            let baseline = if cfg.baseline {
                let mut t = cfg.train_for_seed(seed);
                t.constrained = false;
                Some(train_and_evaluate(&p, t, seed)?)
            } else {
                None
            };
            Ok((p.info, fair, baseline))
        })
        .collect::<Result<Vec<_>>>()?;

    let info = per_seed[0].0.clone();
    let mut runs: Vec<Vec<MethodRun>> = vec![Vec::new(); values.len()];
    let mut baseline_runs = Vec::new();
    for (_, fair, base) in per_seed {
        for (i, r) in fair.into_iter().enumerate() {
            runs[i].push(r);
        }
        baseline_runs.extend(base);
    }
    let points = values
        .iter()
        .zip(&runs)
        .map(|(&epsilon, rs)| EpsPoint {
            epsilon,
            test: aggregate(&rs.iter().map(|r| r.test).collect::<Vec<_>>()),
            train_deo: MeanStd::of(&rs.iter().map(|r| r.train.deo).collect::<Vec<_>>()),
        })
        .collect();
    let baseline = cfg.baseline.then(|| aggregate(&baseline_runs.iter().map(|r| r.test).collect::<Vec<_>>()));
    Ok(EpsSweep { config: cfg.clone(), info, points, runs, baseline, baseline_runs })
}

pub fn write_eps_sweep(s: &EpsSweep, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    std::fs::write(dir.join("config.toml"), s.config.to_toml()?).map_err(|e| Error::io(dir.join("config.toml"), e))?;
    write_sweep_eps(&dir.join("sweep_eps.csv"), &s.points)?;

    let mut text = format!("epsilon sweep {}\n", s.config.name);
    text.push_str(&describe_setup(&s.config, &s.info));
    text.push('\n');
    text.push_str(&render_eps_table(&s.points));
    if let Some(b) = &s.baseline {
        let _ = writeln!(
            text,
            "{:>10}  {:>20}  {:>20}  {:>10}",
            "baseline",
            format!("{} ± {}", g6(b.accuracy.mean), g6(b.accuracy.std)),
            format!("{} ± {}", g6(b.fairness.mean), g6(b.fairness.std)),
            g6(b.harmonic_mean)
        );
    }
    std::fs::write(dir.join("report.txt"), text).map_err(|e| Error::io(dir.join("report.txt"), e))?;

    #[derive(Serialize)]
    struct Summary<'a> {
        name: &'a str,
        axis: &'static str,
        seeds: &'a [u64],
        dataset: &'a DatasetInfo,
        points: &'a [EpsPoint],
        baseline: Option<&'a Aggregate>,
        config: &'a ExperimentConfig,
    }
    write_rounded_json(
        &dir.join("summary.json"),
        &Summary {
            name: &s.config.name,
            axis: "epsilon",
            seeds: &s.config.seeds,
            dataset: &s.info,
            points: &s.points,
            baseline: s.baseline.as_ref(),
            config: &s.config,
        },
    )
}

#[derive(Debug, Clone)]
pub struct QSweep {
    pub config: ExperimentConfig,
    pub info: DatasetInfo,
    pub runs: Vec<QRun>,
    pub targets: Vec<f64>,
    pub cells: Vec<QRounds>,
}

/// Fixed-Q runs for every (epsilon, Q, seed): each party takes exactly Q
/// local steps per round.
pub fn run_q_sweep(cfg: &ExperimentConfig, qs: &[usize], epsilons: &[f64]) -> Result<QSweep> {
    if qs.is_empty() {
        return Err(Error::Config("Q sweep needs at least one value".into()));
    }
    if let Some(&q) = qs.iter().find(|&&q| q == 0) {
        return Err(Error::Config(format!("Q must be at least 1, got {q}")));
    }
    let epsilons = if epsilons.is_empty() { vec![cfg.train.epsilon] } else { epsilons.to_vec() };
    let src = Source::load(cfg)?;
    let per_seed = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let p = src.prepare(cfg.split.train_count, seed)?;
            let mut out = Vec::new();
            for &epsilon in &epsilons {
                for &q in qs {
                    let mut t = cfg.train_for_seed(seed);
                    t.epsilon = epsilon;
                    t.async_schedule = AsyncSchedule { max_steps: q, mode: AsyncMode::Fixed, seed, slow_party: 0 };
                    let r = train_and_evaluate(&p, t, seed)?;
                    out.push(QRun { q, seed, epsilon, rows: r.trace.rows });
                }
            }
            Ok((p.info, out))
        })
        .collect::<Result<Vec<_>>>()?;
    let info = per_seed[0].0.clone();
    let runs: Vec<QRun> = per_seed.into_iter().flat_map(|(_, r)| r).collect();
    let targets = q_targets(&runs, Q_TARGET_SLACK);
    let cells = q_rounds(&runs, &targets);
    Ok(QSweep { config: cfg.clone(), info, runs, targets, cells })
}

pub fn write_q_sweep(s: &QSweep, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    std::fs::write(dir.join("config.toml"), s.config.to_toml()?).map_err(|e| Error::io(dir.join("config.toml"), e))?;
    write_sweep_q(&dir.join("sweep_q.csv"), &s.runs)?;
    let mut text = format!("Q sweep {}\n", s.config.name);
    text.push_str(&describe_setup(&s.config, &s.info));
    let _ = writeln!(text, "target: final loss of the smallest-Q run with the same seed and epsilon, plus 1%\n");
    text.push_str(&render_q_table(&s.cells));
    std::fs::write(dir.join("report.txt"), text).map_err(|e| Error::io(dir.join("report.txt"), e))?;

    #[derive(Serialize)]
    struct Summary<'a> {
        name: &'a str,
        axis: &'static str,
        seeds: &'a [u64],
        dataset: &'a DatasetInfo,
        target_slack: f64,
        cells: &'a [QRounds],
        config: &'a ExperimentConfig,
    }
    write_rounded_json(
        &dir.join("summary.json"),
        &Summary {
            name: &s.config.name,
            axis: "q",
            seeds: &s.config.seeds,
            dataset: &s.info,
            target_slack: Q_TARGET_SLACK,
            cells: &s.cells,
            config: &s.config,
        },
    )
}
