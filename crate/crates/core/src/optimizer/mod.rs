//! The training loop: schedules, stationarity gap, stopping and the run trace.

mod gap;
mod schedule;
mod smoothness;

pub use gap::{gap_from_parts, stationarity_gap, GapRecord};
pub use schedule::{schedule_values, ConstantSchedule, ScheduleSpec, ScheduleValues, Theorem2Schedule};
pub use smoothness::{estimate_smoothness, SmoothnessEstimate};

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fedsim::{run_round, validate_config, AsyncSchedule, RoundParams, TranscriptRecord, World};
use crate::model::{deo_from_margins, loss_from_margins, DualPair, LossSpec, ParamBlocks, VerticalDataset};
use crate::numfmt::{g6, round6};

fn default_patience() -> usize {
    1
}

fn default_ceiling() -> f64 {
    1e6
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epsilon: f64,
    /// `mu`; `None` means `1/n`.
    #[serde(default)]
    pub reg_weight: Option<f64>,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    #[serde(default, rename = "async")]
    pub async_schedule: AsyncSchedule,
    pub max_rounds: usize,
    /// Stop once the gap total stays at or below `delta` for `patience` rounds.
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default = "default_patience")]
    pub patience: usize,
    /// Runs whose `||lambda||` exceeds this are flagged (never stopped).
    #[serde(default = "default_ceiling")]
    pub lambda_ceiling: f64,
    /// `false` freezes `lambda = 0`: the unconstrained baseline.
    #[serde(default = "default_true")]
    pub constrained: bool,
    #[serde(default)]
    pub deterministic: bool,
    #[serde(default)]
    pub allow_insecure: bool,
    #[serde(default)]
    pub debug_payloads: bool,
    /// Keep every iterate `theta^(t)` in the trace.
    #[serde(default)]
    pub record_theta: bool,
}

impl TrainConfig {
    /// Constant schedule, `Q = 1`, epsilon as given.
    pub fn new(epsilon: f64, max_rounds: usize) -> Self {
        Self {
            epsilon,
            reg_weight: None,
            schedule: ScheduleSpec::default(),
            async_schedule: AsyncSchedule::default(),
            max_rounds,
            delta: None,
            patience: 1,
            lambda_ceiling: default_ceiling(),
            constrained: true,
            deterministic: false,
            allow_insecure: false,
            debug_payloads: false,
            record_theta: false,
        }
    }

    pub fn check(&self) -> Result<()> {
        if !(self.epsilon >= 0.0) {
            return Err(Error::Config(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if self.delta.is_some_and(|d| !(d >= 0.0)) {
            return Err(Error::Config("delta must be >= 0".into()));
        }
        self.schedule.check()
    }
}

/// State of iterate `round` plus the round that leaves it.
///
/// The gap fields and `kappa` describe the step from this iterate to the
/// next one, so they are empty on the last row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub round: usize,
    pub loss: f64,
    pub deo: f64,
    pub abs_deo: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub gap: Option<GapRecord>,
    pub kappa: usize,
    pub steps: Vec<usize>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxRounds,
    Stationary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunTrace {
    pub rows: Vec<TraceRow>,
    pub transcript: Vec<TranscriptRecord>,
    pub theta: ParamBlocks,
    pub lam: DualPair,
    /// `theta^(0), theta^(1), ...` when requested.
    pub thetas: Vec<ParamBlocks>,
    pub stop: StopReason,
    pub max_lambda_norm: f64,
    pub lambda_ceiling_exceeded: bool,
    pub warnings: Vec<String>,
}

impl RunTrace {
    pub fn rounds(&self) -> usize {
        self.rows.len() - 1
    }

    pub fn last(&self) -> &TraceRow {
        self.rows.last().expect("trace has the initial row")
    }

    /// The trace without wall-clock times, for replay comparisons.
    pub fn timeless(&self) -> RunTrace {
        let mut t = self.clone();
        for r in &mut t.rows {
            r.seconds = 0.0;
        }
        t
    }
}

fn finite_params(theta: &ParamBlocks) -> bool {
    theta.blocks.iter().flatten().all(|x| x.is_finite())
}

/// Runs the federation from `theta = 0`, `lambda = 0` until `max_rounds`
/// or until the stationarity gap stays below `delta`.
pub fn run_training(data: &VerticalDataset, cfg: &TrainConfig) -> Result<RunTrace> {
    cfg.check()?;
    let warnings = validate_config(data, cfg.allow_insecure)?;
    let spec = LossSpec::new(cfg.reg_weight.unwrap_or(1.0 / data.n() as f64), cfg.epsilon)?;
    let schedule = cfg.schedule.resolve(data.parties(), cfg.async_schedule.max_steps);
    schedule.check()?;
    cfg.async_schedule.check(data.parties())?;

    let mut world = World::new(data, spec);
    world.deterministic = cfg.deterministic;
    world.debug_payloads = cfg.debug_payloads;
    world.dual_updates = cfg.constrained;

    let start = Instant::now();
    let mut theta = world.theta();
    let mut deo = deo_from_margins(data, &world.server.margins)?;
    let mut rows = vec![TraceRow {
        round: 0,
        loss: loss_from_margins(data, &world.server.margins, &theta, &spec)?,
        deo,
        abs_deo: deo.abs(),
        lambda1: 0.0,
        lambda2: 0.0,
        gap: None,
        kappa: 0,
        steps: Vec::new(),
        seconds: 0.0,
    }];
    let mut transcript = Vec::with_capacity(cfg.max_rounds * (data.parties() + 1));
    let mut thetas = if cfg.record_theta { vec![theta.clone()] } else { Vec::new() };
    let mut max_lambda_norm = 0.0_f64;
    let mut below = 0;
    let mut stop = StopReason::MaxRounds;

    for t in 0..cfg.max_rounds {
        let sv = schedule_values(&schedule, t + 1)?;
        let lam_t = world.lam();
        let rec = run_round(&mut world, &cfg.async_schedule, RoundParams { c_t: sv.c_t, eta_t: sv.eta_t, beta: sv.beta })?;
        let next = world.theta();
        let round = t + 1;
        if !rec.loss.is_finite() {
            return Err(Error::Divergence { round, what: "loss" });
        }
        if !finite_params(&next) {
            return Err(Error::Divergence { round, what: "parameters" });
        }
        if !rec.deo.is_finite() || !rec.lam.lambda1.is_finite() || !rec.lam.lambda2.is_finite() {
            return Err(Error::Divergence { round, what: "multipliers" });
        }

        let gap = gap_from_parts(t, &theta, &next, deo, lam_t, spec.epsilon, sv.eta_t, sv.beta, cfg.constrained);
        let row = rows.last_mut().expect("initial row");
        row.gap = Some(gap);
        row.kappa = rec.steps.iter().sum();
        row.steps = rec.steps;

        max_lambda_norm = max_lambda_norm.max(rec.lam.norm());
        rows.push(TraceRow {
            round,
            loss: rec.loss,
            deo: rec.deo,
            abs_deo: rec.deo.abs(),
            lambda1: rec.lam.lambda1,
            lambda2: rec.lam.lambda2,
            gap: None,
            kappa: 0,
            steps: Vec::new(),
            seconds: start.elapsed().as_secs_f64(),
        });
        transcript.extend(rec.transcript);
        if cfg.record_theta {
            thetas.push(next.clone());
        }
        theta = next;
        deo = rec.deo;

        if let Some(delta) = cfg.delta {
            below = if gap.total <= delta { below + 1 } else { 0 };
            if below >= cfg.patience {
                stop = StopReason::Stationary;
                break;
            }
        }
    }

    let exceeded = max_lambda_norm > cfg.lambda_ceiling;
    let mut warnings = warnings;
    if exceeded {
        let msg = format!("max ||lambda|| = {} exceeded the ceiling {}", g6(max_lambda_norm), g6(cfg.lambda_ceiling));
        log::warn!("{msg}");
        warnings.push(msg);
    }
    Ok(RunTrace {
        rows,
        transcript,
        lam: world.lam(),
        theta,
        thetas,
        stop,
        max_lambda_norm,
        lambda_ceiling_exceeded: exceeded,
        warnings,
    })
}

pub const TRACE_COLUMNS: [&str; 10] =
    ["round", "loss", "abs_deo", "lambda1", "lambda2", "gap_primal", "gap_dual", "gap_total", "kappa", "seconds"];

/// One CSV row per iterate; gap cells are empty on the last row.
pub fn write_trace_csv(path: &Path, trace: &RunTrace) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TRACE_COLUMNS)?;
    for r in &trace.rows {
        let (p, d, t) = match r.gap {
            Some(g) => (g6(g.primal_part), g6(g.dual_part), g6(g.total)),
            None => Default::default(),
        };
        w.write_record([
            r.round.to_string(),
            g6(r.loss),
            g6(r.abs_deo),
            g6(r.lambda1),
            g6(r.lambda2),
            p,
            d,
            t,
            r.kappa.to_string(),
            g6(r.seconds),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary<'a> {
    pub seed: u64,
    pub config: &'a TrainConfig,
    pub rounds: usize,
    pub stop: StopReason,
    pub final_loss: f64,
    pub final_abs_deo: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub max_lambda_norm: f64,
    pub lambda_ceiling_exceeded: bool,
    pub messages: usize,
    pub warnings: &'a [String],
}

impl<'a> TrainSummary<'a> {
    pub fn new(trace: &'a RunTrace, cfg: &'a TrainConfig, seed: u64) -> Self {
        let last = trace.last();
        Self {
            seed,
            config: cfg,
            rounds: trace.rounds(),
            stop: trace.stop,
            final_loss: round6(last.loss),
            final_abs_deo: round6(last.abs_deo),
            lambda1: round6(last.lambda1),
            lambda2: round6(last.lambda2),
            max_lambda_norm: round6(trace.max_lambda_norm),
            lambda_ceiling_exceeded: trace.lambda_ceiling_exceeded,
            messages: trace.transcript.len(),
            warnings: &trace.warnings,
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_dataset;
    use crate::fedsim::audit_transcript;
    use crate::model::{FeatureBlock, Group};

    #[test]
    fn zero_rounds_is_the_initial_evaluation() {
        let d = synth_dataset(40, 9, 3, 0.5, 0).unwrap();
        let tr = run_training(&d, &TrainConfig::new(0.01, 0)).unwrap();
        assert_eq!(tr.rows.len(), 1);
        assert!((tr.rows[0].loss - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(tr.rows[0].abs_deo, 0.0);
        assert!(tr.transcript.is_empty());
    }

    #[test]
    fn unconstrained_loss_decreases_on_separable_data() {
        // two well-separated clusters, both groups present in each
        let n = 40;
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        let mut groups = Vec::new();
        for i in 0..n {
            let y = if i % 2 == 0 { 1.0 } else { -1.0 };
            let j = (i as f64) / n as f64;
            rows.push(vec![y * 2.0 + j * 0.1, y * 1.5 - j * 0.1, y + 0.05 * j, y * 0.5, -j, j * j]);
            labels.push(y);
            groups.push(if i % 4 < 2 { Group::A } else { Group::B });
        }
        let left = FeatureBlock::from_rows(&rows.iter().map(|r| r[..3].to_vec()).collect::<Vec<_>>()).unwrap();
        let right = FeatureBlock::from_rows(&rows.iter().map(|r| r[3..].to_vec()).collect::<Vec<_>>()).unwrap();
        let d = VerticalDataset::new(vec![left, right], labels, groups).unwrap();
        let mut cfg = TrainConfig::new(0.01, 10);
        cfg.constrained = false;
        let tr = run_training(&d, &cfg).unwrap();
        for w in tr.rows.windows(2) {
            assert!(w[1].loss < w[0].loss, "{} !< {}", w[1].loss, w[0].loss);
        }
    }

    #[test]
    fn frozen_and_inactive_runs_agree_bitwise() {
        let d = synth_dataset(50, 10, 3, 1.0, 2).unwrap();
        let mut frozen = TrainConfig::new(0.01, 40);
        frozen.constrained = false;
        let mut inactive = TrainConfig::new(1e3, 40);
        inactive.reg_weight = Some(1.0 / 50.0);
        frozen.reg_weight = inactive.reg_weight;
        let a = run_training(&d, &frozen).unwrap().timeless();
        let b = run_training(&d, &inactive).unwrap().timeless();
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.theta, b.theta);
        assert_eq!(a.transcript, b.transcript);
    }

    #[test]
    fn trace_bookkeeping() {
        let d = synth_dataset(40, 9, 3, 0.8, 1).unwrap();
        let mut cfg = TrainConfig::new(0.01, 12);
        cfg.async_schedule = AsyncSchedule::uniform(3, 5);
        cfg.record_theta = true;
        let tr = run_training(&d, &cfg).unwrap();
        assert_eq!(tr.rows.len(), 13);
        assert_eq!(tr.thetas.len(), 13);
        assert_eq!(tr.transcript.len(), 12 * 4);
        audit_transcript(&tr.transcript, d.n(), 3).unwrap();
        for r in &tr.rows[..12] {
            let g = r.gap.unwrap();
            assert!(g.primal_part >= 0.0 && g.dual_part >= 0.0);
            assert_eq!(r.kappa, r.steps.iter().sum::<usize>());
            assert!(r.steps.iter().all(|&q| (1..=3).contains(&q)));
        }
        assert!(tr.last().gap.is_none());
        // the primal gap is eta times the step actually taken
        let g0 = tr.rows[3].gap.unwrap();
        let step: f64 = tr.thetas[3]
            .flatten()
            .iter()
            .zip(tr.thetas[4].flatten())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!((g0.primal_part - 100.0 * step).abs() < 1e-12);
    }

    #[test]
    fn early_stop_on_small_gap() {
        let d = synth_dataset(40, 9, 3, 0.0, 1).unwrap();
        let mut cfg = TrainConfig::new(0.5, 500);
        cfg.delta = Some(1e9);
        cfg.patience = 3;
        let tr = run_training(&d, &cfg).unwrap();
        assert_eq!(tr.stop, StopReason::Stationary);
        assert_eq!(tr.rounds(), 3);
    }

    #[test]
    fn divergence_is_reported_with_its_round() {
        let d = synth_dataset(40, 9, 3, 0.5, 1).unwrap();
        let mut cfg = TrainConfig::new(0.01, 50);
        cfg.schedule = ScheduleSpec::Constant(ConstantSchedule { c: 1e-3, eta: 1e-300, beta: 0.1 });
        match run_training(&d, &cfg) {
            Err(Error::Divergence { round, .. }) => assert!(round >= 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn security_guard_runs_first() {
        let d = synth_dataset(40, 4, 2, 0.5, 1).unwrap();
        assert!(matches!(run_training(&d, &TrainConfig::new(0.01, 5)), Err(Error::Security { .. })));
        let mut cfg = TrainConfig::new(0.01, 5);
        cfg.allow_insecure = true;
        assert_eq!(run_training(&d, &cfg).unwrap().warnings.len(), 1);
    }

    #[test]
    fn lambda_ceiling_flag() {
        let d = synth_dataset(60, 9, 3, 2.0, 3).unwrap();
        let mut cfg = TrainConfig::new(0.0, 30);
        cfg.lambda_ceiling = 1e-6;
        let tr = run_training(&d, &cfg).unwrap();
        assert!(tr.lambda_ceiling_exceeded && tr.max_lambda_norm > 1e-6);
    }

    #[test]
    fn trace_csv_has_the_documented_columns() {
        let d = synth_dataset(30, 9, 3, 0.5, 1).unwrap();
        let tr = run_training(&d, &TrainConfig::new(0.01, 3)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("trace.csv");
        write_trace_csv(&p, &tr).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], TRACE_COLUMNS.join(","));
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("0,0.693147,0,0,0,"));
        assert!(lines[4].contains(",,,0,"));
    }
}
