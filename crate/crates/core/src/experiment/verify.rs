use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::data::synth_dataset;
use crate::error::{Error, Result};
use crate::fedsim::{audit_transcript, validate_config, AsyncSchedule, Direction, TranscriptRecord};
use crate::model::grad::{finite_diff_check_with, BlockGradFn};
use crate::model::{grad_block, grad_lambda, DualPair, FeatureBlock, LossSpec, ParamBlocks, VerticalDataset};
use crate::optimizer::{run_training, ScheduleSpec, TrainConfig};

/// Test hooks for the verify suite.
#[derive(Debug, Clone, Copy, Default)]
pub struct VerifyOptions {
    /// Scale the analytic block gradients by `1 + 1e-3`; the gradient
    /// check must then fail.
    pub corrupt_gradient: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> Vec<&'static str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect()
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let _ = writeln!(
                s,
                "{} {:<22} {:>7.3}s  {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.seconds,
                c.detail
            );
        }
        s
    }
}

fn corrupted_grad_block(
    data: &VerticalDataset,
    theta: &ParamBlocks,
    lam: &DualPair,
    spec: &LossSpec,
    k: usize,
) -> Result<Vec<f64>> {
    Ok(grad_block(data, theta, lam, spec, k)?.into_iter().map(|g| g * (1.0 + 1e-3)).collect())
}

fn gradient_check(opts: VerifyOptions) -> Result<(bool, String)> {
    let block_grad: BlockGradFn = if opts.corrupt_gradient { corrupted_grad_block } else { grad_block };
    let mut worst = 0.0_f64;
    for i in 0..20u64 {
        let d = synth_dataset(50, 10, 3, 0.5 * (i % 4) as f64, 100 + i)?;
        let mut rng = ChaCha8Rng::seed_from_u64(i);
        let flat: Vec<f64> = (0..d.m()).map(|_| rng.sample::<f64, _>(StandardNormal) * 0.5).collect();
        let theta = ParamBlocks::from_flat(&d.widths(), &flat)?;
        let lam = DualPair::projected(rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0));
        let spec = LossSpec::for_samples(d.n(), rng.gen_range(0.0..0.1))?;
        let c_t = rng.gen_range(0.0..0.01);
        worst = worst.max(finite_diff_check_with(&d, &theta, &lam, &spec, c_t, 1e-5, block_grad, grad_lambda)?);
    }
    Ok((worst < 1e-6, format!("20 instances, worst relative error {worst:.3e} (bound 1e-6)")))
}

fn q1_equivalence() -> Result<(bool, String)> {
    let d = synth_dataset(50, 10, 3, 1.0, 7)?;
    let mut cfg = TrainConfig::new(0.01, 100);
    cfg.record_theta = true;
    cfg.async_schedule = AsyncSchedule::fixed(1);
    let trace = run_training(&d, &cfg)?;

    let ScheduleSpec::Constant(s) = cfg.schedule else { unreachable!("TrainConfig::new uses the constant schedule") };
    let spec = LossSpec::for_samples(d.n(), cfg.epsilon)?;
    let mut theta = ParamBlocks::zeros(&d.widths());
    let mut lam = DualPair::zero();
    for t in 0..cfg.max_rounds {
        let grads = (0..d.parties()).map(|k| grad_block(&d, &theta, &lam, &spec, k)).collect::<Result<Vec<_>>>()?;
        for (block, g) in theta.blocks.iter_mut().zip(&grads) {
            for (x, gj) in block.iter_mut().zip(g) {
                *x -= gj / s.eta;
            }
        }
        let gl = grad_lambda(&d, &theta, &lam, &spec, s.c)?;
        lam = DualPair::projected(lam.lambda1 + s.beta * gl[0], lam.lambda2 + s.beta * gl[1]);
        let row = &trace.rows[t + 1];
        if trace.thetas[t + 1] != theta || row.lambda1 != lam.lambda1 || row.lambda2 != lam.lambda2 {
            return Ok((false, format!("iterates differ from the synchronous oracle at round {}", t + 1)));
        }
    }
    Ok((true, format!("100 rounds bitwise equal, final lambda ({:.4e}, {:.4e})", lam.lambda1, lam.lambda2)))
}

fn lambda_freeze() -> Result<(bool, String)> {
    let d = synth_dataset(80, 12, 3, 1.0, 9)?;
    let mut fair = TrainConfig::new(1e3, 200);
    fair.record_theta = true;
    fair.async_schedule = AsyncSchedule::uniform(3, 5);
    let mut frozen = fair.clone();
    frozen.epsilon = 0.01;
    frozen.constrained = false;
    let a = run_training(&d, &fair)?;
    let b = run_training(&d, &frozen)?;
    let lam_zero = a.rows.iter().all(|r| r.lambda1 == 0.0 && r.lambda2 == 0.0);
    let same = a.thetas == b.thetas;
    Ok((lam_zero && same, format!("200 rounds, lambda stays 0: {lam_zero}, trajectories bitwise equal: {same}")))
}

fn transcript_audit() -> Result<(bool, String)> {
    let d = synth_dataset(60, 9, 3, 0.5, 4)?;
    let mut cfg = TrainConfig::new(0.01, 25);
    cfg.async_schedule = AsyncSchedule::uniform(4, 2);
    cfg.debug_payloads = true;
    let trace = run_training(&d, &cfg)?;
    let clean = audit_transcript(&trace.transcript, d.n(), d.parties()).is_ok();
    let count = trace.transcript.len() == 25 * (d.parties() + 1);
    let sizes = trace.transcript.iter().all(|r| match r.direction {
        Direction::Up => r.payload_len == d.n(),
        Direction::Down => r.payload_len == d.n() + 2,
    });

    let mut tampered = trace.transcript.clone();
    let leak = vec![0.25; 3];
    tampered.push(TranscriptRecord {
        round: 3,
        direction: Direction::Up,
        party: Some(2),
        kind: "theta".into(),
        payload_len: leak.len(),
        payload_digest: crate::fedsim::digest(&leak),
        payload: Some(leak),
    });
    let caught = audit_transcript(&tampered, d.n(), d.parties()).is_err();
    Ok((
        clean && count && sizes && caught,
        format!("clean run ok: {clean}, K+1 records per round: {count}, payload sizes n / n+2: {sizes}, injected parameter message flagged: {caught}"),
    ))
}

fn security_guard() -> Result<(bool, String)> {
    let base = synth_dataset(40, 10, 1, 0.5, 3)?;
    let dense = base.dense();
    let cut = |lo: usize, hi: usize| {
        FeatureBlock::from_rows(&dense.iter().map(|r| r[lo..hi].to_vec()).collect::<Vec<_>>())
    };
    let blocks = vec![cut(0, 4)?, cut(4, 6)?, cut(6, 10)?];
    let d = VerticalDataset::new(blocks, base.labels().to_vec(), base.groups().to_vec())?;
    let refused = matches!(
        run_training(&d, &TrainConfig::new(0.01, 5)),
        Err(Error::Security { ref parties, .. }) if parties == &[2]
    );
    let downgraded = validate_config(&d, true).map(|w| !w.is_empty()).unwrap_or(false);
    Ok((refused && downgraded, format!("m_k = 2 refused: {refused}, --allow-insecure downgrades to a warning: {downgraded}")))
}

fn replay() -> Result<(bool, String)> {
    let d = synth_dataset(60, 12, 4, 0.8, 8)?;
    let mut cfg = TrainConfig::new(0.01, 40);
    cfg.async_schedule = AsyncSchedule::uniform(5, 13);
    let a = run_training(&d, &cfg)?;
    let b = run_training(&d, &cfg)?;
    cfg.deterministic = true;
    let c = run_training(&d, &cfg)?;
    let (a, b, c) = (a.timeless(), b.timeless(), c.timeless());
    let same = a.rows == b.rows && a.transcript == b.transcript && a.theta == b.theta;
    let serial = a.rows == c.rows && a.transcript == c.transcript && a.theta == c.theta;
    Ok((same && serial, format!("repeat run identical: {same}, serial equals parallel: {serial}")))
}

type CheckFn = Box<dyn Fn() -> Result<(bool, String)>>;

/// The synthetic-only property suite behind `fairvfl verify`.
pub fn run_verify(opts: VerifyOptions) -> VerifyReport {
    let suite: Vec<(&'static str, CheckFn)> = vec![
        ("gradient", Box::new(move || gradient_check(opts))),
        ("q1_equivalence", Box::new(q1_equivalence)),
        ("lambda_freeze", Box::new(lambda_freeze)),
        ("transcript_audit", Box::new(transcript_audit)),
        ("security_guard", Box::new(security_guard)),
        ("replay_determinism", Box::new(replay)),
    ];
    let checks = suite
        .into_iter()
        .map(|(name, f)| {
            let start = Instant::now();
            let (passed, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
            Check { name, passed, detail, seconds: start.elapsed().as_secs_f64() }
        })
        .collect();
    VerifyReport { checks }
}
