//! Simulated federation: parties, the server, the two wire messages and
//! the transcript that records them.
//!
//! Each round the server broadcasts `(margins, lambda)`, every party runs
//! between 1 and `Q` local steps against that frozen snapshot and uploads
//! its per-sample contributions, and the server aggregates and takes one
//! projected ascent step on `lambda`. Parties can run on a thread pool;
//! rounds are barrier-synchronized, so the worker layout never changes
//! a single bit of the result.

mod message;
mod party;
mod schedule;
mod server;

pub use message::{
    audit_transcript, digest, read_transcript, write_transcript, Direction, RoundMessage, TranscriptRecord,
    Violation, KIND_DOWN, KIND_UP,
};
pub use party::{party_local_step, party_round, PartyState};
pub use schedule::{AsyncMode, AsyncSchedule};
pub use server::{server_aggregate, server_dual_step, ServerState};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{deo_from_margins, loss_from_margins, DualPair, LossSpec, ParamBlocks, VerticalDataset};

/// Minimum block width for which contributions cannot be inverted to features.
pub const MIN_SECURE_WIDTH: usize = 3;

/// Checks a dataset before any federation starts.
///
/// Every party must hold more than two features; with `allow_insecure`
/// a violation only produces the returned warning.
pub fn validate_config(data: &VerticalDataset, allow_insecure: bool) -> Result<Vec<String>> {
    if data.parties() < 2 {
        return Err(Error::Config(format!("need at least 2 parties, got {}", data.parties())));
    }
    data.require_groups()?;
    let widths = data.widths();
    let weak: Vec<usize> =
        widths.iter().enumerate().filter(|(_, &w)| w < MIN_SECURE_WIDTH).map(|(k, _)| k + 1).collect();
    if weak.is_empty() {
        return Ok(Vec::new());
    }
    if !allow_insecure {
        return Err(Error::Security { parties: weak, widths });
    }
    let msg = format!("insecure partition allowed: parties {weak:?} hold at most 2 features ({widths:?})");
    log::warn!("{msg}");
    Ok(vec![msg])
}

/// Per-round schedule values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RoundParams {
    pub c_t: f64,
    pub eta_t: f64,
    pub beta: f64,
}

/// Everything observable about one communication round.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundRecord {
    pub round: usize,
    /// Loss and signed DEO gap at the new iterate `theta^(t+1)`.
    pub loss: f64,
    pub deo: f64,
    /// Multipliers after the dual step.
    pub lam: DualPair,
    pub steps: Vec<usize>,
    pub transcript: Vec<TranscriptRecord>,
}

/// The server plus all parties, sharing one read-only dataset.
#[derive(Debug, Clone)]
pub struct World<'a> {
    pub data: &'a VerticalDataset,
    pub spec: LossSpec,
    pub parties: Vec<PartyState>,
    pub server: ServerState,
    /// Run parties one after another in index order instead of on the pool.
    pub deterministic: bool,
    /// Keep raw payloads in the transcript.
    pub debug_payloads: bool,
    /// With `false` the server never moves `lambda` (the unconstrained baseline).
    pub dual_updates: bool,
}

impl<'a> World<'a> {
    /// `theta = 0`, `lambda = 0`, zero margins.
    pub fn new(data: &'a VerticalDataset, spec: LossSpec) -> Self {
        let parties = data.widths().iter().enumerate().map(|(k, &w)| PartyState::new(k, w)).collect();
        Self {
            data,
            spec,
            parties,
            server: ServerState::new(data.n(), spec.epsilon),
            deterministic: false,
            debug_payloads: false,
            dual_updates: true,
        }
    }

    /// The concatenated parameter blocks (a simulator-side view; never sent anywhere).
    pub fn theta(&self) -> ParamBlocks {
        ParamBlocks { blocks: self.parties.iter().map(|p| p.theta_k.clone()).collect() }
    }

    pub fn lam(&self) -> DualPair {
        self.server.lam
    }

    pub fn round(&self) -> usize {
        self.server.round
    }
}

/// One full communication round; advances the server's round counter.
pub fn run_round(world: &mut World<'_>, sched: &AsyncSchedule, params: RoundParams) -> Result<RoundRecord> {
    let data = world.data;
    let spec = world.spec;
    let t = world.server.round;
    sched.check(data.parties())?;
    world.server.c_t = params.c_t;
    world.server.eta_t = params.eta_t;
    world.server.beta = params.beta;

    let down = world.server.broadcast();
    let mut transcript = Vec::with_capacity(data.parties() + 1);
    transcript.push(TranscriptRecord::of(t, &down, world.debug_payloads));

    let work = |p: &mut PartyState| -> Result<RoundMessage> {
        p.receive(data, &down)?;
        party_round(p, data, &spec, params.eta_t, sched, t)
    };
    let ups: Vec<RoundMessage> = if world.deterministic {
        world.parties.iter_mut().map(work).collect::<Result<_>>()?
    } else {
        world.parties.par_iter_mut().map(work).collect::<Result<_>>()?
    };
    transcript.extend(ups.iter().map(|m| TranscriptRecord::of(t, m, world.debug_payloads)));

    world.server.margins = server_aggregate(&ups, data.parties(), data.n())?;
    if world.dual_updates {
        server_dual_step(&mut world.server, data)?;
    }
    world.server.round += 1;

    let theta = world.theta();
    Ok(RoundRecord {
        round: t,
        loss: loss_from_margins(data, &world.server.margins, &theta, &spec)?,
        deo: deo_from_margins(data, &world.server.margins)?,
        lam: world.server.lam,
        steps: world.parties.iter().map(|p| p.steps_this_round).collect(),
        transcript,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_dataset;
    use crate::model::{grad_block, grad_lambda, margins, FeatureBlock, Group};

    fn params() -> RoundParams {
        RoundParams { c_t: 1e-3, eta_t: 10.0, beta: 0.1 }
    }

    #[test]
    fn adult_partition_is_secure() {
        let widths = [19, 17, 17, 17, 17, 17];
        let n = 8;
        let blocks = widths.iter().map(|&w| FeatureBlock::new(n, w, vec![0.5; n * w]).unwrap()).collect();
        let groups = (0..n).map(|i| if i % 2 == 0 { Group::A } else { Group::B }).collect();
        let d = VerticalDataset::new(blocks, vec![1.0; n], groups).unwrap();
        assert!(validate_config(&d, false).unwrap().is_empty());
    }

    #[test]
    fn narrow_party_is_a_security_error() {
        let d = synth_dataset(30, 7, 2, 0.0, 0).unwrap();
        let d = VerticalDataset::new(
            vec![
                FeatureBlock::new(30, 2, d.dense().iter().flat_map(|r| r[..2].to_vec()).collect()).unwrap(),
                FeatureBlock::new(30, 5, d.dense().iter().flat_map(|r| r[2..].to_vec()).collect()).unwrap(),
            ],
            d.labels().to_vec(),
            d.groups().to_vec(),
        )
        .unwrap();
        match validate_config(&d, false) {
            Err(Error::Security { parties, .. }) => assert_eq!(parties, vec![1]),
            other => panic!("{other:?}"),
        }
        assert_eq!(validate_config(&d, true).unwrap().len(), 1);
    }

    #[test]
    fn single_party_is_a_config_error() {
        let d = synth_dataset(30, 5, 1, 0.0, 0).unwrap();
        assert!(matches!(validate_config(&d, true), Err(Error::Config(_))));
    }

    #[test]
    fn q1_round_is_a_jacobi_sweep_then_dual_step() {
        let d = synth_dataset(50, 10, 3, 0.8, 5).unwrap();
        let spec = LossSpec::for_samples(d.n(), 0.01).unwrap();
        let mut w = World::new(&d, spec);
        let sched = AsyncSchedule::fixed(1);
        let mut theta = ParamBlocks::zeros(&d.widths());
        let mut lam = DualPair::zero();
        for _ in 0..20 {
            w.deterministic = !w.deterministic;
            let rec = run_round(&mut w, &sched, params()).unwrap();
            let grads: Vec<_> = (0..3).map(|k| grad_block(&d, &theta, &lam, &spec, k).unwrap()).collect();
            for (t, g) in theta.blocks.iter_mut().zip(&grads) {
                for (x, gj) in t.iter_mut().zip(g) {
                    *x -= gj / params().eta_t;
                }
            }
            let gl = grad_lambda(&d, &theta, &lam, &spec, params().c_t).unwrap();
            lam = DualPair::projected(lam.lambda1 + params().beta * gl[0], lam.lambda2 + params().beta * gl[1]);
            assert_eq!(w.theta(), theta);
            assert_eq!(rec.lam, lam);
            assert_eq!(w.server.margins, margins(&d, &theta).unwrap());
            assert_eq!(rec.transcript.len(), 4);
        }
        assert!(w.lam().lambda1 > 0.0 || w.lam().lambda2 > 0.0);
    }

    #[test]
    fn huge_epsilon_keeps_lambda_at_zero() {
        let d = synth_dataset(50, 10, 3, 1.0, 6).unwrap();
        let mut w = World::new(&d, LossSpec::for_samples(d.n(), 1e3).unwrap());
        for _ in 0..30 {
            assert_eq!(run_round(&mut w, &AsyncSchedule::uniform(3, 1), params()).unwrap().lam, DualPair::zero());
        }
    }

    #[test]
    fn serial_and_parallel_agree() {
        let d = synth_dataset(60, 12, 4, 0.5, 8).unwrap();
        let spec = LossSpec::for_samples(d.n(), 0.01).unwrap();
        let sched = AsyncSchedule::uniform(4, 11);
        let run = |det: bool| {
            let mut w = World::new(&d, spec);
            w.deterministic = det;
            (0..10).map(|_| run_round(&mut w, &sched, params()).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(run(true), run(false));
    }

    #[test]
    fn transcript_of_a_run_passes_audit() {
        let d = synth_dataset(40, 9, 3, 0.5, 2).unwrap();
        let mut w = World::new(&d, LossSpec::for_samples(d.n(), 0.01).unwrap());
        w.debug_payloads = true;
        let mut all = Vec::new();
        for _ in 0..5 {
            all.extend(run_round(&mut w, &AsyncSchedule::uniform(3, 0), params()).unwrap().transcript);
        }
        assert_eq!(all.len(), 5 * 4);
        audit_transcript(&all, d.n(), 3).unwrap();
    }
}
