use super::message::RoundMessage;
use super::schedule::AsyncSchedule;
use crate::error::{Error, Result};
use crate::model::{descent_step, grad_block_at_margins, DualPair, LossSpec, VerticalDataset};

/// A data party: its parameter block plus what it learned from the last broadcast.
///
/// The party only ever reads block `k` of the dataset (and the labels and
/// group tags, which every participant holds). During a round it sees the
/// other blocks only through the broadcast margins, frozen at round start.
#[derive(Debug, Clone, PartialEq)]
pub struct PartyState {
    pub k: usize,
    pub theta_k: Vec<f64>,
    pub lam_snapshot: DualPair,
    pub steps_this_round: usize,
    snapshot: Vec<f64>,
    own_start: Vec<f64>,
}

impl PartyState {
    pub fn new(k: usize, width: usize) -> Self {
        Self {
            k,
            theta_k: vec![0.0; width],
            lam_snapshot: DualPair::zero(),
            steps_this_round: 0,
            snapshot: Vec::new(),
            own_start: Vec::new(),
        }
    }

    /// Takes in a server broadcast and starts a new round.
    pub fn receive(&mut self, data: &VerticalDataset, msg: &RoundMessage) -> Result<()> {
        let RoundMessage::ServerDownstream { margins, lam } = msg else {
            return Err(Error::Protocol(format!("party {} received a party upload", self.k + 1)));
        };
        if margins.len() != data.n() {
            return Err(Error::Protocol(format!("broadcast has {} margins for {} samples", margins.len(), data.n())));
        }
        self.snapshot.clear();
        self.snapshot.extend_from_slice(margins);
        self.own_start = data.block(self.k).contributions(&self.theta_k);
        self.lam_snapshot = *lam;
        self.steps_this_round = 0;
        Ok(())
    }

    /// `X_i^T theta^(t) - (X_i)_k^T theta_k^(t)`: what the other parties contributed at round start.
    pub fn foreign_margin(&self) -> Vec<f64> {
        self.snapshot.iter().zip(&self.own_start).map(|(s, o)| s - o).collect()
    }

    /// Margins at the inconsistent read: own block live, the rest frozen.
    ///
    /// Computed as `snapshot + (own_now - own_start)` so that before the
    /// first local step the party reads the broadcast margins bit for bit.
    pub fn read_margins(&self, data: &VerticalDataset) -> Vec<f64> {
        if self.steps_this_round == 0 {
            return self.snapshot.clone();
        }
        let now = data.block(self.k).contributions(&self.theta_k);
        self.snapshot.iter().zip(now.iter().zip(&self.own_start)).map(|(s, (n, o))| s + (n - o)).collect()
    }
}

/// One local update `theta_k <- theta_k - grad_k / eta_t` at the inconsistent read.
pub fn party_local_step(p: &mut PartyState, data: &VerticalDataset, spec: &LossSpec, eta_t: f64) -> Result<()> {
    if !(eta_t > 0.0) {
        return Err(Error::Schedule(format!("eta_t must be positive, got {eta_t}")));
    }
    if p.snapshot.len() != data.n() {
        return Err(Error::Protocol(format!("party {} stepped before receiving a broadcast", p.k + 1)));
    }
    let z = p.read_margins(data);
    let g = grad_block_at_margins(data, &z, p.k, &p.theta_k, &p.lam_snapshot, spec)?;
    descent_step(&mut p.theta_k, &g, eta_t);
    p.steps_this_round += 1;
    Ok(())
}

/// The party's whole round: `q` local steps, then its upload.
pub fn party_round(
    p: &mut PartyState,
    data: &VerticalDataset,
    spec: &LossSpec,
    eta_t: f64,
    sched: &AsyncSchedule,
    round: usize,
) -> Result<RoundMessage> {
    let q = sched.steps(round, p.k);
    for _ in 0..q {
        party_local_step(p, data, spec, eta_t)?;
    }
    Ok(RoundMessage::PartyUpstream { k: p.k, contributions: data.block(p.k).contributions(&p.theta_k) })
}
