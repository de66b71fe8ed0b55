use super::message::RoundMessage;
use crate::error::{Error, Result};
use crate::model::{deo_from_margins, grad_lambda_from_gap, DualPair, VerticalDataset};

/// The coordinator. It holds margins and multipliers, never features or parameter blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerState {
    pub lam: DualPair,
    pub margins: Vec<f64>,
    pub round: usize,
    pub c_t: f64,
    pub eta_t: f64,
    pub beta: f64,
    pub epsilon: f64,
}

impl ServerState {
    pub fn new(n: usize, epsilon: f64) -> Self {
        Self { lam: DualPair::zero(), margins: vec![0.0; n], round: 0, c_t: 0.0, eta_t: 0.0, beta: 0.0, epsilon }
    }

    pub fn broadcast(&self) -> RoundMessage {
        RoundMessage::ServerDownstream { margins: self.margins.clone(), lam: self.lam }
    }
}

/// Sums one upload per party into margins, party-ascending per sample.
pub fn server_aggregate(msgs: &[RoundMessage], parties: usize, n: usize) -> Result<Vec<f64>> {
    let mut by_party: Vec<Option<&[f64]>> = vec![None; parties];
    for msg in msgs {
        let RoundMessage::PartyUpstream { k, contributions } = msg else {
            return Err(Error::Protocol("server received a broadcast-shaped message".into()));
        };
        let slot = by_party
            .get_mut(*k)
            .ok_or_else(|| Error::Protocol(format!("upload from unknown party {}", k + 1)))?;
        if slot.is_some() {
            return Err(Error::Protocol(format!("duplicate upload from party {}", k + 1)));
        }
        if contributions.len() != n {
            return Err(Error::Protocol(format!(
                "party {} sent {} contributions for {n} samples",
                k + 1,
                contributions.len()
            )));
        }
        *slot = Some(contributions);
    }
    let parts = by_party
        .iter()
        .enumerate()
        .map(|(k, c)| c.ok_or_else(|| Error::Protocol(format!("no upload from party {}", k + 1))))
        .collect::<Result<Vec<_>>>()?;
    let mut out = vec![0.0; n];
    for (i, acc) in out.iter_mut().enumerate() {
        for c in &parts {
            *acc += c[i];
        }
    }
    Ok(out)
}

/// Projected ascent on the multipliers at the freshly aggregated margins,
/// using the server's `c_t` and `beta`.
pub fn server_dual_step(s: &mut ServerState, data: &VerticalDataset) -> Result<()> {
    if !(s.beta > 0.0) {
        return Err(Error::Schedule(format!("beta must be positive, got {}", s.beta)));
    }
    let gap = deo_from_margins(data, &s.margins)?;
    let g = grad_lambda_from_gap(gap, &s.lam, s.epsilon, s.c_t);
    s.lam = DualPair::projected(s.lam.lambda1 + s.beta * g[0], s.lam.lambda2 + s.beta * g[1]);
    Ok(())
}
