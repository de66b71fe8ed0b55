use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::DualPair;

pub const KIND_UP: &str = "contributions";
pub const KIND_DOWN: &str = "margins_and_dual";

/// The only two shapes allowed across the party/server boundary.
#[derive(Debug, Clone, PartialEq)]
pub enum RoundMessage {
    /// Party `k` (0-based) reports `(X_i)_k^T theta_k` for every sample.
    PartyUpstream { k: usize, contributions: Vec<f64> },
    /// Server broadcasts the aggregated margins and the current multipliers.
    ServerDownstream { margins: Vec<f64>, lam: DualPair },
}

impl RoundMessage {
    pub fn kind(&self) -> &'static str {
        match self {
            RoundMessage::PartyUpstream { .. } => KIND_UP,
            RoundMessage::ServerDownstream { .. } => KIND_DOWN,
        }
    }

    pub fn direction(&self) -> Direction {
        match self {
            RoundMessage::PartyUpstream { .. } => Direction::Up,
            RoundMessage::ServerDownstream { .. } => Direction::Down,
        }
    }

    /// The scalars on the wire: `n` contributions, or `n` margins followed by `(lambda1, lambda2)`.
    pub fn payload(&self) -> Vec<f64> {
        match self {
            RoundMessage::PartyUpstream { contributions, .. } => contributions.clone(),
            RoundMessage::ServerDownstream { margins, lam } => {
                let mut v = Vec::with_capacity(margins.len() + 2);
                v.extend_from_slice(margins);
                v.push(lam.lambda1);
                v.push(lam.lambda2);
                v
            }
        }
    }

    fn digest(&self) -> (usize, String) {
        match self {
            RoundMessage::PartyUpstream { contributions, .. } => (contributions.len(), digest(contributions)),
            RoundMessage::ServerDownstream { margins, lam } => {
                let mut h = Sha256::new();
                feed(&mut h, margins);
                feed(&mut h, &[lam.lambda1, lam.lambda2]);
                (margins.len() + 2, hex::encode(h.finalize()))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
}

/// One line of the transcript log.
///
/// `party` is 1-based and absent for the server broadcast. Raw payloads are
/// only kept when explicitly requested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub round: usize,
    pub direction: Direction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub party: Option<usize>,
    pub kind: String,
    pub payload_len: usize,
    pub payload_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<Vec<f64>>,
}

impl TranscriptRecord {
    pub fn of(round: usize, msg: &RoundMessage, keep_payload: bool) -> Self {
        let (payload_len, payload_digest) = msg.digest();
        let party = match msg {
            RoundMessage::PartyUpstream { k, .. } => Some(k + 1),
            RoundMessage::ServerDownstream { .. } => None,
        };
        Self {
            round,
            direction: msg.direction(),
            party,
            kind: msg.kind().to_owned(),
            payload_len,
            payload_digest,
            payload: keep_payload.then(|| msg.payload()),
        }
    }
}

fn feed(h: &mut Sha256, values: &[f64]) {
    for v in values {
        h.update(v.to_le_bytes());
    }
}

/// SHA-256 over the little-endian bytes of `values`, hex encoded.
pub fn digest(values: &[f64]) -> String {
    let mut h = Sha256::new();
    feed(&mut h, values);
    hex::encode(h.finalize())
}

pub fn write_transcript(path: &Path, records: &[TranscriptRecord]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_transcript(path: &Path) -> Result<Vec<TranscriptRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines().filter(|l| !l.trim().is_empty()).map(|l| Ok(serde_json::from_str(l)?)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    /// Position in the transcript, or `None` for a per-round finding.
    pub record: Option<usize>,
    pub round: usize,
    pub reason: String,
}

/// Checks that every record is one of the two sanctioned message shapes
/// with the right payload size, and that each round holds exactly one
/// broadcast plus one upload per party.
pub fn audit_transcript(
    records: &[TranscriptRecord],
    n: usize,
    parties: usize,
) -> std::result::Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    let mut per_round: BTreeMap<usize, (usize, Vec<usize>)> = BTreeMap::new();
    let mut flag = |record, round, reason: String| out.push(Violation { record, round, reason });

    for (idx, r) in records.iter().enumerate() {
        let here = Some(idx);
        let expected_len = match (r.kind.as_str(), r.direction) {
            (KIND_UP, Direction::Up) => n,
            (KIND_DOWN, Direction::Down) => n + 2,
            (kind, dir) => {
                flag(here, r.round, format!("unsanctioned message `{kind}` ({dir:?})"));
                continue;
            }
        };
        if r.payload_len != expected_len {
            flag(here, r.round, format!("`{}` carries {} scalars, expected {expected_len}", r.kind, r.payload_len));
        }
        if let Some(p) = &r.payload {
            if p.len() != r.payload_len || digest(p) != r.payload_digest {
                flag(here, r.round, "stored payload does not match its length or digest".into());
            }
        }
        let entry = per_round.entry(r.round).or_insert_with(|| (0, vec![0; parties]));
        match (r.direction, r.party) {
            (Direction::Down, None) => entry.0 += 1,
            (Direction::Up, Some(p)) if (1..=parties).contains(&p) => entry.1[p - 1] += 1,
            (dir, p) => flag(here, r.round, format!("bad sender {p:?} for a {dir:?} message")),
        }
    }
    for (round, (down, up)) in per_round {
        if down != 1 {
            flag(None, round, format!("{down} broadcasts in round, expected 1"));
        }
        for (k, &c) in up.iter().enumerate() {
            if c != 1 {
                flag(None, round, format!("party {} sent {c} uploads, expected 1", k + 1));
            }
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}
