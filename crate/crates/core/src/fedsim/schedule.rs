use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AsyncMode {
    /// Each party draws `q` uniformly from `[1, Q]` every round.
    #[default]
    Uniform,
    /// Every party takes exactly `Q` steps.
    Fixed,
    /// `slow_party` always takes one step, everyone else takes `Q`.
    AdversarialLag,
}

/// How many local steps each party takes per round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsyncSchedule {
    #[serde(rename = "q")]
    pub max_steps: usize,
    #[serde(default)]
    pub mode: AsyncMode,
    #[serde(default)]
    pub seed: u64,
    /// 0-based index of the lagging party in `adversarial_lag` mode.
    #[serde(default)]
    pub slow_party: usize,
}

impl Default for AsyncSchedule {
    fn default() -> Self {
        Self::fixed(1)
    }
}

impl AsyncSchedule {
    pub fn fixed(q: usize) -> Self {
        Self { max_steps: q, mode: AsyncMode::Fixed, seed: 0, slow_party: 0 }
    }

    pub fn uniform(q: usize, seed: u64) -> Self {
        Self { max_steps: q, mode: AsyncMode::Uniform, seed, slow_party: 0 }
    }

    pub fn adversarial_lag(q: usize, slow_party: usize) -> Self {
        Self { max_steps: q, mode: AsyncMode::AdversarialLag, seed: 0, slow_party }
    }

    pub fn check(&self, parties: usize) -> Result<()> {
        if self.max_steps == 0 {
            return Err(Error::Config("Q must be at least 1".into()));
        }
        if self.mode == AsyncMode::AdversarialLag && self.slow_party >= parties {
            return Err(Error::PartyIndex { index: self.slow_party, parties });
        }
        Ok(())
    }

    /// Local step count of party `k` in `round`, always in `[1, Q]`.
    ///
    /// Uniform draws use an independent ChaCha stream per `(round, k)`, so
    /// the count does not depend on which worker runs the party or when.
    pub fn steps(&self, round: usize, k: usize) -> usize {
        let q = self.max_steps.max(1);
        match self.mode {
            AsyncMode::Fixed => q,
            AsyncMode::AdversarialLag => {
                if k == self.slow_party {
                    1
                } else {
                    q
                }
            }
            AsyncMode::Uniform => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream(((round as u64) << 16) ^ k as u64);
                rng.gen_range(1..=q)
            }
        }
    }
}
