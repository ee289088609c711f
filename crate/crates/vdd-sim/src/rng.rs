//! Serializable wrapper for the simulation RNG so `WorldState` snapshots are
//! exact (seed + stream position round-trip bitwise).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(from = "SimRngRepr", into = "SimRngRepr")]
pub struct SimRng(ChaCha8Rng);

#[derive(Serialize, Deserialize, Clone)]
struct SimRngRepr {
    seed: [u8; 32],
    word_pos_lo: u64,
    word_pos_hi: u64,
}

impl From<SimRngRepr> for SimRng {
    fn from(r: SimRngRepr) -> Self {
        let mut rng = ChaCha8Rng::from_seed(r.seed);
        rng.set_word_pos(((r.word_pos_hi as u128) << 64) | r.word_pos_lo as u128);
        SimRng(rng)
    }
}

impl From<SimRng> for SimRngRepr {
    fn from(r: SimRng) -> Self {
        let pos = r.0.get_word_pos();
        SimRngRepr {
            seed: r.0.get_seed(),
            word_pos_lo: pos as u64,
            word_pos_hi: (pos >> 64) as u64,
        }
    }
}

impl SimRng {
    pub fn new(seed: u64) -> Self {
        SimRng(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.0
    }
}
