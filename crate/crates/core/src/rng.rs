//! Counter-based random streams keyed by `(master seed, path, component)`.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Component index of the Brownian driver.
pub const BROWNIAN: u8 = 0;
/// Component index of the pure-jump driver.
pub const JUMP: u8 = 1;

/// Words reserved for one time step; draws never spill into the next block.
pub const STEP_BLOCK: u128 = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamId {
    pub path: u64,
    pub component: u8,
}

/// A reproducible stream. Equal `(master_seed, stream_id, counter)` always
/// yields the same next draw; distinct stream ids are independent ChaCha
/// streams under the same key.
#[derive(Debug, Clone)]
pub struct RngStream {
    master_seed: u64,
    id: StreamId,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, path: u64, component: u8) -> Self {
        assert!(path < (1 << 56), "path index exceeds the stream space");
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream((path << 8) | component as u64);
        RngStream { master_seed, id: StreamId { path, component }, rng }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn id(&self) -> StreamId {
        self.id
    }

    /// Current position in 32-bit words.
    pub fn counter(&self) -> u128 {
        self.rng.get_word_pos()
    }

    pub fn set_counter(&mut self, words: u128) {
        self.rng.set_word_pos(words);
    }

    /// Positions the stream at the start of the block owned by `step`.
    pub fn seek_step(&mut self, step: u64) {
        self.rng.set_word_pos(step as u128 * STEP_BLOCK);
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on the open interval `(0, 1)` from the top 53 bits.
    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal from one uniform pair: `√(2W) sin V`, `W = −ln u₁`,
    /// `V = π(u₂ − ½)`.
    pub fn normal(&mut self) -> f64 {
        let (w, v) = self.exp_angle();
        (2.0 * w).sqrt() * v.sin()
    }

    /// The primitive pair `(W, V)` with `W ~ Exp(1)`, `V ~ U(−π/2, π/2)`.
    pub fn exp_angle(&mut self) -> (f64, f64) {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-u1.ln(), std::f64::consts::PI * (u2 - 0.5))
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}
