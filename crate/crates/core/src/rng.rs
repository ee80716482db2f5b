//! Path-derived random streams.
//!
//! Every random draw in a run comes from a ChaCha8 stream whose key is derived
//! from `(master_seed, agent, purpose)` and whose 64-bit stream id encodes
//! `(round, epoch)`. Two different paths never share a keystream, so the order
//! in which agents execute cannot change any sampled value.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// What a stream is used for. Sampling and compression draws for the same
/// `(agent, round)` live on disjoint keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Sampling,
    Compression,
    /// Free-form streams for tests and tools outside the federated loop.
    Auxiliary,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Sampling => 0,
            Purpose::Compression => 1,
            Purpose::Auxiliary => 2,
        }
    }
}

/// Derivation path of a stream below the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamPath {
    pub agent: u32,
    pub round: u32,
    pub epoch: u32,
    pub purpose: Purpose,
}

impl StreamPath {
    pub fn sampling(agent: usize, round: usize, epoch: usize) -> Self {
        Self::new(agent, round, epoch, Purpose::Sampling)
    }

    pub fn compression(agent: usize, round: usize) -> Self {
        Self::new(agent, round, 0, Purpose::Compression)
    }

    pub fn auxiliary(id: usize) -> Self {
        Self::new(0, id, 0, Purpose::Auxiliary)
    }

    fn new(agent: usize, round: usize, epoch: usize, purpose: Purpose) -> Self {
        let narrow = |x: usize, what: &str| {
            u32::try_from(x).unwrap_or_else(|_| panic!("{what} index {x} does not fit in 32 bits"))
        };
        Self {
            agent: narrow(agent, "agent"),
            round: narrow(round, "round"),
            epoch: narrow(epoch, "epoch"),
            purpose,
        }
    }
}

/// A reproducible random stream identified by `(seed, path)`.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    path: StreamPath,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, path: StreamPath) -> Self {
        // Injective in (agent, purpose) for a fixed seed: odd multiplier, then
        // a bijective mixer for the first key word.
        let mut root = seed;
        let mut state = splitmix64(&mut root).wrapping_add(
            ((u64::from(path.agent) << 2) | path.purpose.tag()).wrapping_mul(GOLDEN | 1),
        );
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut inner = ChaCha8Rng::from_seed(key);
        inner.set_stream((u64::from(path.round) << 32) | u64::from(path.epoch));
        Self { seed, path, inner }
    }

    /// Stream for standalone use (tests, Monte-Carlo tools).
    pub fn from_seed(seed: u64) -> Self {
        Self::new(seed, StreamPath::auxiliary(0))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path(&self) -> StreamPath {
        self.path
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision, one `u64` per call.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
