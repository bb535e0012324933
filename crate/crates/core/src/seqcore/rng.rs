use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream of random numbers is used for. The discriminant is part of
/// the stream key, so reordering variants changes every derived stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    ParamInit = 1,
    MaskRatio = 2,
    RolloutNoise = 3,
    Questions = 4,
    PromptPerturb = 5,
    Corpus = 6,
    Eval = 7,
    Puzzle = 8,
    Misc = 9,
}

/// Key of one random stream: `(purpose, rollout index, step index)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamId {
    pub purpose: Purpose,
    pub rollout: u64,
    pub step: u64,
}

impl StreamId {
    pub fn new(purpose: Purpose, rollout: u64, step: u64) -> Self {
        Self {
            purpose,
            rollout,
            step,
        }
    }
}

/// Counter-based stream derivation.
///
/// The generator for `(master_seed, stream_id)` depends on nothing else, so
/// draws are identical regardless of the order or thread in which streams
/// are opened.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    pub master_seed: u64,
}

impl RngStream {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    pub fn open(&self, id: StreamId) -> ChaCha8Rng {
        derive(self.master_seed, &[id.purpose as u64, id.rollout, id.step])
    }

    pub fn stream(&self, purpose: Purpose, rollout: u64, step: u64) -> ChaCha8Rng {
        self.open(StreamId::new(purpose, rollout, step))
    }

    /// A child seed for a sub-experiment, e.g. one cell of an ablation grid.
    pub fn child_seed(&self, tag: u64) -> u64 {
        let mut s = self.master_seed ^ 0x6a09_e667_f3bc_c908;
        s = splitmix64(&mut s) ^ tag;
        splitmix64(&mut s)
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn derive(master: u64, words: &[u64]) -> ChaCha8Rng {
    let mut state = master;
    let _ = splitmix64(&mut state);
    for &w in words {
        state ^= w.wrapping_mul(0xd6e8_feb8_6659_fd93);
        let _ = splitmix64(&mut state);
    }
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

/// Uniform draw on the open interval (0, 1).
pub(crate) fn open01(rng: &mut impl rand::RngCore) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}
