//! Seeded random substreams.
//!
//! Every random draw in a run comes from one 64-bit master seed. A substream
//! is addressed by `(purpose, epoch, index)`:
//!
//! - the ChaCha8 key is 32 bytes of SplitMix64 output seeded with
//!   `master ^ purpose_tag`;
//! - the ChaCha8 stream id is `epoch << 32 | index`.
//!
//! ChaCha is counter based, so a substream can be created anywhere (any
//! thread, any order) and always yields the same sequence. This is what makes
//! the parallel deformation pass independent of the lane count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The generator type used for every substream.
pub type StreamRng = ChaCha8Rng;

/// What a substream is used for. The discriminant is mixed into the key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Init,
    Deform,
    Shuffle,
    Synthetic,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Init => 0x494e_4954,
            Purpose::Deform => 0x4445_464f,
            Purpose::Shuffle => 0x5348_5546,
            Purpose::Synthetic => 0x5359_4e54,
        }
    }
}

/// Master seed expanded into named substreams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Streams {
    master: u64,
}

impl Streams {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// Substream for `(purpose, epoch, index)`. `epoch` and `index` must fit
    /// in 32 bits each; higher bits are discarded.
    pub fn stream(&self, purpose: Purpose, epoch: u64, index: u64) -> StreamRng {
        let mut state = self.master ^ purpose.tag();
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream((epoch & 0xffff_ffff) << 32 | (index & 0xffff_ffff));
        rng
    }
}

/// SplitMix64 step (Steele, Lea & Flood).
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform real in `[lo, hi]` as `lo + (hi - lo) * u` with `u` uniform in
/// `[0, 1)`. A degenerate interval returns `lo` exactly.
pub fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    let u: f64 = rng.random();
    if hi == lo {
        lo
    } else {
        lo + (hi - lo) * u
    }
}
