//! Seeded, splittable random streams.
//!
//! Every random draw is addressed by `(master_seed, stream_index, draw_index)`.
//! The first two select a ChaCha key, the draw index selects the ChaCha stream,
//! so draw `i` is reproducible no matter which worker produces it or in which
//! order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub stream_index: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable 64-bit tag for a label, used to derive named sub-streams.
pub fn label_tag(label: &str) -> u64 {
    // FNV-1a
    label
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
            (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
        })
}

impl SeedSpec {
    pub fn new(master_seed: u64) -> Self {
        Self {
            master_seed,
            stream_index: 0,
        }
    }

    pub fn with_stream(master_seed: u64, stream_index: u64) -> Self {
        Self {
            master_seed,
            stream_index,
        }
    }

    /// Deterministic child stream; distinct tags give unrelated keys.
    pub fn derive(&self, tag: u64) -> SeedSpec {
        SeedSpec {
            master_seed: self.master_seed,
            stream_index: splitmix64(self.stream_index ^ splitmix64(tag.wrapping_add(0x5851_F42D))),
        }
    }

    pub fn derive_label(&self, label: &str) -> SeedSpec {
        self.derive(label_tag(label))
    }

    /// Generator for the `draw_index`-th draw of this stream.
    pub fn rng(&self, draw_index: u64) -> StreamRng {
        let mut key = [0u8; 32];
        let a = splitmix64(self.master_seed);
        let b = splitmix64(a ^ self.stream_index);
        let c = splitmix64(b.wrapping_add(0x2545_F491_4F6C_DD1D));
        let d = splitmix64(c ^ self.master_seed.rotate_left(17));
        for (chunk, word) in key.chunks_exact_mut(8).zip([a, b, c, d]) {
            chunk.copy_from_slice(&word.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(draw_index);
        rng
    }
}
