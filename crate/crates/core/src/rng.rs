//! Deterministic random streams.
//!
//! Every random draw in the library is addressed by a [`Stream`]: a run seed
//! refined by a path of integer tags (iteration, sample index, trajectory...).
//! Two draws with the same address produce the same numbers regardless of the
//! order in which they are requested, which keeps batched sampling
//! schedule-independent and runs bitwise reproducible.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named purposes, used as the first tag under a run seed so that different
/// consumers never share a stream.
pub mod tag {
    pub const GRADIENT: u64 = 1;
    pub const PROBE: u64 = 2;
    pub const SELECT: u64 = 3;
    pub const TRAJECTORY: u64 = 4;
    pub const RECOVERY: u64 = 5;
    pub const INSTANCE: u64 = 6;
    pub const TOPOLOGY: u64 = 7;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Stream {
    key: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Self {
            key: splitmix64(seed),
        }
    }

    /// Sub-stream addressed by `tag`.
    pub fn child(self, tag: u64) -> Self {
        Self {
            key: splitmix64(self.key ^ splitmix64(tag.wrapping_add(0x5851_F42D_4C95_7F2D))),
        }
    }

    pub fn path(self, tags: &[u64]) -> Self {
        tags.iter().fold(self, |s, &t| s.child(t))
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.key)
    }

    pub fn key(self) -> u64 {
        self.key
    }
}
