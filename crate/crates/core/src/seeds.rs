//! Named sub-seeds derived from one user-facing seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const INIT: &str = "init";
pub const SAMPLING: &str = "sampling";
pub const SHUFFLE: &str = "shuffle";
pub const SPLIT: &str = "split";

/// Mixes `name` into `seed` (FNV-1a followed by a SplitMix64 finalizer).
pub fn derive(seed: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix(seed ^ h)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn rng(seed: u64, name: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, name))
}

/// Per-epoch generator: the stream for `name` is re-derived from `seed + epoch`.
pub fn epoch_rng(seed: u64, epoch: usize, name: &str) -> ChaCha8Rng {
    rng(seed.wrapping_add(epoch as u64), name)
}
