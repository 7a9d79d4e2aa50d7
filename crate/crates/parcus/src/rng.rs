//! Deterministic RNG substreams.
//!
//! All randomness in a run flows from a single seed. Each component draws
//! from a named substream so that perturbing one (say, noise injection)
//! leaves the others (splits, init, shuffling) untouched.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Deterministically folds a name and index parts into a derived seed.
pub fn derive_seed(seed: u64, name: &str, parts: &[u64]) -> u64 {
    let mut acc = splitmix64(seed ^ fnv1a(name.as_bytes()));
    for &p in parts {
        acc = splitmix64(acc ^ splitmix64(p));
    }
    acc
}

/// RNG for the named substream of `seed`.
pub fn substream(seed: u64, name: &str) -> ChaCha8Rng {
    substream_indexed(seed, name, 0)
}

/// RNG for the `index`-th element of a named substream (per-epoch shuffles,
/// per-split draws, per-retrain seeds).
pub fn substream_indexed(seed: u64, name: &str, index: u64) -> ChaCha8Rng {
    let mixed = splitmix64(seed ^ fnv1a(name.as_bytes())).wrapping_add(splitmix64(index));
    ChaCha8Rng::seed_from_u64(splitmix64(mixed))
}

/// Standard normal sample via Box-Muller; `rand_distr` would pull a second
/// rand major version into the tree for one distribution.
pub fn standard_normal(rng: &mut impl Rng) -> f64 {
    loop {
        let u1: f64 = rng.gen::<f64>();
        if u1 > f64::MIN_POSITIVE {
            let u2: f64 = rng.gen::<f64>();
            return (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        }
    }
}
