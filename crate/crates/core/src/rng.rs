//! Seeded random number generation.
//!
//! Every stochastic operation in the crate takes an explicit `u64` seed and
//! draws from [`SimRng`], which is xoshiro256++ seeded through splitmix64
//! (`rand_xoshiro`'s `seed_from_u64`). The constants are those of the
//! reference implementations:
//!
//! * splitmix64: increment `0x9E37_79B9_7F4A_7C15`, mixers
//!   `0xBF58_476D_1CE4_E5B9` and `0x94D0_49BB_1331_11EB` with shifts 30/27/31.
//! * xoshiro256++: output `rotl(s0 + s3, 23) + s0`, state update with
//!   `t = s1 << 17` and `rotl(s3, 45)`.
//!
//! Uniform reals use the 53 high bits of one output (`rand`'s `StandardUniform`
//! for `f64`), so sequences are bit-identical across platforms.

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256PlusPlus;

/// The generator used throughout the crate.
pub type SimRng = Xoshiro256PlusPlus;

/// Creates a generator from a 64-bit seed.
pub fn seeded(seed: u64) -> SimRng {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// Derives an independent child seed, e.g. one per experiment run.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    // one splitmix64 round over the combined value
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform draw in `[0, 1)`.
pub fn uniform(rng: &mut SimRng) -> f64 {
    rng.random::<f64>()
}

/// Standard normal draw.
pub fn standard_normal(rng: &mut SimRng) -> f64 {
    rng.sample(StandardNormal)
}

/// Uniform index in `0..n`. `n` must be positive.
pub fn below(rng: &mut SimRng, n: usize) -> usize {
    rng.random_range(0..n)
}

/// Inverse-CDF draw from a probability vector.
///
/// Falls back to the last index with positive mass when rounding leaves the
/// cumulative sum short of the uniform draw.
pub fn categorical(rng: &mut SimRng, probs: &[f64]) -> usize {
    let u = uniform(rng);
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}
