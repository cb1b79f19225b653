//! Seed plumbing.
//!
//! Every random draw in the crate comes from a [`Stream`] opened on an explicit
//! 64-bit seed. Sub-seeds are derived by hashing `(seed, index)`, so the value a
//! consumer sees depends only on its own seed, never on how many draws other
//! consumers made before it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Scalar;

pub type Stream = ChaCha8Rng;

/// Opens the stream for `seed`.
pub fn stream(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent child seed (splitmix64 finalizer over the pair).
pub fn child(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed keyed by a label, for named sub-streams ("train-data", "critic-init", ...).
pub fn labeled(seed: u64, label: &str) -> u64 {
    // FNV-1a over the label bytes.
    let h = label.bytes().fold(0xCBF2_9CE4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    });
    child(seed, h)
}

/// Uniform draw on `[0, 1)` converted to `T`; the underlying bits are an `f64`
/// so `f32` and `f64` runs consume the stream identically.
#[inline]
pub fn unit<T: Scalar>(rng: &mut Stream) -> T {
    T::lit(rng.random::<f64>())
}

/// Uniform draw on `[lo, hi)`.
#[inline]
pub fn uniform<T: Scalar>(rng: &mut Stream, lo: T, hi: T) -> T {
    lo + (hi - lo) * unit::<T>(rng)
}

/// Fair random sign.
#[inline]
pub fn sign<T: Scalar>(rng: &mut Stream) -> T {
    if rng.random::<bool>() {
        T::one()
    } else {
        -T::one()
    }
}

/// Fisher-Yates permutation of `0..n`.
pub fn permutation(rng: &mut Stream, n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    idx
}
