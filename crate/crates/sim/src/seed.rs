//! Per-trial seed derivation.

/// Odd increment of the SplitMix64 sequence (`⌊2^64 / φ⌋`, made odd).
pub const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function: a bijection on `u64`.
pub fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trial `index`: the `(index + 1)`-th SplitMix64 output after `master`,
/// i.e. `splitmix64(master + (index + 1)·γ)` in wrapping arithmetic.
///
/// `γ` is odd, so `index ↦ master + (index + 1)·γ` is injective modulo 2^64 and the
/// mixer is a bijection; distinct indices always get distinct seeds.
pub fn derive_trial_seed(master: u64, index: u64) -> u64 {
    splitmix64(master.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}
