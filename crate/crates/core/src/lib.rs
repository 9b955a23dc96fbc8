//! Synthetic standard 12-lead ECG generation.
//!
//! The crate trains a two-dimensional bidirectional-LSTM GAN on 400×8
//! representative beats, gates every generated beat through an automatic
//! plausibility check, assembles survivors into 10-second 12-lead records,
//! verifies them with a rule-based classifier and evaluates diversity and
//! training-set bias of the result.
//!
//! Data-parallel inner loops (batch gradients, MMD sums, SDM grids, batch
//! verification) run on rayon when the `parallel` feature is enabled and fall
//! back to plain iterators otherwise. Every reduction is performed in index
//! order, so both builds produce bit-identical results.

pub mod beat;
pub mod beatgen;
pub mod evalstats;
pub mod gan;
pub mod nn;
pub mod par;
pub mod pipeline;
pub mod plausibility;
pub mod verifier;
pub mod xml;

pub use beat::{BeatMatrix, Category, Record10s, Sex, TwelveLeadBeat};

/// Mixes a base seed with a path of indices into an independent 64-bit seed
/// (SplitMix64 finaliser applied per component).
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    let mix = |mut z: u64| {
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    };
    path.iter().fold(mix(base.wrapping_add(0x9e37_79b9_7f4a_7c15)), |acc, &p| {
        mix(acc ^ p.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_mul(0xd1b5_4a32_d192_ed03))
    })
}
