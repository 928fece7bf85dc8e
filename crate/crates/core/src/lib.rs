//! Unsupervised generic event boundary detection from optical flow.
//!
//! Frames are loaded and resampled by [`frame_io`], split into overlapping
//! patches by [`grid`], and scanned by two detectors: pixel tracking
//! ([`pt`]) and flow normalization ([`fnorm`]). Raw candidates are
//! clustered by [`refine`] and scored against annotations by [`eval`].

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ensemble;
pub mod error;
pub mod eval;
pub mod fnorm;
pub mod frame;
pub mod frame_io;
pub mod grid;
pub mod kernels;
pub mod pt;
pub mod refine;
pub mod synth;

pub use error::{Error, Result};
pub use frame::{FrameSequence, LumaFrame};

/// splitmix64 finalizer over a combined pair; stable across platforms.
pub(crate) fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a
        .wrapping_add(b.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
