//! Binaural scene simulation and HRTF-conditioned target speaker extraction
//! toolkit.
//!
//! The signal-processing core is generic over the sample type ([`Real`], i.e.
//! `f32` or `f64`); the aliases below fix it to double precision, which is what
//! the pipeline uses internally.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dsp;
pub mod error;
pub mod extract;
pub mod hrtf;
pub mod metrics;
pub mod room;
pub mod scalar;
pub mod scene;

pub use error::{Error, Result};
pub use scalar::Real;

pub type MonoClip = dsp::MonoClip<f64>;
pub type BinauralClip = dsp::BinauralClip<f64>;
pub type BinauralSpectrogram = dsp::BinauralSpectrogram<f64>;
pub type Hrir = hrtf::Hrir<f64>;
pub type HrtfSet = hrtf::HrtfSet<f64>;
pub type HrtfClue = hrtf::HrtfClue<f64>;
pub type Brir = room::Brir<f64>;
pub type RenderedScene = scene::RenderedScene<f64>;
pub type ExtractionClue = extract::ExtractionClue<f64>;
pub type ExtractionResult = extract::ExtractionResult<f64>;
pub type MvdrWeights = extract::MvdrWeights<f64>;
