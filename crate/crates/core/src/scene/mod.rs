//! Two-speaker binaural scenes: reverberant mixtures, direct-path targets and
//! reproducible dataset protocols.

mod protocol;
mod speech;

use serde::{Deserialize, Serialize};

use crate::dsp::{fft_convolve, BinauralClip, MonoClip};
use crate::error::{Error, Result};
use crate::hrtf::{Direction, HrtfSet, SphericalPos};
use crate::room::{expand_images, required_fft_size, synthesize_brir, ListenerPose, RoomSpec};
use crate::scalar::Real;

pub use protocol::{
    angular_sweep_protocol, mixture_seed, sample_dataset, DatasetProtocol, ManifestRow, RoomRanges, Split,
    SweepSpec, DEFAULT_SWEEP_SEPARATIONS,
};
pub use speech::{synth_speech, synthetic_utterance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub pos: SphericalPos,
    /// Utterance identifier: a path relative to the speech folder, or
    /// `synth:<seed>` for the built-in synthetic talker.
    pub signal: String,
    /// A muted source contributes nothing and the SIR is ignored.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub muted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub scene_id: String,
    pub room: RoomSpec,
    pub listener: ListenerPose,
    pub sources: [SourceSpec; 2],
    /// Source 1 over source 2, on reverberant renders summed over both ears.
    pub sir_db: f64,
    /// 1 or 2.
    pub target_index: u8,
    pub duration_s: f64,
    pub sample_rate: u32,
    pub seed: u64,
    pub hrtf_subject: String,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.sir_db.is_finite() {
            return Err(Error::InvalidInput(format!("SIR must be finite, got {}", self.sir_db)));
        }
        if !(self.duration_s > 0.0) || !self.duration_s.is_finite() {
            return Err(Error::InvalidInput(format!(
                "duration must be positive, got {}",
                self.duration_s
            )));
        }
        if self.sample_rate == 0 {
            return Err(Error::InvalidInput("sample rate must be positive".into()));
        }
        if !matches!(self.target_index, 1 | 2) {
            return Err(Error::InvalidInput(format!(
                "target index must be 1 or 2, got {}",
                self.target_index
            )));
        }
        if self.sources.iter().all(|s| s.muted) {
            return Err(Error::InvalidInput("both sources are muted".into()));
        }
        self.room.validate()
    }

    pub fn num_samples(&self) -> usize {
        (self.duration_s * self.sample_rate as f64).round() as usize
    }

    pub fn target_source(&self) -> &SourceSpec {
        &self.sources[self.target_index as usize - 1]
    }

    /// Great-circle separation between the two sources in degrees.
    pub fn separation_deg(&self) -> f64 {
        crate::hrtf::angular_distance(&self.sources[0].pos.direction, &self.sources[1].pos.direction)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMetadata {
    pub scene_id: String,
    pub seed: u64,
    pub hrtf_subject: String,
    pub t60_s: Option<f64>,
    /// Measured on the scaled reverberant renders; absent in single-source mode.
    pub realized_sir_db: Option<f64>,
    pub gains: [f64; 2],
    pub positions: [SphericalPos; 2],
    /// Grid directions actually used for the targets.
    pub grid_directions: [Direction; 2],
    pub direct_path_delay_samples: [f64; 2],
    pub image_counts: [usize; 2],
}

#[derive(Debug, Clone)]
pub struct RenderedScene<T> {
    pub mixture: BinauralClip<T>,
    /// Direct-path targets with the mixing gains applied.
    pub targets: [BinauralClip<T>; 2],
    /// Scaled reverberant images whose sum is the mixture.
    pub images: [BinauralClip<T>; 2],
    pub metadata: SceneMetadata,
}

impl<T: Real> RenderedScene<T> {
    pub fn target(&self, target_index: u8) -> &BinauralClip<T> {
        &self.targets[target_index as usize - 1]
    }
}

fn convolve_to<T: Real>(dry: &[T], ir: &[T], len: usize) -> Vec<T> {
    let mut out = fft_convolve(dry, ir);
    out.resize(len, T::zero());
    out
}

fn check_signal<T: Real>(signal: &MonoClip<T>, fs: u32) -> Result<()> {
    if signal.sample_rate() != fs {
        return Err(Error::InvalidInput(format!(
            "signal sample rate {} differs from scene rate {fs}",
            signal.sample_rate()
        )));
    }
    Ok(())
}

/// Direct-path reference: the dry signal, cut or padded to `duration_s`,
/// convolved with the nearest-grid HRIR pair. No distance gain or
/// propagation delay is applied.
pub fn render_target<T: Real>(
    source: &SourceSpec,
    signal: &MonoClip<T>,
    hrtf: &HrtfSet<T>,
    duration_s: f64,
    sample_rate: u32,
) -> Result<BinauralClip<T>> {
    check_signal(signal, sample_rate)?;
    if hrtf.sample_rate() != sample_rate {
        return Err(Error::InvalidInput(format!(
            "HRTF rate {} differs from scene rate {sample_rate}",
            hrtf.sample_rate()
        )));
    }
    let n = (duration_s * sample_rate as f64).round() as usize;
    let dry = signal.fit_to_length(n);
    let (_, index) = hrtf.nearest_direction(&source.pos.direction);
    let hrir = &hrtf.entry(index).hrir;
    BinauralClip::from_channels(
        convolve_to(dry.samples(), hrir.left(), n),
        convolve_to(dry.samples(), hrir.right(), n),
        sample_rate,
    )
}

struct Reverberant<T> {
    clip: BinauralClip<T>,
    energy: f64,
    delay: f64,
    images: usize,
}

fn render_reverberant<T: Real>(
    spec: &SceneSpec,
    source: &SourceSpec,
    signal: &MonoClip<T>,
    hrtf: &HrtfSet<T>,
) -> Result<Reverberant<T>> {
    let n = spec.num_samples();
    let dry = signal.fit_to_length(n);
    let images = expand_images(&spec.room, &source.pos, &spec.listener, spec.sample_rate)?;
    let delay = images
        .iter()
        .find(|i| i.order == 0)
        .map(|i| i.delay_samples)
        .unwrap_or_default();
    let brir = synthesize_brir(&images, hrtf, required_fft_size(&images, hrtf.ir_length()))?;
    let clip = BinauralClip::from_channels(
        convolve_to(dry.samples(), &brir.left, n),
        convolve_to(dry.samples(), &brir.right, n),
        spec.sample_rate,
    )?;
    Ok(Reverberant {
        energy: clip.energy().f64(),
        clip,
        delay,
        images: images.len(),
    })
}

/// Renders the reverberant two-speaker mixture and both direct-path targets.
///
/// The SIR is realized symmetrically: source 1 is scaled by
/// `10^(sir/40)·(E2/E1)^(1/4)` and source 2 by the reciprocal, so swapping the
/// sources and negating the SIR reproduces the same mixture.
pub fn mix_scene<T: Real>(
    spec: &SceneSpec,
    signals: [&MonoClip<T>; 2],
    hrtf: &HrtfSet<T>,
) -> Result<RenderedScene<T>> {
    spec.validate()?;
    if hrtf.sample_rate() != spec.sample_rate {
        return Err(Error::InvalidInput(format!(
            "HRTF rate {} differs from scene rate {}",
            hrtf.sample_rate(),
            spec.sample_rate
        )));
    }
    let n = spec.num_samples();
    let mut renders = Vec::with_capacity(2);
    for (source, signal) in spec.sources.iter().zip(signals) {
        check_signal(signal, spec.sample_rate)?;
        if source.muted {
            renders.push(None);
            continue;
        }
        if signal.fit_to_length(n).rms() == T::zero() {
            return Err(Error::CannotRealizeSir(format!(
                "source `{}` is silent within the scene duration",
                source.signal
            )));
        }
        let r = render_reverberant(spec, source, signal, hrtf)?;
        if !(r.energy > 0.0) {
            return Err(Error::CannotRealizeSir(format!(
                "reverberant render of `{}` is silent",
                source.signal
            )));
        }
        renders.push(Some(r));
    }

    let gains = match (&renders[0], &renders[1]) {
        (Some(a), Some(b)) => {
            let ratio = (b.energy / a.energy).powf(0.25);
            let sir = 10f64.powf(spec.sir_db / 40.0);
            [sir * ratio, 1.0 / (sir * ratio)]
        }
        (Some(_), None) => [1.0, 0.0],
        (None, Some(_)) => [0.0, 1.0],
        (None, None) => unreachable!("validated above"),
    };

    let mut images = Vec::with_capacity(2);
    let mut targets = Vec::with_capacity(2);
    for s in 0..2 {
        let g = T::lit(gains[s]);
        images.push(match &renders[s] {
            Some(r) if gains[s] == 1.0 => r.clip.clone(),
            Some(r) => r.clip.scaled(g),
            None => BinauralClip::silence(n, spec.sample_rate)?,
        });
        targets.push(if spec.sources[s].muted {
            BinauralClip::silence(n, spec.sample_rate)?
        } else {
            render_target(&spec.sources[s], signals[s], hrtf, spec.duration_s, spec.sample_rate)?.scaled(g)
        });
    }
    let mixture = images[0].add(&images[1])?;

    let realized_sir_db = match (&renders[0], &renders[1]) {
        (Some(_), Some(_)) => {
            Some(10.0 * (images[0].energy().f64() / images[1].energy().f64()).log10())
        }
        _ => None,
    };
    let grid = |s: usize| hrtf.nearest_direction(&spec.sources[s].pos.direction).0;
    let metadata = SceneMetadata {
        scene_id: spec.scene_id.clone(),
        seed: spec.seed,
        hrtf_subject: hrtf.subject_id().to_string(),
        t60_s: spec.room.t60_s,
        realized_sir_db,
        gains,
        positions: [spec.sources[0].pos, spec.sources[1].pos],
        grid_directions: [grid(0), grid(1)],
        direct_path_delay_samples: [0, 1].map(|s| renders[s].as_ref().map_or(0.0, |r| r.delay)),
        image_counts: [0, 1].map(|s| renders[s].as_ref().map_or(0, |r| r.images)),
    };
    let [t1, t2]: [BinauralClip<T>; 2] = targets.try_into().expect("two targets");
    let [i1, i2]: [BinauralClip<T>; 2] = images.try_into().expect("two images");
    Ok(RenderedScene {
        mixture,
        targets: [t1, t2],
        images: [i1, i2],
        metadata,
    })
}
