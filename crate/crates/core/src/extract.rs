//! HRTF-conditioned extraction baselines and an oracle upper bound.
//!
//! The spatial filters reduce each time-frequency bin of the two-ear mixture to
//! a scalar estimate `ĝ` and re-spatialize it with the clue, `ŷ = ĝ·h`. The
//! output's interaural ratio is therefore the clue's by construction.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::dsp::{istft, BinauralClip, BinauralSpectrogram};
use crate::error::{Error, Result};
use crate::hrtf::HrtfClue;
use crate::scalar::Real;

/// The direct-path HRTF pair used to condition extraction.
pub type ExtractionClue<T> = HrtfClue<T>;

pub const DEFAULT_LOADING: f64 = 1e-3;

/// Bins whose clue energy is below this fraction of the maximum are zeroed.
pub const DEAD_BIN_RATIO: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Matched,
    Mvdr,
    Oracle,
    Extern,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Matched => "matched",
            Method::Mvdr => "mvdr",
            Method::Oracle => "oracle",
            Method::Extern => "extern",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "matched" => Ok(Method::Matched),
            "mvdr" => Ok(Method::Mvdr),
            "oracle" => Ok(Method::Oracle),
            "extern" => Ok(Method::Extern),
            _ => Err(Error::InvalidInput(format!("unknown method `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Bins zeroed because the clue vanishes there.
    pub dead_bins: Vec<usize>,
    /// Bins where the loaded covariance was singular and the matched filter
    /// was used instead.
    pub fallback_bins: Vec<usize>,
    /// Relative diagonal loading, when applicable.
    pub loading: Option<f64>,
    /// Eigenvalue ratio of the loaded covariance per bin (MVDR only).
    pub condition: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ExtractionResult<T> {
    pub estimate: BinauralClip<T>,
    pub spectrogram: BinauralSpectrogram<T>,
    pub method: Method,
    pub diagnostics: Diagnostics,
}

fn check_clue<T: Real>(mix: &BinauralSpectrogram<T>, clue: &ExtractionClue<T>) -> Result<()> {
    if clue.left.len() != mix.num_bins() || clue.right.len() != mix.num_bins() {
        return Err(Error::InvalidInput(format!(
            "clue has {} bins, mixture has {}",
            clue.left.len(),
            mix.num_bins()
        )));
    }
    Ok(())
}

fn clue_energy<T: Real>(clue: &ExtractionClue<T>, k: usize) -> T {
    clue.left[k].norm_sqr() + clue.right[k].norm_sqr()
}

/// Per-bin flag for bins the clue leaves usable.
fn live_bins<T: Real>(clue: &ExtractionClue<T>) -> Vec<bool> {
    let energies: Vec<f64> = (0..clue.left.len()).map(|k| clue_energy(clue, k).f64()).collect();
    let max = energies.iter().cloned().fold(0.0, f64::max);
    energies.iter().map(|&e| max > 0.0 && e >= DEAD_BIN_RATIO * max).collect()
}

fn finish<T: Real>(
    spectrogram: BinauralSpectrogram<T>,
    method: Method,
    diagnostics: Diagnostics,
) -> Result<ExtractionResult<T>> {
    Ok(ExtractionResult {
        estimate: istft(&spectrogram)?,
        spectrogram,
        method,
        diagnostics,
    })
}

/// Applies scalar-output weights `w(k)` to every frame and re-spatializes with
/// the clue: `ŷ = (wᴴx)·h`.
fn beamform<T: Real>(
    mix: &BinauralSpectrogram<T>,
    clue: &ExtractionClue<T>,
    weights: &[Option<[Complex<T>; 2]>],
) -> BinauralSpectrogram<T> {
    let mut out = BinauralSpectrogram::zeros_like(mix);
    let k_max = mix.num_bins();
    for l in 0..mix.num_frames() {
        for (k, w) in weights.iter().enumerate() {
            let Some(w) = w else { continue };
            let i = l * k_max + k;
            let x = [mix.channel(0)[i], mix.channel(1)[i]];
            let g = w[0].conj() * x[0] + w[1].conj() * x[1];
            out.channel_mut(0)[i] = g * clue.left[k];
            out.channel_mut(1)[i] = g * clue.right[k];
        }
    }
    out
}

fn matched_weight<T: Real>(clue: &ExtractionClue<T>, k: usize) -> [Complex<T>; 2] {
    let e = clue_energy(clue, k);
    [clue.left[k] / e, clue.right[k] / e]
}

/// First-order spatial matched filter: `ĝ = hᴴx / ‖h‖²`, `ŷ = ĝ·h`.
pub fn matched_filter_extract<T: Real>(
    mix: &BinauralSpectrogram<T>,
    clue: &ExtractionClue<T>,
) -> Result<ExtractionResult<T>> {
    check_clue(mix, clue)?;
    let mut diagnostics = Diagnostics::default();
    let weights: Vec<Option<[Complex<T>; 2]>> = live_bins(clue)
        .into_iter()
        .enumerate()
        .map(|(k, live)| {
            if live {
                Some(matched_weight(clue, k))
            } else {
                diagnostics.dead_bins.push(k);
                None
            }
        })
        .collect();
    finish(beamform(mix, clue, &weights), Method::Matched, diagnostics)
}

/// MVDR weights estimated once from a mixture and reusable on other inputs.
#[derive(Debug, Clone)]
pub struct MvdrWeights<T> {
    weights: Vec<Option<[Complex<T>; 2]>>,
    clue: ExtractionClue<T>,
    diagnostics: Diagnostics,
}

/// Minimum number of frames for a usable covariance estimate.
pub const MVDR_MIN_FRAMES: usize = 8;

impl<T: Real> MvdrWeights<T> {
    /// `Φ = (1/L)Σ xxᴴ + ε·tr(Φ)/2·I`, `w = Φ⁻¹h / (hᴴΦ⁻¹h)`.
    pub fn estimate(mix: &BinauralSpectrogram<T>, clue: &ExtractionClue<T>, loading: f64) -> Result<Self> {
        check_clue(mix, clue)?;
        if !(loading >= 0.0) || !loading.is_finite() {
            return Err(Error::InvalidInput(format!("loading must be finite and >= 0, got {loading}")));
        }
        let frames = mix.num_frames();
        if frames < MVDR_MIN_FRAMES {
            return Err(Error::InvalidInput(format!(
                "MVDR needs at least {MVDR_MIN_FRAMES} frames, got {frames}"
            )));
        }
        let k_max = mix.num_bins();
        let mut diagnostics = Diagnostics {
            loading: Some(loading),
            condition: vec![f64::NAN; k_max],
            ..Diagnostics::default()
        };
        let live = live_bins(clue);
        let mut weights = Vec::with_capacity(k_max);
        for k in 0..k_max {
            if !live[k] {
                diagnostics.dead_bins.push(k);
                weights.push(None);
                continue;
            }
            // Accumulate in f64: short utterances give ill-conditioned 2x2s.
            let (mut a, mut d) = (0.0f64, 0.0f64);
            let mut b = Complex::new(0.0f64, 0.0);
            for l in 0..frames {
                let i = l * k_max + k;
                let x0 = c64(mix.channel(0)[i]);
                let x1 = c64(mix.channel(1)[i]);
                a += x0.norm_sqr();
                d += x1.norm_sqr();
                b += x0 * x1.conj();
            }
            let inv_l = 1.0 / frames as f64;
            let (a, d, b) = (a * inv_l, d * inv_l, b * inv_l);
            let delta = loading * (a + d) / 2.0;
            let (a, d) = (a + delta, d + delta);
            let det = a * d - b.norm_sqr();
            let trace = a + d;
            let disc = ((a - d).powi(2) / 4.0 + b.norm_sqr()).sqrt();
            let (lmax, lmin) = (trace / 2.0 + disc, trace / 2.0 - disc);
            diagnostics.condition[k] = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };

            let h = [c64(clue.left[k]), c64(clue.right[k])];
            let singular = !(det > 1e-14 * trace * trace) || !det.is_finite();
            let w = if singular {
                None
            } else {
                // Φ⁻¹ = [[d, -b], [-b̄, a]] / det
                let u = [
                    (h[0] * d - b * h[1]) / det,
                    (-b.conj() * h[0] + h[1] * a) / det,
                ];
                let denom = h[0].conj() * u[0] + h[1].conj() * u[1];
                (denom.norm() > 0.0 && denom.re.is_finite()).then(|| [u[0] / denom.re, u[1] / denom.re])
            };
            weights.push(Some(match w {
                Some(w) => [cplx(w[0]), cplx(w[1])],
                None => {
                    diagnostics.fallback_bins.push(k);
                    matched_weight(clue, k)
                }
            }));
        }
        Ok(Self {
            weights,
            clue: clue.clone(),
            diagnostics,
        })
    }

    /// Weight pair of bin `k`, or `None` for a dead bin.
    pub fn weight(&self, k: usize) -> Option<[Complex<T>; 2]> {
        self.weights[k]
    }

    pub fn diagnostics(&self) -> &Diagnostics {
        &self.diagnostics
    }

    pub fn apply(&self, mix: &BinauralSpectrogram<T>) -> Result<ExtractionResult<T>> {
        check_clue(mix, &self.clue)?;
        finish(beamform(mix, &self.clue, &self.weights), Method::Mvdr, self.diagnostics.clone())
    }
}

fn c64<T: Real>(z: Complex<T>) -> Complex<f64> {
    Complex::new(z.re.f64(), z.im.f64())
}

fn cplx<T: Real>(z: Complex<f64>) -> Complex<T> {
    Complex::new(T::lit(z.re), T::lit(z.im))
}

/// Diagonally loaded MVDR beamformer steered by the clue.
pub fn mvdr_extract<T: Real>(
    mix: &BinauralSpectrogram<T>,
    clue: &ExtractionClue<T>,
    loading: f64,
) -> Result<ExtractionResult<T>> {
    MvdrWeights::estimate(mix, clue, loading)?.apply(mix)
}

/// Ratio mask `|ỹ| / (|ỹ| + |x − ỹ|)` per channel and bin, applied to the
/// mixture. Requires the target spectrogram, so only usable in simulation.
pub fn oracle_mask_extract<T: Real>(
    mix: &BinauralSpectrogram<T>,
    target: &BinauralSpectrogram<T>,
) -> Result<ExtractionResult<T>> {
    if !mix.same_shape(target) {
        return Err(Error::InvalidInput("target and mixture spectrograms differ in shape".into()));
    }
    let mut out = BinauralSpectrogram::zeros_like(mix);
    for ch in 0..2 {
        let (x, y) = (mix.channel(ch), target.channel(ch));
        for (i, o) in out.channel_mut(ch).iter_mut().enumerate() {
            let t = y[i].norm();
            let r = (x[i] - y[i]).norm();
            let m = if t + r > T::zero() {
                (t / (t + r)).max(T::zero()).min(T::one())
            } else {
                T::zero()
            };
            *o = x[i] * m;
        }
    }
    finish(out, Method::Oracle, Diagnostics::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{stft, StftConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_clue(rng: &mut ChaCha8Rng, bins: usize) -> ExtractionClue<f64> {
        let mut c = || Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        ExtractionClue {
            left: (0..bins).map(|_| c()).collect(),
            right: (0..bins).map(|_| c()).collect(),
            direction: crate::hrtf::Direction::new(0.0, 0.0).unwrap(),
            index: 0,
            fft_size: 2 * (bins - 1),
        }
    }

    fn noise_spec(rng: &mut ChaCha8Rng, len: usize) -> BinauralSpectrogram<f64> {
        let l: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        stft(&BinauralClip::from_channels(l, r, 16_000).unwrap(), &StftConfig::default()).unwrap()
    }

    /// Spectrogram with `x(k,l) = h(k)·y(k,l)`.
    fn steered(clue: &ExtractionClue<f64>, y: &BinauralSpectrogram<f64>) -> BinauralSpectrogram<f64> {
        let mut out = BinauralSpectrogram::zeros_like(y);
        let k_max = y.num_bins();
        for (i, v) in y.channel(0).iter().enumerate() {
            out.channel_mut(0)[i] = clue.left[i % k_max] * v;
            out.channel_mut(1)[i] = clue.right[i % k_max] * v;
        }
        out
    }

    #[test]
    fn matched_filter_recovers_steered_source() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let clue = random_clue(&mut rng, 257);
        let y = noise_spec(&mut rng, 4000);
        let x = steered(&clue, &y);
        let out = matched_filter_extract(&x, &clue).unwrap();
        for ch in 0..2 {
            for (a, b) in out.spectrogram.channel(ch).iter().zip(x.channel(ch)) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_mixture_gives_zero_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let clue = random_clue(&mut rng, 257);
        let x = BinauralSpectrogram::zeros_like(&noise_spec(&mut rng, 2000));
        assert_eq!(matched_filter_extract(&x, &clue).unwrap().estimate.energy(), 0.0);
        let mvdr = mvdr_extract(&x, &clue, DEFAULT_LOADING).unwrap();
        assert_eq!(mvdr.estimate.energy(), 0.0);
        assert_eq!(mvdr.diagnostics.fallback_bins.len(), 257);
    }

    #[test]
    fn clue_scale_cancels() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let clue = random_clue(&mut rng, 257);
        let x = noise_spec(&mut rng, 3000);
        let c = Complex::new(-0.3, 2.1);
        let mut scaled = clue.clone();
        scaled.left.iter_mut().chain(scaled.right.iter_mut()).for_each(|v| *v *= c);
        let a = matched_filter_extract(&x, &clue).unwrap();
        let b = matched_filter_extract(&x, &scaled).unwrap();
        for ch in 0..2 {
            for (p, q) in a.estimate.channel(ch).iter().zip(b.estimate.channel(ch)) {
                assert!((p - q).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn dead_bins_are_zeroed() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut clue = random_clue(&mut rng, 257);
        clue.left[5] = Complex::new(0.0, 0.0);
        clue.right[5] = Complex::new(1e-9, 0.0);
        let x = noise_spec(&mut rng, 3000);
        let out = matched_filter_extract(&x, &clue).unwrap();
        assert_eq!(out.diagnostics.dead_bins, vec![5]);
        for l in 0..x.num_frames() {
            assert_eq!(out.spectrogram.get(0, 5, l), Complex::new(0.0, 0.0));
        }
    }

    #[test]
    fn mvdr_is_distortionless_and_preserves_cues() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let clue = random_clue(&mut rng, 257);
        let x = noise_spec(&mut rng, 8000);
        let w = MvdrWeights::estimate(&x, &clue, DEFAULT_LOADING).unwrap();
        for k in 0..257 {
            let w = w.weight(k).unwrap();
            let r = w[0].conj() * clue.left[k] + w[1].conj() * clue.right[k];
            assert!((r - Complex::new(1.0, 0.0)).norm() < 1e-9);
        }
        let out = w.apply(&x).unwrap();
        for l in 0..x.num_frames() {
            for k in 0..257 {
                let yl = out.spectrogram.get(0, k, l);
                let yr = out.spectrogram.get(1, k, l);
                assert!((yl * clue.right[k] - yr * clue.left[k]).norm() < 1e-9 * (1.0 + yl.norm()));
            }
        }
    }

    #[test]
    fn mvdr_large_loading_tends_to_matched_filter() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let clue = random_clue(&mut rng, 257);
        let x = noise_spec(&mut rng, 8000);
        let a = mvdr_extract(&x, &clue, 1e6).unwrap();
        let b = matched_filter_extract(&x, &clue).unwrap();
        let scale = b.estimate.left().iter().map(|v| v.abs()).fold(0.0, f64::max);
        for ch in 0..2 {
            for (p, q) in a.estimate.channel(ch).iter().zip(b.estimate.channel(ch)) {
                assert!((p - q).abs() < 1e-3 * scale);
            }
        }
    }

    #[test]
    fn mvdr_needs_enough_frames() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let clue = random_clue(&mut rng, 257);
        let x = noise_spec(&mut rng, 500);
        assert!(x.num_frames() < MVDR_MIN_FRAMES);
        assert!(mvdr_extract(&x, &clue, DEFAULT_LOADING).is_err());
    }

    #[test]
    fn oracle_mask_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = noise_spec(&mut rng, 3000);
        let same = oracle_mask_extract(&x, &x).unwrap();
        assert_eq!(same.spectrogram.channel(0), x.channel(0));
        let zero = BinauralSpectrogram::zeros_like(&x);
        assert_eq!(oracle_mask_extract(&x, &zero).unwrap().estimate.energy(), 0.0);
        let other = noise_spec(&mut rng, 2000);
        assert!(oracle_mask_extract(&x, &other).is_err());
    }

    #[test]
    fn method_labels_round_trip() {
        for m in [Method::Matched, Method::Mvdr, Method::Oracle, Method::Extern] {
            assert_eq!(m.label().parse::<Method>().unwrap(), m);
        }
    }
}
