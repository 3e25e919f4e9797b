//! Evaluation metrics: binaural SI-SDR and its improvement, spectral MAE, and
//! interaural cue histograms with their peak deviations.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dsp::{fft_convolve, BinauralClip, BinauralSpectrogram};
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const SI_SDR_CAP_DB: f64 = 100.0;

/// Scale-invariant SDR of one channel, clamped to `±SI_SDR_CAP_DB`.
/// Returns `None` for a silent target.
pub fn si_sdr<T: Real>(target: &[T], estimate: &[T]) -> Option<f64> {
    let tt: f64 = target.iter().map(|v| v.f64() * v.f64()).sum();
    if tt == 0.0 {
        return None;
    }
    let te: f64 = target.iter().zip(estimate).map(|(t, e)| t.f64() * e.f64()).sum();
    let alpha = te / tt;
    let (mut signal, mut residual) = (0.0, 0.0);
    for (t, e) in target.iter().zip(estimate) {
        let s = alpha * t.f64();
        signal += s * s;
        residual += (e.f64() - s).powi(2);
    }
    let db = if residual == 0.0 {
        if signal > 0.0 {
            SI_SDR_CAP_DB
        } else {
            -SI_SDR_CAP_DB
        }
    } else if signal == 0.0 {
        -SI_SDR_CAP_DB
    } else {
        10.0 * (signal / residual).log10()
    };
    Some(db.clamp(-SI_SDR_CAP_DB, SI_SDR_CAP_DB))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinauralSiSdr {
    /// Mean over channels with a non-silent target.
    pub db: f64,
    pub per_channel: [Option<f64>; 2],
}

impl BinauralSiSdr {
    pub fn degenerate_channels(&self) -> Vec<&'static str> {
        ["left", "right"]
            .into_iter()
            .zip(self.per_channel)
            .filter(|(_, v)| v.is_none())
            .map(|(n, _)| n)
            .collect()
    }
}

fn check_lengths<T: Real>(a: &BinauralClip<T>, b: &BinauralClip<T>) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!(
            "length mismatch: {} vs {} samples",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Mean of the per-channel SI-SDRs; silent target channels are excluded.
pub fn si_sdr_binaural<T: Real>(target: &BinauralClip<T>, estimate: &BinauralClip<T>) -> Result<BinauralSiSdr> {
    check_lengths(target, estimate)?;
    let per_channel = [0, 1].map(|ch| si_sdr(target.channel(ch), estimate.channel(ch)));
    let valid: Vec<f64> = per_channel.iter().flatten().copied().collect();
    if valid.is_empty() {
        return Err(Error::Degenerate("target is silent on both channels".into()));
    }
    Ok(BinauralSiSdr {
        db: valid.iter().sum::<f64>() / valid.len() as f64,
        per_channel,
    })
}

/// Output minus input binaural SI-SDR.
pub fn si_sdr_improvement<T: Real>(
    mixture: &BinauralClip<T>,
    target: &BinauralClip<T>,
    estimate: &BinauralClip<T>,
) -> Result<f64> {
    Ok(si_sdr_binaural(target, estimate)?.db - si_sdr_binaural(target, mixture)?.db)
}

/// Best binaural SI-SDR over integer shifts of the estimate within
/// `±max_lag` samples. Diagnostic only: the reference metric is not
/// shift-tolerant.
pub fn si_sdr_shift_tolerant<T: Real>(
    target: &BinauralClip<T>,
    estimate: &BinauralClip<T>,
    max_lag: usize,
) -> Result<(f64, i64)> {
    check_lengths(target, estimate)?;
    let n = estimate.len() as i64;
    let mut best = (f64::NEG_INFINITY, 0);
    for lag in -(max_lag as i64)..=max_lag as i64 {
        let shift = |ch: usize| -> Vec<T> {
            (0..n)
                .map(|i| {
                    let j = i + lag;
                    if (0..n).contains(&j) {
                        estimate.channel(ch)[j as usize]
                    } else {
                        T::zero()
                    }
                })
                .collect()
        };
        let shifted = BinauralClip::from_channels(shift(0), shift(1), estimate.sample_rate())?;
        let v = si_sdr_binaural(target, &shifted)?.db;
        if v > best.0 {
            best = (v, lag);
        }
    }
    Ok(best)
}

/// `(1/KL) Σ_{k,ℓ} (|ỹ_L − ŷ_L| + |ỹ_R − ŷ_R|)` with complex moduli.
pub fn mae_stft<T: Real>(target: &BinauralSpectrogram<T>, estimate: &BinauralSpectrogram<T>) -> Result<f64> {
    if !target.same_shape(estimate) {
        return Err(Error::InvalidInput("spectrogram shapes differ".into()));
    }
    let cells = (target.num_bins() * target.num_frames()) as f64;
    if cells == 0.0 {
        return Err(Error::InvalidInput("empty spectrogram".into()));
    }
    let sum: f64 = (0..2)
        .map(|ch| {
            target
                .channel(ch)
                .iter()
                .zip(estimate.channel(ch))
                .map(|(a, b)| (*a - *b).norm().f64())
                .sum::<f64>()
        })
        .sum();
    Ok(sum / cells)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CueConfig {
    pub bands: usize,
    pub low_hz: f64,
    pub high_hz: f64,
    pub frame_s: f64,
    /// Fraction of a frame shared with the next one.
    pub overlap: f64,
    pub coherence_threshold: f64,
    pub itd_range_ms: f64,
    pub itd_bin_ms: f64,
    pub ild_range_db: f64,
    pub ild_bin_db: f64,
    pub min_duration_s: f64,
}

impl Default for CueConfig {
    fn default() -> Self {
        Self {
            bands: 24,
            low_hz: 80.0,
            high_hz: 7500.0,
            frame_s: 0.02,
            overlap: 0.5,
            coherence_threshold: 0.95,
            itd_range_ms: 1.0,
            itd_bin_ms: 0.025,
            ild_range_db: 25.0,
            ild_bin_db: 0.25,
            min_duration_s: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CueKind {
    /// Milliseconds, positive when the left ear leads.
    Itd,
    /// Decibels, positive when the left ear is louder.
    Ild,
}

/// Coherence-weighted histogram with bins centred on multiples of `bin_width`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueHistogram {
    pub kind: CueKind,
    pub bin_width: f64,
    pub bin_edges: Vec<f64>,
    pub weights: Vec<f64>,
    /// Number of admitted (band, frame) pairs.
    pub admitted: usize,
}

impl CueHistogram {
    fn new(kind: CueKind, range: f64, bin_width: f64) -> Self {
        let half = (range / bin_width).round() as i64;
        let bin_edges = (-half..=half + 1)
            .map(|i| (i as f64 - 0.5) * bin_width)
            .collect();
        Self {
            kind,
            bin_width,
            bin_edges,
            weights: vec![0.0; (2 * half + 1) as usize],
            admitted: 0,
        }
    }

    /// Values outside the range land in the edge bins.
    fn add(&mut self, value: f64, weight: f64) {
        let half = (self.weights.len() / 2) as i64;
        let idx = ((value / self.bin_width).round() as i64).clamp(-half, half) + half;
        self.weights[idx as usize] += weight;
        self.admitted += 1;
    }

    pub fn bin_center(&self, index: usize) -> f64 {
        (index as i64 - (self.weights.len() / 2) as i64) as f64 * self.bin_width
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.admitted == 0
    }

    /// Centre of the heaviest bin; ties go to the lowest bin.
    pub fn dominant_peak(&self) -> Option<f64> {
        if self.is_empty() {
            return None;
        }
        let mut best = 0;
        for (i, &w) in self.weights.iter().enumerate() {
            if w > self.weights[best] {
                best = i;
            }
        }
        Some(self.bin_center(best))
    }
}

fn erb_rate(f: f64) -> f64 {
    21.4 * (1.0 + 0.00437 * f).log10()
}

fn erb_rate_inv(e: f64) -> f64 {
    (10f64.powf(e / 21.4) - 1.0) / 0.00437
}

/// Centre frequencies equally spaced on the ERB-rate scale.
pub fn erb_centers(bands: usize, low_hz: f64, high_hz: f64) -> Vec<f64> {
    let (lo, hi) = (erb_rate(low_hz), erb_rate(high_hz));
    (0..bands)
        .map(|i| {
            let t = if bands > 1 { i as f64 / (bands - 1) as f64 } else { 0.0 };
            erb_rate_inv(lo + t * (hi - lo))
        })
        .collect()
}

/// Fourth-order gammatone impulse response, unit gain at the centre frequency.
fn gammatone(fc: f64, fs: f64) -> Vec<f64> {
    let erb = 24.7 * (4.37 * fc / 1000.0 + 1.0);
    let b = 2.0 * PI * 1.019 * erb;
    let len = ((10.0 / b) * fs).ceil() as usize;
    let mut ir: Vec<f64> = (0..len)
        .map(|n| {
            let t = n as f64 / fs;
            t.powi(3) * (-b * t).exp() * (2.0 * PI * fc * t).cos()
        })
        .collect();
    let (mut re, mut im) = (0.0, 0.0);
    for (n, v) in ir.iter().enumerate() {
        let ph = 2.0 * PI * fc * n as f64 / fs;
        re += v * ph.cos();
        im -= v * ph.sin();
    }
    let gain = (re * re + im * im).sqrt();
    ir.iter_mut().for_each(|v| *v /= gain);
    ir
}

/// ITD and ILD histograms over auditory bands and short frames.
pub fn cue_histograms<T: Real>(clip: &BinauralClip<T>, config: &CueConfig) -> Result<(CueHistogram, CueHistogram)> {
    let fs = clip.sample_rate() as f64;
    if (clip.len() as f64) < config.min_duration_s * fs {
        return Err(Error::InvalidInput(format!(
            "cue analysis needs at least {} s, got {:.3} s",
            config.min_duration_s,
            clip.len() as f64 / fs
        )));
    }
    let frame = (config.frame_s * fs).round() as usize;
    let hop = ((1.0 - config.overlap) * frame as f64).round().max(1.0) as usize;
    let max_lag = (config.itd_range_ms * 1e-3 * fs).round() as i64;
    let mut itd = CueHistogram::new(CueKind::Itd, config.itd_range_ms, config.itd_bin_ms);
    let mut ild = CueHistogram::new(CueKind::Ild, config.ild_range_db, config.ild_bin_db);

    let left: Vec<f64> = clip.left().iter().map(|v| v.f64()).collect();
    let right: Vec<f64> = clip.right().iter().map(|v| v.f64()).collect();
    let n = left.len();
    for fc in erb_centers(config.bands, config.low_hz, config.high_hz.min(0.49 * fs)) {
        let g = gammatone(fc, fs);
        let mut bl = fft_convolve(&left, &g);
        let mut br = fft_convolve(&right, &g);
        bl.truncate(n);
        br.truncate(n);
        let mut start = max_lag as usize;
        while start + frame + max_lag as usize <= n {
            let l = &bl[start..start + frame];
            let el: f64 = l.iter().map(|v| v * v).sum();
            let er0: f64 = br[start..start + frame].iter().map(|v| v * v).sum();
            if el > 0.0 && er0 > 0.0 {
                let ncc: Vec<f64> = (-max_lag..=max_lag)
                    .map(|lag| {
                        let s = (start as i64 + lag) as usize;
                        let r = &br[s..s + frame];
                        let er: f64 = r.iter().map(|v| v * v).sum();
                        if er == 0.0 {
                            return 0.0;
                        }
                        l.iter().zip(r).map(|(a, b)| a * b).sum::<f64>() / (el * er).sqrt()
                    })
                    .collect();
                let mut p = 0;
                for (i, &v) in ncc.iter().enumerate() {
                    if v > ncc[p] {
                        p = i;
                    }
                }
                let coherence = ncc[p];
                if coherence >= config.coherence_threshold {
                    let mut lag = p as f64 - max_lag as f64;
                    if p > 0 && p + 1 < ncc.len() {
                        let (a, b, c) = (ncc[p - 1], ncc[p], ncc[p + 1]);
                        let denom = a - 2.0 * b + c;
                        if denom < 0.0 {
                            lag += 0.5 * (a - c) / denom;
                        }
                    }
                    itd.add(lag / fs * 1e3, coherence);
                    ild.add(10.0 * (el / er0).log10(), coherence);
                }
            }
            start += hop;
        }
    }
    Ok((itd, ild))
}

/// Absolute differences between the dominant ITD (ms) and ILD (dB) peaks of
/// the estimate and the target.
pub fn cue_deviation<T: Real>(
    target: &BinauralClip<T>,
    estimate: &BinauralClip<T>,
    config: &CueConfig,
) -> Result<(f64, f64)> {
    let (ti, tl) = cue_histograms(target, config)?;
    let (ei, el) = cue_histograms(estimate, config)?;
    let peak = |h: &CueHistogram, what: &str| {
        h.dominant_peak()
            .ok_or_else(|| Error::Degenerate(format!("{what} histogram is empty")))
    };
    Ok((
        (peak(&ei, "estimate ITD")? - peak(&ti, "target ITD")?).abs(),
        (peak(&el, "estimate ILD")? - peak(&tl, "target ILD")?).abs(),
    ))
}

/// Externally computed perceptual scores, imported from a sidecar file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExternalScores {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pesq: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nisqa: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scene_id: String,
    pub method: String,
    pub si_sdr_db: Option<f64>,
    pub si_sdri_db: Option<f64>,
    pub mae_stft: Option<f64>,
    pub delta_itd_ms: Option<f64>,
    pub delta_ild_db: Option<f64>,
    pub degenerate_flags: Vec<String>,
    pub external: ExternalScores,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep_separation_deg: Option<f64>,
    /// Shift-tolerant SI-SDR; a diagnostic, not the reference metric.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostic_si_sdr_shift_tolerant_db: Option<f64>,
}

/// Evaluation settings shared by every scene of a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub stft: crate::dsp::StftConfig,
    pub cues: CueConfig,
    /// Lag range for the shift-tolerant diagnostic; `None` disables it.
    pub shift_tolerant_max_lag: Option<usize>,
}

/// Computes every metric for one (scene, method) pair. Failures of individual
/// metrics are recorded as degenerate flags rather than aborting the report.
pub fn evaluate<T: Real>(
    scene_id: &str,
    method: &str,
    mixture: &BinauralClip<T>,
    target: &BinauralClip<T>,
    estimate: &BinauralClip<T>,
    config: &EvalConfig,
) -> Result<MetricsReport> {
    check_lengths(mixture, target)?;
    check_lengths(target, estimate)?;
    let mut flags = Vec::new();
    let (si_sdr_db, si_sdri_db) = match (si_sdr_binaural(target, estimate), si_sdr_binaural(target, mixture)) {
        (Ok(out), Ok(inp)) => {
            for ch in out.degenerate_channels() {
                flags.push(format!("si_sdr: silent target {ch} channel"));
            }
            (Some(out.db), Some(out.db - inp.db))
        }
        (Err(e), _) | (_, Err(e)) => {
            flags.push(format!("si_sdr: {e}"));
            (None, None)
        }
    };
    let ts = crate::dsp::stft(target, &config.stft)?;
    let es = crate::dsp::stft(estimate, &config.stft)?;
    let mae = mae_stft(&ts, &es)?;
    let (delta_itd_ms, delta_ild_db) = match cue_deviation(target, estimate, &config.cues) {
        Ok((i, l)) => (Some(i), Some(l)),
        Err(e) => {
            flags.push(format!("cues: {e}"));
            (None, None)
        }
    };
    let shift = match config.shift_tolerant_max_lag {
        Some(lag) if si_sdr_db.is_some() => Some(si_sdr_shift_tolerant(target, estimate, lag)?.0),
        _ => None,
    };
    Ok(MetricsReport {
        scene_id: scene_id.to_string(),
        method: method.to_string(),
        si_sdr_db,
        si_sdri_db,
        mae_stft: Some(mae),
        delta_itd_ms,
        delta_ild_db,
        degenerate_flags: flags,
        external: ExternalScores::default(),
        sweep_separation_deg: None,
        diagnostic_si_sdr_shift_tolerant_db: shift,
    })
}
