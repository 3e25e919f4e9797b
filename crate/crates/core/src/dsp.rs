//! Signal primitives: clips, STFT/iSTFT, impulse-response spectra, fractional
//! delays and FFT convolution.
//!
//! Spectra are one-sided: an FFT of size `N` yields `N / 2 + 1` bins. The STFT
//! uses center padding of `window_length / 2` zeros on both ends so that a clip
//! of `N` samples produces `ceil(N / hop)` frames.

use std::sync::Arc;

use num_complex::Complex;
use rustfft::Fft;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct MonoClip<T> {
    samples: Vec<T>,
    sample_rate: u32,
}

impl<T: Real> MonoClip<T> {
    pub fn new(samples: Vec<T>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidInput("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn silence(len: usize, sample_rate: u32) -> Result<Self> {
        Self::new(vec![T::zero(); len], sample_rate)
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<T> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn energy(&self) -> T {
        self.samples.iter().map(|&s| s * s).sum()
    }

    pub fn rms(&self) -> T {
        if self.samples.is_empty() {
            return T::zero();
        }
        (self.energy() / T::from_usize_lossy(self.samples.len())).sqrt()
    }

    /// Cuts or zero-pads to exactly `len` samples.
    pub fn fit_to_length(&self, len: usize) -> Self {
        let mut samples = self.samples.clone();
        samples.resize(len, T::zero());
        Self {
            samples,
            sample_rate: self.sample_rate,
        }
    }

    pub fn scaled(&self, gain: T) -> Self {
        Self {
            samples: self.samples.iter().map(|&s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }
}

/// Two-channel clip; both channels share sample rate and length.
#[derive(Debug, Clone, PartialEq)]
pub struct BinauralClip<T> {
    left: MonoClip<T>,
    right: MonoClip<T>,
}

impl<T: Real> BinauralClip<T> {
    pub fn new(left: MonoClip<T>, right: MonoClip<T>) -> Result<Self> {
        if left.sample_rate != right.sample_rate {
            return Err(Error::InvalidInput(format!(
                "channel sample rates differ: {} vs {}",
                left.sample_rate, right.sample_rate
            )));
        }
        if left.len() != right.len() {
            return Err(Error::InvalidInput(format!(
                "channel lengths differ: {} vs {}",
                left.len(),
                right.len()
            )));
        }
        Ok(Self { left, right })
    }

    pub fn from_channels(left: Vec<T>, right: Vec<T>, sample_rate: u32) -> Result<Self> {
        Self::new(
            MonoClip::new(left, sample_rate)?,
            MonoClip::new(right, sample_rate)?,
        )
    }

    pub fn silence(len: usize, sample_rate: u32) -> Result<Self> {
        Self::new(
            MonoClip::silence(len, sample_rate)?,
            MonoClip::silence(len, sample_rate)?,
        )
    }

    pub fn left(&self) -> &[T] {
        self.left.samples()
    }

    pub fn right(&self) -> &[T] {
        self.right.samples()
    }

    /// Channel 0 is left, channel 1 is right.
    pub fn channel(&self, ch: usize) -> &[T] {
        match ch {
            0 => self.left(),
            1 => self.right(),
            _ => panic!("binaural clip has two channels, got index {ch}"),
        }
    }

    pub fn sample_rate(&self) -> u32 {
        self.left.sample_rate
    }

    pub fn len(&self) -> usize {
        self.left.len()
    }

    pub fn is_empty(&self) -> bool {
        self.left.is_empty()
    }

    /// Energy summed over both channels.
    pub fn energy(&self) -> T {
        self.left.energy() + self.right.energy()
    }

    pub fn scaled(&self, gain: T) -> Self {
        Self {
            left: self.left.scaled(gain),
            right: self.right.scaled(gain),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.len() != other.len() || self.sample_rate() != other.sample_rate() {
            return Err(Error::InvalidInput(
                "cannot add clips of different length or sample rate".into(),
            ));
        }
        let sum = |a: &[T], b: &[T]| a.iter().zip(b).map(|(&x, &y)| x + y).collect::<Vec<_>>();
        Self::from_channels(
            sum(self.left(), other.left()),
            sum(self.right(), other.right()),
            self.sample_rate(),
        )
    }

    pub fn swap_channels(&self) -> Self {
        Self {
            left: self.right.clone(),
            right: self.left.clone(),
        }
    }

    pub fn into_channels(self) -> (Vec<T>, Vec<T>) {
        (self.left.into_samples(), self.right.into_samples())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    /// Periodic Hann window.
    Hann,
    Rectangular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub window_length: usize,
    pub hop: usize,
    pub window: WindowKind,
}

impl Default for StftConfig {
    /// 512-point Hann window with 75% overlap.
    fn default() -> Self {
        Self {
            window_length: 512,
            hop: 128,
            window: WindowKind::Hann,
        }
    }
}

impl StftConfig {
    pub fn new(window_length: usize, hop: usize, window: WindowKind) -> Result<Self> {
        let config = Self {
            window_length,
            hop,
            window,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_length < 2 || !self.window_length.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "window length must be even and >= 2, got {}",
                self.window_length
            )));
        }
        if self.hop == 0 || self.hop > self.window_length {
            return Err(Error::Config(format!(
                "hop must lie in (0, {}], got {}",
                self.window_length, self.hop
            )));
        }
        // Center padding covers every input sample only when frames overlap by half.
        if self.hop > self.window_length / 2 {
            return Err(Error::Config(format!(
                "center-padded framing needs hop <= window/2, got hop {} for window {}",
                self.hop, self.window_length
            )));
        }
        if !self.is_cola() {
            return Err(Error::Config(format!(
                "{:?} window of length {} with hop {} violates constant overlap-add",
                self.window, self.window_length, self.hop
            )));
        }
        Ok(())
    }

    pub fn window<T: Real>(&self) -> Vec<T> {
        let n = self.window_length;
        match self.window {
            WindowKind::Rectangular => vec![T::one(); n],
            WindowKind::Hann => (0..n)
                .map(|i| {
                    let phase = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                    T::lit(0.5 - 0.5 * phase.cos())
                })
                .collect(),
        }
    }

    /// Steady-state overlap-add sums of the window, one per position within a hop.
    fn overlap_sums(&self, power: i32) -> Vec<f64> {
        let w = self.window::<f64>();
        (0..self.hop)
            .map(|offset| {
                w.iter()
                    .skip(offset)
                    .step_by(self.hop)
                    .map(|v| v.powi(power))
                    .sum()
            })
            .collect()
    }

    pub fn is_cola(&self) -> bool {
        if self.hop == 0 || self.hop > self.window_length {
            return false;
        }
        let sums = self.overlap_sums(1);
        let max = sums.iter().cloned().fold(f64::MIN, f64::max);
        let min = sums.iter().cloned().fold(f64::MAX, f64::min);
        min > 0.0 && (max - min) <= 1e-9 * max
    }

    /// Constant `Σ_m w(n - m·hop)` of a COLA window.
    pub fn cola_gain(&self) -> f64 {
        self.overlap_sums(1)[0]
    }

    /// Ratio of spectrogram energy to signal energy away from the clip edges,
    /// `Σ_m w²(n - m·hop)`.
    pub fn parseval_factor(&self) -> f64 {
        let sums = self.overlap_sums(2);
        sums.iter().sum::<f64>() / sums.len() as f64
    }

    pub fn num_bins(&self) -> usize {
        self.window_length / 2 + 1
    }

    pub fn num_frames(&self, signal_len: usize) -> usize {
        signal_len.div_ceil(self.hop)
    }
}

/// Complex STFT of a binaural clip. Storage is frame-major: bin `k` of frame
/// `l` lives at index `l * num_bins + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinauralSpectrogram<T> {
    channels: [Vec<Complex<T>>; 2],
    num_bins: usize,
    num_frames: usize,
    config: StftConfig,
    sample_rate: u32,
    signal_len: usize,
}

impl<T: Real> BinauralSpectrogram<T> {
    pub fn new(
        left: Vec<Complex<T>>,
        right: Vec<Complex<T>>,
        config: StftConfig,
        sample_rate: u32,
        signal_len: usize,
    ) -> Result<Self> {
        config.validate()?;
        let num_bins = config.num_bins();
        let num_frames = config.num_frames(signal_len);
        for (name, ch) in [("left", &left), ("right", &right)] {
            if ch.len() != num_bins * num_frames {
                return Err(Error::InvalidInput(format!(
                    "{name} channel holds {} bins, expected {num_bins}x{num_frames}",
                    ch.len()
                )));
            }
        }
        Ok(Self {
            channels: [left, right],
            num_bins,
            num_frames,
            config,
            sample_rate,
            signal_len,
        })
    }

    pub fn zeros_like(other: &Self) -> Self {
        let n = other.num_bins * other.num_frames;
        Self {
            channels: [vec![Complex::default(); n], vec![Complex::default(); n]],
            ..other.clone()
        }
    }

    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    /// Length in samples of the clip this spectrogram was computed from.
    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    pub fn channel(&self, ch: usize) -> &[Complex<T>] {
        &self.channels[ch]
    }

    pub fn channel_mut(&mut self, ch: usize) -> &mut [Complex<T>] {
        &mut self.channels[ch]
    }

    #[inline]
    pub fn get(&self, ch: usize, bin: usize, frame: usize) -> Complex<T> {
        self.channels[ch][frame * self.num_bins + bin]
    }

    #[inline]
    pub fn set(&mut self, ch: usize, bin: usize, frame: usize, value: Complex<T>) {
        self.channels[ch][frame * self.num_bins + bin] = value;
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.num_bins == other.num_bins && self.num_frames == other.num_frames
    }

    pub fn scaled(&self, gain: Complex<T>) -> Self {
        let mut out = self.clone();
        for ch in &mut out.channels {
            ch.iter_mut().for_each(|v| *v = *v * gain);
        }
        out
    }

    /// Energy of the underlying windowed frames, summed over both channels
    /// (one-sided bins weighted to account for their mirrored halves).
    pub fn energy(&self) -> T {
        let n = self.config.window_length;
        let nyquist = n / 2;
        let two = T::lit(2.0);
        let mut total = T::zero();
        for ch in &self.channels {
            for frame in ch.chunks(self.num_bins) {
                for (k, v) in frame.iter().enumerate() {
                    let w = if k == 0 || k == nyquist { T::one() } else { two };
                    total += w * v.norm_sqr();
                }
            }
        }
        total / T::from_usize_lossy(n)
    }
}

/// Forward/inverse FFT pair of a fixed size operating on real signals.
pub(crate) struct RealFft<T: Real> {
    size: usize,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
    buffer: Vec<Complex<T>>,
    scratch: Vec<Complex<T>>,
}

impl<T: Real> RealFft<T> {
    pub(crate) fn new(size: usize) -> Self {
        let (forward, inverse) = T::with_planner(|p| (p.plan_fft_forward(size), p.plan_fft_inverse(size)));
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Self {
            size,
            forward,
            inverse,
            buffer: vec![Complex::default(); size],
            scratch: vec![Complex::default(); scratch_len],
        }
    }

    pub(crate) fn size(&self) -> usize {
        self.size
    }

    pub(crate) fn num_bins(&self) -> usize {
        self.size / 2 + 1
    }

    /// One-sided spectrum of `input` zero-padded to the FFT size.
    pub(crate) fn forward(&mut self, input: &[T], out: &mut [Complex<T>]) {
        debug_assert!(input.len() <= self.size);
        for (dst, &src) in self.buffer.iter_mut().zip(input) {
            *dst = Complex::new(src, T::zero());
        }
        for dst in &mut self.buffer[input.len()..] {
            *dst = Complex::default();
        }
        self.forward
            .process_with_scratch(&mut self.buffer, &mut self.scratch);
        out.copy_from_slice(&self.buffer[..self.num_bins()]);
    }

    /// Real signal whose one-sided spectrum is `spectrum`; the imaginary parts
    /// of the DC and Nyquist bins are ignored.
    pub(crate) fn inverse(&mut self, spectrum: &[Complex<T>], out: &mut [T]) {
        let n = self.size;
        let k = self.num_bins();
        debug_assert_eq!(spectrum.len(), k);
        self.buffer[..k].copy_from_slice(spectrum);
        self.buffer[0].im = T::zero();
        if n.is_multiple_of(2) {
            self.buffer[n / 2].im = T::zero();
        }
        for i in 1..k {
            if n - i != i {
                self.buffer[n - i] = spectrum[i].conj();
            }
        }
        self.inverse
            .process_with_scratch(&mut self.buffer, &mut self.scratch);
        let scale = T::one() / T::from_usize_lossy(n);
        for (dst, src) in out.iter_mut().zip(&self.buffer) {
            *dst = src.re * scale;
        }
    }
}

fn stft_channel<T: Real>(
    samples: &[T],
    config: &StftConfig,
    window: &[T],
    fft: &mut RealFft<T>,
) -> Vec<Complex<T>> {
    let w = config.window_length;
    let frames = config.num_frames(samples.len());
    let bins = config.num_bins();
    let mut padded = vec![T::zero(); (frames - 1) * config.hop + w];
    padded[w / 2..w / 2 + samples.len()].copy_from_slice(samples);

    let mut out = vec![Complex::default(); frames * bins];
    let mut frame = vec![T::zero(); w];
    for (l, dst) in out.chunks_mut(bins).enumerate() {
        let start = l * config.hop;
        for ((f, &x), &g) in frame.iter_mut().zip(&padded[start..start + w]).zip(window) {
            *f = x * g;
        }
        fft.forward(&frame, dst);
    }
    out
}

/// Short-time Fourier transform with center padding.
pub fn stft<T: Real>(clip: &BinauralClip<T>, config: &StftConfig) -> Result<BinauralSpectrogram<T>> {
    config.validate()?;
    if clip.is_empty() {
        return Err(Error::InvalidInput("cannot transform an empty clip".into()));
    }
    let window = config.window::<T>();
    let mut fft = RealFft::new(config.window_length);
    let left = stft_channel(clip.left(), config, &window, &mut fft);
    let right = stft_channel(clip.right(), config, &window, &mut fft);
    BinauralSpectrogram::new(left, right, *config, clip.sample_rate(), clip.len())
}

fn istft_channel<T: Real>(
    bins: &[Complex<T>],
    config: &StftConfig,
    window: &[T],
    signal_len: usize,
    fft: &mut RealFft<T>,
) -> Result<Vec<T>> {
    let w = config.window_length;
    let k = config.num_bins();
    let frames = bins.len() / k;
    let padded_len = (frames - 1) * config.hop + w;
    let mut acc = vec![T::zero(); padded_len];
    let mut norm = vec![T::zero(); padded_len];
    let mut frame = vec![T::zero(); w];
    for (l, spectrum) in bins.chunks(k).enumerate() {
        fft.inverse(spectrum, &mut frame);
        let start = l * config.hop;
        for j in 0..w {
            acc[start + j] += frame[j];
            norm[start + j] += window[j];
        }
    }
    let floor = T::lit(1e-10);
    (0..signal_len)
        .map(|n| {
            let i = n + w / 2;
            if norm[i] <= floor {
                Err(Error::Config(format!(
                    "sample {n} is not covered by any analysis frame"
                )))
            } else {
                Ok(acc[i] / norm[i])
            }
        })
        .collect()
}

/// Inverse STFT by overlap-add, normalized by the per-sample window sum.
pub fn istft<T: Real>(spec: &BinauralSpectrogram<T>) -> Result<BinauralClip<T>> {
    let config = spec.config();
    config.validate()?;
    let window = config.window::<T>();
    let mut fft = RealFft::new(config.window_length);
    let left = istft_channel(spec.channel(0), config, &window, spec.signal_len, &mut fft)?;
    let right = istft_channel(spec.channel(1), config, &window, spec.signal_len, &mut fft)?;
    BinauralClip::from_channels(left, right, spec.sample_rate)
}

/// One-sided spectrum (`fft_size / 2 + 1` bins) of a zero-padded impulse response.
pub fn ir_spectrum<T: Real>(ir: &[T], fft_size: usize) -> Result<Vec<Complex<T>>> {
    if fft_size == 0 {
        return Err(Error::Config("FFT size must be positive".into()));
    }
    if ir.len() > fft_size {
        return Err(Error::Truncation {
            len: ir.len(),
            fft_size,
        });
    }
    let mut fft = RealFft::new(fft_size);
    let mut out = vec![Complex::default(); fft.num_bins()];
    fft.forward(ir, &mut out);
    Ok(out)
}

/// Real signal of length `fft_size` from a one-sided spectrum.
pub fn inverse_spectrum<T: Real>(spectrum: &[Complex<T>], fft_size: usize) -> Result<Vec<T>> {
    if fft_size == 0 || spectrum.len() != fft_size / 2 + 1 {
        return Err(Error::InvalidInput(format!(
            "spectrum of {} bins does not match FFT size {fft_size}",
            spectrum.len()
        )));
    }
    let mut fft = RealFft::new(fft_size);
    let mut out = vec![T::zero(); fft_size];
    fft.inverse(spectrum, &mut out);
    Ok(out)
}

/// Phase factors `exp(-j·2π·k·tau / fft_size)` for the one-sided bins.
pub fn fractional_delay_phase<T: Real>(tau: T, fft_size: usize) -> Result<Vec<Complex<T>>> {
    if fft_size == 0 {
        return Err(Error::Config("FFT size must be positive".into()));
    }
    if !tau.is_finite() || tau < T::zero() {
        return Err(Error::InvalidInput(format!(
            "delay must be finite and non-negative, got {tau}"
        )));
    }
    let tau = tau.f64();
    let step = -2.0 * std::f64::consts::PI * tau / fft_size as f64;
    Ok((0..fft_size / 2 + 1)
        .map(|k| {
            let (s, c) = (step * k as f64).sin_cos();
            Complex::new(T::lit(c), T::lit(s))
        })
        .collect())
}

/// Adds `gain · spectrum · exp(-j·2π·k·tau / fft_size)` into `acc`.
///
/// The phase is advanced by complex rotation and re-anchored with exact
/// trigonometry every 32 bins, keeping the error near machine precision.
pub(crate) fn accumulate_delayed<T: Real>(
    acc: &mut [Complex<T>],
    spectrum: &[Complex<T>],
    gain: T,
    tau: f64,
    fft_size: usize,
) {
    const ANCHOR: usize = 32;
    let step = -2.0 * std::f64::consts::PI * tau / fft_size as f64;
    let (s, c) = step.sin_cos();
    let rot = Complex::new(T::lit(c), T::lit(s));
    let mut phase = Complex::new(T::one(), T::zero());
    for (k, (dst, &h)) in acc.iter_mut().zip(spectrum).enumerate() {
        if k % ANCHOR == 0 {
            let (s, c) = (step * k as f64).sin_cos();
            phase = Complex::new(T::lit(c), T::lit(s));
        }
        *dst = *dst + h * phase * gain;
        phase = phase * rot;
    }
}

pub fn next_pow2(n: usize) -> usize {
    n.max(1).next_power_of_two()
}

/// Full linear convolution (`a.len() + b.len() - 1` samples) via FFT.
pub fn fft_convolve<T: Real>(a: &[T], b: &[T]) -> Vec<T> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    let mut fft = RealFft::new(next_pow2(out_len));
    let bins = fft.num_bins();
    let mut fa = vec![Complex::default(); bins];
    let mut fb = vec![Complex::default(); bins];
    fft.forward(a, &mut fa);
    fft.forward(b, &mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x = *x * *y;
    }
    let mut out = vec![T::zero(); fft.size()];
    fft.inverse(&fa, &mut out);
    out.truncate(out_len);
    out
}
