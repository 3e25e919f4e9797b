//! Built-in synthetic talker: voiced syllables with formant-shaped harmonics,
//! separated by short pauses and occasional fricative noise. Good enough to
//! exercise spectral and spatial processing without a speech corpus.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dsp::MonoClip;

const TARGET_RMS: f64 = 0.05;

fn formant_gain(f: f64, formants: &[(f64, f64)]) -> f64 {
    formants
        .iter()
        .map(|&(fc, bw)| 1.0 / (1.0 + ((f - fc) / bw).powi(2)))
        .sum::<f64>()
        + 0.02
}

/// Deterministic synthetic utterance of `duration_s` seconds.
pub fn synth_speech(seed: u64, duration_s: f64, sample_rate: u32) -> MonoClip<f64> {
    let fs = sample_rate as f64;
    let n = (duration_s * fs).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0.0; n];
    let base_f0: f64 = rng.gen_range(95.0..230.0);
    let mut t = rng.gen_range(0.0..0.08);

    while t < duration_s {
        let len = rng.gen_range(0.12..0.35);
        let start = (t * fs) as usize;
        let end = (((t + len) * fs) as usize).min(n);
        if rng.gen_bool(0.2) {
            // Fricative: differenced white noise, a crude high-pass.
            let gain = rng.gen_range(0.1..0.3);
            let mut prev = 0.0;
            for (i, s) in out[start..end].iter_mut().enumerate() {
                let w: f64 = rng.gen_range(-1.0..1.0);
                let env = (PI * i as f64 / (end - start) as f64).sin();
                *s += gain * env * (w - prev);
                prev = w;
            }
        } else {
            let f0 = base_f0 * rng.gen_range(0.85..1.2);
            let glide = rng.gen_range(-0.25..0.25);
            let formants = [
                (rng.gen_range(300.0..850.0), 90.0),
                (rng.gen_range(850.0..2300.0), 120.0),
                (rng.gen_range(2300.0..3200.0), 200.0),
            ];
            let harmonics = ((4000.0 / f0) as usize).max(1);
            let amps: Vec<f64> = (1..=harmonics)
                .map(|h| formant_gain(h as f64 * f0, &formants) / (h as f64).sqrt())
                .collect();
            let phases: Vec<f64> = (0..harmonics).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
            let mut phase = 0.0;
            for i in 0..end - start {
                let frac = i as f64 / (end - start) as f64;
                phase += 2.0 * PI * f0 * (1.0 + glide * frac) / fs;
                let env = (PI * frac).sin().powi(2);
                let v: f64 = amps
                    .iter()
                    .zip(&phases)
                    .enumerate()
                    .map(|(h, (a, p))| a * ((h + 1) as f64 * phase + p).sin())
                    .sum();
                out[start + i] += env * v;
            }
        }
        t += len + rng.gen_range(0.03..0.15);
    }

    let rms = (out.iter().map(|v| v * v).sum::<f64>() / n.max(1) as f64).sqrt();
    if rms > 0.0 {
        out.iter_mut().for_each(|v| *v *= TARGET_RMS / rms);
    }
    MonoClip::new(out, sample_rate).expect("finite synthetic samples")
}

/// Resolves a `synth:<seed>` utterance id; `None` for any other id.
pub fn synthetic_utterance(id: &str, duration_s: f64, sample_rate: u32) -> Option<MonoClip<f64>> {
    let seed = id.strip_prefix("synth:")?.parse().ok()?;
    Some(synth_speech(seed, duration_s, sample_rate))
}
