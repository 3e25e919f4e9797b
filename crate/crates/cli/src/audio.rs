//! WAV input and output. The pipeline stores 32-bit float; 16-bit PCM is
//! only written as an extra listening copy.

use std::path::Path;

use anyhow::{bail, Context};
use bintse::{BinauralClip, MonoClip};

fn read_interleaved(path: &Path) -> anyhow::Result<(Vec<f64>, u16, u32)> {
    let mut reader = hound::WavReader::open(path).with_context(|| format!("opening {}", path.display()))?;
    let spec = reader.spec();
    let samples: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()?,
        hound::SampleFormat::Int => {
            let scale = (1u64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<Result<_, _>>()?
        }
    };
    Ok((samples, spec.channels, spec.sample_rate))
}

/// Reads a mono file, or the first channel of a multichannel one.
pub fn read_mono(path: &Path) -> anyhow::Result<MonoClip> {
    let (samples, channels, rate) = read_interleaved(path)?;
    let mono = samples.into_iter().step_by(channels.max(1) as usize).collect();
    Ok(MonoClip::new(mono, rate)?)
}

pub fn read_binaural(path: &Path) -> anyhow::Result<BinauralClip> {
    let (samples, channels, rate) = read_interleaved(path)?;
    if channels != 2 {
        bail!("{}: expected 2 channels, found {channels}", path.display());
    }
    let left = samples.iter().step_by(2).copied().collect();
    let right = samples.iter().skip(1).step_by(2).copied().collect();
    Ok(BinauralClip::from_channels(left, right, rate)?)
}

pub fn write_binaural(path: &Path, clip: &BinauralClip) -> anyhow::Result<()> {
    let spec = hound::WavSpec {
        channels: 2,
        sample_rate: clip.sample_rate(),
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut w = hound::WavWriter::create(path, spec).with_context(|| format!("creating {}", path.display()))?;
    for (l, r) in clip.left().iter().zip(clip.right()) {
        w.write_sample(*l as f32)?;
        w.write_sample(*r as f32)?;
    }
    w.finalize()?;
    Ok(())
}

pub fn write_binaural_pcm16(path: &Path, clip: &BinauralClip) -> anyhow::Result<()> {
    let spec = hound::WavSpec {
        channels: 2,
        sample_rate: clip.sample_rate(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).with_context(|| format!("creating {}", path.display()))?;
    let q = |v: f64| (v.clamp(-1.0, 1.0) * 32767.0).round() as i16;
    for (l, r) in clip.left().iter().zip(clip.right()) {
        w.write_sample(q(*l))?;
        w.write_sample(q(*r))?;
    }
    w.finalize()?;
    Ok(())
}
