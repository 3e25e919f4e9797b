//! Resolution of HRTF subjects, utterances and manifests from disk.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use bintse::hrtf::model::{GridSpec, SphericalHeadModel};
use bintse::hrtf::{load_hrtf_set, HrtfFormat};
use bintse::scene::{synthetic_utterance, ManifestRow};
use bintse::{HrtfSet, MonoClip};
use serde::Serialize;

use crate::audio;
use crate::exit::CliError;

pub const MODEL_SUBJECT: &str = "spherical-head";
pub const MODEL_SAMPLE_RATE: u32 = 16_000;
pub const MODEL_IR_LENGTH: usize = 128;

/// Loads HRTF sets by subject id, once per subject.
pub struct HrtfCache {
    dir: Option<PathBuf>,
    sets: Mutex<HashMap<String, Arc<HrtfSet>>>,
}

impl HrtfCache {
    pub fn new(dir: Option<PathBuf>) -> Self {
        Self {
            dir,
            sets: Mutex::new(HashMap::new()),
        }
    }

    pub fn get(&self, subject: &str) -> Result<Arc<HrtfSet>, CliError> {
        if let Some(set) = self.sets.lock().expect("cache lock").get(subject) {
            return Ok(set.clone());
        }
        let file = self.dir.as_ref().map(|d| d.join(format!("{subject}.hrtfset.json")));
        let set = match file {
            Some(path) if path.exists() => load_hrtf_set(&path, HrtfFormat::Interchange)?,
            _ if subject == MODEL_SUBJECT => {
                SphericalHeadModel::default().build_grid(&GridSpec::default(), MODEL_SAMPLE_RATE, MODEL_IR_LENGTH)?
            }
            _ => {
                return Err(CliError::input(format!(
                    "HRTF subject `{subject}` not found in {}",
                    self.dir
                        .as_ref()
                        .map_or("<no HRTF directory>".into(), |d| d.display().to_string())
                )))
            }
        };
        let set = Arc::new(set);
        self.sets
            .lock()
            .expect("cache lock")
            .insert(subject.to_string(), set.clone());
        Ok(set)
    }
}

/// `synth:<seed>` ids are generated; anything else is a WAV path relative to
/// the speech folder.
pub fn utterance(
    id: &str,
    speech_dir: Option<&Path>,
    duration_s: f64,
    sample_rate: u32,
) -> Result<MonoClip, CliError> {
    if let Some(clip) = synthetic_utterance(id, duration_s, sample_rate) {
        return Ok(clip);
    }
    let dir = speech_dir.ok_or_else(|| CliError::input(format!("utterance `{id}` needs --speech-dir")))?;
    let path = dir.join(id);
    if !path.exists() {
        return Err(CliError::input(format!("utterance {} not found", path.display())));
    }
    let clip = audio::read_mono(&path)?;
    if clip.sample_rate() != sample_rate {
        return Err(CliError::input(format!(
            "{} is {} Hz, protocol expects {sample_rate} Hz",
            path.display(),
            clip.sample_rate()
        )));
    }
    Ok(clip)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>, CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(
            serde_json::from_str(&line)
                .map_err(|e| CliError::input(format!("{} line {}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(rows)
}

pub fn manifest_dir(path: &Path) -> PathBuf {
    path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for row in rows {
        serde_json::to_writer(&mut f, row)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

/// Writes the fully resolved settings of a run next to its outputs.
pub fn write_resolved_config<T: Serialize>(out_dir: &Path, command: &str, config: &T) -> Result<(), CliError> {
    #[derive(Serialize)]
    struct Snapshot<'a, T> {
        command: &'a str,
        version: &'a str,
        config: &'a T,
    }
    let snapshot = Snapshot {
        command,
        version: env!("CARGO_PKG_VERSION"),
        config,
    };
    fs::write(
        out_dir.join("resolved_config.json"),
        serde_json::to_string_pretty(&snapshot)? + "\n",
    )?;
    Ok(())
}
