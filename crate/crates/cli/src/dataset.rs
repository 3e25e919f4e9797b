use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bintse::scene::{
    angular_sweep_protocol, mix_scene, sample_dataset, DatasetProtocol, ManifestRow, SceneSpec, Split,
    DEFAULT_SWEEP_SEPARATIONS,
};
use clap::Args;
use rayon::prelude::*;
use serde::Serialize;
use walkdir::WalkDir;

use crate::exit::{self, CliError};
use crate::resolve::{self, HrtfCache};
use crate::{audio, HrtfDirArg};

#[derive(Debug, Clone, Args, Serialize)]
pub struct DatasetArgs {
    /// Protocol JSON. Omitted fields take their defaults.
    #[arg(long, conflicts_with = "sweep")]
    pub protocol: Option<PathBuf>,

    /// Angular sweep protocol; optional comma-separated separations in degrees.
    #[arg(long, num_args = 0..=1, default_missing_value = "")]
    pub sweep: Option<String>,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long)]
    pub out: PathBuf,

    /// Replace the utterance pool with every WAV file found under this folder.
    #[arg(long)]
    pub speech_dir: Option<PathBuf>,

    #[command(flatten)]
    pub hrtf: HrtfDirArg,

    /// Override the number of mixtures (ignored for sweeps).
    #[arg(long)]
    pub num_mixtures: Option<usize>,

    /// Override the split: train, validation or test.
    #[arg(long, value_parser = parse_split)]
    pub split: Option<Split>,

    /// Override the clip duration in seconds.
    #[arg(long)]
    pub duration: Option<f64>,

    /// Also write 16-bit PCM listening copies under `audio_pcm16/`.
    #[arg(long)]
    pub pcm16: bool,
}

fn parse_split(s: &str) -> Result<Split, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unknown split `{s}`"))
}

fn parse_separations(list: &str) -> Result<Vec<f64>, CliError> {
    if list.trim().is_empty() {
        return Ok(DEFAULT_SWEEP_SEPARATIONS.to_vec());
    }
    list.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::input(format!("bad separation `{s}`")))
        })
        .collect()
}

fn speech_pool(dir: &Path) -> Result<Vec<String>, CliError> {
    let mut pool = Vec::new();
    for entry in WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| CliError::input(format!("scanning {}: {e}", dir.display())))?;
        let path = entry.path();
        if entry.file_type().is_file() && path.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")) {
            let rel = path.strip_prefix(dir).expect("walk stays under root");
            pool.push(rel.to_string_lossy().replace('\\', "/"));
        }
    }
    if pool.is_empty() {
        return Err(CliError::input(format!("no WAV files under {}", dir.display())));
    }
    Ok(pool)
}

pub fn resolve_protocol(args: &DatasetArgs) -> Result<DatasetProtocol, CliError> {
    let mut protocol = match (&args.protocol, &args.sweep) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?
        }
        (None, Some(list)) => angular_sweep_protocol(&parse_separations(list)?)?,
        (None, None) => DatasetProtocol::default(),
    };
    if let Some(n) = args.num_mixtures {
        protocol.num_mixtures = n;
    }
    if let Some(split) = args.split {
        // The built-in name is the default split's; keep ids telling.
        if protocol.name == DatasetProtocol::default().name {
            protocol.name = serde_json::to_value(split)?.as_str().unwrap_or("dataset").to_string();
        }
        protocol.split = split;
    }
    if let Some(d) = args.duration {
        protocol.duration_s = d;
    }
    if let Some(dir) = &args.speech_dir {
        protocol.utterances = speech_pool(dir)?;
    }
    protocol.validate()?;
    Ok(protocol)
}

struct Ctx<'a> {
    args: &'a DatasetArgs,
    protocol: &'a DatasetProtocol,
    hrtfs: HrtfCache,
}

/// Renders one mixture and writes its audio. Every row of the mixture shares
/// the rendering. Missing inputs abort the run; scenes the simulator rejects
/// are recorded as skipped rows.
fn render_mixture(ctx: &Ctx, specs: Vec<SceneSpec>) -> Result<Vec<ManifestRow>, CliError> {
    let mut rows: Vec<ManifestRow> = specs.into_iter().map(|s| ManifestRow::new(ctx.protocol, s)).collect();
    let spec = &rows[0].scene;
    let hrtf = ctx.hrtfs.get(&spec.hrtf_subject)?;
    let speech = ctx.args.speech_dir.as_deref();
    let s1 = resolve::utterance(&spec.sources[0].signal, speech, spec.duration_s, spec.sample_rate)?;
    let s2 = resolve::utterance(&spec.sources[1].signal, speech, spec.duration_s, spec.sample_rate)?;
    let rendered = match mix_scene(spec, [&s1, &s2], &hrtf) {
        Ok(r) => r,
        Err(e) => {
            log::warn!("skipping {}: {e}", rows[0].mixture_id);
            for row in &mut rows {
                row.skipped = Some(e.to_string());
            }
            return Ok(rows);
        }
    };

    let out = &ctx.args.out;
    let mix_rel = format!("audio/{}_mix.wav", rows[0].mixture_id);
    audio::write_binaural(&out.join(&mix_rel), &rendered.mixture)?;
    if ctx.args.pcm16 {
        audio::write_binaural_pcm16(&out.join(format!("audio_pcm16/{}_mix.wav", rows[0].mixture_id)), &rendered.mixture)?;
    }
    for row in rows.iter_mut() {
        let target = rendered.target(row.scene.target_index);
        let target_rel = format!("audio/{}_target.wav", row.scene.scene_id);
        audio::write_binaural(&out.join(&target_rel), target)?;
        if ctx.args.pcm16 {
            audio::write_binaural_pcm16(&out.join(format!("audio_pcm16/{}_target.wav", row.scene.scene_id)), target)?;
        }
        let mut meta = rendered.metadata.clone();
        meta.scene_id = row.scene.scene_id.clone();
        row.realized = Some(meta);
        row.mixture_wav = Some(mix_rel.clone());
        row.target_wav = Some(target_rel);
    }
    Ok(rows)
}

#[derive(Serialize)]
struct Resolved<'a> {
    args: &'a DatasetArgs,
    protocol: &'a DatasetProtocol,
    total_mixtures: usize,
}

#[derive(Serialize)]
struct SkippedMixture {
    reason: String,
}

pub fn run(args: DatasetArgs) -> Result<ExitCode, CliError> {
    let protocol = resolve_protocol(&args)?;
    fs::create_dir_all(args.out.join("audio"))?;
    if args.pcm16 {
        fs::create_dir_all(args.out.join("audio_pcm16"))?;
    }
    resolve::write_resolved_config(
        &args.out,
        "dataset",
        &Resolved {
            args: &args,
            protocol: &protocol,
            total_mixtures: protocol.total_mixtures(),
        },
    )?;

    // Group consecutive rows of the same mixture so it is rendered once.
    let mut groups: Vec<Vec<SceneSpec>> = Vec::new();
    let mut unplaced = Vec::new();
    for item in sample_dataset(&protocol, args.seed)? {
        match item {
            Ok(spec) => {
                let mixture = spec.scene_id.rsplit_once("-t").map(|(m, _)| m.to_string());
                let same = groups
                    .last()
                    .and_then(|g| g[0].scene_id.rsplit_once("-t").map(|(m, _)| m.to_string()))
                    == mixture;
                match groups.last_mut() {
                    Some(g) if same => g.push(spec),
                    _ => groups.push(vec![spec]),
                }
            }
            Err(e) => {
                log::warn!("{e}");
                unplaced.push(SkippedMixture { reason: e.to_string() });
            }
        }
    }
    log::info!(
        "rendering {} mixtures ({} unplaceable) into {}",
        groups.len(),
        unplaced.len(),
        args.out.display()
    );

    let ctx = Ctx {
        args: &args,
        protocol: &protocol,
        hrtfs: HrtfCache::new(args.hrtf.hrtf_dir.clone()),
    };
    let rows: Vec<ManifestRow> = groups
        .into_par_iter()
        .map(|specs| render_mixture(&ctx, specs))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();

    resolve::write_jsonl(&args.out.join("manifest.jsonl"), &rows)?;
    if !unplaced.is_empty() {
        resolve::write_jsonl(&args.out.join("unplaced.jsonl"), &unplaced)?;
    }
    let failed = rows.iter().filter(|r| r.skipped.is_some()).count() + unplaced.len();
    log::info!("wrote {} manifest rows, {failed} skipped", rows.len());
    Ok(exit::finish(failed))
}
