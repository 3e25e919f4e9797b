use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};

use bintse::dsp::{stft, StftConfig, WindowKind};
use bintse::extract::{
    matched_filter_extract, mvdr_extract, oracle_mask_extract, Diagnostics, Method, DEFAULT_LOADING,
};
use bintse::hrtf::save_hrtf_set;
use bintse::scene::ManifestRow;
use bintse::{BinauralClip, HrtfSet};
use clap::Args;
use rayon::prelude::*;
use serde::Serialize;

use crate::exit::{self, CliError};
use crate::resolve::{self, HrtfCache};
use crate::{audio, HrtfDirArg};

#[derive(Debug, Clone, Args, Serialize)]
pub struct ExtractArgs {
    #[arg(long)]
    pub manifest: PathBuf,

    /// matched, mvdr, oracle or extern.
    #[arg(long, value_parser = parse_method)]
    pub method: Method,

    /// Estimates go to `<out>/<method>/<scene_id>.wav`.
    #[arg(long)]
    pub out: PathBuf,

    /// Executable for `--method extern`, called as
    /// `<plugin> --mixture <wav> --clue <hrtfset.json> --out <wav>`.
    #[arg(long, required_if_eq("method", "extern"))]
    pub plugin: Option<PathBuf>,

    /// Diagonal loading for MVDR, relative to half the covariance trace.
    #[arg(long, default_value_t = DEFAULT_LOADING)]
    pub loading: f64,

    #[arg(long, default_value_t = 512)]
    pub window_length: usize,

    #[arg(long, default_value_t = 128)]
    pub hop: usize,

    #[command(flatten)]
    pub hrtf: HrtfDirArg,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: bintse::Error| e.to_string())
}

#[derive(Serialize)]
struct DiagnosticsFile<'a> {
    scene_id: &'a str,
    method: &'static str,
    clue_direction: [f64; 2],
    clue_index: usize,
    #[serde(flatten)]
    diagnostics: &'a Diagnostics,
}

struct Ctx<'a> {
    args: &'a ExtractArgs,
    stft: StftConfig,
    root: PathBuf,
    method_dir: PathBuf,
    hrtfs: HrtfCache,
}

fn artifact(root: &Path, rel: Option<&String>, what: &str, scene: &str) -> Result<PathBuf, CliError> {
    let rel = rel.ok_or_else(|| CliError::missing(format!("{scene}: manifest has no {what} path")))?;
    let path = root.join(rel);
    if !path.exists() {
        return Err(CliError::missing(format!("{scene}: {} not found", path.display())));
    }
    Ok(path)
}

fn run_plugin(ctx: &Ctx, row: &ManifestRow, mix_path: &Path, hrtf: &HrtfSet, index: usize) -> Result<BinauralClip, CliError> {
    let plugin = ctx.args.plugin.as_ref().expect("clap requires --plugin for extern");
    let scene_id = &row.scene.scene_id;
    let clue_dir = ctx.method_dir.join("clues");
    fs::create_dir_all(&clue_dir)?;
    let clue_path = clue_dir.join(format!("{scene_id}.hrtfset.json"));
    let single = HrtfSet::new(
        hrtf.subject_id(),
        hrtf.sample_rate(),
        hrtf.radius_m(),
        vec![hrtf.entry(index).clone()],
    )?;
    save_hrtf_set(&single, &clue_path)?;
    let out_path = ctx.method_dir.join(format!("{scene_id}.wav"));
    let status = Command::new(plugin)
        .arg("--mixture")
        .arg(mix_path)
        .arg("--clue")
        .arg(&clue_path)
        .arg("--out")
        .arg(&out_path)
        .status()
        .map_err(|e| CliError::input(format!("running {}: {e}", plugin.display())))?;
    if !status.success() {
        return Err(CliError::input(format!("{scene_id}: plugin exited with {status}")));
    }
    Ok(audio::read_binaural(&out_path)?)
}

fn extract_row(ctx: &Ctx, row: &ManifestRow) -> Result<(), CliError> {
    let scene = &row.scene;
    let mix_path = artifact(&ctx.root, row.mixture_wav.as_ref(), "mixture", &scene.scene_id)?;
    let mixture = audio::read_binaural(&mix_path)?;
    let hrtf = ctx.hrtfs.get(&scene.hrtf_subject)?;
    let clue = hrtf.get_clue(&scene.target_source().pos.direction, ctx.stft.window_length)?;

    let (estimate, diagnostics) = match ctx.args.method {
        Method::Extern => (run_plugin(ctx, row, &mix_path, &hrtf, clue.index)?, Diagnostics::default()),
        method => {
            let mix = stft(&mixture, &ctx.stft)?;
            let result = match method {
                Method::Matched => matched_filter_extract(&mix, &clue)?,
                Method::Mvdr => mvdr_extract(&mix, &clue, ctx.args.loading)?,
                _ => {
                    let target_path = artifact(&ctx.root, row.target_wav.as_ref(), "target", &scene.scene_id)?;
                    let target = stft(&audio::read_binaural(&target_path)?, &ctx.stft)?;
                    oracle_mask_extract(&mix, &target)?
                }
            };
            (result.estimate, result.diagnostics)
        }
    };
    if ctx.args.method != Method::Extern {
        audio::write_binaural(&ctx.method_dir.join(format!("{}.wav", scene.scene_id)), &estimate)?;
    }
    let diag = DiagnosticsFile {
        scene_id: &scene.scene_id,
        method: ctx.args.method.label(),
        clue_direction: [clue.direction.azimuth_deg(), clue.direction.elevation_deg()],
        clue_index: clue.index,
        diagnostics: &diagnostics,
    };
    fs::write(
        ctx.method_dir.join(format!("{}.diag.json", scene.scene_id)),
        serde_json::to_string(&diag)? + "\n",
    )?;
    Ok(())
}

pub fn run(args: ExtractArgs) -> Result<ExitCode, CliError> {
    let rows = resolve::read_manifest(&args.manifest)?;
    let method_dir = args.out.join(args.method.label());
    fs::create_dir_all(&method_dir)?;
    let ctx = Ctx {
        args: &args,
        stft: StftConfig::new(args.window_length, args.hop, WindowKind::Hann)?,
        root: resolve::manifest_dir(&args.manifest),
        method_dir: method_dir.clone(),
        hrtfs: HrtfCache::new(args.hrtf.hrtf_dir.clone()),
    };
    resolve::write_resolved_config(&method_dir, "extract", &args)?;

    let live: Vec<&ManifestRow> = rows.iter().filter(|r| r.skipped.is_none()).collect();
    log::info!("extracting {} scenes with {}", live.len(), args.method.label());
    let results: Vec<Result<(), CliError>> = live.par_iter().map(|row| extract_row(&ctx, row)).collect();

    let mut failed = 0;
    for (row, res) in live.iter().zip(results) {
        if let Err(e) = res {
            // Missing inputs and integrity problems are not per-scene noise.
            if e.code == exit::MISSING || e.code == exit::INTEGRITY {
                return Err(e);
            }
            log::warn!("{}: {e}", row.scene.scene_id);
            failed += 1;
        }
    }
    log::info!("{} estimates written, {failed} failed", live.len() - failed);
    Ok(exit::finish(failed))
}
