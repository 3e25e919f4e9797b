use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bintse::dsp::{StftConfig, WindowKind};
use bintse::metrics::{evaluate, EvalConfig, ExternalScores, MetricsReport};
use bintse::scene::ManifestRow;
use clap::Args;
use rayon::prelude::*;
use serde::Serialize;

use crate::audio;
use crate::exit::{self, CliError};
use crate::resolve;

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,

    /// Folder with one subfolder of `<scene_id>.wav` estimates per method.
    #[arg(long)]
    pub estimates: PathBuf,

    #[arg(long)]
    pub out: PathBuf,

    /// Comma-separated methods; defaults to every subfolder of `--estimates`.
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<String>,

    /// Score whatever estimates exist instead of failing on missing ones.
    #[arg(long)]
    pub partial: bool,

    /// JSON sidecar `{method: {scene_id: {"pesq": .., "nisqa": ..}}}` with
    /// externally computed quality scores.
    #[arg(long)]
    pub external: Option<PathBuf>,

    /// Also report a shift-tolerant SI-SDR searched over this many lags.
    #[arg(long)]
    pub shift_tolerant_lag: Option<usize>,

    #[arg(long, default_value_t = 512)]
    pub window_length: usize,

    #[arg(long, default_value_t = 128)]
    pub hop: usize,
}

type Sidecar = HashMap<String, HashMap<String, ExternalScores>>;

#[derive(Debug, Serialize)]
struct AggregateRow {
    method: String,
    /// `all`, or the sweep separation in degrees.
    group: String,
    scenes: usize,
    si_sdr_db: Option<f64>,
    si_sdri_db: Option<f64>,
    mae_stft: Option<f64>,
    delta_itd_ms: Option<f64>,
    delta_ild_db: Option<f64>,
    pesq: Option<f64>,
    nisqa: Option<f64>,
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values.flatten().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn aggregate_row(method: &str, group: String, reports: &[&MetricsReport]) -> AggregateRow {
    let col = |f: fn(&MetricsReport) -> Option<f64>| mean(reports.iter().map(|r| f(r)));
    AggregateRow {
        method: method.to_string(),
        group,
        scenes: reports.len(),
        si_sdr_db: col(|r| r.si_sdr_db),
        si_sdri_db: col(|r| r.si_sdri_db),
        mae_stft: col(|r| r.mae_stft),
        delta_itd_ms: col(|r| r.delta_itd_ms),
        delta_ild_db: col(|r| r.delta_ild_db),
        pesq: col(|r| r.external.pesq),
        nisqa: col(|r| r.external.nisqa),
    }
}

/// One `all` row per method followed by one row per sweep separation present
/// in the manifest, in ascending order.
fn aggregate(methods: &[String], reports: &[MetricsReport], separations: &[f64]) -> Vec<AggregateRow> {
    let mut out = Vec::new();
    for m in methods {
        let mine: Vec<&MetricsReport> = reports.iter().filter(|r| &r.method == m).collect();
        out.push(aggregate_row(m, "all".into(), &mine));
        for &sep in separations {
            let group: Vec<&MetricsReport> = mine
                .iter()
                .copied()
                .filter(|r| r.sweep_separation_deg == Some(sep))
                .collect();
            out.push(aggregate_row(m, format!("{sep}"), &group));
        }
    }
    out
}

fn discover_methods(dir: &PathBuf) -> Result<Vec<String>, CliError> {
    let mut methods = Vec::new();
    let entries = fs::read_dir(dir).map_err(|e| CliError::missing(format!("{}: {e}", dir.display())))?;
    for entry in entries {
        let entry = entry?;
        if entry.file_type()?.is_dir() {
            methods.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    methods.sort();
    if methods.is_empty() {
        return Err(CliError::missing(format!("no method folders under {}", dir.display())));
    }
    Ok(methods)
}

struct Job<'a> {
    row: &'a ManifestRow,
    method: &'a str,
    estimate: PathBuf,
}

fn score(job: &Job, root: &Path, cfg: &EvalConfig, sidecar: &Sidecar) -> Result<MetricsReport, CliError> {
    let scene_id = &job.row.scene.scene_id;
    let load = |rel: Option<&String>, what: &str| -> Result<_, CliError> {
        let rel = rel.ok_or_else(|| CliError::missing(format!("{scene_id}: manifest has no {what} path")))?;
        let path = root.join(rel);
        if !path.exists() {
            return Err(CliError::missing(format!("{scene_id}: {} not found", path.display())));
        }
        Ok(audio::read_binaural(&path)?)
    };
    let mixture = load(job.row.mixture_wav.as_ref(), "mixture")?;
    let target = load(job.row.target_wav.as_ref(), "target")?;
    let estimate = audio::read_binaural(&job.estimate)?;
    let mut report = evaluate(scene_id, job.method, &mixture, &target, &estimate, cfg)?;
    report.sweep_separation_deg = job.row.sweep_separation_deg;
    if let Some(ext) = sidecar.get(job.method).and_then(|m| m.get(scene_id)) {
        report.external = ext.clone();
    }
    Ok(report)
}

pub fn run(args: EvalArgs) -> Result<ExitCode, CliError> {
    let rows = resolve::read_manifest(&args.manifest)?;
    let root = resolve::manifest_dir(&args.manifest);
    let methods = if args.methods.is_empty() {
        discover_methods(&args.estimates)?
    } else {
        args.methods.clone()
    };
    let sidecar: Sidecar = match &args.external {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?
        }
        None => Sidecar::new(),
    };
    let cfg = EvalConfig {
        stft: StftConfig::new(args.window_length, args.hop, WindowKind::Hann)?,
        shift_tolerant_max_lag: args.shift_tolerant_lag,
        ..EvalConfig::default()
    };

    let live: Vec<&ManifestRow> = rows.iter().filter(|r| r.skipped.is_none()).collect();
    let mut jobs = Vec::new();
    let mut missing = Vec::new();
    for m in &methods {
        for row in &live {
            let estimate = args.estimates.join(m).join(format!("{}.wav", row.scene.scene_id));
            if estimate.exists() {
                jobs.push(Job {
                    row,
                    method: m,
                    estimate,
                });
            } else {
                missing.push(format!("{m}/{}", row.scene.scene_id));
            }
        }
    }
    if !missing.is_empty() {
        if !args.partial {
            return Err(CliError::missing(format!(
                "{} estimates missing (first: {}); pass --partial to score the rest",
                missing.len(),
                missing[0]
            )));
        }
        log::warn!("{} estimates missing, scoring the rest", missing.len());
    }

    fs::create_dir_all(&args.out)?;
    #[derive(Serialize)]
    struct Resolved<'a> {
        args: &'a EvalArgs,
        metrics: &'a EvalConfig,
        methods: &'a [String],
    }
    resolve::write_resolved_config(
        &args.out,
        "eval",
        &Resolved {
            args: &args,
            metrics: &cfg,
            methods: &methods,
        },
    )?;
    log::info!("scoring {} (scene, method) pairs", jobs.len());
    let results: Vec<Result<MetricsReport, CliError>> =
        jobs.par_iter().map(|j| score(j, &root, &cfg, &sidecar)).collect();

    let mut reports = Vec::with_capacity(results.len());
    let mut failed = 0;
    for (job, res) in jobs.iter().zip(results) {
        match res {
            Ok(r) => reports.push(r),
            Err(e) if e.code == exit::MISSING || e.code == exit::INTEGRITY => return Err(e),
            Err(e) => {
                log::warn!("{}/{}: {e}", job.method, job.row.scene.scene_id);
                failed += 1;
            }
        }
    }
    resolve::write_jsonl(&args.out.join("reports.jsonl"), &reports)?;

    let mut separations: Vec<f64> = live.iter().filter_map(|r| r.sweep_separation_deg).collect();
    separations.sort_by(f64::total_cmp);
    separations.dedup();
    let table = aggregate(&methods, &reports, &separations);
    let mut w = csv::Writer::from_path(args.out.join("aggregate.csv"))
        .map_err(|e| CliError::input(format!("aggregate.csv: {e}")))?;
    for row in &table {
        w.serialize(row).map_err(|e| CliError::input(format!("aggregate.csv: {e}")))?;
    }
    w.flush()?;
    log::info!("{} reports, {} aggregate rows, {failed} failed", reports.len(), table.len());
    Ok(exit::finish(failed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(method: &str, sep: Option<f64>, si: f64) -> MetricsReport {
        MetricsReport {
            scene_id: "s".into(),
            method: method.into(),
            si_sdr_db: Some(si),
            si_sdri_db: None,
            mae_stft: None,
            delta_itd_ms: None,
            delta_ild_db: None,
            degenerate_flags: vec![],
            external: ExternalScores::default(),
            sweep_separation_deg: sep,
            diagnostic_si_sdr_shift_tolerant_db: None,
        }
    }

    #[test]
    fn aggregate_has_one_row_per_method_and_group() {
        let reports = vec![
            report("a", Some(20.0), 1.0),
            report("a", Some(30.0), 3.0),
            report("b", Some(20.0), 5.0),
        ];
        let methods = vec!["a".to_string(), "b".to_string()];
        let rows = aggregate(&methods, &reports, &[20.0, 30.0]);
        assert_eq!(rows.len(), 2 * 3);
        assert_eq!(rows[0].si_sdr_db, Some(2.0));
        assert_eq!(rows[2].group, "30");
        assert_eq!(rows[5].scenes, 0);
        assert_eq!(rows[5].si_sdr_db, None);
        assert_eq!(rows[0].si_sdri_db, None);
    }
}
