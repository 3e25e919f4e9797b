use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bintse::hrtf::model::{GridSpec, SphericalHeadModel};
use bintse::hrtf::{load_hrtf_set, save_hrtf_set, HrtfFormat};
use bintse::HrtfSet;
use clap::Subcommand;

use crate::exit::CliError;

#[derive(Debug, Subcommand)]
pub enum HrtfCommand {
    /// Print grid coverage, sample rate, radius and IR length.
    Inspect { path: PathBuf },
    /// Check schema and integrity; exit 2 on format errors, 3 on integrity errors.
    Validate { path: PathBuf },
    /// Write a synthetic spherical-head set in the interchange format.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "spherical-head")]
        subject: String,
        #[arg(long, default_value_t = 6.0)]
        azimuth_step: f64,
        #[arg(long, default_value_t = 3.0)]
        elevation_step: f64,
        #[arg(long, default_value_t = -90.0, allow_hyphen_values = true)]
        elevation_min: f64,
        #[arg(long, default_value_t = 90.0)]
        elevation_max: f64,
        #[arg(long, default_value_t = 16_000)]
        sample_rate: u32,
        #[arg(long, default_value_t = 128)]
        ir_length: usize,
    },
}

fn load(path: &Path) -> Result<HrtfSet, CliError> {
    if !path.exists() {
        return Err(CliError::input(format!("{} does not exist", path.display())));
    }
    Ok(load_hrtf_set(path, HrtfFormat::from_path(path)?)?)
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

pub fn run(cmd: HrtfCommand) -> Result<ExitCode, CliError> {
    match cmd {
        HrtfCommand::Inspect { path } => {
            let set = load(&path)?;
            let (az_lo, az_hi) = range(set.entries().iter().map(|e| e.direction.azimuth_deg()));
            let (el_lo, el_hi) = range(set.entries().iter().map(|e| e.direction.elevation_deg()));
            let (az_err, el_err) = set.discretization_error();
            println!("subject: {}", set.subject_id());
            println!("entries: {}", set.len());
            println!("sample rate: {} Hz", set.sample_rate());
            println!("radius: {} m", set.radius_m());
            println!("ir length: {}", set.ir_length());
            println!("azimuth coverage: {az_lo}..{az_hi} deg");
            println!("elevation coverage: {el_lo}..{el_hi} deg");
            println!("max nearest-neighbour error: azimuth ±{az_err:.2} deg, elevation ±{el_err:.2} deg");
        }
        HrtfCommand::Validate { path } => {
            let set = load(&path)?;
            println!("ok: {} entries", set.len());
        }
        HrtfCommand::Synth {
            out,
            subject,
            azimuth_step,
            elevation_step,
            elevation_min,
            elevation_max,
            sample_rate,
            ir_length,
        } => {
            let grid = GridSpec {
                azimuth_step_deg: azimuth_step,
                elevation_step_deg: elevation_step,
                elevation_min_deg: elevation_min,
                elevation_max_deg: elevation_max,
            };
            let model = SphericalHeadModel::default();
            let set = model.build(&subject, &grid.directions()?, sample_rate, ir_length)?;
            save_hrtf_set(&set, &out)?;
            println!("wrote {} entries to {}", set.len(), out.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}
