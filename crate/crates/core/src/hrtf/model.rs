//! Analytic spherical-head HRTF model for generating synthetic sets.
//!
//! Each ear gets a Woodworth-style propagation delay around a rigid sphere, a
//! one-pole/one-zero head-shadow filter whose high-frequency gain depends on
//! the angle to the ear axis, and a weak pinna-like echo whose delay varies
//! with elevation and front/back position. The result carries realistic ITD and
//! ILD structure without needing a measured database.

use std::f64::consts::PI;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use super::{Direction, HrtfEntry, HrtfSet, Hrir};
use crate::dsp::inverse_spectrum;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub azimuth_step_deg: f64,
    pub elevation_step_deg: f64,
    pub elevation_min_deg: f64,
    pub elevation_max_deg: f64,
}

impl Default for GridSpec {
    /// 6° azimuth by 3° elevation over the whole sphere.
    fn default() -> Self {
        Self {
            azimuth_step_deg: 6.0,
            elevation_step_deg: 3.0,
            elevation_min_deg: -90.0,
            elevation_max_deg: 90.0,
        }
    }
}

impl GridSpec {
    pub fn directions(&self) -> Result<Vec<Direction>> {
        if !(self.azimuth_step_deg > 0.0) || !(self.elevation_step_deg > 0.0) {
            return Err(Error::Config("grid steps must be positive".into()));
        }
        if self.elevation_min_deg > self.elevation_max_deg {
            return Err(Error::Config("elevation range is empty".into()));
        }
        let n_az = (360.0 / self.azimuth_step_deg).round() as usize;
        let n_el = ((self.elevation_max_deg - self.elevation_min_deg) / self.elevation_step_deg)
            .round() as usize
            + 1;
        let mut out = Vec::with_capacity(n_az * n_el);
        for j in 0..n_el {
            let el = self.elevation_min_deg + self.elevation_step_deg * j as f64;
            for i in 0..n_az {
                out.push(Direction::new(self.azimuth_step_deg * i as f64, el)?);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericalHeadModel {
    pub head_radius_m: f64,
    pub speed_of_sound_mps: f64,
    /// Leading delay in samples so that every ear delay stays causal.
    pub bulk_delay_samples: f64,
    pub pinna_echo_gain: f64,
    pub measurement_radius_m: f64,
}

impl Default for SphericalHeadModel {
    fn default() -> Self {
        Self {
            head_radius_m: 0.0875,
            speed_of_sound_mps: 343.0,
            bulk_delay_samples: 16.0,
            pinna_echo_gain: 0.25,
            measurement_radius_m: 1.5,
        }
    }
}

const ALPHA_MIN: f64 = 0.1;
const THETA_MIN: f64 = 150.0 * PI / 180.0;

impl SphericalHeadModel {
    /// Delay in seconds at an ear, relative to the head centre, for a source at
    /// angle `theta` (radians) from that ear's axis.
    fn ear_delay(&self, theta: f64) -> f64 {
        let a_c = self.head_radius_m / self.speed_of_sound_mps;
        if theta < PI / 2.0 {
            -a_c * theta.cos()
        } else {
            a_c * (theta - PI / 2.0)
        }
    }

    fn shadow(&self, theta: f64, omega: f64) -> Complex<f64> {
        let alpha = (1.0 + ALPHA_MIN / 2.0) + (1.0 - ALPHA_MIN / 2.0) * (theta / THETA_MIN * PI).cos();
        let w0 = self.speed_of_sound_mps / self.head_radius_m;
        let x = omega / (2.0 * w0);
        Complex::new(1.0, alpha * x) / Complex::new(1.0, x)
    }

    /// Impulse-response pair for one direction.
    pub fn hrir(&self, direction: &Direction, sample_rate: u32, ir_length: usize) -> Result<Hrir<f64>> {
        if ir_length < 8 {
            return Err(Error::Config("model HRIRs need at least 8 taps".into()));
        }
        let fs = sample_rate as f64;
        let n = (4 * ir_length).next_power_of_two().max(512);
        let u = direction.unit_vector();
        let el = direction.elevation_deg().to_radians();
        let az = direction.azimuth_deg().to_radians();
        let pinna_delay = 2.0 + 1.5 * (1.0 - el.sin()) + 0.75 * az.cos();

        let mut channels = Vec::with_capacity(2);
        for ear_axis in [1.0, -1.0] {
            let theta = (u[1] * ear_axis).clamp(-1.0, 1.0).acos();
            let delay = self.bulk_delay_samples + self.ear_delay(theta) * fs;
            let spectrum: Vec<Complex<f64>> = (0..n / 2 + 1)
                .map(|k| {
                    let omega = 2.0 * PI * k as f64 * fs / n as f64;
                    let bin = 2.0 * PI * k as f64 / n as f64;
                    let direct = Complex::from_polar(1.0, -bin * delay);
                    let echo = Complex::from_polar(self.pinna_echo_gain, -bin * (delay + pinna_delay));
                    self.shadow(theta, omega) * (direct + echo)
                })
                .collect();
            let mut ir = inverse_spectrum(&spectrum, n)?;
            ir.truncate(ir_length);
            let fade = (ir_length / 8).max(2);
            for i in 0..fade {
                let g = 0.5 + 0.5 * (PI * (i as f64 + 1.0) / fade as f64).cos();
                ir[ir_length - fade + i] *= g;
            }
            channels.push(ir);
        }
        let right = channels.pop().expect("two channels");
        let left = channels.pop().expect("two channels");
        Hrir::new(left, right, sample_rate)
    }

    pub fn build(
        &self,
        subject_id: &str,
        directions: &[Direction],
        sample_rate: u32,
        ir_length: usize,
    ) -> Result<HrtfSet<f64>> {
        let entries = directions
            .iter()
            .map(|d| {
                Ok(HrtfEntry {
                    direction: *d,
                    hrir: self.hrir(d, sample_rate, ir_length)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        HrtfSet::new(subject_id, sample_rate, self.measurement_radius_m, entries)
    }

    pub fn build_grid(&self, grid: &GridSpec, sample_rate: u32, ir_length: usize) -> Result<HrtfSet<f64>> {
        self.build("spherical-head", &grid.directions()?, sample_rate, ir_length)
    }
}
