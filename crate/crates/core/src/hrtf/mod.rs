//! HRTF sets: directional grids of left/right impulse responses, nearest
//! neighbour lookup, and extraction-clue spectra.
//!
//! Coordinates: azimuth counter-clockwise from the front (0° front, 90° left),
//! elevation up from the horizontal plane.

mod interchange;
pub mod model;

use std::collections::HashSet;
use std::fmt;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::dsp::ir_spectrum;
use crate::error::{Error, Result};
use crate::scalar::Real;

pub use interchange::{blob_path_for, load_hrtf_set, save_hrtf_set, HrtfFormat};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDirection", into = "RawDirection")]
pub struct Direction {
    azimuth_deg: f64,
    elevation_deg: f64,
}

#[derive(Serialize, Deserialize)]
struct RawDirection {
    azimuth_deg: f64,
    elevation_deg: f64,
}

impl TryFrom<RawDirection> for Direction {
    type Error = Error;

    fn try_from(raw: RawDirection) -> Result<Self> {
        Direction::new(raw.azimuth_deg, raw.elevation_deg)
    }
}

impl From<Direction> for RawDirection {
    fn from(d: Direction) -> Self {
        RawDirection {
            azimuth_deg: d.azimuth_deg,
            elevation_deg: d.elevation_deg,
        }
    }
}

impl Direction {
    /// Azimuth is wrapped into `[0, 360)`; elevation must lie in `[-90, 90]`.
    pub fn new(azimuth_deg: f64, elevation_deg: f64) -> Result<Self> {
        if !azimuth_deg.is_finite() || !elevation_deg.is_finite() {
            return Err(Error::InvalidInput("direction angles must be finite".into()));
        }
        if !(-90.0..=90.0).contains(&elevation_deg) {
            return Err(Error::InvalidInput(format!(
                "elevation {elevation_deg} outside [-90, 90]"
            )));
        }
        let mut az = azimuth_deg.rem_euclid(360.0);
        if az >= 360.0 {
            az = 0.0;
        }
        // Folds -0.0 into 0.0.
        Ok(Self {
            azimuth_deg: az + 0.0,
            elevation_deg: elevation_deg + 0.0,
        })
    }

    pub fn azimuth_deg(&self) -> f64 {
        self.azimuth_deg
    }

    pub fn elevation_deg(&self) -> f64 {
        self.elevation_deg
    }

    /// Unit vector: x front, y left, z up.
    pub fn unit_vector(&self) -> [f64; 3] {
        let (sa, ca) = self.azimuth_deg.to_radians().sin_cos();
        let (se, ce) = self.elevation_deg.to_radians().sin_cos();
        [ce * ca, ce * sa, se]
    }

    pub fn from_vector(v: [f64; 3]) -> Result<Self> {
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if !(norm > 0.0) {
            return Err(Error::Singularity("zero-length direction vector".into()));
        }
        let el = (v[2] / norm).clamp(-1.0, 1.0).asin().to_degrees();
        let az = v[1].atan2(v[0]).to_degrees();
        Self::new(az, el)
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(az {:.2}°, el {:.2}°)", self.azimuth_deg, self.elevation_deg)
    }
}

const TIE_TOLERANCE: f64 = 1e-12;

/// Great-circle angle between two directions in degrees, in `[0, 180]`.
///
/// Evaluated as `atan2(|a × b|, a · b)`, which equals the arccos form
/// `arccos(sin φa sin φb + cos φa cos φb cos(θa − θb))` but stays accurate for
/// nearly coincident and nearly antipodal pairs.
pub fn angular_distance(a: &Direction, b: &Direction) -> f64 {
    angle_between(&a.unit_vector(), &b.unit_vector())
}

fn angle_between(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let cross = [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ];
    let sin = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
    let cos = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    sin.atan2(cos).to_degrees().clamp(0.0, 180.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericalPos {
    pub direction: Direction,
    pub radius_m: f64,
}

impl SphericalPos {
    pub fn new(direction: Direction, radius_m: f64) -> Result<Self> {
        if !(radius_m > 0.0) || !radius_m.is_finite() {
            return Err(Error::Singularity(format!(
                "radius must be positive and finite, got {radius_m}"
            )));
        }
        Ok(Self {
            direction,
            radius_m,
        })
    }

    /// Cartesian offset from the head centre in the head frame.
    pub fn offset(&self) -> [f64; 3] {
        let u = self.direction.unit_vector();
        [u[0] * self.radius_m, u[1] * self.radius_m, u[2] * self.radius_m]
    }
}

/// Left/right head-related impulse response pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Hrir<T> {
    left: Vec<T>,
    right: Vec<T>,
    sample_rate: u32,
}

impl<T: Real> Hrir<T> {
    pub fn new(left: Vec<T>, right: Vec<T>, sample_rate: u32) -> Result<Self> {
        if left.is_empty() || right.is_empty() {
            return Err(Error::InvalidInput("HRIR channels must be non-empty".into()));
        }
        if left.len() != right.len() {
            return Err(Error::InvalidInput(format!(
                "HRIR channel lengths differ: {} vs {}",
                left.len(),
                right.len()
            )));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidInput("HRIR sample rate must be positive".into()));
        }
        Ok(Self {
            left,
            right,
            sample_rate,
        })
    }

    pub fn left(&self) -> &[T] {
        &self.left
    }

    pub fn right(&self) -> &[T] {
        &self.right
    }

    pub fn channel(&self, ch: usize) -> &[T] {
        if ch == 0 {
            &self.left
        } else {
            &self.right
        }
    }

    pub fn len(&self) -> usize {
        self.left.len()
    }

    pub fn is_empty(&self) -> bool {
        self.left.is_empty()
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HrtfEntry<T> {
    pub direction: Direction,
    pub hrir: Hrir<T>,
}

/// Measured HRIRs at one radius and sample rate. Immutable once built.
#[derive(Debug, Clone)]
pub struct HrtfSet<T> {
    subject_id: String,
    sample_rate: u32,
    radius_m: f64,
    ir_length: usize,
    entries: Vec<HrtfEntry<T>>,
    units: Vec<[f64; 3]>,
}

/// Spectra of the nearest-grid HRIR pair for a query direction.
#[derive(Debug, Clone, PartialEq)]
pub struct HrtfClue<T> {
    pub left: Vec<Complex<T>>,
    pub right: Vec<Complex<T>>,
    /// Grid direction actually used.
    pub direction: Direction,
    pub index: usize,
    pub fft_size: usize,
}

impl<T> HrtfClue<T> {
    pub fn num_bins(&self) -> usize {
        self.left.len()
    }
}

impl<T: Real> HrtfSet<T> {
    pub fn new(
        subject_id: impl Into<String>,
        sample_rate: u32,
        radius_m: f64,
        entries: Vec<HrtfEntry<T>>,
    ) -> Result<Self> {
        let first = entries
            .first()
            .ok_or_else(|| Error::Integrity("HRTF set has no entries".into()))?;
        if sample_rate == 0 {
            return Err(Error::Integrity("sample rate must be positive".into()));
        }
        if !(radius_m > 0.0) || !radius_m.is_finite() {
            return Err(Error::Integrity(format!("invalid radius {radius_m}")));
        }
        let ir_length = first.hrir.len();
        let mut seen = HashSet::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if e.hrir.len() != ir_length {
                return Err(Error::Integrity(format!(
                    "entry {i} has IR length {}, expected {ir_length}",
                    e.hrir.len()
                )));
            }
            if e.hrir.sample_rate() != sample_rate {
                return Err(Error::Integrity(format!(
                    "entry {i} has sample rate {}, expected {sample_rate}",
                    e.hrir.sample_rate()
                )));
            }
            let key = (
                e.direction.azimuth_deg.to_bits(),
                e.direction.elevation_deg.to_bits(),
            );
            if !seen.insert(key) {
                return Err(Error::Integrity(format!(
                    "duplicate direction {} at entry {i}",
                    e.direction
                )));
            }
        }
        let units = entries.iter().map(|e| e.direction.unit_vector()).collect();
        Ok(Self {
            subject_id: subject_id.into(),
            sample_rate,
            radius_m,
            ir_length,
            entries,
            units,
        })
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn radius_m(&self) -> f64 {
        self.radius_m
    }

    pub fn ir_length(&self) -> usize {
        self.ir_length
    }

    pub fn entries(&self) -> &[HrtfEntry<T>] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, index: usize) -> &HrtfEntry<T> {
        &self.entries[index]
    }

    /// Grid entry with the smallest great-circle distance to `query`. Ties,
    /// including those that differ only by rounding (within 1e-12 in cosine),
    /// go to the lowest index.
    pub fn nearest_direction(&self, query: &Direction) -> (Direction, usize) {
        let q = query.unit_vector();
        let mut best = 0;
        let mut best_cos = f64::NEG_INFINITY;
        for (i, u) in self.units.iter().enumerate() {
            // Cosine is monotone in the angle and much cheaper than atan2.
            let c = q[0] * u[0] + q[1] * u[1] + q[2] * u[2];
            if c > best_cos + TIE_TOLERANCE {
                best_cos = c;
                best = i;
            }
        }
        (self.entries[best].direction, best)
    }

    /// One-sided spectra (`fft_size / 2 + 1` bins) of the nearest HRIR pair.
    pub fn get_clue(&self, query: &Direction, fft_size: usize) -> Result<HrtfClue<T>> {
        let (direction, index) = self.nearest_direction(query);
        self.clue_at(index, fft_size).map(|c| HrtfClue { direction, ..c })
    }

    pub fn clue_at(&self, index: usize, fft_size: usize) -> Result<HrtfClue<T>> {
        let entry = &self.entries[index];
        Ok(HrtfClue {
            left: ir_spectrum(entry.hrir.left(), fft_size)?,
            right: ir_spectrum(entry.hrir.right(), fft_size)?,
            direction: entry.direction,
            index,
            fft_size,
        })
    }

    /// Largest nearest-neighbour error along azimuth and elevation separately,
    /// probed on a fine grid offset from the measurement grid. Returns
    /// `(max azimuth error, max elevation error)` in degrees, where the
    /// azimuth error is measured on the equator.
    pub fn discretization_error(&self) -> (f64, f64) {
        let mut az_err: f64 = 0.0;
        let mut el_err: f64 = 0.0;
        let steps = 720;
        for i in 0..steps {
            let az = 360.0 * i as f64 / steps as f64;
            let q = Direction::new(az, 0.0).expect("valid probe");
            let (d, _) = self.nearest_direction(&q);
            let mut diff = (d.azimuth_deg - az).rem_euclid(360.0);
            if diff > 180.0 {
                diff = 360.0 - diff;
            }
            az_err = az_err.max(diff);
        }
        for i in 0..=steps / 2 {
            let el = -90.0 + 180.0 * i as f64 / (steps / 2) as f64;
            let q = Direction::new(self.entries[0].direction.azimuth_deg, el).expect("valid probe");
            let (d, _) = self.nearest_direction(&q);
            el_err = el_err.max((d.elevation_deg - el).abs());
        }
        (az_err, el_err)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn impulse_set(dirs: &[(f64, f64)]) -> HrtfSet<f64> {
        let entries = dirs
            .iter()
            .map(|&(az, el)| HrtfEntry {
                direction: Direction::new(az, el).unwrap(),
                hrir: Hrir::new(vec![1.0, 0.0], vec![1.0, 0.0], 16_000).unwrap(),
            })
            .collect();
        HrtfSet::new("test", 16_000, 1.5, entries).unwrap()
    }

    #[test]
    fn direction_normalization() {
        let d = Direction::new(-90.0, 10.0).unwrap();
        assert_eq!(d.azimuth_deg(), 270.0);
        assert_eq!(Direction::new(720.0, 0.0).unwrap().azimuth_deg(), 0.0);
        assert!(Direction::new(0.0, 91.0).is_err());
        assert!(Direction::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn distance_basics() {
        let a = Direction::new(0.0, 0.0).unwrap();
        let b = Direction::new(90.0, 0.0).unwrap();
        assert_eq!(angular_distance(&a, &a), 0.0);
        assert!((angular_distance(&a, &b) - 90.0).abs() < 1e-12);
    }

    #[test]
    fn distance_matches_extended_precision_oracle() {
        // Reference computed with 50-digit arithmetic of
        // arccos(sin φa sin φb + cos φa cos φb cos(θa − θb)) for (30°, 20°), (75°, −10°).
        let a = Direction::new(30.0, 20.0).unwrap();
        let b = Direction::new(75.0, -10.0).unwrap();
        let reference = 53.488_995_853_453_33;
        assert!((angular_distance(&a, &b) - reference).abs() < 1e-9);
    }

    #[test]
    fn nearest_on_equatorial_grid() {
        let dirs: Vec<(f64, f64)> = (0..60).map(|i| (6.0 * i as f64, 0.0)).collect();
        let set = impulse_set(&dirs);
        let q = |az| Direction::new(az, 0.0).unwrap();
        assert_eq!(set.nearest_direction(&q(2.9)).0.azimuth_deg(), 0.0);
        assert_eq!(set.nearest_direction(&q(3.1)).0.azimuth_deg(), 6.0);
        assert_eq!(set.nearest_direction(&q(358.0)).0.azimuth_deg(), 0.0);
        let (d, i) = set.nearest_direction(&q(42.0));
        assert_eq!((d.azimuth_deg(), i), (42.0, 7));
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let set = impulse_set(&[(10.0, 0.0), (350.0, 0.0)]);
        let (_, i) = set.nearest_direction(&Direction::new(0.0, 0.0).unwrap());
        assert_eq!(i, 0);
        let set = impulse_set(&[(350.0, 0.0), (10.0, 0.0)]);
        let (_, i) = set.nearest_direction(&Direction::new(0.0, 0.0).unwrap());
        assert_eq!(i, 0);
    }

    #[test]
    fn set_integrity_rules() {
        assert!(matches!(
            HrtfSet::<f64>::new("x", 16_000, 1.0, vec![]),
            Err(Error::Integrity(_))
        ));
        let e = |az| HrtfEntry {
            direction: Direction::new(az, 0.0).unwrap(),
            hrir: Hrir::new(vec![1.0f64], vec![1.0], 16_000).unwrap(),
        };
        assert!(HrtfSet::new("x", 16_000, 1.0, vec![e(0.0)]).is_ok());
        assert!(matches!(
            HrtfSet::new("x", 16_000, 1.0, vec![e(0.0), e(360.0)]),
            Err(Error::Integrity(_))
        ));
        let long = HrtfEntry {
            direction: Direction::new(5.0, 0.0).unwrap(),
            hrir: Hrir::new(vec![1.0f64, 0.0], vec![1.0, 0.0], 16_000).unwrap(),
        };
        assert!(matches!(
            HrtfSet::new("x", 16_000, 1.0, vec![e(0.0), long]),
            Err(Error::Integrity(_))
        ));
    }

    #[test]
    fn identity_clue_is_all_ones() {
        let set = impulse_set(&[(0.0, 0.0), (90.0, 0.0)]);
        let clue = set.get_clue(&Direction::new(80.0, 5.0).unwrap(), 512).unwrap();
        assert_eq!(clue.index, 1);
        assert_eq!(clue.num_bins(), 257);
        assert_eq!(clue.left, clue.right);
        assert!(clue.left.iter().all(|v| (v - Complex::new(1.0, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn full_grid_discretization_bound() {
        let set = model::SphericalHeadModel::default()
            .build_grid(&model::GridSpec::default(), 16_000, 32)
            .unwrap();
        assert_eq!(set.len(), 60 * 61);
        let (az, el) = set.discretization_error();
        assert!((az - 3.0).abs() < 1e-9, "{az}");
        assert!((el - 1.5).abs() < 1e-9, "{el}");
    }
}
