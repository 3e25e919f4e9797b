//! Shoebox image-source expansion and BRIR synthesis.
//!
//! A BRIR is the sum over image sources of the nearest-grid HRIR pair scaled
//! by the image gain and delayed by the (fractional) propagation delay. The
//! same gain and delay apply to both ears; interaural differences come from the
//! HRIRs alone. Delays are applied exactly as phase ramps in the frequency
//! domain.

use std::collections::HashMap;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::dsp::{accumulate_delayed, next_pow2, RealFft};
use crate::error::{Error, Result};
use crate::hrtf::{Direction, HrtfSet, SphericalPos};
use crate::scalar::Real;

pub const DEFAULT_SPEED_OF_SOUND_MPS: f64 = 343.0;

/// Sabine constant in s/m.
const SABINE: f64 = 0.161;

fn default_speed_of_sound() -> f64 {
    DEFAULT_SPEED_OF_SOUND_MPS
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    pub dimensions_m: [f64; 3],
    /// Reverberation time; `None` marks an anechoic room.
    pub t60_s: Option<f64>,
    pub max_order: u32,
    #[serde(default = "default_speed_of_sound")]
    pub speed_of_sound_mps: f64,
}

impl RoomSpec {
    pub fn new(dimensions_m: [f64; 3], t60_s: f64, max_order: u32) -> Result<Self> {
        let room = Self {
            dimensions_m,
            t60_s: Some(t60_s),
            max_order,
            speed_of_sound_mps: DEFAULT_SPEED_OF_SOUND_MPS,
        };
        room.validate()?;
        Ok(room)
    }

    pub fn anechoic(dimensions_m: [f64; 3]) -> Self {
        Self {
            dimensions_m,
            t60_s: None,
            max_order: 0,
            speed_of_sound_mps: DEFAULT_SPEED_OF_SOUND_MPS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimensions_m.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(Error::Geometry(format!(
                "room dimensions must be positive, got {:?}",
                self.dimensions_m
            )));
        }
        if let Some(t60) = self.t60_s {
            if !(t60 > 0.0) || !t60.is_finite() {
                return Err(Error::InvalidInput(format!("T60 must be positive, got {t60}")));
            }
        }
        if !(self.speed_of_sound_mps > 0.0) {
            return Err(Error::InvalidInput("speed of sound must be positive".into()));
        }
        Ok(())
    }

    pub fn is_anechoic(&self) -> bool {
        self.t60_s.is_none()
    }

    /// Reflection order actually expanded; anechoic rooms only have the direct path.
    pub fn effective_order(&self) -> u32 {
        if self.is_anechoic() {
            0
        } else {
            self.max_order
        }
    }

    pub fn volume(&self) -> f64 {
        self.dimensions_m.iter().product()
    }

    pub fn surface(&self) -> f64 {
        let [x, y, z] = self.dimensions_m;
        2.0 * (x * y + x * z + y * z)
    }

    /// True when `p` lies strictly inside the room.
    pub fn contains(&self, p: &[f64; 3]) -> bool {
        p.iter()
            .zip(&self.dimensions_m)
            .all(|(&c, &l)| c > 0.0 && c < l)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ListenerPose {
    pub position_m: [f64; 3],
    /// Head rotation about the vertical axis, counter-clockwise.
    pub yaw_deg: f64,
}

impl ListenerPose {
    fn rotate(&self, v: [f64; 3], sign: f64) -> [f64; 3] {
        let (s, c) = (sign * self.yaw_deg).to_radians().sin_cos();
        [c * v[0] - s * v[1], s * v[0] + c * v[1], v[2]]
    }

    /// Maps a head-frame vector into room coordinates.
    pub fn head_to_world(&self, v: [f64; 3]) -> [f64; 3] {
        self.rotate(v, 1.0)
    }

    pub fn world_to_head(&self, v: [f64; 3]) -> [f64; 3] {
        self.rotate(v, -1.0)
    }

    /// Room position of a source given relative to the head.
    pub fn source_position(&self, source: &SphericalPos) -> [f64; 3] {
        let o = self.head_to_world(source.offset());
        [
            self.position_m[0] + o[0],
            self.position_m[1] + o[1],
            self.position_m[2] + o[2],
        ]
    }
}

/// One propagation path: arrival direction in the head frame, gain `β^order / d`
/// and delay `d / c · fs` in (fractional) samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageSource {
    pub direction: Direction,
    pub gain: f64,
    pub delay_samples: f64,
    pub order: u32,
    pub distance_m: f64,
    /// Signed image index per axis; `|x| + |y| + |z|` equals `order`.
    pub image_index: [i32; 3],
}

/// Uniform wall reflection coefficient from the Sabine relation.
pub fn t60_to_reflection(room: &RoomSpec) -> Result<f64> {
    room.validate()?;
    let Some(t60) = room.t60_s else {
        return Ok(0.0);
    };
    let absorption_area = SABINE * room.volume() / t60;
    let alpha = absorption_area / room.surface();
    if alpha >= 1.0 {
        return Err(Error::InfeasibleAcoustics(format!(
            "T60 {t60} s needs absorption coefficient {alpha:.3} >= 1 in a {:?} m room",
            room.dimensions_m
        )));
    }
    Ok((1.0 - alpha).sqrt())
}

pub fn direct_path(source: &SphericalPos, speed_of_sound_mps: f64, sample_rate: u32) -> Result<ImageSource> {
    let r = source.radius_m;
    if !(r > 0.0) {
        return Err(Error::Singularity("source at the head centre".into()));
    }
    Ok(ImageSource {
        direction: source.direction,
        gain: 1.0 / r,
        delay_samples: r / speed_of_sound_mps * sample_rate as f64,
        order: 0,
        distance_m: r,
        image_index: [0, 0, 0],
    })
}

/// Coordinate of image `n` along an axis of length `length` for a source at `s`.
#[inline]
fn image_coordinate(n: i32, s: f64, length: f64) -> f64 {
    if n % 2 == 0 {
        n as f64 * length + s
    } else {
        (n + 1) as f64 * length - s
    }
}

/// All shoebox images with total reflection count at most the room's order.
pub fn expand_images(
    room: &RoomSpec,
    source: &SphericalPos,
    listener: &ListenerPose,
    sample_rate: u32,
) -> Result<Vec<ImageSource>> {
    room.validate()?;
    if sample_rate == 0 {
        return Err(Error::InvalidInput("sample rate must be positive".into()));
    }
    if !room.contains(&listener.position_m) {
        return Err(Error::Geometry(format!(
            "listener {:?} outside room {:?}",
            listener.position_m, room.dimensions_m
        )));
    }
    let src = listener.source_position(source);
    if !room.contains(&src) {
        return Err(Error::Geometry(format!(
            "source at {src:?} outside room {:?}",
            room.dimensions_m
        )));
    }
    let beta = t60_to_reflection(room)?;
    let order = room.effective_order() as i32;
    let fs = sample_rate as f64;
    let c = room.speed_of_sound_mps;
    let p = listener.position_m;
    let [lx, ly, lz] = room.dimensions_m;

    let mut out = Vec::new();
    for nx in -order..=order {
        let rx = order - nx.abs();
        for ny in -rx..=rx {
            let rz = rx - ny.abs();
            for nz in -rz..=rz {
                let img = [
                    image_coordinate(nx, src[0], lx),
                    image_coordinate(ny, src[1], ly),
                    image_coordinate(nz, src[2], lz),
                ];
                let d = [img[0] - p[0], img[1] - p[1], img[2] - p[2]];
                let dist = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                if dist < 1e-9 {
                    return Err(Error::Singularity("image source coincides with listener".into()));
                }
                let reflections = (nx.abs() + ny.abs() + nz.abs()) as u32;
                out.push(ImageSource {
                    direction: Direction::from_vector(listener.world_to_head(d))?,
                    gain: beta.powi(reflections as i32) / dist,
                    delay_samples: dist / c * fs,
                    order: reflections,
                    distance_m: dist,
                    image_index: [nx, ny, nz],
                });
            }
        }
    }
    Ok(out)
}

/// Number of images with total reflection count `<= order`.
pub fn image_count(order: u32) -> usize {
    let m = order as usize;
    (2 * m + 1) * (2 * m * m + 2 * m + 3) / 3
}

#[derive(Debug, Clone, PartialEq)]
pub struct Brir<T> {
    pub left: Vec<T>,
    pub right: Vec<T>,
    pub sample_rate: u32,
}

impl<T: Real> Brir<T> {
    pub fn len(&self) -> usize {
        self.left.len()
    }

    pub fn is_empty(&self) -> bool {
        self.left.is_empty()
    }

    pub fn channel(&self, ch: usize) -> &[T] {
        if ch == 0 {
            &self.left
        } else {
            &self.right
        }
    }
}

fn samples_needed(images: &[ImageSource], ir_length: usize) -> usize {
    let max_delay = images
        .iter()
        .map(|i| i.delay_samples)
        .fold(0.0f64, f64::max);
    max_delay.ceil() as usize + ir_length
}

/// Power-of-two FFT size large enough for the latest image plus HRIR length,
/// with one extra HRIR length of headroom for fractional-delay tails.
pub fn required_fft_size(images: &[ImageSource], ir_length: usize) -> usize {
    next_pow2(samples_needed(images, ir_length) + ir_length)
}

/// Frequency-domain BRIR synthesis; the result has `fft_size` samples per ear.
pub fn synthesize_brir<T: Real>(
    images: &[ImageSource],
    hrtf: &HrtfSet<T>,
    fft_size: usize,
) -> Result<Brir<T>> {
    if images.is_empty() {
        return Err(Error::InvalidInput("no image sources".into()));
    }
    let required = samples_needed(images, hrtf.ir_length());
    if required > fft_size {
        return Err(Error::Sizing { required, fft_size });
    }
    let bins = fft_size / 2 + 1;
    let mut acc = [vec![Complex::<T>::default(); bins], vec![Complex::<T>::default(); bins]];
    let mut spectra: HashMap<usize, [Vec<Complex<T>>; 2]> = HashMap::new();
    let mut fft = RealFft::new(fft_size);
    for image in images {
        if image.delay_samples < 0.0 || !image.delay_samples.is_finite() {
            return Err(Error::InvalidInput(format!(
                "invalid image delay {}",
                image.delay_samples
            )));
        }
        let (_, index) = hrtf.nearest_direction(&image.direction);
        let pair = spectra.entry(index).or_insert_with(|| {
            let hrir = &hrtf.entry(index).hrir;
            [hrir.left(), hrir.right()].map(|ir| {
                let mut out = vec![Complex::default(); bins];
                fft.forward(ir, &mut out);
                out
            })
        });
        let gain = T::lit(image.gain);
        for ch in 0..2 {
            accumulate_delayed(&mut acc[ch], &pair[ch], gain, image.delay_samples, fft_size);
        }
    }
    let [left, right] = acc.map(|spectrum| {
        let mut out = vec![T::zero(); fft_size];
        fft.inverse(&spectrum, &mut out);
        out
    });
    Ok(Brir {
        left,
        right,
        sample_rate: hrtf.sample_rate(),
    })
}

/// Backward-integrated energy decay curve in dB (0 dB at the first sample),
/// computed over both ears.
pub fn schroeder_curve<T: Real>(brir: &Brir<T>) -> Vec<f64> {
    let energy: Vec<f64> = brir
        .left
        .iter()
        .zip(&brir.right)
        .map(|(&l, &r)| l.f64().powi(2) + r.f64().powi(2))
        .collect();
    let mut tail = vec![0.0; energy.len()];
    let mut running = 0.0;
    for (i, e) in energy.iter().enumerate().rev() {
        running += e;
        tail[i] = running;
    }
    let total = tail.first().copied().unwrap_or(0.0);
    tail.iter()
        .map(|&e| 10.0 * (e / total).max(1e-300).log10())
        .collect()
}

/// Reverberation time from a least-squares line fitted to the Schroeder curve
/// between `-5 dB` and `-5 - range_db`, extrapolated to 60 dB of decay.
pub fn estimate_t60<T: Real>(brir: &Brir<T>, range_db: f64) -> Result<f64> {
    let curve = schroeder_curve(brir);
    let hi = -5.0;
    let lo = hi - range_db;
    let points: Vec<(f64, f64)> = curve
        .iter()
        .enumerate()
        .filter(|(_, &db)| db <= hi && db >= lo)
        .map(|(i, &db)| (i as f64 / brir.sample_rate as f64, db))
        .collect();
    if points.len() < 8 || curve.last().is_none_or(|&db| db > lo) {
        return Err(Error::InvalidInput(format!(
            "decay curve does not span {hi} to {lo} dB"
        )));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    if !(slope < 0.0) {
        return Err(Error::InvalidInput("decay curve is not decreasing".into()));
    }
    Ok(-60.0 / slope)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hrtf::{HrtfEntry, Hrir};

    fn room(order: u32) -> RoomSpec {
        RoomSpec::new([5.0, 4.0, 3.0], 0.5, order).unwrap()
    }

    fn listener() -> ListenerPose {
        ListenerPose {
            position_m: [2.0, 1.5, 1.4],
            yaw_deg: 30.0,
        }
    }

    fn source() -> SphericalPos {
        SphericalPos::new(Direction::new(40.0, 10.0).unwrap(), 1.5).unwrap()
    }

    fn impulse_hrtf() -> HrtfSet<f64> {
        let dirs: Vec<Direction> = (0..12)
            .map(|i| Direction::new(30.0 * i as f64, 0.0).unwrap())
            .collect();
        let entries = dirs
            .into_iter()
            .map(|d| HrtfEntry {
                direction: d,
                hrir: Hrir::new(vec![1.0, 0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0, 0.0], 16_000).unwrap(),
            })
            .collect();
        HrtfSet::new("impulse", 16_000, 1.0, entries).unwrap()
    }

    #[test]
    fn sabine_reflection_coefficient() {
        let beta = t60_to_reflection(&room(0)).unwrap();
        assert!((beta - 0.891_329_392_035_505).abs() < 1e-12);
        assert_eq!(t60_to_reflection(&RoomSpec::anechoic([5.0, 4.0, 3.0])).unwrap(), 0.0);
        let long = RoomSpec::new([5.0, 4.0, 3.0], 1e9, 0).unwrap();
        assert!((t60_to_reflection(&long).unwrap() - 1.0).abs() < 1e-9);
        let tiny = RoomSpec::new([1.0, 1.0, 1.0], 0.01, 0).unwrap();
        assert!(matches!(t60_to_reflection(&tiny), Err(Error::InfeasibleAcoustics(_))));
    }

    #[test]
    fn image_counts_for_low_orders() {
        assert_eq!(expand_images(&room(0), &source(), &listener(), 16_000).unwrap().len(), 1);
        assert_eq!(expand_images(&room(1), &source(), &listener(), 16_000).unwrap().len(), 7);
        for m in 0..5 {
            assert_eq!(
                expand_images(&room(m), &source(), &listener(), 16_000).unwrap().len(),
                image_count(m)
            );
        }
    }

    #[test]
    fn order_zero_image_is_the_direct_path() {
        let images = expand_images(&room(2), &source(), &listener(), 16_000).unwrap();
        let direct = images.iter().find(|i| i.order == 0).unwrap();
        let expected = direct_path(&source(), 343.0, 16_000).unwrap();
        assert!((direct.gain - expected.gain).abs() < 1e-12);
        assert!((direct.delay_samples - expected.delay_samples).abs() < 1e-9);
        assert!(crate::hrtf::angular_distance(&direct.direction, &source().direction) < 1e-9);
        assert_eq!(images.iter().filter(|i| i.order == 0).count(), 1);
    }

    #[test]
    fn direct_path_values() {
        let d = direct_path(
            &SphericalPos::new(Direction::new(12.0, -4.0).unwrap(), 2.0).unwrap(),
            343.0,
            16_000,
        )
        .unwrap();
        assert_eq!(d.gain, 0.5);
        assert_eq!(d.direction, Direction::new(12.0, -4.0).unwrap());
        let d = direct_path(
            &SphericalPos::new(Direction::new(0.0, 0.0).unwrap(), 1.715).unwrap(),
            343.0,
            16_000,
        )
        .unwrap();
        assert!((d.delay_samples - 80.0).abs() < 1e-9);
    }

    #[test]
    fn anechoic_room_forces_direct_path_only() {
        let mut r = RoomSpec::anechoic([5.0, 4.0, 3.0]);
        r.max_order = 5;
        assert_eq!(expand_images(&r, &source(), &listener(), 16_000).unwrap().len(), 1);
    }

    #[test]
    fn geometry_errors() {
        let far = SphericalPos::new(Direction::new(0.0, 0.0).unwrap(), 10.0).unwrap();
        assert!(matches!(
            expand_images(&room(1), &far, &listener(), 16_000),
            Err(Error::Geometry(_))
        ));
        let outside = ListenerPose {
            position_m: [6.0, 1.0, 1.0],
            yaw_deg: 0.0,
        };
        assert!(matches!(
            expand_images(&room(1), &source(), &outside, 16_000),
            Err(Error::Geometry(_))
        ));
        assert!(SphericalPos::new(Direction::new(0.0, 0.0).unwrap(), 0.0).is_err());
    }

    #[test]
    fn identity_accumulation() {
        let hrtf = crate::hrtf::model::SphericalHeadModel::default()
            .build_grid(&crate::hrtf::model::GridSpec::default(), 16_000, 64)
            .unwrap();
        let dir = Direction::new(36.0, 6.0).unwrap();
        let image = ImageSource {
            direction: dir,
            gain: 1.0,
            delay_samples: 0.0,
            order: 0,
            distance_m: 1.0,
            image_index: [0; 3],
        };
        let brir = synthesize_brir(&[image], &hrtf, 128).unwrap();
        let (_, idx) = hrtf.nearest_direction(&dir);
        let h = &hrtf.entry(idx).hrir;
        for n in 0..128 {
            let (l, r) = if n < 64 { (h.left()[n], h.right()[n]) } else { (0.0, 0.0) };
            assert!((brir.left[n] - l).abs() < 1e-9);
            assert!((brir.right[n] - r).abs() < 1e-9);
        }
    }

    #[test]
    fn two_tap_oracle() {
        let hrtf = impulse_hrtf();
        let mk = |gain, delay| ImageSource {
            direction: Direction::new(0.0, 0.0).unwrap(),
            gain,
            delay_samples: delay,
            order: 0,
            distance_m: 1.0,
            image_index: [0; 3],
        };
        let brir = synthesize_brir(&[mk(1.0, 0.0), mk(0.5, 100.0)], &hrtf, 256).unwrap();
        for ch in 0..2 {
            for (n, &v) in brir.channel(ch).iter().enumerate() {
                let expected = match n {
                    0 => 1.0,
                    100 => 0.5,
                    _ => 0.0,
                };
                assert!((v - expected).abs() < 1e-12, "n={n} v={v}");
            }
        }
    }

    #[test]
    fn sizing_error_for_small_fft() {
        let images = expand_images(&room(2), &source(), &listener(), 16_000).unwrap();
        let hrtf = impulse_hrtf();
        assert!(matches!(
            synthesize_brir(&images, &hrtf, 64),
            Err(Error::Sizing { .. })
        ));
        let n = required_fft_size(&images, hrtf.ir_length());
        assert!(synthesize_brir(&images, &hrtf, n).is_ok());
    }
}
