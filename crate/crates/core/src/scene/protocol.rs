//! Dataset protocols and the deterministic scene stream.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{SceneMetadata, SceneSpec, SourceSpec};
use crate::error::{Error, Result};
use crate::hrtf::{angular_distance, Direction, SphericalPos};
use crate::room::{ListenerPose, RoomSpec, DEFAULT_SPEED_OF_SOUND_MPS};

pub const DEFAULT_SWEEP_SEPARATIONS: [f64; 8] = [20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0];

/// Clearance kept between any source or the listener and the walls.
const WALL_MARGIN_M: f64 = 0.1;
const MAX_PLACEMENT_TRIES: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoomRanges {
    pub x_m: [f64; 2],
    pub y_m: [f64; 2],
    pub z_m: [f64; 2],
}

impl Default for RoomRanges {
    fn default() -> Self {
        Self {
            x_m: [4.0, 8.0],
            y_m: [3.0, 6.0],
            z_m: [2.5, 3.5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub separations_deg: Vec<f64>,
    pub scenes_per_separation: usize,
    /// Source distance for sweep scenes, mirroring a loudspeaker ring.
    pub radius_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetProtocol {
    pub name: String,
    pub split: Split,
    pub num_mixtures: usize,
    pub utterances: Vec<String>,
    pub hrtf_subjects: Vec<String>,
    pub room: RoomRanges,
    pub t60_range_s: [f64; 2],
    pub sir_range_db: [f64; 2],
    pub radius_range_m: [f64; 2],
    pub elevation_range_deg: [f64; 2],
    pub min_separation_deg: f64,
    pub max_order: u32,
    pub duration_s: f64,
    pub sample_rate: u32,
    /// Direct path only.
    pub anechoic: bool,
    /// Second source muted; the SIR is irrelevant.
    pub single_source: bool,
    /// Snap sampled directions to multiples of `[azimuth, elevation]` steps.
    pub direction_grid_deg: Option<[f64; 2]>,
    pub sweep: Option<SweepSpec>,
}

impl Default for DatasetProtocol {
    fn default() -> Self {
        Self {
            name: "train".into(),
            split: Split::Train,
            num_mixtures: 100,
            utterances: (1..=64).map(|i| format!("synth:{i}")).collect(),
            hrtf_subjects: vec!["spherical-head".into()],
            room: RoomRanges::default(),
            t60_range_s: [0.2, 0.8],
            sir_range_db: [-5.0, 5.0],
            radius_range_m: [1.0, 2.5],
            elevation_range_deg: [-30.0, 30.0],
            min_separation_deg: 10.0,
            max_order: 12,
            duration_s: 5.0,
            sample_rate: 16_000,
            anechoic: false,
            single_source: false,
            direction_grid_deg: None,
            sweep: None,
        }
    }
}

impl DatasetProtocol {
    pub fn validate(&self) -> Result<()> {
        if self.utterances.is_empty() {
            return Err(Error::Config("utterance pool is empty".into()));
        }
        if self.hrtf_subjects.is_empty() {
            return Err(Error::Config("HRTF subject pool is empty".into()));
        }
        let ranges = [
            ("room.x_m", self.room.x_m),
            ("room.y_m", self.room.y_m),
            ("room.z_m", self.room.z_m),
            ("t60_range_s", self.t60_range_s),
            ("sir_range_db", self.sir_range_db),
            ("radius_range_m", self.radius_range_m),
            ("elevation_range_deg", self.elevation_range_deg),
        ];
        for (name, [lo, hi]) in ranges {
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Config(format!("{name}: invalid range [{lo}, {hi}]")));
            }
        }
        if !(self.radius_range_m[0] > 0.0) || !(self.t60_range_s[0] > 0.0) {
            return Err(Error::Config("radius and T60 ranges must be positive".into()));
        }
        if self.elevation_range_deg[0] < -90.0 || self.elevation_range_deg[1] > 90.0 {
            return Err(Error::Config("elevation range outside [-90, 90]".into()));
        }
        if !(self.duration_s > 0.0) || self.sample_rate == 0 {
            return Err(Error::Config("duration and sample rate must be positive".into()));
        }
        if let Some(sweep) = &self.sweep {
            validate_separations(&sweep.separations_deg)?;
            if !(sweep.radius_m > 0.0) {
                return Err(Error::Config("sweep radius must be positive".into()));
            }
        }
        Ok(())
    }

    /// Number of mixtures the stream will plan.
    pub fn total_mixtures(&self) -> usize {
        match &self.sweep {
            Some(s) => s.separations_deg.len() * s.scenes_per_separation,
            None => self.num_mixtures,
        }
    }

    /// Protocol parameters the source material leaves open and which are
    /// still at their built-in defaults.
    pub fn defaults_flagged(&self) -> Vec<String> {
        let d = Self::default();
        let mut flags = Vec::new();
        if self.sweep.is_none() {
            if self.radius_range_m == d.radius_range_m {
                flags.push("radius_range_m".into());
            }
            if self.elevation_range_deg == d.elevation_range_deg {
                flags.push("elevation_range_deg".into());
            }
            if self.min_separation_deg == d.min_separation_deg && !self.single_source {
                flags.push("min_separation_deg".into());
            }
        }
        if self.room == d.room {
            flags.push("room".into());
        }
        flags.push("listener_placement".into());
        if !self.single_source {
            flags.push("sir_reverberant_channel_summed".into());
        }
        flags
    }
}

fn validate_separations(separations: &[f64]) -> Result<()> {
    if separations.is_empty() {
        return Err(Error::InvalidInput("sweep needs at least one separation".into()));
    }
    for &s in separations {
        if !(s > 0.0 && s <= 180.0) {
            return Err(Error::InvalidInput(format!("separation {s} outside (0, 180]")));
        }
    }
    Ok(())
}

/// Test-split protocol over a list of azimuth separations, 30 mixtures each.
/// Both sources share the horizontal plane and the sweep radius.
pub fn angular_sweep_protocol(separations_deg: &[f64]) -> Result<DatasetProtocol> {
    validate_separations(separations_deg)?;
    Ok(DatasetProtocol {
        name: "sweep".into(),
        split: Split::Test,
        sweep: Some(SweepSpec {
            separations_deg: separations_deg.to_vec(),
            scenes_per_separation: 30,
            radius_m: 1.5,
        }),
        ..DatasetProtocol::default()
    })
}

/// Per-mixture seed derived from the global seed and the mixture id, so that
/// anything randomized at render time is independent of scheduling.
pub fn mixture_seed(global_seed: u64, mixture_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(global_seed.to_le_bytes());
    h.update(mixture_id.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// One manifest line: the scene plus realized metadata and output paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub mixture_id: String,
    pub scene: SceneSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep_separation_deg: Option<f64>,
    pub defaults_flagged: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mixture_wav: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_wav: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub realized: Option<SceneMetadata>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

/// Deterministic stream of scenes for `protocol`.
///
/// Test splits emit every mixture twice, with target 1 then target 2; sweeps
/// and other splits emit one row per mixture. Placement failures are yielded
/// as errors without stopping the stream.
pub fn sample_dataset(protocol: &DatasetProtocol, seed: u64) -> Result<DatasetStream> {
    protocol.validate()?;
    Ok(DatasetStream {
        protocol: protocol.clone(),
        rng: ChaCha8Rng::seed_from_u64(seed),
        global_seed: seed,
        next_mixture: 0,
        pending: VecDeque::new(),
    })
}

pub struct DatasetStream {
    protocol: DatasetProtocol,
    rng: ChaCha8Rng,
    global_seed: u64,
    next_mixture: usize,
    pending: VecDeque<Result<SceneSpec>>,
}

impl DatasetStream {
    /// Sweep separation of the mixture currently being planned.
    fn sweep_separation(&self, mixture: usize) -> Option<f64> {
        self.protocol
            .sweep
            .as_ref()
            .map(|s| s.separations_deg[mixture / s.scenes_per_separation.max(1)])
    }

    fn plan_mixture(&mut self, index: usize) -> Vec<Result<SceneSpec>> {
        let p = &self.protocol;
        let mixture_id = format!("{}-{index:05}", p.name);
        let seed = mixture_seed(self.global_seed, &mixture_id);
        let separation = self.sweep_separation(index);
        let rng = &mut self.rng;

        let dims = [
            rng.gen_range(p.room.x_m[0]..=p.room.x_m[1]),
            rng.gen_range(p.room.y_m[0]..=p.room.y_m[1]),
            rng.gen_range(p.room.z_m[0]..=p.room.z_m[1]),
        ];
        let t60 = rng.gen_range(p.t60_range_s[0]..=p.t60_range_s[1]);
        let sir = rng.gen_range(p.sir_range_db[0]..=p.sir_range_db[1]);
        let n_utt = p.utterances.len();
        let u1 = rng.gen_range(0..n_utt);
        let u2 = if n_utt > 1 {
            (u1 + rng.gen_range(1..n_utt)) % n_utt
        } else {
            u1
        };
        let subject = p.hrtf_subjects[rng.gen_range(0..p.hrtf_subjects.len())].clone();
        let train_target = rng.gen_range(1..=2u8);

        let room = if p.anechoic {
            RoomSpec::anechoic(dims)
        } else {
            RoomSpec {
                dimensions_m: dims,
                t60_s: Some(t60),
                max_order: p.max_order,
                speed_of_sound_mps: DEFAULT_SPEED_OF_SOUND_MPS,
            }
        };
        let placed = place(p, rng, &room, separation);
        let (listener, positions) = match placed {
            Ok(v) => v,
            Err(Error::InfeasibleAcoustics(msg)) => {
                return vec![Err(Error::InfeasibleAcoustics(format!("{mixture_id}: {msg}")))]
            }
            Err(e) => return vec![Err(e)],
        };

        let sources = [
            SourceSpec {
                pos: positions[0],
                signal: p.utterances[u1].clone(),
                muted: false,
            },
            SourceSpec {
                pos: positions[1],
                signal: p.utterances[u2].clone(),
                muted: p.single_source,
            },
        ];
        let targets: Vec<u8> = match (p.split, p.sweep.is_some() || p.single_source) {
            (_, true) => vec![1],
            (Split::Test, false) => vec![1, 2],
            _ => vec![train_target],
        };
        targets
            .into_iter()
            .map(|t| {
                Ok(SceneSpec {
                    scene_id: format!("{mixture_id}-t{t}"),
                    room,
                    listener,
                    sources: sources.clone(),
                    sir_db: if p.single_source { 0.0 } else { sir },
                    target_index: t,
                    duration_s: p.duration_s,
                    sample_rate: p.sample_rate,
                    seed,
                    hrtf_subject: subject.clone(),
                })
            })
            .collect()
    }
}

impl Iterator for DatasetStream {
    type Item = Result<SceneSpec>;

    fn next(&mut self) -> Option<Self::Item> {
        while self.pending.is_empty() {
            if self.next_mixture >= self.protocol.total_mixtures() {
                return None;
            }
            let idx = self.next_mixture;
            self.next_mixture += 1;
            let planned = self.plan_mixture(idx);
            self.pending.extend(planned);
        }
        self.pending.pop_front()
    }
}

impl ManifestRow {
    pub fn new(protocol: &DatasetProtocol, scene: SceneSpec) -> Self {
        let mixture_id = scene
            .scene_id
            .rsplit_once("-t")
            .map_or(scene.scene_id.as_str(), |(m, _)| m)
            .to_string();
        let sweep_separation_deg = protocol.sweep.as_ref().map(|_| azimuth_separation(&scene));
        Self {
            mixture_id,
            scene,
            sweep_separation_deg,
            defaults_flagged: protocol.defaults_flagged(),
            mixture_wav: None,
            target_wav: None,
            realized: None,
            skipped: None,
        }
    }
}

/// Azimuth difference folded into `[0, 180]`.
pub(crate) fn azimuth_separation(scene: &SceneSpec) -> f64 {
    let d = (scene.sources[1].pos.direction.azimuth_deg() - scene.sources[0].pos.direction.azimuth_deg())
        .rem_euclid(360.0);
    d.min(360.0 - d)
}

fn snap(value: f64, step: Option<f64>) -> f64 {
    match step {
        Some(s) if s > 0.0 => (value / s).round() * s,
        _ => value,
    }
}

/// Samples a listener pose and two head-relative source positions that all
/// fit inside the room.
fn place(
    p: &DatasetProtocol,
    rng: &mut ChaCha8Rng,
    room: &RoomSpec,
    separation: Option<f64>,
) -> Result<(ListenerPose, [SphericalPos; 2])> {
    let [lx, ly, lz] = room.dimensions_m;
    let inside = |q: [f64; 3]| {
        q.iter()
            .zip(&room.dimensions_m)
            .all(|(&c, &l)| c > WALL_MARGIN_M && c < l - WALL_MARGIN_M)
    };
    for _ in 0..MAX_PLACEMENT_TRIES {
        let z_hi = (lz - 0.5).clamp(1.0, 1.8);
        let listener = ListenerPose {
            position_m: [
                rng.gen_range(0.3 * lx..=0.7 * lx),
                rng.gen_range(0.3 * ly..=0.7 * ly),
                rng.gen_range(1.0f64.min(z_hi)..=z_hi),
            ],
            yaw_deg: rng.gen_range(0.0..360.0),
        };
        let positions = match (separation, &p.sweep) {
            (Some(sep), Some(sweep)) => {
                let az1 = rng.gen_range(0..360u32) as f64;
                let az2 = (az1 + sep).rem_euclid(360.0);
                [
                    SphericalPos::new(Direction::new(az1, 0.0)?, sweep.radius_m)?,
                    SphericalPos::new(Direction::new(az2, 0.0)?, sweep.radius_m)?,
                ]
            }
            _ => {
                let mut draw = || -> Result<SphericalPos> {
                    let grid = p.direction_grid_deg;
                    let az = snap(rng.gen_range(0.0..360.0), grid.map(|g| g[0]));
                    let el = snap(
                        rng.gen_range(p.elevation_range_deg[0]..=p.elevation_range_deg[1]),
                        grid.map(|g| g[1]),
                    )
                    .clamp(-90.0, 90.0);
                    let r = rng.gen_range(p.radius_range_m[0]..=p.radius_range_m[1]);
                    SphericalPos::new(Direction::new(az, el)?, r)
                };
                [draw()?, draw()?]
            }
        };
        if p.sweep.is_none()
            && !p.single_source
            && angular_distance(&positions[0].direction, &positions[1].direction) < p.min_separation_deg
        {
            continue;
        }
        if inside(listener.position_m)
            && positions
                .iter()
                .all(|s| inside(listener.source_position(s)))
        {
            return Ok((listener, positions));
        }
    }
    Err(Error::InfeasibleAcoustics(format!(
        "could not place listener and sources in a {lx:.2} x {ly:.2} x {lz:.2} m room"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(split: Split, n: usize) -> DatasetProtocol {
        DatasetProtocol {
            split,
            num_mixtures: n,
            ..DatasetProtocol::default()
        }
    }

    #[test]
    fn t60_and_sir_follow_the_protocol_ranges() {
        let scenes: Vec<SceneSpec> = sample_dataset(&small(Split::Train, 1000), 11)
            .unwrap()
            .map(|s| s.unwrap())
            .collect();
        assert_eq!(scenes.len(), 1000);
        let t60: Vec<f64> = scenes.iter().map(|s| s.room.t60_s.unwrap()).collect();
        let mean = t60.iter().sum::<f64>() / t60.len() as f64;
        assert!(t60.iter().all(|t| (0.2..=0.8).contains(t)));
        assert!((0.45..=0.55).contains(&mean), "mean {mean}");
        assert!(scenes.iter().all(|s| (-5.0..=5.0).contains(&s.sir_db)));
        assert!(scenes.iter().all(|s| s.separation_deg() >= 10.0));
    }

    #[test]
    fn test_split_emits_both_targets() {
        let scenes: Vec<SceneSpec> = sample_dataset(&small(Split::Test, 1000), 5)
            .unwrap()
            .map(|s| s.unwrap())
            .collect();
        assert_eq!(scenes.len(), 2000);
        for pair in scenes.chunks(2) {
            assert_eq!((pair[0].target_index, pair[1].target_index), (1, 2));
            assert_eq!(pair[0].sources, pair[1].sources);
        }
    }

    #[test]
    fn same_seed_same_stream() {
        let a: Vec<String> = sample_dataset(&small(Split::Test, 20), 9)
            .unwrap()
            .map(|s| serde_json::to_string(&s.unwrap()).unwrap())
            .collect();
        let b: Vec<String> = sample_dataset(&small(Split::Test, 20), 9)
            .unwrap()
            .map(|s| serde_json::to_string(&s.unwrap()).unwrap())
            .collect();
        assert_eq!(a, b);
        let c: Vec<String> = sample_dataset(&small(Split::Test, 20), 10)
            .unwrap()
            .map(|s| serde_json::to_string(&s.unwrap()).unwrap())
            .collect();
        assert_ne!(a, c);
    }

    #[test]
    fn default_sweep_shape() {
        let p = angular_sweep_protocol(&DEFAULT_SWEEP_SEPARATIONS).unwrap();
        let scenes: Vec<SceneSpec> = sample_dataset(&p, 1).unwrap().map(|s| s.unwrap()).collect();
        assert_eq!(scenes.len(), 240);
        for (i, s) in scenes.iter().enumerate() {
            assert_eq!(azimuth_separation(s), DEFAULT_SWEEP_SEPARATIONS[i / 30]);
        }
    }

    #[test]
    fn single_separation_is_exact() {
        let p = angular_sweep_protocol(&[90.0]).unwrap();
        for s in sample_dataset(&p, 2).unwrap() {
            let s = s.unwrap();
            let d = (s.sources[1].pos.direction.azimuth_deg() - s.sources[0].pos.direction.azimuth_deg())
                .rem_euclid(360.0);
            assert_eq!(d, 90.0);
        }
    }

    #[test]
    fn invalid_protocols() {
        assert!(angular_sweep_protocol(&[]).is_err());
        assert!(angular_sweep_protocol(&[0.0]).is_err());
        assert!(angular_sweep_protocol(&[190.0]).is_err());
        let mut p = DatasetProtocol::default();
        p.utterances.clear();
        assert!(matches!(sample_dataset(&p, 0), Err(Error::Config(_))));
        let mut p = DatasetProtocol::default();
        p.hrtf_subjects.clear();
        assert!(matches!(sample_dataset(&p, 0), Err(Error::Config(_))));
    }

    #[test]
    fn mixture_seeds_differ_by_id_and_seed() {
        assert_ne!(mixture_seed(1, "a"), mixture_seed(1, "b"));
        assert_ne!(mixture_seed(1, "a"), mixture_seed(2, "a"));
        assert_eq!(mixture_seed(1, "a"), mixture_seed(1, "a"));
    }

    #[test]
    fn manifest_row_ids() {
        let p = small(Split::Test, 1);
        let s = sample_dataset(&p, 0).unwrap().next().unwrap().unwrap();
        let row = ManifestRow::new(&p, s);
        assert_eq!(row.mixture_id, "train-00000");
        assert!(row.defaults_flagged.contains(&"room".to_string()));
    }
}
