use proptest::prelude::*;

use bintse::hrtf::model::{GridSpec, SphericalHeadModel};
use bintse::hrtf::{Direction, SphericalPos};
use bintse::room::{
    direct_path, expand_images, image_count, required_fft_size, synthesize_brir, t60_to_reflection, ListenerPose,
    RoomSpec,
};

const FS: u32 = 16_000;

#[derive(Debug, Clone)]
struct Setup {
    room: RoomSpec,
    listener: ListenerPose,
    source: SphericalPos,
}

fn setup(max_order: std::ops::RangeInclusive<u32>) -> impl Strategy<Value = Setup> {
    (
        (3.0f64..9.0, 3.0f64..8.0, 2.4f64..4.0),
        0.2f64..0.9,
        max_order,
        (0.1f64..0.9, 0.1f64..0.9, 0.3f64..0.7),
        0.0f64..360.0,
        (0.0f64..360.0, -40.0f64..40.0, 0.3f64..1.5),
    )
        .prop_map(|((lx, ly, lz), t60, m, (fx, fy, fz), yaw, (az, el, r))| Setup {
            room: RoomSpec::new([lx, ly, lz], t60, m).unwrap(),
            listener: ListenerPose {
                position_m: [fx * lx, fy * ly, fz * lz],
                yaw_deg: yaw,
            },
            source: SphericalPos::new(Direction::new(az, el).unwrap(), r).unwrap(),
        })
        .prop_filter("source inside the room", |s| {
            s.room.contains(&s.listener.source_position(&s.source)) && t60_to_reflection(&s.room).is_ok()
        })
}

/// Independent enumeration: along each axis the image coordinate is
/// `(1 - 2q)·s + 2mL` with `|2m - q|` reflections.
fn lattice(s: &Setup) -> Vec<(u32, f64)> {
    let m_max = s.room.effective_order() as i32;
    let src = s.listener.source_position(&s.source);
    let p = s.listener.position_m;
    let axis = |a: usize| -> Vec<(f64, i32)> {
        let mut v = Vec::new();
        for m in -m_max - 1..=m_max + 1 {
            for q in 0..2 {
                v.push(((1 - 2 * q) as f64 * src[a] + 2.0 * m as f64 * s.room.dimensions_m[a] - p[a], (2 * m - q).abs()));
            }
        }
        v
    };
    let (ax, ay, az) = (axis(0), axis(1), axis(2));
    let mut out = Vec::new();
    for &(x, rx) in &ax {
        for &(y, ry) in &ay {
            for &(z, rz) in &az {
                let order = rx + ry + rz;
                if order <= m_max {
                    out.push((order as u32, (x * x + y * y + z * z).sqrt()));
                }
            }
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn images_match_lattice_enumeration(s in setup(0..=4)) {
        let images = expand_images(&s.room, &s.source, &s.listener, FS).unwrap();
        let expected = lattice(&s);
        prop_assert_eq!(images.len(), image_count(s.room.max_order));
        prop_assert_eq!(images.len(), expected.len());
        let mut got: Vec<(u32, f64)> = images.iter().map(|i| (i.order, i.distance_m)).collect();
        got.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        for (g, e) in got.iter().zip(&expected) {
            prop_assert_eq!(g.0, e.0);
            prop_assert!((g.1 - e.1).abs() <= 1e-9 * e.1.max(1.0));
        }
    }

    #[test]
    fn gains_are_positive_and_decay_with_order(s in setup(0..=4)) {
        let images = expand_images(&s.room, &s.source, &s.listener, FS).unwrap();
        let beta = t60_to_reflection(&s.room).unwrap();
        prop_assert!(beta > 0.0 && beta < 1.0);
        for i in &images {
            prop_assert!(i.gain > 0.0);
            // Distance-normalized gain is the reflection factor alone.
            let g = i.gain * i.distance_m;
            prop_assert!((g - beta.powi(i.order as i32)).abs() <= 1e-12);
            prop_assert!(g <= 1.0);
        }
    }

    #[test]
    fn doubling_distance_doubles_delay(
        az in 0.0f64..360.0,
        el in -90.0f64..=90.0,
        r in 0.05f64..20.0,
        fs in prop_oneof![Just(16_000u32), Just(44_100), Just(48_000)],
    ) {
        let dir = Direction::new(az, el).unwrap();
        let near = direct_path(&SphericalPos::new(dir, r).unwrap(), 343.0, fs).unwrap();
        let far = direct_path(&SphericalPos::new(dir, 2.0 * r).unwrap(), 343.0, fs).unwrap();
        prop_assert_eq!(far.delay_samples, 2.0 * near.delay_samples);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// A direct path at an integer delay reproduces the HRIR pair sample for
    /// sample, scaled by `1/r`.
    #[test]
    fn anechoic_brir_is_the_shifted_hrir(entry in 0usize..1000, delay in 1u32..200, yaw in 0.0f64..360.0) {
        let hrtf = SphericalHeadModel::default()
            .build_grid(&GridSpec { azimuth_step_deg: 30.0, elevation_step_deg: 30.0, ..GridSpec::default() }, FS, 64)
            .unwrap();
        let entry = entry % hrtf.len();
        let dir = hrtf.entry(entry).direction;
        let r = delay as f64 * 343.0 / FS as f64;
        let room = RoomSpec::anechoic([40.0, 40.0, 40.0]);
        let listener = ListenerPose { position_m: [20.0, 20.0, 20.0], yaw_deg: yaw };
        let images = expand_images(&room, &SphericalPos::new(dir, r).unwrap(), &listener, FS).unwrap();
        prop_assert_eq!(images.len(), 1);
        let brir = synthesize_brir(&images, &hrtf, required_fft_size(&images, hrtf.ir_length())).unwrap();
        let hrir = &hrtf.entry(hrtf.nearest_direction(&images[0].direction).1).hrir;
        let peak = hrir.left().iter().chain(hrir.right()).fold(0.0f64, |m, v| m.max(v.abs()));
        for ch in 0..2 {
            let out = brir.channel(ch);
            for (n, h) in hrir.channel(ch).iter().enumerate() {
                prop_assert!((out[n + delay as usize] * r - h).abs() <= 1e-9 * peak);
            }
        }
    }
}
