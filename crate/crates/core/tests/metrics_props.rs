use num_complex::Complex;
use proptest::prelude::*;

use bintse::dsp::{BinauralClip, BinauralSpectrogram, StftConfig, WindowKind};
use bintse::metrics::{cue_histograms, mae_stft, si_sdr, CueConfig, SI_SDR_CAP_DB};

const FS: u32 = 16_000;

fn pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..2000).prop_flat_map(|n| (prop::collection::vec(-1.0f64..1.0, n), prop::collection::vec(-1.0f64..1.0, n)))
}

fn spectrograms(count: usize) -> impl Strategy<Value = Vec<BinauralSpectrogram<f64>>> {
    let cfg = StftConfig::new(32, 8, WindowKind::Hann).unwrap();
    let cells = cfg.num_bins() * cfg.num_frames(200);
    let one = prop::collection::vec((-4.0f64..4.0, -4.0f64..4.0), 2 * cells).prop_map(move |v| {
        let c: Vec<Complex<f64>> = v.into_iter().map(|(re, im)| Complex::new(re, im)).collect();
        BinauralSpectrogram::new(c[..cells].to_vec(), c[cells..].to_vec(), cfg, FS, 200).unwrap()
    });
    prop::collection::vec(one, count)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn si_sdr_ignores_estimate_scale((t, e) in pair(), c in prop_oneof![-1e3f64..-1e-3, 1e-3f64..1e3]) {
        let base = si_sdr(&t, &e).unwrap();
        let scaled: Vec<f64> = e.iter().map(|v| v * c).collect();
        prop_assert!((si_sdr(&t, &scaled).unwrap() - base).abs() <= 1e-9);
        prop_assert!(base <= SI_SDR_CAP_DB);
    }

    #[test]
    fn negated_target_hits_the_cap((t, _) in pair()) {
        let neg: Vec<f64> = t.iter().map(|v| -v).collect();
        prop_assert_eq!(si_sdr(&t, &t), Some(SI_SDR_CAP_DB));
        prop_assert_eq!(si_sdr(&t, &neg), Some(SI_SDR_CAP_DB));
    }

    #[test]
    fn mae_is_symmetric_with_triangle_inequality(s in spectrograms(3)) {
        let ab = mae_stft(&s[0], &s[1]).unwrap();
        prop_assert_eq!(ab, mae_stft(&s[1], &s[0]).unwrap());
        prop_assert_eq!(mae_stft(&s[0], &s[0]).unwrap(), 0.0);
        let (ac, cb) = (mae_stft(&s[0], &s[2]).unwrap(), mae_stft(&s[2], &s[1]).unwrap());
        prop_assert!(ab <= ac + cb + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// Every admitted (band, frame) pair contributes its coherence, which is at
    /// least the admission threshold and at most one.
    #[test]
    fn histogram_mass_is_bounded_by_admissions(seed in 1u64..1000, delay in -8i64..=8, gain_db in -12.0f64..12.0) {
        let x = bintse::scene::synth_speech(seed, 0.75, FS).into_samples();
        let n = x.len();
        let g = 10f64.powf(gain_db / 20.0);
        let shifted: Vec<f64> = (0..n as i64)
            .map(|i| x.get((i - delay) as usize).copied().filter(|_| i >= delay).unwrap_or(0.0) * g)
            .collect();
        let clip = BinauralClip::from_channels(x, shifted, FS).unwrap();
        let cfg = CueConfig::default();
        let (itd, ild) = cue_histograms(&clip, &cfg).unwrap();
        prop_assert_eq!(itd.admitted, ild.admitted);
        prop_assert!(itd.admitted > 0);
        for h in [&itd, &ild] {
            let m = h.total_weight();
            prop_assert!((m - ild.total_weight()).abs() <= 1e-9 * m);
            prop_assert!(m <= h.admitted as f64 + 1e-9);
            prop_assert!(m >= cfg.coherence_threshold * h.admitted as f64 - 1e-9);
        }
    }
}
