//! Cross-module invariants as property tests.

use num_complex::Complex64;
use proptest::prelude::*;

use edge_nilm::acquisition::{frame_len, frame_stream, quantize, raw_conv, AcquisitionConfig};
use edge_nilm::classify::{cycle_at, detect_recording, evaluate, split_dataset};
use edge_nilm::config::{Config, Mode};
use edge_nilm::events::Direction;
use edge_nilm::features::{fft, fft_skip_reorder, power_features, power_features_of, FftPlan};
use edge_nilm::neuralnet::layers::{se_block, SeWeights};
use edge_nilm::neuralnet::Tensor;
use edge_nilm::signalgen::{presets, synth_scenario, ApplianceModel, Schedule};

const FS: f64 = 6400.0;

fn preset(id: &str) -> ApplianceModel {
    presets().into_iter().find(|m| m.id == id).unwrap().noiseless()
}

fn ids() -> impl Strategy<Value = &'static str> {
    prop::sample::select(vec!["lamp", "hairdryer", "laptop", "refrigerator", "washing_machine"])
}

fn complex_vec(n: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0).prop_map(|(a, b)| Complex64::new(a, b)), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn disjoint_schedules_superpose(
        a in ids(),
        b in ids(),
        on_a in 0.0f64..0.3,
        on_b in 0.0f64..0.3,
        len_a in 0.1f64..0.3,
        len_b in 0.1f64..0.3,
    ) {
        prop_assume!(a != b);
        let models = [preset(a), preset(b)];
        let sa = Schedule::new(0.6).with(a, on_a, on_a + len_a);
        let sb = Schedule::new(0.6).with(b, on_b, on_b + len_b);
        let both = Schedule::new(0.6).with(a, on_a, on_a + len_a).with(b, on_b, on_b + len_b);
        let wa = synth_scenario(&models, &sa, FS, 1).unwrap();
        let wb = synth_scenario(&models, &sb, FS, 1).unwrap();
        let w = synth_scenario(&models, &both, FS, 1).unwrap();
        for k in 0..w.len() {
            prop_assert!((w.i[k] - wa.i[k] - wb.i[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn silence_draws_no_power(id in ids(), t_on in 0.3f64..0.5) {
        let cfg = Config::default();
        let s = Schedule::new(0.8).with(id, t_on, 0.8);
        let w = synth_scenario(&[preset(id)], &s, FS, 2).unwrap();
        let idle = (t_on * 10.0).floor() as usize;
        for f in frame_stream(&w, &cfg.acquisition, Mode::Power).unwrap().iter().take(idle) {
            prop_assert!(power_features(f).unwrap().p.abs() < 0.1);
        }
    }

    #[test]
    fn adc_round_trip_within_half_lsb(
        v in prop::collection::vec(-390.0f64..390.0, 1..200),
        scale in 0.01f64..1.0,
    ) {
        let cfg = AcquisitionConfig::default();
        let i: Vec<f64> = v.iter().map(|x| x / 400.0 * 69.0 * scale).collect();
        let mut w = synth_scenario(&[], &Schedule::new(v.len() as f64 / FS), FS, 0).unwrap();
        w.v = v.clone();
        w.i = i.clone();
        let f = raw_conv(&quantize(&w, &cfg, Mode::Power).unwrap().raw, &cfg);
        for (a, b) in f.v.unwrap().iter().zip(&v) {
            prop_assert!((a - b).abs() <= cfg.lsb_v() / 2.0 + 1e-12);
        }
        for (a, b) in f.i.iter().zip(&i) {
            prop_assert!((a - b).abs() <= cfg.lsb_i() / 2.0 + 1e-12);
        }
        prop_assert_eq!(frame_len(FS), 640);
    }

    #[test]
    fn fft_is_linear(x in complex_vec(256), y in complex_vec(256), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let plan = FftPlan::new(256).unwrap();
        let mut mix: Vec<Complex64> = x.iter().zip(&y).map(|(p, q)| p * a + q * b).collect();
        let (mut fx, mut fy) = (x.clone(), y.clone());
        plan.transform(&mut mix);
        plan.transform(&mut fx);
        plan.transform(&mut fy);
        for k in 0..256 {
            prop_assert!((mix[k] - (fx[k] * a + fy[k] * b)).norm() < 1e-9);
        }
    }

    #[test]
    fn skip_reorder_matches_fft(x in prop::collection::vec(-50.0f64..50.0, 512), wanted in prop::collection::vec(0usize..=256, 1..16)) {
        let full = fft(&x, 512, FS).unwrap();
        let skip = fft_skip_reorder(&x, 512, FS, &wanted).unwrap();
        for (k, v) in skip.bins {
            prop_assert!((v - full.bins[k]).norm() < 1e-9);
        }
    }

    #[test]
    fn power_triangle_on_raw_data(pairs in prop::collection::vec((-300.0f64..300.0, -20.0f64..20.0), 2..400)) {
        let v: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let i: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let pf = power_features_of(&v, &i).unwrap();
        prop_assert!(pf.p.abs() <= pf.s + 1e-9);
        prop_assert!((pf.p * pf.p + pf.q * pf.q - pf.s * pf.s).abs() <= 1e-9 * pf.s * pf.s + 1e-300);
    }

    #[test]
    fn se_never_amplifies(
        x in prop::collection::vec(-5.0f64..5.0, 24),
        w in prop::collection::vec(-2.0f64..2.0, 2 * 4 + 2 + 4 * 2 + 4),
    ) {
        let x = Tensor::new(vec![4, 6], x).unwrap();
        let t = |r: std::ops::Range<usize>, shape: Vec<usize>| Tensor::new(shape, w[r].to_vec()).unwrap();
        let (f1w, f1b, f2w, f2b) = (t(0..8, vec![2, 4]), t(8..10, vec![2]), t(10..18, vec![4, 2]), t(18..22, vec![4]));
        let se = SeWeights { fc1_w: &f1w, fc1_b: &f1b, fc2_w: &f2w, fc2_b: &f2b };
        let (y, cache) = se_block(&x, &se).unwrap();
        prop_assert!(cache.scale.iter().all(|s| (0.0..=1.0).contains(s)));
        for (a, b) in y.data.iter().zip(&x.data) {
            prop_assert!(a.abs() <= b.abs());
        }
    }

    #[test]
    fn metric_identities(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..200)) {
        let pred: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let truth: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let m = evaluate(&pred, &truth, 4).unwrap();
        let trace: u64 = (0..4).map(|k| m.confusion[k][k]).sum();
        prop_assert!((m.accuracy - trace as f64 / pairs.len() as f64).abs() < 1e-12);
        for k in 0..4 {
            let row: u64 = m.confusion[k].iter().sum();
            prop_assert_eq!(row as usize, truth.iter().filter(|&&t| t == k).count());
        }
        for v in [m.accuracy, m.precision_macro, m.recall_macro, m.f1_macro] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn stratified_split_keeps_proportions(sizes in prop::collection::vec(10usize..300, 2..6), seed in any::<u64>()) {
        let items: Vec<(usize, usize)> = sizes.iter().enumerate().flat_map(|(c, &n)| (0..n).map(move |k| (c, k))).collect();
        let ratios = [0.7, 0.1, 0.2];
        let (a, b, c) = split_dataset(&items, |x| x.0, sizes.len(), ratios, seed).unwrap();
        prop_assert_eq!(a.len() + b.len() + c.len(), items.len());
        for (cls, &n) in sizes.iter().enumerate() {
            for (part, r) in [(&a, ratios[0]), (&b, ratios[1]), (&c, ratios[2])] {
                let got = part.iter().filter(|x| x.0 == cls).count() as f64;
                prop_assert!((got - n as f64 * r).abs() <= 1.0, "class {} got {} of {}", cls, got, n);
            }
        }
        let again = split_dataset(&items, |x| x.0, sizes.len(), ratios, seed).unwrap();
        prop_assert_eq!(again, (a, b, c));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// Zero noise, steps far above threshold: one mark per switch, ±1 cycle, nothing else.
    #[test]
    fn detection_is_complete(a in ids(), b in ids(), t0 in 0.45f64..0.6, gap in 0.6f64..0.9) {
        prop_assume!(a != b);
        let cfg = Config::default();
        let s = Schedule::new(t0 + 4.0 * gap)
            .with(a, t0, t0 + 2.0 * gap)
            .with(b, t0 + gap, t0 + 3.0 * gap);
        let w = synth_scenario(&[preset(a), preset(b)], &s, FS, 3).unwrap();
        for mode in [Mode::Power, Mode::Current] {
            let rec = detect_recording(&w, &cfg, mode).unwrap();
            prop_assert_eq!(rec.marks.len(), 4, "{:?}: {:?}", mode, rec.marks);
            for (t, _, on) in s.switch_times() {
                let k = cycle_at(&rec.view.grid, t, FS).unwrap();
                let dir = if on { Direction::On } else { Direction::Off };
                let hits = rec.marks.iter().filter(|m| m.direction == dir && m.switch_cycle().abs_diff(k) <= 1).count();
                prop_assert_eq!(hits, 1);
            }
        }
    }

    /// For purely resistive loads both detectors see the same steps.
    #[test]
    fn resistive_modes_agree(t_on in 0.45f64..0.7, len in 0.6f64..1.2, lamp_first in any::<bool>()) {
        let cfg = Config::default();
        let (x, y) = if lamp_first { ("lamp", "hairdryer") } else { ("hairdryer", "lamp") };
        let s = Schedule::new(t_on + 2.0 * len + 0.6).with(x, t_on, t_on + len).with(y, t_on + len / 2.0, t_on + 2.0 * len);
        let w = synth_scenario(&[preset("lamp"), preset("hairdryer")], &s, FS, 4).unwrap();
        let p = detect_recording(&w, &cfg, Mode::Power).unwrap().marks;
        let c = detect_recording(&w, &cfg, Mode::Current).unwrap().marks;
        let key = |m: &[edge_nilm::events::EventMark]| m.iter().map(|e| (e.j, e.direction)).collect::<Vec<_>>();
        prop_assert_eq!(key(&p), key(&c));
    }
}
