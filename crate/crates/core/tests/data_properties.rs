use chrono::{Duration, NaiveDate};
use proptest::prelude::*;
use relearn_core::data::{
    aggregate_30min, derive_valve_labels, fit_scaler, generate_synthetic, make_sequences, window_ranges, Column,
    SyntheticGenConfig, Target, TimeSeriesFrame, WindowSpec, LOOKBACK,
};

fn frame_from(period: u32, rows: &[[f64; 8]]) -> TimeSeriesFrame {
    let t0 = NaiveDate::from_ymd_opt(2020, 1, 6).unwrap().and_hms_opt(0, 0, 0).unwrap();
    let ts = (0..rows.len()).map(|i| t0 + Duration::minutes(period as i64 * i as i64)).collect();
    let cols: [Vec<f64>; 8] = std::array::from_fn(|c| rows.iter().map(|r| r[c]).collect());
    TimeSeriesFrame::new(ts, period, cols).unwrap()
}

fn row() -> impl Strategy<Value = [f64; 8]> {
    (
        20.0..100.0f64,
        0.0..100.0f64,
        20.0..80.0f64,
        0.0..900.0f64,
        65.0..75.0f64,
        55.0..75.0f64,
        prop_oneof![Just(0.0), 0.0..40.0f64],
        0.0..30.0f64,
    )
        .prop_map(|(a, b, c, d, e, f, g, h)| [a, b, c, d, e, f, g, h])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn aggregation_conserves_energy(rows in prop::collection::vec(row(), 6..80)) {
        let raw = frame_from(5, &rows);
        let (agg, _) = aggregate_30min(&raw).unwrap();
        let kept = agg.len() * 6;
        prop_assert_eq!(agg.len(), rows.len() / 6);
        for c in [Column::Hwe, Column::Cwe] {
            let src: f64 = raw.col(c)[..kept].iter().sum();
            let dst: f64 = agg.col(c).iter().sum();
            prop_assert!((src - dst).abs() <= 1e-9 * src.abs().max(1.0), "{:?}: {} vs {}", c, src, dst);
        }
    }

    #[test]
    fn scaler_maps_training_extremes_to_unit_interval(rows in prop::collection::vec(row(), 2..60), split in 0.3..1.0f64) {
        let f = frame_from(30, &rows);
        let end = ((rows.len() as f64 * split) as usize).max(1);
        let s = fit_scaler(&f, 0..end).unwrap();
        for c in Column::ALL {
            let xs = &f.col(c)[..end];
            let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(s.scale(c, lo), 0.0);
            if hi > lo {
                prop_assert_eq!(s.scale(c, hi), 1.0);
            }
        }
    }

    #[test]
    fn valve_labels_follow_heating(rows in prop::collection::vec(row(), 1..60)) {
        let f = frame_from(30, &rows);
        let labels = derive_valve_labels(&f);
        for (l, h) in labels.iter().zip(f.col(Column::Hwe)) {
            prop_assert_eq!(*l == 1, *h > 0.0);
        }
    }

    #[test]
    fn windows_are_contiguous(weeks in 3usize..40, train in 1u32..14, eval in 1u32..3, stride in 1u32..3) {
        let spec = WindowSpec { train_weeks: train, eval_weeks: eval, stride_weeks: stride };
        if let Ok(ws) = window_ranges(weeks * 336, 336, &spec) {
            for (k, w) in ws.iter().enumerate() {
                prop_assert_eq!(w.index, k);
                prop_assert_eq!(w.train.end, w.eval.start);
                prop_assert_eq!(w.train.len(), train as usize * 336);
                prop_assert_eq!(w.eval.len(), eval as usize * 336);
                prop_assert!(w.eval.end <= weeks * 336);
            }
        }
    }

    #[test]
    fn sequences_are_contiguous_lookbacks(rows in prop::collection::vec(row(), 7..50)) {
        let f = frame_from(30, &rows);
        let s = fit_scaler(&f, 0..f.len()).unwrap();
        let ds = make_sequences(&f, 0..f.len(), &s, Target::Cooling, LOOKBACK).unwrap();
        prop_assert_eq!(ds.len(), rows.len() - LOOKBACK);
        for (seq, &t) in ds.inputs.iter().zip(&ds.target_rows) {
            prop_assert_eq!(seq.len(), LOOKBACK);
            for (k, step) in seq.iter().enumerate() {
                let want = s.scale_state(&f.state_row(t - LOOKBACK + k));
                prop_assert_eq!(step.as_slice(), want.as_slice());
            }
            prop_assert_eq!(f.timestamps()[t] - f.timestamps()[t - 1], Duration::minutes(30));
        }
    }
}

#[test]
fn generator_is_reproducible() {
    let cfg = SyntheticGenConfig { n_weeks: 15, seed: 11, ..SyntheticGenConfig::default() };
    let a = generate_synthetic(&cfg).unwrap();
    let b = generate_synthetic(&cfg).unwrap();
    assert_eq!(a, b);
    let c = generate_synthetic(&SyntheticGenConfig { seed: 12, ..cfg }).unwrap();
    assert_ne!(a.col(Column::Oat), c.col(Column::Oat));
}

#[test]
fn post_shift_weeks_are_cold() {
    let cfg = SyntheticGenConfig::default();
    let raw = generate_synthetic(&cfg).unwrap();
    let per_week = raw.samples_per_week();
    for week in cfg.regime_shift_week as usize..cfg.n_weeks as usize {
        let wbt = &raw.col(Column::Wbt)[week * per_week..(week + 1) * per_week];
        let mean = wbt.iter().sum::<f64>() / wbt.len() as f64;
        assert!(mean < 52.0, "week {week} mean wbt {mean}");
    }
}
