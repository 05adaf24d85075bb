use std::sync::Arc;

use chrono::{Duration, NaiveDate};
use proptest::prelude::*;
use relearn_core::data::{fit_scaler, Column, TimeSeriesFrame, LOOKBACK};
use relearn_core::env::{
    reward_comfort, BuildingEnv, Dynamics, EnvConfig, ModelDynamics, Prediction, COMFORT_BAND,
};
use relearn_core::models::{DynamicsModel, ModelKind, ModelSet};

/// `rows` half-hours with a constant 70 F zone set point and discharge
/// temperature, and weather that varies by row.
fn flat_frame(rows: usize) -> TimeSeriesFrame {
    let t0 = NaiveDate::from_ymd_opt(2020, 1, 6).unwrap().and_hms_opt(0, 0, 0).unwrap();
    let ts = (0..rows).map(|i| t0 + Duration::minutes(30 * i as i64)).collect();
    let f = |k: f64| (0..rows).map(|i| 50.0 + 10.0 * (i as f64 * k).sin()).collect::<Vec<_>>();
    let hwe = (0..rows).map(|i| if i % 4 == 0 { 0.0 } else { 5.0 + (i % 7) as f64 }).collect();
    let cwe = (0..rows).map(|i| 2.0 + (i % 5) as f64).collect();
    TimeSeriesFrame::new(ts, 30, [f(0.1), f(0.2), f(0.3), f(0.05), vec![70.0; rows], vec![70.0; rows], hwe, cwe])
        .unwrap()
}

/// Predicts exactly what the recorded rule-based controller used.
struct Replay(Arc<TimeSeriesFrame>);

impl Dynamics for Replay {
    type RowFeatures = ();

    fn row_features(&self, _: &[f64; 6]) -> relearn_core::Result<()> {
        Ok(())
    }

    fn predict(&self, _: &[()], row: usize) -> relearn_core::Result<Prediction> {
        let h = self.0.value(Column::Hwe, row);
        Ok(Prediction { valve_on: h > 0.0, valve_prob: f64::from(u8::from(h > 0.0)), heat: h, cool: self.0.value(Column::Cwe, row) })
    }
}

fn untrained(frame: &TimeSeriesFrame) -> ModelDynamics {
    let scaler = fit_scaler(frame, 0..frame.len()).unwrap();
    let set = ModelSet {
        heating: DynamicsModel::new(ModelKind::Heating, 2),
        valve: DynamicsModel::new(ModelKind::Valve, 2),
        cooling: DynamicsModel::new(ModelKind::Cooling, 2),
        scaler,
    };
    ModelDynamics::new(Arc::new(set), 0.5)
}

#[test]
fn matching_the_baseline_scores_half_at_even_weights() {
    let frame = Arc::new(flat_frame(40));
    let scaler = fit_scaler(&frame, 0..40).unwrap();
    let mut env =
        BuildingEnv::new(frame.clone(), scaler, Arc::new(Replay(frame)), EnvConfig::default()).unwrap();
    env.reset().unwrap();
    loop {
        let r = env.step(0.0).unwrap();
        assert_eq!(r.reward_energy, 0.0);
        assert_eq!(r.reward_comfort, 1.0);
        assert_eq!(r.reward, 0.5);
        if r.done {
            break;
        }
    }
}

#[test]
fn episode_length_and_reset() {
    for len in [8, 9, 20, 100] {
        let frame = Arc::new(flat_frame(len));
        let scaler = fit_scaler(&frame, 0..len).unwrap();
        let mut env = BuildingEnv::new(frame.clone(), scaler, Arc::new(untrained(&frame)), EnvConfig::default()).unwrap();
        let s0 = env.reset().unwrap();
        assert_eq!(s0.t, LOOKBACK);
        assert_eq!(s0.history.len(), LOOKBACK);
        assert_eq!(env.reset().unwrap(), s0);
        let mut steps = 0;
        while !env.step(0.5).unwrap().done {
            steps += 1;
        }
        assert_eq!(steps + 1, len - 7);
        assert_eq!(env.steps_per_episode(), len - 7);
        assert!(env.step(0.0).is_err());
    }
    let frame = Arc::new(flat_frame(6));
    let scaler = fit_scaler(&frame, 0..6).unwrap();
    assert!(BuildingEnv::new(frame.clone(), scaler, Arc::new(untrained(&frame)), EnvConfig::default()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn episodes_replay_bit_for_bit(actions in prop::collection::vec(-3.0..3.0f64, 1..60), vartheta in 0.0..=1.0f64) {
        let frame = Arc::new(flat_frame(80));
        let scaler = fit_scaler(&frame, 0..80).unwrap();
        let dynamics = Arc::new(untrained(&frame));
        let cfg = EnvConfig { vartheta, ..EnvConfig::default() };
        let run = || {
            let mut env = BuildingEnv::new(frame.clone(), scaler.clone(), dynamics.clone(), cfg.clone()).unwrap();
            env.reset().unwrap();
            actions.iter().map(|&a| env.step(a).unwrap()).collect::<Vec<_>>()
        };
        let (a, b) = (run(), run());
        prop_assert_eq!(&a, &b);
        for r in &a {
            prop_assert!((55.0..=75.0).contains(&r.next_state.setpoint));
            prop_assert!(r.next_state.f_h >= 0.0 && r.next_state.history.len() == LOOKBACK);
        }
    }

    #[test]
    fn comfort_is_capped_and_continuous(sp in 40.0..90.0f64, delta in 0.0..COMFORT_BAND, eps in 1e-9..1e-6f64) {
        prop_assert!(reward_comfort(sp, sp + delta) <= 1.0);
        prop_assert!(reward_comfort(sp, sp - delta - 20.0) <= 1.0);
        let d2 = (delta + eps).min(COMFORT_BAND);
        let jump = (reward_comfort(sp, sp + delta) - reward_comfort(sp, sp + d2)).abs();
        prop_assert!(jump <= 2.0 * (d2 - delta) + 1e-12);
    }
}
