use proptest::prelude::*;
use relearn_core::data::{
    fit_scaler, generate_synthetic, make_sequences, prepare, CleanConfig, SyntheticGenConfig, TimeSeriesFrame, LOOKBACK,
};
use relearn_core::models::{
    cvrmse, roc_auc, train_model, warm_start_retrain, DynamicsModel, ModelKind, TrainConfig,
};

fn small_frame() -> TimeSeriesFrame {
    let raw = generate_synthetic(&SyntheticGenConfig { n_weeks: 15, seed: 3, ..SyntheticGenConfig::default() }).unwrap();
    prepare(&raw, &CleanConfig::default()).unwrap().frame
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn cvrmse_is_scale_free(
        pairs in prop::collection::vec((0.1..100.0f64, 0.1..100.0f64), 1..40),
        c in 0.01..1000.0f64,
    ) {
        let (pred, truth): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let a = cvrmse(&pred, &truth).unwrap();
        let sp: Vec<f64> = pred.iter().map(|x| x * c).collect();
        let st: Vec<f64> = truth.iter().map(|x| x * c).collect();
        let b = cvrmse(&sp, &st).unwrap();
        prop_assert!(a >= 0.0);
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
    }

    #[test]
    fn auc_ignores_monotone_transforms(
        xs in prop::collection::vec((-5.0..5.0f64, any::<bool>()), 2..60),
    ) {
        let (scores, labels): (Vec<f64>, Vec<bool>) = xs.into_iter().unzip();
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let a = roc_auc(&scores, &labels).unwrap();
        let warped: Vec<f64> = scores.iter().map(|s| (s * 0.7).exp() + s.powi(3)).collect();
        let b = roc_auc(&warped, &labels).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert_eq!(a, b);
    }
}

#[test]
fn early_stopping_returns_best_epoch() {
    let f = small_frame();
    let per_week = f.samples_per_week();
    let s = fit_scaler(&f, 0..2 * per_week).unwrap();
    let ds = make_sequences(&f, 0..2 * per_week, &s, ModelKind::Cooling.target(), LOOKBACK).unwrap();
    let cfg = TrainConfig { max_epochs: 12, patience: 2, ..TrainConfig::default() };
    let (_, hist) = train_model(&DynamicsModel::new(ModelKind::Cooling, 1), &ds, &cfg, 9).unwrap();
    let best = hist.best_epoch.expect("trained");
    let best_loss = hist.epochs[best - 1].val_loss;
    assert!(hist.epochs[best..].iter().all(|e| best_loss <= e.val_loss));
    assert!(hist.epochs.iter().all(|e| best_loss <= e.val_loss));
}

#[test]
fn training_is_deterministic_and_retraining_freezes_features() {
    let f = small_frame();
    let per_week = f.samples_per_week();
    let s = fit_scaler(&f, 0..2 * per_week).unwrap();
    for kind in ModelKind::ALL {
        let ds = make_sequences(&f, 0..2 * per_week, &s, kind.target(), LOOKBACK).unwrap();
        let cfg = TrainConfig { max_epochs: 2, ..TrainConfig::default() };
        let init = DynamicsModel::new(kind, 4);
        let (a, _) = train_model(&init, &ds, &cfg, 1).unwrap();
        let (b, _) = train_model(&init, &ds, &cfg, 1).unwrap();
        assert_eq!(a, b, "{}", kind.name());

        let ds2 = make_sequences(&f, per_week..3 * per_week, &s, kind.target(), LOOKBACK).unwrap();
        let (r, _) = warm_start_retrain(&a, &ds2, &cfg, 2).unwrap();
        assert_eq!(r.ffn_checksum(), a.ffn_checksum(), "{}", kind.name());
        assert_ne!(r.stack.checksum(), a.stack.checksum(), "{}", kind.name());
    }
}
