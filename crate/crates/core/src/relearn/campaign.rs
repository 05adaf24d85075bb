use std::ops::Range;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::compare::{compare_variants, write_comparison, Comparison};
use super::{
    CampaignConfig, Checksums, ControllerVariant, IterationReport, IterationStatus, Saving, VariantResult,
};
use crate::data::{
    fit_scaler, generate_synthetic, ingest_csv, make_sequences, make_windows, prepare, Column, Prepared,
    ScalerParams, TimeSeriesFrame, Window, LOOKBACK, TIMESTAMP_FORMAT,
};
use crate::env::{
    operating_mode, reward_comfort, EnvConfig, reward_energy, scale_raw_observation, write_trajectory, BuildingEnv,
    ModelDynamics, TrajectoryRow,
};
use crate::error::{Error, Result};
use crate::models::{
    evaluate_models, predict_energy, predict_valve, train_model, warm_start_retrain, DynamicsModel, ModelCheckpoint,
    ModelKind, ModelSet,
};
use crate::ppo::{train as train_ppo, write_training_log, ActorCritic, Policy, PolicyCheckpoint};
use crate::util::mix_seed;

/// Models and policies carried between iterations.
#[derive(Clone, Debug, Default)]
pub struct CampaignState {
    /// Latest adaptive models and policy.
    pub adaptive: Option<(ModelSet, ActorCritic)>,
    /// First-window models and policy, never updated afterwards.
    pub frozen: Option<(ModelSet, ActorCritic)>,
}

pub struct CampaignResult {
    pub reports: Vec<IterationReport>,
    pub comparison: Comparison,
    pub config_hash: String,
}

impl CampaignResult {
    pub fn failed_weeks(&self) -> Vec<usize> {
        self.reports.iter().filter(|r| r.status == IterationStatus::Failed).map(|r| r.week).collect()
    }
}

/// Reads or generates the 5-minute series and prepares it.
pub fn load_campaign_data(cfg: &CampaignConfig) -> Result<Prepared> {
    let raw = match &cfg.data.csv {
        Some(p) => ingest_csv(p)?,
        None => generate_synthetic(&cfg.synthetic)?,
    };
    let prepared = prepare(&raw, &cfg.clean)?;
    log::info!(
        "prepared {} half-hour rows ({} outliers replaced, {} samples dropped)",
        prepared.frame.len(),
        prepared.replaced,
        prepared.dropped
    );
    Ok(prepared)
}

/// One controller's pass over an evaluation week.
pub struct WeekReplay {
    pub rows: Vec<TrajectoryRow>,
    pub heat: f64,
    pub cool: f64,
    pub mean_reward: f64,
}

/// Runs `policy` deterministically over the target rows `eval` of `frame`,
/// with energies predicted by `models`. The 7 rows before `eval` prime the
/// history. With `obs_scaler` the policy sees observations scaled in that
/// frame instead of the models' own.
pub fn replay_week(
    models: Arc<ModelSet>,
    policy: &Policy,
    obs_scaler: Option<&ScalerParams>,
    frame: &TimeSeriesFrame,
    eval: Range<usize>,
    env_cfg: &EnvConfig,
) -> Result<WeekReplay> {
    if eval.start < LOOKBACK + 1 || eval.end > frame.len() || eval.is_empty() {
        return Err(Error::input(format!("evaluation rows {eval:?} do not fit the data with the lookback history")));
    }
    let window = Arc::new(frame.slice(eval.start - LOOKBACK - 1..eval.end));
    let scaler = models.scaler.clone();
    let dynamics = Arc::new(ModelDynamics::new(models, env_cfg.valve_threshold));
    let mut env = BuildingEnv::new(window, scaler, dynamics, env_cfg.clone())?;
    env.reset()?;
    let mut out = WeekReplay { rows: Vec::new(), heat: 0.0, cool: 0.0, mean_reward: 0.0 };
    let mut t = LOOKBACK;
    loop {
        let obs = match obs_scaler {
            Some(sc) => scale_raw_observation(sc, &env.raw_observation()),
            None => env.observation(),
        };
        let a = policy.act_deterministic(&obs)?;
        let r = env.step(a)?;
        out.heat += r.info.rl_heat;
        out.cool += r.info.rl_cool;
        out.mean_reward += r.reward;
        out.rows.push(TrajectoryRow::from_step(t, a, &r));
        t += 1;
        if r.done {
            break;
        }
    }
    out.mean_reward /= out.rows.len() as f64;
    Ok(out)
}

/// The recorded operation over the same steps as [`replay_week`].
pub fn rbc_rows(frame: &TimeSeriesFrame, eval: Range<usize>, scaler: &ScalerParams, vartheta: f64) -> Vec<TrajectoryRow> {
    let window = frame.slice(eval.start - LOOKBACK - 1..eval.end);
    (LOOKBACK..window.len() - 1)
        .map(|t| {
            let sp = window.value(Column::Sat, t);
            let heat = window.value(Column::Hwe, t + 1);
            let cool = window.value(Column::Cwe, t + 1);
            let valve = heat > 0.0;
            let (h, c) = (scaler.scale(Column::Hwe, heat), scaler.scale(Column::Cwe, cool));
            let re = reward_energy(valve, h, valve, h, c, c);
            let rc = reward_comfort(window.value(Column::AvgStpt, t), sp);
            TrajectoryRow {
                t,
                setpoint: sp,
                sat: sp,
                action: sp - window.value(Column::Sat, t - 1),
                reward: vartheta * re + (1.0 - vartheta) * rc,
                reward_energy: re,
                reward_comfort: rc,
                mode: operating_mode(window.value(Column::Wbt, t)),
                rl_heat: heat,
                rl_cool: cool,
                rbc_heat: heat,
                rbc_cool: cool,
            }
        })
        .collect()
}

fn kind_stream(kind: ModelKind) -> u64 {
    match kind {
        ModelKind::Heating => 1,
        ModelKind::Valve => 2,
        ModelKind::Cooling => 3,
    }
}

/// Fits the three models on `window.train` in the frame of `scaler`: from
/// scratch without `prev`, otherwise warm-started from it.
pub fn train_dynamics(
    prev: Option<&ModelSet>,
    frame: &TimeSeriesFrame,
    window: &Window,
    scaler: &ScalerParams,
    cfg: &CampaignConfig,
) -> Result<ModelSet> {
    let trained = ModelKind::ALL
        .par_iter()
        .map(|&kind| {
            let ds = make_sequences(frame, window.train.clone(), scaler, kind.target(), LOOKBACK)?;
            let seed = mix_seed(cfg.seed, 0x1000 * (window.index as u64 + 1) + kind_stream(kind));
            let (model, hist) = match prev {
                None => {
                    let init = DynamicsModel::new(kind, mix_seed(cfg.seed, kind_stream(kind)));
                    train_model(&init, &ds, cfg.train.get(kind), seed)?
                }
                Some(set) => warm_start_retrain(set.get(kind), &ds, cfg.retrain.get(kind), seed)?,
            };
            log::info!(
                "window {}: {} model trained on {} sequences, best epoch {:?}",
                window.index,
                kind.name(),
                hist.n_train,
                hist.best_epoch
            );
            Ok(model)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut it = trained.into_iter();
    Ok(ModelSet {
        heating: it.next().expect("three models"),
        valve: it.next().expect("three models"),
        cooling: it.next().expect("three models"),
        scaler: scaler.clone(),
    })
}

/// One weekly iteration: retrain on `window.train`, evaluate on
/// `window.eval`. The state is only updated when every step succeeds, so a
/// failed week leaves the previous checkpoints in place.
pub fn run_iteration(
    state: &mut CampaignState,
    frame: &TimeSeriesFrame,
    window: &Window,
    cfg: &CampaignConfig,
    out_dir: Option<&Path>,
) -> Result<IterationReport> {
    if window.eval.start < LOOKBACK + 1 {
        return Err(Error::input("evaluation week has no room for the lookback history"));
    }
    let week = window.eval.start / frame.samples_per_week();
    let scaler = fit_scaler(frame, window.train.clone())?;
    let prev = state.adaptive.as_ref();
    let models = Arc::new(train_dynamics(prev.map(|p| &p.0), frame, window, &scaler, cfg)?);
    let dynamics = Arc::new(ModelDynamics::new(models.clone(), cfg.env.valve_threshold));

    let mut ppo_cfg = cfg.ppo.clone();
    ppo_cfg.seed = mix_seed(cfg.seed, 0x5050_0000 + window.index as u64);
    if prev.is_some() {
        ppo_cfg.total_steps = cfg.campaign.ppo_retrain_steps;
    }
    let train_frame = Arc::new(frame.slice(window.train.clone()));
    let make_env = |_| BuildingEnv::new(train_frame.clone(), scaler.clone(), dynamics.clone(), cfg.env.clone());
    let ppo = train_ppo(make_env, &ppo_cfg, prev.map(|p| p.1.clone()))?;
    if !ppo.ac.policy.all_finite() {
        return Err(Error::Numeric("policy parameters became non-finite".into()));
    }

    let eval = evaluate_models(&models, frame, window.eval.clone(), week)?;
    let (frozen_models, frozen_ac) = match &state.frozen {
        Some((m, a)) => (m.clone(), a.clone()),
        None => ((*models).clone(), ppo.ac.clone()),
    };
    let static_eval = evaluate_models(&frozen_models, frame, window.eval.clone(), week)?;

    // Every controller is replayed through the latest models.
    let rbc_heat: f64 = frame.col(Column::Hwe)[window.eval.clone()].iter().sum();
    let rbc_cool: f64 = frame.col(Column::Cwe)[window.eval.clone()].iter().sum();
    let rbc = (rbc_heat, rbc_cool);

    let mut variants = Vec::new();
    let mut trajectories: Vec<(ControllerVariant, Vec<TrajectoryRow>)> = Vec::new();
    for &v in &cfg.campaign.variants {
        let replayed = match v {
            ControllerVariant::Adaptive => Some(replay_week(models.clone(), &ppo.ac.policy, None, frame, window.eval.clone(), &cfg.env)?),
            ControllerVariant::Static => Some(replay_week(
                models.clone(),
                &frozen_ac.policy,
                Some(&frozen_models.scaler),
                frame,
                window.eval.clone(),
                &cfg.env,
            )?),
            ControllerVariant::Rbc => None,
        };
        match replayed {
            Some(r) => {
                variants.push(VariantResult::new(v, r.heat, r.cool, rbc, Some(r.mean_reward)));
                trajectories.push((v, r.rows));
            }
            None => {
                variants.push(VariantResult::new(v, rbc_heat, rbc_cool, rbc, None));
                trajectories.push((v, rbc_rows(frame, window.eval.clone(), &scaler, cfg.env.vartheta)));
            }
        }
    }

    let report = IterationReport {
        week,
        window: window.index,
        status: IterationStatus::Ok,
        error: None,
        cvrmse_h: eval.cvrmse_h,
        cvrmse_c: eval.cvrmse_c,
        roc_auc: eval.roc_auc,
        static_cvrmse_h: static_eval.cvrmse_h,
        static_cvrmse_c: static_eval.cvrmse_c,
        static_roc_auc: static_eval.roc_auc,
        mean_episode_reward: ppo.log.last().map(|l| l.mean_episode_reward),
        ppo_iterations: ppo.log.len(),
        variants,
        checksums: Checksums {
            heating_ffn: models.heating.ffn_checksum(),
            valve_ffn: models.valve.ffn_checksum(),
            cooling_ffn: models.cooling.ffn_checksum(),
            adaptive_policy: ppo.ac.policy_checksum(),
            static_policy: frozen_ac.policy_checksum(),
        },
    };

    if let Some(dir) = out_dir {
        let wd = dir.join(format!("week_{week}"));
        let ck = wd.join("checkpoints");
        std::fs::create_dir_all(&ck)?;
        let hash = cfg.hash();
        for kind in ModelKind::ALL {
            ModelCheckpoint {
                model: models.get(kind).clone(),
                scaler: scaler.clone(),
                window: window.index,
                seed: cfg.seed,
                config_hash: hash.clone(),
            }
            .save(&ck.join(format!("{}.json", kind.name())))?;
        }
        PolicyCheckpoint { ac: ppo.ac.clone(), config_hash: hash.clone(), seed: cfg.seed }.save(&ck.join("policy.json"))?;
        PolicyCheckpoint { ac: frozen_ac.clone(), config_hash: hash.clone(), seed: cfg.seed }
            .save(&ck.join("static_policy.json"))?;
        let rows: Vec<(Option<&str>, &TrajectoryRow)> =
            trajectories.iter().flat_map(|(v, rs)| rs.iter().map(move |r| (Some(v.name()), r))).collect();
        write_trajectory(&rows, &wd.join("trajectories.csv"))?;
        write_summary(std::slice::from_ref(&report), &wd.join("report.csv"))?;
        write_training_log(&ppo.log, &wd.join("ppo_log.csv"))?;
        write_predictions(&models, frame, window, &wd.join("predictions.csv"))?;
        for f in ["trajectories.csv", "report.csv", "ppo_log.csv", "predictions.csv"] {
            write_meta(&wd.join(f), &hash, cfg.seed)?;
        }
    }

    if state.frozen.is_none() {
        state.frozen = Some((frozen_models, frozen_ac));
    }
    state.adaptive = Some(((*models).clone(), ppo.ac));
    Ok(report)
}

/// Per-row model outputs on the evaluation week:
/// `timestamp,hwe,hwe_pred,cwe,cwe_pred,valve,valve_prob`.
fn write_predictions(models: &ModelSet, frame: &TimeSeriesFrame, window: &Window, path: &Path) -> Result<()> {
    let sc = &models.scaler;
    let rows = window
        .eval
        .clone()
        .into_par_iter()
        .map(|j| {
            let seq: Vec<Vec<f64>> = (j - LOOKBACK..j).map(|r| sc.scale_state(&frame.state_row(r)).to_vec()).collect();
            let h = predict_energy(&models.heating, &seq, sc)?;
            let c = predict_energy(&models.cooling, &seq, sc)?;
            let (_, p) = predict_valve(&models.valve, &seq, 0.5)?;
            Ok((j, h, c, p))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["timestamp", "hwe", "hwe_pred", "cwe", "cwe_pred", "valve", "valve_prob"])?;
    for (j, h, c, p) in rows {
        let hwe = frame.value(Column::Hwe, j);
        w.write_record([
            frame.timestamps()[j].format(TIMESTAMP_FORMAT).to_string(),
            hwe.to_string(),
            h.to_string(),
            frame.value(Column::Cwe, j).to_string(),
            c.to_string(),
            u8::from(hwe > 0.0).to_string(),
            p.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct Meta<'a> {
    config_hash: &'a str,
    seed: u64,
}

/// `<file>.meta.json` next to a CSV artifact.
pub fn write_meta(path: &Path, config_hash: &str, seed: u64) -> Result<()> {
    let mut p = path.as_os_str().to_owned();
    p.push(".meta.json");
    std::fs::write(PathBuf::from(p), serde_json::to_vec_pretty(&Meta { config_hash, seed })?)?;
    Ok(())
}

pub const SUMMARY_HEADER: [&str; 16] = [
    "week",
    "variant",
    "status",
    "heat_kbtu",
    "cool_kbtu",
    "total_kbtu",
    "heat_savings_pct",
    "heat_savings_kbtu",
    "cool_savings_pct",
    "cool_savings_kbtu",
    "total_savings_pct",
    "total_savings_kbtu",
    "cvrmse_h",
    "cvrmse_c",
    "roc_auc",
    "mean_episode_reward",
];

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// One row per week and variant under [`SUMMARY_HEADER`]. A failed week
/// gets one row with `status=failed` and empty values.
pub fn write_summary(reports: &[IterationReport], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SUMMARY_HEADER)?;
    for r in reports {
        if r.status == IterationStatus::Failed {
            let mut rec = vec![r.week.to_string(), String::new(), r.status.name().to_string()];
            rec.resize(SUMMARY_HEADER.len(), String::new());
            w.write_record(&rec)?;
            continue;
        }
        for v in &r.variants {
            let s = |x: &Saving| [opt(x.pct), opt(x.kbtu)];
            let mut rec = vec![r.week.to_string(), v.variant.name().to_string(), r.status.name().to_string()];
            rec.extend([v.heat.to_string(), v.cool.to_string(), v.total.to_string()]);
            rec.extend(s(&v.heat_savings));
            rec.extend(s(&v.cool_savings));
            rec.extend(s(&v.total_savings));
            rec.extend([opt(r.cvrmse_h), opt(r.cvrmse_c), opt(r.roc_auc), opt(r.mean_episode_reward)]);
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct CampaignJson<'a> {
    config_hash: &'a str,
    seed: u64,
    config: &'a CampaignConfig,
    reports: &'a [IterationReport],
    comparison: &'a Comparison,
}

/// Runs the configured weekly iterations in order. An iteration that fails
/// is recorded and skipped; the next one starts from the last good state.
pub fn run_campaign(cfg: &CampaignConfig, out_dir: Option<&Path>) -> Result<CampaignResult> {
    cfg.validate()?;
    let prepared = load_campaign_data(cfg)?;
    let frame = prepared.frame;
    let windows = make_windows(&frame, &cfg.window)?;
    let first = cfg.campaign.first_window;
    let n = cfg.campaign.n_weeks.unwrap_or(windows.len().saturating_sub(first));
    if n == 0 || first + n > windows.len() {
        return Err(Error::config(format!(
            "campaign needs windows {first}..{} but the data provides {}",
            first + n,
            windows.len()
        )));
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
    }
    let mut state = CampaignState::default();
    let mut reports = Vec::with_capacity(n);
    let mut last_reward: Option<f64> = None;
    for window in &windows[first..first + n] {
        let week = window.eval.start / frame.samples_per_week();
        log::info!("iteration {}: training on weeks before {week}, evaluating week {week}", window.index);
        match run_iteration(&mut state, &frame, window, cfg, out_dir) {
            Ok(r) => {
                let reward = r.variant(ControllerVariant::Adaptive).and_then(|v| v.mean_reward);
                if let (Some(prev), Some(cur)) = (last_reward, reward) {
                    if cur < prev {
                        log::info!("week {week}: adaptive evaluation reward fell from {prev:.4} to {cur:.4}");
                    }
                }
                last_reward = reward.or(last_reward);
                reports.push(r);
            }
            Err(e) => {
                log::error!("iteration {} (week {week}) failed: {e}", window.index);
                reports.push(IterationReport::failed(week, window.index, &e));
            }
        }
    }
    let comparison = compare_variants(&reports);
    let config_hash = cfg.hash();
    if let Some(dir) = out_dir {
        write_summary(&reports, &dir.join("summary.csv"))?;
        write_meta(&dir.join("summary.csv"), &config_hash, cfg.seed)?;
        write_comparison(&comparison, &dir.join("comparison.csv"))?;
        write_meta(&dir.join("comparison.csv"), &config_hash, cfg.seed)?;
        let js = CampaignJson { config_hash: &config_hash, seed: cfg.seed, config: cfg, reports: &reports, comparison: &comparison };
        std::fs::write(dir.join("campaign.json"), serde_json::to_vec_pretty(&js)?)?;
    }
    Ok(CampaignResult { reports, comparison, config_hash })
}
