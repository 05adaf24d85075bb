use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    apply_action, exogenous_lookup, operating_mode, reward_comfort, reward_energy, sat_transition, EnvConfig,
    Environment, ExogenousState, OperatingMode,
};
use crate::data::{Column, ScalerParams, TimeSeriesFrame, LOOKBACK};
use crate::error::{Error, Result};
use crate::models::{energy_from_output, ModelKind, ModelSet};

/// Model outputs for the interval after the current history.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub valve_on: bool,
    pub valve_prob: f64,
    /// Heating energy if the valve were open, kBTU per interval.
    pub heat: f64,
    pub cool: f64,
}

/// Source of energy and valve predictions. Per-row work is split out so an
/// implementation can cache it across the sliding history.
pub trait Dynamics: Send + Sync {
    type RowFeatures: Clone + Send;

    fn row_features(&self, scaled: &[f64; 6]) -> Result<Self::RowFeatures>;

    /// `history` holds the features of the last 6 rows; `target_row` is the
    /// window row being predicted.
    fn predict(&self, history: &[Self::RowFeatures], target_row: usize) -> Result<Prediction>;
}

/// The trained models, with feature-layer outputs cached per row.
#[derive(Clone, Debug)]
pub struct ModelDynamics {
    pub models: Arc<ModelSet>,
    pub valve_threshold: f64,
}

impl ModelDynamics {
    pub fn new(models: Arc<ModelSet>, valve_threshold: f64) -> Self {
        Self { models, valve_threshold }
    }
}

impl Dynamics for ModelDynamics {
    type RowFeatures = [Vec<f64>; 3];

    fn row_features(&self, scaled: &[f64; 6]) -> Result<Self::RowFeatures> {
        let m = &self.models;
        Ok([m.heating.features(scaled)?, m.valve.features(scaled)?, m.cooling.features(scaled)?])
    }

    fn predict(&self, history: &[Self::RowFeatures], _target_row: usize) -> Result<Prediction> {
        let m = &self.models;
        let pick = |k: usize| history.iter().map(|f| f[k].clone()).collect::<Vec<_>>();
        let heat_raw = m.heating.output_from_features(&pick(0))?;
        let valve_prob = m.valve.output_from_features(&pick(1))?;
        let cool_raw = m.cooling.output_from_features(&pick(2))?;
        if !(heat_raw.is_finite() && valve_prob.is_finite() && cool_raw.is_finite()) {
            return Err(Error::Numeric("non-finite model output".into()));
        }
        Ok(Prediction {
            valve_on: valve_prob >= self.valve_threshold,
            valve_prob,
            heat: energy_from_output(ModelKind::Heating, heat_raw, &m.scaler)?,
            cool: energy_from_output(ModelKind::Cooling, cool_raw, &m.scaler)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub exo: ExogenousState,
    pub sat: f64,
    pub setpoint: f64,
    /// Last predicted heating energy (zero with the valve shut).
    pub f_h: f64,
    pub f_c: f64,
    /// Scaled state vectors of the last 6 rows, oldest first.
    pub history: Vec<[f64; 6]>,
    pub t: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub mode: OperatingMode,
    pub rl_valve: bool,
    pub rl_heat: f64,
    pub rl_cool: f64,
    pub rbc_valve: bool,
    pub rbc_heat: f64,
    pub rbc_cool: f64,
    /// Window row the energies refer to.
    pub energy_row: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub next_state: EnvState,
    pub reward: f64,
    pub reward_energy: f64,
    pub reward_comfort: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// One episode is a single pass over the window. Rows `0..6` prime the
/// history; each step writes the agent's discharge temperature into the
/// next row and scores the energy of the row after it against the recorded
/// rule-based operation. A window of `L` rows gives `L - 7` steps.
pub struct BuildingEnv<D: Dynamics> {
    window: Arc<TimeSeriesFrame>,
    scaler: ScalerParams,
    dynamics: Arc<D>,
    cfg: EnvConfig,
    state: Option<EnvState>,
    feats: VecDeque<D::RowFeatures>,
    done: bool,
}

impl<D: Dynamics> BuildingEnv<D> {
    pub fn new(window: Arc<TimeSeriesFrame>, scaler: ScalerParams, dynamics: Arc<D>, cfg: EnvConfig) -> Result<Self> {
        cfg.validate()?;
        if window.len() < LOOKBACK + 2 {
            return Err(Error::input(format!("environment window of {} rows is too short", window.len())));
        }
        Ok(Self { window, scaler, dynamics, cfg, state: None, feats: VecDeque::new(), done: true })
    }

    pub fn window(&self) -> &TimeSeriesFrame {
        &self.window
    }

    pub fn scaler(&self) -> &ScalerParams {
        &self.scaler
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn steps_per_episode(&self) -> usize {
        self.window.len() - LOOKBACK - 1
    }

    pub fn state(&self) -> Option<&EnvState> {
        self.state.as_ref()
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn reset(&mut self) -> Result<EnvState> {
        let w = &self.window;
        let history: Vec<[f64; 6]> = (0..LOOKBACK).map(|r| self.scaler.scale_state(&w.state_row(r))).collect();
        self.feats = history.iter().map(|h| self.dynamics.row_features(h)).collect::<Result<_>>()?;
        let last = LOOKBACK - 1;
        let sat = w.value(Column::Sat, last);
        let state = EnvState {
            exo: exogenous_lookup(w, last).expect("window has primed rows"),
            sat,
            setpoint: sat,
            f_h: w.value(Column::Hwe, last),
            f_c: w.value(Column::Cwe, last),
            history,
            t: LOOKBACK,
        };
        self.state = Some(state.clone());
        self.done = false;
        Ok(state)
    }

    pub fn step(&mut self, delta: f64) -> Result<StepResult> {
        if self.done {
            return Err(Error::Usage("step called on a finished episode; call reset".into()));
        }
        let mut s = self.state.clone().expect("reset before step");
        let t = s.t;
        let setpoint = apply_action(s.setpoint, delta)?;
        let sat = sat_transition(s.sat, setpoint, self.cfg.alpha);
        let exo = exogenous_lookup(&self.window, t).expect("t is inside the window while not done");
        let raw_row = [exo.oat, exo.orh, exo.wbt, exo.sol, exo.avg_stpt, sat];
        let scaled = self.scaler.scale_state(&raw_row);
        let f = self.dynamics.row_features(&scaled)?;
        self.feats.pop_front();
        self.feats.push_back(f);
        s.history.remove(0);
        s.history.push(scaled);

        let target = t + 1;
        let pred = self.dynamics.predict(self.feats.make_contiguous(), target)?;
        let w = &self.window;
        let rbc_heat = w.value(Column::Hwe, target);
        let rbc_cool = w.value(Column::Cwe, target);
        let rbc_valve = rbc_heat > 0.0;
        let sc = &self.scaler;
        let r_energy = reward_energy(
            rbc_valve,
            sc.scale(Column::Hwe, rbc_heat),
            pred.valve_on,
            sc.scale(Column::Hwe, pred.heat),
            sc.scale(Column::Cwe, rbc_cool),
            sc.scale(Column::Cwe, pred.cool),
        );
        let r_comfort = reward_comfort(exo.avg_stpt, setpoint);
        let th = self.cfg.vartheta;
        let reward = th * r_energy + (1.0 - th) * r_comfort;
        if !reward.is_finite() {
            return Err(Error::Numeric(format!("non-finite reward at row {t}")));
        }

        let rl_heat = if pred.valve_on { pred.heat } else { 0.0 };
        s.exo = exo;
        s.sat = sat;
        s.setpoint = setpoint;
        s.f_h = rl_heat;
        s.f_c = pred.cool;
        s.t = t + 1;
        self.done = s.t + 1 >= w.len();
        self.state = Some(s.clone());
        Ok(StepResult {
            next_state: s,
            reward,
            reward_energy: r_energy,
            reward_comfort: r_comfort,
            done: self.done,
            info: StepInfo {
                mode: operating_mode(exo.wbt),
                rl_valve: pred.valve_on,
                rl_heat,
                rl_cool: pred.cool,
                rbc_valve,
                rbc_heat,
                rbc_cool,
                energy_row: target,
            },
        })
    }

    /// Scaled latest state row followed by the scaled set point.
    pub fn observation(&self) -> Vec<f64> {
        let s = self.state.as_ref().expect("reset before observing");
        observation_from(&self.scaler, s)
    }

    /// Unscaled counterpart of [`observation`](Self::observation).
    pub fn raw_observation(&self) -> [f64; 7] {
        let s = self.state.as_ref().expect("reset before observing");
        let e = &s.exo;
        [e.oat, e.orh, e.wbt, e.sol, e.avg_stpt, s.sat, s.setpoint]
    }
}

/// Observation layout shared by every policy: 6 scaled state features and
/// the scaled set point.
pub fn observation_from(scaler: &ScalerParams, s: &EnvState) -> Vec<f64> {
    let mut o = s.history.last().expect("history is primed").to_vec();
    o.push(scaler.scale(Column::Sat, s.setpoint));
    o
}

/// Scales a raw observation from [`BuildingEnv::raw_observation`].
pub fn scale_raw_observation(scaler: &ScalerParams, raw: &[f64; 7]) -> Vec<f64> {
    let mut o = scaler.scale_state(&[raw[0], raw[1], raw[2], raw[3], raw[4], raw[5]]).to_vec();
    o.push(scaler.scale(Column::Sat, raw[6]));
    o
}

impl<D: Dynamics + 'static> Environment for BuildingEnv<D> {
    fn obs_dim(&self) -> usize {
        7
    }

    fn reset(&mut self) -> Result<Vec<f64>> {
        BuildingEnv::reset(self)?;
        Ok(self.observation())
    }

    fn step(&mut self, action: f64) -> Result<(Vec<f64>, f64, bool)> {
        let r = BuildingEnv::step(self, action)?;
        Ok((observation_from(&self.scaler, &r.next_state), r.reward, r.done))
    }

    fn episode_len(&self) -> Option<usize> {
        Some(self.steps_per_episode())
    }
}
