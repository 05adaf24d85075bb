//! Data-driven building environment. Weather and comfort set points are
//! replayed from a recorded window; the discharge temperature follows the
//! agent's set point; energies come from the dynamics models.

mod building;
mod trajectory;

use serde::{Deserialize, Serialize};

pub use building::{
    observation_from, scale_raw_observation, BuildingEnv, Dynamics, EnvState, ModelDynamics, Prediction, StepInfo,
    StepResult,
};
pub use trajectory::{write_trajectory, TrajectoryRow, TRAJECTORY_HEADER};

use crate::data::{Column, TimeSeriesFrame};
use crate::error::{Error, Result};

pub const SETPOINT_MIN: f64 = 55.0;
pub const SETPOINT_MAX: f64 = 75.0;
pub const DELTA_MAX: f64 = 2.0;
pub const WBT_THRESHOLD: f64 = 52.0;
pub const COMFORT_BAND: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatingMode {
    /// Cooling coil plus reheat.
    Reheat,
    /// Preheat coil only.
    Preheat,
}

impl OperatingMode {
    pub fn name(self) -> &'static str {
        match self {
            OperatingMode::Reheat => "reheat",
            OperatingMode::Preheat => "preheat",
        }
    }
}

/// Reheat when the wet-bulb temperature is at least 52 °F.
pub fn operating_mode(wbt: f64) -> OperatingMode {
    if wbt >= WBT_THRESHOLD {
        OperatingMode::Reheat
    } else {
        OperatingMode::Preheat
    }
}

/// Set-point change in °F.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub delta: f64,
}

/// `setpoint + clamp(delta, ±2)`, then clamped to [55, 75] °F.
pub fn apply_action(setpoint: f64, delta: f64) -> Result<f64> {
    if !delta.is_finite() {
        return Err(Error::input(format!("non-finite action {delta}")));
    }
    Ok((setpoint + delta.clamp(-DELTA_MAX, DELTA_MAX)).clamp(SETPOINT_MIN, SETPOINT_MAX))
}

/// First-order tracking of the set point with gain `alpha`.
pub fn sat_transition(sat: f64, setpoint: f64, alpha: f64) -> f64 {
    sat + alpha * (setpoint - sat)
}

/// Action-independent part of the state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExogenousState {
    pub oat: f64,
    pub orh: f64,
    pub wbt: f64,
    pub sol: f64,
    pub avg_stpt: f64,
}

/// Row `t` of the recorded window, or `None` past its end.
pub fn exogenous_lookup(db: &TimeSeriesFrame, t: usize) -> Option<ExogenousState> {
    (t < db.len()).then(|| ExogenousState {
        oat: db.value(Column::Oat, t),
        orh: db.value(Column::Orh, t),
        wbt: db.value(Column::Wbt, t),
        sol: db.value(Column::Sol, t),
        avg_stpt: db.value(Column::AvgStpt, t),
    })
}

/// `1/(Δ+1)` within 10 °F of the zone set point, `-Δ` beyond.
pub fn reward_comfort(avg_stpt: f64, rl_setpoint: f64) -> f64 {
    let d = (avg_stpt - rl_setpoint).abs();
    if d <= COMFORT_BAND {
        1.0 / (d + 1.0)
    } else {
        -d
    }
}

/// Energy saved relative to the rule-based controller. Heating counts only
/// while the respective valve is open.
pub fn reward_energy(rbc_valve: bool, rbc_heat: f64, rl_valve: bool, rl_heat: f64, rbc_cool: f64, rl_cool: f64) -> f64 {
    let gate = |open: bool, h: f64| if open { h } else { 0.0 };
    gate(rbc_valve, rbc_heat) - gate(rl_valve, rl_heat) + rbc_cool - rl_cool
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    /// Weight of the energy term; comfort gets `1 - vartheta`.
    pub vartheta: f64,
    /// Discharge temperature tracking gain in (0, 1].
    pub alpha: f64,
    pub valve_threshold: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self { vartheta: 0.5, alpha: 1.0, valve_threshold: 0.5 }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.vartheta) {
            return Err(Error::config("vartheta must lie in [0, 1]"));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::config("alpha must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.valve_threshold) {
            return Err(Error::config("valve threshold must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Minimal episodic interface used by the agent.
pub trait Environment: Send {
    fn obs_dim(&self) -> usize;
    fn reset(&mut self) -> Result<Vec<f64>>;
    /// Returns `(next observation, reward, done)`.
    fn step(&mut self, action: f64) -> Result<(Vec<f64>, f64, bool)>;
    /// Steps per episode when fixed.
    fn episode_len(&self) -> Option<usize>;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_rule() {
        assert_eq!(operating_mode(60.0), OperatingMode::Reheat);
        assert_eq!(operating_mode(40.0), OperatingMode::Preheat);
        assert_eq!(operating_mode(52.0), OperatingMode::Reheat);
    }

    #[test]
    fn action_clamps() {
        assert!((apply_action(65.0, 1.3).unwrap() - 66.3).abs() < 1e-12);
        assert_eq!(apply_action(74.5, 2.0).unwrap(), 75.0);
        assert_eq!(apply_action(65.0, 2.7).unwrap(), 67.0);
        assert!(apply_action(65.0, f64::NAN).is_err());
    }

    #[test]
    fn tracking() {
        assert_eq!(sat_transition(65.0, 65.0, 1.0), 65.0);
        assert_eq!(sat_transition(64.0, 66.0, 1.0), 66.0);
        assert_eq!(sat_transition(64.0, 66.0, 0.5), 65.0);
    }

    #[test]
    fn comfort() {
        assert_eq!(reward_comfort(70.0, 70.0), 1.0);
        assert!((reward_comfort(70.0, 66.0) - 0.2).abs() < 1e-15);
        assert_eq!(reward_comfort(70.0, 55.0), -15.0);
    }

    #[test]
    fn energy() {
        assert_eq!(reward_energy(true, 5.0, true, 5.0, 2.0, 2.0), 0.0);
        assert!((reward_energy(true, 5.0, true, 3.0, 2.0, 1.5) - 2.5).abs() < 1e-15);
        assert_eq!(reward_energy(true, 5.0, false, 1e9, 2.0, 2.0), 5.0);
    }
}
