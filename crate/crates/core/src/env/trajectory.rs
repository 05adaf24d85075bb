use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{OperatingMode, StepResult};
use crate::error::Result;

pub const TRAJECTORY_HEADER: [&str; 12] = [
    "t",
    "setpoint",
    "sat",
    "action",
    "reward",
    "reward_energy",
    "reward_comfort",
    "mode",
    "rl_heat",
    "rl_cool",
    "rbc_heat",
    "rbc_cool",
];

/// One environment step as exported to CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: usize,
    pub setpoint: f64,
    pub sat: f64,
    pub action: f64,
    pub reward: f64,
    pub reward_energy: f64,
    pub reward_comfort: f64,
    pub mode: OperatingMode,
    pub rl_heat: f64,
    pub rl_cool: f64,
    pub rbc_heat: f64,
    pub rbc_cool: f64,
}

impl TrajectoryRow {
    /// `t` is the step's decision epoch; energies refer to the following row.
    pub fn from_step(t: usize, action: f64, r: &StepResult) -> Self {
        Self {
            t,
            setpoint: r.next_state.setpoint,
            sat: r.next_state.sat,
            action,
            reward: r.reward,
            reward_energy: r.reward_energy,
            reward_comfort: r.reward_comfort,
            mode: r.info.mode,
            rl_heat: r.info.rl_heat,
            rl_cool: r.info.rl_cool,
            rbc_heat: r.info.rbc_heat,
            rbc_cool: r.info.rbc_cool,
        }
    }

    fn cells(&self) -> Vec<String> {
        vec![
            self.t.to_string(),
            self.setpoint.to_string(),
            self.sat.to_string(),
            self.action.to_string(),
            self.reward.to_string(),
            self.reward_energy.to_string(),
            self.reward_comfort.to_string(),
            self.mode.name().to_string(),
            self.rl_heat.to_string(),
            self.rl_cool.to_string(),
            self.rbc_heat.to_string(),
            self.rbc_cool.to_string(),
        ]
    }
}

/// Writes rows under [`TRAJECTORY_HEADER`], optionally prefixed by a
/// `variant` column whose value is given per row.
pub fn write_trajectory(rows: &[(Option<&str>, &TrajectoryRow)], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let with_variant = rows.iter().any(|(v, _)| v.is_some());
    let mut header: Vec<&str> = Vec::new();
    if with_variant {
        header.push("variant");
    }
    header.extend(TRAJECTORY_HEADER);
    w.write_record(&header)?;
    for (variant, row) in rows {
        let mut rec = Vec::new();
        if with_variant {
            rec.push(variant.unwrap_or("").to_string());
        }
        rec.extend(row.cells());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
