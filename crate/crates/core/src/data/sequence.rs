use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::frame::{Column, TimeSeriesFrame};
use super::scaler::ScalerParams;
use crate::error::{Error, Result};

pub const LOOKBACK: usize = 6;

/// What a sequence predicts for the row after its last step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// Scaled heating energy; rows with the valve shut are dropped.
    Heating,
    /// Scaled cooling energy.
    Cooling,
    /// Valve state, 1 when heating energy is positive.
    Valve,
}

/// Input sequences of scaled state vectors with next-row targets.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SequenceDataset {
    pub inputs: Vec<Vec<Vec<f64>>>,
    pub targets: Vec<f64>,
    /// Frame row of each target.
    pub target_rows: Vec<usize>,
    /// True when every input row and the target row had the valve open.
    pub contiguous_on: Vec<bool>,
}

impl SequenceDataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// Builds `(rows j-lookback..j, row j)` pairs for every target row `j` in
/// `range` with a full lookback inside `range`. Inputs are the scaled
/// [`Column::STATE`] features; `raw` is the unscaled frame.
pub fn make_sequences(
    raw: &TimeSeriesFrame,
    range: Range<usize>,
    scaler: &ScalerParams,
    target: Target,
    lookback: usize,
) -> Result<SequenceDataset> {
    if lookback == 0 {
        return Err(Error::config("lookback must be positive"));
    }
    if range.end > raw.len() {
        return Err(Error::input(format!("range {range:?} exceeds frame of {}", raw.len())));
    }
    let mut ds = SequenceDataset::default();
    if range.len() < lookback + 1 {
        log::warn!("slice of {} rows is too short for lookback {lookback}; no sequences", range.len());
        return Ok(ds);
    }
    let hwe = raw.col(Column::Hwe);
    let scaled_rows: Vec<Vec<f64>> =
        range.clone().map(|r| scaler.scale_state(&raw.state_row(r)).to_vec()).collect();
    for j in range.start + lookback..range.end {
        let on = hwe[j] > 0.0;
        if target == Target::Heating && !on {
            continue;
        }
        let y = match target {
            Target::Heating => scaler.scale(Column::Hwe, hwe[j]),
            Target::Cooling => scaler.scale(Column::Cwe, raw.value(Column::Cwe, j)),
            Target::Valve => f64::from(u8::from(on)),
        };
        let first = j - lookback - range.start;
        ds.inputs.push(scaled_rows[first..first + lookback].to_vec());
        ds.targets.push(y);
        ds.target_rows.push(j);
        ds.contiguous_on.push(on && hwe[j - lookback..j].iter().all(|&h| h > 0.0));
    }
    Ok(ds)
}
