use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::frame::TimeSeriesFrame;
use crate::error::{Error, Result};

/// Sliding train/eval windows, in whole weeks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowSpec {
    pub train_weeks: u32,
    pub eval_weeks: u32,
    pub stride_weeks: u32,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self { train_weeks: 13, eval_weeks: 1, stride_weeks: 1 }
    }
}

impl WindowSpec {
    pub fn validate(&self) -> Result<()> {
        if self.train_weeks == 0 || self.eval_weeks == 0 || self.stride_weeks == 0 {
            return Err(Error::config("window lengths and stride must be positive"));
        }
        if self.stride_weeks > self.train_weeks + self.eval_weeks {
            return Err(Error::config("window stride exceeds train + eval length"));
        }
        Ok(())
    }
}

/// Row ranges of one window; `eval` starts where `train` ends.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub index: usize,
    pub train: Range<usize>,
    pub eval: Range<usize>,
}

pub fn make_windows(frame: &TimeSeriesFrame, spec: &WindowSpec) -> Result<Vec<Window>> {
    window_ranges(frame.len(), frame.samples_per_week(), spec)
}

/// Same as [`make_windows`] given a length and samples per week.
pub fn window_ranges(len: usize, per_week: usize, spec: &WindowSpec) -> Result<Vec<Window>> {
    spec.validate()?;
    let train = spec.train_weeks as usize * per_week;
    let eval = spec.eval_weeks as usize * per_week;
    let stride = spec.stride_weeks as usize * per_week;
    if len < train + eval {
        return Err(Error::config(format!(
            "series of {len} samples is shorter than one window ({} weeks)",
            spec.train_weeks + spec.eval_weeks
        )));
    }
    let mut out = Vec::new();
    let mut start = 0;
    while start + train + eval <= len {
        out.push(Window { index: out.len(), train: start..start + train, eval: start + train..start + train + eval });
        start += stride;
    }
    Ok(out)
}
