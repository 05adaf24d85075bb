use std::collections::BTreeMap;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::frame::{Column, TimeSeriesFrame};
use crate::error::{Error, Result};

pub const SCALE_CLAMP: (f64, f64) = (-0.1, 1.1);

/// Per-column min/max fitted on a training window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, (f64, f64)>", into = "BTreeMap<String, (f64, f64)>")]
pub struct ScalerParams {
    min: [f64; 8],
    max: [f64; 8],
}

impl ScalerParams {
    pub fn new(min: [f64; 8], max: [f64; 8]) -> Result<Self> {
        for c in Column::ALL {
            let (lo, hi) = (min[c.index()], max[c.index()]);
            if !(lo.is_finite() && hi.is_finite() && hi >= lo) {
                return Err(Error::Schema(format!("invalid scaler range for {}: ({lo}, {hi})", c.name())));
            }
        }
        Ok(Self { min, max })
    }

    pub fn range(&self, c: Column) -> (f64, f64) {
        (self.min[c.index()], self.max[c.index()])
    }

    /// `(x - min)/(max - min)` clamped to [-0.1, 1.1]; 0 for a degenerate range.
    pub fn scale(&self, c: Column, x: f64) -> f64 {
        let (lo, hi) = self.range(c);
        if hi == lo {
            return 0.0;
        }
        ((x - lo) / (hi - lo)).clamp(SCALE_CLAMP.0, SCALE_CLAMP.1)
    }

    pub fn unscale(&self, c: Column, s: f64) -> f64 {
        let (lo, hi) = self.range(c);
        lo + s * (hi - lo)
    }

    /// Scaled state features in [`Column::STATE`] order.
    pub fn scale_state(&self, raw: &[f64; 6]) -> [f64; 6] {
        std::array::from_fn(|k| self.scale(Column::STATE[k], raw[k]))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::NotFound(path.to_path_buf()));
        }
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

impl TryFrom<BTreeMap<String, (f64, f64)>> for ScalerParams {
    type Error = Error;

    fn try_from(map: BTreeMap<String, (f64, f64)>) -> Result<Self> {
        let mut min = [0.0; 8];
        let mut max = [0.0; 8];
        for c in Column::ALL {
            let (lo, hi) = map.get(c.name()).ok_or_else(|| Error::Schema(format!("scaler lacks column {}", c.name())))?;
            min[c.index()] = *lo;
            max[c.index()] = *hi;
        }
        ScalerParams::new(min, max)
    }
}

impl From<ScalerParams> for BTreeMap<String, (f64, f64)> {
    fn from(p: ScalerParams) -> Self {
        Column::ALL.iter().map(|&c| (c.name().to_string(), p.range(c))).collect()
    }
}

/// Fits min/max over `train_range` only.
pub fn fit_scaler(frame: &TimeSeriesFrame, train_range: Range<usize>) -> Result<ScalerParams> {
    if train_range.is_empty() || train_range.end > frame.len() {
        return Err(Error::input(format!("bad training range {train_range:?} for a frame of {}", frame.len())));
    }
    let mut min = [0.0; 8];
    let mut max = [0.0; 8];
    for c in Column::ALL {
        let x = &frame.col(c)[train_range.clone()];
        min[c.index()] = x.iter().copied().fold(f64::INFINITY, f64::min);
        max[c.index()] = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    }
    ScalerParams::new(min, max)
}

pub fn apply_scaler(frame: &TimeSeriesFrame, params: &ScalerParams) -> TimeSeriesFrame {
    map_frame(frame, |c, x| params.scale(c, x))
}

pub fn invert_scaler(frame: &TimeSeriesFrame, params: &ScalerParams) -> TimeSeriesFrame {
    map_frame(frame, |c, x| params.unscale(c, x))
}

fn map_frame(frame: &TimeSeriesFrame, f: impl Fn(Column, f64) -> f64) -> TimeSeriesFrame {
    let mut out = frame.clone();
    for c in Column::ALL {
        out.col_mut(c).iter_mut().for_each(|x| *x = f(c, *x));
    }
    out
}
