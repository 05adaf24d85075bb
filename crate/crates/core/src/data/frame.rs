use std::ops::Range;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Columns of a building time series.
///
/// Temperatures are °F, `orh` is %RH, `sol` W/m², energies kBTU per interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Column {
    Oat,
    Orh,
    Wbt,
    Sol,
    AvgStpt,
    Sat,
    Hwe,
    Cwe,
}

impl Column {
    pub const ALL: [Column; 8] =
        [Column::Oat, Column::Orh, Column::Wbt, Column::Sol, Column::AvgStpt, Column::Sat, Column::Hwe, Column::Cwe];

    /// Model input features, in order.
    pub const STATE: [Column; 6] = [Column::Oat, Column::Orh, Column::Wbt, Column::Sol, Column::AvgStpt, Column::Sat];

    /// Action-independent columns.
    pub const EXOGENOUS: [Column; 5] = [Column::Oat, Column::Orh, Column::Wbt, Column::Sol, Column::AvgStpt];

    pub fn name(self) -> &'static str {
        match self {
            Column::Oat => "oat",
            Column::Orh => "orh",
            Column::Wbt => "wbt",
            Column::Sol => "sol",
            Column::AvgStpt => "avg_stpt",
            Column::Sat => "sat",
            Column::Hwe => "hwe",
            Column::Cwe => "cwe",
        }
    }

    pub fn from_name(name: &str) -> Option<Column> {
        Column::ALL.into_iter().find(|c| c.name() == name)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Energies are summed when aggregating; everything else is averaged.
    pub fn is_energy(self) -> bool {
        matches!(self, Column::Hwe | Column::Cwe)
    }
}

/// Timestamped multivariate series on a fixed grid.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeriesFrame {
    timestamps: Vec<NaiveDateTime>,
    period_minutes: u32,
    columns: [Vec<f64>; 8],
}

impl TimeSeriesFrame {
    /// Checks equal lengths and a strictly increasing grid with the given period.
    pub fn new(timestamps: Vec<NaiveDateTime>, period_minutes: u32, columns: [Vec<f64>; 8]) -> Result<Self> {
        if period_minutes == 0 {
            return Err(Error::config("frame period must be positive"));
        }
        for (c, v) in Column::ALL.iter().zip(&columns) {
            if v.len() != timestamps.len() {
                return Err(Error::shape(format!(
                    "column {} has {} values for {} timestamps",
                    c.name(),
                    v.len(),
                    timestamps.len()
                )));
            }
        }
        check_grid(&timestamps, period_minutes)?;
        Ok(Self { timestamps, period_minutes, columns })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn period_minutes(&self) -> u32 {
        self.period_minutes
    }

    pub fn samples_per_week(&self) -> usize {
        (7 * 24 * 60 / self.period_minutes) as usize
    }

    pub fn timestamps(&self) -> &[NaiveDateTime] {
        &self.timestamps
    }

    pub fn col(&self, c: Column) -> &[f64] {
        &self.columns[c.index()]
    }

    pub fn col_mut(&mut self, c: Column) -> &mut [f64] {
        &mut self.columns[c.index()]
    }

    pub fn value(&self, c: Column, row: usize) -> f64 {
        self.columns[c.index()][row]
    }

    pub fn state_row(&self, row: usize) -> [f64; 6] {
        Column::STATE.map(|c| self.value(c, row))
    }

    pub fn slice(&self, range: Range<usize>) -> TimeSeriesFrame {
        TimeSeriesFrame {
            timestamps: self.timestamps[range.clone()].to_vec(),
            period_minutes: self.period_minutes,
            columns: std::array::from_fn(|k| self.columns[k][range.clone()].to_vec()),
        }
    }

    /// Everything finite and energies non-negative.
    pub fn check_physical(&self) -> Result<()> {
        for c in Column::ALL {
            for (row, v) in self.col(c).iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::Integrity { row, message: format!("missing or non-finite {}", c.name()) });
                }
                if c.is_energy() && *v < 0.0 {
                    return Err(Error::Integrity { row, message: format!("negative {} ({v})", c.name()) });
                }
            }
        }
        Ok(())
    }
}

fn check_grid(ts: &[NaiveDateTime], period_minutes: u32) -> Result<()> {
    let step = chrono::Duration::minutes(period_minutes as i64);
    for (k, w) in ts.windows(2).enumerate() {
        let d = w[1] - w[0];
        if d != step {
            let what = if d <= chrono::Duration::zero() { "non-increasing timestamp" } else { "gap in timestamps" };
            return Err(Error::Integrity {
                row: k + 1,
                message: format!("{what}: {} follows {} (expected a {period_minutes}-minute step)", w[1], w[0]),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn t0() -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2019, 7, 1).unwrap().and_hms_opt(0, 0, 0).unwrap()
    }

    #[test]
    fn column_names_roundtrip() {
        for c in Column::ALL {
            assert_eq!(Column::from_name(c.name()), Some(c));
        }
        assert_eq!(Column::from_name("nope"), None);
    }

    #[test]
    fn duplicate_timestamp_is_integrity_error() {
        let ts = vec![t0(), t0() + chrono::Duration::minutes(5), t0() + chrono::Duration::minutes(5)];
        let cols = std::array::from_fn(|_| vec![0.0; 3]);
        match TimeSeriesFrame::new(ts, 5, cols) {
            Err(Error::Integrity { row, .. }) => assert_eq!(row, 2),
            other => panic!("expected integrity error, got {other:?}"),
        }
    }

    #[test]
    fn negative_energy_flagged() {
        let ts = vec![t0()];
        let mut cols: [Vec<f64>; 8] = std::array::from_fn(|_| vec![1.0]);
        cols[Column::Cwe.index()][0] = -1.0;
        let f = TimeSeriesFrame::new(ts, 5, cols).unwrap();
        assert!(f.check_physical().is_err());
    }
}
