//! Time-series ingestion and preparation: CSV I/O, outlier cleaning,
//! half-hour aggregation, min-max scaling, sliding windows, lookback
//! sequences and a synthetic building generator.

mod clean;
mod csv_io;
mod frame;
mod scaler;
mod sequence;
mod synthetic;
mod window;

pub use clean::{aggregate_30min, derive_valve_labels, remove_outliers, remove_outliers_blockwise, remove_outliers_in};
pub use csv_io::{ingest_csv, read_frame, write_csv, TIMESTAMP_FORMAT};
pub use frame::{Column, TimeSeriesFrame};
pub use scaler::{apply_scaler, fit_scaler, invert_scaler, ScalerParams, SCALE_CLAMP};
pub use sequence::{make_sequences, SequenceDataset, Target, LOOKBACK};
pub use synthetic::{
    generate_synthetic, is_occupied, NoiseScales, PlantModel, SyntheticGenConfig, WeatherModel, WeatherSample,
    ENERGY_LAG, SYNTHETIC_PERIOD,
};
pub use window::{make_windows, window_ranges, Window, WindowSpec};

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Cleaning settings applied before aggregation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleanConfig {
    pub outlier_k: f64,
    /// Columns screened for outliers. Zero-inflated columns (solar at night,
    /// energies with the valve shut) and the piecewise-constant set points
    /// are left out by default; their legitimate peaks sit several deviations
    /// from the mean.
    pub outlier_columns: Vec<Column>,
    /// Statistics are computed per block of this many hours.
    pub outlier_block_hours: u32,
}

impl Default for CleanConfig {
    fn default() -> Self {
        Self {
            outlier_k: 2.0,
            outlier_columns: vec![Column::Oat, Column::Orh, Column::Wbt],
            outlier_block_hours: 24,
        }
    }
}

/// Outcome of [`prepare`].
#[derive(Clone, Debug)]
pub struct Prepared {
    pub frame: TimeSeriesFrame,
    pub replaced: usize,
    pub dropped: usize,
}

/// Cleans a 5-minute frame and aggregates it to half-hours.
pub fn prepare(raw: &TimeSeriesFrame, cfg: &CleanConfig) -> Result<Prepared> {
    let block = (cfg.outlier_block_hours as usize * 60 / raw.period_minutes() as usize).max(1);
    let (clean, replaced) = remove_outliers_blockwise(raw, cfg.outlier_k, &cfg.outlier_columns, block)?;
    let (frame, dropped) = aggregate_30min(&clean)?;
    frame.check_physical()?;
    Ok(Prepared { frame, replaced, dropped })
}
