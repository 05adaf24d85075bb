use std::ops::Range;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{cvrmse, energy_from_output, roc_auc, DynamicsModel, ModelKind, ModelSet};
use crate::data::{make_sequences, Column, ScalerParams, TimeSeriesFrame, LOOKBACK};
use crate::error::{Error, Result};

/// Per-week model quality. Metrics that are undefined for the week (for
/// example a week with the valve always on) are `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelEvalReport {
    pub week: usize,
    pub cvrmse_h: Option<f64>,
    pub cvrmse_c: Option<f64>,
    pub roc_auc: Option<f64>,
}

/// Predictions and observations of an energy model over target rows in
/// `range`. Heating is scored on valve-on rows only.
pub fn energy_predictions(
    model: &DynamicsModel,
    scaler: &ScalerParams,
    raw: &TimeSeriesFrame,
    range: Range<usize>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let col = match model.kind {
        ModelKind::Heating => Column::Hwe,
        ModelKind::Cooling => Column::Cwe,
        ModelKind::Valve => return Err(Error::input("valve model does not predict energy")),
    };
    let ds = make_sequences(raw, input_range(&range)?, scaler, model.kind.target(), LOOKBACK)?;
    let pred = ds
        .inputs
        .par_iter()
        .map(|s| energy_from_output(model.kind, model.output(s)?, scaler))
        .collect::<Result<Vec<_>>>()?;
    let truth = ds.target_rows.iter().map(|&r| raw.value(col, r)).collect();
    Ok((pred, truth))
}

/// Valve probabilities and labels over target rows in `range`.
pub fn valve_predictions(
    model: &DynamicsModel,
    scaler: &ScalerParams,
    raw: &TimeSeriesFrame,
    range: Range<usize>,
) -> Result<(Vec<f64>, Vec<bool>)> {
    let ds = make_sequences(raw, input_range(&range)?, scaler, ModelKind::Valve.target(), LOOKBACK)?;
    let scores = ds.inputs.par_iter().map(|s| model.output(s)).collect::<Result<Vec<_>>>()?;
    Ok((scores, ds.targets.iter().map(|&y| y > 0.5).collect()))
}

/// The lookback rows before `range` are needed as inputs.
fn input_range(range: &Range<usize>) -> Result<Range<usize>> {
    if range.start < LOOKBACK {
        return Err(Error::input(format!("evaluation range {range:?} leaves no room for the lookback")));
    }
    Ok(range.start - LOOKBACK..range.end)
}

fn defined(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedMetric(m)) => {
            log::warn!("{m}");
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

/// Scores all three models on the target rows in `range`.
pub fn evaluate_models(set: &ModelSet, raw: &TimeSeriesFrame, range: Range<usize>, week: usize) -> Result<ModelEvalReport> {
    let (ph, th) = energy_predictions(&set.heating, &set.scaler, raw, range.clone())?;
    let (pc, tc) = energy_predictions(&set.cooling, &set.scaler, raw, range.clone())?;
    let (pv, lv) = valve_predictions(&set.valve, &set.scaler, raw, range)?;
    Ok(ModelEvalReport {
        week,
        cvrmse_h: defined(cvrmse(&ph, &th))?,
        cvrmse_c: defined(cvrmse(&pc, &tc))?,
        roc_auc: defined(roc_auc(&pv, &lv))?,
    })
}

/// `week,cvrmse_h,cvrmse_c,roc_auc`; undefined metrics are left empty.
pub fn write_eval_reports(reports: &[ModelEvalReport], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["week", "cvrmse_h", "cvrmse_c", "roc_auc"])?;
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in reports {
        w.write_record([r.week.to_string(), cell(r.cvrmse_h), cell(r.cvrmse_c), cell(r.roc_auc)])?;
    }
    w.flush()?;
    Ok(())
}
