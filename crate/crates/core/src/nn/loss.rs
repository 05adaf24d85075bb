use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probability clamp used by the cross-entropy loss.
pub const BCE_EPS: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    Mse,
    Bce,
}

impl Loss {
    pub fn value(self, pred: &[f64], target: &[f64]) -> Result<f64> {
        match self {
            Loss::Mse => mse_loss(pred, target),
            Loss::Bce => bce_loss(pred, target),
        }
    }

    /// Derivative of [`Loss::value`] with respect to `pred`.
    pub fn gradient(self, pred: &[f64], target: &[f64]) -> Result<Vec<f64>> {
        check_lengths(pred, target)?;
        let n = pred.len() as f64;
        Ok(match self {
            Loss::Mse => pred.iter().zip(target).map(|(p, t)| 2.0 * (p - t) / n).collect(),
            Loss::Bce => {
                check_labels(target)?;
                pred.iter()
                    .zip(target)
                    .map(|(&p, &y)| {
                        if p <= BCE_EPS || p >= 1.0 - BCE_EPS {
                            0.0
                        } else {
                            (p - y) / (p * (1.0 - p)) / n
                        }
                    })
                    .collect()
            }
        })
    }
}

fn check_lengths(pred: &[f64], target: &[f64]) -> Result<()> {
    if pred.len() != target.len() {
        return Err(Error::shape(format!("prediction length {} vs target length {}", pred.len(), target.len())));
    }
    if pred.is_empty() {
        return Err(Error::input("loss of an empty vector"));
    }
    Ok(())
}

fn check_labels(y: &[f64]) -> Result<()> {
    match y.iter().find(|v| **v != 0.0 && **v != 1.0) {
        Some(v) => Err(Error::input(format!("binary label {v} is not 0 or 1"))),
        None => Ok(()),
    }
}

pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_lengths(pred, target)?;
    let sum: f64 = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sum / pred.len() as f64)
}

pub fn bce_loss(p: &[f64], y: &[f64]) -> Result<f64> {
    check_lengths(p, y)?;
    check_labels(y)?;
    let sum: f64 = p
        .iter()
        .zip(y)
        .map(|(&p, &y)| {
            let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    Ok(sum / p.len() as f64)
}
