//! Weekly relearning loop and controller comparison.
//!
//! Each iteration refits the scaler on the advanced training window,
//! retrains the three dynamics models (from scratch on the first window,
//! warm-started with frozen feature layers afterwards), retrains the policy
//! from the previous one, and evaluates the adaptive, static and rule-based
//! controllers on the following week.

mod campaign;
mod compare;
mod report;

use serde::{Deserialize, Serialize};

pub use crate::config::{Config as CampaignConfig, Variant as ControllerVariant};
pub use campaign::{
    load_campaign_data, rbc_rows, replay_week, run_campaign, run_iteration, train_dynamics, write_meta, write_summary, CampaignResult,
    CampaignState, WeekReplay, SUMMARY_HEADER,
};
pub use report::{write_report_bundle, REPORT_FILES};
pub use compare::{compare_variants, format_mean_std, write_comparison, Comparison, MeanStd, VariantSummary, WinCount};

use crate::error::{Error, Result};

/// Savings of a controller against the rule-based baseline, as a
/// percentage of the baseline and in kBTU.
pub fn compute_savings(rbc_energy: f64, variant_energy: f64) -> Result<(f64, f64)> {
    if !(rbc_energy > 0.0) || !variant_energy.is_finite() {
        return Err(Error::UndefinedMetric(format!(
            "savings need a positive baseline energy, got {rbc_energy}"
        )));
    }
    let kbtu = rbc_energy - variant_energy;
    Ok((100.0 * kbtu / rbc_energy, kbtu))
}

/// Percentage and absolute savings; `None` when the baseline is zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Saving {
    pub pct: Option<f64>,
    pub kbtu: Option<f64>,
}

impl Saving {
    fn of(rbc: f64, v: f64) -> Saving {
        match compute_savings(rbc, v) {
            Ok((pct, kbtu)) => Saving { pct: Some(pct), kbtu: Some(kbtu) },
            Err(_) => Saving::default(),
        }
    }
}

/// Weekly energy of one controller.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantResult {
    pub variant: ControllerVariant,
    pub heat: f64,
    pub cool: f64,
    pub total: f64,
    pub heat_savings: Saving,
    pub cool_savings: Saving,
    pub total_savings: Saving,
    /// Mean step reward over the evaluation week (`None` for the baseline).
    pub mean_reward: Option<f64>,
}

impl VariantResult {
    pub fn new(variant: ControllerVariant, heat: f64, cool: f64, rbc: (f64, f64), mean_reward: Option<f64>) -> Self {
        let total = heat + cool;
        Self {
            variant,
            heat,
            cool,
            total,
            heat_savings: Saving::of(rbc.0, heat),
            cool_savings: Saving::of(rbc.1, cool),
            total_savings: Saving::of(rbc.0 + rbc.1, total),
            mean_reward,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IterationStatus {
    Ok,
    Failed,
}

impl IterationStatus {
    pub fn name(self) -> &'static str {
        match self {
            IterationStatus::Ok => "ok",
            IterationStatus::Failed => "failed",
        }
    }
}

/// Parameter digests used to check what was (and was not) retrained.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Checksums {
    pub heating_ffn: String,
    pub valve_ffn: String,
    pub cooling_ffn: String,
    pub adaptive_policy: String,
    pub static_policy: String,
}

/// Outcome of one weekly iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    /// Index of the evaluated week in the data.
    pub week: usize,
    pub window: usize,
    pub status: IterationStatus,
    pub error: Option<String>,
    pub cvrmse_h: Option<f64>,
    pub cvrmse_c: Option<f64>,
    pub roc_auc: Option<f64>,
    /// The same metrics for the frozen first-window models.
    pub static_cvrmse_h: Option<f64>,
    pub static_cvrmse_c: Option<f64>,
    pub static_roc_auc: Option<f64>,
    /// Last PPO iteration's mean episode reward on the training window.
    pub mean_episode_reward: Option<f64>,
    pub ppo_iterations: usize,
    pub variants: Vec<VariantResult>,
    pub checksums: Checksums,
}

impl IterationReport {
    pub fn failed(week: usize, window: usize, error: &Error) -> Self {
        Self {
            week,
            window,
            status: IterationStatus::Failed,
            error: Some(error.to_string()),
            cvrmse_h: None,
            cvrmse_c: None,
            roc_auc: None,
            static_cvrmse_h: None,
            static_cvrmse_c: None,
            static_roc_auc: None,
            mean_episode_reward: None,
            ppo_iterations: 0,
            variants: Vec::new(),
            checksums: Checksums::default(),
        }
    }

    pub fn variant(&self, v: ControllerVariant) -> Option<&VariantResult> {
        self.variants.iter().find(|r| r.variant == v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn savings_examples() {
        assert_eq!(compute_savings(100.0, 90.0).unwrap(), (10.0, 10.0));
        assert_eq!(compute_savings(100.0, 165.0).unwrap(), (-65.0, -65.0));
        assert!(compute_savings(0.0, 5.0).is_err());
        assert!(compute_savings(-1.0, 5.0).is_err());
    }

    #[test]
    fn variant_result_totals() {
        let r = VariantResult::new(ControllerVariant::Adaptive, 80.0, 30.0, (100.0, 0.0), None);
        assert_eq!(r.total, 110.0);
        assert_eq!(r.heat_savings.pct, Some(20.0));
        assert_eq!(r.cool_savings.pct, None);
        assert_eq!(r.total_savings.kbtu, Some(-10.0));
    }
}
