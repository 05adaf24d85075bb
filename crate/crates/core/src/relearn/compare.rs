use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ControllerVariant, IterationReport, IterationStatus, Saving};
use crate::error::Result;
use crate::util::{mean, sample_std};

/// Mean and sample standard deviation over weeks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(xs: &[f64]) -> Option<MeanStd> {
        if xs.is_empty() {
            return None;
        }
        let std = if xs.len() > 1 { sample_std(xs) } else { 0.0 };
        Some(MeanStd { mean: mean(xs), std, n: xs.len() })
    }
}

/// `12.61%(5.73%)`.
pub fn format_mean_std(m: &MeanStd) -> String {
    format!("{:.2}%({:.2}%)", m.mean, m.std)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: ControllerVariant,
    pub heat_pct: Option<MeanStd>,
    pub cool_pct: Option<MeanStd>,
    pub total_pct: Option<MeanStd>,
    pub heat_kbtu: Option<MeanStd>,
    pub cool_kbtu: Option<MeanStd>,
    pub total_kbtu: Option<MeanStd>,
}

/// Weeks in which `winner` saved strictly more total energy than `loser`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WinCount {
    pub winner: ControllerVariant,
    pub loser: ControllerVariant,
    pub wins: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub variants: Vec<VariantSummary>,
    pub wins: Vec<WinCount>,
    pub weeks: usize,
}

impl Comparison {
    pub fn wins(&self, winner: ControllerVariant, loser: ControllerVariant) -> usize {
        self.wins.iter().find(|w| w.winner == winner && w.loser == loser).map_or(0, |w| w.wins)
    }

    pub fn summary(&self, v: ControllerVariant) -> Option<&VariantSummary> {
        self.variants.iter().find(|s| s.variant == v)
    }
}

fn collect(reports: &[&IterationReport], v: ControllerVariant, f: impl Fn(&Saving) -> Option<f64>, pick: fn(&super::VariantResult) -> &Saving) -> Option<MeanStd> {
    let xs: Vec<f64> = reports.iter().filter_map(|r| r.variant(v)).filter_map(|r| f(pick(r))).collect();
    MeanStd::of(&xs)
}

/// Per-variant weekly savings statistics and head-to-head win counts over
/// the successful iterations. The rule-based baseline saves zero by
/// definition.
pub fn compare_variants(reports: &[IterationReport]) -> Comparison {
    let ok: Vec<&IterationReport> = reports.iter().filter(|r| r.status == IterationStatus::Ok).collect();
    let mut present: Vec<ControllerVariant> =
        ControllerVariant::ALL.into_iter().filter(|v| ok.iter().any(|r| r.variant(*v).is_some())).collect();
    present.sort();
    let pct = |s: &Saving| s.pct;
    let kbtu = |s: &Saving| s.kbtu;
    let variants = present
        .iter()
        .map(|&v| VariantSummary {
            variant: v,
            heat_pct: collect(&ok, v, pct, |r| &r.heat_savings),
            cool_pct: collect(&ok, v, pct, |r| &r.cool_savings),
            total_pct: collect(&ok, v, pct, |r| &r.total_savings),
            heat_kbtu: collect(&ok, v, kbtu, |r| &r.heat_savings),
            cool_kbtu: collect(&ok, v, kbtu, |r| &r.cool_savings),
            total_kbtu: collect(&ok, v, kbtu, |r| &r.total_savings),
        })
        .collect();
    let mut wins = Vec::new();
    for &a in &present {
        for &b in &present {
            if a == b {
                continue;
            }
            let n = ok
                .iter()
                .filter(|r| match (r.variant(a), r.variant(b)) {
                    (Some(x), Some(y)) => x.total < y.total,
                    _ => false,
                })
                .count();
            wins.push(WinCount { winner: a, loser: b, wins: n });
        }
    }
    Comparison { variants, wins, weeks: ok.len() }
}

/// `variant,metric,heating,cooling,total` rows in mean(std) form, followed
/// by `wins` rows.
pub fn write_comparison(c: &Comparison, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["variant", "metric", "heating", "cooling", "total"])?;
    let fmt_pct = |m: &Option<MeanStd>| m.as_ref().map(format_mean_std).unwrap_or_default();
    let fmt_abs = |m: &Option<MeanStd>| m.map(|m| format!("{:.2}({:.2})", m.mean, m.std)).unwrap_or_default();
    for s in &c.variants {
        w.write_record([s.variant.name(), "savings_pct", &fmt_pct(&s.heat_pct), &fmt_pct(&s.cool_pct), &fmt_pct(&s.total_pct)])?;
        w.write_record([s.variant.name(), "savings_kbtu", &fmt_abs(&s.heat_kbtu), &fmt_abs(&s.cool_kbtu), &fmt_abs(&s.total_kbtu)])?;
    }
    for x in &c.wins {
        let label = format!("wins_vs_{}", x.loser.name());
        let n = x.wins.to_string();
        w.write_record([x.winner.name(), &label, "", "", &n])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::{Checksums, VariantResult};
    use super::*;

    fn report(week: usize, adaptive: f64, stat: f64) -> IterationReport {
        let rbc = (100.0, 0.0);
        IterationReport {
            week,
            window: week,
            status: IterationStatus::Ok,
            error: None,
            cvrmse_h: None,
            cvrmse_c: None,
            roc_auc: None,
            static_cvrmse_h: None,
            static_cvrmse_c: None,
            static_roc_auc: None,
            mean_episode_reward: None,
            ppo_iterations: 0,
            variants: vec![
                VariantResult::new(ControllerVariant::Adaptive, 100.0 - adaptive, 0.0, rbc, None),
                VariantResult::new(ControllerVariant::Static, 100.0 - stat, 0.0, rbc, None),
                VariantResult::new(ControllerVariant::Rbc, 100.0, 0.0, rbc, None),
            ],
            checksums: Checksums::default(),
        }
    }

    #[test]
    fn single_week_head_to_head() {
        let c = compare_variants(&[report(0, 5.0, 3.0)]);
        assert_eq!(c.wins(ControllerVariant::Adaptive, ControllerVariant::Static), 1);
        assert_eq!(c.wins(ControllerVariant::Static, ControllerVariant::Adaptive), 0);
        assert_eq!(c.summary(ControllerVariant::Rbc).unwrap().total_pct.unwrap().mean, 0.0);
    }

    #[test]
    fn mean_std_format() {
        let m = MeanStd::of(&[10.0, 14.0]).unwrap();
        assert_eq!(format_mean_std(&m), "12.00%(2.83%)");
        assert_eq!(format_mean_std(&MeanStd { mean: 12.61, std: 5.73, n: 8 }), "12.61%(5.73%)");
    }

    #[test]
    fn failed_weeks_are_skipped() {
        let mut r = report(1, 1.0, 2.0);
        r.status = IterationStatus::Failed;
        let c = compare_variants(&[report(0, 5.0, 3.0), r]);
        assert_eq!(c.weeks, 1);
        assert_eq!(c.summary(ControllerVariant::Adaptive).unwrap().heat_pct.unwrap().n, 1);
    }
}
