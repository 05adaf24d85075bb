use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{IterationReport, IterationStatus};
use crate::error::{Error, Result};

/// Files written by [`write_report_bundle`], one per figure family.
pub const REPORT_FILES: [&str; 6] = [
    "energy_predictions.csv",
    "cvrmse_by_week.csv",
    "auc_by_week.csv",
    "reward_curve.csv",
    "variant_energy.csv",
    "setpoint_trajectories.csv",
];

#[derive(Deserialize)]
struct CampaignFile {
    config_hash: String,
    seed: u64,
    reports: Vec<IterationReport>,
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Concatenates `week_k/<name>` for every successful week under a leading
/// `week` column (and, when `index` is set, a running row counter).
fn concat_weeks(dir: &Path, weeks: &[usize], name: &str, out: &Path, index: Option<&str>) -> Result<usize> {
    let mut w = csv::Writer::from_path(out)?;
    let mut header_done = false;
    let mut n = 0usize;
    for &week in weeks {
        let path = dir.join(format!("week_{week}")).join(name);
        if !path.exists() {
            return Err(Error::NotFound(path));
        }
        let mut r = csv::Reader::from_path(&path)?;
        if !header_done {
            let mut h = vec!["week".to_string()];
            if let Some(col) = index {
                h.push(col.to_string());
            }
            h.extend(r.headers()?.iter().map(str::to_string));
            w.write_record(&h)?;
            header_done = true;
        }
        for rec in r.records() {
            let rec = rec?;
            let mut row = vec![week.to_string()];
            if index.is_some() {
                row.push(n.to_string());
            }
            row.extend(rec.iter().map(str::to_string));
            w.write_record(&row)?;
            n += 1;
        }
    }
    if !header_done {
        let mut h = vec!["week".to_string()];
        h.extend(index.map(str::to_string));
        w.write_record(&h)?;
    }
    w.flush()?;
    Ok(n)
}

/// Turns a campaign directory into plot-ready CSVs in `out`:
///
/// * `energy_predictions.csv`: `week,timestamp,hwe,hwe_pred,cwe,cwe_pred,valve,valve_prob`
/// * `cvrmse_by_week.csv`: `week,status,cvrmse_h,cvrmse_c,static_cvrmse_h,static_cvrmse_c`
/// * `auc_by_week.csv`: `week,status,roc_auc,static_roc_auc`
/// * `reward_curve.csv`: `week,global_iteration,iteration,mean_episode_reward,clip_fraction,policy_loss,value_loss`
/// * `variant_energy.csv`: the campaign `summary.csv` rows
/// * `setpoint_trajectories.csv`: `week,variant,t,setpoint,...` per step
///
/// Each file gets a `.meta.json` sidecar with the campaign's config hash
/// and seed.
pub fn write_report_bundle(campaign_dir: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let cj = campaign_dir.join("campaign.json");
    if !cj.exists() {
        return Err(Error::NotFound(cj));
    }
    let file: CampaignFile = serde_json::from_slice(&std::fs::read(&cj)?)?;
    let summary = campaign_dir.join("summary.csv");
    if !summary.exists() {
        return Err(Error::NotFound(summary));
    }
    std::fs::create_dir_all(out)?;
    let ok: Vec<usize> =
        file.reports.iter().filter(|r| r.status == IterationStatus::Ok).map(|r| r.week).collect();

    concat_weeks(campaign_dir, &ok, "predictions.csv", &out.join(REPORT_FILES[0]), None)?;

    let mut w = csv::Writer::from_path(out.join(REPORT_FILES[1]))?;
    w.write_record(["week", "status", "cvrmse_h", "cvrmse_c", "static_cvrmse_h", "static_cvrmse_c"])?;
    for r in &file.reports {
        w.write_record([
            r.week.to_string(),
            r.status.name().into(),
            opt(r.cvrmse_h),
            opt(r.cvrmse_c),
            opt(r.static_cvrmse_h),
            opt(r.static_cvrmse_c),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(out.join(REPORT_FILES[2]))?;
    w.write_record(["week", "status", "roc_auc", "static_roc_auc"])?;
    for r in &file.reports {
        w.write_record([r.week.to_string(), r.status.name().into(), opt(r.roc_auc), opt(r.static_roc_auc)])?;
    }
    w.flush()?;

    concat_weeks(campaign_dir, &ok, "ppo_log.csv", &out.join(REPORT_FILES[3]), Some("global_iteration"))?;
    std::fs::copy(&summary, out.join(REPORT_FILES[4]))?;
    concat_weeks(campaign_dir, &ok, "trajectories.csv", &out.join(REPORT_FILES[5]), None)?;

    let paths: Vec<PathBuf> = REPORT_FILES.iter().map(|f| out.join(f)).collect();
    for p in &paths {
        super::campaign::write_meta(p, &file.config_hash, file.seed)?;
    }
    Ok(paths)
}
