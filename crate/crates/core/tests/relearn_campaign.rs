use std::path::Path;
use std::sync::OnceLock;

use relearn_core::config::{Config, Variant};
use relearn_core::data::{make_windows, Column};
use relearn_core::relearn::{
    compute_savings, load_campaign_data, run_campaign, write_report_bundle, CampaignResult, IterationStatus,
    REPORT_FILES,
};

const SMOKE: &str = include_str!("../../../configs/smoke.toml");

fn smoke() -> Config {
    Config::from_toml_str(SMOKE).unwrap()
}

struct Run {
    dir: tempfile::TempDir,
    result: CampaignResult,
}

fn shared() -> &'static Run {
    static RUN: OnceLock<Run> = OnceLock::new();
    RUN.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let result = run_campaign(&smoke(), Some(dir.path())).unwrap();
        Run { dir, result }
    })
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn every_week_reports() {
    let r = &shared().result;
    assert_eq!(r.reports.iter().map(|x| x.week).collect::<Vec<_>>(), vec![13, 14, 15]);
    assert!(r.failed_weeks().is_empty(), "{:?}", r.reports.iter().map(|x| &x.error).collect::<Vec<_>>());
    for rep in &r.reports {
        assert_eq!(rep.variants.len(), 3);
        assert!(rep.ppo_iterations > 0);
    }
}

#[test]
fn rbc_totals_are_the_recorded_data() {
    let cfg = smoke();
    let frame = load_campaign_data(&cfg).unwrap().frame;
    let windows = make_windows(&frame, &cfg.window).unwrap();
    for (rep, w) in shared().result.reports.iter().zip(&windows) {
        let rbc = rep.variant(Variant::Rbc).unwrap();
        let heat: f64 = frame.col(Column::Hwe)[w.eval.clone()].iter().sum();
        let cool: f64 = frame.col(Column::Cwe)[w.eval.clone()].iter().sum();
        assert_eq!((rbc.heat, rbc.cool), (heat, cool), "week {}", rep.week);
        assert_eq!(rbc.total_savings.kbtu, Some(0.0));
    }
}

#[test]
fn savings_follow_the_formula() {
    for rep in &shared().result.reports {
        let rbc = rep.variant(Variant::Rbc).unwrap();
        for v in &rep.variants {
            assert_eq!(v.total, v.heat + v.cool);
            for (base, val, s) in [
                (rbc.heat, v.heat, v.heat_savings),
                (rbc.cool, v.cool, v.cool_savings),
                (rbc.total, v.total, v.total_savings),
            ] {
                let (pct, kbtu) = compute_savings(base, val).unwrap();
                assert_eq!(s.pct, Some(pct));
                assert_eq!(s.kbtu, Some(kbtu));
            }
        }
    }
}

#[test]
fn frozen_parts_keep_their_checksums() {
    let reps = &shared().result.reports;
    let first = &reps[0].checksums;
    for rep in &reps[1..] {
        let c = &rep.checksums;
        assert_eq!(c.static_policy, first.static_policy);
        assert_eq!((&c.heating_ffn, &c.valve_ffn, &c.cooling_ffn), (&first.heating_ffn, &first.valve_ffn, &first.cooling_ffn));
        assert_ne!(c.adaptive_policy, first.adaptive_policy);
    }
    assert_eq!(first.static_policy, first.adaptive_policy);
}

#[test]
fn artifacts_carry_hash_and_seed() {
    let run = shared();
    let hash = &run.result.config_hash;
    let mut csvs = vec![run.dir.path().join("summary.csv"), run.dir.path().join("comparison.csv")];
    for week in [13, 14, 15] {
        let wd = run.dir.path().join(format!("week_{week}"));
        for name in ["trajectories.csv", "report.csv", "ppo_log.csv", "predictions.csv"] {
            csvs.push(wd.join(name));
        }
        for ck in ["heating", "valve", "cooling", "policy", "static_policy"] {
            let js = read_json(&wd.join("checkpoints").join(format!("{ck}.json")));
            assert_eq!(js["config_hash"].as_str(), Some(hash.as_str()), "{ck}");
            assert_eq!(js["seed"].as_u64(), Some(3));
        }
    }
    for p in csvs {
        let meta = read_json(Path::new(&format!("{}.meta.json", p.display())));
        assert_eq!(meta["config_hash"].as_str(), Some(hash.as_str()), "{}", p.display());
        assert_eq!(meta["seed"].as_u64(), Some(3));
    }
    let cj = read_json(&run.dir.path().join("campaign.json"));
    assert_eq!(cj["config_hash"].as_str(), Some(hash.as_str()));
}

#[test]
fn summary_lists_each_variant_weekly() {
    let text = std::fs::read_to_string(shared().dir.path().join("summary.csv")).unwrap();
    let mut rows = csv::Reader::from_reader(text.as_bytes());
    let recs: Vec<csv::StringRecord> = rows.records().map(Result::unwrap).collect();
    assert_eq!(recs.len(), 9);
    for v in ["adaptive", "static", "rbc"] {
        assert_eq!(recs.iter().filter(|r| &r[1] == v && &r[2] == IterationStatus::Ok.name()).count(), 3);
    }
}

#[test]
fn report_bundle_is_complete() {
    let run = shared();
    let out = tempfile::tempdir().unwrap();
    let files = write_report_bundle(run.dir.path(), out.path()).unwrap();
    assert_eq!(files.len(), REPORT_FILES.len());
    for f in &files {
        assert!(f.exists() && Path::new(&format!("{}.meta.json", f.display())).exists());
    }
    let curve = csv::Reader::from_path(out.path().join("reward_curve.csv")).unwrap().into_records().count();
    let iters: usize = run.result.reports.iter().map(|r| r.ppo_iterations).sum();
    assert_eq!(curve, iters);
    let cv = csv::Reader::from_path(out.path().join("cvrmse_by_week.csv")).unwrap().into_records().count();
    assert_eq!(cv, 3);
    assert!(write_report_bundle(&out.path().join("nothing"), &out.path().join("x")).is_err());
}

#[test]
fn single_week_and_reruns() {
    let mut cfg = smoke();
    cfg.campaign.n_weeks = Some(1);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(run_campaign(&cfg, Some(a.path())).unwrap().reports.len(), 1);
    run_campaign(&cfg, Some(b.path())).unwrap();
    for f in ["summary.csv", "comparison.csv", "campaign.json", "week_13/trajectories.csv", "week_13/checkpoints/policy.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn too_many_weeks_is_a_config_error() {
    let mut cfg = smoke();
    cfg.campaign.n_weeks = Some(10);
    assert!(matches!(run_campaign(&cfg, None), Err(relearn_core::Error::Config(_))));
}
