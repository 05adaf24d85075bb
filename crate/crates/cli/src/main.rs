use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use relearn_core::config::{Config, Variant, ENV_OUT_DIR, ENV_THREADS};
use relearn_core::data::{fit_scaler, generate_synthetic, ingest_csv, make_windows, prepare, write_csv, Window};
use relearn_core::env::{write_trajectory, BuildingEnv, ModelDynamics, TrajectoryRow};
use relearn_core::models::{evaluate_models, write_eval_reports, ModelCheckpoint, ModelKind, ModelSet};
use relearn_core::ppo::{train as train_ppo, write_training_log, PolicyCheckpoint};
use relearn_core::relearn::{rbc_rows, replay_week, run_campaign, train_dynamics, write_meta, write_report_bundle};
use relearn_core::Error;

#[derive(Parser)]
#[command(name = "relearn", version, about = "Weekly-relearning PPO supply-air temperature controller")]
struct Cli {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, env = ENV_OUT_DIR, default_value = "out")]
    out_dir: PathBuf,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = ENV_THREADS)]
    threads: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataArg {
    /// 5-minute CSV; the configured source (or the synthetic generator) when omitted.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic 5-minute dataset.
    GenData {
        /// Number of weeks to generate.
        #[arg(long)]
        weeks: Option<u32>,
        /// Output CSV (default: <out-dir>/synthetic.csv).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Clean and aggregate a 5-minute CSV to half-hours.
    Ingest {
        /// Raw 5-minute CSV.
        #[arg(long)]
        input: PathBuf,
        /// Output CSV (default: <out-dir>/prepared.csv).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Train the heating, valve and cooling models on one window.
    TrainDynamics {
        #[command(flatten)]
        data: DataArg,
        /// Window index.
        #[arg(long, default_value_t = 0)]
        window: usize,
        /// Checkpoint directory to warm-start from (feature layers frozen).
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Train the policy on one window with previously trained models.
    TrainPolicy {
        #[command(flatten)]
        data: DataArg,
        /// Directory holding heating.json, valve.json and cooling.json.
        #[arg(long)]
        models: PathBuf,
        #[arg(long, default_value_t = 0)]
        window: usize,
        /// Policy checkpoint to warm-start from.
        #[arg(long)]
        init: Option<PathBuf>,
        /// Total environment steps (overrides the configuration).
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Run the weekly relearning campaign.
    Relearn {
        #[command(flatten)]
        data: DataArg,
        /// Number of weekly iterations.
        #[arg(long)]
        weeks: Option<usize>,
        /// Comma-separated subset of adaptive, static, rbc.
        #[arg(long, value_delimiter = ',')]
        variants: Option<Vec<String>>,
    },
    /// Score models and a policy on a window's evaluation week.
    Evaluate {
        #[command(flatten)]
        data: DataArg,
        /// Directory holding heating.json, valve.json and cooling.json.
        #[arg(long)]
        models: PathBuf,
        /// Policy checkpoint.
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, default_value_t = 0)]
        window: usize,
    },
    /// Turn a campaign directory into plot-ready CSVs.
    Report {
        /// Campaign output directory.
        #[arg(long)]
        campaign: PathBuf,
        /// Destination (default: <campaign>/report).
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

/// A campaign finished with at least one failed week.
#[derive(Debug)]
struct PartialFailure(Vec<usize>);

impl std::fmt::Display for PartialFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "campaign finished with failed weeks {:?}", self.0)
    }
}

impl std::error::Error for PartialFailure {}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<PartialFailure>().is_some() {
        return 2;
    }
    match e.downcast_ref::<Error>() {
        Some(Error::Numeric(_)) => 3,
        _ => 1,
    }
}

fn load_config(cli: &Cli) -> anyhow::Result<Config> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p).with_context(|| format!("loading config {}", p.display()))?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    Ok(cfg.normalized())
}

fn with_data(mut cfg: Config, data: &DataArg) -> anyhow::Result<Config> {
    if let Some(p) = &data.data {
        if !p.exists() {
            return Err(Error::NotFound(p.clone()).into());
        }
        cfg.data.csv = Some(p.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn prepared_window(cfg: &Config, index: usize) -> anyhow::Result<(relearn_core::data::TimeSeriesFrame, Window)> {
    let prepared = relearn_core::relearn::load_campaign_data(cfg)?;
    let windows = make_windows(&prepared.frame, &cfg.window)?;
    let Some(w) = windows.get(index).cloned() else {
        bail!(Error::Config(format!("window {index} requested but the data provides {}", windows.len())));
    };
    Ok((prepared.frame, w))
}

fn load_models(dir: &Path) -> anyhow::Result<ModelSet> {
    let ck = |k: ModelKind| ModelCheckpoint::load_kind(&dir.join(format!("{}.json", k.name())), k);
    let h = ck(ModelKind::Heating)?;
    let v = ck(ModelKind::Valve)?;
    let c = ck(ModelKind::Cooling)?;
    if h.scaler != v.scaler || h.scaler != c.scaler {
        bail!(Error::Schema("model checkpoints were trained under different scalers".into()));
    }
    Ok(ModelSet { heating: h.model, valve: v.model, cooling: c.model, scaler: h.scaler })
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let cfg = load_config(cli)?;
    let out = &cli.out_dir;
    let hash = cfg.hash();
    match &cli.command {
        Command::GenData { weeks, output } => {
            let mut syn = cfg.synthetic.clone();
            if let Some(w) = weeks {
                syn.n_weeks = *w;
            }
            let frame = generate_synthetic(&syn)?;
            let path = output.clone().unwrap_or_else(|| out.join("synthetic.csv"));
            create_parent(&path)?;
            write_csv(&frame, &path)?;
            write_meta(&path, &hash, syn.seed)?;
            println!("wrote {} rows to {}", frame.len(), path.display());
        }
        Command::Ingest { input, output } => {
            let raw = ingest_csv(input)?;
            let p = prepare(&raw, &cfg.clean)?;
            let path = output.clone().unwrap_or_else(|| out.join("prepared.csv"));
            create_parent(&path)?;
            write_csv(&p.frame, &path)?;
            write_meta(&path, &hash, cfg.seed)?;
            println!(
                "wrote {} half-hour rows to {} ({} outliers replaced, {} samples dropped)",
                p.frame.len(),
                path.display(),
                p.replaced,
                p.dropped
            );
        }
        Command::TrainDynamics { data, window, init } => {
            let cfg = with_data(cfg, data)?;
            let (frame, w) = prepared_window(&cfg, *window)?;
            let prev = init.as_deref().map(load_models).transpose()?;
            let scaler = fit_scaler(&frame, w.train.clone())?;
            let set = train_dynamics(prev.as_ref(), &frame, &w, &scaler, &cfg)?;
            let ck_dir = out.join("checkpoints");
            std::fs::create_dir_all(&ck_dir)?;
            for kind in ModelKind::ALL {
                ModelCheckpoint {
                    model: set.get(kind).clone(),
                    scaler: scaler.clone(),
                    window: w.index,
                    seed: cfg.seed,
                    config_hash: hash.clone(),
                }
                .save(&ck_dir.join(format!("{}.json", kind.name())))?;
            }
            let week = w.eval.start / frame.samples_per_week();
            let report = evaluate_models(&set, &frame, w.eval.clone(), week)?;
            let path = out.join("model_eval.csv");
            write_eval_reports(std::slice::from_ref(&report), &path)?;
            write_meta(&path, &hash, cfg.seed)?;
            println!("week {week}: cvrmse_h {:?} cvrmse_c {:?} auc {:?}", report.cvrmse_h, report.cvrmse_c, report.roc_auc);
        }
        Command::TrainPolicy { data, models, window, init, steps } => {
            let cfg = with_data(cfg, data)?;
            let (frame, w) = prepared_window(&cfg, *window)?;
            let set = Arc::new(load_models(models)?);
            let initial = init.as_deref().map(PolicyCheckpoint::load).transpose()?.map(|c| c.ac);
            let mut ppo = cfg.ppo.clone();
            if let Some(s) = steps {
                ppo.total_steps = *s;
            }
            let train_frame = Arc::new(frame.slice(w.train.clone()));
            let dynamics = Arc::new(ModelDynamics::new(set.clone(), cfg.env.valve_threshold));
            let make_env = |_| BuildingEnv::new(train_frame.clone(), set.scaler.clone(), dynamics.clone(), cfg.env.clone());
            let result = train_ppo(make_env, &ppo, initial)?;
            std::fs::create_dir_all(out)?;
            PolicyCheckpoint { ac: result.ac, config_hash: hash.clone(), seed: ppo.seed }.save(&out.join("policy.json"))?;
            let path = out.join("ppo_log.csv");
            write_training_log(&result.log, &path)?;
            write_meta(&path, &hash, ppo.seed)?;
            if let Some(last) = result.log.last() {
                println!("{} PPO iterations, final mean episode reward {:.4}", result.log.len(), last.mean_episode_reward);
            }
        }
        Command::Relearn { data, weeks, variants } => {
            let mut cfg = with_data(cfg, data)?;
            if let Some(n) = weeks {
                cfg.campaign.n_weeks = Some(*n);
            }
            if let Some(vs) = variants {
                cfg.campaign.variants = vs.iter().map(|s| Variant::parse(s)).collect::<Result<_, _>>()?;
                cfg.validate()?;
            }
            std::fs::write(out_create(out)?.join("config.toml"), cfg.to_toml_string()?)?;
            let result = run_campaign(&cfg, Some(out))?;
            for s in &result.comparison.variants {
                if let Some(m) = &s.total_pct {
                    println!("{}: total savings {}", s.variant.name(), relearn_core::relearn::format_mean_std(m));
                }
            }
            let failed = result.failed_weeks();
            if !failed.is_empty() {
                return Err(PartialFailure(failed).into());
            }
        }
        Command::Evaluate { data, models, policy, window } => {
            let cfg = with_data(cfg, data)?;
            let (frame, w) = prepared_window(&cfg, *window)?;
            let set = Arc::new(load_models(models)?);
            let ck = PolicyCheckpoint::load(policy)?;
            let week = w.eval.start / frame.samples_per_week();
            let report = evaluate_models(&set, &frame, w.eval.clone(), week)?;
            let r = replay_week(set.clone(), &ck.ac.policy, None, &frame, w.eval.clone(), &cfg.env)?;
            let rbc = rbc_rows(&frame, w.eval.clone(), &set.scaler, cfg.env.vartheta);
            out_create(out)?;
            let path = out.join("model_eval.csv");
            write_eval_reports(std::slice::from_ref(&report), &path)?;
            write_meta(&path, &hash, cfg.seed)?;
            let rows: Vec<(Option<&str>, &TrajectoryRow)> = r
                .rows
                .iter()
                .map(|x| (Some("policy"), x))
                .chain(rbc.iter().map(|x| (Some("rbc"), x)))
                .collect();
            let path = out.join("trajectories.csv");
            write_trajectory(&rows, &path)?;
            write_meta(&path, &hash, cfg.seed)?;
            let rbc_heat: f64 = rbc.iter().map(|x| x.rbc_heat).sum();
            let rbc_cool: f64 = rbc.iter().map(|x| x.rbc_cool).sum();
            println!(
                "week {week}: policy heat {:.1} cool {:.1} kBTU; rbc heat {rbc_heat:.1} cool {rbc_cool:.1} kBTU",
                r.heat, r.cool
            );
        }
        Command::Report { campaign, output } => {
            let dest = output.clone().unwrap_or_else(|| campaign.join("report"));
            let files = write_report_bundle(campaign, &dest)?;
            for f in files {
                println!("{}", f.display());
            }
        }
    }
    Ok(())
}

fn create_parent(path: &Path) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn out_create(out: &Path) -> anyhow::Result<&Path> {
    std::fs::create_dir_all(out)?;
    Ok(out)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
