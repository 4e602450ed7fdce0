//! Batch front-end for reward-martingale certification.
//!
//! Every subcommand reads one JSON run configuration, performs a pipeline
//! stage, and prints nothing but the paths of the files it emitted. The
//! exit code is 0 exactly when the requested certificates validated and
//! the stage completed.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rewcert::config::{parse_config, RunConfig};
use rewcert::learn::CertStatus;
use rewcert::pipeline::{
    attach_empirical, derive_bounds, derive_tail, emit_report, load_outcomes, load_stats,
    prerun_reward_caps, resolve, revalidate, run_pipeline, save_outcomes, save_stats,
    simulation_max_steps, train_all, RunArtifacts, StageTimings, BOUNDS_FILE, TAIL_FILE,
};
use rewcert::sim::{enclosure_report, estimate_stats, TailCheck};

#[derive(Parser)]
#[command(
    name = "rewcert",
    version,
    about = "Train, validate, and cross-check neural reward-martingale certificates"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train certificates and store them in the output directory.
    Train(StageArgs),
    /// Re-run all validation checks on stored certificates.
    Validate(StageArgs),
    /// Derive certified reward bounds from stored certificates.
    Bounds(StageArgs),
    /// Derive the certified tail-bound curve from stored certificates.
    Tail(StageArgs),
    /// Run the Monte-Carlo cross-check simulation and store its statistics.
    Simulate(StageArgs),
    /// Assemble the report files from stored artifacts.
    Report(StageArgs),
    /// All stages end to end: train, validate, derive, simulate, report.
    Run(StageArgs),
}

#[derive(Args)]
struct StageArgs {
    /// Run configuration file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the configured random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for parallel sections.
    #[arg(long)]
    workers: Option<usize>,
    /// Training timeout in minutes [default: 60].
    #[arg(long)]
    timeout_min: Option<f64>,
}

fn load(args: &StageArgs) -> rewcert::Result<RunConfig> {
    let mut cfg = parse_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out = out.display().to_string();
    }
    if let Some(workers) = args.workers {
        cfg.workers = Some(workers);
    }
    if let Some(minutes) = args.timeout_min {
        cfg.train.timeout_minutes = Some(minutes);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn echo(paths: &[PathBuf]) {
    for path in paths {
        println!("{}", path.display());
    }
}

fn all_validated(outcomes: &[rewcert::learn::CertifyOutcome]) -> bool {
    !outcomes.is_empty()
        && outcomes
            .iter()
            .all(|o| o.certificate.status == CertStatus::Validated)
}

fn stage(cmd: &Command, cfg: &RunConfig) -> rewcert::Result<bool> {
    let out_dir = PathBuf::from(&cfg.out);
    match cmd {
        Command::Train(_) => {
            let mut run = resolve(cfg)?;
            prerun_reward_caps(&mut run, cfg)?;
            let outcomes = train_all(&mut run, &cfg.kinds)?;
            let path = save_outcomes(&outcomes, &out_dir)?;
            echo(&[path]);
            Ok(all_validated(&outcomes))
        }
        Command::Validate(_) => {
            let run = resolve(cfg)?;
            let mut outcomes = load_outcomes(&out_dir)?;
            let mut all_valid = !outcomes.is_empty();
            for outcome in &mut outcomes {
                let result = revalidate(&outcome.certificate, &run)?;
                all_valid &= result.is_valid();
                outcome.certificate.status = if result.is_valid() {
                    CertStatus::Validated
                } else {
                    CertStatus::Unknown
                };
                outcome.certificate.counterexamples = result.counterexamples;
            }
            let path = save_outcomes(&outcomes, &out_dir)?;
            echo(&[path]);
            Ok(all_valid)
        }
        Command::Bounds(_) => {
            let run = resolve(cfg)?;
            let outcomes = load_outcomes(&out_dir)?;
            let bounds = derive_bounds(&outcomes, &run.initial_states)?;
            let path = out_dir.join(BOUNDS_FILE);
            std::fs::write(&path, rewcert::certify::bounds_csv(&bounds))?;
            echo(&[path]);
            Ok(!bounds.is_empty())
        }
        Command::Tail(_) => {
            let run = resolve(cfg)?;
            let outcomes = load_outcomes(&out_dir)?;
            let mut tail =
                derive_tail(&outcomes, &run.initial_states[0], &cfg.tail_thresholds)?;
            if let Some(stats) = load_stats(&out_dir)? {
                attach_empirical(&mut tail, &stats);
            }
            let path = out_dir.join(TAIL_FILE);
            std::fs::write(&path, rewcert::certify::tail_csv(&tail))?;
            echo(&[path]);
            Ok(!tail.is_empty())
        }
        Command::Simulate(_) => {
            let mut run = resolve(cfg)?;
            // Stored certificates, when present, scale the episode cap.
            let bounds = match load_outcomes(&out_dir) {
                Ok(outcomes) => derive_bounds(&outcomes, &run.initial_states)?,
                Err(_) => Vec::new(),
            };
            let max_steps = simulation_max_steps(cfg, &bounds, &run.env);
            let stats = estimate_stats(
                &run.env,
                &run.policy,
                &run.noise,
                &run.initial_states,
                cfg.episodes_per_state,
                max_steps,
                &mut run.rng,
            )?;
            let path = save_stats(&stats, &out_dir)?;
            echo(&[path]);
            Ok(true)
        }
        Command::Report(_) => {
            let run = resolve(cfg)?;
            let outcomes = load_outcomes(&out_dir)?;
            let bounds = derive_bounds(&outcomes, &run.initial_states)?;
            let mut tail =
                derive_tail(&outcomes, &run.initial_states[0], &cfg.tail_thresholds)?;
            let stats = load_stats(&out_dir)?;
            let enclosure = match &stats {
                Some(stats) if !bounds.is_empty() => {
                    attach_empirical(&mut tail, stats);
                    let checks: Vec<TailCheck> = tail
                        .iter()
                        .map(|p| TailCheck { c: p.c, bound: p.bound, upper_tail: true })
                        .collect();
                    Some(enclosure_report(stats, &bounds, &checks)?)
                }
                _ => None,
            };
            let timings = StageTimings::from_outcomes(&outcomes, 0.0);
            let timings = StageTimings {
                total_s: timings.train_s + timings.validate_s,
                ..timings
            };
            let ok = all_validated(&outcomes);
            let artifacts = RunArtifacts {
                config: cfg.clone(),
                outcomes,
                bounds,
                tail,
                stats,
                enclosure,
                timings,
            };
            let paths = emit_report(&artifacts, &out_dir)?;
            echo(&paths);
            Ok(ok)
        }
        Command::Run(_) => {
            let artifacts = run_pipeline(cfg)?;
            let paths = emit_report(&artifacts, &out_dir)?;
            echo(&paths);
            Ok(artifacts.all_validated())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .init();
    let cli = Cli::parse();
    let args = match &cli.command {
        Command::Train(a)
        | Command::Validate(a)
        | Command::Bounds(a)
        | Command::Tail(a)
        | Command::Simulate(a)
        | Command::Report(a)
        | Command::Run(a) => a,
    };
    let cfg = match load(args) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(workers) = cfg.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
        {
            eprintln!("error: could not size the worker pool: {e}");
            return ExitCode::from(2);
        }
    }
    match stage(&cli.command, &cfg) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
