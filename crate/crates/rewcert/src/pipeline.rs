//! End-to-end batch runs: train certificates, derive certified reward and
//! tail bounds, cross-check them by Monte-Carlo simulation, and write the
//! report files.
//!
//! A run is deterministic for a fixed configuration: one seeded generator
//! drives initial-state sampling, the reward-cap pre-run, training, and
//! simulation, in that fixed order.
//!
//! Report files, all under the configured output directory:
//!
//! * `certificates.json` — every trained certificate with its iteration log
//! * `bounds.csv` — per-initial-state certified reward enclosures
//! * `tail.csv` — tail-bound curve with empirical frequencies
//! * `timing.json` — `train_s`, `validate_s`, `total_s`
//! * `summary.txt` — status line, per-certificate outcomes, cross-check
//!   pass counts, and the last counterexamples when validation failed

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::certify::{
    bounds_csv, default_n_star, reward_bounds, tail_bound, tail_csv, RewardBounds,
    TailCurvePoint,
};
use crate::config::RunConfig;
use crate::env::{EnvModel, PolicySpec};
use crate::error::{Error, Result};
use crate::grid::build_grid;
use crate::learn::{
    certify_loop, context_hash, CertStatus, Certificate, CertifyOutcome, TrainConfig,
};
use crate::noise::NoiseSpec;
use crate::sim::{
    default_max_steps, enclosure_report, estimate_stats, EnclosureReport, SimStats,
    TailCheck, DEFAULT_MAX_STEPS_FLOOR,
};
use crate::space::StateVec;
use crate::verify::{validate_certificate, CertKind, CheckConfig, ValidationResult};

pub const CERTIFICATES_FILE: &str = "certificates.json";
pub const BOUNDS_FILE: &str = "bounds.csv";
pub const TAIL_FILE: &str = "tail.csv";
pub const TIMING_FILE: &str = "timing.json";
pub const SUMMARY_FILE: &str = "summary.txt";
/// Simulation statistics persisted by the standalone simulate stage so a
/// later report stage can reuse them without re-running episodes.
pub const SIMULATION_FILE: &str = "simulation.json";

/// Episodes in the pre-run that estimates reward caps ū / l̲ when unset.
pub const PRERUN_EPISODES: u64 = 200;
/// Margin added beyond the best (worst) pre-run return for ū (l̲).
pub const PRERUN_MARGIN: f64 = 0.1;
/// Counterexamples dumped per certificate in the plain-text summary.
const SUMMARY_COUNTEREXAMPLES: usize = 10;

/// Wall-clock stage totals in seconds.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct StageTimings {
    pub train_s: f64,
    pub validate_s: f64,
    pub total_s: f64,
}

impl StageTimings {
    /// Sums the recorded per-iteration stage times; `total_s` is the
    /// caller-observed wall clock (pass the stage sum when reconstructing
    /// from stored artifacts).
    pub fn from_outcomes(outcomes: &[CertifyOutcome], total_s: f64) -> StageTimings {
        let (train_s, validate_s) = outcomes
            .iter()
            .flat_map(|o| &o.iterations)
            .fold((0.0, 0.0), |(t, v), it| {
                (t + it.train_seconds, v + it.validate_seconds)
            });
        StageTimings { train_s, validate_s, total_s }
    }
}

/// A run configuration with every reference resolved and the generator
/// positioned for the next stage.
pub struct ResolvedRun {
    pub env: EnvModel,
    pub policy: PolicySpec,
    pub noise: NoiseSpec,
    pub initial_states: Vec<StateVec>,
    pub train: TrainConfig,
    pub rng: ChaCha8Rng,
}

/// Validates the configuration and resolves environment, policy, noise,
/// and initial states.
pub fn resolve(cfg: &RunConfig) -> Result<ResolvedRun> {
    cfg.validate()?;
    let env = cfg.resolve_env()?;
    let policy = cfg.resolve_policy(&env)?;
    let noise = cfg.resolve_noise(&env)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let initial_states = cfg.resolve_initial_states(&env, &mut rng)?;
    let train = cfg.resolved_train();
    Ok(ResolvedRun { env, policy, noise, initial_states, train, rng })
}

/// Fills unset reward caps ū / l̲ from a short simulation: the best
/// observed return plus [`PRERUN_MARGIN`] (respectively the worst minus
/// it). Skipped entirely when no requested kind uses the missing cap.
pub fn prerun_reward_caps(run: &mut ResolvedRun, cfg: &RunConfig) -> Result<()> {
    let needs_u = cfg.kinds.contains(&CertKind::Urs) && run.train.u_bar.is_none();
    let needs_l = cfg.kinds.contains(&CertKind::Lrs) && run.train.l_bar.is_none();
    if !needs_u && !needs_l {
        return Ok(());
    }
    let states = run.initial_states.len() as u64;
    let per_state = PRERUN_EPISODES.div_ceil(states);
    let max_steps = cfg.max_steps.unwrap_or(DEFAULT_MAX_STEPS_FLOOR);
    let stats = estimate_stats(
        &run.env,
        &run.policy,
        &run.noise,
        &run.initial_states,
        per_state,
        max_steps,
        &mut run.rng,
    )?;
    let mut best = f64::NEG_INFINITY;
    let mut worst = f64::INFINITY;
    for state in &stats.per_state {
        for outcome in &state.outcomes {
            best = best.max(outcome.cumulative);
            worst = worst.min(outcome.cumulative);
        }
    }
    if needs_u {
        run.train.u_bar = Some(best + PRERUN_MARGIN);
    }
    if needs_l {
        run.train.l_bar = Some(worst - PRERUN_MARGIN);
    }
    Ok(())
}

/// Trains one certificate per requested kind, sequentially on the shared
/// generator.
pub fn train_all(run: &mut ResolvedRun, kinds: &[CertKind]) -> Result<Vec<CertifyOutcome>> {
    kinds
        .iter()
        .map(|&kind| {
            certify_loop(
                &run.env,
                &run.policy,
                &run.noise,
                kind,
                &run.train,
                None,
                &mut run.rng,
            )
        })
        .collect()
}

/// The first validated certificate of the given kind, if any.
pub fn find_validated(outcomes: &[CertifyOutcome], kind: CertKind) -> Option<&Certificate> {
    outcomes
        .iter()
        .map(|o| &o.certificate)
        .find(|c| c.kind == kind && c.status == CertStatus::Validated)
}

/// Certified reward enclosures for every initial state, when both a
/// validated upper and lower reward martingale are present; empty
/// otherwise.
pub fn derive_bounds(
    outcomes: &[CertifyOutcome],
    initial_states: &[StateVec],
) -> Result<Vec<RewardBounds>> {
    match (
        find_validated(outcomes, CertKind::Urs),
        find_validated(outcomes, CertKind::Lrs),
    ) {
        (Some(urs), Some(lrs)) => initial_states
            .iter()
            .map(|s0| reward_bounds(urs, lrs, s0))
            .collect(),
        _ => Ok(Vec::new()),
    }
}

/// Tail-bound curve at the first initial state, when a validated upper
/// reward martingale and ranking map are both present; empty otherwise.
///
/// Thresholds at or below the certified upper bound carry no tail
/// information and are skipped with a warning.
pub fn derive_tail(
    outcomes: &[CertifyOutcome],
    s0: &StateVec,
    thresholds: &[f64],
) -> Result<Vec<TailCurvePoint>> {
    let (Some(urs), Some(rsm)) = (
        find_validated(outcomes, CertKind::Urs),
        find_validated(outcomes, CertKind::Rsm),
    ) else {
        return Ok(Vec::new());
    };
    if thresholds.is_empty() {
        return Ok(Vec::new());
    }
    let n_star = default_n_star(rsm, s0)?;
    let mut points = Vec::new();
    for &c in thresholds {
        match tail_bound(urs, rsm, s0, c, n_star) {
            Ok(tb) => points.push(TailCurvePoint { c, bound: tb.bound, empirical: None }),
            Err(Error::TailThreshold { c, bound }) => {
                log::warn!(
                    "skipping tail threshold {c}: not beyond the certified upper bound {bound}"
                );
            }
            Err(e) => return Err(e),
        }
    }
    Ok(points)
}

/// Episode cap for the cross-check simulation: the configured cap if any,
/// otherwise scaled from the certified bounds (a constant per-step reward
/// of r turns a reward bound B into a step estimate B / r).
pub fn simulation_max_steps(cfg: &RunConfig, bounds: &[RewardBounds], env: &EnvModel) -> u32 {
    if let Some(m) = cfg.max_steps {
        return m;
    }
    let denom = env.r_min.abs().min(env.r_max.abs());
    if denom == 0.0 || bounds.is_empty() {
        return DEFAULT_MAX_STEPS_FLOOR;
    }
    let steps = bounds
        .iter()
        .map(|b| b.upper.abs().max(b.lower.abs()))
        .fold(0.0, f64::max)
        / denom;
    default_max_steps(steps)
}

/// Fills the empirical column of a tail curve from simulation statistics.
pub fn attach_empirical(tail: &mut [TailCurvePoint], stats: &SimStats) {
    let thresholds: Vec<f64> = tail.iter().map(|p| p.c).collect();
    for (point, (_, freq)) in tail.iter_mut().zip(stats.tail_table(&thresholds, true)) {
        point.empirical = Some(freq);
    }
}

/// Everything a completed run produced, ready for report emission.
pub struct RunArtifacts {
    pub config: RunConfig,
    pub outcomes: Vec<CertifyOutcome>,
    pub bounds: Vec<RewardBounds>,
    pub tail: Vec<TailCurvePoint>,
    pub stats: Option<SimStats>,
    pub enclosure: Option<EnclosureReport>,
    pub timings: StageTimings,
}

impl RunArtifacts {
    /// True when every requested certificate validated.
    pub fn all_validated(&self) -> bool {
        !self.outcomes.is_empty()
            && self
                .outcomes
                .iter()
                .all(|o| o.certificate.status == CertStatus::Validated)
    }
}

/// Runs every stage: resolve, pre-run caps, train and validate each kind,
/// derive bounds and tails, simulate, and cross-check.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunArtifacts> {
    let started = Instant::now();
    let mut run = resolve(cfg)?;
    prerun_reward_caps(&mut run, cfg)?;
    let outcomes = train_all(&mut run, &cfg.kinds)?;
    let bounds = derive_bounds(&outcomes, &run.initial_states)?;
    let mut tail = derive_tail(&outcomes, &run.initial_states[0], &cfg.tail_thresholds)?;
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
    attach_empirical(&mut tail, &stats);
    let enclosure = if bounds.is_empty() {
        None
    } else {
        let checks: Vec<TailCheck> = tail
            .iter()
            .map(|p| TailCheck { c: p.c, bound: p.bound, upper_tail: true })
            .collect();
        Some(enclosure_report(&stats, &bounds, &checks)?)
    };
    let timings = StageTimings::from_outcomes(&outcomes, started.elapsed().as_secs_f64());
    Ok(RunArtifacts {
        config: cfg.clone(),
        outcomes,
        bounds,
        tail,
        stats: Some(stats),
        enclosure,
        timings,
    })
}

/// Re-runs every validation check for a stored certificate against the
/// configured system, on a fresh grid at the certificate's final
/// granularity. Fails fast when the certificate was produced for a
/// different environment, policy, or noise law.
pub fn revalidate(cert: &Certificate, run: &ResolvedRun) -> Result<ValidationResult> {
    let expected = context_hash(&run.env, &run.policy, &run.noise);
    if cert.context_hash != expected {
        return Err(Error::ContextMismatch(format!(
            "certificate was built for context {} but the configuration resolves to {}",
            cert.context_hash, expected
        )));
    }
    let disc = build_grid(&run.env.state_box, cert.tau, run.train.grid_budget)?;
    let check_cfg = CheckConfig {
        epsilon: cert.epsilon.unwrap_or(run.train.epsilon_rsm),
        partition_cells: run.train.partition_cells,
    };
    validate_certificate(
        &cert.net,
        cert.kind,
        &disc,
        &run.env,
        &run.policy,
        &run.noise,
        cert.k,
        cert.k_prime,
        &check_cfg,
    )
}

fn kind_name(kind: CertKind) -> &'static str {
    match kind {
        CertKind::Urs => "urs",
        CertKind::Lrs => "lrs",
        CertKind::Rsm => "rsm",
    }
}

/// The plain-text summary: one status line, then per-certificate and
/// cross-check details, then the last counterexamples of any certificate
/// that failed to validate.
pub fn build_summary(artifacts: &RunArtifacts) -> String {
    let mut out = String::new();
    let status = if artifacts.all_validated() { "Validated" } else { "UNKNOWN" };
    out.push_str(&format!("status: {status}\n"));
    for outcome in &artifacts.outcomes {
        let cert = &outcome.certificate;
        let cert_status = match cert.status {
            CertStatus::Validated => "validated",
            CertStatus::Unknown => "unknown",
        };
        out.push_str(&format!(
            "certificate {}: {} after {} iteration(s), final granularity {}, {} counterexample(s)\n",
            kind_name(cert.kind),
            cert_status,
            outcome.iterations.len(),
            cert.tau,
            cert.counterexamples.len(),
        ));
    }
    out.push_str(&format!(
        "reward bounds: {} initial state(s)\n",
        artifacts.bounds.len()
    ));
    out.push_str(&format!("tail thresholds: {}\n", artifacts.tail.len()));
    if let Some(stats) = &artifacts.stats {
        out.push_str(&format!(
            "simulation: {} state(s) x {} episode(s), max {} steps, {} truncated\n",
            stats.per_state.len(),
            stats.episodes_per_state,
            stats.max_steps,
            stats.truncated_total(),
        ));
    }
    if let Some(enc) = &artifacts.enclosure {
        out.push_str(&format!(
            "cross-check: {}/{} state means enclosed, {}/{} tail frequencies below bound, overall {}\n",
            enc.state_passes,
            enc.states.len(),
            enc.tail_passes,
            enc.tails.len(),
            if enc.all_pass { "pass" } else { "FAIL" },
        ));
    }
    for outcome in &artifacts.outcomes {
        let cert = &outcome.certificate;
        if cert.status == CertStatus::Unknown && !cert.counterexamples.is_empty() {
            out.push_str(&format!(
                "last counterexamples for {} (showing {} of {}):\n",
                kind_name(cert.kind),
                cert.counterexamples.len().min(SUMMARY_COUNTEREXAMPLES),
                cert.counterexamples.len(),
            ));
            for cx in cert.counterexamples.iter().take(SUMMARY_COUNTEREXAMPLES) {
                out.push_str(&format!(
                    "  {} violated by {:e} at {:?}\n",
                    cx.inequality, cx.slack, cx.point.0
                ));
            }
        }
    }
    out
}

/// Writes the five report files and returns their paths in a fixed order:
/// certificates, bounds, tail, timing, summary.
pub fn emit_report(artifacts: &RunArtifacts, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let files = [
        (CERTIFICATES_FILE, serde_json::to_string_pretty(&artifacts.outcomes)? + "\n"),
        (BOUNDS_FILE, bounds_csv(&artifacts.bounds)),
        (TAIL_FILE, tail_csv(&artifacts.tail)),
        (TIMING_FILE, serde_json::to_string_pretty(&artifacts.timings)? + "\n"),
        (SUMMARY_FILE, build_summary(artifacts)),
    ];
    let mut paths = Vec::with_capacity(files.len());
    for (name, contents) in files {
        let path = out_dir.join(name);
        fs::write(&path, contents)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Stores trained certificates for later stages.
pub fn save_outcomes(outcomes: &[CertifyOutcome], out_dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(out_dir)?;
    let path = out_dir.join(CERTIFICATES_FILE);
    fs::write(&path, serde_json::to_string_pretty(outcomes)? + "\n")?;
    Ok(path)
}

/// Loads certificates stored by an earlier train stage.
pub fn load_outcomes(out_dir: &Path) -> Result<Vec<CertifyOutcome>> {
    let text = fs::read_to_string(out_dir.join(CERTIFICATES_FILE))?;
    Ok(serde_json::from_str(&text)?)
}

/// Stores simulation statistics for a later report stage.
pub fn save_stats(stats: &SimStats, out_dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(out_dir)?;
    let path = out_dir.join(SIMULATION_FILE);
    fs::write(&path, serde_json::to_string(stats)? + "\n")?;
    Ok(path)
}

/// Loads simulation statistics if a simulate stage stored them.
pub fn load_stats(out_dir: &Path) -> Result<Option<SimStats>> {
    let path = out_dir.join(SIMULATION_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(path)?;
    Ok(Some(serde_json::from_str(&text)?))
}
