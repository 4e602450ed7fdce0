//! Monte-Carlo ground truth: perturbed rollouts, cumulative-reward and
//! termination-time statistics, and enclosure/envelope comparisons against
//! certified bounds.
//!
//! Rollouts iterate the perturbed closed loop until the terminal region or
//! a step cap; the initial state contributes no reward. Statistics use the
//! unbiased standard-deviation estimator, and enclosure checks allow three
//! standard errors of slack: certified bounds constrain the true
//! expectation, while a simulation only estimates it. Tail-envelope checks
//! likewise allow three binomial standard errors on each frequency.
//!
//! Reproducibility: every episode runs on its own stream of one
//! counter-based generator, keyed by a base seed drawn once; statistics are
//! therefore bit-identical for a fixed seed regardless of worker count.
//! Episodes that hit the step cap are flagged as truncated, excluded from
//! tail frequencies, and reported with a warning — a truncation means the
//! finite-termination assumption may not hold.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::certify::RewardBounds;
use crate::env::{perturbed_step, EnvModel, PolicySpec};
use crate::error::{Error, Result};
use crate::noise::{sample_noise, NoiseSpec};
use crate::space::StateVec;

/// Smallest step cap [`default_max_steps`] will return.
pub const DEFAULT_MAX_STEPS_FLOOR: u32 = 1000;

/// One simulated trajectory under observation noise.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Episode {
    /// Visited states s₀ … s_T; the last entry lies in the terminal region
    /// unless the episode was truncated.
    pub states: Vec<StateVec>,
    /// Step rewards r₀ … r_T with r₀ ≡ 0.
    pub rewards: Vec<f64>,
    /// Σ_t r_t.
    pub cumulative: f64,
    /// Steps taken before stopping.
    pub steps: u32,
    /// True when the step cap elapsed before the terminal region.
    pub truncated: bool,
    /// True when any raw successor left the state box and was clamped.
    pub clamped: bool,
}

/// Compact per-episode record kept inside [`SimStats`] so that tail tables
/// can be evaluated at any threshold after the fact.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub cumulative: f64,
    pub steps: u32,
    pub truncated: bool,
    pub clamped: bool,
}

/// Aggregates for all episodes started from one initial state.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StateStats {
    pub s0: StateVec,
    pub episodes: u64,
    pub mean_reward: f64,
    /// Unbiased sample standard deviation of the cumulative reward.
    pub std_reward: f64,
    pub mean_steps: f64,
    pub max_steps_observed: u32,
    pub truncated: u64,
    pub clamped_episodes: u64,
    pub outcomes: Vec<EpisodeOutcome>,
}

impl StateStats {
    /// Standard error of the mean cumulative reward.
    pub fn se(&self) -> f64 {
        if self.episodes == 0 {
            0.0
        } else {
            self.std_reward / (self.episodes as f64).sqrt()
        }
    }
}

/// Simulation statistics for a batch of initial states.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimStats {
    pub per_state: Vec<StateStats>,
    pub episodes_per_state: u64,
    pub max_steps: u32,
}

impl SimStats {
    pub fn truncated_total(&self) -> u64 {
        self.per_state.iter().map(|s| s.truncated).sum()
    }

    fn pooled(&self) -> impl Iterator<Item = &EpisodeOutcome> {
        self.per_state.iter().flat_map(|s| s.outcomes.iter())
    }

    /// Empirical tail frequencies over all non-truncated episodes:
    /// P(𝓡 ≥ c) when `upper_tail`, else P(𝓡 ≤ c). Zero when every episode
    /// was truncated.
    pub fn tail_table(&self, thresholds: &[f64], upper_tail: bool) -> Vec<(f64, f64)> {
        let kept: Vec<f64> = self
            .pooled()
            .filter(|o| !o.truncated)
            .map(|o| o.cumulative)
            .collect();
        thresholds
            .iter()
            .map(|&c| {
                if kept.is_empty() {
                    return (c, 0.0);
                }
                let hits = kept
                    .iter()
                    .filter(|&&r| if upper_tail { r >= c } else { r <= c })
                    .count();
                (c, hits as f64 / kept.len() as f64)
            })
            .collect()
    }

    /// Empirical P(T > n) over all episodes. A truncated episode ran for
    /// the full step cap, so it certainly exceeded any smaller n.
    pub fn termination_exceedance(&self, n: u32) -> f64 {
        let mut total = 0u64;
        let mut hits = 0u64;
        for o in self.pooled() {
            total += 1;
            if o.steps > n {
                hits += 1;
            }
        }
        if total == 0 {
            0.0
        } else {
            hits as f64 / total as f64
        }
    }
}

/// One tail-envelope query: a certified bound on P(𝓡 ≥ c) (`upper_tail`)
/// or P(𝓡 ≤ c) to compare against the empirical frequency.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TailCheck {
    pub c: f64,
    pub bound: f64,
    pub upper_tail: bool,
}

/// Per-state enclosure comparison row.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StateEnclosureRow {
    pub state: StateVec,
    pub mean: f64,
    pub std: f64,
    pub se: f64,
    pub lower: f64,
    pub upper: f64,
    /// Certified gap width: upper − lower.
    pub gap: f64,
    pub pass: bool,
}

/// Per-threshold tail-envelope comparison row.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TailEnvelopeRow {
    pub c: f64,
    pub bound: f64,
    pub empirical: f64,
    /// Binomial standard error of the empirical frequency.
    pub se: f64,
    pub pass: bool,
}

/// Full comparison of simulation output against certified bounds.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnclosureReport {
    pub states: Vec<StateEnclosureRow>,
    pub tails: Vec<TailEnvelopeRow>,
    pub state_passes: usize,
    pub tail_passes: usize,
    pub all_pass: bool,
    pub truncated_episodes: u64,
}

/// One perturbed episode from `s0`: observations are noise-shifted and
/// clamped, actions come from the policy on the observation, and the loop
/// stops on terminal entry or after `max_steps` steps (truncation).
pub fn rollout(
    env: &EnvModel,
    policy: &PolicySpec,
    noise: &NoiseSpec,
    s0: &StateVec,
    max_steps: u32,
    rng: &mut impl Rng,
) -> Episode {
    let mut states = vec![s0.clone()];
    let mut rewards = vec![0.0];
    let mut cumulative = 0.0;
    let mut clamped = false;
    let mut steps = 0u32;
    let mut s = s0.clone();
    let mut truncated = false;
    while !env.is_terminal(&s) {
        if steps >= max_steps {
            truncated = true;
            break;
        }
        let delta = sample_noise(noise, rng);
        let out = perturbed_step(env, policy, &s, &delta);
        cumulative += out.reward;
        clamped |= out.clamped;
        steps += 1;
        s = out.next;
        states.push(s.clone());
        rewards.push(out.reward);
    }
    Episode {
        states,
        rewards,
        cumulative,
        steps,
        truncated,
        clamped,
    }
}

fn summarize(s0: StateVec, outcomes: Vec<EpisodeOutcome>) -> StateStats {
    let n = outcomes.len() as f64;
    let mean_reward = outcomes.iter().map(|o| o.cumulative).sum::<f64>() / n;
    let std_reward = if outcomes.len() < 2 {
        0.0
    } else {
        let ss: f64 = outcomes
            .iter()
            .map(|o| {
                let d = o.cumulative - mean_reward;
                d * d
            })
            .sum();
        (ss / (n - 1.0)).sqrt()
    };
    StateStats {
        s0,
        episodes: outcomes.len() as u64,
        mean_reward,
        std_reward,
        mean_steps: outcomes.iter().map(|o| o.steps as f64).sum::<f64>() / n,
        max_steps_observed: outcomes.iter().map(|o| o.steps).max().unwrap_or(0),
        truncated: outcomes.iter().filter(|o| o.truncated).count() as u64,
        clamped_episodes: outcomes.iter().filter(|o| o.clamped).count() as u64,
        outcomes,
    }
}

/// Independent rollouts for each initial state. Episodes run in parallel on
/// per-episode generator streams derived from one base seed, so the result
/// is a deterministic function of (inputs, rng state) whatever the worker
/// count.
pub fn estimate_stats(
    env: &EnvModel,
    policy: &PolicySpec,
    noise: &NoiseSpec,
    initial_states: &[StateVec],
    episodes_per_state: u64,
    max_steps: u32,
    rng: &mut impl Rng,
) -> Result<SimStats> {
    if episodes_per_state == 0 {
        return Err(Error::InvalidArgument(
            "at least one episode per initial state is required".into(),
        ));
    }
    for s0 in initial_states {
        if s0.0.len() != env.dim() {
            return Err(Error::Dimension {
                expected: env.dim(),
                got: s0.0.len(),
            });
        }
    }
    let base: u64 = rng.gen();
    let total = initial_states.len() as u64 * episodes_per_state;
    let outcomes: Vec<EpisodeOutcome> = (0..total)
        .into_par_iter()
        .map(|j| {
            let mut ep_rng = ChaCha8Rng::seed_from_u64(base);
            ep_rng.set_stream(j);
            let s0 = &initial_states[(j / episodes_per_state) as usize];
            let ep = rollout(env, policy, noise, s0, max_steps, &mut ep_rng);
            EpisodeOutcome {
                cumulative: ep.cumulative,
                steps: ep.steps,
                truncated: ep.truncated,
                clamped: ep.clamped,
            }
        })
        .collect();
    let per_state = initial_states
        .iter()
        .enumerate()
        .map(|(i, s0)| {
            let lo = i * episodes_per_state as usize;
            let hi = lo + episodes_per_state as usize;
            summarize(s0.clone(), outcomes[lo..hi].to_vec())
        })
        .collect();
    Ok(SimStats {
        per_state,
        episodes_per_state,
        max_steps,
    })
}

/// Step cap from a rough upper estimate of the expected termination time:
/// ten times the estimate, with a floor of [`DEFAULT_MAX_STEPS_FLOOR`].
pub fn default_max_steps(expected_t_upper: f64) -> u32 {
    if !expected_t_upper.is_finite() || expected_t_upper <= 0.0 {
        return DEFAULT_MAX_STEPS_FLOOR;
    }
    let scaled = (10.0 * expected_t_upper).ceil();
    if scaled >= u32::MAX as f64 {
        u32::MAX
    } else {
        (scaled as u32).max(DEFAULT_MAX_STEPS_FLOOR)
    }
}

/// Compare simulation statistics against certified bounds: a state row
/// passes when lower − 3·SE ≤ mean ≤ upper + 3·SE, and a tail row passes
/// when the empirical frequency is at most the bound plus three binomial
/// standard errors. Bounds must be listed in the same order as the
/// simulated initial states.
pub fn enclosure_report(
    stats: &SimStats,
    bounds: &[RewardBounds],
    tails: &[TailCheck],
) -> Result<EnclosureReport> {
    if bounds.len() != stats.per_state.len() {
        return Err(Error::InvalidArgument(format!(
            "{} bounds for {} simulated states",
            bounds.len(),
            stats.per_state.len()
        )));
    }
    for (b, s) in bounds.iter().zip(&stats.per_state) {
        if b.s0.0 != s.s0.0 {
            return Err(Error::InvalidArgument(format!(
                "bound state {:?} does not match simulated state {:?}",
                b.s0.0, s.s0.0
            )));
        }
    }
    let truncated_episodes = stats.truncated_total();
    if truncated_episodes > 0 {
        log::warn!(
            "{truncated_episodes} episodes hit the step cap of {}; the \
             finite-termination assumption may not hold and means understate \
             the true cumulative reward",
            stats.max_steps
        );
    }
    let states: Vec<StateEnclosureRow> = bounds
        .iter()
        .zip(&stats.per_state)
        .map(|(b, s)| {
            let se = s.se();
            let pass = b.lower - 3.0 * se <= s.mean_reward && s.mean_reward <= b.upper + 3.0 * se;
            StateEnclosureRow {
                state: s.s0.clone(),
                mean: s.mean_reward,
                std: s.std_reward,
                se,
                lower: b.lower,
                upper: b.upper,
                gap: b.upper - b.lower,
                pass,
            }
        })
        .collect();
    let kept: u64 = stats
        .per_state
        .iter()
        .map(|s| s.episodes - s.truncated)
        .sum();
    let tails: Vec<TailEnvelopeRow> = tails
        .iter()
        .map(|t| {
            let empirical = stats.tail_table(&[t.c], t.upper_tail)[0].1;
            let se = if kept == 0 {
                0.0
            } else {
                (empirical * (1.0 - empirical) / kept as f64).sqrt()
            };
            TailEnvelopeRow {
                c: t.c,
                bound: t.bound,
                empirical,
                se,
                pass: empirical <= t.bound + 3.0 * se,
            }
        })
        .collect();
    let state_passes = states.iter().filter(|r| r.pass).count();
    let tail_passes = tails.iter().filter(|r| r.pass).count();
    Ok(EnclosureReport {
        all_pass: state_passes == states.len() && tail_passes == tails.len(),
        state_passes,
        tail_passes,
        states,
        tails,
        truncated_episodes,
    })
}
