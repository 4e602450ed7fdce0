//! Strict batch-run configuration.
//!
//! A run file is JSON naming a builtin environment, a policy (inline or by
//! path), a noise law (broadcast across the state dimensions), the
//! certificate kinds to train, and optional training overrides. Every
//! unknown key is fatal: a silently ignored hyperparameter typo could
//! invalidate a certificate, so parsing is deny-by-default.
//!
//! Unset training fields resolve to the stock defaults, except that the
//! pre-expectation loss weight k₂ and the grid granularity τ have
//! per-environment defaults tuned to each benchmark's scale.

use std::path::Path;

use serde::{Deserialize, Serialize};

use rand::Rng;

use crate::env::{make_builtin_env, EnvModel, PolicySpec};
use crate::error::{Error, Result};
use crate::learn::TrainConfig;
use crate::net::Activation;
use crate::noise::{NoiseLaw, NoiseSpec};
use crate::space::StateVec;
use crate::verify::CertKind;

/// Episodes per initial state when the config does not say otherwise.
pub const DEFAULT_EPISODES_PER_STATE: u64 = 200;

/// Environment reference: the name of a builtin, or a full inline model.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EnvRef {
    Builtin(String),
    Inline(Box<EnvModel>),
}

impl EnvRef {
    pub fn name(&self) -> &str {
        match self {
            EnvRef::Builtin(name) => name,
            EnvRef::Inline(env) => &env.name,
        }
    }

    pub fn resolve(&self) -> Result<EnvModel> {
        match self {
            EnvRef::Builtin(name) => make_builtin_env(name),
            EnvRef::Inline(env) => {
                env.validate()?;
                Ok((**env).clone())
            }
        }
    }
}

/// Per-environment default for the pre-expectation loss weight k₂.
pub fn env_default_k2(env: &str) -> f64 {
    match env {
        "b1" => 0.005,
        "mountaincar" => 0.007,
        "b2" => 0.05,
        _ => 0.01,
    }
}

/// Per-environment default for the grid granularity τ.
pub fn env_default_tau(env: &str) -> f64 {
    match env {
        "mountaincar" => 0.01,
        _ => 0.02,
    }
}

/// Optional overrides of [`TrainConfig`]; anything left unset falls back to
/// the stock or per-environment default.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainOverrides {
    pub k: Option<f64>,
    pub k_prime: Option<f64>,
    pub k1: Option<f64>,
    pub k2: Option<f64>,
    pub k3: Option<f64>,
    pub u_bar: Option<f64>,
    pub l_bar: Option<f64>,
    pub n_successors: Option<usize>,
    pub lr: Option<f64>,
    pub weight_decay: Option<f64>,
    pub epochs: Option<usize>,
    pub timeout_minutes: Option<f64>,
    pub tau: Option<f64>,
    pub xi: Option<f64>,
    pub epsilon_rsm: Option<f64>,
    pub hidden: Option<Vec<usize>>,
    pub activation: Option<Activation>,
    pub partition_cells: Option<usize>,
    pub grid_budget: Option<usize>,
}

fn default_out() -> String {
    "out".into()
}

fn default_episodes() -> u64 {
    DEFAULT_EPISODES_PER_STATE
}

/// One batch run: what to certify, against which system, and how to check
/// the result by simulation.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Builtin environment name, or a full inline environment model.
    pub env: EnvRef,
    /// Inline policy; exactly one of `policy` and `policy_path` is set.
    #[serde(default)]
    pub policy: Option<PolicySpec>,
    /// Path to a JSON policy file.
    #[serde(default)]
    pub policy_path: Option<String>,
    /// Observation-noise law, broadcast over all state dimensions.
    pub noise: NoiseLaw,
    /// Certificate kinds to train, in order.
    pub kinds: Vec<CertKind>,
    #[serde(default)]
    pub train: TrainOverrides,
    #[serde(default)]
    pub seed: u64,
    /// Output directory for report files.
    #[serde(default = "default_out")]
    pub out: String,
    /// Explicit initial states; exactly one of `initial_states` and
    /// `sample_states` is set.
    #[serde(default)]
    pub initial_states: Option<Vec<Vec<f64>>>,
    /// Number of initial states to sample uniformly from the initial box.
    #[serde(default)]
    pub sample_states: Option<u64>,
    /// Thresholds c at which to evaluate tail bounds.
    #[serde(default)]
    pub tail_thresholds: Vec<f64>,
    #[serde(default = "default_episodes")]
    pub episodes_per_state: u64,
    /// Simulation step cap; derived from the certified bounds when unset.
    #[serde(default)]
    pub max_steps: Option<u32>,
    /// Worker threads for parallel sections; library default when unset.
    #[serde(default)]
    pub workers: Option<usize>,
}

impl RunConfig {
    /// Training configuration with defaults and overrides folded in.
    pub fn resolved_train(&self) -> TrainConfig {
        let stock = TrainConfig {
            k2: env_default_k2(self.env.name()),
            tau: env_default_tau(self.env.name()),
            ..TrainConfig::default()
        };
        let o = &self.train;
        TrainConfig {
            k: o.k.unwrap_or(stock.k),
            k_prime: o.k_prime.unwrap_or(stock.k_prime),
            k1: o.k1.unwrap_or(stock.k1),
            k2: o.k2.unwrap_or(stock.k2),
            k3: o.k3.unwrap_or(stock.k3),
            u_bar: o.u_bar.or(stock.u_bar),
            l_bar: o.l_bar.or(stock.l_bar),
            n_successors: o.n_successors.unwrap_or(stock.n_successors),
            lr: o.lr.unwrap_or(stock.lr),
            weight_decay: o.weight_decay.unwrap_or(stock.weight_decay),
            epochs: o.epochs.unwrap_or(stock.epochs),
            timeout: o
                .timeout_minutes
                .map(|m| std::time::Duration::from_secs_f64(m * 60.0))
                .unwrap_or(stock.timeout),
            tau: o.tau.unwrap_or(stock.tau),
            xi: o.xi.unwrap_or(stock.xi),
            epsilon_rsm: o.epsilon_rsm.unwrap_or(stock.epsilon_rsm),
            hidden: o.hidden.clone().unwrap_or(stock.hidden),
            activation: o.activation.unwrap_or(stock.activation),
            partition_cells: o.partition_cells.unwrap_or(stock.partition_cells),
            grid_budget: o.grid_budget.unwrap_or(stock.grid_budget),
        }
    }

    /// The environment this run certifies.
    pub fn resolve_env(&self) -> Result<EnvModel> {
        self.env.resolve()
    }

    /// The policy, inline or loaded from `policy_path`, validated against
    /// the environment.
    pub fn resolve_policy(&self, env: &EnvModel) -> Result<PolicySpec> {
        let policy = match (&self.policy, &self.policy_path) {
            (Some(p), None) => p.clone(),
            (None, Some(path)) => {
                let text = std::fs::read_to_string(path)?;
                serde_json::from_str(&text)?
            }
            _ => {
                return Err(Error::Config(
                    "exactly one of 'policy' and 'policy_path' must be set".into(),
                ))
            }
        };
        policy.validate(env)?;
        Ok(policy)
    }

    /// The noise law broadcast over the environment's dimensions.
    pub fn resolve_noise(&self, env: &EnvModel) -> Result<NoiseSpec> {
        NoiseSpec::iid(self.noise.clone(), env.dim())
    }

    /// Initial states: the explicit list, or `sample_states` points drawn
    /// uniformly from the initial box.
    pub fn resolve_initial_states(
        &self,
        env: &EnvModel,
        rng: &mut impl Rng,
    ) -> Result<Vec<StateVec>> {
        match (&self.initial_states, self.sample_states) {
            (Some(list), None) => list
                .iter()
                .map(|coords| {
                    let s = StateVec(coords.clone());
                    if coords.len() != env.dim() {
                        return Err(Error::Dimension {
                            expected: env.dim(),
                            got: coords.len(),
                        });
                    }
                    if !env.state_box.contains(&s) {
                        return Err(Error::Config(format!(
                            "initial state {coords:?} lies outside the state box"
                        )));
                    }
                    Ok(s)
                })
                .collect(),
            (None, Some(n)) => Ok((0..n)
                .map(|_| {
                    StateVec(
                        env.initial_box
                            .lo
                            .iter()
                            .zip(&env.initial_box.hi)
                            .map(|(lo, hi)| rng.gen_range(*lo..=*hi))
                            .collect(),
                    )
                })
                .collect()),
            _ => Err(Error::Config(
                "exactly one of 'initial_states' and 'sample_states' must be set".into(),
            )),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let env = self.resolve_env()?;
        self.resolve_noise(&env)?;
        if self.kinds.is_empty() {
            return Err(Error::Config("at least one certificate kind is required".into()));
        }
        for (i, a) in self.kinds.iter().enumerate() {
            if self.kinds[..i].contains(a) {
                return Err(Error::Config(format!("duplicate certificate kind {a:?}")));
            }
        }
        if let (None, Some(path)) = (&self.policy, &self.policy_path) {
            if !Path::new(path).exists() {
                return Err(Error::Config(format!("policy file '{path}' does not exist")));
            }
        }
        self.resolve_policy(&env)?;
        match (&self.initial_states, self.sample_states) {
            (Some(list), None) => {
                if list.is_empty() {
                    return Err(Error::Config("initial state list is empty".into()));
                }
                // Checks dimensions and state-box containment.
                let mut rng = rand::rngs::mock::StepRng::new(0, 0);
                self.resolve_initial_states(&env, &mut rng)?;
            }
            (None, Some(n)) => {
                if n == 0 {
                    return Err(Error::Config("sample_states must be at least 1".into()));
                }
            }
            _ => {
                return Err(Error::Config(
                    "exactly one of 'initial_states' and 'sample_states' must be set".into(),
                ))
            }
        }
        if self.episodes_per_state == 0 {
            return Err(Error::Config("episodes_per_state must be at least 1".into()));
        }
        if self.tail_thresholds.iter().any(|c| !c.is_finite()) {
            return Err(Error::Config("tail thresholds must be finite".into()));
        }
        let train = self.resolved_train();
        train.validate()?;
        if !(train.tau > train.xi) {
            return Err(Error::Config(format!(
                "granularity tau = {} must exceed the refinement step xi = {}",
                train.tau, train.xi
            )));
        }
        Ok(())
    }
}

/// Parse and validate a run configuration file.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    let cfg: RunConfig = serde_json::from_str(&text)?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn minimal_json() -> serde_json::Value {
        serde_json::json!({
            "env": "toy1d",
            "policy": {
                "kind": "grid",
                "dims": 1,
                "cells": [{"lo": [-0.05], "hi": [3.95], "action": 0.0}]
            },
            "noise": {"kind": "uniform", "r": 0.1},
            "kinds": ["urs", "lrs"],
            "initial_states": [[0.8]]
        })
    }

    fn parse_value(v: &serde_json::Value) -> Result<RunConfig> {
        let cfg: RunConfig = serde_json::from_value(v.clone())?;
        cfg.validate()?;
        Ok(cfg)
    }

    #[test]
    fn empty_overrides_resolve_to_stock_defaults() {
        let cfg = parse_value(&minimal_json()).unwrap();
        let train = cfg.resolved_train();
        assert_eq!(train.lr, 1e-3);
        assert_eq!(train.weight_decay, 1.5e-3);
        assert_eq!(train.k, -0.01);
        assert_eq!(train.k_prime, 0.01);
        assert_eq!(train.partition_cells, 10);
        assert_eq!(train.tau, 0.02);
        assert_eq!(train.epochs, 2000);
        assert_eq!(train.timeout, std::time::Duration::from_secs(3600));
        assert_eq!(cfg.episodes_per_state, 200);
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.out, "out");
    }

    #[test]
    fn per_environment_defaults_follow_the_benchmark() {
        for (env, k2, tau) in [
            ("cartpole", 0.01, 0.02),
            ("b1", 0.005, 0.02),
            ("mountaincar", 0.007, 0.01),
            ("b2", 0.05, 0.02),
        ] {
            let mut v = minimal_json();
            v["env"] = env.into();
            // Policy validity is per-env; skip validate and check resolution.
            let cfg: RunConfig = serde_json::from_value(v).unwrap();
            let train = cfg.resolved_train();
            assert_eq!(train.k2, k2, "{env}");
            assert_eq!(train.tau, tau, "{env}");
        }
    }

    #[test]
    fn unknown_keys_are_fatal() {
        let mut v = minimal_json();
        v["learning_rate_typo"] = 1.0.into();
        assert!(serde_json::from_value::<RunConfig>(v).is_err());
        let mut v = minimal_json();
        v["train"] = serde_json::json!({"leerning_rate": 0.1});
        assert!(serde_json::from_value::<RunConfig>(v).is_err());
    }

    #[test]
    fn inverted_granularity_and_refinement_step_are_rejected() {
        let mut v = minimal_json();
        v["train"] = serde_json::json!({"tau": 0.001, "xi": 0.002});
        let err = parse_value(&v).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }

    #[test]
    fn exactly_one_policy_source_is_required() {
        let mut v = minimal_json();
        v["policy_path"] = "also-a-path.json".into();
        assert!(parse_value(&v).is_err());
        let mut v = minimal_json();
        v.as_object_mut().unwrap().remove("policy");
        assert!(parse_value(&v).is_err());
    }

    #[test]
    fn exactly_one_state_source_is_required() {
        let mut v = minimal_json();
        v["sample_states"] = 5.into();
        assert!(parse_value(&v).is_err());
        let mut v = minimal_json();
        v.as_object_mut().unwrap().remove("initial_states");
        assert!(parse_value(&v).is_err());
        v["sample_states"] = 5.into();
        assert!(parse_value(&v).is_ok());
    }

    #[test]
    fn missing_policy_files_are_rejected() {
        let mut v = minimal_json();
        v.as_object_mut().unwrap().remove("policy");
        v["policy_path"] = "/nonexistent/policy.json".into();
        assert!(matches!(parse_value(&v), Err(Error::Config(_))));
    }

    #[test]
    fn config_round_trips_through_json() {
        let mut v = minimal_json();
        v["train"] = serde_json::json!({"lr": 0.5, "hidden": [16, 16]});
        v["tail_thresholds"] = serde_json::json!([5.0, 6.0]);
        v["seed"] = 9.into();
        let cfg = parse_value(&v).unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        let again: RunConfig = serde_json::from_str(&text).unwrap();
        let a = serde_json::to_value(&cfg).unwrap();
        let b = serde_json::to_value(&again).unwrap();
        assert_eq!(a, b);
        assert_eq!(again.resolved_train().lr, 0.5);
        assert_eq!(again.resolved_train().hidden, vec![16, 16]);
    }

    #[test]
    fn parse_config_reads_files_and_enforces_validity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        let mut f = std::fs::File::create(&path).unwrap();
        write!(f, "{}", minimal_json()).unwrap();
        let cfg = parse_config(&path).unwrap();
        assert_eq!(cfg.env.name(), "toy1d");
        assert!(parse_config(&dir.path().join("missing.json")).is_err());
    }

    #[test]
    fn inline_environments_are_accepted_and_validated() {
        let mut v = minimal_json();
        let env = crate::env::make_builtin_env("toy1d").unwrap();
        v["env"] = serde_json::to_value(&env).unwrap();
        let cfg = parse_value(&v).unwrap();
        assert_eq!(cfg.env.name(), "toy1d");
        assert_eq!(cfg.resolve_env().unwrap(), env);

        // Malformed inline model: the initial box overlaps the terminal set.
        let mut broken = env.clone();
        broken.initial_box = crate::space::Rect::new(vec![0.0], vec![0.04]).unwrap();
        v["env"] = serde_json::to_value(&broken).unwrap();
        assert!(parse_value(&v).is_err());
    }

    #[test]
    fn sampled_initial_states_stay_in_the_initial_box() {
        use rand::SeedableRng;
        let mut v = minimal_json();
        v.as_object_mut().unwrap().remove("initial_states");
        v["sample_states"] = 32.into();
        let cfg = parse_value(&v).unwrap();
        let env = cfg.resolve_env().unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let states = cfg.resolve_initial_states(&env, &mut rng).unwrap();
        assert_eq!(states.len(), 32);
        for s in &states {
            assert!(env.initial_box.contains(s), "{:?}", s.0);
        }
    }

    #[test]
    fn explicit_states_must_fit_the_state_box() {
        let mut v = minimal_json();
        v["initial_states"] = serde_json::json!([[99.0]]);
        assert!(parse_value(&v).is_err());
        let mut v = minimal_json();
        v["initial_states"] = serde_json::json!([[0.1, 0.2]]);
        assert!(parse_value(&v).is_err());
    }
}
