//! Certificate training: hinge losses over the grid, gradient descent, and
//! the outer train–validate–refine loop.
//!
//! The loss for a reward martingale candidate h is
//! `k1·L_C1 + k2·L_C2 + k3·L_C3` where L_C1 hinges the terminal bounds
//! `K ≤ h ≤ K′`, L_C2 hinges the pre-expectation condition against an
//! empirical mean over N sampled successors with the Lipschitz margin ζ (or
//! ζ′), and L_C3 hinges certificate values at initial states against the
//! tightness thresholds ū / l̲. Ranking maps replace the terms with
//! nonnegativity and ε-decrease hinges. Margins are recomputed from the
//! current network each epoch but frozen inside a single loss+gradient
//! evaluation, so the gradient matches finite differences of the
//! frozen-margin loss exactly.
//!
//! The outer loop discretizes at granularity τ, alternates training and
//! sound validation, and on failure shrinks τ by ξ and rebuilds the grid
//! keeping all counterexamples, until validation succeeds or the wall-clock
//! budget runs out.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::{perturbed_step, EnvModel, PolicySpec};
use crate::error::{Error, Result};
use crate::grid::{build_grid, classify_grid, refine_grid, TrainingSets};
use crate::net::{Activation, MlpNet};
use crate::noise::{sample_noise, NoiseSpec};
use crate::space::StateVec;
use crate::verify::{
    margin_zeta, rsm_difference_interval, rsm_inflation, validate_certificate, CertKind,
    CheckConfig, CounterExample, ValidationResult,
};

/// Items per parallel work unit. Chunking by a fixed size (instead of by
/// thread count) keeps floating-point summation order — and therefore every
/// trained parameter — independent of the worker pool.
const LOSS_CHUNK: usize = 128;

/// Training hyperparameters and loop budgets.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Terminal lower bound K.
    pub k: f64,
    /// Terminal upper bound K′.
    pub k_prime: f64,
    /// Weight of the boundedness (or nonnegativity) term.
    pub k1: f64,
    /// Weight of the pre-expectation term.
    pub k2: f64,
    /// Weight of the tightness term.
    pub k3: f64,
    /// Tightness threshold ū for upper certificates; None drops the term.
    pub u_bar: Option<f64>,
    /// Tightness threshold l̲ for lower certificates; None drops the term.
    pub l_bar: Option<f64>,
    /// Successor samples N per grid point.
    pub n_successors: usize,
    pub lr: f64,
    /// Decoupled weight decay applied by the optimizer, not the loss.
    pub weight_decay: f64,
    /// Epochs per train/validate round.
    pub epochs: usize,
    /// Wall-clock budget for the whole certify loop.
    pub timeout: Duration,
    /// Initial grid granularity τ.
    pub tau: f64,
    /// Granularity shrink ξ per failed validation.
    pub xi: f64,
    /// Required expected decrease ε for ranking maps.
    pub epsilon_rsm: f64,
    /// Hidden layer widths of the certificate network (empty = linear).
    pub hidden: Vec<usize>,
    /// Hidden activation of the certificate network.
    pub activation: Activation,
    /// Noise-support subdivisions per dimension for validation.
    pub partition_cells: usize,
    /// Maximum grid points per discretization.
    pub grid_budget: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            k: -0.01,
            k_prime: 0.01,
            k1: 1.0,
            k2: 0.01,
            k3: 1.0,
            u_bar: None,
            l_bar: None,
            n_successors: 16,
            lr: 1e-3,
            weight_decay: 1.5e-3,
            epochs: 2000,
            timeout: Duration::from_secs(60 * 60),
            tau: 0.02,
            xi: 0.002,
            epsilon_rsm: 0.1,
            hidden: vec![200, 200, 200],
            activation: Activation::Relu,
            partition_cells: 10,
            grid_budget: 2_000_000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k > self.k_prime {
            return Err(Error::Config(format!(
                "terminal window is empty: K = {} > K' = {}",
                self.k, self.k_prime
            )));
        }
        if self.k1 < 0.0 || self.k2 < 0.0 || self.k3 < 0.0 {
            return Err(Error::Config("loss weights must be nonnegative".into()));
        }
        if self.n_successors == 0 {
            return Err(Error::Config("successor sample count must be at least 1".into()));
        }
        if !(self.epsilon_rsm > 0.0) {
            return Err(Error::Config("ranking decrease epsilon must be positive".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config("learning rate must be finite and nonnegative".into()));
        }
        if !(self.tau > 0.0 && self.xi > 0.0) {
            return Err(Error::Config("granularity and refinement step must be positive".into()));
        }
        Ok(())
    }
}

/// Which expectation engine validated the certificate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpectationMode {
    Analytic,
    OverApprox,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CertStatus {
    Validated,
    Unknown,
}

/// A trained certificate with every constant needed to derive bounds,
/// serialized alongside a hash of the system it was validated against.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Certificate {
    pub kind: CertKind,
    pub net: MlpNet,
    pub k: f64,
    pub k_prime: f64,
    /// Required expected decrease per step (ranking maps only).
    pub epsilon: Option<f64>,
    /// Sound enclosure of the one-step ranking-map change (ranking maps only).
    pub diff_lo: Option<f64>,
    pub diff_hi: Option<f64>,
    pub tau: f64,
    pub zeta: f64,
    pub zeta_prime: f64,
    pub l_f: f64,
    pub l_pi: f64,
    pub l_h: f64,
    /// Uniform one-step difference bound |h(next) − h(s)| ≤ m.
    pub m: f64,
    /// Reward range of the environment the certificate was built against,
    /// kept so tail constants can be derived from the certificate alone.
    pub r_min: f64,
    pub r_max: f64,
    pub expectation_mode: ExpectationMode,
    /// False when the policy has no global Lipschitz constant and the
    /// off-grid lift is heuristic at cell boundaries.
    pub lift_sound: bool,
    pub status: CertStatus,
    /// Hash of environment, policy, and noise; bound derivation re-checks it.
    pub context_hash: String,
    /// Last validation counterexamples; empty when status is Validated.
    pub counterexamples: Vec<CounterExample>,
}

/// One train/validate round of the outer loop.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub tau: f64,
    pub grid_points: usize,
    pub final_loss: f64,
    pub counterexamples: usize,
    pub train_seconds: f64,
    pub validate_seconds: f64,
}

/// Certificate plus the per-iteration history of the loop that produced it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertifyOutcome {
    pub certificate: Certificate,
    pub iterations: Vec<IterationLog>,
}

/// Hash of the (environment, policy, noise) triple a certificate is valid
/// for. Bounds derived later must present the same triple.
pub fn context_hash(env: &EnvModel, policy: &PolicySpec, noise: &NoiseSpec) -> String {
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_string(env).expect("environments serialize"));
    hasher.update([0u8]);
    hasher.update(serde_json::to_string(policy).expect("policies serialize"));
    hasher.update([0u8]);
    hasher.update(serde_json::to_string(noise).expect("noise specs serialize"));
    hex::encode(hasher.finalize())
}

/// Draws N successor states f(s, π(s+δ)) under fresh noise.
pub fn sample_successors(
    env: &EnvModel,
    policy: &PolicySpec,
    noise: &NoiseSpec,
    s: &StateVec,
    n: usize,
    rng: &mut impl Rng,
) -> Vec<StateVec> {
    (0..n)
        .map(|_| {
            let delta = sample_noise(noise, rng);
            perturbed_step(env, policy, s, &delta).next
        })
        .collect()
}

/// Margins frozen for the duration of one loss+gradient evaluation.
#[derive(Clone, Copy, Debug)]
pub struct LossMargins {
    /// Decrease margin ζ for upper certificates.
    pub zeta: f64,
    /// Increase margin ζ′ for lower certificates.
    pub zeta_prime: f64,
    /// Required grid decrease for ranking maps: ε plus the reward-free
    /// Lipschitz inflation.
    pub eps_required: f64,
    /// Required grid nonnegativity clearance for ranking maps: τ·L_h, so
    /// the covering radius cannot dip the certificate below zero off-grid.
    pub nonneg_required: f64,
}

/// Derives the frozen loss margins from the current network's constants.
pub fn loss_margins(
    env: &EnvModel,
    policy: &PolicySpec,
    net: &MlpNet,
    tau: f64,
    epsilon_rsm: f64,
) -> LossMargins {
    let report = margin_zeta(env, policy, net, tau);
    LossMargins {
        zeta: report.zeta,
        zeta_prime: report.zeta_prime,
        eps_required: epsilon_rsm + rsm_inflation(&report),
        nonneg_required: tau * report.l_h,
    }
}

/// Successors for one grid point, deduplicated bit-for-bit with
/// multiplicities (grid policies produce at most |actions| distinct ones).
type SuccessorBatch = Vec<(StateVec, u32)>;

fn draw_successor_batches(
    env: &EnvModel,
    policy: &PolicySpec,
    noise: &NoiseSpec,
    points: &[StateVec],
    n: usize,
    rng: &mut impl Rng,
) -> Vec<SuccessorBatch> {
    points
        .iter()
        .map(|s| {
            let mut order: Vec<(StateVec, u32)> = Vec::new();
            let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
            for _ in 0..n {
                let delta = sample_noise(noise, rng);
                let next = perturbed_step(env, policy, s, &delta).next;
                let key: Vec<u64> = next.coords().iter().map(|x| x.to_bits()).collect();
                match index.get(&key) {
                    Some(&i) => order[i].1 += 1,
                    None => {
                        index.insert(key, order.len());
                        order.push((next, 1));
                    }
                }
            }
            order
        })
        .collect()
}

/// Deterministic parallel sum of per-item losses and gradients: fixed-size
/// chunks are processed in parallel, each accumulating sequentially, and the
/// ordered chunk results are folded sequentially.
fn chunked_loss_sum<T: Sync>(
    items: &[T],
    param_len: usize,
    term: impl Fn(&T, &mut [f64]) -> f64 + Sync,
) -> (f64, Vec<f64>) {
    let partials: Vec<(f64, Vec<f64>)> = items
        .par_chunks(LOSS_CHUNK)
        .map(|chunk| {
            let mut grad = vec![0.0; param_len];
            let mut loss = 0.0;
            for item in chunk {
                loss += term(item, &mut grad);
            }
            (loss, grad)
        })
        .collect();
    let mut loss = 0.0;
    let mut grad = vec![0.0; param_len];
    for (l, g) in partials {
        loss += l;
        for (acc, v) in grad.iter_mut().zip(&g) {
            *acc += v;
        }
    }
    (loss, grad)
}

/// Full-batch loss and parameter gradient for one candidate.
///
/// Successor noise is drawn from `rng` once at entry and frozen, and the
/// supplied margins are treated as constants, so the returned gradient is
/// the exact derivative of the returned value. Successors are resampled by
/// the caller between epochs via fresh `rng` state.
pub fn martingale_loss(
    net: &MlpNet,
    kind: CertKind,
    sets: &TrainingSets,
    margins: &LossMargins,
    cfg: &TrainConfig,
    env: &EnvModel,
    policy: &PolicySpec,
    noise: &NoiseSpec,
    rng: &mut impl Rng,
) -> (f64, Vec<f64>) {
    let p = net.param_len();
    let n = cfg.n_successors as f64;
    if sets.c2.is_empty() {
        log::warn!("no non-terminal grid points: the loss has no pre-expectation term");
    }
    let batches = draw_successor_batches(env, policy, noise, &sets.c2, cfg.n_successors, rng);
    let mut loss = 0.0;
    let mut grad = vec![0.0; p];

    let mut add = |l: f64, g: Vec<f64>| {
        loss += l;
        for (acc, v) in grad.iter_mut().zip(&g) {
            *acc += v;
        }
    };

    match kind {
        CertKind::Urs | CertKind::Lrs => {
            if !sets.c1.is_empty() && cfg.k1 > 0.0 {
                let w = cfg.k1 / sets.c1.len() as f64;
                let (l, g) = chunked_loss_sum(&sets.c1, p, |s, grad| {
                    let h = net.forward_scalar(s.coords());
                    let mut l = 0.0;
                    if h - cfg.k_prime > 0.0 {
                        l += w * (h - cfg.k_prime);
                        net.backprop_scalar_into(s.coords(), w, grad);
                    }
                    if cfg.k - h > 0.0 {
                        l += w * (cfg.k - h);
                        net.backprop_scalar_into(s.coords(), -w, grad);
                    }
                    l
                });
                add(l, g);
            }
            if !sets.c2.is_empty() && cfg.k2 > 0.0 {
                let w = cfg.k2 / sets.c2.len() as f64;
                let items: Vec<(&StateVec, &SuccessorBatch)> =
                    sets.c2.iter().zip(&batches).collect();
                let upper = kind == CertKind::Urs;
                let margin = if upper { margins.zeta } else { margins.zeta_prime };
                let (l, g) = chunked_loss_sum(&items, p, |(s, batch), grad| {
                    let h = net.forward_scalar(s.coords());
                    let mean: f64 = batch
                        .iter()
                        .map(|(s2, c)| *c as f64 * net.forward_scalar(s2.coords()) / n)
                        .sum();
                    let viol = if upper { mean - h + margin } else { h - mean - margin };
                    if viol > 0.0 {
                        let sign = if upper { 1.0 } else { -1.0 };
                        net.backprop_scalar_into(s.coords(), -sign * w, grad);
                        for (s2, c) in batch.iter() {
                            net.backprop_scalar_into(
                                s2.coords(),
                                sign * w * *c as f64 / n,
                                grad,
                            );
                        }
                        w * viol
                    } else {
                        0.0
                    }
                });
                add(l, g);
            }
            let threshold = if kind == CertKind::Urs { cfg.u_bar } else { cfg.l_bar };
            if let Some(t) = threshold {
                if !sets.c3.is_empty() && cfg.k3 > 0.0 {
                    let w = cfg.k3 / sets.c3.len() as f64;
                    let upper = kind == CertKind::Urs;
                    let (l, g) = chunked_loss_sum(&sets.c3, p, |s, grad| {
                        let h = net.forward_scalar(s.coords());
                        let viol = if upper { h - t } else { t - h };
                        if viol > 0.0 {
                            let sign = if upper { 1.0 } else { -1.0 };
                            net.backprop_scalar_into(s.coords(), sign * w, grad);
                            w * viol
                        } else {
                            0.0
                        }
                    });
                    add(l, g);
                }
            }
        }
        CertKind::Rsm => {
            // Nonnegativity with clearance τ·L_h over every grid point, so
            // the covering radius lifts it to the whole box.
            let all: Vec<&StateVec> = sets.c1.iter().chain(&sets.c2).collect();
            if !all.is_empty() && cfg.k1 > 0.0 {
                let w = cfg.k1 / all.len() as f64;
                let floor = margins.nonneg_required;
                let (l, g) = chunked_loss_sum(&all, p, |s, grad| {
                    let h = net.forward_scalar(s.coords());
                    if floor - h > 0.0 {
                        net.backprop_scalar_into(s.coords(), -w, grad);
                        w * (floor - h)
                    } else {
                        0.0
                    }
                });
                add(l, g);
            }
            if !sets.c2.is_empty() && cfg.k2 > 0.0 {
                let w = cfg.k2 / sets.c2.len() as f64;
                let items: Vec<(&StateVec, &SuccessorBatch)> =
                    sets.c2.iter().zip(&batches).collect();
                let required = margins.eps_required;
                let (l, g) = chunked_loss_sum(&items, p, |(s, batch), grad| {
                    let h = net.forward_scalar(s.coords());
                    let mean: f64 = batch
                        .iter()
                        .map(|(s2, c)| *c as f64 * net.forward_scalar(s2.coords()) / n)
                        .sum();
                    let viol = mean - h + required;
                    if viol > 0.0 {
                        net.backprop_scalar_into(s.coords(), -w, grad);
                        for (s2, c) in batch.iter() {
                            net.backprop_scalar_into(s2.coords(), w * *c as f64 / n, grad);
                        }
                        w * viol
                    } else {
                        0.0
                    }
                });
                add(l, g);
            }
        }
    }
    (loss, grad)
}

/// Adam with decoupled weight decay: the decay acts on parameters directly
/// and never enters the loss, keeping the gradient check exact.
#[derive(Clone, Debug)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(param_len: usize) -> Self {
        Adam {
            m: vec![0.0; param_len],
            v: vec![0.0; param_len],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64, weight_decay: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= lr * (mhat / (vhat.sqrt() + self.eps) + weight_decay * params[i]);
        }
    }
}

/// Result of one training round: the best parameters seen and their loss.
#[derive(Clone, Debug)]
pub struct TrainedNet {
    pub net: MlpNet,
    pub best_loss: f64,
    pub epochs_run: usize,
}

/// Runs up to `cfg.epochs` full-batch updates, tracking the best loss and
/// stopping early at loss 0 or at the deadline.
pub fn train_epochs(
    net: MlpNet,
    kind: CertKind,
    sets: &TrainingSets,
    cfg: &TrainConfig,
    env: &EnvModel,
    policy: &PolicySpec,
    noise: &NoiseSpec,
    rng: &mut impl Rng,
    deadline: Option<Instant>,
) -> Result<TrainedNet> {
    let mut current = net;
    let mut params = current.params_flat();
    let mut adam = Adam::new(params.len());
    let mut best_params = params.clone();
    let mut best_loss = f64::INFINITY;
    let mut epochs_run = 0;
    for epoch in 0..cfg.epochs {
        if let Some(d) = deadline {
            if Instant::now() >= d {
                break;
            }
        }
        let margins = loss_margins(env, policy, &current, cfg.tau, cfg.epsilon_rsm);
        let (loss, grad) =
            martingale_loss(&current, kind, sets, &margins, cfg, env, policy, noise, rng);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, last_loss: best_loss });
        }
        epochs_run = epoch + 1;
        if loss < best_loss {
            best_loss = loss;
            best_params.copy_from_slice(&params);
        }
        if loss == 0.0 {
            break;
        }
        adam.step(&mut params, &grad, cfg.lr, cfg.weight_decay);
        current.set_params_flat(&params);
    }
    if best_loss.is_infinite() {
        // Zero epochs (or an immediate deadline): the candidate is unscored.
        best_loss = f64::NAN;
        best_params = params;
    }
    current.set_params_flat(&best_params);
    Ok(TrainedNet { net: current, best_loss, epochs_run })
}

fn build_certificate(
    net: MlpNet,
    kind: CertKind,
    status: CertStatus,
    tau: f64,
    cfg: &TrainConfig,
    env: &EnvModel,
    policy: &PolicySpec,
    noise: &NoiseSpec,
    counterexamples: Vec<CounterExample>,
) -> Certificate {
    let report = margin_zeta(env, policy, &net, tau);
    let m = crate::verify::difference_bound(&net, env, policy);
    let (epsilon, diff_lo, diff_hi) = match kind {
        CertKind::Rsm => {
            let iv = rsm_difference_interval(
                &net,
                env,
                policy,
                noise,
                crate::verify::DYNAMICS_SUBDIV,
            );
            (Some(cfg.epsilon_rsm), Some(iv.lo), Some(iv.hi))
        }
        _ => (None, None, None),
    };
    let expectation_mode = match policy {
        PolicySpec::Grid { .. } => ExpectationMode::Analytic,
        PolicySpec::Mlp { .. } => ExpectationMode::OverApprox,
    };
    Certificate {
        kind,
        net,
        k: cfg.k,
        k_prime: cfg.k_prime,
        epsilon,
        diff_lo,
        diff_hi,
        tau,
        zeta: report.zeta,
        zeta_prime: report.zeta_prime,
        l_f: report.l_f,
        l_pi: report.l_pi,
        l_h: report.l_h,
        m,
        r_min: env.r_min,
        r_max: env.r_max,
        expectation_mode,
        lift_sound: report.lift_sound,
        status,
        context_hash: context_hash(env, policy, noise),
        counterexamples,
    }
}

/// Train–validate–refine until a certificate validates or the budget runs
/// out.
///
/// Each failed validation shrinks τ by ξ and rebuilds the grid keeping all
/// counterexamples. The returned certificate has status `Validated` exactly
/// when every check passed; a timeout (or exhausted refinement) yields
/// status `Unknown` with the last counterexample set attached.
pub fn certify_loop(
    env: &EnvModel,
    policy: &PolicySpec,
    noise: &NoiseSpec,
    kind: CertKind,
    cfg: &TrainConfig,
    initial: Option<MlpNet>,
    rng: &mut impl Rng,
) -> Result<CertifyOutcome> {
    cfg.validate()?;
    let start = Instant::now();
    let deadline = start + cfg.timeout;
    let mut disc = build_grid(&env.state_box, cfg.tau, cfg.grid_budget)?;
    let mut net = initial.unwrap_or_else(|| {
        MlpNet::init(env.dim(), &cfg.hidden, cfg.activation, 1, Activation::Linear, rng)
    });
    net.validate().map_err(|e| Error::Config(format!("initial candidate is malformed: {e}")))?;
    if net.input_dim() != env.dim() || net.output_dim() != 1 {
        return Err(Error::Dimension { expected: env.dim(), got: net.input_dim() });
    }
    let check_cfg = CheckConfig {
        epsilon: cfg.epsilon_rsm,
        partition_cells: cfg.partition_cells,
    };
    let mut iterations: Vec<IterationLog> = Vec::new();
    let mut last: Option<ValidationResult> = None;
    loop {
        if Instant::now() >= deadline {
            let cxs = last.map(|r| r.counterexamples).unwrap_or_default();
            let cert = build_certificate(
                net,
                kind,
                CertStatus::Unknown,
                disc.tau,
                cfg,
                env,
                policy,
                noise,
                cxs,
            );
            return Ok(CertifyOutcome { certificate: cert, iterations });
        }
        let sets = classify_grid(&disc, env);
        let t0 = Instant::now();
        let trained =
            train_epochs(net, kind, &sets, cfg, env, policy, noise, rng, Some(deadline))?;
        let train_seconds = t0.elapsed().as_secs_f64();
        net = trained.net;
        let t1 = Instant::now();
        let result = validate_certificate(
            &net, kind, &disc, env, policy, noise, cfg.k, cfg.k_prime, &check_cfg,
        )?;
        let validate_seconds = t1.elapsed().as_secs_f64();
        iterations.push(IterationLog {
            iteration: iterations.len(),
            tau: disc.tau,
            grid_points: disc.len(),
            final_loss: trained.best_loss,
            counterexamples: result.counterexamples.len(),
            train_seconds,
            validate_seconds,
        });
        if result.is_valid() {
            let cert = build_certificate(
                net,
                kind,
                CertStatus::Validated,
                disc.tau,
                cfg,
                env,
                policy,
                noise,
                Vec::new(),
            );
            return Ok(CertifyOutcome { certificate: cert, iterations });
        }
        let points: Vec<StateVec> =
            result.counterexamples.iter().map(|c| c.point.clone()).collect();
        match refine_grid(&disc, &env.state_box, cfg.xi, &points, cfg.grid_budget) {
            Ok(refined) => disc = refined,
            Err(Error::RefinementExhausted { .. }) => {
                let cert = build_certificate(
                    net,
                    kind,
                    CertStatus::Unknown,
                    disc.tau,
                    cfg,
                    env,
                    policy,
                    noise,
                    result.counterexamples,
                );
                return Ok(CertifyOutcome { certificate: cert, iterations });
            }
            Err(e) => return Err(e),
        }
        last = Some(result);
    }
}
