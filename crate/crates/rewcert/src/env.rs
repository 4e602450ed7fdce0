//! Control environments, policies, and the perturbed-step semantics.
//!
//! An [`EnvModel`] is a deterministic discrete-time system: a compact state
//! box `S`, an initial box `S0`, an absorbing terminal region `S_g` (a union
//! of axis-aligned boxes), an action space, dynamics `f`, and a per-step
//! reward. The controller observes a noisy state: one step from `s` under
//! perturbation `δ` is
//!
//! ```text
//! ŝ = clamp(s + δ, S),   â = π(ŝ),   s' = clamp(f(s, â), S),   r = R(s, â, s')
//! ```
//!
//! Terminal states absorb: once `s ∈ S_g` the step returns `s` with reward 0.
//! Steps whose raw successor left `S` are flagged so the compactness
//! assumption is auditable.
//!
//! Dynamics are written once, generically over [`Scalar`], so the same code
//! path serves concrete rollouts (`f64`), sound set propagation
//! ([`Interval`]), and Jacobian bounding ([`Jet`]); [`lipschitz_f`] derives a
//! sound L1 Lipschitz constant for `f` from the interval Jacobian.
//!
//! Policies come in two shapes: a feed-forward network (argmax over scores
//! for discrete action spaces, clamped scalar output for continuous ones) or
//! an abstract-grid table assigning one constant action per cell. Grid
//! policies admit exact expectation computation downstream but are
//! discontinuous at cell faces, so their recorded policy Lipschitz constant
//! (0, valid on interiors) is marked as not supporting the continuity-based
//! lift of grid checks to the whole space.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::arith::{Interval, Jet, Scalar, MAX_DIM};
use crate::error::{Error, Result};
use crate::net::{lipschitz_l1, propagate_intervals, MlpNet};
use crate::space::{Rect, RegionUnion, StateVec};

/// Action space: a finite list of action values, or one closed interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ActionSpace {
    Discrete { values: Vec<f64> },
    Continuous { lo: f64, hi: f64 },
}

impl ActionSpace {
    pub fn validate(&self) -> Result<()> {
        match self {
            ActionSpace::Discrete { values } => {
                if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Config(
                        "discrete action space must list finite values".into(),
                    ));
                }
            }
            ActionSpace::Continuous { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                    return Err(Error::Config(
                        "continuous action interval must be finite with lo <= hi".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Hull of all actions, used when bounding dynamics over unknown actions.
    pub fn hull(&self) -> Interval {
        match self {
            ActionSpace::Discrete { values } => {
                let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                Interval::new(lo, hi)
            }
            ActionSpace::Continuous { lo, hi } => Interval::new(*lo, *hi),
        }
    }

    pub fn contains(&self, a: f64) -> bool {
        match self {
            ActionSpace::Discrete { values } => values.iter().any(|v| *v == a),
            ActionSpace::Continuous { lo, hi } => *lo <= a && a <= *hi,
        }
    }
}

/// Built-in dynamics, each a closed-form update written over [`Scalar`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Dynamics {
    /// 1-D contraction `s' = rate * s`; the action is ignored.
    Scale { rate: f64 },
    /// 2-D car on a cosine hill, desk-scale constants: the engine always
    /// dominates gravity, so every state can make progress.
    /// `v' = clamp(v + 0.02 a - 0.01 cos(3x), ±0.15)`, `x' = clamp(x + v', box)`.
    HillCar,
    /// Classic cart-pole Euler update, dt = 0.02, force = action (±10).
    CartPole,
    /// Classic mountain car, dt-free table update:
    /// `v' = clamp(v + 0.001 a - 0.0025 cos(3x), ±0.07)`, `x' = clamp(x + v', box)`.
    MountainCar,
    /// Polynomial reachability benchmark, explicit Euler at dt = 0.1:
    /// `x1' = x1 + 0.1 (x2 - x1^3)`, `x2' = x2 + 0.1 u`.
    B1,
    /// Polynomial reachability benchmark, explicit Euler at dt = 0.1:
    /// `x1' = x1 + 0.1 x2`, `x2' = x2 + 0.1 (u x2^2 - x1)`.
    B2,
}

impl Dynamics {
    pub fn state_dim(&self) -> usize {
        match self {
            Dynamics::Scale { .. } => 1,
            Dynamics::CartPole => 4,
            _ => 2,
        }
    }

    /// One deterministic step of the raw dynamics (no terminal absorption,
    /// no state-box clamping beyond what the update itself specifies).
    pub fn step<T: Scalar>(&self, s: &[T], a: T) -> Vec<T> {
        let c = T::constant;
        match self {
            Dynamics::Scale { rate } => vec![s[0] * c(*rate)],
            Dynamics::HillCar => {
                let (x, v) = (s[0], s[1]);
                let v1 = (v + a * c(0.02) - (x * c(3.0)).cos() * c(0.01))
                    .clamp_to(-0.15, 0.15);
                let x1 = (x + v1).clamp_to(-1.2, 0.6);
                vec![x1, v1]
            }
            Dynamics::MountainCar => {
                let (x, v) = (s[0], s[1]);
                let v1 = (v + a * c(0.001) - (x * c(3.0)).cos() * c(0.0025))
                    .clamp_to(-0.07, 0.07);
                let x1 = (x + v1).clamp_to(-1.2, 0.6);
                vec![x1, v1]
            }
            Dynamics::CartPole => {
                let (x, xd, th, thd) = (s[0], s[1], s[2], s[3]);
                // masscart 1.0, masspole 0.1, half-length 0.5, g 9.8.
                let total_mass = 1.1;
                let pml = 0.05; // masspole * half-length
                let (sin, cos) = (th.sin(), th.cos());
                let temp = (a + thd * thd * sin * c(pml)) * c(1.0 / total_mass);
                let denom = (c(4.0 / 3.0) - cos * cos * c(0.1 / total_mass)) * c(0.5);
                let thacc = (sin * c(9.8) - cos * temp) / denom;
                let xacc = temp - thacc * cos * c(pml / total_mass);
                let dt = c(0.02);
                vec![x + xd * dt, xd + xacc * dt, th + thd * dt, thd + thacc * dt]
            }
            Dynamics::B1 => {
                let (x1, x2) = (s[0], s[1]);
                let dt = c(0.1);
                vec![x1 + (x2 - x1 * x1 * x1) * dt, x2 + a * dt]
            }
            Dynamics::B2 => {
                let (x1, x2) = (s[0], s[1]);
                let dt = c(0.1);
                vec![x1 + x2 * dt, x2 + (a * x2 * x2 - x1) * dt]
            }
        }
    }
}

/// Per-step reward. All built-in benchmarks pay a constant per step; the
/// enum leaves room for richer shapes without changing call sites.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum StepReward {
    Constant { value: f64 },
}

impl StepReward {
    pub fn eval(&self, _s: &StateVec, _a: f64, _next: &StateVec) -> f64 {
        match self {
            StepReward::Constant { value } => *value,
        }
    }

    pub fn range(&self) -> (f64, f64) {
        match self {
            StepReward::Constant { value } => (*value, *value),
        }
    }
}

/// A deterministic control system: compact state box, initial box, absorbing
/// terminal region, action space, dynamics, and reward.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvModel {
    pub name: String,
    pub state_box: Rect,
    pub initial_box: Rect,
    pub terminal: RegionUnion,
    pub actions: ActionSpace,
    pub dynamics: Dynamics,
    pub reward: StepReward,
    pub r_min: f64,
    pub r_max: f64,
}

impl EnvModel {
    pub fn dim(&self) -> usize {
        self.state_box.dim()
    }

    pub fn validate(&self) -> Result<()> {
        if self.state_box.dim() != self.dynamics.state_dim() {
            return Err(Error::Dimension {
                expected: self.dynamics.state_dim(),
                got: self.state_box.dim(),
            });
        }
        if self.state_box.dim() > MAX_DIM {
            return Err(Error::Config(format!(
                "state dimension {} exceeds supported maximum {MAX_DIM}",
                self.state_box.dim()
            )));
        }
        if self.initial_box.dim() != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), got: self.initial_box.dim() });
        }
        self.actions.validate()?;
        let (lo, hi) = self.reward.range();
        if !(self.r_min <= lo && hi <= self.r_max) {
            return Err(Error::Config(format!(
                "declared reward range [{}, {}] does not contain the reward function range [{lo}, {hi}]",
                self.r_min, self.r_max
            )));
        }
        for b in self.terminal.boxes() {
            if b.dim() != self.dim() {
                return Err(Error::Dimension { expected: self.dim(), got: b.dim() });
            }
        }
        // Initial and terminal sets must be disjoint: an initial state with
        // no step to take has no meaningful cumulative reward.
        for b in self.terminal.boxes() {
            if b.intersect(&self.initial_box).is_some() {
                return Err(Error::Config(
                    "initial box intersects the terminal region".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn is_terminal(&self, s: &StateVec) -> bool {
        self.terminal.contains(s)
    }
}

/// Builds one of the built-in environments by name.
///
/// Names: `toy1d`, `hillcar`, `cartpole`, `mountaincar`, `b1`, `b2`.
pub fn make_builtin_env(name: &str) -> Result<EnvModel> {
    let env = match name {
        "toy1d" => EnvModel {
            name: name.into(),
            state_box: Rect::new(vec![-0.05], vec![3.95])?,
            initial_box: Rect::new(vec![0.7], vec![0.9])?,
            terminal: RegionUnion(vec![Rect::new(vec![-0.05], vec![0.05])?]),
            actions: ActionSpace::Discrete { values: vec![0.0] },
            dynamics: Dynamics::Scale { rate: 0.5 },
            reward: StepReward::Constant { value: 1.0 },
            r_min: 1.0,
            r_max: 1.0,
        },
        "hillcar" => EnvModel {
            name: name.into(),
            state_box: Rect::new(vec![-1.2, -0.15], vec![0.6, 0.15])?,
            initial_box: Rect::new(vec![-0.6, -0.05], vec![-0.4, 0.05])?,
            terminal: RegionUnion(vec![
                // Left cliff: driving off the back of the valley ends the run.
                Rect::new(vec![-1.2, -0.15], vec![-1.1, 0.15])?,
                // Right goal: the top of the hill.
                Rect::new(vec![0.5, -0.15], vec![0.6, 0.15])?,
            ]),
            actions: ActionSpace::Discrete { values: vec![-1.0, 0.0, 1.0] },
            dynamics: Dynamics::HillCar,
            reward: StepReward::Constant { value: -1.0 },
            r_min: -1.0,
            r_max: -1.0,
        },
        "cartpole" => EnvModel {
            name: name.into(),
            state_box: Rect::new(
                vec![-2.4, -3.0, -0.21, -3.0],
                vec![2.4, 3.0, 0.21, 3.0],
            )?,
            initial_box: Rect::new(
                vec![-0.05, -0.05, -0.05, -0.05],
                vec![0.05, 0.05, 0.05, 0.05],
            )?,
            terminal: RegionUnion(vec![
                Rect::new(vec![-2.4, -3.0, -0.21, -3.0], vec![-2.2, 3.0, 0.21, 3.0])?,
                Rect::new(vec![2.2, -3.0, -0.21, -3.0], vec![2.4, 3.0, 0.21, 3.0])?,
                Rect::new(vec![-2.4, -3.0, -0.21, -3.0], vec![2.4, 3.0, -0.18, 3.0])?,
                Rect::new(vec![-2.4, -3.0, 0.18, -3.0], vec![2.4, 3.0, 0.21, 3.0])?,
            ]),
            actions: ActionSpace::Discrete { values: vec![-10.0, 10.0] },
            dynamics: Dynamics::CartPole,
            reward: StepReward::Constant { value: 1.0 },
            r_min: 1.0,
            r_max: 1.0,
        },
        "mountaincar" => EnvModel {
            name: name.into(),
            state_box: Rect::new(vec![-1.2, -0.07], vec![0.6, 0.07])?,
            initial_box: Rect::new(vec![-0.6, 0.0], vec![-0.4, 0.0])?,
            terminal: RegionUnion(vec![Rect::new(vec![0.5, -0.07], vec![0.6, 0.07])?]),
            actions: ActionSpace::Discrete { values: vec![-1.0, 0.0, 1.0] },
            dynamics: Dynamics::MountainCar,
            reward: StepReward::Constant { value: -1.0 },
            r_min: -1.0,
            r_max: -1.0,
        },
        "b1" => EnvModel {
            name: name.into(),
            state_box: Rect::new(vec![-2.5, -2.5], vec![2.5, 2.5])?,
            initial_box: Rect::new(vec![0.8, 0.5], vec![0.9, 0.6])?,
            terminal: RegionUnion(vec![Rect::new(vec![0.0, 0.05], vec![0.2, 0.3])?]),
            actions: ActionSpace::Continuous { lo: -2.0, hi: 2.0 },
            dynamics: Dynamics::B1,
            reward: StepReward::Constant { value: -1.0 },
            r_min: -1.0,
            r_max: -1.0,
        },
        "b2" => EnvModel {
            name: name.into(),
            state_box: Rect::new(vec![-2.0, -2.0], vec![2.0, 2.0])?,
            initial_box: Rect::new(vec![0.7, 0.7], vec![0.75, 0.75])?,
            terminal: RegionUnion(vec![Rect::new(vec![-0.3, -0.35], vec![0.1, 0.5])?]),
            actions: ActionSpace::Continuous { lo: -2.0, hi: 2.0 },
            dynamics: Dynamics::B2,
            reward: StepReward::Constant { value: -1.0 },
            r_min: -1.0,
            r_max: -1.0,
        },
        other => return Err(Error::UnknownEnv(other.into())),
    };
    env.validate()?;
    Ok(env)
}

/// One cell of an abstract-grid policy: a box with a constant action.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridCell {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub action: f64,
}

impl GridCell {
    pub fn rect(&self) -> Result<Rect> {
        Rect::new(self.lo.clone(), self.hi.clone())
    }
}

/// A control policy: either a network over states or an abstract-grid table.
///
/// Wire format: `{"kind":"mlp","layers":[...]}` or
/// `{"kind":"grid","dims":2,"cells":[{"lo":[..],"hi":[..],"action":..}]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PolicySpec {
    Mlp { layers: MlpNet },
    Grid { dims: usize, cells: Vec<GridCell> },
}

impl PolicySpec {
    /// Structural checks against a target environment: dimensions chain,
    /// grid cells tile the state box disjointly, actions are admissible.
    pub fn validate(&self, env: &EnvModel) -> Result<()> {
        match self {
            PolicySpec::Mlp { layers } => {
                layers.validate()?;
                if layers.input_dim() != env.dim() {
                    return Err(Error::Dimension {
                        expected: env.dim(),
                        got: layers.input_dim(),
                    });
                }
                let out = layers.output_dim();
                match &env.actions {
                    ActionSpace::Discrete { values } => {
                        if out != values.len() {
                            return Err(Error::Config(format!(
                                "policy scores {out} actions but the environment has {}",
                                values.len()
                            )));
                        }
                    }
                    ActionSpace::Continuous { .. } => {
                        if out != 1 {
                            return Err(Error::Config(format!(
                                "continuous-action policy must have one output, has {out}"
                            )));
                        }
                    }
                }
            }
            PolicySpec::Grid { dims, cells } => {
                if *dims != env.dim() {
                    return Err(Error::Dimension { expected: env.dim(), got: *dims });
                }
                if cells.is_empty() {
                    return Err(Error::Config("grid policy has no cells".into()));
                }
                let mut volume = 0.0;
                let mut rects = Vec::with_capacity(cells.len());
                for cell in cells {
                    let r = cell.rect()?;
                    if r.dim() != *dims {
                        return Err(Error::Dimension { expected: *dims, got: r.dim() });
                    }
                    if !env.actions.contains(cell.action) {
                        return Err(Error::Config(format!(
                            "grid cell action {} is not in the action space",
                            cell.action
                        )));
                    }
                    // Cells must stay inside the state box.
                    let clipped = r.intersect(&env.state_box).ok_or_else(|| {
                        Error::Config("grid policy cell lies outside the state box".into())
                    })?;
                    if (clipped.volume() - r.volume()).abs() > 1e-9 * r.volume().max(1.0) {
                        return Err(Error::Config(
                            "grid policy cell extends beyond the state box".into(),
                        ));
                    }
                    volume += r.volume();
                    rects.push(r);
                }
                for i in 0..rects.len() {
                    for j in i + 1..rects.len() {
                        if rects[i].overlaps_interior(&rects[j]) {
                            return Err(Error::Config(format!(
                                "grid policy cells {i} and {j} overlap"
                            )));
                        }
                    }
                }
                // Disjoint interiors + total volume = coverage of the box.
                let total = env.state_box.volume();
                if (volume - total).abs() > 1e-9 * total.max(1.0) {
                    return Err(Error::Config(format!(
                        "grid policy cells cover volume {volume} of a state box with volume {total}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Policy Lipschitz constant (L1) and whether it is valid on all of `S`.
    ///
    /// Continuous-action networks are globally Lipschitz, so the constant is
    /// sound everywhere. Discrete-action policies (argmax networks and grid
    /// tables) are piecewise constant: the constant 0 is correct on the
    /// interior of each decision region but the policy jumps at region
    /// boundaries, so continuity-based arguments quoting this constant are
    /// flagged as unsound at boundaries.
    pub fn lipschitz(&self, env: &EnvModel) -> (f64, bool) {
        match (self, &env.actions) {
            (PolicySpec::Mlp { layers }, ActionSpace::Continuous { .. }) => {
                (lipschitz_l1(layers), true)
            }
            _ => (0.0, false),
        }
    }
}

/// Loads a policy from a JSON file and validates it against the environment.
pub fn load_policy(path: &std::path::Path, env: &EnvModel) -> Result<PolicySpec> {
    let text = std::fs::read_to_string(path)?;
    let policy: PolicySpec = serde_json::from_str(&text)?;
    policy.validate(env)?;
    Ok(policy)
}

/// Saves a policy as pretty-printed JSON.
pub fn save_policy(path: &std::path::Path, policy: &PolicySpec) -> Result<()> {
    let text = serde_json::to_string_pretty(policy)?;
    std::fs::write(path, text)?;
    Ok(())
}

/// The action taken at an observed state. The observation is clamped into
/// the state box first, so the policy is total.
pub fn policy_action(env: &EnvModel, policy: &PolicySpec, observed: &StateVec) -> f64 {
    let obs = env.state_box.clamp(observed);
    match policy {
        PolicySpec::Mlp { layers } => {
            let out = layers.forward(obs.coords());
            match &env.actions {
                ActionSpace::Discrete { values } => {
                    // Argmax with ties resolved to the lowest index.
                    let mut best = 0;
                    for (i, v) in out.iter().enumerate().skip(1) {
                        if *v > out[best] {
                            best = i;
                        }
                    }
                    values[best]
                }
                ActionSpace::Continuous { lo, hi } => out[0].clamp(*lo, *hi),
            }
        }
        PolicySpec::Grid { cells, .. } => {
            // First-match lookup: shared faces belong to the earlier cell.
            for cell in cells {
                if cell.lo.iter().zip(cell.hi.iter()).zip(obs.coords()).all(
                    |((lo, hi), x)| *lo <= *x && *x <= *hi,
                ) {
                    return cell.action;
                }
            }
            // Unreachable for validated policies (cells tile the box and the
            // observation was clamped into it); fall back to the first cell.
            cells[0].action
        }
    }
}

/// A sound interval containing every action the policy can take over a box
/// of observed states (already clipped to the state box by the caller).
pub fn action_interval(env: &EnvModel, policy: &PolicySpec, obs_box: &Rect) -> Interval {
    match policy {
        PolicySpec::Mlp { layers } => {
            let scores = propagate_intervals(layers, obs_box);
            match &env.actions {
                ActionSpace::Discrete { values } => {
                    // An action is feasible if its score can reach the best
                    // guaranteed lower bound of any competitor.
                    let best_lo =
                        scores.iter().map(|i| i.lo).fold(f64::NEG_INFINITY, f64::max);
                    let mut lo = f64::INFINITY;
                    let mut hi = f64::NEG_INFINITY;
                    for (iv, a) in scores.iter().zip(values) {
                        if iv.hi >= best_lo {
                            lo = lo.min(*a);
                            hi = hi.max(*a);
                        }
                    }
                    Interval::new(lo, hi)
                }
                ActionSpace::Continuous { lo, hi } => scores[0].clamp_to(*lo, *hi),
            }
        }
        PolicySpec::Grid { cells, .. } => {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for cell in cells {
                let overlaps = cell
                    .lo
                    .iter()
                    .zip(cell.hi.iter())
                    .zip(obs_box.intervals())
                    .all(|((clo, chi), iv)| *clo <= iv.hi && iv.lo <= *chi);
                if overlaps {
                    lo = lo.min(cell.action);
                    hi = hi.max(cell.action);
                }
            }
            if lo > hi {
                // No overlap can only happen for boxes outside S; fall back
                // to the full action hull, which is always sound.
                env.actions.hull()
            } else {
                Interval::new(lo, hi)
            }
        }
    }
}

/// Outcome of one perturbed step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    /// The state the policy saw: `clamp(s + δ, S)`, or `s` itself when the
    /// step started in the terminal region.
    pub observed: StateVec,
    pub action: f64,
    pub next: StateVec,
    pub reward: f64,
    /// True when the raw successor left the state box and was clamped back.
    pub clamped: bool,
}

/// One step of the perturbed closed loop.
///
/// Terminal states absorb: `next = s`, reward 0. Otherwise the policy acts
/// on the clamped noisy observation and the successor is clamped into the
/// state box (flagged when the clamp actually moved it).
pub fn perturbed_step(
    env: &EnvModel,
    policy: &PolicySpec,
    s: &StateVec,
    delta: &StateVec,
) -> StepOutcome {
    if env.is_terminal(s) {
        return StepOutcome {
            observed: s.clone(),
            action: policy_action(env, policy, s),
            next: s.clone(),
            reward: 0.0,
            clamped: false,
        };
    }
    let observed = env.state_box.clamp(&s.add(delta));
    let action = policy_action(env, policy, &observed);
    let raw = StateVec::new(env.dynamics.step(s.coords(), action))
        .expect("dynamics produced a non-finite coordinate");
    let next = env.state_box.clamp(&raw);
    let clamped = next
        .coords()
        .iter()
        .zip(raw.coords())
        .any(|(c, r)| c != r);
    let reward = env.reward.eval(s, action, &next);
    StepOutcome { observed, action, next, reward, clamped }
}

/// A sound L1 Lipschitz constant for `s ↦ f(s, a)`, uniform over all
/// admissible actions: the max absolute column sum of the interval Jacobian,
/// maximized over a `subdiv`-per-dimension tiling of the state box.
pub fn lipschitz_f(env: &EnvModel, subdiv: usize) -> f64 {
    let n = env.dim();
    let subdiv = subdiv.max(1);
    let ivs = env.state_box.intervals();
    let action = env.actions.hull();
    let mut worst = 0.0f64;
    let mut idx = vec![0usize; n];
    'outer: loop {
        // Current tile of the state box.
        let mut vars = Vec::with_capacity(n);
        for d in 0..n {
            let w = (ivs[d].hi - ivs[d].lo) / subdiv as f64;
            let lo = ivs[d].lo + idx[d] as f64 * w;
            let hi = if idx[d] + 1 == subdiv { ivs[d].hi } else { lo + w };
            vars.push(Interval::new(lo, hi));
        }
        let jets: Vec<Jet> = (0..n).map(|d| Jet::variable(vars[d], d, n)).collect();
        let out = env.dynamics.step(&jets, Jet::constant(action, n));
        // L1 operator norm: max over input coordinates of the column sum of
        // absolute Jacobian bounds.
        for d in 0..n {
            let col: f64 = out.iter().map(|j| j.d[d].abs_bound()).sum();
            worst = worst.max(col);
        }
        for d in (0..n).rev() {
            idx[d] += 1;
            if idx[d] < subdiv {
                continue 'outer;
            }
            idx[d] = 0;
        }
        break;
    }
    worst
}

/// A sound upper bound on the unperturbed one-step displacement
/// `‖f(s, π(s)) − s‖₁` over the whole state box (terminal states are
/// absorbing with displacement 0, which the hull includes).
///
/// Naive interval subtraction cannot see that `f(s, π(s))` and `s` share the
/// same `s`, so each tile uses the mean-value form instead:
/// `f_i(s, a) − s_i ∈ (f_i(c, Â) − c_i) + Σ_j (J_ij − δ_ij)·(T_j − c_j)`
/// with `c` the tile center, `Â` the action enclosure over the tile, and
/// `J` the interval Jacobian from derivative-carrying interval evaluation.
/// Identity-like dynamics then cancel exactly. Skipping the final clamp
/// into the state box is sound because clamping moves the successor toward
/// the box, never away from the in-box state `s`.
pub fn displacement_bound(env: &EnvModel, policy: &PolicySpec, subdiv: usize) -> f64 {
    let n = env.dim();
    let subdiv = subdiv.max(1);
    let ivs = env.state_box.intervals();
    let mut worst = 0.0f64;
    let mut idx = vec![0usize; n];
    'outer: loop {
        let mut lo = Vec::with_capacity(n);
        let mut hi = Vec::with_capacity(n);
        for d in 0..n {
            let w = (ivs[d].hi - ivs[d].lo) / subdiv as f64;
            let l = ivs[d].lo + idx[d] as f64 * w;
            lo.push(l);
            hi.push(if idx[d] + 1 == subdiv { ivs[d].hi } else { l + w });
        }
        let tile = Rect::new(lo, hi).unwrap();
        let act = action_interval(env, policy, &tile);
        let center = tile.center();

        let jet_vars: Vec<Jet> = tile
            .intervals()
            .iter()
            .enumerate()
            .map(|(d, iv)| Jet::variable(*iv, d, n))
            .collect();
        let jac = env.dynamics.step(&jet_vars, Jet::constant(act, n));
        let at_center: Vec<Interval> = env.dynamics.step(
            &center
                .coords()
                .iter()
                .map(|&x| Interval::point(x))
                .collect::<Vec<_>>(),
            act,
        );

        let disp: f64 = (0..n)
            .map(|i| {
                let mut enclosure =
                    at_center[i] - Interval::point(center.coords()[i]);
                for j in 0..n {
                    let mut deriv = jac[i].d[j];
                    if i == j {
                        deriv = deriv - Interval::point(1.0);
                    }
                    let offset = Interval::new(
                        tile.lo[j] - center.coords()[j],
                        tile.hi[j] - center.coords()[j],
                    );
                    enclosure = enclosure + deriv * offset;
                }
                enclosure.abs_bound()
            })
            .sum();
        worst = worst.max(disp);
        for d in (0..n).rev() {
            idx[d] += 1;
            if idx[d] < subdiv {
                continue 'outer;
            }
            idx[d] = 0;
        }
        break;
    }
    worst
}

/// Configuration for the cross-entropy policy fitter.
#[derive(Clone, Debug)]
pub struct CemConfig {
    pub iterations: usize,
    pub population: usize,
    pub elite: usize,
    pub episodes_per_candidate: usize,
    pub max_steps: usize,
    pub init_std: f64,
}

impl Default for CemConfig {
    fn default() -> Self {
        CemConfig {
            iterations: 12,
            population: 24,
            elite: 6,
            episodes_per_candidate: 8,
            max_steps: 400,
            init_std: 1.0,
        }
    }
}

/// Fits the free parameters of a policy template by the cross-entropy
/// method, maximizing mean cumulative reward over noisy episodes.
///
/// The template fixes the structure: for a grid policy the cell geometry
/// stays and only the actions are fitted (scores rounded to the nearest
/// discrete action or clamped into the continuous range); for a network
/// policy all weights are fitted.
pub fn fit_policy(
    env: &EnvModel,
    noise: &crate::noise::NoiseSpec,
    template: &PolicySpec,
    cfg: &CemConfig,
    rng: &mut impl Rng,
) -> Result<PolicySpec> {
    template.validate(env)?;
    let dim = match template {
        PolicySpec::Mlp { layers } => layers.param_len(),
        PolicySpec::Grid { cells, .. } => cells.len(),
    };
    let decode = |theta: &[f64]| -> PolicySpec {
        match template {
            PolicySpec::Mlp { layers } => {
                let mut net = layers.clone();
                net.set_params_flat(theta);
                PolicySpec::Mlp { layers: net }
            }
            PolicySpec::Grid { dims, cells } => {
                let snapped: Vec<GridCell> = cells
                    .iter()
                    .zip(theta)
                    .map(|(cell, t)| {
                        let action = match &env.actions {
                            ActionSpace::Discrete { values } => *values
                                .iter()
                                .min_by(|a, b| {
                                    (*a - t).abs().total_cmp(&(*b - t).abs())
                                })
                                .unwrap(),
                            ActionSpace::Continuous { lo, hi } => t.clamp(*lo, *hi),
                        };
                        GridCell { lo: cell.lo.clone(), hi: cell.hi.clone(), action }
                    })
                    .collect();
                PolicySpec::Grid { dims: *dims, cells: snapped }
            }
        }
    };
    let mut mean = match template {
        PolicySpec::Mlp { layers } => layers.params_flat(),
        PolicySpec::Grid { cells, .. } => cells.iter().map(|c| c.action).collect(),
    };
    let mut std = vec![cfg.init_std; dim];
    let mut best: Option<(f64, Vec<f64>)> = None;
    for _ in 0..cfg.iterations {
        let mut scored: Vec<(f64, Vec<f64>)> = Vec::with_capacity(cfg.population);
        for _ in 0..cfg.population {
            let theta: Vec<f64> = mean
                .iter()
                .zip(&std)
                .map(|(m, s)| {
                    m + s * rng.sample::<f64, _>(rand_distr::StandardNormal)
                })
                .collect();
            let policy = decode(&theta);
            let mut total = 0.0;
            for _ in 0..cfg.episodes_per_candidate {
                let s0 = self::sample_initial(env, rng);
                let mut s = s0;
                for _ in 0..cfg.max_steps {
                    if env.is_terminal(&s) {
                        break;
                    }
                    let delta = crate::noise::sample_noise(noise, rng);
                    let out = perturbed_step(env, &policy, &s, &delta);
                    total += out.reward;
                    s = out.next;
                }
            }
            scored.push((total / cfg.episodes_per_candidate as f64, theta));
        }
        scored.sort_by(|a, b| b.0.total_cmp(&a.0));
        scored.truncate(cfg.elite.max(1));
        if best.as_ref().map_or(true, |(f, _)| scored[0].0 > *f) {
            best = Some(scored[0].clone());
        }
        for d in 0..dim {
            let m: f64 = scored.iter().map(|(_, t)| t[d]).sum::<f64>() / scored.len() as f64;
            let v: f64 = scored
                .iter()
                .map(|(_, t)| (t[d] - m) * (t[d] - m))
                .sum::<f64>()
                / scored.len() as f64;
            mean[d] = m;
            std[d] = v.sqrt().max(0.02);
        }
    }
    let (_, theta) = best.expect("at least one CEM iteration ran");
    let fitted = decode(&theta);
    fitted.validate(env)?;
    Ok(fitted)
}

/// Uniform sample from the initial box.
pub fn sample_initial(env: &EnvModel, rng: &mut impl Rng) -> StateVec {
    env.initial_box.sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{NoiseLaw, NoiseSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn constant_policy(env: &EnvModel, action: f64) -> PolicySpec {
        PolicySpec::Grid {
            dims: env.dim(),
            cells: vec![GridCell {
                lo: env.state_box.lo.clone(),
                hi: env.state_box.hi.clone(),
                action,
            }],
        }
    }

    #[test]
    fn builtin_envs_have_documented_shapes() {
        for (name, dim, discrete) in [
            ("cartpole", 4, true),
            ("mountaincar", 2, true),
            ("b1", 2, false),
            ("b2", 2, false),
            ("toy1d", 1, true),
            ("hillcar", 2, true),
        ] {
            let env = make_builtin_env(name).unwrap();
            assert_eq!(env.dim(), dim, "{name}");
            match env.actions {
                ActionSpace::Discrete { .. } => assert!(discrete, "{name}"),
                ActionSpace::Continuous { .. } => assert!(!discrete, "{name}"),
            }
        }
        assert!(matches!(
            make_builtin_env("pendulum"),
            Err(Error::UnknownEnv(_))
        ));
    }

    #[test]
    fn mountaincar_push_right_matches_hand_update() {
        let env = make_builtin_env("mountaincar").unwrap();
        let policy = constant_policy(&env, 1.0);
        let s = StateVec(vec![-0.5, 0.0]);
        let delta = StateVec(vec![0.0, 0.0]);
        let out = perturbed_step(&env, &policy, &s, &delta);
        let v_expect = 0.001 - 0.0025 * (-1.5f64).cos();
        assert!((out.next.coords()[1] - v_expect).abs() < 1e-15);
        assert!((out.next.coords()[0] - (-0.5 + v_expect)).abs() < 1e-15);
        assert_eq!(out.reward, -1.0);
    }

    #[test]
    fn terminal_states_absorb_with_zero_reward() {
        for name in ["toy1d", "hillcar", "mountaincar", "cartpole", "b1", "b2"] {
            let env = make_builtin_env(name).unwrap();
            let policy = constant_policy(&env, env.actions.hull().lo);
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            for b in env.terminal.boxes() {
                for _ in 0..20 {
                    let s = b.sample(&mut rng);
                    assert!(env.is_terminal(&s));
                    let delta = StateVec(vec![0.01; env.dim()]);
                    let out = perturbed_step(&env, &policy, &s, &delta);
                    assert_eq!(out.next, s, "{name}: terminal must absorb");
                    assert_eq!(out.reward, 0.0);
                }
            }
        }
    }

    #[test]
    fn zero_noise_step_equals_unperturbed_step() {
        let env = make_builtin_env("hillcar").unwrap();
        let policy = constant_policy(&env, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let s = env.state_box.sample(&mut rng);
            if env.is_terminal(&s) {
                continue;
            }
            let zero = StateVec(vec![0.0, 0.0]);
            let out = perturbed_step(&env, &policy, &s, &zero);
            let direct = env.dynamics.step(s.coords(), 1.0);
            assert_eq!(out.next.coords(), direct.as_slice());
            assert_eq!(out.observed, s);
        }
    }

    #[test]
    fn identical_inputs_give_identical_outcomes() {
        let env = make_builtin_env("b1").unwrap();
        let policy = constant_policy(&env, 0.5);
        let s = StateVec(vec![1.0, -0.5]);
        let delta = StateVec(vec![0.03, -0.07]);
        let a = perturbed_step(&env, &policy, &s, &delta);
        let b = perturbed_step(&env, &policy, &s, &delta);
        assert_eq!(a, b);
    }

    #[test]
    fn rewards_stay_in_declared_range_over_sampled_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for name in ["toy1d", "hillcar", "mountaincar", "cartpole", "b1", "b2"] {
            let env = make_builtin_env(name).unwrap();
            let policy = constant_policy(&env, env.actions.hull().hi);
            let spec = NoiseSpec::iid(NoiseLaw::Uniform { r: 0.05 }, env.dim()).unwrap();
            for _ in 0..10_000 {
                let s = env.state_box.sample(&mut rng);
                let delta = crate::noise::sample_noise(&spec, &mut rng);
                let out = perturbed_step(&env, &policy, &s, &delta);
                if !env.is_terminal(&s) {
                    assert!(
                        env.r_min <= out.reward && out.reward <= env.r_max,
                        "{name}: reward {} outside [{}, {}]",
                        out.reward,
                        env.r_min,
                        env.r_max
                    );
                }
            }
        }
    }

    #[test]
    fn interval_jacobian_lipschitz_bound_holds_empirically() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for name in ["toy1d", "hillcar", "mountaincar", "cartpole", "b1", "b2"] {
            let env = make_builtin_env(name).unwrap();
            let lf = lipschitz_f(&env, 8);
            assert!(lf.is_finite() && lf >= 0.0);
            let action = env.actions.hull().midpoint();
            for _ in 0..10_000 {
                let a = env.state_box.sample(&mut rng);
                let b = env.state_box.sample(&mut rng);
                let fa = env.dynamics.step(a.coords(), action);
                let fb = env.dynamics.step(b.coords(), action);
                let dist = a.l1_distance(&b);
                let span: f64 =
                    fa.iter().zip(&fb).map(|(x, y)| (x - y).abs()).sum();
                assert!(
                    span <= lf * dist + 1e-9,
                    "{name}: |f(a)-f(b)| = {span} exceeds {lf} * {dist}"
                );
            }
        }
    }

    #[test]
    fn toy_contraction_lipschitz_constant_is_exact() {
        let env = make_builtin_env("toy1d").unwrap();
        assert_eq!(lipschitz_f(&env, 4), 0.5);
    }

    #[test]
    fn grid_policy_lookup_uses_first_matching_cell() {
        let env = EnvModel {
            name: "line".into(),
            state_box: Rect::new(vec![-1.0], vec![1.0]).unwrap(),
            initial_box: Rect::new(vec![0.4], vec![0.5]).unwrap(),
            terminal: RegionUnion(vec![Rect::new(vec![-1.0], vec![-0.9]).unwrap()]),
            actions: ActionSpace::Discrete { values: vec![2.0, 5.0] },
            dynamics: Dynamics::Scale { rate: 0.5 },
            reward: StepReward::Constant { value: 1.0 },
            r_min: 1.0,
            r_max: 1.0,
        };
        let policy = PolicySpec::Grid {
            dims: 1,
            cells: vec![
                GridCell { lo: vec![-1.0], hi: vec![0.0], action: 2.0 },
                GridCell { lo: vec![0.0], hi: vec![1.0], action: 5.0 },
            ],
        };
        policy.validate(&env).unwrap();
        assert_eq!(policy_action(&env, &policy, &StateVec(vec![-0.5])), 2.0);
        // The shared face belongs to the earlier cell.
        assert_eq!(policy_action(&env, &policy, &StateVec(vec![0.0])), 2.0);
        assert_eq!(policy_action(&env, &policy, &StateVec(vec![0.5])), 5.0);
        let (l_pi, sound) = policy.lipschitz(&env);
        assert_eq!(l_pi, 0.0);
        assert!(!sound);
    }

    #[test]
    fn grid_policy_validation_rejects_overlap_and_gaps() {
        let env = make_builtin_env("toy1d").unwrap();
        let overlapping = PolicySpec::Grid {
            dims: 1,
            cells: vec![
                GridCell { lo: vec![-0.05], hi: vec![2.0], action: 0.0 },
                GridCell { lo: vec![1.5], hi: vec![3.95], action: 0.0 },
            ],
        };
        assert!(overlapping.validate(&env).is_err());
        let gappy = PolicySpec::Grid {
            dims: 1,
            cells: vec![GridCell { lo: vec![-0.05], hi: vec![2.0], action: 0.0 }],
        };
        assert!(gappy.validate(&env).is_err());
    }

    #[test]
    fn zero_weight_network_policy_is_constant() {
        let env = make_builtin_env("mountaincar").unwrap();
        let net = MlpNet {
            layers: vec![crate::net::Layer {
                w: vec![vec![0.0, 0.0]; 3],
                b: vec![0.0; 3],
                act: crate::net::Activation::Linear,
            }],
        };
        let policy = PolicySpec::Mlp { layers: net };
        policy.validate(&env).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let first = policy_action(&env, &policy, &StateVec(vec![-0.5, 0.0]));
        assert_eq!(first, -1.0); // argmax tie resolves to the first action
        for _ in 0..100 {
            let s = env.state_box.sample(&mut rng);
            assert_eq!(policy_action(&env, &policy, &s), first);
        }
    }

    #[test]
    fn policy_json_round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let env = make_builtin_env("b1").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let net = MlpNet::init(
            2,
            &[8],
            crate::net::Activation::Tanh,
            1,
            crate::net::Activation::Tanh,
            &mut rng,
        );
        let policy = PolicySpec::Mlp { layers: net };
        let path = dir.path().join("policy.json");
        save_policy(&path, &policy).unwrap();
        let back = load_policy(&path, &env).unwrap();
        assert_eq!(policy, back);
    }

    #[test]
    fn load_policy_rejects_dimension_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let cp = make_builtin_env("cartpole").unwrap();
        let mc = make_builtin_env("mountaincar").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let net = MlpNet::init(
            4,
            &[4],
            crate::net::Activation::Relu,
            2,
            crate::net::Activation::Linear,
            &mut rng,
        );
        let policy = PolicySpec::Mlp { layers: net };
        policy.validate(&cp).unwrap();
        let path = dir.path().join("cp_policy.json");
        save_policy(&path, &policy).unwrap();
        assert!(load_policy(&path, &mc).is_err());
    }

    #[test]
    fn action_interval_encloses_sampled_actions() {
        let env = make_builtin_env("mountaincar").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let net = MlpNet::init(
            2,
            &[8],
            crate::net::Activation::Tanh,
            3,
            crate::net::Activation::Linear,
            &mut rng,
        );
        let policy = PolicySpec::Mlp { layers: net };
        for _ in 0..50 {
            let c = env.state_box.sample(&mut rng);
            let lo: Vec<f64> = c.coords().iter().map(|x| x - 0.02).collect();
            let hi: Vec<f64> = c.coords().iter().map(|x| x + 0.02).collect();
            let rect = Rect::new(lo, hi)
                .unwrap()
                .intersect(&env.state_box)
                .unwrap();
            let hull = action_interval(&env, &policy, &rect);
            for _ in 0..200 {
                let s = rect.sample(&mut rng);
                let a = policy_action(&env, &policy, &s);
                assert!(hull.lo <= a && a <= hull.hi);
            }
        }
    }

    #[test]
    fn clamped_steps_are_flagged() {
        let env = make_builtin_env("b1").unwrap();
        let policy = constant_policy(&env, 2.0);
        // High corner: x2' = 2.5 + 0.2 exits the box and is clamped.
        let s = StateVec(vec![1.0, 2.5]);
        let out = perturbed_step(&env, &policy, &s, &StateVec(vec![0.0, 0.0]));
        assert!(out.clamped);
        assert!(env.state_box.contains(&out.next));
    }

    #[test]
    fn cem_fitter_improves_mean_reward_on_hillcar() {
        let env = make_builtin_env("hillcar").unwrap();
        let noise = NoiseSpec::iid(NoiseLaw::Uniform { r: 0.05 }, 2).unwrap();
        // Coasting never escapes the valley, so the template scores roughly
        // -max_steps per episode and any driving policy beats it soundly.
        let template = PolicySpec::Grid {
            dims: 2,
            cells: vec![
                GridCell { lo: vec![-1.2, -0.15], hi: vec![0.6, 0.0], action: 0.0 },
                GridCell { lo: vec![-1.2, 0.0], hi: vec![0.6, 0.15], action: 0.0 },
            ],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let score = |policy: &PolicySpec, rng: &mut ChaCha8Rng| -> f64 {
            let mut total = 0.0;
            for _ in 0..40 {
                let mut s = sample_initial(&env, rng);
                for _ in 0..300 {
                    if env.is_terminal(&s) {
                        break;
                    }
                    let d = crate::noise::sample_noise(&noise, rng);
                    let out = perturbed_step(&env, &policy, &s, &d);
                    total += out.reward;
                    s = out.next;
                }
            }
            total / 40.0
        };
        let before = score(&template, &mut rng);
        let cfg = CemConfig {
            iterations: 6,
            population: 16,
            elite: 4,
            episodes_per_candidate: 6,
            max_steps: 300,
            init_std: 1.0,
        };
        let fitted = fit_policy(&env, &noise, &template, &cfg, &mut rng).unwrap();
        let after = score(&fitted, &mut rng);
        assert!(
            after >= before,
            "fitted policy scored {after}, template scored {before}"
        );
    }
}
