//! Sound validation of candidate certificates.
//!
//! Three ingredients turn finitely many grid checks into statements about
//! the whole continuous state space:
//!
//! - boundedness on the terminal region, certified by interval bound
//!   propagation over each terminal box;
//! - pre-expectation inequalities at grid points, strengthened by the
//!   Lipschitz margins ζ = r_max + τ·L_h·(1 + L_f·(1 + L_π)) and
//!   ζ′ = r_min − τ·L_h·(1 + L_f·(1 + L_π)), so that the grid inequality
//!   implies the exact supermartingale/submartingale inequality everywhere;
//! - two expectation engines: an analytic one for cell-constant policies
//!   (exact cell masses Δⁱ with E = Σ h(s′ᵢ)·Δⁱ) and an over-approximating
//!   one for network policies (per-noise-cell interval propagation through
//!   policy, dynamics, and certificate).
//!
//! Verdicts are one-sided: `Valid` is sound, `Invalid` may be spurious
//! (interval propagation is conservative) and only triggers more training.
//! All inequality checks use exact `<=` with no epsilon slack.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arith::Interval;
use crate::env::{action_interval, lipschitz_f, EnvModel, PolicySpec};
use crate::error::{Error, Result};
use crate::grid::{classify_grid, Discretization};
use crate::net::{lipschitz_l1, propagate_interval, MlpNet};
use crate::noise::{noise_box_mass, NoiseCells, NoiseSpec};
use crate::space::{Rect, RegionUnion, StateVec};

/// Subdivisions per dimension used when bounding dynamics constants with
/// interval arithmetic (Lipschitz and displacement bounds).
pub const DYNAMICS_SUBDIV: usize = 8;

/// The three certificate flavors sharing one validation pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CertKind {
    /// Upper reward supermartingale: pre-expectation decreases by ζ.
    Urs,
    /// Lower reward submartingale: pre-expectation increases by −ζ′.
    Lrs,
    /// Ranking supermartingale map: nonnegative, decreases by ε.
    Rsm,
}

/// Which side of the expectation the over-approximation engine bounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Upper,
    Lower,
}

/// Lipschitz-inflated margins with every constituent constant recorded.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MarginReport {
    /// Grid margin for the decrease condition: r_max + τ·L_h·(1 + L_f·(1 + L_π)).
    pub zeta: f64,
    /// Grid margin for the increase condition: r_min − τ·L_h·(1 + L_f·(1 + L_π)).
    pub zeta_prime: f64,
    pub r_max: f64,
    pub r_min: f64,
    pub tau: f64,
    pub l_h: f64,
    pub l_f: f64,
    pub l_pi: f64,
    /// False when the policy has no global Lipschitz constant (cell-constant
    /// policies): grid points are checked exactly but the off-grid lift is
    /// unjustified at cell boundaries.
    pub lift_sound: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Valid,
    Invalid,
}

/// One violated inequality: where, which condition, and by how much.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CounterExample {
    pub point: StateVec,
    /// Name of the violated inequality (`bound_upper`, `bound_lower`,
    /// `urs_decrease`, `lrs_increase`, `rsm_decrease`, `rsm_nonneg`).
    pub inequality: String,
    /// Positive violation magnitude.
    pub slack: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValidationResult {
    pub verdict: Verdict,
    pub counterexamples: Vec<CounterExample>,
}

impl ValidationResult {
    pub fn from_counterexamples(counterexamples: Vec<CounterExample>) -> Self {
        let verdict = if counterexamples.is_empty() {
            Verdict::Valid
        } else {
            Verdict::Invalid
        };
        ValidationResult { verdict, counterexamples }
    }

    pub fn is_valid(&self) -> bool {
        self.verdict == Verdict::Valid
    }

    fn merge(mut self, other: ValidationResult) -> ValidationResult {
        self.counterexamples.extend(other.counterexamples);
        ValidationResult::from_counterexamples(self.counterexamples)
    }
}

/// Configuration for the pre-expectation check.
#[derive(Clone, Copy, Debug)]
pub struct CheckConfig {
    /// Required expected decrease per step for ranking maps.
    pub epsilon: f64,
    /// Per-dimension noise-support subdivisions for the over-approximation
    /// engine.
    pub partition_cells: usize,
}

/// Checks K ≤ h ≤ K′ over every terminal box by interval propagation.
///
/// A failing box contributes its worst corner (by the sampled network value)
/// as a counterexample; the recorded slack is the interval overshoot, which
/// may exceed the corner's own violation since propagation is conservative.
pub fn check_boundedness(
    net: &MlpNet,
    terminal: &RegionUnion,
    k: f64,
    k_prime: f64,
) -> ValidationResult {
    let mut cxs = Vec::new();
    for b in terminal.boxes() {
        let bound = propagate_interval(net, b);
        if bound.hi > k_prime {
            let (corner, _) = extreme_corner(net, b, true);
            cxs.push(CounterExample {
                point: corner,
                inequality: "bound_upper".into(),
                slack: bound.hi - k_prime,
            });
        }
        if bound.lo < k {
            let (corner, _) = extreme_corner(net, b, false);
            cxs.push(CounterExample {
                point: corner,
                inequality: "bound_lower".into(),
                slack: k - bound.lo,
            });
        }
    }
    ValidationResult::from_counterexamples(cxs)
}

/// The corner of `b` where the network is largest (`max = true`) or
/// smallest, together with its value.
fn extreme_corner(net: &MlpNet, b: &Rect, max: bool) -> (StateVec, f64) {
    let n = b.dim();
    let mut best: Option<(StateVec, f64)> = None;
    for mask in 0..(1usize << n) {
        let corner: Vec<f64> = (0..n)
            .map(|d| if mask >> d & 1 == 1 { b.hi[d] } else { b.lo[d] })
            .collect();
        let v = net.forward_scalar(&corner);
        let better = match &best {
            None => true,
            Some((_, cur)) => {
                if max {
                    v > *cur
                } else {
                    v < *cur
                }
            }
        };
        if better {
            best = Some((StateVec::new(corner).expect("corner is finite"), v));
        }
    }
    best.expect("a box has at least one corner")
}

/// Computes the Lipschitz-inflated grid margins and records every constant
/// that went into them.
pub fn margin_zeta(
    env: &EnvModel,
    policy: &PolicySpec,
    net: &MlpNet,
    tau: f64,
) -> MarginReport {
    let l_h = lipschitz_l1(net);
    let l_f = lipschitz_f(env, DYNAMICS_SUBDIV);
    let (l_pi, lift_sound) = policy.lipschitz(env);
    let (r_min, r_max) = env.reward.range();
    let inflation = tau * l_h * (1.0 + l_f * (1.0 + l_pi));
    MarginReport {
        zeta: r_max + inflation,
        zeta_prime: r_min - inflation,
        r_max,
        r_min,
        tau,
        l_h,
        l_f,
        l_pi,
        lift_sound,
    }
}

/// The margin added on top of the required decrease when lifting ranking-map
/// grid checks to all states: the ζ inflation with reward terms dropped.
pub fn rsm_inflation(report: &MarginReport) -> f64 {
    report.tau * report.l_h * (1.0 + report.l_f * (1.0 + report.l_pi))
}

/// Observation box reached from `s` under noise offsets in `cell`:
/// per-dimension shift then clamp into the state box, matching how rollouts
/// clamp observations.
fn observation_box(env: &EnvModel, s: &StateVec, cell: &Rect) -> Rect {
    let mut lo = Vec::with_capacity(s.dim());
    let mut hi = Vec::with_capacity(s.dim());
    for d in 0..s.dim() {
        let iv = Interval::new(s.coords()[d] + cell.lo[d], s.coords()[d] + cell.hi[d])
            .clamp_to(env.state_box.lo[d], env.state_box.hi[d]);
        lo.push(iv.lo);
        hi.push(iv.hi);
    }
    Rect::new(lo, hi).expect("clamped shift preserves ordering")
}

/// Sound interval enclosure of the successor set f(s, π(ŝ)) for observations
/// ŝ in `obs`, clamped into the state box like a real step.
fn successor_box(env: &EnvModel, policy: &PolicySpec, s: &StateVec, obs: &Rect) -> Rect {
    let a = action_interval(env, policy, obs);
    let state: Vec<Interval> = s.coords().iter().map(|&x| Interval::point(x)).collect();
    let raw = env.dynamics.step(&state, a);
    let mut lo = Vec::with_capacity(raw.len());
    let mut hi = Vec::with_capacity(raw.len());
    for (o, b) in raw.iter().zip(env.state_box.intervals()) {
        let c = o.clamp_to(b.lo, b.hi);
        lo.push(c.lo);
        hi.push(c.hi);
    }
    Rect::new(lo, hi).expect("clamped dynamics output preserves ordering")
}

/// Over-approximates E_δ[h(f(s, π(s+δ)))] from one side.
///
/// Each noise cell contributes its exact probability mass times a sound
/// interval bound of the integrand over the cell; masses are renormalized
/// after a 10⁻⁹ coverage check so the cells must tile the noise support.
pub fn expectation_bound(
    net: &MlpNet,
    env: &EnvModel,
    policy: &PolicySpec,
    noise: &NoiseSpec,
    s: &StateVec,
    cells: &NoiseCells,
    side: Side,
) -> Result<f64> {
    let masses: Vec<f64> = cells
        .cells
        .iter()
        .map(|c| noise_box_mass(noise, c))
        .collect::<Result<_>>()?;
    let total: f64 = masses.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "noise cells cover mass {total}, not 1: they must tile the support"
        )));
    }
    let mut acc = 0.0;
    for (cell, mass) in cells.cells.iter().zip(&masses) {
        if *mass == 0.0 {
            continue;
        }
        let obs = observation_box(env, s, cell);
        let succ = successor_box(env, policy, s, &obs);
        let h = propagate_interval(net, &succ);
        let v = match side {
            Side::Upper => h.hi,
            Side::Lower => h.lo,
        };
        acc += mass * v;
    }
    Ok(acc / total)
}

/// Computes E_δ[h(f(s, π(s+δ)))] exactly for a cell-constant policy.
///
/// The observation law is the noise law shifted by `s` and clamped into the
/// state box; clamping moves boundary mass onto boundary cells, realized by
/// extending the noise-space image of boundary-touching cells to infinity.
/// Cell masses are renormalized after a 10⁻⁹ conservation check.
pub fn expectation_analytic(
    net: &MlpNet,
    env: &EnvModel,
    policy: &PolicySpec,
    noise: &NoiseSpec,
    s: &StateVec,
) -> Result<f64> {
    let cells = match policy {
        PolicySpec::Grid { cells, .. } => cells,
        PolicySpec::Mlp { .. } => {
            return Err(Error::InvalidArgument(
                "the analytic expectation engine requires a cell-constant policy".into(),
            ))
        }
    };
    let n = s.dim();
    let support = noise.support();
    let mut clipped = false;
    for d in 0..n {
        if s.coords()[d] + support.lo[d] < env.state_box.lo[d]
            || s.coords()[d] + support.hi[d] > env.state_box.hi[d]
        {
            clipped = true;
        }
    }
    if clipped {
        log::debug!(
            "observation support exits the state box at {:?}; boundary mass is clamped onto boundary cells",
            s.coords()
        );
    }
    let mut total = 0.0;
    let mut acc = 0.0;
    for cell in cells {
        // Noise offsets δ that land the clamped observation in this cell.
        let mut lo = Vec::with_capacity(n);
        let mut hi = Vec::with_capacity(n);
        for d in 0..n {
            let l = if cell.lo[d] <= env.state_box.lo[d] {
                f64::NEG_INFINITY
            } else {
                cell.lo[d] - s.coords()[d]
            };
            let h = if cell.hi[d] >= env.state_box.hi[d] {
                f64::INFINITY
            } else {
                cell.hi[d] - s.coords()[d]
            };
            lo.push(l);
            hi.push(h);
        }
        let delta_box = Rect::new(lo, hi).expect("cell shift preserves ordering");
        let mass = noise_box_mass(noise, &delta_box)?;
        if mass == 0.0 {
            continue;
        }
        let state: Vec<f64> = s.coords().to_vec();
        let raw = env.dynamics.step(&state, cell.action);
        let next: Vec<f64> = raw
            .iter()
            .zip(env.state_box.intervals())
            .map(|(x, b)| x.clamp(b.lo, b.hi))
            .collect();
        acc += mass * net.forward_scalar(&next);
        total += mass;
    }
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "policy cells capture observation mass {total}, not 1: the cells must tile the state box"
        )));
    }
    Ok(acc / total)
}

/// Picks the exact engine for cell-constant policies and the requested
/// over-approximation side for network policies.
fn expectation_for(
    net: &MlpNet,
    env: &EnvModel,
    policy: &PolicySpec,
    noise: &NoiseSpec,
    s: &StateVec,
    cells: &NoiseCells,
    side: Side,
) -> Result<f64> {
    match policy {
        PolicySpec::Grid { .. } => expectation_analytic(net, env, policy, noise, s),
        PolicySpec::Mlp { .. } => expectation_bound(net, env, policy, noise, s, cells, side),
    }
}

/// Validates the pre-expectation conditions at every non-terminal grid
/// point, and (for ranking maps) nonnegativity over every grid cell.
pub fn check_pre_expectation(
    net: &MlpNet,
    kind: CertKind,
    disc: &Discretization,
    env: &EnvModel,
    policy: &PolicySpec,
    noise: &NoiseSpec,
    cfg: &CheckConfig,
) -> Result<ValidationResult> {
    let sets = classify_grid(disc, env);
    let report = margin_zeta(env, policy, net, disc.tau);
    let cells = crate::noise::partition_noise_support(noise, cfg.partition_cells)?;
    let (side, inequality, required_gap) = match kind {
        CertKind::Urs => (Side::Upper, "urs_decrease", report.zeta),
        CertKind::Lrs => (Side::Lower, "lrs_increase", report.zeta_prime),
        CertKind::Rsm => (
            Side::Upper,
            "rsm_decrease",
            cfg.epsilon + rsm_inflation(&report),
        ),
    };
    let checks: Result<Vec<Option<CounterExample>>> = sets
        .c2
        .par_iter()
        .map(|p| -> Result<Option<CounterExample>> {
            let e = expectation_for(net, env, policy, noise, p, &cells, side)?;
            let h = net.forward_scalar(p.coords());
            let violation = match kind {
                // E[h(next)] ≤ h(s̃) − ζ (reward folded into ζ).
                CertKind::Urs => e - (h - required_gap),
                // E[h(next)] ≥ h(s̃) − ζ′.
                CertKind::Lrs => (h - required_gap) - e,
                // E[η(next)] ≤ η(s̃) − ε − inflation.
                CertKind::Rsm => e - (h - required_gap),
            };
            if violation > 0.0 {
                Ok(Some(CounterExample {
                    point: p.clone(),
                    inequality: inequality.into(),
                    slack: violation,
                }))
            } else {
                Ok(None)
            }
        })
        .collect();
    let mut cxs: Vec<CounterExample> = checks?.into_iter().flatten().collect();

    if kind == CertKind::Rsm {
        // Nonnegativity must hold on the whole state box, certified cell by
        // cell; the regular grid cells tile the box exactly.
        let nonneg: Vec<Option<CounterExample>> = (0..disc.points.len())
            .into_par_iter()
            .map(|i| {
                let cell = disc.cell_around(&env.state_box, i);
                let bound = propagate_interval(net, &cell);
                if bound.lo < 0.0 {
                    let (corner, _) = extreme_corner(net, &cell, false);
                    Some(CounterExample {
                        point: corner,
                        inequality: "rsm_nonneg".into(),
                        slack: -bound.lo,
                    })
                } else {
                    None
                }
            })
            .collect();
        cxs.extend(nonneg.into_iter().flatten());
    }
    Ok(ValidationResult::from_counterexamples(cxs))
}

/// Runs every check a certificate of the given kind must pass.
///
/// Ranking maps have no terminal window, so boundedness applies only to
/// reward martingales.
pub fn validate_certificate(
    net: &MlpNet,
    kind: CertKind,
    disc: &Discretization,
    env: &EnvModel,
    policy: &PolicySpec,
    noise: &NoiseSpec,
    k: f64,
    k_prime: f64,
    cfg: &CheckConfig,
) -> Result<ValidationResult> {
    let pre = check_pre_expectation(net, kind, disc, env, policy, noise, cfg)?;
    Ok(match kind {
        CertKind::Urs | CertKind::Lrs => {
            check_boundedness(net, &env.terminal, k, k_prime).merge(pre)
        }
        CertKind::Rsm => pre,
    })
}

/// Uniform difference bound m = L_h·D with D a sound interval bound on the
/// L1 displacement ‖f(s, π(s)) − s‖₁ over the state box.
pub fn difference_bound(net: &MlpNet, env: &EnvModel, policy: &PolicySpec) -> f64 {
    let l_h = lipschitz_l1(net);
    if l_h == 0.0 {
        return 0.0;
    }
    l_h * crate::env::displacement_bound(env, policy, DYNAMICS_SUBDIV)
}

/// Sound enclosure of the one-step ranking-map change
/// η(f(s, π(s+δ))) − η(s) over all states and noise draws, hulled with 0
/// because terminal states repeat forever.
pub fn rsm_difference_interval(
    net: &MlpNet,
    env: &EnvModel,
    policy: &PolicySpec,
    noise: &NoiseSpec,
    subdiv: usize,
) -> Interval {
    let n = env.dim();
    let support = noise.support();
    let mut hull = Interval::point(0.0);
    let mut idx = vec![0usize; n];
    'outer: loop {
        let mut lo = Vec::with_capacity(n);
        let mut hi = Vec::with_capacity(n);
        for d in 0..n {
            let w = (env.state_box.hi[d] - env.state_box.lo[d]) / subdiv as f64;
            lo.push(env.state_box.lo[d] + idx[d] as f64 * w);
            hi.push(if idx[d] + 1 == subdiv {
                env.state_box.hi[d]
            } else {
                env.state_box.lo[d] + (idx[d] + 1) as f64 * w
            });
        }
        let tile = Rect::new(lo, hi).expect("tiling preserves ordering");
        // Observations from anywhere in the tile under any admissible noise.
        let mut obs_lo = Vec::with_capacity(n);
        let mut obs_hi = Vec::with_capacity(n);
        for d in 0..n {
            let iv = Interval::new(tile.lo[d] + support.lo[d], tile.hi[d] + support.hi[d])
                .clamp_to(env.state_box.lo[d], env.state_box.hi[d]);
            obs_lo.push(iv.lo);
            obs_hi.push(iv.hi);
        }
        let obs = Rect::new(obs_lo, obs_hi).expect("clamp preserves ordering");
        let a = action_interval(env, policy, &obs);
        let state = tile.intervals();
        let raw = env.dynamics.step(&state, a);
        let mut next_lo = Vec::with_capacity(n);
        let mut next_hi = Vec::with_capacity(n);
        for (o, b) in raw.iter().zip(env.state_box.intervals()) {
            let c = o.clamp_to(b.lo, b.hi);
            next_lo.push(c.lo);
            next_hi.push(c.hi);
        }
        let next = Rect::new(next_lo, next_hi).expect("clamp preserves ordering");
        let diff = propagate_interval(net, &next) - propagate_interval(net, &tile);
        hull = hull.hull(&diff);
        for d in (0..n).rev() {
            idx[d] += 1;
            if idx[d] < subdiv {
                continue 'outer;
            }
            idx[d] = 0;
        }
        break;
    }
    hull
}
