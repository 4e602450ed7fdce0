//! Certified numbers derived from validated certificates: expected
//! cumulative-reward bounds, termination-time concentration constants, and
//! cumulative-reward tail bounds.
//!
//! For a validated upper reward supermartingale h with K ≤ h ≤ K′ on the
//! terminal set, the expected cumulative reward from an initial state s₀
//! satisfies
//!
//! ```text
//! E[𝓡 | s₀] ≤ h(s₀) − K,
//! ```
//!
//! and symmetrically E[𝓡 | s₀] ≥ h(s₀) − K′ for a validated lower reward
//! submartingale. A validated ranking map η with required expected decrease
//! ε and one-step change confined to [a″, b″] makes the termination time T
//! concentrate:
//!
//! ```text
//! P(T > n) ≤ a·exp(−b·n),  a = exp(2·ε·η(s₀)/(b″−a″)²),  b = 2ε²/(b″−a″)²,
//! ```
//!
//! valid for horizons n > η(s₀)/ε. Combining both certificates yields a tail
//! bound on the cumulative reward itself: for c > h(s₀) − K,
//!
//! ```text
//! P(𝓡 ≥ c) ≤ min(1, α + β·exp(−γ·c²)),
//! ```
//!
//! with α = a·exp(−b·n*), β = exp(4·(h(s₀)−K)²/(b′−a′)²), γ = 2/(b′−a′)²,
//! where a′ = −m + r_max and b′ = m + r_max for the one-step difference
//! bound m. The lower tail P(𝓡 ≤ c) for c < h(s₀) − K′ uses K′ in β. Both
//! β and γ use the single-step range (b′−a′)² without horizon scaling, so
//! the raw curve can exceed one near the threshold; outputs are clipped to
//! [0, 1] and flagged when the clip fires.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learn::{CertStatus, Certificate};
use crate::space::StateVec;
use crate::verify::CertKind;

/// Default confidence target for [`default_n_star`]: the horizon is grown
/// until α = a·exp(−b·n*) drops to this level or the cap is hit.
pub const DEFAULT_ALPHA_TARGET: f64 = 1e-3;

/// Hard cap on the automatically chosen horizon n*.
pub const N_STAR_CAP: u64 = 1_000_000;

/// Caveat attached to every tail bound: β and γ are built from the
/// single-step range (b′−a′)² with no horizon scaling, so the raw curve can
/// exceed one near the threshold and tightening it is deliberately out of
/// scope; values are reported clipped to [0, 1] with the raw value kept.
pub const TAIL_RANGE_NOTE: &str = "beta and gamma use the single-step range \
(b' - a')^2 without horizon scaling; the raw curve can exceed 1 near the \
threshold and is reported clipped, with the unclipped value retained";

/// Certified enclosure of the expected cumulative reward from one state.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RewardBounds {
    pub s0: StateVec,
    /// h_URS(s₀) − K.
    pub upper: f64,
    /// h_LRS(s₀) − K′.
    pub lower: f64,
    /// Context hash of the certificate behind each side.
    pub upper_hash: String,
    pub lower_hash: String,
}

/// Constants of the tail bound P(𝓡 ≥ c) ≤ α + β·exp(−γ·c²).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TailParams {
    /// Concentration prefactor a = exp(2·ε·η(s₀)/(b″−a″)²).
    pub a: f64,
    /// Concentration rate b = 2ε²/(b″−a″)².
    pub b: f64,
    /// Horizon used to turn concentration into the additive term α.
    pub n_star: u64,
    /// α = a·exp(−b·n*).
    pub alpha: f64,
    /// β = exp(4·(h(s₀)−K)²/(b′−a′)²), K′ in place of K for the lower tail.
    pub beta: f64,
    /// γ = 2/(b′−a′)².
    pub gamma: f64,
    /// a′ = −m + r_max.
    pub a_prime: f64,
    /// b′ = m + r_max.
    pub b_prime: f64,
}

/// One evaluated point of a tail curve.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TailBound {
    pub c: f64,
    /// min(1, raw): the usable certified probability bound.
    pub bound: f64,
    /// α + β·exp(−γ·c²) before clipping.
    pub raw: f64,
    /// True when raw ≥ 1, i.e. the clipped bound carries no information.
    pub vacuous: bool,
    pub params: TailParams,
    /// Standing caveat about the range inside β and γ; see
    /// [`TAIL_RANGE_NOTE`].
    pub note: String,
}

/// One row of a tail-curve CSV: threshold, certified bound, and the
/// empirical exceedance frequency when a simulation supplied one.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TailCurvePoint {
    pub c: f64,
    pub bound: f64,
    pub empirical: Option<f64>,
}

fn require_validated(cert: &Certificate, role: &str) -> Result<()> {
    if cert.status != CertStatus::Validated {
        return Err(Error::NotValidated(format!(
            "{role} certificate has status {:?} with {} counterexamples",
            cert.status,
            cert.counterexamples.len()
        )));
    }
    Ok(())
}

fn require_kind(cert: &Certificate, kind: CertKind, role: &str) -> Result<()> {
    if cert.kind != kind {
        return Err(Error::InvalidArgument(format!(
            "{role} certificate has kind {:?}, expected {:?}",
            cert.kind, kind
        )));
    }
    Ok(())
}

fn require_same_context(a: &Certificate, b: &Certificate) -> Result<()> {
    if a.context_hash != b.context_hash {
        return Err(Error::ContextMismatch(format!(
            "certificates were built against different systems ({} vs {})",
            a.context_hash, b.context_hash
        )));
    }
    Ok(())
}

fn require_dim(cert: &Certificate, s0: &StateVec) -> Result<()> {
    let expected = cert.net.input_dim();
    if s0.0.len() != expected {
        return Err(Error::Dimension {
            expected,
            got: s0.0.len(),
        });
    }
    Ok(())
}

/// Certified enclosure of E[𝓡 | s₀] from a validated upper/lower pair.
///
/// Both certificates must be validated and carry the same context hash, so
/// that the two sides genuinely bound the same system.
pub fn reward_bounds(
    urs: &Certificate,
    lrs: &Certificate,
    s0: &StateVec,
) -> Result<RewardBounds> {
    require_kind(urs, CertKind::Urs, "upper")?;
    require_kind(lrs, CertKind::Lrs, "lower")?;
    require_validated(urs, "upper")?;
    require_validated(lrs, "lower")?;
    require_same_context(urs, lrs)?;
    require_dim(urs, s0)?;
    require_dim(lrs, s0)?;
    Ok(RewardBounds {
        s0: s0.clone(),
        upper: urs.net.forward_scalar(&s0.0) - urs.k,
        lower: lrs.net.forward_scalar(&s0.0) - lrs.k_prime,
        upper_hash: urs.context_hash.clone(),
        lower_hash: lrs.context_hash.clone(),
    })
}

fn rsm_constants(rsm: &Certificate, s0: &StateVec) -> Result<(f64, f64, f64)> {
    require_kind(rsm, CertKind::Rsm, "ranking")?;
    require_validated(rsm, "ranking")?;
    require_dim(rsm, s0)?;
    let epsilon = rsm.epsilon.ok_or_else(|| {
        Error::InvalidArgument("ranking certificate has no required decrease recorded".into())
    })?;
    let (lo, hi) = match (rsm.diff_lo, rsm.diff_hi) {
        (Some(lo), Some(hi)) => (lo, hi),
        _ => {
            return Err(Error::InvalidArgument(
                "ranking certificate has no one-step difference interval recorded".into(),
            ))
        }
    };
    let width = hi - lo;
    if !(width > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "one-step difference interval [{lo}, {hi}] has non-positive width"
        )));
    }
    let eta0 = rsm.net.forward_scalar(&s0.0);
    Ok((epsilon, width, eta0))
}

/// Concentration constants (a, b, α) of the termination-time tail
/// P(T > n) ≤ a·exp(−b·n), with α evaluated at the horizon `n_star`.
///
/// The bound is only valid for horizons strictly beyond η(s₀)/ε; smaller
/// `n_star` values are rejected.
pub fn concentration_constants(
    rsm: &Certificate,
    s0: &StateVec,
    n_star: u64,
) -> Result<(f64, f64, f64)> {
    let (epsilon, width, eta0) = rsm_constants(rsm, s0)?;
    let floor = eta0 / epsilon;
    if n_star as f64 <= floor {
        return Err(Error::HorizonTooSmall { n_star, floor });
    }
    let a = (2.0 * epsilon * eta0 / (width * width)).exp();
    let b = 2.0 * epsilon * epsilon / (width * width);
    let alpha = a * (-b * n_star as f64).exp();
    Ok((a, b, alpha))
}

/// Smallest admissible horizon n* with α ≤ [`DEFAULT_ALPHA_TARGET`], capped
/// at [`N_STAR_CAP`]. The cap can leave α above the target for very slow
/// concentration rates; callers wanting a specific α should pass their own
/// horizon to [`concentration_constants`].
pub fn default_n_star(rsm: &Certificate, s0: &StateVec) -> Result<u64> {
    let (epsilon, width, eta0) = rsm_constants(rsm, s0)?;
    let floor = eta0 / epsilon;
    let n_min = floor.floor() as u64 + 1;
    let a = (2.0 * epsilon * eta0 / (width * width)).exp();
    let b = 2.0 * epsilon * epsilon / (width * width);
    // a·exp(−b·n) ≤ target  ⇔  n ≥ (ln a − ln target)/b.
    let for_alpha = (a.ln() - DEFAULT_ALPHA_TARGET.ln()) / b;
    let n_alpha = if for_alpha.is_finite() && for_alpha > 0.0 {
        if for_alpha >= N_STAR_CAP as f64 {
            N_STAR_CAP
        } else {
            for_alpha.ceil() as u64
        }
    } else {
        0
    };
    Ok(n_min.max(n_alpha).min(N_STAR_CAP))
}

/// All constants of the reward tail bound, without evaluating it at a
/// threshold. `cert` supplies the martingale side (upper or lower), `rsm`
/// the concentration term; both must share one context hash.
pub fn tail_params(
    cert: &Certificate,
    rsm: &Certificate,
    s0: &StateVec,
    n_star: u64,
) -> Result<TailParams> {
    match cert.kind {
        CertKind::Urs | CertKind::Lrs => {}
        CertKind::Rsm => {
            return Err(Error::InvalidArgument(
                "tail bounds need an upper or lower reward certificate, got a ranking map".into(),
            ))
        }
    }
    require_validated(cert, "reward")?;
    require_same_context(cert, rsm)?;
    require_dim(cert, s0)?;
    let (a, b, alpha) = concentration_constants(rsm, s0, n_star)?;
    if !(cert.m > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "one-step difference bound m = {} leaves the tail range empty",
            cert.m
        )));
    }
    let a_prime = -cert.m + cert.r_max;
    let b_prime = cert.m + cert.r_max;
    let range = b_prime - a_prime;
    let h0 = cert.net.forward_scalar(&s0.0);
    let k_side = match cert.kind {
        CertKind::Urs => cert.k,
        _ => cert.k_prime,
    };
    let dev = h0 - k_side;
    Ok(TailParams {
        a,
        b,
        n_star,
        alpha,
        beta: (4.0 * dev * dev / (range * range)).exp(),
        gamma: 2.0 / (range * range),
        a_prime,
        b_prime,
    })
}

/// Tail bound at one threshold: P(𝓡 ≥ c) for an upper certificate with
/// c > h(s₀) − K, or P(𝓡 ≤ c) for a lower certificate with c < h(s₀) − K′.
/// Thresholds on the wrong side of the certified expectation bound are
/// rejected.
pub fn tail_bound(
    cert: &Certificate,
    rsm: &Certificate,
    s0: &StateVec,
    c: f64,
    n_star: u64,
) -> Result<TailBound> {
    let params = tail_params(cert, rsm, s0, n_star)?;
    let h0 = cert.net.forward_scalar(&s0.0);
    match cert.kind {
        CertKind::Urs => {
            let bound = h0 - cert.k;
            if c <= bound {
                return Err(Error::TailThreshold { c, bound });
            }
        }
        CertKind::Lrs => {
            let bound = h0 - cert.k_prime;
            if c >= bound {
                return Err(Error::TailThreshold { c, bound });
            }
        }
        CertKind::Rsm => unreachable!("rejected by tail_params"),
    }
    let raw = params.alpha + params.beta * (-params.gamma * c * c).exp();
    Ok(TailBound {
        c,
        bound: raw.min(1.0),
        raw,
        vacuous: raw >= 1.0,
        params,
        note: TAIL_RANGE_NOTE.into(),
    })
}

/// One float with 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// CSV for certified enclosures: one row per initial state, coordinates
/// first, then the lower and upper bound.
pub fn bounds_csv(rows: &[RewardBounds]) -> String {
    let dim = rows.first().map_or(0, |r| r.s0.0.len());
    let mut out = String::new();
    for d in 0..dim {
        out.push_str(&format!("s0_{d},"));
    }
    out.push_str("lower,upper\n");
    for row in rows {
        for x in &row.s0.0 {
            out.push_str(&fmt_f64(*x));
            out.push(',');
        }
        out.push_str(&fmt_f64(row.lower));
        out.push(',');
        out.push_str(&fmt_f64(row.upper));
        out.push('\n');
    }
    out
}

/// CSV for tail curves: threshold, certified bound, and the empirical
/// frequency column left empty where no simulation estimate exists.
pub fn tail_csv(points: &[TailCurvePoint]) -> String {
    let mut out = String::from("c,bound,empirical_freq\n");
    for p in points {
        out.push_str(&fmt_f64(p.c));
        out.push(',');
        out.push_str(&fmt_f64(p.bound));
        out.push(',');
        if let Some(freq) = p.empirical {
            out.push_str(&fmt_f64(freq));
        }
        out.push('\n');
    }
    out
}
