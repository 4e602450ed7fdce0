//! Interval arithmetic and forward-mode interval jets.
//!
//! Two evaluation domains share the scalar operations of the dynamics and
//! network code:
//!
//! * [`Interval`] — closed intervals `[lo, hi]` with outward-conservative
//!   images under arithmetic and the trigonometric maps. These drive bound
//!   propagation through networks and dynamics.
//! * [`Jet`] — an interval value paired with interval partial derivatives
//!   with respect to up to [`MAX_DIM`] inputs. Evaluating dynamics on jets
//!   encloses every entry of the Jacobian over a box in one pass, which is
//!   how Lipschitz constants of the builtin environments are bounded.
//!
//! The [`Scalar`] trait abstracts over `f64`, `Interval` and `Jet`, so a
//! dynamics function written once runs concretely, as a box map, and as a
//! Jacobian enclosure.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Maximum state dimension supported by [`Jet`] derivatives.
pub const MAX_DIM: usize = 4;

// ---------------------------------------------------------------------------
// Interval
// ---------------------------------------------------------------------------

/// A closed interval `[lo, hi]`, possibly degenerate (`lo == hi`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    /// Builds `[lo, hi]`. Panics if `lo > hi` or either end is NaN.
    pub fn new(lo: f64, hi: f64) -> Self {
        assert!(!lo.is_nan() && !hi.is_nan(), "interval endpoint is NaN");
        assert!(lo <= hi, "interval lower bound {lo} exceeds upper bound {hi}");
        Interval { lo, hi }
    }

    /// The degenerate interval `[x, x]`.
    pub fn point(x: f64) -> Self {
        Interval::new(x, x)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    /// Smallest interval containing both operands.
    pub fn hull(&self, other: &Interval) -> Interval {
        Interval::new(self.lo.min(other.lo), self.hi.max(other.hi))
    }

    /// Intersection, or `None` when the operands are disjoint.
    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        if lo <= hi {
            Some(Interval::new(lo, hi))
        } else {
            None
        }
    }

    /// Largest absolute value attained on the interval.
    pub fn abs_bound(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    /// Image under `x -> max(x, 0)` (endpoint-wise; relu is monotone).
    pub fn relu(&self) -> Interval {
        Interval::new(self.lo.max(0.0), self.hi.max(0.0))
    }

    /// Image under the hyperbolic tangent (monotone).
    pub fn tanh(&self) -> Interval {
        Interval::new(self.lo.tanh(), self.hi.tanh())
    }

    /// Image under the logistic sigmoid (monotone).
    pub fn sigmoid(&self) -> Interval {
        Interval::new(sigmoid(self.lo), sigmoid(self.hi))
    }

    /// Image under clamping to `[lo, hi]` (monotone).
    pub fn clamp_to(&self, lo: f64, hi: f64) -> Interval {
        Interval::new(self.lo.clamp(lo, hi), self.hi.clamp(lo, hi))
    }

    /// Scales by a constant.
    pub fn scale(&self, c: f64) -> Interval {
        if c >= 0.0 {
            Interval::new(self.lo * c, self.hi * c)
        } else {
            Interval::new(self.hi * c, self.lo * c)
        }
    }

    /// Image under sine: endpoints plus any interior critical points.
    pub fn sin(&self) -> Interval {
        if self.width() >= 2.0 * std::f64::consts::PI {
            return Interval::new(-1.0, 1.0);
        }
        let mut lo = self.lo.sin().min(self.hi.sin());
        let mut hi = self.lo.sin().max(self.hi.sin());
        // Critical points of sin are at pi/2 + k*pi.
        let half_pi = std::f64::consts::FRAC_PI_2;
        let pi = std::f64::consts::PI;
        let k_min = ((self.lo - half_pi) / pi).ceil() as i64;
        let k_max = ((self.hi - half_pi) / pi).floor() as i64;
        for k in k_min..=k_max {
            let v = if k.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        Interval::new(lo, hi)
    }

    /// Image under cosine: endpoints plus any interior critical points.
    pub fn cos(&self) -> Interval {
        if self.width() >= 2.0 * std::f64::consts::PI {
            return Interval::new(-1.0, 1.0);
        }
        let mut lo = self.lo.cos().min(self.hi.cos());
        let mut hi = self.lo.cos().max(self.hi.cos());
        // Critical points of cos are at k*pi.
        let pi = std::f64::consts::PI;
        let k_min = (self.lo / pi).ceil() as i64;
        let k_max = (self.hi / pi).floor() as i64;
        for k in k_min..=k_max {
            let v = if k.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        Interval::new(lo, hi)
    }
}

impl Add for Interval {
    type Output = Interval;
    fn add(self, rhs: Interval) -> Interval {
        Interval::new(self.lo + rhs.lo, self.hi + rhs.hi)
    }
}

impl Sub for Interval {
    type Output = Interval;
    fn sub(self, rhs: Interval) -> Interval {
        Interval::new(self.lo - rhs.hi, self.hi - rhs.lo)
    }
}

impl Mul for Interval {
    type Output = Interval;
    fn mul(self, rhs: Interval) -> Interval {
        let c = [
            self.lo * rhs.lo,
            self.lo * rhs.hi,
            self.hi * rhs.lo,
            self.hi * rhs.hi,
        ];
        let mut lo = c[0];
        let mut hi = c[0];
        for &v in &c[1..] {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        Interval::new(lo, hi)
    }
}

impl Div for Interval {
    type Output = Interval;
    /// Panics when the divisor contains zero; the dynamics in this crate
    /// only divide by structurally sign-definite quantities.
    fn div(self, rhs: Interval) -> Interval {
        assert!(
            rhs.lo > 0.0 || rhs.hi < 0.0,
            "interval division by a zero-containing interval [{}, {}]",
            rhs.lo,
            rhs.hi
        );
        self * Interval::new(1.0 / rhs.hi, 1.0 / rhs.lo)
    }
}

impl Neg for Interval {
    type Output = Interval;
    fn neg(self) -> Interval {
        Interval::new(-self.hi, -self.lo)
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

// ---------------------------------------------------------------------------
// Jet
// ---------------------------------------------------------------------------

/// An interval value with interval partial derivatives: the forward-mode
/// carrier for Jacobian enclosures over a box.
#[derive(Clone, Copy, Debug)]
pub struct Jet {
    pub v: Interval,
    pub d: [Interval; MAX_DIM],
    pub n: usize,
}

impl Jet {
    /// A constant: zero derivative in every direction.
    pub fn constant(v: Interval, n: usize) -> Self {
        assert!(n <= MAX_DIM);
        Jet { v, d: [Interval::point(0.0); MAX_DIM], n }
    }

    /// The `i`-th input variable ranging over `v`: unit derivative in
    /// direction `i`.
    pub fn variable(v: Interval, i: usize, n: usize) -> Self {
        assert!(i < n && n <= MAX_DIM);
        let mut d = [Interval::point(0.0); MAX_DIM];
        d[i] = Interval::point(1.0);
        Jet { v, d, n }
    }

    fn map(
        &self,
        v: Interval,
        f: impl Fn(Interval) -> Interval,
    ) -> Jet {
        let mut d = [Interval::point(0.0); MAX_DIM];
        for i in 0..self.n {
            d[i] = f(self.d[i]);
        }
        Jet { v, d, n: self.n }
    }

    pub fn sin(&self) -> Jet {
        let cos = self.v.cos();
        self.map(self.v.sin(), |di| di * cos)
    }

    pub fn cos(&self) -> Jet {
        let msin = -self.v.sin();
        self.map(self.v.cos(), |di| di * msin)
    }

    /// Clamp the value range; derivatives are scaled by the possible slopes
    /// of the clamp (0 where saturated, 1 where inactive, their hull when
    /// the interval straddles a threshold).
    pub fn clamp_to(&self, lo: f64, hi: f64) -> Jet {
        let slope = if self.v.hi <= lo || self.v.lo >= hi {
            Interval::point(0.0)
        } else if self.v.lo >= lo && self.v.hi <= hi {
            Interval::point(1.0)
        } else {
            Interval::new(0.0, 1.0)
        };
        self.map(self.v.clamp_to(lo, hi), |di| di * slope)
    }
}

// Binary operations zero-pad the shorter derivative vector, so jets built
// with different `n` (e.g. a generic constant next to an explicit variable)
// combine soundly: a constant's derivative is zero in every direction.
impl Add for Jet {
    type Output = Jet;
    fn add(self, rhs: Jet) -> Jet {
        let n = self.n.max(rhs.n);
        let mut d = [Interval::point(0.0); MAX_DIM];
        for i in 0..n {
            d[i] = self.d[i] + rhs.d[i];
        }
        Jet { v: self.v + rhs.v, d, n }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, rhs: Jet) -> Jet {
        let n = self.n.max(rhs.n);
        let mut d = [Interval::point(0.0); MAX_DIM];
        for i in 0..n {
            d[i] = self.d[i] - rhs.d[i];
        }
        Jet { v: self.v - rhs.v, d, n }
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        let n = self.n.max(rhs.n);
        let mut d = [Interval::point(0.0); MAX_DIM];
        for i in 0..n {
            d[i] = self.d[i] * rhs.v + self.v * rhs.d[i];
        }
        Jet { v: self.v * rhs.v, d, n }
    }
}

impl Div for Jet {
    type Output = Jet;
    fn div(self, rhs: Jet) -> Jet {
        let n = self.n.max(rhs.n);
        let v = self.v / rhs.v;
        let denom = rhs.v * rhs.v;
        let mut d = [Interval::point(0.0); MAX_DIM];
        for i in 0..n {
            d[i] = (self.d[i] * rhs.v - self.v * rhs.d[i]) / denom;
        }
        Jet { v, d, n }
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        let mut d = [Interval::point(0.0); MAX_DIM];
        for i in 0..self.n {
            d[i] = -self.d[i];
        }
        Jet { v: -self.v, d, n: self.n }
    }
}

// ---------------------------------------------------------------------------
// Scalar
// ---------------------------------------------------------------------------

/// The operations a dynamics function may use, abstracted over evaluation
/// domains. Implemented for `f64` (concrete steps), [`Interval`] (box maps)
/// and [`Jet`] (Jacobian enclosures).
pub trait Scalar:
    Clone
    + Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn constant(c: f64) -> Self;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn clamp_to(&self, lo: f64, hi: f64) -> Self;
}

impl Scalar for f64 {
    fn constant(c: f64) -> Self {
        c
    }
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
    fn clamp_to(&self, lo: f64, hi: f64) -> Self {
        self.clamp(lo, hi)
    }
}

impl Scalar for Interval {
    fn constant(c: f64) -> Self {
        Interval::point(c)
    }
    fn sin(&self) -> Self {
        Interval::sin(self)
    }
    fn cos(&self) -> Self {
        Interval::cos(self)
    }
    fn clamp_to(&self, lo: f64, hi: f64) -> Self {
        Interval::clamp_to(self, lo, hi)
    }
}

/// A jet constant needs to know the active dimension, which `Scalar` cannot
/// express, so `Jet`'s `constant` produces a `MAX_DIM`-wide constant; the
/// env code instantiates variables explicitly via [`Jet::variable`].
impl Scalar for Jet {
    fn constant(c: f64) -> Self {
        Jet::constant(Interval::point(c), MAX_DIM)
    }
    fn sin(&self) -> Self {
        Jet::sin(self)
    }
    fn cos(&self) -> Self {
        Jet::cos(self)
    }
    fn clamp_to(&self, lo: f64, hi: f64) -> Self {
        Jet::clamp_to(self, lo, hi)
    }
}
