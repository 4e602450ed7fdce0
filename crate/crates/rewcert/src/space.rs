//! State-space geometry: vectors, axis-aligned boxes, and box unions.
//!
//! States are plain `Vec<f64>` coordinates wrapped in [`StateVec`]. Regions
//! of interest — the compact state space, terminal sets, initial sets, noise
//! supports, grid cells — are axis-aligned boxes ([`Rect`]) or finite unions
//! of them ([`RegionUnion`]). Boxes may have infinite extents in individual
//! coordinates (noise mass queries use half-open boxes); state-space boxes
//! are finite.

use serde::{Deserialize, Serialize};

use crate::arith::Interval;
use crate::error::{Error, Result};

/// A state: a finite real coordinate vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateVec(pub Vec<f64>);

impl StateVec {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument(
                "state coordinates must be finite".into(),
            ));
        }
        Ok(StateVec(coords))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    /// L1 distance to another state of the same dimension.
    pub fn l1_distance(&self, other: &StateVec) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }

    /// Coordinate-wise sum.
    pub fn add(&self, other: &StateVec) -> StateVec {
        debug_assert_eq!(self.dim(), other.dim());
        StateVec(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// Total order on coordinates (lexicographic, via `total_cmp`), used to
    /// deduplicate point sets deterministically.
    pub fn total_cmp(&self, other: &StateVec) -> std::cmp::Ordering {
        for (a, b) in self.0.iter().zip(&other.0) {
            match a.total_cmp(b) {
                std::cmp::Ordering::Equal => continue,
                ord => return ord,
            }
        }
        self.0.len().cmp(&other.0.len())
    }
}

/// An axis-aligned box `{ x : lo[i] <= x[i] <= hi[i] }`.
///
/// Endpoints may be infinite (for noise mass queries over half-open sets)
/// but never NaN, and `lo[i] <= hi[i]` always holds. A box with `lo == hi`
/// in some coordinate is a degenerate (measure-zero) box and is allowed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Rect {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::Dimension { expected: lo.len(), got: hi.len() });
        }
        for (l, h) in lo.iter().zip(&hi) {
            if l.is_nan() || h.is_nan() {
                return Err(Error::InvalidArgument("box endpoint is NaN".into()));
            }
            if l > h {
                return Err(Error::InvalidArgument(format!(
                    "box lower bound {l} exceeds upper bound {h}"
                )));
            }
        }
        Ok(Rect { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, s: &StateVec) -> bool {
        debug_assert_eq!(self.dim(), s.dim());
        self.lo
            .iter()
            .zip(&self.hi)
            .zip(s.coords())
            .all(|((l, h), x)| l <= x && x <= h)
    }

    /// Product of side lengths. Degenerate boxes have volume zero.
    pub fn volume(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| h - l)
            .product()
    }

    pub fn center(&self) -> StateVec {
        StateVec(
            self.lo
                .iter()
                .zip(&self.hi)
                .map(|(l, h)| 0.5 * (l + h))
                .collect(),
        )
    }

    /// Coordinate intervals of the box.
    pub fn intervals(&self) -> Vec<Interval> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&l, &h)| Interval::new(l, h))
            .collect()
    }

    /// Clamp a point into the box, coordinate by coordinate.
    pub fn clamp(&self, s: &StateVec) -> StateVec {
        debug_assert_eq!(self.dim(), s.dim());
        StateVec(
            s.coords()
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .map(|(x, (l, h))| x.clamp(*l, *h))
                .collect(),
        )
    }

    /// Intersection, or `None` when the boxes are disjoint.
    pub fn intersect(&self, other: &Rect) -> Option<Rect> {
        debug_assert_eq!(self.dim(), other.dim());
        let mut lo = Vec::with_capacity(self.dim());
        let mut hi = Vec::with_capacity(self.dim());
        for i in 0..self.dim() {
            let l = self.lo[i].max(other.lo[i]);
            let h = self.hi[i].min(other.hi[i]);
            if l > h {
                return None;
            }
            lo.push(l);
            hi.push(h);
        }
        Some(Rect { lo, hi })
    }

    /// True when the boxes share interior volume (touching faces do not
    /// count as overlap).
    pub fn overlaps_interior(&self, other: &Rect) -> bool {
        match self.intersect(other) {
            None => false,
            Some(ix) => ix.lo.iter().zip(&ix.hi).all(|(l, h)| l < h),
        }
    }

    /// Shift the box by a vector.
    pub fn translate(&self, s: &StateVec) -> Rect {
        debug_assert_eq!(self.dim(), s.dim());
        Rect {
            lo: self.lo.iter().zip(s.coords()).map(|(l, x)| l + x).collect(),
            hi: self.hi.iter().zip(s.coords()).map(|(h, x)| h + x).collect(),
        }
    }

    /// Uniform sample from a finite box. Degenerate coordinates return
    /// their single value.
    pub fn sample(&self, rng: &mut impl rand::Rng) -> StateVec {
        StateVec(
            self.lo
                .iter()
                .zip(&self.hi)
                .map(|(&l, &h)| if l == h { l } else { rng.gen_range(l..h) })
                .collect(),
        )
    }
}

/// A finite union of boxes, e.g. a terminal region with several components.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RegionUnion(pub Vec<Rect>);

impl RegionUnion {
    pub fn contains(&self, s: &StateVec) -> bool {
        self.0.iter().any(|b| b.contains(s))
    }

    pub fn boxes(&self) -> &[Rect] {
        &self.0
    }
}
