//! State-space discretization with a guaranteed L1 covering radius.
//!
//! A grid over a box `S` with granularity `τ` uses per-dimension spacing
//! `d = 2τ/n` (n = dimension, endpoints always included). The worst point of
//! any grid cell is the center, at L1 distance `Σ_d spacing_d / 2 ≤ n·d/2 =
//! τ` from the nearest vertex, so every state of `S` is within `τ` of a grid
//! point. Failed validations refine the grid: `τ ← τ − ξ`, rebuild, and keep
//! every counterexample seen so far as an extra point.
//!
//! Grid points are classified into the three training sets: terminal points
//! (boundedness anchors), non-terminal points (decrease conditions), and
//! initial points (tightness anchors). If no grid point lands inside the
//! terminal region, the center of each terminal box is injected so the
//! boundedness condition always has anchors.

use std::collections::HashSet;

use crate::env::EnvModel;
use crate::error::{Error, Result};
use crate::space::{Rect, StateVec};

/// A τ-covering grid over a state box, plus counterexamples accumulated
/// across refinement rounds.
#[derive(Clone, Debug)]
pub struct Discretization {
    /// L1 covering radius guaranteed by construction.
    pub tau: f64,
    /// Actual spacing per dimension (`width / subintervals`; 0 for
    /// degenerate dimensions).
    pub spacings: Vec<f64>,
    /// Regular grid vertices in row-major order.
    pub points: Vec<StateVec>,
    /// Counterexample points retained across refinements; deduplicated and
    /// never overlapping `points`.
    pub extra: Vec<StateVec>,
}

impl Discretization {
    /// All training/validation points: regular vertices then extras.
    pub fn all_points(&self) -> impl Iterator<Item = &StateVec> {
        self.points.iter().chain(self.extra.iter())
    }

    pub fn len(&self) -> usize {
        self.points.len() + self.extra.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The axis-aligned cell owned by regular point `idx`: the half-spacing
    /// neighborhood intersected with `space`. The union of all cells covers
    /// `space` exactly.
    pub fn cell_around(&self, space: &Rect, idx: usize) -> Rect {
        let p = &self.points[idx];
        let lo: Vec<f64> = p
            .coords()
            .iter()
            .zip(&self.spacings)
            .zip(&space.lo)
            .map(|((x, s), lo)| (x - s / 2.0).max(*lo))
            .collect();
        let hi: Vec<f64> = p
            .coords()
            .iter()
            .zip(&self.spacings)
            .zip(&space.hi)
            .map(|((x, s), hi)| (x + s / 2.0).min(*hi))
            .collect();
        Rect::new(lo, hi).expect("cell construction cannot invert bounds")
    }
}

/// The three training sets cut from a grid.
#[derive(Clone, Debug)]
pub struct TrainingSets {
    /// Points inside the terminal region (with injected terminal-box centers
    /// when the grid itself has none).
    pub c1: Vec<StateVec>,
    /// Points outside the terminal region.
    pub c2: Vec<StateVec>,
    /// Points inside the initial box.
    pub c3: Vec<StateVec>,
}

/// Builds the uniform grid of covering radius `tau` over `space`.
///
/// The point count is bounded by `budget`; exceeding it is an error that
/// names the needed count, since a silent truncation would break the
/// covering guarantee.
pub fn build_grid(space: &Rect, tau: f64, budget: usize) -> Result<Discretization> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "granularity must be positive, got {tau}"
        )));
    }
    let n = space.dim();
    let d = 2.0 * tau / n as f64;
    let mut counts = Vec::with_capacity(n); // vertices per dimension
    let mut spacings = Vec::with_capacity(n);
    for dim in 0..n {
        let width = space.hi[dim] - space.lo[dim];
        if width == 0.0 {
            counts.push(1usize);
            spacings.push(0.0);
        } else {
            let m = (width / d).ceil().max(1.0) as usize;
            counts.push(m + 1);
            spacings.push(width / m as f64);
        }
    }
    let needed = counts.iter().try_fold(1usize, |acc, c| acc.checked_mul(*c));
    match needed {
        Some(total) if total <= budget => {}
        Some(total) => {
            return Err(Error::GridBudget { needed: total, budget });
        }
        None => {
            return Err(Error::GridBudget { needed: usize::MAX, budget });
        }
    }
    let mut points = Vec::with_capacity(needed.unwrap());
    let mut idx = vec![0usize; n];
    'outer: loop {
        let coords: Vec<f64> = (0..n)
            .map(|dim| {
                if idx[dim] + 1 == counts[dim] {
                    // Exact endpoint, immune to accumulated rounding.
                    space.hi[dim]
                } else {
                    space.lo[dim] + idx[dim] as f64 * spacings[dim]
                }
            })
            .collect();
        points.push(StateVec::new(coords).expect("grid coordinates are finite"));
        for dim in (0..n).rev() {
            idx[dim] += 1;
            if idx[dim] < counts[dim] {
                continue 'outer;
            }
            idx[dim] = 0;
        }
        break;
    }
    Ok(Discretization { tau, spacings, points, extra: Vec::new() })
}

/// Splits grid points by terminal/initial membership.
///
/// When the terminal region intersects the space but captured no grid point,
/// the center of each terminal box is injected into the terminal set so the
/// boundedness condition has anchors.
pub fn classify_grid(disc: &Discretization, env: &EnvModel) -> TrainingSets {
    let mut c1 = Vec::new();
    let mut c2 = Vec::new();
    let mut c3 = Vec::new();
    for p in disc.all_points() {
        if env.is_terminal(p) {
            c1.push(p.clone());
        } else {
            c2.push(p.clone());
        }
        if env.initial_box.contains(p) {
            c3.push(p.clone());
        }
    }
    if c1.is_empty() {
        for b in env.terminal.boxes() {
            c1.push(b.center());
        }
    }
    TrainingSets { c1, c2, c3 }
}

fn bit_key(p: &StateVec) -> Vec<u64> {
    p.coords().iter().map(|x| x.to_bits()).collect()
}

/// Shrinks the granularity by `xi`, rebuilds the grid, and carries forward
/// the union of previous extras and new counterexamples (deduplicated, and
/// dropped when they coincide bit-for-bit with a regular vertex).
pub fn refine_grid(
    disc: &Discretization,
    space: &Rect,
    xi: f64,
    counterexamples: &[StateVec],
    budget: usize,
) -> Result<Discretization> {
    if !(xi > 0.0 && xi < disc.tau) {
        return Err(Error::RefinementExhausted { tau: disc.tau, xi });
    }
    let tau = disc.tau - xi;
    let mut refined = build_grid(space, tau, budget)?;
    let vertex_keys: HashSet<Vec<u64>> = refined.points.iter().map(bit_key).collect();
    let mut seen: HashSet<Vec<u64>> = HashSet::new();
    let mut extra = Vec::new();
    for p in disc.extra.iter().chain(counterexamples) {
        let key = bit_key(p);
        if !vertex_keys.contains(&key) && seen.insert(key) {
            extra.push(p.clone());
        }
    }
    extra.sort_by(|a, b| a.total_cmp(b));
    refined.extra = extra;
    Ok(refined)
}
