//! Perturbation noise: laws, supports, partitions, and box masses.
//!
//! Each state coordinate is perturbed independently by a bounded, zero-mean
//! law: either `Uniform(-r, r)` or a Gaussian truncated at `kappa` standard
//! deviations and renormalized. Bounded support is essential — every sound
//! bound downstream quantifies over the compact support box.
//!
//! A [`NoiseLaw`] round-trips through JSON as
//! `{"kind":"uniform","r":0.1}` or `{"kind":"gaussian","sigma":0.1,"kappa":3.0}`
//! (`kappa` defaults to 3). A [`NoiseSpec`] attaches one law per state
//! dimension; configs name a single law which is broadcast across the
//! environment's dimensions via [`NoiseSpec::iid`].
//!
//! [`partition_noise_support`] splits the support box into `k` equal slices
//! per dimension (`k^n` cells). Shared cell faces carry zero probability
//! mass; where a unique owner is required, the lower-indexed cell wins.
//! [`noise_box_mass`] returns the exact probability of a box, as a product
//! of per-dimension masses; boxes may extend to infinity.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{Rect, StateVec};

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// A univariate zero-mean noise law with bounded support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum NoiseLaw {
    /// Uniform on `[-r, r]`.
    Uniform { r: f64 },
    /// Gaussian with standard deviation `sigma`, truncated to
    /// `[-kappa * sigma, kappa * sigma]` and renormalized.
    Gaussian {
        sigma: f64,
        #[serde(default = "default_kappa")]
        kappa: f64,
    },
}

fn default_kappa() -> f64 {
    3.0
}

impl NoiseLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            NoiseLaw::Uniform { r } => {
                if !(r.is_finite() && *r > 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "uniform noise radius must be positive, got {r}"
                    )));
                }
            }
            NoiseLaw::Gaussian { sigma, kappa } => {
                if !(sigma.is_finite() && *sigma > 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "gaussian noise sigma must be positive, got {sigma}"
                    )));
                }
                if !(kappa.is_finite() && *kappa > 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "gaussian truncation kappa must be positive, got {kappa}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Half-width of the support: `r` or `kappa * sigma`.
    pub fn support_radius(&self) -> f64 {
        match self {
            NoiseLaw::Uniform { r } => *r,
            NoiseLaw::Gaussian { sigma, kappa } => sigma * kappa,
        }
    }

    /// One draw from the law.
    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        match self {
            NoiseLaw::Uniform { r } => rng.gen_range(-*r..*r),
            NoiseLaw::Gaussian { sigma, kappa } => {
                // Rejection against the truncation bound; acceptance is
                // erf(kappa / sqrt(2)), ~0.997 at the default kappa = 3.
                let dist = rand_distr::Normal::new(0.0, *sigma).expect("sigma validated");
                let bound = sigma * kappa;
                loop {
                    let x = rng.sample(dist);
                    if x.abs() <= bound {
                        return x;
                    }
                }
            }
        }
    }

    /// Probability of `[lo, hi]` under the law. Endpoints may be infinite.
    pub fn mass(&self, lo: f64, hi: f64) -> f64 {
        debug_assert!(lo <= hi);
        match self {
            NoiseLaw::Uniform { r } => {
                let overlap = (hi.min(*r) - lo.max(-*r)).max(0.0);
                overlap / (2.0 * r)
            }
            NoiseLaw::Gaussian { sigma, kappa } => {
                let bound = sigma * kappa;
                let a = lo.max(-bound);
                let b = hi.min(bound);
                if a >= b {
                    return 0.0;
                }
                let z = libm::erf(kappa / SQRT_2);
                let phi_diff =
                    0.5 * (libm::erf(b / (sigma * SQRT_2)) - libm::erf(a / (sigma * SQRT_2)));
                phi_diff / z
            }
        }
    }
}

/// Independent per-dimension noise for an `n`-dimensional state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NoiseSpec {
    pub laws: Vec<NoiseLaw>,
}

impl NoiseSpec {
    /// The same law in every one of `dim` coordinates.
    pub fn iid(law: NoiseLaw, dim: usize) -> Result<Self> {
        law.validate()?;
        if dim == 0 {
            return Err(Error::InvalidArgument("noise dimension must be positive".into()));
        }
        Ok(NoiseSpec { laws: vec![law; dim] })
    }

    pub fn new(laws: Vec<NoiseLaw>) -> Result<Self> {
        if laws.is_empty() {
            return Err(Error::InvalidArgument("noise spec needs at least one law".into()));
        }
        for law in &laws {
            law.validate()?;
        }
        Ok(NoiseSpec { laws })
    }

    pub fn dim(&self) -> usize {
        self.laws.len()
    }

    /// The compact support box of the joint law.
    pub fn support(&self) -> Rect {
        let radii: Vec<f64> = self.laws.iter().map(|l| l.support_radius()).collect();
        Rect {
            lo: radii.iter().map(|r| -r).collect(),
            hi: radii,
        }
    }
}

/// A partition of a noise support into congruent cells.
#[derive(Clone, Debug)]
pub struct NoiseCells {
    pub cells: Vec<Rect>,
    /// Largest cell volume in the partition.
    pub maxvol: f64,
    /// Smallest cell volume in the partition.
    pub minvol: f64,
}

impl NoiseCells {
    /// Index of the first cell containing `delta` (the lower-indexed-owner
    /// convention for shared faces), or `None` outside the support.
    pub fn locate(&self, delta: &StateVec) -> Option<usize> {
        self.cells.iter().position(|c| c.contains(delta))
    }
}

/// One joint draw: one sample per coordinate law.
pub fn sample_noise(spec: &NoiseSpec, rng: &mut impl Rng) -> StateVec {
    StateVec(spec.laws.iter().map(|law| law.sample(rng)).collect())
}

/// Splits the support into `k` equal slices per dimension, producing `k^n`
/// cells that tile the support exactly.
pub fn partition_noise_support(spec: &NoiseSpec, k: usize) -> Result<NoiseCells> {
    if k == 0 {
        return Err(Error::InvalidArgument("cell count k must be positive".into()));
    }
    let n = spec.dim();
    let support = spec.support();
    // Per-dimension breakpoints; exact endpoints at both ends.
    let mut edges: Vec<Vec<f64>> = Vec::with_capacity(n);
    for d in 0..n {
        let (lo, hi) = (support.lo[d], support.hi[d]);
        let mut e = Vec::with_capacity(k + 1);
        for j in 0..=k {
            let t = j as f64 / k as f64;
            e.push(lo + t * (hi - lo));
        }
        e[0] = lo;
        e[k] = hi;
        edges.push(e);
    }
    let total = k.checked_pow(n as u32).ok_or_else(|| {
        Error::InvalidArgument(format!("k^n overflows for k={k}, n={n}"))
    })?;
    let mut cells = Vec::with_capacity(total);
    let mut idx = vec![0usize; n];
    'outer: loop {
        let lo: Vec<f64> = (0..n).map(|d| edges[d][idx[d]]).collect();
        let hi: Vec<f64> = (0..n).map(|d| edges[d][idx[d] + 1]).collect();
        cells.push(Rect { lo, hi });
        // Odometer increment over the n-digit base-k counter.
        for d in (0..n).rev() {
            idx[d] += 1;
            if idx[d] < k {
                continue 'outer;
            }
            idx[d] = 0;
        }
        break;
    }
    let (maxvol, minvol) = cells
        .iter()
        .fold((f64::NEG_INFINITY, f64::INFINITY), |(mx, mn), c| {
            let v = c.volume();
            (mx.max(v), mn.min(v))
        });
    Ok(NoiseCells { cells, maxvol, minvol })
}

/// Exact probability that a joint draw lands in `rect` (coordinates are
/// independent, so the mass is a product of per-dimension masses).
pub fn noise_box_mass(spec: &NoiseSpec, rect: &Rect) -> Result<f64> {
    if rect.dim() != spec.dim() {
        return Err(Error::Dimension { expected: spec.dim(), got: rect.dim() });
    }
    Ok(spec
        .laws
        .iter()
        .zip(rect.lo.iter().zip(&rect.hi))
        .map(|(law, (&lo, &hi))| law.mass(lo, hi))
        .product())
}
