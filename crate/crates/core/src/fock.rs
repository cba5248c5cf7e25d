//! Two-mode Fock-space distributions, squeezed-vacuum sources and
//! beam-splitter rotation kernels.
//!
//! Joint outcomes are labelled by the occupations `(N₊, N₋)`. For a fixed
//! total `N = N₊ + N₋` the collective spin projection is
//! `J_z = (N₊ − N₋)/2`, and fixed-`N` vectors are indexed by `N₊`.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // inherent f64 methods exist whenever std is linked
use num_traits::Float;

use crate::math::{binomial, gauss_hermite};
use crate::{Error, Result};

/// Default maximum occupation per mode.
pub const DEFAULT_N_MAX: usize = 20;

/// Largest total atom number a rotation kernel is built for.
pub const MAX_KERNEL_N: usize = 128;

/// Tail mass above which a truncated distribution is flagged.
pub const LEAKAGE_WARNING: f64 = 1e-6;

/// Gauss–Hermite order used to average over squeezing jitter.
pub const JITTER_NODES: usize = 24;

/// Squeezing parameter giving a mean total of 7.5 side-mode atoms
/// (`2 sinh²ξ = 7.5`).
pub fn default_xi() -> f64 {
    libm::asinh(3.75f64.sqrt())
}

/// Documentation default `ξ = Ω t` with `Ω = 2π × 2.2 Hz`, `t = 120 ms`.
pub const XI_OMEGA_T: f64 = 2.0 * core::f64::consts::PI * 2.2 * 0.120;

/// Joint probability grid over `(N₊, N₋)` with `0 ≤ N± ≤ n_max`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TwoModeDistribution {
    n_max: usize,
    grid: Vec<f64>,
    truncated_mass: f64,
}

impl TwoModeDistribution {
    /// All-zero grid (not normalised; fill it with [`set`](Self::set)).
    pub fn zeros(n_max: usize) -> Self {
        Self {
            n_max,
            grid: vec![0.0; (n_max + 1) * (n_max + 1)],
            truncated_mass: 0.0,
        }
    }

    /// Builds a distribution from a row-major grid indexed `[N₊][N₋]`.
    ///
    /// Entries must be non-negative and sum to one within `1e-9`; the grid is
    /// renormalised exactly.
    pub fn from_grid(n_max: usize, grid: Vec<f64>) -> Result<Self> {
        let dim = n_max + 1;
        if grid.len() != dim * dim {
            return Err(Error::Domain("grid size does not match n_max".into()));
        }
        if grid.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::Domain("grid entries must be finite and non-negative".into()));
        }
        let total: f64 = grid.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Domain("grid does not sum to one".into()));
        }
        let mut d = Self {
            n_max,
            grid,
            truncated_mass: 0.0,
        };
        d.normalize();
        Ok(d)
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// Row-major probabilities `[N₊ * (n_max + 1) + N₋]`.
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// Mass that fell outside the grid in truncating operations so far.
    pub fn truncated_mass(&self) -> f64 {
        self.truncated_mass
    }

    /// True once the recorded tail mass exceeds [`LEAKAGE_WARNING`].
    pub fn leakage_warning(&self) -> bool {
        self.truncated_mass > LEAKAGE_WARNING
    }

    pub(crate) fn add_truncated_mass(&mut self, lost: f64) {
        self.truncated_mass += lost;
    }

    #[inline]
    pub fn get(&self, n_plus: usize, n_minus: usize) -> f64 {
        if n_plus > self.n_max || n_minus > self.n_max {
            return 0.0;
        }
        self.grid[n_plus * (self.n_max + 1) + n_minus]
    }

    #[inline]
    pub fn set(&mut self, n_plus: usize, n_minus: usize, p: f64) {
        let dim = self.n_max + 1;
        self.grid[n_plus * dim + n_minus] = p;
    }

    #[inline]
    pub(crate) fn add(&mut self, n_plus: usize, n_minus: usize, p: f64) {
        let dim = self.n_max + 1;
        self.grid[n_plus * dim + n_minus] += p;
    }

    pub fn total(&self) -> f64 {
        self.grid.iter().sum()
    }

    /// Rescales the grid to unit total mass.
    pub fn normalize(&mut self) {
        let t = self.total();
        if t > 0.0 {
            self.grid.iter_mut().for_each(|p| *p /= t);
        }
    }

    /// Marginal distribution of `N₊`.
    pub fn marginal_plus(&self) -> Vec<f64> {
        let dim = self.n_max + 1;
        (0..dim).map(|a| self.grid[a * dim..(a + 1) * dim].iter().sum()).collect()
    }

    /// Marginal distribution of `N₋`.
    pub fn marginal_minus(&self) -> Vec<f64> {
        let dim = self.n_max + 1;
        let mut m = vec![0.0; dim];
        for a in 0..dim {
            for (b, slot) in m.iter_mut().enumerate() {
                *slot += self.grid[a * dim + b];
            }
        }
        m
    }

    /// Distribution of `N = N₊ + N₋`, length `2 n_max + 1`.
    pub fn total_number_marginal(&self) -> Vec<f64> {
        let dim = self.n_max + 1;
        let mut m = vec![0.0; 2 * self.n_max + 1];
        for a in 0..dim {
            for b in 0..dim {
                m[a + b] += self.grid[a * dim + b];
            }
        }
        m
    }

    /// `(⟨N₊⟩, ⟨N₋⟩)`.
    pub fn mean_occupations(&self) -> (f64, f64) {
        let dim = self.n_max + 1;
        let (mut mp, mut mm) = (0.0, 0.0);
        for a in 0..dim {
            for b in 0..dim {
                let p = self.grid[a * dim + b];
                mp += a as f64 * p;
                mm += b as f64 * p;
            }
        }
        (mp, mm)
    }

    /// Probability of an odd total atom number.
    pub fn odd_fraction(&self) -> f64 {
        self.total_number_marginal()
            .iter()
            .enumerate()
            .filter(|(n, _)| n % 2 == 1)
            .map(|(_, p)| p)
            .sum()
    }

    /// Anti-diagonal `N₊ + N₋ = n_total` renormalised to a fixed-`N`
    /// distribution.
    pub fn fixed_n(&self, n_total: usize) -> Result<FixedNDistribution> {
        let probs: Vec<f64> = (0..=n_total).map(|a| self.get(a, n_total - a)).collect();
        let mass: f64 = probs.iter().sum();
        if !(mass > 0.0) {
            return Err(Error::InsufficientData(alloc::format!(
                "no probability mass at N = {n_total}"
            )));
        }
        Ok(FixedNDistribution {
            n_total,
            probs: probs.into_iter().map(|p| p / mass).collect(),
            sample_size: None,
        })
    }
}

/// Distribution of `J_z` at fixed total atom number. `probs[i]` is the
/// probability of `N₊ = i`, i.e. `J_z = i − N/2`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FixedNDistribution {
    pub n_total: usize,
    pub probs: Vec<f64>,
    /// Number of shots the frequencies were estimated from, if empirical.
    pub sample_size: Option<u64>,
}

impl FixedNDistribution {
    /// Validates length, sign and normalisation (within `1e-9`), then
    /// renormalises exactly.
    pub fn new(n_total: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n_total + 1 {
            return Err(Error::Domain("length must be N + 1".into()));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::Domain("probabilities must be finite and non-negative".into()));
        }
        let s: f64 = probs.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::Domain("probabilities do not sum to one".into()));
        }
        Ok(Self {
            n_total,
            probs: probs.into_iter().map(|p| p / s).collect(),
            sample_size: None,
        })
    }

    /// Relative frequencies from counts indexed by `N₊`.
    pub fn from_counts(n_total: usize, counts: &[u64]) -> Result<Self> {
        if counts.len() != n_total + 1 {
            return Err(Error::Domain("length must be N + 1".into()));
        }
        let m: u64 = counts.iter().sum();
        if m == 0 {
            return Err(Error::InsufficientData(alloc::format!("zero shots at N = {n_total}")));
        }
        Ok(Self {
            n_total,
            probs: counts.iter().map(|&c| c as f64 / m as f64).collect(),
            sample_size: Some(m),
        })
    }

    /// Delta distribution at `N₊ = n_plus`.
    pub fn delta(n_total: usize, n_plus: usize) -> Self {
        let mut probs = vec![0.0; n_total + 1];
        probs[n_plus] = 1.0;
        Self {
            n_total,
            probs,
            sample_size: None,
        }
    }

    /// `J_z` value of slot `i`.
    #[inline]
    pub fn jz(&self, i: usize) -> f64 {
        i as f64 - self.n_total as f64 / 2.0
    }

    /// Pushes the distribution through a rotation kernel of the same `N`.
    pub fn rotate(&self, kernel: &RotationKernel) -> Result<Self> {
        if kernel.n_total != self.n_total {
            return Err(Error::Mismatch(self.n_total, kernel.n_total));
        }
        let dim = self.n_total + 1;
        let mut out = vec![0.0; dim];
        for (i, &p) in self.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (o, slot) in out.iter_mut().enumerate() {
                *slot += p * kernel.get(i, o);
            }
        }
        let s: f64 = out.iter().sum();
        out.iter_mut().for_each(|v| *v /= s);
        Ok(Self {
            n_total: self.n_total,
            probs: out,
            sample_size: None,
        })
    }
}

/// Pair source producing a two-mode squeezed vacuum.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SqueezedSource {
    pub xi: f64,
    /// Standard deviation of shot-to-shot Gaussian fluctuations of `xi`;
    /// zero disables the average.
    #[cfg_attr(feature = "serde", serde(default))]
    pub xi_jitter: f64,
}

impl Default for SqueezedSource {
    fn default() -> Self {
        Self {
            xi: default_xi(),
            xi_jitter: 0.0,
        }
    }
}

/// `|n⟩|n⟩`.
pub fn twin_fock(n: usize, n_max: usize) -> Result<TwoModeDistribution> {
    if n > n_max {
        return Err(Error::Capacity {
            what: "pair count",
            value: n,
            limit: n_max,
        });
    }
    let mut d = TwoModeDistribution::zeros(n_max);
    d.set(n, n, 1.0);
    Ok(d)
}

/// Incoherent mixture of Twin-Fock states with weights `pair_probs[n]`
/// (renormalised).
pub fn twin_fock_mixture(pair_probs: &[f64], n_max: usize) -> Result<TwoModeDistribution> {
    if pair_probs.len() > n_max + 1 {
        return Err(Error::Capacity {
            what: "pair count",
            value: pair_probs.len() - 1,
            limit: n_max,
        });
    }
    if pair_probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::Domain("pair weights must be finite and non-negative".into()));
    }
    let s: f64 = pair_probs.iter().sum();
    if !(s > 0.0) {
        return Err(Error::Domain("pair weights sum to zero".into()));
    }
    let mut d = TwoModeDistribution::zeros(n_max);
    for (n, &p) in pair_probs.iter().enumerate() {
        d.set(n, n, p / s);
    }
    Ok(d)
}

/// Untruncated pair-number weights `tanh^{2n}ξ / cosh²ξ` for `n ≤ n_max` and
/// the remaining tail mass.
fn tmsv_pairs(xi: f64, n_max: usize) -> (Vec<f64>, f64) {
    let t2 = libm::tanh(xi).powi(2);
    let head = 1.0 - t2;
    let mut p = Vec::with_capacity(n_max + 1);
    let mut term = head;
    for _ in 0..=n_max {
        p.push(term);
        term *= t2;
    }
    (p, t2.powi(n_max as i32 + 1))
}

/// Diagonal pair distribution of a two-mode squeezed vacuum, truncated at
/// `n_max` pairs and renormalised. The tail mass is stored as
/// [`TwoModeDistribution::truncated_mass`].
pub fn tmsv_distribution(source: &SqueezedSource, n_max: usize) -> Result<TwoModeDistribution> {
    if !(source.xi.is_finite() && source.xi >= 0.0) {
        return Err(Error::Domain("xi must be finite and non-negative".into()));
    }
    if !(source.xi_jitter.is_finite() && source.xi_jitter >= 0.0) {
        return Err(Error::Domain("xi_jitter must be finite and non-negative".into()));
    }
    let (pairs, tail) = if source.xi_jitter > 0.0 {
        let (nodes, weights) = gauss_hermite(JITTER_NODES)?;
        let norm = core::f64::consts::PI.sqrt();
        let mut acc = vec![0.0; n_max + 1];
        let mut tail = 0.0;
        for (x, w) in nodes.iter().zip(&weights) {
            let xi = (source.xi + core::f64::consts::SQRT_2 * source.xi_jitter * x).max(0.0);
            let (p, t) = tmsv_pairs(xi, n_max);
            for (a, v) in acc.iter_mut().zip(&p) {
                *a += w / norm * v;
            }
            tail += w / norm * t;
        }
        (acc, tail)
    } else {
        tmsv_pairs(source.xi, n_max)
    };
    let mut d = twin_fock_mixture(&pairs, n_max)?;
    d.truncated_mass = tail.max(0.0);
    Ok(d)
}

/// Transition probabilities `p(N₊ᵒᵘᵗ | N₊ⁱⁿ)` of a beam-splitter rotation by
/// `θ` at fixed total `N`: the squared Wigner small-d matrix of spin `N/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationKernel {
    pub n_total: usize,
    pub theta: f64,
    /// Row-major `(N+1)×(N+1)`, rows indexed by the input `N₊`.
    matrix: Vec<f64>,
}

impl RotationKernel {
    #[inline]
    pub fn get(&self, n_in: usize, n_out: usize) -> f64 {
        self.matrix[n_in * (self.n_total + 1) + n_out]
    }

    pub fn row(&self, n_in: usize) -> &[f64] {
        let dim = self.n_total + 1;
        &self.matrix[n_in * dim..(n_in + 1) * dim]
    }

    pub fn dim(&self) -> usize {
        self.n_total + 1
    }
}

/// Rotation kernel for even `N`.
pub fn rotation_kernel(n_total: usize, theta: f64) -> Result<RotationKernel> {
    if n_total % 2 == 1 {
        return Err(Error::Domain(alloc::format!(
            "rotation kernel needs even N, got {n_total}"
        )));
    }
    rotation_kernel_any(n_total, theta)
}

/// Rotation kernel for any `N` (half-integer spin for odd `N`).
///
/// Each row is obtained by applying the rotated creation operators
/// `b† = c a₊† − s a₋†` (`N₊` times) and `d† = s a₊† + c a₋†` (`N₋` times)
/// to the vacuum, with `c = cos θ/2`, `s = sin θ/2`, normalising after each
/// step. All intermediate amplitudes stay bounded by one.
pub fn rotation_kernel_any(n_total: usize, theta: f64) -> Result<RotationKernel> {
    if n_total > MAX_KERNEL_N {
        return Err(Error::Capacity {
            what: "kernel N",
            value: n_total,
            limit: MAX_KERNEL_N,
        });
    }
    if !(0.0..=core::f64::consts::PI).contains(&theta) {
        return Err(Error::Domain("theta must lie in [0, pi]".into()));
    }
    let dim = n_total + 1;
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    let sq: Vec<f64> = (0..=dim).map(|k| (k as f64).sqrt()).collect();
    let mut matrix = vec![0.0; dim * dim];
    let mut psi = vec![0.0; dim + 1];
    let mut next = vec![0.0; dim + 1];
    for n_in in 0..dim {
        psi.iter_mut().for_each(|v| *v = 0.0);
        psi[0] = 1.0;
        let mut tot = 0;
        let mut apply = |psi: &mut Vec<f64>, tot: usize, cp: f64, cm: f64, step: usize| {
            next[..tot + 2].iter_mut().for_each(|v| *v = 0.0);
            // psi[a] is the amplitude of |a, tot − a⟩.
            for a in 0..=tot {
                let v = psi[a];
                if v == 0.0 {
                    continue;
                }
                next[a + 1] += cp * sq[a + 1] * v;
                next[a] += cm * sq[tot - a + 1] * v;
            }
            let norm = 1.0 / sq[step + 1];
            for a in 0..tot + 2 {
                psi[a] = next[a] * norm;
            }
        };
        for step in 0..n_in {
            apply(&mut psi, tot, c, -s, step);
            tot += 1;
        }
        for step in 0..n_total - n_in {
            apply(&mut psi, tot, s, c, step);
            tot += 1;
        }
        for n_out in 0..dim {
            matrix[n_in * dim + n_out] = (psi[n_out] * psi[n_out]).clamp(0.0, 1.0);
        }
    }
    Ok(RotationKernel {
        n_total,
        theta,
        matrix,
    })
}

/// Output of a balanced coupling of `|N/2⟩|N/2⟩`: the discrete arcsine law
/// `p(N₊ = 2k) = C(2k,k) C(N−2k, N/2−k) / 2^N`.
pub fn holland_burnett(n_total: usize) -> Result<FixedNDistribution> {
    if n_total % 2 == 1 {
        return Err(Error::Domain(alloc::format!(
            "Twin-Fock input needs even N, got {n_total}"
        )));
    }
    if n_total > MAX_KERNEL_N {
        return Err(Error::Capacity {
            what: "N",
            value: n_total,
            limit: MAX_KERNEL_N,
        });
    }
    let n = n_total / 2;
    let scale = 0.25f64.powi(n as i32);
    let mut probs = vec![0.0; n_total + 1];
    for k in 0..=n {
        probs[2 * k] = binomial(2 * k, k) * binomial(2 * (n - k), n - k) * scale;
    }
    Ok(FixedNDistribution {
        n_total,
        probs,
        sample_size: None,
    })
}

/// First and second moments of `J_z` and the parity `⟨(−1)^{N/2 − J_z}⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CollectiveMoments {
    pub mean_jz: f64,
    pub mean_jz2: f64,
    pub var_jz: f64,
    pub parity: f64,
}

pub fn collective_moments(dist: &FixedNDistribution) -> CollectiveMoments {
    let (mut m1, mut m2, mut par) = (0.0, 0.0, 0.0);
    for (i, &p) in dist.probs.iter().enumerate() {
        let jz = dist.jz(i);
        m1 += p * jz;
        m2 += p * jz * jz;
        // N/2 − J_z = N₋.
        let sign = if (dist.n_total - i) % 2 == 0 { 1.0 } else { -1.0 };
        par += p * sign;
    }
    CollectiveMoments {
        mean_jz: m1,
        mean_jz2: m2,
        var_jz: (m2 - m1 * m1).max(0.0),
        parity: par,
    }
}
