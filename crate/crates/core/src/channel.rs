//! Probabilistic measurement-noise channel.
//!
//! An ideal joint distribution is transformed by, in order: rotation within
//! each fixed-`N` subspace, Poisson influx, binomial loss, calibration skew
//! and detection blur. After the rotation every stage acts on the two modes
//! independently, so it is represented by one single-mode transition matrix
//! `T[n][m] = P(m | n)` per mode and applied as `G' = T₊ᵀ G T₋`.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // inherent f64 methods exist whenever std is linked
use num_traits::Float;

use crate::fock::{rotation_kernel_any, twin_fock_mixture, RotationKernel, TwoModeDistribution};
use crate::math::{binomial_pmf, normal_interval_mass, poisson_pmf};
use crate::metrology::ShotTable;
use crate::stats::{differential_evolution_batch, BatchExecutor, DeOptions, Serial};
use crate::{Error, Result};

/// Gaussian detection-noise law of one mode: the peak of `n` atoms has width
/// `σ_n = √(σ₀² + c₁² n)` atoms. `g` and `b` locate the peaks in camera
/// counts and do not enter the channel.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BlurLaw {
    pub sigma0: f64,
    pub c1: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub g: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub b: f64,
}

impl BlurLaw {
    /// `m_F = −1` detector.
    pub const MINUS: Self = Self {
        sigma0: 0.1466,
        c1: 0.0114,
        g: 975.8,
        b: 0.0,
    };
    /// `m_F = +1` detector.
    pub const PLUS: Self = Self {
        sigma0: 0.168,
        c1: 0.027,
        g: 832.5,
        b: 0.0,
    };
    /// Perfect counting.
    pub const NONE: Self = Self {
        sigma0: 0.0,
        c1: 0.0,
        g: 1.0,
        b: 0.0,
    };

    /// Peak width in atoms for `n` atoms.
    pub fn sigma(&self, n: usize) -> f64 {
        (self.sigma0 * self.sigma0 + self.c1 * self.c1 * n as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BlurParams {
    pub minus: BlurLaw,
    pub plus: BlurLaw,
}

impl Default for BlurParams {
    fn default() -> Self {
        Self {
            minus: BlurLaw::MINUS,
            plus: BlurLaw::PLUS,
        }
    }
}

/// The four fitted channel parameters plus the fixed skew and blur settings.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NoiseModelParams {
    pub a_plus: f64,
    pub a_minus: f64,
    pub l_plus: f64,
    pub l_minus: f64,
    pub skew: f64,
    pub blur: BlurParams,
}

impl Default for NoiseModelParams {
    /// Parameters fitted to the reference experiment.
    fn default() -> Self {
        Self {
            a_plus: 0.0551,
            a_minus: 0.0218,
            l_plus: 4.2e-4,
            l_minus: 0.011,
            skew: 1.052,
            blur: BlurParams::default(),
        }
    }
}

impl NoiseModelParams {
    /// Every stage switched off.
    pub fn noiseless() -> Self {
        Self {
            a_plus: 0.0,
            a_minus: 0.0,
            l_plus: 0.0,
            l_minus: 0.0,
            skew: 1.0,
            blur: BlurParams {
                minus: BlurLaw::NONE,
                plus: BlurLaw::NONE,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.a_plus >= 0.0
            && self.a_minus >= 0.0
            && (0.0..=1.0).contains(&self.l_plus)
            && (0.0..=1.0).contains(&self.l_minus)
            && self.skew > 0.0
            && self.skew.is_finite()
            && self.a_plus.is_finite()
            && self.a_minus.is_finite();
        let blur_ok = [self.blur.minus, self.blur.plus]
            .iter()
            .all(|l| l.sigma0 >= 0.0 && l.c1 >= 0.0 && l.sigma0.is_finite() && l.c1.is_finite());
        if ok && blur_ok {
            Ok(())
        } else {
            Err(Error::Domain("invalid noise parameters".into()))
        }
    }

    /// `[a₊, a₋, l₊, l₋]`.
    pub fn free(&self) -> [f64; 4] {
        [self.a_plus, self.a_minus, self.l_plus, self.l_minus]
    }

    pub fn with_free(&self, p: &[f64]) -> Self {
        Self {
            a_plus: p[0],
            a_minus: p[1],
            l_plus: p[2],
            l_minus: p[3],
            ..*self
        }
    }
}

/// Per-`N` rotation kernels for a grid, built once per angle.
#[derive(Debug, Clone)]
pub struct RotationCache {
    pub theta: f64,
    kernels: Vec<RotationKernel>,
}

impl RotationCache {
    pub fn new(n_max: usize, theta: f64) -> Result<Self> {
        let kernels = (0..=2 * n_max)
            .map(|n| rotation_kernel_any(n, theta))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { theta, kernels })
    }
}

/// Rotates every fixed-`N` anti-diagonal by `theta`.
pub fn apply_rotation(dist: &TwoModeDistribution, theta: f64) -> Result<TwoModeDistribution> {
    apply_rotation_cached(dist, &RotationCache::new(dist.n_max(), theta)?)
}

/// [`apply_rotation`] with precomputed kernels. Output occupations beyond
/// `n_max` are dropped and added to the truncated mass.
pub fn apply_rotation_cached(dist: &TwoModeDistribution, cache: &RotationCache) -> Result<TwoModeDistribution> {
    let n_max = dist.n_max();
    if cache.kernels.len() < 2 * n_max + 1 {
        return Err(Error::Mismatch(2 * n_max, cache.kernels.len().saturating_sub(1)));
    }
    let mut out = TwoModeDistribution::zeros(n_max);
    out.add_truncated_mass(dist.truncated_mass());
    let mut lost = 0.0;
    for n in 0..=2 * n_max {
        let lo = n.saturating_sub(n_max);
        let hi = n.min(n_max);
        if (lo..=hi).all(|a| dist.get(a, n - a) == 0.0) {
            continue;
        }
        let k = &cache.kernels[n];
        for a in lo..=hi {
            let p = dist.get(a, n - a);
            if p == 0.0 {
                continue;
            }
            for (o, &t) in k.row(a).iter().enumerate() {
                if o <= n_max && n - o <= n_max {
                    out.add(o, n - o, p * t);
                } else {
                    lost += p * t;
                }
            }
        }
    }
    finish(out, lost)
}

fn finish(mut out: TwoModeDistribution, lost: f64) -> Result<TwoModeDistribution> {
    let total = out.total();
    if !(total > 0.0) {
        return Err(Error::Domain("all probability mass left the grid".into()));
    }
    let lost_frac = lost / (total + lost);
    out.add_truncated_mass(lost_frac.max(0.0));
    out.normalize();
    Ok(out)
}

/// Applies single-mode transition matrices (`(n_max+1)²`, row = input).
/// Rows may sum to less than one; the missing mass is recorded as truncated.
pub fn apply_mode_maps(dist: &TwoModeDistribution, t_plus: &[f64], t_minus: &[f64]) -> Result<TwoModeDistribution> {
    let dim = dist.n_max() + 1;
    let g = dist.grid();
    // tmp = G · T₋
    let mut tmp = vec![0.0; dim * dim];
    for a in 0..dim {
        for b in 0..dim {
            let p = g[a * dim + b];
            if p == 0.0 {
                continue;
            }
            let row = &t_minus[b * dim..(b + 1) * dim];
            let dst = &mut tmp[a * dim..(a + 1) * dim];
            for (d, &t) in dst.iter_mut().zip(row) {
                *d += p * t;
            }
        }
    }
    let mut out = TwoModeDistribution::zeros(dist.n_max());
    out.add_truncated_mass(dist.truncated_mass());
    for a in 0..dim {
        for o in 0..dim {
            let t = t_plus[a * dim + o];
            if t == 0.0 {
                continue;
            }
            for b in 0..dim {
                out.add(o, b, t * tmp[a * dim + b]);
            }
        }
    }
    let before = dist.total();
    let lost = (before - out.total()).max(0.0);
    finish(out, lost)
}

/// Additive `Poisson(a)` counts; mass above `n_max` is truncated.
pub fn influx_matrix(a: f64, n_max: usize) -> Vec<f64> {
    let dim = n_max + 1;
    let pmf: Vec<f64> = (0..dim).map(|k| poisson_pmf(a, k)).collect();
    let mut t = vec![0.0; dim * dim];
    for n in 0..dim {
        for m in n..dim {
            t[n * dim + m] = pmf[m - n];
        }
    }
    t
}

/// Each atom survives with probability `1 − l`.
pub fn loss_matrix(l: f64, n_max: usize) -> Vec<f64> {
    let dim = n_max + 1;
    let mut t = vec![0.0; dim * dim];
    for n in 0..dim {
        for m in 0..=n {
            t[n * dim + m] = binomial_pmf(n, m, 1.0 - l);
        }
    }
    t
}

/// Single-step miscount probability implied by a calibration asymmetry
/// `N₋ ≈ skew · N₊`, and whether `N₋` is the over-counted mode.
///
/// The shift probability is read as `√skew − 1` for `skew ≥ 1` and mirrored
/// (`1/√skew − 1`, roles of the modes swapped) below one.
pub fn skew_shift_probability(skew: f64) -> (f64, bool) {
    if skew >= 1.0 {
        (skew.sqrt() - 1.0, true)
    } else {
        (1.0 / skew.sqrt() - 1.0, false)
    }
}

/// Shift matrices `(T₊, T₋)` of the calibration skew. Shifts past either
/// grid edge are clamped so no probability is lost.
pub fn skew_matrices(skew: f64, n_max: usize) -> (Vec<f64>, Vec<f64>) {
    let dim = n_max + 1;
    let (q, minus_over) = skew_shift_probability(skew);
    let q = q.clamp(0.0, 1.0);
    let shift = |up: bool| {
        let mut t = vec![0.0; dim * dim];
        for n in 0..dim {
            let m = if up { (n + 1).min(n_max) } else { n.saturating_sub(1) };
            t[n * dim + n] += 1.0 - q;
            t[n * dim + m] += q;
        }
        t
    };
    if minus_over {
        (shift(false), shift(true))
    } else {
        (shift(true), shift(false))
    }
}

/// `P(m | n)`: mass of `N(n, σ_n)` (atoms) in the quantisation interval
/// `[m − ½, m + ½)`; the first interval extends to `−∞` and the last to `+∞`.
pub fn blur_matrix(law: &BlurLaw, n_max: usize) -> Vec<f64> {
    let dim = n_max + 1;
    let mut t = vec![0.0; dim * dim];
    for n in 0..dim {
        let s = law.sigma(n);
        for m in 0..dim {
            let lo = if m == 0 { f64::NEG_INFINITY } else { m as f64 - 0.5 };
            let hi = if m == n_max { f64::INFINITY } else { m as f64 + 0.5 };
            t[n * dim + m] = normal_interval_mass(n as f64, s, lo, hi);
        }
    }
    t
}

pub fn convolve_poisson_influx(dist: &TwoModeDistribution, a_plus: f64, a_minus: f64) -> Result<TwoModeDistribution> {
    if !(a_plus >= 0.0 && a_minus >= 0.0) {
        return Err(Error::Domain("influx means must be non-negative".into()));
    }
    let n = dist.n_max();
    apply_mode_maps(dist, &influx_matrix(a_plus, n), &influx_matrix(a_minus, n))
}

pub fn convolve_binomial_loss(dist: &TwoModeDistribution, l_plus: f64, l_minus: f64) -> Result<TwoModeDistribution> {
    if !((0.0..=1.0).contains(&l_plus) && (0.0..=1.0).contains(&l_minus)) {
        return Err(Error::Domain("loss probabilities must lie in [0, 1]".into()));
    }
    let n = dist.n_max();
    apply_mode_maps(dist, &loss_matrix(l_plus, n), &loss_matrix(l_minus, n))
}

pub fn apply_calibration_skew(dist: &TwoModeDistribution, skew: f64) -> Result<TwoModeDistribution> {
    if !(skew > 0.0 && skew.is_finite()) {
        return Err(Error::Domain("skew must be positive".into()));
    }
    let (tp, tm) = skew_matrices(skew, dist.n_max());
    apply_mode_maps(dist, &tp, &tm)
}

pub fn apply_detection_blur(dist: &TwoModeDistribution, blur: &BlurParams) -> Result<TwoModeDistribution> {
    let n = dist.n_max();
    apply_mode_maps(dist, &blur_matrix(&blur.plus, n), &blur_matrix(&blur.minus, n))
}

fn matmul(a: &[f64], b: &[f64], dim: usize) -> Vec<f64> {
    let mut c = vec![0.0; dim * dim];
    for i in 0..dim {
        for k in 0..dim {
            let v = a[i * dim + k];
            if v == 0.0 {
                continue;
            }
            for j in 0..dim {
                c[i * dim + j] += v * b[k * dim + j];
            }
        }
    }
    c
}

/// Influx, loss, skew and blur for one mode, composed in that order.
pub(crate) fn mode_chain(a: f64, l: f64, skew_t: &[f64], blur_t: &[f64], n_max: usize) -> Vec<f64> {
    let dim = n_max + 1;
    let t = matmul(&influx_matrix(a, n_max), &loss_matrix(l, n_max), dim);
    let t = matmul(&t, skew_t, dim);
    matmul(&t, blur_t, dim)
}

/// Full channel on an ideal distribution.
pub fn predict(ideal: &TwoModeDistribution, theta: f64, params: &NoiseModelParams) -> Result<TwoModeDistribution> {
    let cache = RotationCache::new(ideal.n_max(), theta)?;
    predict_cached(ideal, &cache, params)
}

pub fn predict_cached(
    ideal: &TwoModeDistribution,
    cache: &RotationCache,
    params: &NoiseModelParams,
) -> Result<TwoModeDistribution> {
    params.validate()?;
    let rotated = apply_rotation_cached(ideal, cache)?;
    PostRotation::new(params, ideal.n_max()).apply(&rotated, params)
}

/// Skew and blur matrices, which stay fixed while the four free parameters
/// vary.
#[derive(Debug, Clone)]
struct PostRotation {
    n_max: usize,
    skew_plus: Vec<f64>,
    skew_minus: Vec<f64>,
    blur_plus: Vec<f64>,
    blur_minus: Vec<f64>,
}

impl PostRotation {
    fn new(params: &NoiseModelParams, n_max: usize) -> Self {
        let (skew_plus, skew_minus) = skew_matrices(params.skew, n_max);
        Self {
            n_max,
            skew_plus,
            skew_minus,
            blur_plus: blur_matrix(&params.blur.plus, n_max),
            blur_minus: blur_matrix(&params.blur.minus, n_max),
        }
    }

    fn apply(&self, rotated: &TwoModeDistribution, p: &NoiseModelParams) -> Result<TwoModeDistribution> {
        let tp = mode_chain(p.a_plus, p.l_plus, &self.skew_plus, &self.blur_plus, self.n_max);
        let tm = mode_chain(p.a_minus, p.l_minus, &self.skew_minus, &self.blur_minus, self.n_max);
        apply_mode_maps(rotated, &tp, &tm)
    }
}

/// Squared Hellinger distance between two grids of equal size.
pub fn hellinger_grid(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p
        .iter()
        .zip(q)
        .map(|(a, b)| {
            let d = a.max(0.0).sqrt() - b.max(0.0).sqrt();
            d * d
        })
        .sum::<f64>()
}

/// Settings of the channel fit.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ChannelFitOptions {
    pub n_max: usize,
    pub de: DeOptions,
    /// Search box for `[a₊, a₋, l₊, l₋]`.
    pub bounds: [(f64, f64); 4],
}

impl Default for ChannelFitOptions {
    fn default() -> Self {
        Self {
            n_max: crate::fock::DEFAULT_N_MAX,
            de: DeOptions::default(),
            bounds: [(0.0, 0.3), (0.0, 0.3), (0.0, 0.1), (0.0, 0.1)],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AngleFit {
    pub theta: f64,
    /// `[a₊, a₋, l₊, l₋]`.
    pub params: [f64; 4],
    pub objective: f64,
    pub generations: usize,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ChannelFit {
    pub per_angle: Vec<AngleFit>,
    pub mean: [f64; 4],
    /// Sample standard deviation across angles (zero for a single angle).
    pub std: [f64; 4],
    /// Pair-number distribution used as the source.
    pub source_pairs: Vec<f64>,
    pub params: NoiseModelParams,
}

/// Source pair distribution from the recorded total atom numbers of all
/// datasets: a shot with `N` atoms counts towards `⌊N/2⌋` pairs.
pub fn estimate_source_pairs(data: &[ShotTable], n_max: usize) -> Result<Vec<f64>> {
    let mut h = vec![0.0; n_max + 1];
    let mut total = 0.0;
    for t in data {
        for &(a, b) in &t.rows {
            let n = (a as usize + b as usize) / 2;
            if n <= n_max {
                h[n] += 1.0;
                total += 1.0;
            }
        }
    }
    if total == 0.0 {
        return Err(Error::InsufficientData("no shots inside the grid".into()));
    }
    h.iter_mut().for_each(|v| *v /= total);
    Ok(h)
}

/// Relative frequencies over the full `(N₊, N₋)` grid; shots outside the
/// grid are ignored.
pub fn empirical_grid(table: &ShotTable, n_max: usize) -> Result<Vec<f64>> {
    let dim = n_max + 1;
    let mut g = vec![0.0; dim * dim];
    let mut m = 0.0;
    for &(a, b) in &table.rows {
        let (a, b) = (a as usize, b as usize);
        if a <= n_max && b <= n_max {
            g[a * dim + b] += 1.0;
            m += 1.0;
        }
    }
    if m == 0.0 {
        return Err(Error::InsufficientData("no shots inside the grid".into()));
    }
    g.iter_mut().for_each(|v| *v /= m);
    Ok(g)
}

/// Hellinger objective for one angle.
pub struct AngleObjective {
    rotated: TwoModeDistribution,
    post: PostRotation,
    target: Vec<f64>,
    base: NoiseModelParams,
}

impl AngleObjective {
    pub fn new(ideal: &TwoModeDistribution, table: &ShotTable, base: &NoiseModelParams) -> Result<Self> {
        let n_max = ideal.n_max();
        let cache = RotationCache::new(n_max, table.theta)?;
        Ok(Self {
            rotated: apply_rotation_cached(ideal, &cache)?,
            post: PostRotation::new(base, n_max),
            target: empirical_grid(table, n_max)?,
            base: *base,
        })
    }

    /// `d²_H` between model and data at free parameters `[a₊, a₋, l₊, l₋]`.
    pub fn eval(&self, free: &[f64]) -> f64 {
        let p = self.base.with_free(free);
        match self.post.apply(&self.rotated, &p) {
            Ok(m) => hellinger_grid(m.grid(), &self.target),
            Err(_) => f64::INFINITY,
        }
    }
}

/// Fits `a±, l±` separately for every dataset by differential evolution.
pub fn fit(params0: &NoiseModelParams, data: &[ShotTable], opts: &ChannelFitOptions) -> Result<ChannelFit> {
    fit_with(params0, data, opts, &Serial)
}

/// [`fit`] with a caller-supplied executor for population evaluation.
pub fn fit_with<E: BatchExecutor + ?Sized>(
    params0: &NoiseModelParams,
    data: &[ShotTable],
    opts: &ChannelFitOptions,
    exec: &E,
) -> Result<ChannelFit> {
    if data.is_empty() {
        return Err(Error::InsufficientData("no datasets".into()));
    }
    params0.validate()?;
    let pairs = estimate_source_pairs(data, opts.n_max)?;
    let ideal = twin_fock_mixture(&pairs, opts.n_max)?;
    let mut per_angle = Vec::with_capacity(data.len());
    for (i, table) in data.iter().enumerate() {
        let obj = AngleObjective::new(&ideal, table, params0)?;
        let de = DeOptions {
            seed: opts.de.seed.wrapping_add(i as u64),
            ..opts.de.clone()
        };
        let f = |x: &[f64]| obj.eval(x);
        let res = differential_evolution_batch(
            |pop: &[Vec<f64>], out: &mut [f64]| exec.evaluate(&f, pop, out),
            &opts.bounds,
            &de,
        )?;
        if !res.converged {
            return Err(Error::NotConverged {
                context: "channel fit",
                best: res.best,
                best_value: res.best_value,
            });
        }
        per_angle.push(AngleFit {
            theta: table.theta,
            params: [res.best[0], res.best[1], res.best[2], res.best[3]],
            objective: res.best_value,
            generations: res.generations,
        });
    }
    let k = per_angle.len() as f64;
    let mut mean = [0.0; 4];
    let mut std = [0.0; 4];
    for j in 0..4 {
        mean[j] = per_angle.iter().map(|a| a.params[j]).sum::<f64>() / k;
        if per_angle.len() > 1 {
            let v = per_angle.iter().map(|a| (a.params[j] - mean[j]).powi(2)).sum::<f64>() / (k - 1.0);
            std[j] = v.sqrt();
        }
    }
    Ok(ChannelFit {
        per_angle,
        mean,
        std,
        source_pairs: pairs,
        params: params0.with_free(&mean),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{holland_burnett, tmsv_distribution, twin_fock, SqueezedSource};
    use core::f64::consts::PI;
    use proptest::prelude::*;

    fn sample_dist() -> TwoModeDistribution {
        let mut d = tmsv_distribution(&SqueezedSource { xi: 0.9, xi_jitter: 0.0 }, 12).unwrap();
        d = apply_rotation(&d, 0.4).unwrap();
        d
    }

    #[test]
    fn rotation_examples() {
        let d = sample_dist();
        let same = apply_rotation(&d, 0.0).unwrap();
        for (a, b) in same.grid().iter().zip(d.grid()) {
            assert!((a - b).abs() < 1e-15);
        }
        let mix = twin_fock_mixture(&[0.1, 0.2, 0.3, 0.4], 10).unwrap();
        let r = apply_rotation(&mix, PI / 2.0).unwrap();
        for n in [2usize, 4, 6] {
            let hb = holland_burnett(n).unwrap();
            let f = r.fixed_n(n).unwrap();
            for (a, b) in f.probs.iter().zip(&hb.probs) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        let r = apply_rotation(&twin_fock(1, 4).unwrap(), PI / 2.0).unwrap();
        assert!((r.get(2, 0) - 0.5).abs() < 1e-15 && (r.get(0, 2) - 0.5).abs() < 1e-15);
        // Total-N marginal unchanged when nothing leaves the grid.
        let (m0, m1) = (mix.total_number_marginal(), apply_rotation(&mix, 1.0).unwrap().total_number_marginal());
        for (a, b) in m0.iter().zip(&m1) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rotation_records_truncation() {
        let d = twin_fock(8, 10).unwrap();
        let r = apply_rotation(&d, PI / 2.0).unwrap();
        assert!(r.truncated_mass() > 0.0);
        assert!((r.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn influx_examples() {
        let vac = twin_fock(0, 20).unwrap();
        let r = convolve_poisson_influx(&vac, 0.0551, 0.0).unwrap();
        assert!((r.get(1, 0) - 0.0551 * (-0.0551f64).exp()).abs() < 1e-15);
        assert!((r.get(1, 0) - 0.05215).abs() < 1e-5);
        let d = sample_dist();
        let id = convolve_poisson_influx(&d, 0.0, 0.0).unwrap();
        for (a, b) in id.grid().iter().zip(d.grid()) {
            assert!((a - b).abs() < 1e-15);
        }
        let big = tmsv_distribution(&SqueezedSource { xi: 0.6, xi_jitter: 0.0 }, 30).unwrap();
        let (p0, m0) = big.mean_occupations();
        let (p1, m1) = convolve_poisson_influx(&big, 0.3, 0.7).unwrap().mean_occupations();
        assert!((p1 - p0 - 0.3).abs() < 1e-9 && (m1 - m0 - 0.7).abs() < 1e-9);
    }

    #[test]
    fn loss_examples() {
        let mut d = TwoModeDistribution::zeros(4);
        d.set(2, 0, 1.0);
        let r = convolve_binomial_loss(&d, 0.5, 0.0).unwrap();
        assert!((r.get(0, 0) - 0.25).abs() < 1e-15);
        assert!((r.get(1, 0) - 0.5).abs() < 1e-15);
        assert!((r.get(2, 0) - 0.25).abs() < 1e-15);
        let s = sample_dist();
        let (_, m0) = s.mean_occupations();
        let (_, m1) = convolve_binomial_loss(&s, 0.0, 0.011).unwrap().mean_occupations();
        assert!((m1 - 0.989 * m0).abs() < 1e-12);
        assert!(convolve_binomial_loss(&s, 1.5, 0.0).is_err());
    }

    #[test]
    fn skew_matches_two_coin_enumeration() {
        let d = twin_fock(4, 10).unwrap();
        let r = apply_calibration_skew(&d, 1.052).unwrap();
        let q = 1.052f64.sqrt() - 1.0;
        assert!((q - 0.0257).abs() < 1e-4);
        // Coins: N₊ → N₊ − 1 and N₋ → N₋ + 1, independently.
        assert!((r.get(3, 5) - q * q).abs() < 1e-15);
        assert!((r.get(3, 4) - q * (1.0 - q)).abs() < 1e-15);
        assert!((r.get(4, 5) - q * (1.0 - q)).abs() < 1e-15);
        assert!((r.get(4, 4) - (1.0 - q) * (1.0 - q)).abs() < 1e-15);
        assert!((r.total() - 1.0).abs() < 1e-12);
        let id = apply_calibration_skew(&d, 1.0).unwrap();
        assert_eq!(id.get(4, 4), 1.0);
        // Clamped at the edges.
        let edge = apply_calibration_skew(&twin_fock(0, 3).unwrap(), 1.3).unwrap();
        assert!((edge.total() - 1.0).abs() < 1e-15);
        assert_eq!(edge.get(0, 0) + edge.get(0, 1), 1.0);
    }

    #[test]
    fn blur_examples() {
        let law = BlurLaw {
            sigma0: 0.1466,
            ..BlurLaw::MINUS
        };
        let t = blur_matrix(&law, 20);
        // n = 0 can only be miscounted upwards.
        let miss = 1.0 - t[0];
        let one_sided = crate::math::normal_cdf(-0.5 / 0.1466);
        assert!((miss - one_sided).abs() < 1e-15);
        assert!((2.0 * one_sided - 6.6e-4).abs() < 0.03 * 6.6e-4);
        assert!(t[12 * 21 + 12] > 0.79);
        let t = blur_matrix(&BlurLaw::NONE, 20);
        for n in 0..21 {
            assert_eq!(t[n * 21 + n], 1.0);
        }
    }

    #[test]
    fn predict_limits() {
        let mix = twin_fock_mixture(&[0.2, 0.3, 0.3, 0.2], 20).unwrap();
        let p = predict(&mix, 0.0, &NoiseModelParams::noiseless()).unwrap();
        for (a, b) in p.grid().iter().zip(mix.grid()) {
            assert!((a - b).abs() < 1e-15);
        }
        let p = predict(&mix, PI / 2.0, &NoiseModelParams::noiseless()).unwrap();
        let r = apply_rotation(&mix, PI / 2.0).unwrap();
        for (a, b) in p.grid().iter().zip(r.grid()) {
            assert!((a - b).abs() < 1e-15);
        }
        // Checkerboard: odd occupations empty.
        for a in 0..=20 {
            for b in 0..=20 {
                if a % 2 == 1 || b % 2 == 1 {
                    assert!(p.get(a, b) < 1e-20);
                }
            }
        }
        let noisy = predict(&mix, 0.0, &NoiseModelParams::default()).unwrap();
        assert!(noisy.odd_fraction() > 0.05);
    }

    #[test]
    fn staged_and_fused_pipelines_agree() {
        let mix = twin_fock_mixture(&[0.2, 0.3, 0.3, 0.2], 12).unwrap();
        let p = NoiseModelParams::default();
        let mut s = apply_rotation(&mix, 0.28).unwrap();
        s = convolve_poisson_influx(&s, p.a_plus, p.a_minus).unwrap();
        s = convolve_binomial_loss(&s, p.l_plus, p.l_minus).unwrap();
        s = apply_calibration_skew(&s, p.skew).unwrap();
        s = apply_detection_blur(&s, &p.blur).unwrap();
        let f = predict(&mix, 0.28, &p).unwrap();
        for (a, b) in s.grid().iter().zip(f.grid()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    proptest! {
        #[test]
        fn stages_conserve_probability(
            ap in 0.0f64..0.5, am in 0.0f64..0.5,
            lp in 0.0f64..1.0, lm in 0.0f64..1.0,
            skew in 0.8f64..1.2, theta in 0.0f64..PI,
        ) {
            let d = apply_rotation(&sample_dist(), theta).unwrap();
            let stages = [
                convolve_poisson_influx(&d, ap, am).unwrap(),
                convolve_binomial_loss(&d, lp, lm).unwrap(),
                apply_calibration_skew(&d, skew).unwrap(),
                apply_detection_blur(&d, &BlurParams::default()).unwrap(),
            ];
            for s in &stages {
                prop_assert!((s.total() - 1.0).abs() < 1e-12);
                prop_assert!(s.grid().iter().all(|p| *p >= 0.0));
            }
        }
    }
}
