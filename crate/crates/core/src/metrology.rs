//! Fidelity, squeezing, Hellinger distances and Fisher information.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // inherent f64 methods exist whenever std is linked
use num_traits::Float;
use rand::Rng;

use crate::fock::{collective_moments, FixedNDistribution, TwoModeDistribution};
use crate::stats::{weighted_least_squares, LsqOptions, Model, ResamplePlan};
use crate::{Error, Result};

/// Measured `(N₊, N₋)` outcomes of one measurement sequence.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ShotTable {
    pub theta: f64,
    pub rows: Vec<(u32, u32)>,
}

impl ShotTable {
    pub fn new(theta: f64, rows: Vec<(u32, u32)>) -> Result<Self> {
        if !(0.0..=core::f64::consts::PI).contains(&theta) {
            return Err(Error::Domain("theta must lie in [0, pi]".into()));
        }
        Ok(Self { theta, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Counts indexed by `N₊` for the shots with total `n_total`.
    pub fn counts_at(&self, n_total: usize) -> Vec<u64> {
        let mut c = vec![0u64; n_total + 1];
        for &(a, b) in &self.rows {
            if a as usize + b as usize == n_total {
                c[a as usize] += 1;
            }
        }
        c
    }

    /// Number of shots per total atom number.
    pub fn total_histogram(&self) -> Vec<u64> {
        let max = self.rows.iter().map(|&(a, b)| (a + b) as usize).max().unwrap_or(0);
        let mut h = vec![0u64; max + 1];
        for &(a, b) in &self.rows {
            h[(a + b) as usize] += 1;
        }
        h
    }
}

/// Draws `n_shots` independent outcomes from a joint distribution.
pub fn sample_shots<R: Rng + ?Sized>(dist: &TwoModeDistribution, theta: f64, n_shots: usize, rng: &mut R) -> Result<ShotTable> {
    let dim = dist.n_max() + 1;
    let mut cdf = Vec::with_capacity(dim * dim);
    let mut acc = 0.0;
    for &p in dist.grid() {
        acc += p;
        cdf.push(acc);
    }
    let rows = (0..n_shots)
        .map(|_| {
            let u: f64 = rng.random::<f64>() * acc;
            let k = cdf.partition_point(|&c| c <= u).min(dim * dim - 1);
            ((k / dim) as u32, (k % dim) as u32)
        })
        .collect();
    ShotTable::new(theta, rows)
}

/// Relative frequencies of `J_z` among the shots with total `n_total`.
pub fn empirical_distribution(shots: &ShotTable, n_total: usize) -> Result<FixedNDistribution> {
    FixedNDistribution::from_counts(n_total, &shots.counts_at(n_total))
}

fn same_n(p: &FixedNDistribution, q: &FixedNDistribution) -> Result<()> {
    if p.n_total != q.n_total || p.probs.len() != q.probs.len() {
        return Err(Error::Mismatch(p.n_total, q.n_total));
    }
    Ok(())
}

fn bhattacharyya(p: &FixedNDistribution, q: &FixedNDistribution) -> f64 {
    p.probs
        .iter()
        .zip(&q.probs)
        .map(|(a, b)| (a.max(0.0) * b.max(0.0)).sqrt())
        .sum()
}

/// `F = (Σ √(p q))²`.
pub fn fidelity(p: &FixedNDistribution, q: &FixedNDistribution) -> Result<f64> {
    same_n(p, q)?;
    Ok(bhattacharyya(p, q).powi(2).min(1.0))
}

/// `d²_H = ½ Σ (√p − √q)²`.
pub fn hellinger_sq(p: &FixedNDistribution, q: &FixedNDistribution) -> Result<f64> {
    same_n(p, q)?;
    let d: f64 = p
        .probs
        .iter()
        .zip(&q.probs)
        .map(|(a, b)| {
            let d = a.max(0.0).sqrt() - b.max(0.0).sqrt();
            d * d
        })
        .sum();
    Ok((0.5 * d).clamp(0.0, 1.0))
}

/// `½ Σ |p − q|`.
pub fn total_variation(p: &FixedNDistribution, q: &FixedNDistribution) -> Result<f64> {
    same_n(p, q)?;
    Ok(0.5 * p.probs.iter().zip(&q.probs).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// `⟨J_x² + J_y²⟩ = 2⟨J_z²⟩` of a distribution measured after a π/2 coupling.
pub fn jxjy2_estimate(post_hom: &FixedNDistribution) -> f64 {
    2.0 * collective_moments(post_hom).mean_jz2
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Squeezing {
    pub linear: f64,
    /// `10 log₁₀(linear)`; `−∞` for a vanishing variance.
    pub db: f64,
}

/// `ξ²_gen = (N − 1) ΔJ_z² / (⟨J_x² + J_y²⟩ − N/2)`.
pub fn generalized_squeezing(var_jz: f64, jxjy2: f64, n_total: usize) -> Result<Squeezing> {
    let denom = jxjy2 - n_total as f64 / 2.0;
    if !(denom > 0.0) {
        return Err(Error::Domain(alloc::format!(
            "<Jx^2+Jy^2> = {jxjy2} does not exceed N/2 = {}",
            n_total as f64 / 2.0
        )));
    }
    let linear = (n_total as f64 - 1.0) * var_jz.max(0.0) / denom;
    let db = if linear > 0.0 { 10.0 * linear.log10() } else { f64::NEG_INFINITY };
    Ok(Squeezing { linear, db })
}

/// One squared Hellinger distance between the distributions at two angles.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HellingerPoint {
    pub theta1: f64,
    pub theta2: f64,
    pub d2: f64,
    /// Standard deviation from resampling; `None` for exact distributions.
    pub sigma: Option<f64>,
}

/// `d² = (F/8) Δ² + b`, optionally `− (F²/256 − F/192) Δ⁴`.
#[derive(Debug, Clone, Copy)]
struct FisherCurve {
    quartic: bool,
}

impl Model for FisherCurve {
    fn n_params(&self) -> usize {
        2
    }

    fn value(&self, dt: f64, p: &[f64]) -> f64 {
        let d2 = dt * dt;
        let mut v = p[0] / 8.0 * d2 + p[1];
        if self.quartic {
            v -= (p[0] * p[0] / 256.0 - p[0] / 192.0) * d2 * d2;
        }
        v
    }

    fn gradient(&self, dt: f64, p: &[f64], g: &mut [f64]) {
        let d2 = dt * dt;
        g[0] = d2 / 8.0;
        if self.quartic {
            g[0] -= (p[0] / 128.0 - 1.0 / 192.0) * d2 * d2;
        }
        g[1] = 1.0;
    }
}

/// Fisher information at one reference angle.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FisherEntry {
    pub theta1: f64,
    pub f: f64,
    pub f_err: f64,
    pub b: f64,
    pub b_err: f64,
    /// The unconstrained optimum had `F < 0`.
    pub clamped: bool,
}

/// Weighted fit of `F` and `b` to the Hellinger distances of one reference
/// angle.
///
/// Points with a resampling `sigma` are weighted by `1/σ²` and the covariance
/// is used as is. Without uncertainties all points weigh one and the
/// covariance is scaled by the residual variance. A negative `F` is replaced
/// by zero and `b` refitted.
pub fn fit_fisher(points: &[HellingerPoint], quartic: bool) -> Result<FisherEntry> {
    let mut distinct: Vec<f64> = points.iter().map(|p| p.theta2).collect();
    distinct.sort_by(|a, b| a.total_cmp(b));
    distinct.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    if distinct.len() < 3 {
        return Err(Error::InsufficientData("need at least three distinct theta2".into()));
    }
    let theta1 = points[0].theta1;
    let xs: Vec<f64> = points.iter().map(|p| p.theta1 - p.theta2).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.d2).collect();
    let has_sigma = points.iter().all(|p| p.sigma.is_some_and(|s| s > 0.0));
    let ws: Vec<f64> = if has_sigma {
        points.iter().map(|p| 1.0 / p.sigma.unwrap().powi(2)).collect()
    } else {
        vec![1.0; points.len()]
    };
    let model = FisherCurve { quartic };
    let f0 = {
        // Linear start from the quadratic model.
        let lin = weighted_least_squares(&FisherCurve { quartic: false }, &xs, &ys, &ws, &[1.0, 0.0], &LsqOptions::default())?;
        lin.params[0].max(1e-3)
    };
    let fit = weighted_least_squares(&model, &xs, &ys, &ws, &[f0, 0.0], &LsqOptions::default())?;
    let scale = |chi2: f64, dof: usize| {
        if has_sigma {
            1.0
        } else if dof > 0 {
            chi2 / dof as f64
        } else {
            0.0
        }
    };
    if fit.params[0] >= 0.0 {
        let s = scale(fit.chi2, fit.dof);
        return Ok(FisherEntry {
            theta1,
            f: fit.params[0],
            f_err: (fit.covariance[0] * s).max(0.0).sqrt(),
            b: fit.params[1],
            b_err: (fit.covariance[3] * s).max(0.0).sqrt(),
            clamped: false,
        });
    }
    let wsum: f64 = ws.iter().sum();
    let b = ws.iter().zip(&ys).map(|(w, y)| w * y).sum::<f64>() / wsum;
    let chi2: f64 = ws.iter().zip(&ys).map(|(w, y)| w * (y - b).powi(2)).sum();
    let s = scale(chi2, ys.len() - 1);
    Ok(FisherEntry {
        theta1,
        f: 0.0,
        f_err: (fit.covariance[0] * scale(fit.chi2, fit.dof)).max(0.0).sqrt(),
        b,
        b_err: (s / wsum).sqrt(),
        clamped: true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FisherAggregate {
    pub f_bar: f64,
    pub f_bar_err: f64,
}

/// Weighted mean with `w = (F/ΔF)²` and error `√(Σ w² ΔF²) / Σ w`. Entries
/// with zero uncertainty fall back to an unweighted mean.
pub fn aggregate_fisher(entries: &[FisherEntry]) -> Result<FisherAggregate> {
    if entries.is_empty() {
        return Err(Error::InsufficientData("no Fisher entries".into()));
    }
    if entries.len() == 1 {
        return Ok(FisherAggregate {
            f_bar: entries[0].f,
            f_bar_err: entries[0].f_err,
        });
    }
    let all_err = entries.iter().all(|e| e.f_err > 0.0);
    let ws: Vec<f64> = entries
        .iter()
        .map(|e| if all_err { (e.f / e.f_err).powi(2) } else { 1.0 })
        .collect();
    let wsum: f64 = ws.iter().sum();
    if !(wsum > 0.0) {
        let m = entries.iter().map(|e| e.f).sum::<f64>() / entries.len() as f64;
        return Ok(FisherAggregate { f_bar: m, f_bar_err: 0.0 });
    }
    let f_bar = ws.iter().zip(entries).map(|(w, e)| w * e.f).sum::<f64>() / wsum;
    let f_bar_err = ws
        .iter()
        .zip(entries)
        .map(|(w, e)| (w * e.f_err).powi(2))
        .sum::<f64>()
        .sqrt()
        / wsum;
    Ok(FisherAggregate { f_bar, f_bar_err })
}

/// `F̄(N) = r (N^s / 2 + N)`.
#[derive(Debug, Clone, Copy)]
struct ScalingCurve;

impl Model for ScalingCurve {
    fn n_params(&self) -> usize {
        2
    }

    fn value(&self, n: f64, p: &[f64]) -> f64 {
        p[0] * (n.powf(p[1]) / 2.0 + n)
    }

    fn gradient(&self, n: f64, p: &[f64], g: &mut [f64]) {
        let ns = n.powf(p[1]);
        g[0] = ns / 2.0 + n;
        g[1] = p[0] * ns * n.ln() / 2.0;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScalingFit {
    pub r: f64,
    pub s: f64,
    pub r_err: f64,
    pub s_err: f64,
    /// Row-major covariance of `(r, s)`.
    pub covariance: [f64; 4],
}

impl ScalingFit {
    pub fn value(&self, n: f64) -> f64 {
        ScalingCurve.value(n, &[self.r, self.s])
    }

    /// Delta-method band `value ± z·σ` at `n` (`z = 1` for 68 %).
    pub fn band(&self, n: f64, z: f64) -> (f64, f64) {
        let mut g = [0.0; 2];
        ScalingCurve.gradient(n, &[self.r, self.s], &mut g);
        let c = &self.covariance;
        let var = g[0] * g[0] * c[0] + 2.0 * g[0] * g[1] * c[1] + g[1] * g[1] * c[3];
        let v = self.value(n);
        let d = z * var.max(0.0).sqrt();
        (v - d, v + d)
    }
}

/// Weighted fit of the scaling law. `errors` may be empty (unit weights and
/// residual-scaled covariance).
pub fn fit_scaling(ns: &[f64], f_bar: &[f64], errors: &[f64]) -> Result<ScalingFit> {
    if ns.len() < 3 || ns.len() != f_bar.len() {
        return Err(Error::InsufficientData("need at least three atom numbers".into()));
    }
    let weighted = errors.len() == ns.len() && errors.iter().all(|e| *e > 0.0);
    let ws: Vec<f64> = if weighted {
        errors.iter().map(|e| 1.0 / (e * e)).collect()
    } else {
        vec![1.0; ns.len()]
    };
    let fit = weighted_least_squares(&ScalingCurve, ns, f_bar, &ws, &[1.0, 2.0], &LsqOptions::default())?;
    if !fit.converged || !fit.params.iter().all(|p| p.is_finite()) {
        return Err(Error::NotConverged {
            context: "scaling fit",
            best: fit.params,
            best_value: fit.chi2,
        });
    }
    let scale = if weighted || fit.dof == 0 { 1.0 } else { fit.chi2 / fit.dof as f64 };
    let c: [f64; 4] = [
        fit.covariance[0] * scale,
        fit.covariance[1] * scale,
        fit.covariance[2] * scale,
        fit.covariance[3] * scale,
    ];
    Ok(ScalingFit {
        r: fit.params[0],
        s: fit.params[1],
        r_err: c[0].max(0.0).sqrt(),
        s_err: c[3].max(0.0).sqrt(),
        covariance: c,
    })
}

/// Which angle pairs enter the Fisher fits.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FisherOptions {
    pub quartic: bool,
    /// Every pair touching one of these `(N, θ)` points is dropped.
    pub exclude: Vec<(usize, f64)>,
    /// Keep the `θ₂ = θ₁` point (`d² ≈ 0`, or the resampling bias).
    pub include_self: bool,
    /// Reference angles; empty means every measured angle.
    pub theta1: Vec<f64>,
}

impl Default for FisherOptions {
    fn default() -> Self {
        Self {
            quartic: false,
            exclude: Vec::new(),
            include_self: true,
            theta1: Vec::new(),
        }
    }
}

impl FisherOptions {
    /// The point beyond the non-differentiable angle of the 14-atom state.
    pub const N14_EXCLUSION: (usize, f64) = (14, 0.35);

    fn excluded(&self, n: usize, theta: f64) -> bool {
        self.exclude.iter().any(|&(en, et)| en == n && (et - theta).abs() < 1e-9)
    }

    fn is_reference(&self, theta: f64) -> bool {
        self.theta1.is_empty() || self.theta1.iter().any(|t| (t - theta).abs() < 1e-9)
    }
}

/// Distributions of one atom number at several angles.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AngleSeries {
    pub n_total: usize,
    pub thetas: Vec<f64>,
    pub dists: Vec<FixedNDistribution>,
}

impl AngleSeries {
    /// Per-angle empirical distributions at `n_total`.
    pub fn from_shots(tables: &[ShotTable], n_total: usize) -> Result<Self> {
        let dists = tables
            .iter()
            .map(|t| empirical_distribution(t, n_total))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            n_total,
            thetas: tables.iter().map(|t| t.theta).collect(),
            dists,
        })
    }

    fn pairs(&self, opts: &FisherOptions) -> Vec<(usize, Vec<usize>)> {
        let n = self.n_total;
        let k = self.thetas.len();
        (0..k)
            .filter(|&i| opts.is_reference(self.thetas[i]) && !opts.excluded(n, self.thetas[i]))
            .map(|i| {
                let js = (0..k)
                    .filter(|&j| (opts.include_self || j != i) && !opts.excluded(n, self.thetas[j]))
                    .collect();
                (i, js)
            })
            .collect()
    }

    /// Hellinger distances computed directly from the distributions, grouped
    /// by reference angle.
    pub fn exact_points(&self, opts: &FisherOptions) -> Result<Vec<Vec<HellingerPoint>>> {
        self.pairs(opts)
            .into_iter()
            .map(|(i, js)| {
                js.into_iter()
                    .map(|j| {
                        Ok(HellingerPoint {
                            theta1: self.thetas[i],
                            theta2: self.thetas[j],
                            d2: hellinger_sq(&self.dists[i], &self.dists[j])?,
                            sigma: None,
                        })
                    })
                    .collect()
            })
            .collect()
    }

    /// Mean and standard deviation of the Hellinger distances over
    /// multinomial resamples of every angle (sample sizes as measured). A
    /// `θ₂ = θ₁` point compares two independent resamples, so it carries the
    /// resampling bias.
    pub fn resampled_points(&self, opts: &FisherOptions, n_samples: usize, seed: u64) -> Result<Vec<Vec<HellingerPoint>>> {
        let plan = ResamplePlan::new(self.dists.clone(), n_samples, seed)?;
        let twin = ResamplePlan::new(self.dists.clone(), n_samples, seed ^ 0x5eed_0f_7e1f)?;
        let pairs = self.pairs(opts);
        let mut sum: Vec<Vec<(f64, f64)>> = pairs.iter().map(|(_, js)| vec![(0.0, 0.0); js.len()]).collect();
        for (s, t) in plan.iter().zip(twin.iter()) {
            for (slot, (i, js)) in sum.iter_mut().zip(&pairs) {
                for (acc, &j) in slot.iter_mut().zip(js) {
                    let other = if j == *i { &t[j] } else { &s[j] };
                    let d = hellinger_sq(&s[*i], other)?;
                    acc.0 += d;
                    acc.1 += d * d;
                }
            }
        }
        let m = n_samples.max(1) as f64;
        Ok(pairs
            .iter()
            .zip(sum)
            .map(|((i, js), acc)| {
                js.iter()
                    .zip(acc)
                    .map(|(&j, (s1, s2))| {
                        let mean = s1 / m;
                        let var = (s2 / m - mean * mean).max(0.0);
                        HellingerPoint {
                            theta1: self.thetas[*i],
                            theta2: self.thetas[j],
                            d2: mean,
                            sigma: Some(var.sqrt()),
                        }
                    })
                    .collect()
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FisherAtN {
    pub n_total: usize,
    pub points: Vec<Vec<HellingerPoint>>,
    pub entries: Vec<FisherEntry>,
    pub aggregate: FisherAggregate,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FisherEstimate {
    pub per_n: Vec<FisherAtN>,
    pub scaling: ScalingFit,
}

/// Per-`N` fits, weighted averages and the scaling fit, from Hellinger
/// points already grouped by reference angle.
pub fn fisher_from_points(points: Vec<(usize, Vec<Vec<HellingerPoint>>)>, quartic: bool) -> Result<FisherEstimate> {
    let mut per_n = Vec::new();
    for (n, groups) in points {
        let entries = groups
            .iter()
            .filter(|g| !g.is_empty())
            .map(|g| fit_fisher(g, quartic))
            .filter_map(|r| match r {
                Err(Error::InsufficientData(_)) => None,
                other => Some(other),
            })
            .collect::<Result<Vec<_>>>()?;
        let aggregate = aggregate_fisher(&entries)?;
        per_n.push(FisherAtN {
            n_total: n,
            points: groups,
            entries,
            aggregate,
        });
    }
    let ns: Vec<f64> = per_n.iter().map(|p| p.n_total as f64).collect();
    let fb: Vec<f64> = per_n.iter().map(|p| p.aggregate.f_bar).collect();
    let fe: Vec<f64> = per_n.iter().map(|p| p.aggregate.f_bar_err).collect();
    let scaling = fit_scaling(&ns, &fb, &fe)?;
    Ok(FisherEstimate { per_n, scaling })
}

/// Fisher analysis on exact distributions (no sampling).
pub fn fisher_exact(series: &[AngleSeries], opts: &FisherOptions) -> Result<FisherEstimate> {
    let pts = series
        .iter()
        .map(|s| Ok((s.n_total, s.exact_points(opts)?)))
        .collect::<Result<Vec<_>>>()?;
    fisher_from_points(pts, opts.quartic)
}

/// Fisher analysis on measured distributions with resampled Hellinger
/// distances.
pub fn fisher_resampled(series: &[AngleSeries], opts: &FisherOptions, n_samples: usize, seed: u64) -> Result<FisherEstimate> {
    let pts = series
        .iter()
        .enumerate()
        .map(|(k, s)| Ok((s.n_total, s.resampled_points(opts, n_samples, seed.wrapping_add(k as u64))?)))
        .collect::<Result<Vec<_>>>()?;
    fisher_from_points(pts, opts.quartic)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{holland_burnett, rotation_kernel};
    use crate::stats::stream_rng;
    use proptest::prelude::*;

    fn ideal(n: usize, theta: f64) -> FixedNDistribution {
        FixedNDistribution::delta(n, n / 2)
            .rotate(&rotation_kernel(n, theta).unwrap())
            .unwrap()
    }

    #[test]
    fn fidelity_and_hellinger_examples() {
        let p = holland_burnett(6).unwrap();
        assert!((fidelity(&p, &p).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(hellinger_sq(&p, &p).unwrap(), 0.0);
        let a = FixedNDistribution::delta(4, 0);
        let b = FixedNDistribution::delta(4, 3);
        assert_eq!(fidelity(&a, &b).unwrap(), 0.0);
        assert_eq!(hellinger_sq(&a, &b).unwrap(), 1.0);
        assert!(fidelity(&a, &p).is_err());
        let d = hellinger_sq(&ideal(2, 0.0), &ideal(2, 0.1)).unwrap();
        assert!((d - 5.0e-3).abs() < 0.05 * 5.0e-3);
    }

    #[test]
    fn squeezing_examples() {
        let s = generalized_squeezing(0.0, 12.0, 6).unwrap();
        assert_eq!(s.linear, 0.0);
        assert_eq!(s.db, f64::NEG_INFINITY);
        let s = generalized_squeezing(0.0176, 1.892, 2).unwrap();
        assert!((s.linear - 0.0176 / 0.892).abs() < 1e-12);
        assert!((s.db + 17.05).abs() < 0.05);
        assert!(generalized_squeezing(0.1, 1.0, 2).is_err());
    }

    #[test]
    fn jxjy2_examples() {
        for n in (2..=20).step_by(2) {
            let j = n as f64 / 2.0;
            assert!((jxjy2_estimate(&holland_burnett(n).unwrap()) - j * (j + 1.0)).abs() < 1e-10);
        }
        assert_eq!(jxjy2_estimate(&FixedNDistribution::delta(6, 3)), 0.0);
    }

    #[test]
    fn empirical_distribution_examples() {
        let t = ShotTable::new(0.0, vec![(2, 2); 10]).unwrap();
        assert_eq!(empirical_distribution(&t, 4).unwrap().probs, vec![0.0, 0.0, 1.0, 0.0, 0.0]);
        assert!(empirical_distribution(&t, 6).is_err());
        // Sampling a Holland-Burnett state.
        let hb = holland_burnett(10).unwrap();
        let mut g = TwoModeDistribution::zeros(10);
        for (i, p) in hb.probs.iter().enumerate() {
            g.set(i, 10 - i, *p);
        }
        let mut rng = stream_rng(11, 0);
        let s = sample_shots(&g, 1.0, 3816, &mut rng).unwrap();
        let e = empirical_distribution(&s, 10).unwrap();
        assert_eq!(e.sample_size, Some(3816));
        assert!(total_variation(&e, &hb).unwrap() < 0.05);
    }

    #[test]
    fn fisher_fit_recovers_exact_quadratic() {
        let pts: Vec<HellingerPoint> = [0.0, 0.14, 0.2, 0.28, 0.35]
            .iter()
            .map(|&t| HellingerPoint {
                theta1: 0.0,
                theta2: t,
                d2: 0.5 * t * t,
                sigma: None,
            })
            .collect();
        let e = fit_fisher(&pts, false).unwrap();
        assert!((e.f - 4.0).abs() < 1e-9 && e.b.abs() < 1e-9);
        assert!(fit_fisher(&pts[..2], false).is_err());
    }

    #[test]
    fn fisher_quartic_on_ideal_small_angles() {
        let thetas = [0.0, 0.05, 0.1, 0.15, 0.2];
        for n in (2..=14).step_by(2) {
            let series = AngleSeries {
                n_total: n,
                thetas: thetas.to_vec(),
                dists: thetas.iter().map(|&t| ideal(n, t)).collect(),
            };
            let opts = FisherOptions {
                quartic: true,
                theta1: vec![0.0],
                ..Default::default()
            };
            let pts = series.exact_points(&opts).unwrap();
            let e = fit_fisher(&pts[0], true).unwrap();
            let want = (n * n) as f64 / 2.0 + n as f64;
            assert!((e.f - want).abs() < 0.05 * want, "N={n}: {} vs {want}", e.f);
        }
    }

    #[test]
    fn aggregate_examples() {
        let e = |f: f64, err: f64| FisherEntry {
            theta1: 0.0,
            f,
            f_err: err,
            b: 0.0,
            b_err: 0.0,
            clamped: false,
        };
        let a = aggregate_fisher(&[e(3.0, 0.5)]).unwrap();
        assert_eq!((a.f_bar, a.f_bar_err), (3.0, 0.5));
        // Equal relative uncertainty gives equal weights.
        let a = aggregate_fisher(&[e(2.0, 0.2), e(4.0, 0.4)]).unwrap();
        assert!((a.f_bar - 3.0).abs() < 1e-12);
        let b = aggregate_fisher(&[e(2.0, 2.0), e(4.0, 4.0)]).unwrap();
        assert!((a.f_bar - b.f_bar).abs() < 1e-12);
        assert!(aggregate_fisher(&[]).is_err());
    }

    #[test]
    fn scaling_fit_examples() {
        let ns: Vec<f64> = (2..=14).step_by(2).map(|n| n as f64).collect();
        let ideal: Vec<f64> = ns.iter().map(|n| n * n / 2.0 + n).collect();
        let f = fit_scaling(&ns, &ideal, &[]).unwrap();
        assert!((f.r - 1.0).abs() < 1e-6 && (f.s - 2.0).abs() < 1e-6);
        let classical = ns.clone();
        let f = fit_scaling(&ns, &classical, &[]).unwrap();
        assert!((f.r - 2.0 / 3.0).abs() < 1e-6 && (f.s - 1.0).abs() < 1e-6);
        let noisy: Vec<f64> = ns.iter().map(|n| 0.58 * (n.powf(1.95) / 2.0 + n)).collect();
        let errs: Vec<f64> = noisy.iter().map(|v| 0.1 * v).collect();
        let f = fit_scaling(&ns, &noisy, &errs).unwrap();
        let (lo, hi) = f.band(12.0, 1.0);
        assert!(lo < f.value(12.0) && f.value(12.0) < hi);
        assert!((f.s - 1.95).abs() < 1e-6);
    }

    #[test]
    fn resampled_hellinger_bias_is_positive() {
        let thetas = [0.0, 0.14, 0.2];
        let dists: Vec<FixedNDistribution> = thetas
            .iter()
            .map(|&t| FixedNDistribution {
                sample_size: Some(300),
                ..ideal(6, t)
            })
            .collect();
        let series = AngleSeries {
            n_total: 6,
            thetas: thetas.to_vec(),
            dists,
        };
        let opts = FisherOptions {
            include_self: false,
            ..Default::default()
        };
        let exact = series.exact_points(&opts).unwrap();
        let res = series.resampled_points(&opts, 400, 3).unwrap();
        for (e, r) in exact.iter().flatten().zip(res.iter().flatten()) {
            assert!(r.d2 >= e.d2);
            assert!(r.sigma.unwrap() > 0.0);
        }
        let with_self = series.resampled_points(&FisherOptions::default(), 400, 3).unwrap();
        // At θ = 0 the distribution is a single outcome and resamples agree.
        for row in &with_self[1..] {
            let own = row.iter().find(|p| p.theta1 == p.theta2).unwrap();
            assert!(own.d2 > 0.0 && own.sigma.unwrap() > 0.0);
        }
    }

    fn random_dist(n: usize) -> impl Strategy<Value = FixedNDistribution> {
        proptest::collection::vec(0.0f64..1.0, n + 1).prop_filter_map("zero", move |v| {
            let s: f64 = v.iter().sum();
            (s > 1e-6).then(|| FixedNDistribution::new(n, v.iter().map(|x| x / s).collect()).unwrap())
        })
    }

    proptest! {
        #[test]
        fn bhattacharyya_identity(p in random_dist(8), q in random_dist(8)) {
            let f = fidelity(&p, &q).unwrap();
            let d = hellinger_sq(&p, &q).unwrap();
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert!((f - (1.0 - d).powi(2)).abs() < 1e-12);
            prop_assert!((hellinger_sq(&q, &p).unwrap() - d).abs() < 1e-15);
        }

        #[test]
        fn hellinger_root_is_a_metric(p in random_dist(5), q in random_dist(5), r in random_dist(5)) {
            let h = |a: &FixedNDistribution, b: &FixedNDistribution| hellinger_sq(a, b).unwrap().sqrt();
            prop_assert!(h(&p, &r) <= h(&p, &q) + h(&q, &r) + 1e-12);
        }

        #[test]
        fn aggregate_invariant_under_error_rescaling(
            fs in proptest::collection::vec(1.0f64..50.0, 2..6),
            rel in proptest::collection::vec(0.01f64..0.5, 6),
            k in 0.1f64..10.0,
        ) {
            let mk = |scale: f64| -> Vec<FisherEntry> {
                fs.iter().zip(&rel).map(|(&f, &r)| FisherEntry { theta1: 0.0, f, f_err: f * r * scale, b: 0.0, b_err: 0.0, clamped: false }).collect()
            };
            let a = aggregate_fisher(&mk(1.0)).unwrap();
            let b = aggregate_fisher(&mk(k)).unwrap();
            prop_assert!((a.f_bar - b.f_bar).abs() < 1e-9 * a.f_bar);
        }
    }
}
