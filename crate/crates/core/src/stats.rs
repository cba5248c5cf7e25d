//! Resampling, asymmetric errors, confidence minima, weighted least squares
//! and differential evolution.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // inherent f64 methods exist whenever std is linked
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use crate::fock::FixedNDistribution;
use crate::math::invert_spd;
use crate::{Error, Result};

/// Default number of Monte Carlo resamples.
pub const DEFAULT_RESAMPLES: usize = 10_000;

/// Generator for stream `stream` of a seeded family. Streams are independent
/// and each is reproducible on its own, so parallel consumers stay
/// deterministic.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws multinomial counts for `n` trials by sequential conditional
/// binomials.
pub fn sample_multinomial<R: Rng + ?Sized>(rng: &mut R, probs: &[f64], n: u64) -> Vec<u64> {
    let mut out = vec![0u64; probs.len()];
    let mut left = n;
    let mut rest: f64 = probs.iter().sum();
    for (i, &p) in probs.iter().enumerate() {
        if left == 0 {
            break;
        }
        if i + 1 == probs.len() {
            out[i] = left;
            break;
        }
        let q = if rest > 0.0 { (p / rest).clamp(0.0, 1.0) } else { 0.0 };
        let k = if q >= 1.0 {
            left
        } else if q <= 0.0 {
            0
        } else {
            Binomial::new(left, q).map(|b| b.sample(rng)).unwrap_or(0)
        };
        out[i] = k;
        left -= k;
        rest -= p;
    }
    out
}

/// Multinomial resampling of a set of measured distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct ResamplePlan {
    pub n_samples: usize,
    pub seed: u64,
    /// Measured distributions; each needs a `sample_size`.
    pub sets: Vec<FixedNDistribution>,
}

impl ResamplePlan {
    pub fn new(sets: Vec<FixedNDistribution>, n_samples: usize, seed: u64) -> Result<Self> {
        for s in &sets {
            if s.sample_size.unwrap_or(0) == 0 {
                return Err(Error::InsufficientData(alloc::format!(
                    "N = {} has no sample size",
                    s.n_total
                )));
            }
        }
        Ok(Self { n_samples, seed, sets })
    }

    /// Resample `index`: one multinomial redraw of every set, with the same
    /// sample sizes as measured.
    pub fn sample(&self, index: usize) -> Vec<FixedNDistribution> {
        let mut rng = stream_rng(self.seed, index as u64);
        self.sets
            .iter()
            .map(|s| {
                let m = s.sample_size.unwrap_or(0);
                let counts = sample_multinomial(&mut rng, &s.probs, m);
                FixedNDistribution::from_counts(s.n_total, &counts)
                    .expect("positive sample size")
            })
            .collect()
    }

    /// All resamples in index order.
    pub fn iter(&self) -> impl Iterator<Item = Vec<FixedNDistribution>> + '_ {
        (0..self.n_samples).map(move |i| self.sample(i))
    }
}

/// Upper and lower standard deviations `(Δ₊, Δ₋)` with
/// `Δ±² = (2/M) Σ_{±side} (v − v̄)²`; values equal to the mean count on the
/// upper side.
pub fn asymmetric_std(values: &[f64]) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(Error::InsufficientData("need at least two values".into()));
    }
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let (mut up, mut down) = (0.0, 0.0);
    for &v in values {
        let d = v - mean;
        if d >= 0.0 {
            up += d * d;
        } else {
            down += d * d;
        }
    }
    Ok(((2.0 * up / m).sqrt(), (2.0 * down / m).sqrt()))
}

/// Largest `k` such that at least a fraction `level` of the samples satisfy
/// `k_i ≥ k`.
pub fn depth_confidence(samples: &[usize], level: f64) -> Result<usize> {
    if samples.is_empty() {
        return Err(Error::InsufficientData("no depth samples".into()));
    }
    if !(0.0..=1.0).contains(&level) {
        return Err(Error::Domain("level must lie in [0, 1]".into()));
    }
    let mut s = samples.to_vec();
    s.sort_unstable_by(|a, b| b.cmp(a));
    let need = ((level * s.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    Ok(s[need.min(s.len()) - 1])
}

/// A scalar model `y = f(x; θ)` for least squares.
pub trait Model {
    fn n_params(&self) -> usize;

    fn value(&self, x: f64, params: &[f64]) -> f64;

    /// `∂f/∂θ` at `x`. Defaults to central differences.
    fn gradient(&self, x: f64, params: &[f64], grad: &mut [f64]) {
        let mut p = params.to_vec();
        for k in 0..params.len() {
            let h = 1e-6 * params[k].abs().max(1e-3);
            p[k] = params[k] + h;
            let fp = self.value(x, &p);
            p[k] = params[k] - h;
            let fm = self.value(x, &p);
            p[k] = params[k];
            grad[k] = (fp - fm) / (2.0 * h);
        }
    }
}

/// Options for [`weighted_least_squares`].
#[derive(Debug, Clone, PartialEq)]
pub struct LsqOptions {
    pub max_iter: usize,
    pub lambda0: f64,
    /// Relative change in `χ²` that ends the iteration.
    pub tol: f64,
    /// Parameters held at their initial value.
    pub fixed: Vec<bool>,
}

impl Default for LsqOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            lambda0: 1e-3,
            tol: 1e-14,
            fixed: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsqFit {
    pub params: Vec<f64>,
    /// `(Jᵀ W J)⁻¹` over all parameters; rows and columns of fixed
    /// parameters are zero.
    pub covariance: Vec<f64>,
    pub chi2: f64,
    pub dof: usize,
    pub iterations: usize,
    pub converged: bool,
}

impl LsqFit {
    /// Standard error of parameter `k` from the unscaled covariance.
    pub fn std_err(&self, k: usize) -> f64 {
        let n = self.params.len();
        self.covariance[k * n + k].max(0.0).sqrt()
    }
}

/// Jacobian rows `∂f(x_i)/∂θ`, row-major `len(xs) × n_params`.
pub fn jacobian<M: Model + ?Sized>(model: &M, xs: &[f64], params: &[f64]) -> Vec<f64> {
    let p = model.n_params();
    let mut j = vec![0.0; xs.len() * p];
    for (i, &x) in xs.iter().enumerate() {
        model.gradient(x, params, &mut j[i * p..(i + 1) * p]);
    }
    j
}

fn chi2<M: Model + ?Sized>(model: &M, xs: &[f64], ys: &[f64], w: &[f64], params: &[f64]) -> f64 {
    xs.iter()
        .zip(ys)
        .zip(w)
        .map(|((&x, &y), &w)| {
            let r = y - model.value(x, params);
            w * r * r
        })
        .sum()
}

/// Levenberg–Marquardt minimisation of `Σ wᵢ (yᵢ − f(xᵢ; θ))²`.
pub fn weighted_least_squares<M: Model + ?Sized>(
    model: &M,
    xs: &[f64],
    ys: &[f64],
    weights: &[f64],
    p0: &[f64],
    opts: &LsqOptions,
) -> Result<LsqFit> {
    let np = model.n_params();
    if p0.len() != np || xs.len() != ys.len() || xs.len() != weights.len() {
        return Err(Error::Domain("inconsistent least-squares input".into()));
    }
    let free: Vec<usize> = (0..np)
        .filter(|&k| !opts.fixed.get(k).copied().unwrap_or(false))
        .collect();
    let nf = free.len();
    if xs.len() < nf {
        return Err(Error::InsufficientData("fewer points than parameters".into()));
    }
    let mut params = p0.to_vec();
    let mut cost = chi2(model, xs, ys, weights, &params);
    if !cost.is_finite() {
        return Err(Error::Domain("non-finite objective at start".into()));
    }
    let mut lambda = opts.lambda0;
    let mut converged = false;
    let mut iterations = 0;
    let mut grad = vec![0.0; np];
    while iterations < opts.max_iter {
        iterations += 1;
        let mut jtj = vec![0.0; nf * nf];
        let mut jtr = vec![0.0; nf];
        for ((&x, &y), &w) in xs.iter().zip(ys).zip(weights) {
            model.gradient(x, &params, &mut grad);
            let r = y - model.value(x, &params);
            for (a, &ka) in free.iter().enumerate() {
                jtr[a] += w * grad[ka] * r;
                for (b, &kb) in free.iter().enumerate() {
                    jtj[a * nf + b] += w * grad[ka] * grad[kb];
                }
            }
        }
        let mut improved = false;
        for _ in 0..30 {
            let mut damped = jtj.clone();
            for a in 0..nf {
                damped[a * nf + a] += lambda * jtj[a * nf + a].max(1e-300);
            }
            let step = match crate::math::solve_spd(&damped, &jtr, nf) {
                Ok(s) => s,
                Err(_) => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let mut trial = params.clone();
            for (a, &k) in free.iter().enumerate() {
                trial[k] += step[a];
            }
            let c = chi2(model, xs, ys, weights, &trial);
            if c.is_finite() && c <= cost {
                let rel = (cost - c) / cost.max(1e-300);
                params = trial;
                cost = c;
                lambda = (lambda / 10.0).max(1e-12);
                improved = true;
                if rel < opts.tol || cost < 1e-300 {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            // No downhill step at any damping: at a minimum to working precision.
            converged = true;
        }
        if converged {
            break;
        }
    }

    let mut jtj = vec![0.0; nf * nf];
    for (&x, &w) in xs.iter().zip(weights) {
        model.gradient(x, &params, &mut grad);
        for (a, &ka) in free.iter().enumerate() {
            for (b, &kb) in free.iter().enumerate() {
                jtj[a * nf + b] += w * grad[ka] * grad[kb];
            }
        }
    }
    let inv = invert_spd(&jtj, nf).map_err(|_| Error::Singular("normal equations"))?;
    let mut covariance = vec![0.0; np * np];
    for (a, &ka) in free.iter().enumerate() {
        for (b, &kb) in free.iter().enumerate() {
            covariance[ka * np + kb] = inv[a * nf + b];
        }
    }
    Ok(LsqFit {
        params,
        covariance,
        chi2: cost,
        dof: xs.len() - nf,
        iterations,
        converged,
    })
}

/// Evaluates an objective on a batch of points. Implementations may run the
/// evaluations concurrently; results must land in `out` in input order.
pub trait BatchExecutor {
    fn evaluate(&self, f: &(dyn Fn(&[f64]) -> f64 + Sync), points: &[Vec<f64>], out: &mut [f64]);
}

/// Evaluates points one after another.
#[derive(Debug, Clone, Copy, Default)]
pub struct Serial;

impl BatchExecutor for Serial {
    fn evaluate(&self, f: &(dyn Fn(&[f64]) -> f64 + Sync), points: &[Vec<f64>], out: &mut [f64]) {
        for (x, o) in points.iter().zip(out.iter_mut()) {
            *o = f(x);
        }
    }
}

/// Differential evolution settings (`rand/1/bin`).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DeOptions {
    /// Population size per dimension.
    pub pop_factor: usize,
    pub mutation: f64,
    pub crossover: f64,
    pub max_generations: usize,
    /// Stop when the population's objective spread is below
    /// `atol + tol·|mean|`.
    pub tol: f64,
    pub atol: f64,
    pub seed: u64,
}

impl Default for DeOptions {
    fn default() -> Self {
        Self {
            pop_factor: 15,
            mutation: 0.8,
            crossover: 0.9,
            max_generations: 2000,
            tol: 1e-6,
            atol: 1e-12,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeResult {
    pub best: Vec<f64>,
    pub best_value: f64,
    pub generations: usize,
    pub converged: bool,
    /// Best objective after each generation (index 0 is the initial
    /// population).
    pub trace: Vec<f64>,
}

/// Differential evolution with a per-point objective.
pub fn differential_evolution<F>(objective: F, bounds: &[(f64, f64)], opts: &DeOptions) -> Result<DeResult>
where
    F: Fn(&[f64]) -> f64,
{
    differential_evolution_batch(
        |pop: &[Vec<f64>], out: &mut [f64]| {
            for (x, o) in pop.iter().zip(out.iter_mut()) {
                *o = objective(x);
            }
        },
        bounds,
        opts,
    )
}

/// Differential evolution where each generation's candidates are scored in
/// one call, so the caller may evaluate them in parallel. Candidates are
/// generated before and selected after the batch call, so the result does
/// not depend on evaluation order.
pub fn differential_evolution_batch<F>(
    mut evaluate: F,
    bounds: &[(f64, f64)],
    opts: &DeOptions,
) -> Result<DeResult>
where
    F: FnMut(&[Vec<f64>], &mut [f64]),
{
    let dim = bounds.len();
    if dim == 0 {
        return Err(Error::Domain("no parameters".into()));
    }
    if bounds.iter().any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi)) {
        return Err(Error::Domain("bounds must be finite with lo <= hi".into()));
    }
    let np = (opts.pop_factor * dim).max(5);
    let mut rng = stream_rng(opts.seed, 0);
    let mut pop: Vec<Vec<f64>> = (0..np)
        .map(|_| {
            bounds
                .iter()
                .map(|&(lo, hi)| lo + (hi - lo) * rng.random::<f64>())
                .collect()
        })
        .collect();
    let mut fit = vec![0.0; np];
    evaluate(&pop, &mut fit);
    sanitize(&mut fit);
    let best_of = |fit: &[f64]| {
        let mut b = 0;
        for i in 1..fit.len() {
            if fit[i] < fit[b] {
                b = i;
            }
        }
        b
    };
    let mut trace = vec![fit[best_of(&fit)]];
    let mut trials = pop.clone();
    let mut trial_fit = vec![0.0; np];
    let mut converged = spread_ok(&fit, opts);
    let mut generations = 0;
    while !converged && generations < opts.max_generations {
        generations += 1;
        for i in 0..np {
            let (a, b, c) = distinct3(&mut rng, np, i);
            let jrand = rng.random_range(0..dim);
            for k in 0..dim {
                trials[i][k] = if k == jrand || rng.random::<f64>() < opts.crossover {
                    let v = pop[a][k] + opts.mutation * (pop[b][k] - pop[c][k]);
                    let (lo, hi) = bounds[k];
                    if v < lo || v > hi {
                        // Resample uniformly between the parent and the bound.
                        let u: f64 = rng.random();
                        if v < lo {
                            lo + u * (pop[i][k] - lo)
                        } else {
                            hi - u * (hi - pop[i][k])
                        }
                    } else {
                        v
                    }
                } else {
                    pop[i][k]
                };
            }
        }
        evaluate(&trials, &mut trial_fit);
        sanitize(&mut trial_fit);
        for i in 0..np {
            if trial_fit[i] <= fit[i] {
                pop[i].copy_from_slice(&trials[i]);
                fit[i] = trial_fit[i];
            }
        }
        trace.push(fit[best_of(&fit)]);
        converged = spread_ok(&fit, opts);
    }
    let b = best_of(&fit);
    Ok(DeResult {
        best: pop[b].clone(),
        best_value: fit[b],
        generations,
        converged,
        trace,
    })
}

fn sanitize(v: &mut [f64]) {
    for x in v {
        if !x.is_finite() {
            *x = f64::INFINITY;
        }
    }
}

fn spread_ok(fit: &[f64], opts: &DeOptions) -> bool {
    if fit.iter().any(|f| !f.is_finite()) {
        return false;
    }
    let n = fit.len() as f64;
    let mean = fit.iter().sum::<f64>() / n;
    let var = fit.iter().map(|f| (f - mean) * (f - mean)).sum::<f64>() / n;
    var.sqrt() <= opts.atol + opts.tol * mean.abs()
}

fn distinct3<R: Rng>(rng: &mut R, n: usize, exclude: usize) -> (usize, usize, usize) {
    let mut pick = |taken: &[usize]| loop {
        let r = rng.random_range(0..n);
        if !taken.contains(&r) {
            return r;
        }
    };
    let a = pick(&[exclude]);
    let b = pick(&[exclude, a]);
    let c = pick(&[exclude, a, b]);
    (a, b, c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn asymmetric_examples() {
        let (u, d) = asymmetric_std(&[-1.0, 1.0]).unwrap();
        assert_eq!(u, d);
        let (u, d) = asymmetric_std(&[0.0, 0.0, 3.0]).unwrap();
        assert!((u * u - 8.0 / 3.0).abs() < 1e-12);
        assert!((d * d - 4.0 / 3.0).abs() < 1e-12);
        assert_eq!(asymmetric_std(&[2.0, 2.0, 2.0]).unwrap(), (0.0, 0.0));
        assert!(asymmetric_std(&[1.0]).is_err());
    }

    #[test]
    fn depth_confidence_examples() {
        assert_eq!(depth_confidence(&[8; 50], 0.68).unwrap(), 8);
        assert_eq!(depth_confidence(&[8; 50], 0.95).unwrap(), 8);
        let s: Vec<usize> = (1..=100).collect();
        // 68 of 100 samples are >= 33.
        assert_eq!(depth_confidence(&s, 0.68).unwrap(), 33);
        assert_eq!(depth_confidence(&s, 0.95).unwrap(), 6);
    }

    #[test]
    fn multinomial_delta_and_reproducibility() {
        let delta = FixedNDistribution {
            n_total: 4,
            probs: vec![0.0, 0.0, 1.0, 0.0, 0.0],
            sample_size: Some(100),
        };
        let plan = ResamplePlan::new(vec![delta.clone()], 5, 3).unwrap();
        for s in plan.iter() {
            assert_eq!(s[0].probs, delta.probs);
        }
        let hb = FixedNDistribution {
            sample_size: Some(500),
            ..crate::fock::holland_burnett(6).unwrap()
        };
        let plan = ResamplePlan::new(vec![hb], 10, 42).unwrap();
        assert_eq!(plan.sample(7), plan.sample(7));
        assert_ne!(plan.sample(7), plan.sample(8));
    }

    #[test]
    fn resampled_mean_converges() {
        let probs = vec![0.1, 0.2, 0.3, 0.25, 0.15];
        let dist = FixedNDistribution {
            n_total: 4,
            probs: probs.clone(),
            sample_size: Some(200),
        };
        let plug = crate::fock::collective_moments(&dist);
        let plan = ResamplePlan::new(vec![dist], 4000, 9).unwrap();
        let means: Vec<f64> = plan
            .iter()
            .map(|s| crate::fock::collective_moments(&s[0]).mean_jz)
            .collect();
        let m = means.iter().sum::<f64>() / means.len() as f64;
        let sd = (plug.var_jz / 200.0).sqrt();
        assert!((m - plug.mean_jz).abs() < 3.0 * sd / (4000f64).sqrt());
    }

    struct Line;
    impl Model for Line {
        fn n_params(&self) -> usize {
            2
        }
        fn value(&self, x: f64, p: &[f64]) -> f64 {
            p[0] + p[1] * x
        }
    }

    struct FisherQuad;
    impl Model for FisherQuad {
        fn n_params(&self) -> usize {
            2
        }
        fn value(&self, x: f64, p: &[f64]) -> f64 {
            p[0] / 8.0 * x * x + p[1]
        }
    }

    #[test]
    fn least_squares_exact_models() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 1.5 - 0.25 * x).collect();
        let fit = weighted_least_squares(&Line, &xs, &ys, &[1.0; 10], &[0.0, 0.0], &LsqOptions::default()).unwrap();
        assert!((fit.params[0] - 1.5).abs() < 1e-12 && (fit.params[1] + 0.25).abs() < 1e-12);

        let xs = [0.06, 0.08, 0.14, 0.2];
        let ys: Vec<f64> = xs.iter().map(|x| 0.5 * x * x).collect();
        let fit = weighted_least_squares(&FisherQuad, &xs, &ys, &[1.0; 4], &[1.0, 0.1], &LsqOptions::default()).unwrap();
        assert!((fit.params[0] - 4.0).abs() < 1e-9 && fit.params[1].abs() < 1e-9);
    }

    #[test]
    fn least_squares_fixed_parameter_and_singular() {
        let xs = [0.0, 1.0, 2.0];
        let ys = [1.0, 3.0, 5.0];
        let opts = LsqOptions {
            fixed: vec![true, false],
            ..Default::default()
        };
        let fit = weighted_least_squares(&Line, &xs, &ys, &[1.0; 3], &[1.0, 0.0], &opts).unwrap();
        assert_eq!(fit.params[0], 1.0);
        assert!((fit.params[1] - 2.0).abs() < 1e-12);
        assert_eq!(fit.covariance[0], 0.0);
        assert!(weighted_least_squares(&Line, &[1.0, 1.0], &[1.0, 2.0], &[1.0; 2], &[0.0, 0.0], &LsqOptions::default()).is_err());
    }

    #[test]
    fn noisy_noise_curve_round_trip() {
        let (s0, c1) = (0.1466f64, 0.0114f64);
        let mut rng = stream_rng(5, 0);
        let ns: Vec<f64> = (0..13).map(|n| n as f64).collect();
        let sigma = 2e-4;
        let ys: Vec<f64> = ns
            .iter()
            .map(|n| {
                let z: f64 = rand_distr::StandardNormal.sample(&mut rng);
                s0 * s0 + c1 * c1 * n + sigma * z
            })
            .collect();
        let w = vec![1.0 / (sigma * sigma); ns.len()];
        let fit = weighted_least_squares(&Line, &ns, &ys, &w, &[0.0, 0.0], &LsqOptions::default()).unwrap();
        assert!((fit.params[0] - s0 * s0).abs() < 3.0 * fit.std_err(0));
        assert!((fit.params[1] - c1 * c1).abs() < 3.0 * fit.std_err(1));
    }

    #[test]
    fn de_sphere_and_rosenbrock() {
        let opts = DeOptions {
            atol: 1e-16,
            seed: 1,
            ..Default::default()
        };
        let sphere = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
        let r = differential_evolution(sphere, &[(-5.0, 5.0); 4], &opts).unwrap();
        assert!(r.converged);
        assert!(r.best.iter().all(|v| v.abs() < 1e-6));

        let rosen = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let r = differential_evolution(rosen, &[(-2.0, 2.0); 2], &DeOptions::default()).unwrap();
        assert!((r.best[0] - 1.0).abs() < 1e-3 && (r.best[1] - 1.0).abs() < 1e-3);
        let again = differential_evolution(rosen, &[(-2.0, 2.0); 2], &DeOptions::default()).unwrap();
        assert_eq!(r, again);
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn de_budget_exhaustion_is_flagged() {
        let opts = DeOptions {
            max_generations: 3,
            ..Default::default()
        };
        let r = differential_evolution(|x: &[f64]| x[0].sin() + x[1].cos(), &[(-9.0, 9.0); 2], &opts).unwrap();
        assert!(!r.converged);
        assert_eq!(r.generations, 3);
    }

    proptest! {
        #[test]
        fn asymmetric_identity(v in proptest::collection::vec(-100.0f64..100.0, 2..1000)) {
            let (u, d) = asymmetric_std(&v).unwrap();
            let m = v.iter().sum::<f64>() / v.len() as f64;
            let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64;
            prop_assert!(((u * u + d * d) / 2.0 - var).abs() <= 1e-12 * var.max(1.0));
        }

        #[test]
        fn confidence_monotone_in_level(v in proptest::collection::vec(1usize..20, 1..200)) {
            prop_assert!(depth_confidence(&v, 0.95).unwrap() <= depth_confidence(&v, 0.68).unwrap());
        }
    }
}
