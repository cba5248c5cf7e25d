//! Entanglement witnesses and entanglement-depth criteria from collective
//! spin moments and parities.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // inherent f64 methods exist whenever std is linked
use num_traits::Float;

use crate::fock::{collective_moments, FixedNDistribution};
use crate::math::symmetric_tridiagonal_eigen;
use crate::metrology::jxjy2_estimate;
use crate::stats::{asymmetric_std, depth_confidence, ResamplePlan};
use crate::{Error, Result};

/// Collective moments of one atom number.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CollectiveData {
    pub n_total: usize,
    /// `⟨J_x² + J_y²⟩`.
    pub jxjy2: f64,
    /// `ΔJ_z²`.
    pub var_jz: f64,
    /// `⟨J_z²⟩`; taken equal to `var_jz` when absent.
    #[cfg_attr(feature = "serde", serde(default))]
    pub mean_jz2: Option<f64>,
    pub parity_z: f64,
    pub parity_x: f64,
    /// Defaults to `parity_x`.
    #[cfg_attr(feature = "serde", serde(default))]
    pub parity_y: Option<f64>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub jxjy2_err: Option<f64>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub var_jz_err: Option<f64>,
}

impl CollectiveData {
    pub fn new(n_total: usize, jxjy2: f64, var_jz: f64, parity_z: f64, parity_x: f64) -> Self {
        Self {
            n_total,
            jxjy2,
            var_jz,
            mean_jz2: None,
            parity_z,
            parity_x,
            parity_y: None,
            jxjy2_err: None,
            var_jz_err: None,
        }
    }

    /// Moments from the distribution without coupling (`z`) and after a
    /// balanced coupling (`x`).
    pub fn from_distributions(z: &FixedNDistribution, x: &FixedNDistribution) -> Result<Self> {
        if z.n_total != x.n_total {
            return Err(Error::Mismatch(z.n_total, x.n_total));
        }
        let mz = collective_moments(z);
        let mx = collective_moments(x);
        Ok(Self {
            mean_jz2: Some(mz.mean_jz2),
            ..Self::new(z.n_total, jxjy2_estimate(x), mz.var_jz, mz.parity, mx.parity)
        })
    }

    pub fn parity_y(&self) -> f64 {
        self.parity_y.unwrap_or(self.parity_x)
    }

    pub fn mean_jz2(&self) -> f64 {
        self.mean_jz2.unwrap_or(self.var_jz)
    }
}

/// `𝒥 = ⟨J_x² + J_y²⟩ / (N(N+2)/4)`.
pub fn symmetry_parameter(data: &CollectiveData) -> f64 {
    let n = data.n_total as f64;
    data.jxjy2 / (n * (n + 2.0) / 4.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ParityWitness {
    pub value: f64,
    pub entangled: bool,
}

/// `|⟨Π_x⟩| + |⟨Π_y⟩| + |⟨Π_z⟩|`, at most one for separable states.
pub fn parity_witness_xyz(data: &CollectiveData) -> ParityWitness {
    let value = data.parity_x.abs() + data.parity_y().abs() + data.parity_z.abs();
    ParityWitness {
        value,
        entangled: value > 1.0,
    }
}

/// Left-hand side minus right-hand side of the parity bound at `k`;
/// positive means violated.
pub fn parity_bound_excess(data: &CollectiveData, k: usize) -> f64 {
    let n = data.n_total as f64;
    let k = k as f64;
    data.jxjy2 + k * (n - k) / 2.0 * data.parity_z.abs() - n / 2.0 * (n / 2.0 + 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum DepthMethod {
    ParityBased,
    VarianceBased,
    /// The parity criterion certified nothing; the variance result is used.
    Fallback,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DepthResult {
    pub n_total: usize,
    pub depth: usize,
    pub method: DepthMethod,
    /// Some `k` had a clamped square-root argument in a variance criterion.
    pub clamped: bool,
}

/// Depth from the parity criterion: the largest `k ∈ [N/2, N−1]` whose bound
/// is violated certifies depth `k + 1`. Falls back to [`depth_variance`] when
/// no `k` qualifies.
pub fn depth_parity(data: &CollectiveData, boundary: &SmBoundarySet) -> Result<DepthResult> {
    let n = data.n_total;
    if n % 2 == 1 || n == 0 {
        return Err(Error::Domain(alloc::format!("parity criterion needs even N > 0, got {n}")));
    }
    for k in (n / 2..n).rev() {
        if parity_bound_excess(data, k) > 0.0 {
            return Ok(DepthResult {
                n_total: n,
                depth: k + 1,
                method: DepthMethod::ParityBased,
                clamped: false,
            });
        }
    }
    let v = depth_variance(data, boundary)?;
    Ok(DepthResult {
        method: DepthMethod::Fallback,
        ..v
    })
}

/// `R(n)`: maximal `ΔJ_x² + ΔJ_y²` of an `n`-qubit state.
pub fn r_max(n: usize) -> f64 {
    let h = n as f64 / 2.0;
    let r = h * (h + 1.0);
    if n % 2 == 1 {
        r - 0.25
    } else {
        r
    }
}

/// `X = ⌊N/k⌋ R(k) + R(N − ⌊N/k⌋ k)`.
pub fn x_max(n: usize, k: usize) -> f64 {
    let q = n / k;
    q as f64 * r_max(k) + r_max(n - q * k)
}

/// Outcome of one variance criterion at one `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KCheck {
    pub k: usize,
    pub violated: bool,
    /// The square-root argument was negative and set to zero.
    pub clamped: bool,
}

fn check_bound(var_jz: f64, j_max: f64, x_sq: f64, table: &SmBoundaryTable, k: usize) -> KCheck {
    if !(x_sq >= 0.0) {
        return KCheck {
            k,
            violated: false,
            clamped: true,
        };
    }
    let x = x_sq.sqrt();
    if x > 1.0 {
        // No k-producible state reaches this spread.
        return KCheck {
            k,
            violated: true,
            clamped: false,
        };
    }
    KCheck {
        k,
        violated: var_jz < j_max * table.eval(x),
        clamped: false,
    }
}

/// Both variance-based bounds at `k` (`1 < k < N`): the normalised-spread
/// form and the `X` form.
pub fn variance_checks(data: &CollectiveData, k: usize, boundary: &SmBoundarySet) -> Result<(KCheck, KCheck)> {
    let n = data.n_total;
    let j_max = n as f64 / 2.0;
    let j = k as f64 / 2.0;
    let table = boundary.table(k)?;
    let a = (data.jxjy2 - j_max * (j + 1.0)) / (j_max * (j_max - j));
    let b = (data.jxjy2 - x_max(n, k)) / (j_max * j_max);
    Ok((
        check_bound(data.var_jz, j_max, a, table, k),
        check_bound(data.var_jz, j_max, b, table, k),
    ))
}

/// `(N−1) ΔJ_z² − ⟨J_x²+J_y²⟩ + N/2`, non-negative for separable states.
pub fn separability_variance_lhs(data: &CollectiveData) -> f64 {
    let n = data.n_total as f64;
    (n - 1.0) * data.var_jz - data.jxjy2 + n / 2.0
}

/// Depth from the variance criteria: `k = 1` uses the separability bound,
/// `1 < k < N` the better of the two boundary-function bounds. Returns the
/// largest certified `k + 1` (1 if nothing is certified).
pub fn depth_variance(data: &CollectiveData, boundary: &SmBoundarySet) -> Result<DepthResult> {
    let n = data.n_total;
    if n == 0 {
        return Err(Error::Domain("N must be positive".into()));
    }
    let mut depth = 1;
    let mut clamped = false;
    if n >= 2 && separability_variance_lhs(data) < 0.0 {
        depth = 2;
    }
    for k in 2..n {
        let (a, b) = variance_checks(data, k, boundary)?;
        clamped |= a.clamped || b.clamped;
        if a.violated || b.violated {
            depth = depth.max(k + 1);
        }
    }
    Ok(DepthResult {
        n_total: n,
        depth,
        method: DepthMethod::VarianceBased,
        clamped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IndefiniteWitness {
    pub value: f64,
    pub error: f64,
    pub entangled: bool,
}

/// Per-`N` term of the indefinite-particle-number witness with `C = −1`.
pub fn indefinite_n_term(data: &CollectiveData) -> Result<f64> {
    let n = data.n_total as f64;
    if data.n_total < 2 {
        return Err(Error::Domain("N + C must be positive".into()));
    }
    Ok(((n - 1.0) * data.mean_jz2() - data.jxjy2) / (n * (n - 1.0)) + 0.5 / (n - 1.0))
}

/// Weighted average of [`indefinite_n_term`] over atom numbers, with weights
/// proportional to the relative frequency of each `N`. The error propagates
/// the per-`N` moment errors where given.
pub fn witness_indefinite_n(rows: &[(CollectiveData, f64)]) -> Result<IndefiniteWitness> {
    if rows.is_empty() {
        return Err(Error::InsufficientData("no atom numbers".into()));
    }
    let wsum: f64 = rows.iter().map(|(_, w)| *w).sum();
    if !(wsum > 0.0) || rows.iter().any(|(_, w)| *w < 0.0) {
        return Err(Error::Domain("weights must be non-negative with a positive sum".into()));
    }
    let mut value = 0.0;
    let mut var = 0.0;
    for (d, w) in rows {
        let p = w / wsum;
        value += p * indefinite_n_term(d)?;
        let n = d.n_total as f64;
        let e1 = d.var_jz_err.unwrap_or(0.0) / n;
        let e2 = d.jxjy2_err.unwrap_or(0.0) / (n * (n - 1.0));
        var += p * p * (e1 * e1 + e2 * e2);
    }
    Ok(IndefiniteWitness {
        value,
        error: var.sqrt(),
        entangled: value < 0.0,
    })
}

/// Collective data of a pure product state given the single-particle Bloch
/// vectors `r⁽ⁿ⁾`.
pub fn product_state_data(bloch: &[[f64; 3]]) -> CollectiveData {
    let n = bloch.len();
    let second = |l: usize| {
        let s: f64 = bloch.iter().map(|r| r[l]).sum();
        let s2: f64 = bloch.iter().map(|r| r[l] * r[l]).sum();
        0.25 * (n as f64 + s * s - s2)
    };
    let mean_z = 0.5 * bloch.iter().map(|r| r[2]).sum::<f64>();
    let parity = |l: usize| bloch.iter().map(|r| r[l]).product::<f64>();
    let jz2 = second(2);
    CollectiveData {
        mean_jz2: Some(jz2),
        parity_y: Some(parity(1)),
        ..CollectiveData::new(n, second(0) + second(1), (jz2 - mean_z * mean_z).max(0.0), parity(2), parity(0))
    }
}

/// Lower boundary `F_j(x)` of normalised `Var(J_z)/j` against normalised
/// mean spin `x = ⟨J_x⟩/j` over spin-`j` states, tabulated once.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SmBoundaryTable {
    /// `2j`.
    pub two_j: usize,
    xs: Vec<f64>,
    ys: Vec<f64>,
}

/// Points of the `μ` grid.
pub const MU_POINTS: usize = 512;
/// Points of the `J_z` shift grid used for half-integer spins.
pub const SHIFT_POINTS: usize = 33;
/// Largest supported `2j + 1`.
pub const MAX_BOUNDARY_DIM: usize = 64;

impl SmBoundaryTable {
    /// Ground states of `(J_z − c)² − μ J_x` for `μ` on a log grid in
    /// `[1e-3, 1e3]` supply candidate points; the table is their lower convex
    /// hull closed by `(0, 0)` and `(1, ½)`. Integer spins use `c = 0`;
    /// half-integer spins scan `c ∈ [0, ½]`, since at `c = 0` their ground
    /// state is degenerate and misses the small-`x` branch.
    pub fn new(two_j: usize) -> Result<Self> {
        if two_j == 0 || two_j + 1 > MAX_BOUNDARY_DIM {
            return Err(Error::Domain(alloc::format!("2j = {two_j} outside 1..={}", MAX_BOUNDARY_DIM - 1)));
        }
        let dim = two_j + 1;
        let j = two_j as f64 / 2.0;
        let ms: Vec<f64> = (0..dim).map(|i| i as f64 - j).collect();
        let jx_off: Vec<f64> = (0..dim - 1)
            .map(|i| 0.5 * (j * (j + 1.0) - ms[i] * (ms[i] + 1.0)).sqrt())
            .collect();
        let shifts: Vec<f64> = if two_j % 2 == 0 {
            vec![0.0]
        } else {
            (0..SHIFT_POINTS).map(|i| 0.5 * i as f64 / (SHIFT_POINTS - 1) as f64).collect()
        };
        let mut pts: Vec<(f64, f64)> = vec![(0.0, 0.0), (1.0, 0.5)];
        let (lo, hi) = (1e-3f64.ln(), 1e3f64.ln());
        for &c in &shifts {
            let diag: Vec<f64> = ms.iter().map(|m| (m - c) * (m - c)).collect();
            for i in 0..MU_POINTS {
                let mu = (lo + (hi - lo) * i as f64 / (MU_POINTS - 1) as f64).exp();
                let off: Vec<f64> = jx_off.iter().map(|o| -mu * o).collect();
                let (_, vecs) = symmetric_tridiagonal_eigen(&diag, &off)?;
                let v: Vec<f64> = (0..dim).map(|r| vecs[r * dim]).collect();
                let jx: f64 = (0..dim - 1).map(|r| 2.0 * jx_off[r] * v[r] * v[r + 1]).sum();
                let m1: f64 = (0..dim).map(|r| v[r] * v[r] * ms[r]).sum();
                let m2: f64 = (0..dim).map(|r| v[r] * v[r] * ms[r] * ms[r]).sum();
                let x = (jx.abs() / j).min(1.0);
                pts.push((x, (m2 - m1 * m1).max(0.0) / j));
            }
        }
        let (xs, ys) = lower_hull(pts);
        Ok(Self { two_j, xs, ys })
    }

    pub fn j(&self) -> f64 {
        self.two_j as f64 / 2.0
    }

    /// `F_j(x)` by linear interpolation on the hull, `0 ≤ x ≤ 1`.
    pub fn eval(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        let i = self.xs.partition_point(|&v| v <= x);
        if i == 0 {
            return self.ys[0];
        }
        if i >= self.xs.len() {
            return *self.ys.last().unwrap();
        }
        let (x0, x1, y0, y1) = (self.xs[i - 1], self.xs[i], self.ys[i - 1], self.ys[i]);
        if x1 == x0 {
            return y0.min(y1);
        }
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    /// Checked evaluation.
    pub fn try_eval(&self, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Domain("x must lie in [0, 1]".into()));
        }
        Ok(self.eval(x))
    }
}

fn lower_hull(mut pts: Vec<(f64, f64)>) -> (Vec<f64>, Vec<f64>) {
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut h: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    for p in pts {
        while h.len() >= 2 {
            let (a, b) = (h[h.len() - 2], h[h.len() - 1]);
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            if cross <= 0.0 {
                h.pop();
            } else {
                break;
            }
        }
        h.push(p);
    }
    h.into_iter().unzip()
}

/// Boundary tables for every `2j` up to a limit, built eagerly and
/// read-only afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct SmBoundarySet {
    tables: BTreeMap<usize, SmBoundaryTable>,
}

impl SmBoundarySet {
    /// Tables for `2j = 1..=max_two_j`.
    pub fn new(max_two_j: usize) -> Result<Self> {
        let tables = (1..=max_two_j)
            .map(|t| Ok((t, SmBoundaryTable::new(t)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        Ok(Self { tables })
    }

    /// Tables needed for depth criteria up to `n_max` atoms.
    pub fn for_atoms(n_max: usize) -> Result<Self> {
        Self::new(n_max.saturating_sub(1).max(1))
    }

    pub fn table(&self, two_j: usize) -> Result<&SmBoundaryTable> {
        self.tables.get(&two_j).ok_or(Error::Capacity {
            what: "2j",
            value: two_j,
            limit: self.tables.keys().last().copied().unwrap_or(0),
        })
    }
}

/// Summary of a resampled depth distribution.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DepthSummary {
    pub mean: f64,
    pub up: f64,
    pub down: f64,
    pub k68: usize,
    pub k95: usize,
    pub samples: Vec<usize>,
}

impl DepthSummary {
    pub fn from_samples(samples: Vec<usize>) -> Result<Self> {
        let vals: Vec<f64> = samples.iter().map(|&k| k as f64).collect();
        let mean = vals.iter().sum::<f64>() / vals.len().max(1) as f64;
        let (up, down) = if vals.len() >= 2 { asymmetric_std(&vals)? } else { (0.0, 0.0) };
        Ok(Self {
            mean,
            up,
            down,
            k68: depth_confidence(&samples, 0.68)?,
            k95: depth_confidence(&samples, 0.95)?,
            samples,
        })
    }
}

/// Both depth methods over multinomial resamples of the measured
/// distributions without (`z`) and after (`x`) coupling.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ResampledDepth {
    pub n_total: usize,
    pub parity: DepthSummary,
    pub variance: DepthSummary,
    /// Fraction of resamples in which the parity criterion certified nothing.
    pub fallback_fraction: f64,
}

pub fn resampled_depth(
    z: &FixedNDistribution,
    x: &FixedNDistribution,
    n_samples: usize,
    seed: u64,
    boundary: &SmBoundarySet,
) -> Result<ResampledDepth> {
    let plan = ResamplePlan::new(vec![z.clone(), x.clone()], n_samples, seed)?;
    let mut par = Vec::with_capacity(n_samples);
    let mut var = Vec::with_capacity(n_samples);
    let mut fallback = 0usize;
    for s in plan.iter() {
        let d = CollectiveData::from_distributions(&s[0], &s[1])?;
        let p = depth_parity(&d, boundary)?;
        if p.method == DepthMethod::Fallback {
            fallback += 1;
        }
        par.push(p.depth);
        var.push(depth_variance(&d, boundary)?.depth);
    }
    Ok(ResampledDepth {
        n_total: z.n_total,
        parity: DepthSummary::from_samples(par)?,
        variance: DepthSummary::from_samples(var)?,
        fallback_fraction: fallback as f64 / n_samples.max(1) as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::holland_burnett;
    use crate::stats::stream_rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn ideal(n: usize) -> CollectiveData {
        let h = n as f64 / 2.0;
        CollectiveData::new(n, h * (h + 1.0), 0.0, 1.0, 1.0)
    }

    #[test]
    fn r_and_x_definitions() {
        assert_eq!(r_max(2), 2.0);
        assert_eq!(r_max(1), 0.5);
        assert_eq!(x_max(4, 2), 4.0);
        assert_eq!(x_max(5, 2), 4.0 + 0.5);
    }

    #[test]
    fn boundary_closed_forms() {
        let half = SmBoundaryTable::new(1).unwrap();
        let one = SmBoundaryTable::new(2).unwrap();
        for i in 0..=50 {
            let x = i as f64 / 50.0;
            assert!((half.eval(x) - x * x / 2.0).abs() < 2e-3, "j=1/2 x={x}");
            assert!((one.eval(x) - (1.0 - (1.0 - x * x).sqrt()) / 2.0).abs() < 2e-3, "j=1 x={x}");
        }
    }

    #[test]
    fn boundary_shape() {
        let set = SmBoundarySet::new(12).unwrap();
        for t in 1..=12 {
            let tab = set.table(t).unwrap();
            assert_eq!(tab.eval(0.0), 0.0);
            assert!((tab.eval(1.0) - 0.5).abs() < 1e-12);
            assert!(tab.eval(0.5) <= 0.25 + 1e-12);
            let mut prev = 0.0;
            for i in 0..=100 {
                let v = tab.eval(i as f64 / 100.0);
                assert!(v >= prev - 1e-12);
                prev = v;
            }
        }
        // Larger spins reach lower variance.
        for t in (2..12).step_by(2) {
            for i in 0..=20 {
                let x = i as f64 / 20.0;
                assert!(set.table(t + 2).unwrap().eval(x) <= set.table(t).unwrap().eval(x) + 1e-9);
            }
        }
        assert!(set.table(1).unwrap().try_eval(1.5).is_err());
        assert!(set.table(13).is_err());
    }

    #[test]
    fn ideal_states_are_genuinely_multipartite() {
        let set = SmBoundarySet::for_atoms(12).unwrap();
        for n in (2..=12).step_by(2) {
            let p = depth_parity(&ideal(n), &set).unwrap();
            let v = depth_variance(&ideal(n), &set).unwrap();
            assert_eq!((p.depth, p.method), (n, DepthMethod::ParityBased));
            assert_eq!(v.depth, n, "N={n}");
        }
        assert!(depth_parity(&CollectiveData::new(3, 1.0, 0.0, 1.0, 1.0), &set).is_err());
    }

    #[test]
    fn witness_examples() {
        assert_eq!(parity_witness_xyz(&ideal(4)).value, 3.0);
        let w = parity_witness_xyz(&CollectiveData::new(2, 1.892, 0.0176, 0.965, 0.892));
        assert!((w.value - 2.749).abs() < 1e-12 && w.entangled);
        for n in (2..=12).step_by(2) {
            let t = indefinite_n_term(&ideal(n)).unwrap();
            assert!((t + n as f64 / (4.0 * (n as f64 - 1.0))).abs() < 1e-12);
        }
        let w = witness_indefinite_n(&[(ideal(2), 1.0)]).unwrap();
        assert!((w.value + 0.5).abs() < 1e-12 && w.entangled);
    }

    #[test]
    fn symmetry_examples() {
        assert_eq!(symmetry_parameter(&ideal(8)), 1.0);
        let d = CollectiveData::new(2, 1.892, 0.0176, 0.965, 0.892);
        assert!((symmetry_parameter(&d) - 0.946).abs() < 1e-12);
    }

    #[test]
    fn from_distributions_of_ideal_state() {
        let n = 6;
        let z = FixedNDistribution::delta(n, n / 2);
        let x = holland_burnett(n).unwrap();
        let d = CollectiveData::from_distributions(&z, &x).unwrap();
        assert!((d.jxjy2 - 12.0).abs() < 1e-12);
        assert_eq!((d.var_jz, d.parity_z, d.parity_x), (0.0, -1.0, 1.0));
    }

    #[test]
    fn singlet_products_fool_only_the_parity_witness() {
        let set = SmBoundarySet::for_atoms(12).unwrap();
        for n in [4usize, 8, 12] {
            let d = CollectiveData {
                parity_y: Some(1.0),
                ..CollectiveData::new(n, 0.0, 0.0, 1.0, 1.0)
            };
            assert!(parity_witness_xyz(&d).entangled);
            assert!(parity_bound_excess(&d, n - 1) <= 0.0);
            assert_ne!(depth_parity(&d, &set).unwrap().depth, n);
        }
    }

    fn random_bloch<R: Rng>(rng: &mut R, n: usize) -> Vec<[f64; 3]> {
        (0..n)
            .map(|_| {
                let z: f64 = 2.0 * rng.random::<f64>() - 1.0;
                let phi: f64 = 2.0 * core::f64::consts::PI * rng.random::<f64>();
                let s = (1.0 - z * z).sqrt();
                [s * phi.cos(), s * phi.sin(), z]
            })
            .collect()
    }

    #[test]
    fn product_state_moments_match_brute_force() {
        // Two qubits: ⟨J_z²⟩ = ¼(2 + 2 z₁z₂).
        let b = [[0.6, 0.0, 0.8], [0.0, 0.6, -0.8]];
        let d = product_state_data(&b);
        assert!((d.mean_jz2() - 0.25 * (2.0 - 2.0 * 0.64)).abs() < 1e-12);
        assert!((d.parity_z + 0.64).abs() < 1e-12);
        assert_eq!(d.parity_x, 0.0);
        assert!((d.var_jz - 0.25 * (2.0 - 2.0 * 0.64)).abs() < 1e-12);
    }

    #[test]
    fn separable_ensemble_respects_indefinite_witness() {
        let mut rng = stream_rng(3, 1);
        let rows: Vec<(CollectiveData, f64)> = (0..200)
            .map(|i| {
                let n = 2 + 2 * (i % 6);
                (product_state_data(&random_bloch(&mut rng, n)), 1.0)
            })
            .collect();
        assert!(witness_indefinite_n(&rows).unwrap().value >= -1e-9);
    }

    #[test]
    fn resampled_depth_of_sharp_state() {
        let set = SmBoundarySet::for_atoms(6).unwrap();
        let z = FixedNDistribution {
            sample_size: Some(400),
            ..FixedNDistribution::delta(6, 3)
        };
        let x = FixedNDistribution {
            sample_size: Some(400),
            ..holland_burnett(6).unwrap()
        };
        let r = resampled_depth(&z, &x, 200, 5, &set).unwrap();
        assert_eq!(r.variance.k68, 6);
        assert!(r.parity.k95 >= 5);
        assert_eq!(r.parity.samples.len(), 200);
    }

    proptest! {
        #[test]
        fn product_states_are_never_flagged(seed in 0u64..10_000, n in prop::sample::select(vec![2usize, 4, 6])) {
            let mut rng = stream_rng(seed, 0);
            let d = product_state_data(&random_bloch(&mut rng, n));
            prop_assert!(parity_witness_xyz(&d).value <= 1.0 + 1e-9);
            for k in n / 2..n {
                prop_assert!(parity_bound_excess(&d, k) <= 1e-9);
            }
            prop_assert!(separability_variance_lhs(&d) >= -1e-9);
        }
    }
}
