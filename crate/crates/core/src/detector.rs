//! Per-mode camera signals: synthesis from atom numbers and the calibration
//! chain (crosstalk, drift, histogram fit, noise curve, quantisation).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)] // inherent f64 methods exist whenever std is linked
use num_traits::Float;
use rand_distr::{Distribution, StandardNormal};

use crate::channel::BlurLaw;
use crate::math::{invert_spd, normal_cdf, normal_interval_mass};
use crate::metrology::ShotTable;
use crate::stats::{jacobian, stream_rng, weighted_least_squares, LsqOptions, Model};
use crate::{Error, Result};

/// Shots per drift window.
pub const DRIFT_WINDOW: usize = 400;
/// Minimum zero-atom shots for the crosstalk fit.
pub const MIN_ZERO_SHOTS: usize = 100;

/// One acquisition.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SignalRow {
    pub shot_index: u64,
    pub s_minus: f64,
    pub s_zero: f64,
    pub s_plus: f64,
}

/// Signals in acquisition order.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SignalTable {
    pub rows: Vec<SignalRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Mode {
    Minus,
    Plus,
}

impl SignalTable {
    pub fn new(rows: Vec<SignalRow>) -> Result<Self> {
        if rows.windows(2).any(|w| w[1].shot_index <= w[0].shot_index) {
            return Err(Error::Domain("shot indices must be strictly increasing".into()));
        }
        if rows.iter().any(|r| !(r.s_minus.is_finite() && r.s_zero.is_finite() && r.s_plus.is_finite())) {
            return Err(Error::Domain("signals must be finite".into()));
        }
        Ok(Self { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn mode(&self, mode: Mode) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| match mode {
                Mode::Minus => r.s_minus,
                Mode::Plus => r.s_plus,
            })
            .collect()
    }

    pub fn zero(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.s_zero).collect()
    }

    fn set_mode(&mut self, mode: Mode, values: &[f64]) {
        for (r, &v) in self.rows.iter_mut().zip(values) {
            match mode {
                Mode::Minus => r.s_minus = v,
                Mode::Plus => r.s_plus = v,
            }
        }
    }
}

/// Signal model of one detection mode.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModeSpec {
    /// Counts per atom.
    pub g: f64,
    /// Zero-atom offset in counts.
    pub b: f64,
    pub sigma0: f64,
    pub c1: f64,
    /// Crosstalk slope against the `m_F = 0` signal.
    pub kappa: f64,
}

impl ModeSpec {
    pub const MINUS: Self = Self {
        g: 975.8,
        b: 0.0,
        sigma0: 0.1466,
        c1: 0.0114,
        kappa: 1.48e-3,
    };
    pub const PLUS: Self = Self {
        g: 832.5,
        b: 0.0,
        sigma0: 0.168,
        c1: 0.027,
        kappa: 1.76e-3,
    };

    pub fn sigma(&self, n: u32) -> f64 {
        (self.sigma0 * self.sigma0 + self.c1 * self.c1 * n as f64).sqrt()
    }
}

/// Slow offset added to both modes.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "lowercase"))]
pub enum DriftSpec {
    None,
    /// Sinusoid over the run with the given peak-to-peak amplitude.
    Sine { peak_to_peak: f64, periods: f64 },
    /// Offset `height` from shot `at` on.
    Step { at: usize, height: f64 },
}

impl DriftSpec {
    pub fn offset(&self, i: usize, n: usize) -> f64 {
        match *self {
            DriftSpec::None => 0.0,
            DriftSpec::Sine { peak_to_peak, periods } => {
                0.5 * peak_to_peak * (2.0 * PI * periods * i as f64 / n.max(1) as f64).sin()
            }
            DriftSpec::Step { at, height } => {
                if i >= at {
                    height
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SynthesisSpec {
    pub minus: ModeSpec,
    pub plus: ModeSpec,
    pub drift: DriftSpec,
    /// Mean and spread of the `m_F = 0` signal in counts.
    pub s0_mean: f64,
    pub s0_std: f64,
    /// Disable the Gaussian detection noise.
    #[cfg_attr(feature = "serde", serde(default))]
    pub noiseless: bool,
}

impl Default for SynthesisSpec {
    fn default() -> Self {
        Self {
            minus: ModeSpec::MINUS,
            plus: ModeSpec::PLUS,
            drift: DriftSpec::Sine {
                peak_to_peak: 370.0,
                periods: 1.0,
            },
            s0_mean: 1580.0 * 300.0,
            s0_std: 1580.0 * 30.0,
            noiseless: false,
        }
    }
}

/// `s = n g + b + drift + κ s₀ + N(0, σ_n g)` for each mode of each shot.
pub fn synthesize_signals(shots: &ShotTable, spec: &SynthesisSpec, seed: u64) -> SignalTable {
    let mut rng = stream_rng(seed, 0);
    let n = shots.rows.len();
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let rows = shots
        .rows
        .iter()
        .enumerate()
        .map(|(i, &(np, nm))| {
            let drift = spec.drift.offset(i, n);
            let s0 = spec.s0_mean + spec.s0_std * normal();
            let signal = |m: &ModeSpec, k: u32, z: f64| {
                let noise = if spec.noiseless { 0.0 } else { m.sigma(k) * m.g * z };
                k as f64 * m.g + m.b + drift + m.kappa * s0 + noise
            };
            let (zm, zp) = (normal(), normal());
            SignalRow {
                shot_index: i as u64,
                s_minus: signal(&spec.minus, nm, zm),
                s_zero: s0,
                s_plus: signal(&spec.plus, np, zp),
            }
        })
        .collect();
    SignalTable { rows }
}

/// First-pass peak spacing and zero-peak position.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CoarsePeaks {
    pub g: f64,
    pub b: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let f = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - f) + sorted[i + 1] * f
    } else {
        sorted[i]
    }
}

/// Spacing from the first maximum of the histogram autocorrelation, offset
/// from the circular mean of the signal phase modulo that spacing.
pub fn coarse_peaks(signals: &[f64]) -> Result<CoarsePeaks> {
    if signals.len() < 50 {
        return Err(Error::InsufficientData("too few signals for a coarse fit".into()));
    }
    let mut sorted = signals.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (quantile(&sorted, 0.001), quantile(&sorted, 0.999));
    if !(hi > lo) {
        return Err(Error::InsufficientData("signals have no spread".into()));
    }
    let bins = 2048usize;
    let w = (hi - lo) / bins as f64;
    let mut h = vec![0.0; bins];
    for &s in signals {
        let k = ((s - lo) / w).floor();
        if k >= 0.0 && (k as usize) < bins {
            h[k as usize] += 1.0;
        }
    }
    let mean = h.iter().sum::<f64>() / bins as f64;
    h.iter_mut().for_each(|v| *v -= mean);
    let max_lag = bins / 2;
    let raw: Vec<f64> = (0..max_lag)
        .map(|l| (0..bins - l).map(|i| h[i] * h[i + l]).sum::<f64>())
        .collect();
    let ac: Vec<f64> = (0..max_lag)
        .map(|l| {
            let (a, b) = (l.saturating_sub(3), (l + 4).min(max_lag));
            raw[a..b].iter().sum::<f64>() / (b - a) as f64
        })
        .collect();
    let first_min = (1..max_lag - 1)
        .find(|&l| ac[l] < ac[l + 1] && ac[l] < 0.9 * ac[0])
        .ok_or_else(|| Error::InsufficientData("histogram shows no peak spacing".into()))?;
    let end = (first_min * 5 / 2).min(max_lag - 1);
    let mut peak = (first_min..=end).max_by(|&a, &b| ac[a].total_cmp(&ac[b])).unwrap();
    // Suppressed odd peaks make the strongest lag twice the spacing; accept
    // a weaker maximum near half the lag if it rises above the trough.
    while peak >= 8 {
        let (a, b) = (peak * 7 / 20, peak * 13 / 20);
        let half = (a..=b).max_by(|&x, &y| ac[x].total_cmp(&ac[y])).unwrap();
        let lowest = |r: core::ops::Range<usize>| r.map(|l| ac[l]).fold(f64::INFINITY, f64::min);
        let trough = lowest(peak / 4..half).max(lowest(half..peak));
        if half > a && half < b && ac[half] > 0.0 && ac[half] - trough > 0.05 * ac[peak] {
            peak = half;
        } else {
            break;
        }
    }
    let mut lag = peak as f64;
    if peak > 0 && peak + 1 < max_lag {
        let (y0, y1, y2) = (ac[peak - 1], ac[peak], ac[peak + 1]);
        let d = y0 - 2.0 * y1 + y2;
        if d < 0.0 {
            lag += 0.5 * (y0 - y2) / d;
        }
    }
    let g = lag * w;
    let (cs, sn) = signals.iter().fold((0.0, 0.0), |(c, s), &v| {
        let ph = 2.0 * PI * v / g;
        (c + ph.cos(), s + ph.sin())
    });
    let b0 = g * sn.atan2(cs) / (2.0 * PI);
    // The zero peak is the lowest window that is not just the tail of the
    // next one.
    let mut k = ((sorted[0] - b0) / g).round();
    let window = |k: f64| {
        let c = b0 + k * g;
        let lo = sorted.partition_point(|&v| v < c - 0.5 * g);
        let hi = sorted.partition_point(|&v| v < c + 0.5 * g);
        hi - lo
    };
    while (window(k) as f64) < 0.1 * window(k + 1.0) as f64 {
        k += 1.0;
    }
    Ok(CoarsePeaks { g, b: b0 + k * g })
}

fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Singular("crosstalk regression"));
    }
    let slope = sxy / sxx;
    Ok((my - slope * mx, slope))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CrosstalkLine {
    pub kappa: f64,
    pub intercept: f64,
    pub zero_shots: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CrosstalkFit {
    pub minus: CrosstalkLine,
    pub plus: CrosstalkLine,
}

/// Zero-atom cluster `s − (intercept + κ s₀) < ½ g` and the line through it,
/// iterated until the cluster is stable.
pub fn fit_crosstalk_line(s: &[f64], s0: &[f64]) -> Result<CrosstalkLine> {
    let coarse = coarse_peaks(s)?;
    let (mut a, mut kappa) = (coarse.b, 0.0);
    let mut members: Vec<usize> = Vec::new();
    for _ in 0..20 {
        let next: Vec<usize> = (0..s.len())
            .filter(|&i| s[i] - (a + kappa * s0[i]) < 0.5 * coarse.g)
            .collect();
        if next.len() < MIN_ZERO_SHOTS {
            return Err(Error::InsufficientData(format!(
                "{} zero-atom shots, need {MIN_ZERO_SHOTS}",
                next.len()
            )));
        }
        if next == members {
            break;
        }
        members = next;
        let x: Vec<f64> = members.iter().map(|&i| s0[i]).collect();
        let y: Vec<f64> = members.iter().map(|&i| s[i]).collect();
        (a, kappa) = linear_fit(&x, &y)?;
    }
    Ok(CrosstalkLine {
        kappa,
        intercept: a,
        zero_shots: members.len(),
    })
}

/// Subtracts `κ s₀` from both modes.
pub fn correct_crosstalk(table: &SignalTable) -> Result<(SignalTable, CrosstalkFit)> {
    let s0 = table.zero();
    let mut out = table.clone();
    let mut lines = [None, None];
    for (slot, mode) in [Mode::Minus, Mode::Plus].into_iter().enumerate() {
        let s = table.mode(mode);
        let line = fit_crosstalk_line(&s, &s0)?;
        let corrected: Vec<f64> = s.iter().zip(&s0).map(|(v, z)| v - line.kappa * z).collect();
        out.set_mode(mode, &corrected);
        lines[slot] = Some(line);
    }
    Ok((
        out,
        CrosstalkFit {
            minus: lines[0].unwrap(),
            plus: lines[1].unwrap(),
        },
    ))
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DriftTrack {
    pub centers: Vec<f64>,
    pub errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DriftFit {
    pub window: usize,
    pub minus: DriftTrack,
    pub plus: DriftTrack,
}

/// Window boundaries; a short remainder joins the last full window.
fn windows(n: usize, window: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < n {
        let mut end = (start + window).min(n);
        if n - end < window / 2 {
            end = n;
        }
        out.push((start, end));
        start = end;
    }
    out
}

/// Zero-peak center per window from a clipped mean within `±½ g`.
pub fn drift_track(s: &[f64], window: usize, coarse: CoarsePeaks) -> Result<DriftTrack> {
    let mut track = DriftTrack {
        centers: Vec::new(),
        errors: Vec::new(),
    };
    for (w, (a, b)) in windows(s.len(), window).into_iter().enumerate() {
        let seg = &s[a..b];
        let mut c = coarse.b;
        let mut sel: Vec<f64> = Vec::new();
        for _ in 0..30 {
            sel = seg.iter().copied().filter(|v| (v - c).abs() < 0.5 * coarse.g).collect();
            if sel.len() < 10 {
                return Err(Error::UnresolvedWindow { window: w });
            }
            let next = sel.iter().sum::<f64>() / sel.len() as f64;
            let done = (next - c).abs() < 1e-9 * coarse.g;
            c = next;
            if done {
                break;
            }
        }
        let m = sel.len() as f64;
        let var = sel.iter().map(|v| (v - c) * (v - c)).sum::<f64>() / (m - 1.0);
        track.centers.push(c);
        track.errors.push((var / m).sqrt());
    }
    Ok(track)
}

/// Subtracts the per-window zero-peak center from both modes.
pub fn correct_drift(table: &SignalTable, window: usize) -> Result<(SignalTable, DriftFit)> {
    if window == 0 || table.len() < window {
        return Err(Error::InsufficientData(format!("{} shots for window {window}", table.len())));
    }
    let mut out = table.clone();
    let mut tracks = Vec::new();
    for mode in [Mode::Minus, Mode::Plus] {
        let s = table.mode(mode);
        let track = drift_track(&s, window, coarse_peaks(&s)?)?;
        let mut corrected = s.clone();
        for (w, (a, b)) in windows(s.len(), window).into_iter().enumerate() {
            corrected[a..b].iter_mut().for_each(|v| *v -= track.centers[w]);
        }
        out.set_mode(mode, &corrected);
        tracks.push(track);
    }
    let plus = tracks.pop().unwrap();
    let minus = tracks.pop().unwrap();
    Ok((out, DriftFit { window, minus, plus }))
}

/// Binned signal histogram.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Histogram {
    pub lo: f64,
    pub width: f64,
    pub counts: Vec<f64>,
}

impl Histogram {
    pub fn from_signals(signals: &[f64], lo: f64, width: f64, bins: usize) -> Self {
        let mut counts = vec![0.0; bins];
        for &s in signals {
            let k = ((s - lo) / width).floor();
            if k >= 0.0 && (k as usize) < bins {
                counts[k as usize] += 1.0;
            }
        }
        Self { lo, width, counts }
    }

    pub fn edge(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.width
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HistogramFitOptions {
    pub bins_per_peak: usize,
    /// Peaks `0..=n_max_fit` each hold at least this many events.
    pub min_events: usize,
    pub max_peaks: usize,
    /// Passes of the fixed-width prediction for the last peak.
    pub width_iterations: usize,
}

impl Default for HistogramFitOptions {
    fn default() -> Self {
        Self {
            bins_per_peak: 25,
            min_events: 30,
            max_peaks: 40,
            width_iterations: 5,
        }
    }
}

/// Calibration of one detection mode. Widths are in atoms; `heights` are
/// the events under each peak.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DetectorCalibration {
    pub g: f64,
    pub g_err: f64,
    pub b: f64,
    pub b_err: f64,
    pub sigma0: f64,
    pub sigma0_err: f64,
    pub c1: f64,
    pub c1_err: f64,
    /// Last peak with a free width; peak `n_max_fit + 1` has a fixed width.
    pub n_max_fit: usize,
    pub heights: Vec<f64>,
    pub height_errs: Vec<f64>,
    pub widths: Vec<f64>,
    pub width_errs: Vec<f64>,
    pub chi2: f64,
    pub dof: usize,
}

impl DetectorCalibration {
    pub fn blur_law(&self) -> BlurLaw {
        BlurLaw {
            sigma0: self.sigma0,
            c1: self.c1,
            g: self.g,
            b: self.b,
        }
    }

    /// Peak width in atoms from the noise law.
    pub fn sigma(&self, n: usize) -> f64 {
        self.blur_law().sigma(n)
    }

    /// Predicted histogram counts for plotting.
    pub fn predict(&self, hist: &Histogram) -> Vec<f64> {
        let model = PeakModel {
            width: hist.width,
            peaks: self.heights.len(),
        };
        let p = model.pack(self);
        (0..hist.counts.len()).map(|i| model.value(hist.edge(i), &p)).collect()
    }
}

/// Evenly spaced Gaussians integrated over bins of a given width; the
/// argument is the lower bin edge. Parameters `[g, b, a_0.., σ_0..]`.
struct PeakModel {
    width: f64,
    peaks: usize,
}

impl PeakModel {
    fn pack(&self, c: &DetectorCalibration) -> Vec<f64> {
        let mut p = vec![c.g, c.b];
        p.extend_from_slice(&c.heights);
        p.extend_from_slice(&c.widths);
        p
    }
}

fn std_pdf(u: f64) -> f64 {
    (-0.5 * u * u).exp() / (2.0 * PI).sqrt()
}

impl Model for PeakModel {
    fn n_params(&self) -> usize {
        2 + 2 * self.peaks
    }

    fn value(&self, x: f64, p: &[f64]) -> f64 {
        let (g, b) = (p[0], p[1]);
        (0..self.peaks)
            .map(|n| {
                let sd = p[2 + self.peaks + n].abs() * g;
                p[2 + n] * normal_interval_mass(b + n as f64 * g, sd, x, x + self.width)
            })
            .sum()
    }

    fn gradient(&self, x: f64, p: &[f64], grad: &mut [f64]) {
        let k = self.peaks;
        let (g, b) = (p[0], p[1]);
        grad.iter_mut().for_each(|v| *v = 0.0);
        for n in 0..k {
            let a = p[2 + n];
            let sig = p[2 + k + n];
            let s = sig.abs();
            let sd = s * g;
            let mu = b + n as f64 * g;
            let (ul, uh) = ((x - mu) / sd, (x + self.width - mu) / sd);
            let (fl, fh) = (std_pdf(ul), std_pdf(uh));
            grad[2 + n] = normal_interval_mass(mu, sd, x, x + self.width);
            // d u / d b = −1/sd, d u / d σ = −u/σ, d u / d g = −n/sd − u/g.
            grad[1] += a * (fh - fl) * (-1.0 / sd);
            grad[2 + k + n] = a * (fh * (-uh / s) - fl * (-ul / s)) * sig.signum();
            let dn = n as f64 / sd;
            grad[0] += a * (fh * (-dn - uh / g) - fl * (-dn - ul / g));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NoiseCurve {
    pub sigma0: f64,
    pub sigma0_err: f64,
    pub c1: f64,
    pub c1_err: f64,
}

/// Weighted line `σ_n² = σ₀² + c₁² n` through fitted widths. With standard
/// errors the weights are `1/(2σ_n δσ_n)²` and the covariance is unscaled;
/// without, unit weights and the residual-scaled covariance.
pub fn fit_noise_curve(widths: &[f64], errs: Option<&[f64]>) -> Result<NoiseCurve> {
    if widths.len() < 3 {
        return Err(Error::InsufficientData("noise curve needs at least 3 widths".into()));
    }
    let y: Vec<f64> = widths.iter().map(|s| s * s).collect();
    let w: Vec<f64> = match errs {
        Some(e) if e.len() == widths.len() && e.iter().all(|&v| v > 0.0) => {
            widths.iter().zip(e).map(|(s, d)| 1.0 / (2.0 * s * d).powi(2)).collect()
        }
        Some(e) if e.len() != widths.len() => return Err(Error::Mismatch(widths.len(), e.len())),
        _ => vec![1.0; widths.len()],
    };
    let scaled = w.iter().all(|&v| v == 1.0);
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (n, (&yi, &wi)) in y.iter().zip(&w).enumerate() {
        let x = n as f64;
        sw += wi;
        sx += wi * x;
        sy += wi * yi;
        sxx += wi * x * x;
        sxy += wi * x * yi;
    }
    let det = sw * sxx - sx * sx;
    if !(det > 0.0) {
        return Err(Error::Singular("noise curve"));
    }
    let slope = (sw * sxy - sx * sy) / det;
    let icpt = (sxx * sy - sx * sxy) / det;
    let mut var_a = sxx / det;
    let mut var_b = sw / det;
    if scaled {
        let chi2: f64 = y.iter().enumerate().map(|(n, yi)| (yi - icpt - slope * n as f64).powi(2)).sum();
        let s = chi2 / (y.len() - 2) as f64;
        var_a *= s;
        var_b *= s;
    }
    if !(icpt > 0.0) {
        return Err(Error::NonPhysical(format!("sigma0^2 = {icpt:e}")));
    }
    let sigma0 = icpt.sqrt();
    let (c1, c1_err) = if slope > 0.0 {
        let c = slope.sqrt();
        (c, var_b.sqrt() / (2.0 * c))
    } else {
        (0.0, var_b.sqrt().sqrt())
    };
    Ok(NoiseCurve {
        sigma0,
        sigma0_err: var_a.sqrt() / (2.0 * sigma0),
        c1,
        c1_err,
    })
}

/// Histogram fit over coarse initial values: bins of `g/bins_per_peak`,
/// free peaks `0..=n_max_fit` plus one more with its width predicted from the
/// noise law of the others.
pub fn fit_histogram(signals: &[f64], opts: &HistogramFitOptions) -> Result<DetectorCalibration> {
    let coarse = coarse_peaks(signals)?;
    let mut events = Vec::new();
    for n in 0..opts.max_peaks {
        let lo = coarse.b + (n as f64 - 0.5) * coarse.g;
        let c = signals.iter().filter(|&&s| s >= lo && s < lo + coarse.g).count();
        events.push(c);
    }
    let n_max_fit = events.iter().rposition(|&c| c >= opts.min_events).unwrap_or(0);
    let peaks = n_max_fit + 2;
    let width = coarse.g / opts.bins_per_peak as f64;
    let lo = coarse.b - coarse.g;
    let bins = (peaks + 1) * opts.bins_per_peak;
    let trimmed: Vec<f64> = signals.iter().copied().filter(|s| (s - coarse.b).abs() < 0.5 * coarse.g).collect();
    let mz = trimmed.iter().sum::<f64>() / trimmed.len().max(1) as f64;
    let sd0 = (trimmed.iter().map(|s| (s - mz).powi(2)).sum::<f64>() / trimmed.len().max(2) as f64).sqrt();
    let sigma_init = (sd0 / coarse.g).max(1e-3);
    fit_histogram_counts(
        &Histogram::from_signals(signals, lo, width, bins),
        coarse,
        n_max_fit,
        sigma_init,
        opts,
    )
}

/// Fit of a given histogram with peaks `0..=n_max_fit + 1`.
pub fn fit_histogram_counts(
    hist: &Histogram,
    coarse: CoarsePeaks,
    n_max_fit: usize,
    sigma_init: f64,
    opts: &HistogramFitOptions,
) -> Result<DetectorCalibration> {
    let peaks = n_max_fit + 2;
    let model = PeakModel {
        width: hist.width,
        peaks,
    };
    let xs: Vec<f64> = (0..hist.counts.len()).map(|i| hist.edge(i)).collect();
    let nearest = |x: f64, g: f64, b: f64| (((x + 0.5 * hist.width - b) / g).round().max(0.0) as usize).min(peaks - 1);
    let mut peak_events = vec![0.0; peaks];
    for (i, &c) in hist.counts.iter().enumerate() {
        peak_events[nearest(xs[i], coarse.g, coarse.b)] += c;
    }
    let weights: Vec<f64> = xs
        .iter()
        .map(|&x| 1.0 / peak_events[nearest(x, coarse.g, coarse.b)].max(1.0))
        .collect();
    let mut p = vec![coarse.g, coarse.b];
    p.extend(peak_events.iter().copied());
    p.extend(core::iter::repeat_n(sigma_init, peaks));
    // Sparse peaks and the outermost one take their widths from the law.
    let tied: Vec<bool> = (0..peaks)
        .map(|n| n == peaks - 1 || (n > 0 && peak_events[n] < opts.min_events as f64))
        .collect();
    let mut fixed = vec![false; p.len()];
    for (n, &t) in tied.iter().enumerate() {
        fixed[2 + peaks + n] = t;
    }
    let opts_lsq = LsqOptions {
        fixed: fixed.clone(),
        ..LsqOptions::default()
    };
    let mut result = None;
    for _ in 0..opts.width_iterations.max(1) {
        let fit = weighted_least_squares(&model, &xs, &hist.counts, &weights, &p, &opts_lsq)?;
        p = fit.params.clone();
        let widths: Vec<f64> = p[2 + peaks..].iter().map(|v| v.abs()).collect();
        let cov = sandwich(&model, &xs, &weights, &p, &fixed)?;
        let errs: Vec<f64> = (0..peaks)
            .map(|n| cov[(2 + peaks + n) * p.len() + 2 + peaks + n].max(0.0).sqrt())
            .collect();
        let free_w: Vec<f64> = (0..peaks).filter(|&n| !tied[n]).map(|n| widths[n]).collect();
        let free_e: Vec<f64> = (0..peaks).filter(|&n| !tied[n]).map(|n| errs[n]).collect();
        let curve = if free_w.len() >= 3 {
            fit_noise_curve(&free_w, Some(&free_e))?
        } else {
            NoiseCurve {
                sigma0: free_w.iter().sum::<f64>() / free_w.len() as f64,
                sigma0_err: f64::NAN,
                c1: 0.0,
                c1_err: f64::NAN,
            }
        };
        let mut change: f64 = 0.0;
        let mut widths = widths;
        for n in (0..peaks).filter(|&n| tied[n]) {
            let predicted = (curve.sigma0 * curve.sigma0 + curve.c1 * curve.c1 * n as f64).sqrt();
            change = change.max((predicted - widths[n]).abs());
            p[2 + peaks + n] = predicted;
            widths[n] = predicted;
        }
        let se = |k: usize| cov[k * p.len() + k].max(0.0).sqrt();
        result = Some(DetectorCalibration {
            g: p[0],
            g_err: se(0),
            b: p[1],
            b_err: se(1),
            sigma0: curve.sigma0,
            sigma0_err: curve.sigma0_err,
            c1: curve.c1,
            c1_err: curve.c1_err,
            n_max_fit,
            heights: p[2..2 + peaks].to_vec(),
            height_errs: (0..peaks).map(|n| se(2 + n)).collect(),
            widths,
            width_errs: errs,
            chi2: fit.chi2,
            dof: fit.dof,
        });
        if change < 1e-9 {
            break;
        }
    }
    let cal = result.unwrap();
    if !(cal.g > 0.0) || !cal.g.is_finite() {
        return Err(Error::NotConverged {
            context: "histogram fit",
            best: p,
            best_value: cal.chi2,
        });
    }
    Ok(cal)
}

/// `H⁻¹ (Jᵀ W V W J) H⁻¹` with `H = Jᵀ W J` and Poisson variances `V` from the
/// model; zeros for fixed parameters.
fn sandwich(model: &PeakModel, xs: &[f64], w: &[f64], p: &[f64], fixed: &[bool]) -> Result<Vec<f64>> {
    let np = p.len();
    let free: Vec<usize> = (0..np).filter(|&k| !fixed[k]).collect();
    let nf = free.len();
    let j = jacobian(model, xs, p);
    let mut h = vec![0.0; nf * nf];
    let mut m = vec![0.0; nf * nf];
    for (i, &x) in xs.iter().enumerate() {
        let v = model.value(x, p).max(0.0);
        let row = &j[i * np..(i + 1) * np];
        for (a, &ka) in free.iter().enumerate() {
            for (b, &kb) in free.iter().enumerate() {
                let jj = row[ka] * row[kb];
                h[a * nf + b] += w[i] * jj;
                m[a * nf + b] += w[i] * w[i] * v * jj;
            }
        }
    }
    let hi = invert_spd(&h, nf)?;
    let mut tmp = vec![0.0; nf * nf];
    for a in 0..nf {
        for b in 0..nf {
            tmp[a * nf + b] = (0..nf).map(|c| hi[a * nf + c] * m[c * nf + b]).sum();
        }
    }
    let mut full = vec![0.0; np * np];
    for a in 0..nf {
        for b in 0..nf {
            full[free[a] * np + free[b]] = (0..nf).map(|c| tmp[a * nf + c] * hi[c * nf + b]).sum();
        }
    }
    Ok(full)
}

/// Nearest peak, `n = ⌈(s − b)/g − ½⌉` clamped at zero; midpoints go to the
/// lower peak.
pub fn quantize(signal: f64, calib: &DetectorCalibration) -> u32 {
    quantize_with(signal, calib.g, calib.b)
}

pub fn quantize_with(signal: f64, g: f64, b: f64) -> u32 {
    let n = ((signal - b) / g - 0.5).ceil();
    if n > 0.0 {
        n as u32
    } else {
        0
    }
}

/// Atom numbers of every shot as `(N₊, N₋)` rows.
pub fn quantize_table(
    signals: &SignalTable,
    minus: &DetectorCalibration,
    plus: &DetectorCalibration,
    theta: f64,
) -> Result<ShotTable> {
    ShotTable::new(
        theta,
        signals
            .rows
            .iter()
            .map(|r| (quantize(r.s_plus, plus), quantize(r.s_minus, minus)))
            .collect(),
    )
}

/// Probability that `n` atoms are counted as `n`: the Gaussian mass of the
/// peak inside its quantisation interval. The zero interval is open below.
pub fn detection_fidelity(n: usize, calib: &DetectorCalibration) -> f64 {
    detection_fidelity_law(n, &calib.blur_law())
}

pub fn detection_fidelity_law(n: usize, law: &BlurLaw) -> f64 {
    let s = law.sigma(n);
    if s <= 0.0 {
        return 1.0;
    }
    if n == 0 {
        normal_cdf(0.5 / s)
    } else {
        1.0 - 2.0 * normal_cdf(-0.5 / s)
    }
}

/// Full chain for both modes: crosstalk, drift, histogram fits.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CalibrationRun {
    pub crosstalk: CrosstalkFit,
    pub drift: DriftFit,
    pub minus: DetectorCalibration,
    pub plus: DetectorCalibration,
}

pub fn calibrate(
    table: &SignalTable,
    window: usize,
    opts: &HistogramFitOptions,
) -> Result<(SignalTable, CalibrationRun)> {
    let (t1, crosstalk) = correct_crosstalk(table)?;
    let (t2, drift) = correct_drift(&t1, window)?;
    let minus = fit_histogram(&t2.mode(Mode::Minus), opts)?;
    let plus = fit_histogram(&t2.mode(Mode::Plus), opts)?;
    Ok((
        t2,
        CalibrationRun {
            crosstalk,
            drift,
            minus,
            plus,
        },
    ))
}
