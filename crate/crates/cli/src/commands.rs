//! The command verbs.

use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use anyhow::{bail, Context, Result};
use hom_core::channel::{fit_with, predict, ChannelFit, ChannelFitOptions};
use hom_core::detector::{
    calibrate, quantize_table, synthesize_signals, CalibrationRun, DetectorCalibration, Histogram, Mode,
};
use hom_core::entanglement::{
    depth_parity, depth_variance, parity_witness_xyz, resampled_depth, symmetry_parameter, variance_checks,
    witness_indefinite_n, CollectiveData, DepthResult, IndefiniteWitness, KCheck, ParityWitness, ResampledDepth,
    SmBoundarySet,
};
use hom_core::fock::{collective_moments, holland_burnett, tmsv_distribution, FixedNDistribution, LEAKAGE_WARNING};
use hom_core::metrology::{
    empirical_distribution, fidelity, fisher_exact, fisher_resampled, generalized_squeezing, jxjy2_estimate,
    sample_shots, AngleSeries, FisherEstimate, FisherOptions, ShotTable,
};
use hom_core::stats::{asymmetric_std, stream_rng, ResamplePlan};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::exec::Rayon;
use crate::io::{
    read_json, read_signals, resolve_shot_args, write_json, write_shots, write_signals, write_table, Meta, ShotFile,
    SHOT_INDEX,
};

fn f(v: f64) -> String {
    format!("{v}")
}

#[derive(Serialize)]
struct SimulateReport {
    files: Vec<ShotFile>,
    signal_files: Vec<String>,
    mean_total_atoms: Vec<f64>,
    /// Source probability beyond `n_max` pairs, removed by renormalisation.
    source_truncated_mass: f64,
    /// Per angle: source tail plus rotated mass beyond `n_max` in one mode.
    truncated_mass: Vec<f64>,
    config: RunConfig,
}

/// Shot tables per angle from the channel prediction, optionally with
/// synthetic camera signals.
pub fn simulate(cfg: &RunConfig, out: &Path, signals: bool) -> Result<()> {
    let ideal = tmsv_distribution(&cfg.source, cfg.n_max)?;
    if ideal.truncated_mass() > LEAKAGE_WARNING {
        eprintln!("notice: source mass {:.2e} beyond n_max = {} dropped", ideal.truncated_mass(), cfg.n_max);
    }
    let mut files = Vec::new();
    let mut signal_files = Vec::new();
    let mut means = Vec::new();
    let mut tails = Vec::new();
    for (i, &theta) in cfg.angles.iter().enumerate() {
        let dist = predict(&ideal, theta, &cfg.noise)?;
        tails.push(dist.truncated_mass());
        let mut rng = stream_rng(cfg.seed, i as u64);
        let table = sample_shots(&dist, theta, cfg.shots_per_angle, &mut rng)?;
        let name = format!("shots_{i:02}.csv");
        write_shots(&out.join(&name), &table)?;
        files.push(ShotFile { theta, path: name });
        means.push(table.rows.iter().map(|&(a, b)| (a + b) as f64).sum::<f64>() / table.len().max(1) as f64);
        if signals {
            let s = synthesize_signals(&table, &cfg.synthesis, cfg.seed.wrapping_add(1000 + i as u64));
            let name = format!("signals_{i:02}.csv");
            write_signals(&out.join(&name), &s)?;
            signal_files.push(name);
        }
    }
    let report = SimulateReport {
        files,
        signal_files,
        mean_total_atoms: means,
        source_truncated_mass: ideal.truncated_mass(),
        truncated_mass: tails,
        config: cfg.clone(),
    };
    write_json(&out.join(SHOT_INDEX), &Meta::new("simulate", cfg), &report)
}

#[derive(Serialize)]
struct CalibrateReport<'a> {
    calibration: &'a CalibrationRun,
    shots: usize,
}

fn histogram_rows(signals: &[f64], cal: &DetectorCalibration, bins_per_peak: usize) -> Vec<Vec<String>> {
    let width = cal.g / bins_per_peak as f64;
    let bins = (cal.n_max_fit + 4) * bins_per_peak;
    let hist = Histogram::from_signals(signals, cal.b - cal.g, width, bins);
    let model = cal.predict(&hist);
    (0..bins)
        .map(|i| vec![f(hist.edge(i)), f(hist.counts[i]), f(model[i])])
        .collect()
}

/// Crosstalk, drift and histogram fits of a signal table.
pub fn calibrate_cmd(cfg: &RunConfig, signals: &Path, out: &Path, quantize_theta: Option<f64>) -> Result<()> {
    let table = read_signals(signals)?;
    let (corrected, run) = calibrate(&table, cfg.drift_window, &cfg.histogram)?;
    let meta = Meta::new("calibrate", cfg);
    write_json(
        &out.join("calibration.json"),
        &meta,
        &CalibrateReport {
            calibration: &run,
            shots: table.len(),
        },
    )?;
    for (mode, cal, tag) in [(Mode::Minus, &run.minus, "minus"), (Mode::Plus, &run.plus, "plus")] {
        let rows = histogram_rows(&corrected.mode(mode), cal, cfg.histogram.bins_per_peak);
        write_table(&out.join(format!("histogram_{tag}.csv")), &["signal_lo", "counts", "model"], &rows)?;
        let noise: Vec<Vec<String>> = cal
            .widths
            .iter()
            .zip(&cal.width_errs)
            .enumerate()
            .map(|(n, (w, e))| vec![n.to_string(), f(*w), f(*e), f(cal.sigma(n))])
            .collect();
        write_table(&out.join(format!("noise_{tag}.csv")), &["n", "sigma", "sigma_err", "law"], &noise)?;
    }
    let drift: Vec<Vec<String>> = (0..run.drift.minus.centers.len())
        .map(|w| {
            vec![
                w.to_string(),
                f(run.drift.minus.centers[w]),
                f(run.drift.minus.errors[w]),
                f(run.drift.plus.centers[w]),
                f(run.drift.plus.errors[w]),
            ]
        })
        .collect();
    write_table(
        &out.join("drift.csv"),
        &["window", "center_minus", "err_minus", "center_plus", "err_plus"],
        &drift,
    )?;
    if let Some(theta) = quantize_theta {
        let shots = quantize_table(&corrected, &run.minus, &run.plus, theta)?;
        write_shots(&out.join("shots_00.csv"), &shots)?;
        #[derive(Serialize)]
        struct Index {
            files: Vec<ShotFile>,
        }
        write_json(
            &out.join(SHOT_INDEX),
            &meta,
            &Index {
                files: vec![ShotFile {
                    theta,
                    path: "shots_00.csv".into(),
                }],
            },
        )?;
    }
    Ok(())
}

/// Value with asymmetric resampled errors.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Est {
    pub value: f64,
    pub up: f64,
    pub down: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalyzeRow {
    pub n_total: usize,
    pub shots_z: u64,
    pub shots_x: Option<u64>,
    pub fidelity_z: f64,
    pub fidelity_x: Option<f64>,
    pub parity_z: Est,
    pub var_jz: Est,
    pub parity_x: Option<Est>,
    pub jxjy2: Option<Est>,
    pub symmetry: Option<Est>,
    pub squeezing_db: Option<Est>,
    pub parity_witness: Option<ParityWitness>,
    pub depth: Option<ResampledDepth>,
}

#[derive(Serialize)]
struct AnalyzeReport {
    rows: Vec<AnalyzeRow>,
    witness_indefinite_n: Option<IndefiniteWitness>,
    channel_fit: Option<ChannelFit>,
    notices: Vec<String>,
}

fn find_angle(tables: &[ShotTable], theta: f64) -> Option<&ShotTable> {
    tables.iter().find(|t| (t.theta - theta).abs() < 1e-6)
}

fn est(value: f64, samples: &[f64]) -> Result<Est> {
    let finite: Vec<f64> = samples.iter().copied().filter(|v| v.is_finite()).collect();
    let (up, down) = if finite.len() >= 2 { asymmetric_std(&finite)? } else { (0.0, 0.0) };
    Ok(Est { value, up, down })
}

fn squeezing(z: &FixedNDistribution, x: &FixedNDistribution) -> f64 {
    generalized_squeezing(collective_moments(z).var_jz, jxjy2_estimate(x), z.n_total)
        .map(|s| s.db)
        .unwrap_or(f64::NAN)
}

fn analyze_n(
    cfg: &RunConfig,
    n: usize,
    z: FixedNDistribution,
    x: Option<FixedNDistribution>,
    boundary: &SmBoundarySet,
) -> Result<AnalyzeRow> {
    let mz = collective_moments(&z);
    let seed = cfg.seed.wrapping_add(n as u64);
    let twin = FixedNDistribution::delta(n, n / 2);
    let mut sets = vec![z.clone()];
    if let Some(x) = &x {
        sets.push(x.clone());
    }
    let plan = ResamplePlan::new(sets, cfg.resamples, seed)?;
    let mut cols: [Vec<f64>; 6] = Default::default();
    for s in plan.iter() {
        let m = collective_moments(&s[0]);
        cols[0].push(m.parity);
        cols[1].push(m.var_jz);
        if let Some(xs) = s.get(1) {
            let j2 = jxjy2_estimate(xs);
            cols[2].push(collective_moments(xs).parity);
            cols[3].push(j2);
            cols[4].push(j2 / (n as f64 * (n as f64 + 2.0) / 4.0));
            cols[5].push(squeezing(&s[0], xs));
        }
    }
    let mut row = AnalyzeRow {
        n_total: n,
        shots_z: z.sample_size.unwrap_or(0),
        shots_x: None,
        fidelity_z: fidelity(&z, &twin)?,
        fidelity_x: None,
        parity_z: est(mz.parity, &cols[0])?,
        var_jz: est(mz.var_jz, &cols[1])?,
        parity_x: None,
        jxjy2: None,
        symmetry: None,
        squeezing_db: None,
        parity_witness: None,
        depth: None,
    };
    if let Some(x) = x {
        let data = CollectiveData::from_distributions(&z, &x)?;
        row.shots_x = x.sample_size;
        row.fidelity_x = Some(fidelity(&x, &holland_burnett(n)?)?);
        row.parity_x = Some(est(data.parity_x, &cols[2])?);
        row.jxjy2 = Some(est(data.jxjy2, &cols[3])?);
        row.symmetry = Some(est(symmetry_parameter(&data), &cols[4])?);
        row.squeezing_db = Some(est(squeezing(&z, &x), &cols[5])?);
        row.parity_witness = Some(parity_witness_xyz(&data));
        if n % 2 == 0 {
            row.depth = Some(resampled_depth(&z, &x, cfg.resamples, seed, boundary)?);
        }
    }
    Ok(row)
}

fn sym(e: &Est) -> f64 {
    ((e.up * e.up + e.down * e.down) / 2.0).sqrt()
}

/// Per-`N` state characterisation from the uncoupled (`θ = 0`) and coupled
/// (`θ = π/2`) datasets.
pub fn analyze(cfg: &RunConfig, shots: &[String], out: &Path, fit_channel: bool) -> Result<()> {
    let tables = resolve_shot_args(shots)?;
    let mut notices = Vec::new();
    let tz = find_angle(&tables, 0.0).context("analysis needs a dataset at theta = 0")?;
    let tx = find_angle(&tables, FRAC_PI_2);
    if tx.is_none() {
        notices.push("no dataset at theta = pi/2: coupled moments, witnesses and depth omitted".to_string());
    }
    let n_top = cfg.atom_numbers.iter().copied().max().unwrap_or(2);
    let boundary = SmBoundarySet::for_atoms(n_top)?;
    let inputs: Vec<(usize, FixedNDistribution, Option<FixedNDistribution>)> = cfg
        .atom_numbers
        .iter()
        .filter_map(|&n| match empirical_distribution(tz, n) {
            Ok(z) => Some((n, z, tx.and_then(|t| empirical_distribution(t, n).ok()))),
            Err(_) => None,
        })
        .collect();
    for &n in &cfg.atom_numbers {
        if !inputs.iter().any(|(m, _, _)| *m == n) {
            notices.push(format!("no shots at N = {n}"));
        }
    }
    let rows = inputs
        .into_par_iter()
        .map(|(n, z, x)| analyze_n(cfg, n, z, x, &boundary))
        .collect::<Result<Vec<_>>>()?;

    let witness_rows: Vec<(CollectiveData, f64)> = rows
        .iter()
        .filter(|r| r.n_total >= 2 && r.jxjy2.is_some())
        .map(|r| {
            let j2 = r.jxjy2.unwrap();
            let d = CollectiveData {
                jxjy2_err: Some(sym(&j2)),
                var_jz_err: Some(sym(&r.var_jz)),
                ..CollectiveData::new(r.n_total, j2.value, r.var_jz.value, r.parity_z.value, r.parity_x.unwrap().value)
            };
            (d, r.shots_z as f64)
        })
        .collect();
    let witness = if witness_rows.is_empty() {
        None
    } else {
        Some(witness_indefinite_n(&witness_rows)?)
    };
    let channel_fit = if fit_channel {
        let opts = ChannelFitOptions {
            n_max: cfg.n_max,
            de: hom_core::stats::DeOptions {
                seed: cfg.seed,
                ..Default::default()
            },
            ..Default::default()
        };
        Some(fit_with(&cfg.noise, &tables, &opts, &Rayon)?)
    } else {
        None
    };
    write_ed_tables(out, &rows)?;
    for n in &notices {
        eprintln!("notice: {n}");
    }
    write_json(
        &out.join("report.json"),
        &Meta::new("analyze", cfg),
        &AnalyzeReport {
            rows,
            witness_indefinite_n: witness,
            channel_fit,
            notices,
        },
    )
}

fn write_ed_tables(out: &Path, rows: &[AnalyzeRow]) -> Result<()> {
    let opt = |e: Option<Est>| e.map(|e| [f(e.value), f(sym(&e))]).unwrap_or_else(|| ["".into(), "".into()]);
    let t1: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut v = vec![r.n_total.to_string()];
            v.extend(opt(r.parity_x));
            v.extend([f(r.parity_z.value.abs()), f(sym(&r.parity_z))]);
            v.extend(opt(r.jxjy2));
            v.extend(opt(r.symmetry));
            v.extend([f(r.var_jz.value), f(sym(&r.var_jz))]);
            v
        })
        .collect();
    write_table(
        &out.join("collective.csv"),
        &[
            "N", "parity_x", "parity_x_err", "abs_parity_z", "parity_z_err", "jxjy2", "jxjy2_err", "symmetry",
            "symmetry_err", "var_jz", "var_jz_err",
        ],
        &t1,
    )?;
    let t2: Vec<Vec<String>> = rows
        .iter()
        .filter_map(|r| r.depth.as_ref())
        .map(|d| {
            vec![
                d.n_total.to_string(),
                d.parity.k68.to_string(),
                d.variance.k68.to_string(),
                d.parity.k95.to_string(),
                d.variance.k95.to_string(),
                f(d.fallback_fraction),
            ]
        })
        .collect();
    if !t2.is_empty() {
        write_table(
            &out.join("depth.csv"),
            &["N", "k68_parity", "k68_variance", "k95_parity", "k95_variance", "fallback_fraction"],
            &t2,
        )?;
    }
    let sq: Vec<Vec<String>> = rows
        .iter()
        .filter_map(|r| r.squeezing_db.map(|e| vec![r.n_total.to_string(), f(e.value), f(e.up), f(e.down)]))
        .collect();
    write_table(&out.join("squeezing.csv"), &["N", "xi2_db", "up", "down"], &sq)
}

#[derive(Serialize)]
struct FisherReport<'a> {
    estimate: &'a FisherEstimate,
    options: &'a crate::config::FisherConfig,
    angles_used: Vec<f64>,
    notices: Vec<String>,
}

/// Hellinger-distance Fisher information per atom number and its scaling.
pub fn fisher(cfg: &RunConfig, shots: &[String], out: &Path) -> Result<()> {
    let all = resolve_shot_args(shots)?;
    // The coupling sequence is far outside the Taylor range.
    let tables: Vec<ShotTable> = all.into_iter().filter(|t| t.theta < 1.0).collect();
    if tables.len() < 3 {
        bail!("the Fisher fit needs at least 3 small-angle datasets");
    }
    let mut notices = Vec::new();
    let mut series = Vec::new();
    for &n in &cfg.fisher.atom_numbers {
        match AngleSeries::from_shots(&tables, n) {
            Ok(s) => series.push(s),
            Err(e) => notices.push(format!("N = {n} skipped: {e}")),
        }
    }
    let fc = &cfg.fisher;
    let opts = FisherOptions {
        quartic: fc.quartic,
        exclude: if fc.exclude_n14 {
            vec![FisherOptions::N14_EXCLUSION]
        } else {
            Vec::new()
        },
        include_self: fc.include_self,
        theta1: fc.theta1.clone(),
    };
    let est = if fc.exact {
        fisher_exact(&series, &opts)?
    } else {
        fisher_resampled(&series, &opts, cfg.resamples, cfg.seed)?
    };
    let scaling: Vec<Vec<String>> = est
        .per_n
        .iter()
        .map(|p| {
            let n = p.n_total as f64;
            let (lo, hi) = est.scaling.band(n, 1.0);
            vec![
                p.n_total.to_string(),
                f(p.aggregate.f_bar),
                f(p.aggregate.f_bar_err),
                f(est.scaling.value(n)),
                f(lo),
                f(hi),
            ]
        })
        .collect();
    write_table(
        &out.join("fisher_scaling.csv"),
        &["N", "f_bar", "f_bar_err", "fit", "band_lo", "band_hi"],
        &scaling,
    )?;
    let mut hell = Vec::new();
    for p in &est.per_n {
        for g in &p.points {
            for h in g {
                hell.push(vec![
                    p.n_total.to_string(),
                    f(h.theta1),
                    f(h.theta2),
                    f(h.d2),
                    h.sigma.map(f).unwrap_or_default(),
                ]);
            }
        }
    }
    write_table(&out.join("hellinger.csv"), &["N", "theta1", "theta2", "d2", "sigma"], &hell)?;
    for n in &notices {
        eprintln!("notice: {n}");
    }
    write_json(
        &out.join("fisher.json"),
        &Meta::new("fisher", cfg),
        &FisherReport {
            estimate: &est,
            options: fc,
            angles_used: tables.iter().map(|t| t.theta).collect(),
            notices,
        },
    )
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Rows<T> {
    Bare(Vec<T>),
    Wrapped { rows: Vec<T> },
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    Ok(match read_json::<Rows<T>>(path)? {
        Rows::Bare(v) | Rows::Wrapped { rows: v } => v,
    })
}

#[derive(Serialize)]
struct DepthRow {
    n_total: usize,
    parity: DepthResult,
    variance: DepthResult,
    checks: Vec<(KCheck, KCheck)>,
}

/// Point-estimate depths from collective-moment rows.
pub fn depth(cfg: &RunConfig, rows: &Path, out: &Path) -> Result<()> {
    let data: Vec<CollectiveData> = read_rows(rows)?;
    let n_top = data.iter().map(|d| d.n_total).max().unwrap_or(2);
    let boundary = SmBoundarySet::for_atoms(n_top)?;
    let results = data
        .iter()
        .map(|d| {
            Ok(DepthRow {
                n_total: d.n_total,
                parity: depth_parity(d, &boundary)?,
                variance: depth_variance(d, &boundary)?,
                checks: (2..d.n_total)
                    .map(|k| variance_checks(d, k, &boundary))
                    .collect::<hom_core::Result<Vec<_>>>()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let table: Vec<Vec<String>> = results
        .iter()
        .map(|r| vec![r.n_total.to_string(), r.parity.depth.to_string(), r.variance.depth.to_string()])
        .collect();
    write_table(&out.join("depth.csv"), &["N", "depth_parity", "depth_variance"], &table)?;
    #[derive(Serialize)]
    struct Body {
        rows: Vec<DepthRow>,
    }
    write_json(&out.join("depth.json"), &Meta::new("depth", cfg), &Body { rows: results })
}

#[derive(Debug, Clone, Deserialize)]
struct WitnessRow {
    #[serde(flatten)]
    data: CollectiveData,
    #[serde(default)]
    weight: Option<f64>,
}

#[derive(Serialize)]
struct WitnessOut {
    n_total: usize,
    parity: ParityWitness,
    symmetry: f64,
}

/// Parity witness per row and the indefinite-particle-number witness over
/// all rows.
pub fn witness(cfg: &RunConfig, rows: &Path, out: &Path) -> Result<()> {
    let data: Vec<WitnessRow> = read_rows(rows)?;
    let per_row: Vec<WitnessOut> = data
        .iter()
        .map(|r| WitnessOut {
            n_total: r.data.n_total,
            parity: parity_witness_xyz(&r.data),
            symmetry: symmetry_parameter(&r.data),
        })
        .collect();
    let weighted: Vec<(CollectiveData, f64)> = data.iter().map(|r| (r.data, r.weight.unwrap_or(1.0))).collect();
    let indefinite = witness_indefinite_n(&weighted)?;
    #[derive(Serialize)]
    struct Body {
        rows: Vec<WitnessOut>,
        indefinite_n: IndefiniteWitness,
    }
    write_json(
        &out.join("witness.json"),
        &Meta::new("witness", cfg),
        &Body {
            rows: per_row,
            indefinite_n: indefinite,
        },
    )
}
