//! File formats: headered CSV tables and JSON documents with run metadata.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hom_core::detector::{SignalRow, SignalTable};
use hom_core::metrology::ShotTable;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

/// Metadata embedded in every output document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
}

impl Meta {
    pub fn new(command: &str, cfg: &RunConfig) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed: cfg.seed,
            config_hash: cfg.hash(),
        }
    }
}

#[derive(Serialize)]
struct Document<'a, T: Serialize> {
    meta: &'a Meta,
    #[serde(flatten)]
    body: &'a T,
}

pub fn write_json<T: Serialize>(path: &Path, meta: &Meta, body: &T) -> Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, &Document { meta, body })?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .with_context(|| format!("creating {}", path.display()))
}

/// Writes a header row and records of floats or integers.
pub fn write_table<R: AsRef<[String]>>(path: &Path, header: &[&str], rows: &[R]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.as_ref())?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct ShotRecord {
    #[serde(rename = "N_plus")]
    n_plus: u32,
    #[serde(rename = "N_minus")]
    n_minus: u32,
}

pub fn write_shots(path: &Path, table: &ShotTable) -> Result<()> {
    let mut w = csv_writer(path)?;
    for &(p, m) in &table.rows {
        w.serialize(ShotRecord { n_plus: p, n_minus: m })?;
    }
    if table.rows.is_empty() {
        w.write_record(["N_plus", "N_minus"])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_shots(path: &Path, theta: f64) -> Result<ShotTable> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let rows = r
        .deserialize::<ShotRecord>()
        .map(|rec| rec.map(|s| (s.n_plus, s.n_minus)))
        .collect::<std::result::Result<Vec<_>, _>>()
        .with_context(|| format!("parsing {}", path.display()))?;
    Ok(ShotTable::new(theta, rows)?)
}

pub fn write_signals(path: &Path, table: &SignalTable) -> Result<()> {
    let mut w = csv_writer(path)?;
    for r in &table.rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_signals(path: &Path) -> Result<SignalTable> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let rows = r
        .deserialize::<SignalRow>()
        .collect::<std::result::Result<Vec<_>, _>>()
        .with_context(|| format!("parsing {}", path.display()))?;
    Ok(SignalTable::new(rows)?)
}

/// Index of shot files written by `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotIndex {
    pub files: Vec<ShotFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotFile {
    pub theta: f64,
    pub path: String,
}

pub const SHOT_INDEX: &str = "shots.json";

/// Resolves `path@theta` arguments; a directory argument is read through
/// its shot index.
pub fn resolve_shot_args(args: &[String]) -> Result<Vec<ShotTable>> {
    let mut out = Vec::new();
    for a in args {
        if let Some((p, t)) = a.rsplit_once('@') {
            let theta: f64 = t.parse().with_context(|| format!("angle in `{a}`"))?;
            out.push(read_shots(Path::new(p), theta)?);
            continue;
        }
        let p = PathBuf::from(a);
        if p.is_dir() {
            #[derive(Deserialize)]
            struct Wrapped {
                files: Vec<ShotFile>,
            }
            let idx: Wrapped = read_json(&p.join(SHOT_INDEX))?;
            for f in idx.files {
                out.push(read_shots(&p.join(&f.path), f.theta)?);
            }
        } else {
            bail!("`{a}`: give a directory with {SHOT_INDEX} or path@theta");
        }
    }
    if out.is_empty() {
        bail!("no shot files given");
    }
    Ok(out)
}
