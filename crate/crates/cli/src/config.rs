//! Run configuration: JSON or `key = value` text, with defaults for every
//! field.

use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use anyhow::{bail, Context, Result};
use hom_core::channel::NoiseModelParams;
use hom_core::detector::{HistogramFitOptions, SynthesisSpec, DRIFT_WINDOW};
use hom_core::fock::{SqueezedSource, DEFAULT_N_MAX};
use hom_core::stats::DEFAULT_RESAMPLES;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FisherConfig {
    pub quartic: bool,
    /// Drop every pair touching the 14-atom, 0.35 rad point.
    pub exclude_n14: bool,
    pub include_self: bool,
    /// Reference angles; empty means all.
    pub theta1: Vec<f64>,
    /// Treat measured frequencies as exact instead of resampling.
    pub exact: bool,
    pub atom_numbers: Vec<usize>,
}

impl Default for FisherConfig {
    fn default() -> Self {
        Self {
            quartic: false,
            exclude_n14: false,
            include_self: true,
            theta1: Vec::new(),
            exact: false,
            atom_numbers: (2..=14).step_by(2).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub source: SqueezedSource,
    pub n_max: usize,
    pub angles: Vec<f64>,
    pub shots_per_angle: usize,
    pub noise: NoiseModelParams,
    pub synthesis: SynthesisSpec,
    pub drift_window: usize,
    pub histogram: HistogramFitOptions,
    pub resamples: usize,
    /// Atom numbers reported by `analyze`.
    pub atom_numbers: Vec<usize>,
    pub fisher: FisherConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            source: SqueezedSource::default(),
            n_max: DEFAULT_N_MAX,
            angles: vec![0.0, 0.14, 0.20, 0.28, 0.35, FRAC_PI_2],
            shots_per_angle: 3816,
            noise: NoiseModelParams::default(),
            synthesis: SynthesisSpec::default(),
            drift_window: DRIFT_WINDOW,
            histogram: HistogramFitOptions::default(),
            resamples: DEFAULT_RESAMPLES,
            atom_numbers: (2..=12).step_by(2).collect(),
            fisher: FisherConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text)
    }

    /// JSON if the text starts with `{`, otherwise `key = value` lines with
    /// dotted keys (`noise.a_plus = 0.05`).
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).context("parsing JSON config")?
        } else {
            let mut tree = serde_json::to_value(Self::default())?;
            for (lineno, line) in text.lines().enumerate() {
                let line = line.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let Some((key, value)) = line.split_once('=') else {
                    bail!("config line {}: expected key = value", lineno + 1);
                };
                set_path(&mut tree, key.trim(), parse_scalar(value.trim()))
                    .with_context(|| format!("config line {}", lineno + 1))?;
            }
            serde_json::from_value(tree).context("config values")?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.angles.iter().any(|t| !(0.0..=std::f64::consts::PI).contains(t)) {
            bail!("angles must lie in [0, pi]");
        }
        if self.shots_per_angle == 0 || self.resamples == 0 {
            bail!("shots_per_angle and resamples must be positive");
        }
        if self.atom_numbers.iter().chain(&self.fisher.atom_numbers).any(|n| *n == 0 || *n > 2 * self.n_max) {
            bail!("atom numbers must lie in 1..={}", 2 * self.n_max);
        }
        self.noise.validate()?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

fn parse_scalar(v: &str) -> Value {
    if let Ok(j) = serde_json::from_str::<Value>(v) {
        return j;
    }
    if v.contains(',') {
        let items: Vec<Value> = v.split(',').map(|s| parse_scalar(s.trim())).collect();
        return Value::Array(items);
    }
    Value::String(v.to_string())
}

fn set_path(tree: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut node = tree;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let Value::Object(map) = node else {
            bail!("`{key}`: `{part}` is not a section");
        };
        if i + 1 == parts.len() {
            if !map.contains_key(*part) {
                bail!("unknown key `{key}`");
            }
            // A single item may stand for a one-element list.
            let value = match (&map[*part], value) {
                (Value::Array(_), v @ (Value::Number(_) | Value::String(_) | Value::Bool(_))) => Value::Array(vec![v]),
                (_, v) => v,
            };
            map.insert(part.to_string(), value);
            return Ok(());
        }
        node = map.get_mut(*part).with_context(|| format!("unknown section in `{key}`"))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_value_overrides() {
        let c = RunConfig::parse("seed = 7\nnoise.a_plus = 0.1 # comment\nangles = 0, 1.5707963\n").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.noise.a_plus, 0.1);
        assert_eq!(c.angles.len(), 2);
        assert_eq!(RunConfig::parse("angles = 0.5").unwrap().angles, vec![0.5]);
        assert!(RunConfig::parse("bogus = 1").is_err());
        assert!(RunConfig::parse("angles = 4.0").is_err());
    }

    #[test]
    fn json_and_defaults_agree() {
        let c = RunConfig::parse("{\"seed\": 3}").unwrap();
        assert_eq!(c, RunConfig { seed: 3, ..RunConfig::default() });
        assert_ne!(c.hash(), RunConfig::default().hash());
        assert_eq!(c.hash(), RunConfig::parse("seed = 3").unwrap().hash());
    }
}
