//! Run configuration: shipped defaults, an optional user file, then flags.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use dkspec::rls::NoiseKind;
use dkspec::series::{Activation, RegimeKind};
use dkspec::Normalization;
use serde::{Deserialize, Serialize};

pub const DEFAULTS: &str = include_str!("../config/defaults.toml");
pub const OUT_ENV: &str = "DKSPEC_OUT";

/// A stack entry: a catalog name or a full table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StackEntry {
    Name(String),
    Full(Activation),
}

pub fn resolve_stack(entries: &[StackEntry]) -> Result<Vec<Activation>> {
    if entries.is_empty() {
        bail!("activation stack is empty");
    }
    entries
        .iter()
        .map(|e| match e {
            StackEntry::Name(n) => Activation::from_str(n).map_err(anyhow::Error::from),
            StackEntry::Full(a) => Ok(a.clone()),
        })
        .collect()
}

pub fn stack_entries(acts: &[Activation]) -> Vec<StackEntry> {
    acts.iter()
        .map(|a| match a {
            Activation::Polynomial { .. } => StackEntry::Full(a.clone()),
            other => StackEntry::Name(other.to_string()),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    pub stack: Vec<StackEntry>,
    pub dim: usize,
    pub max_degree: usize,
    pub count: usize,
    pub depths: Vec<usize>,
    pub normalization: Normalization,
    pub tol: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatioConfig {
    pub stack: Vec<StackEntry>,
    pub max_degree: usize,
    pub references: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DfConfig {
    pub stack: Vec<StackEntry>,
    pub dim: usize,
    pub max_degree: usize,
    pub lambdas: Vec<f64>,
    pub normalization: Normalization,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SandwichConfig {
    pub stack: Vec<StackEntry>,
    pub dim: usize,
    pub max_degree: usize,
    #[serde(default)]
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearningCurveSection {
    pub stack: Vec<StackEntry>,
    pub dim: usize,
    pub beta: f64,
    pub ell_grid: Vec<usize>,
    pub replicates: usize,
    pub n_test: usize,
    pub target: Vec<(usize, f64)>,
    pub spectrum_degree: usize,
    pub noise: NoiseKind,
    #[serde(default)]
    pub regime: Option<RegimeKind>,
    #[serde(default)]
    pub mu: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub stack: Vec<StackEntry>,
    pub dim: usize,
    pub max_degree: usize,
    pub samples: usize,
    pub replicates: usize,
    pub top: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpBoundConfig {
    pub weights: String,
    pub data: String,
    pub delta: f64,
    #[serde(default)]
    pub g: Option<f64>,
    #[serde(default)]
    pub b: Option<f64>,
    #[serde(default)]
    pub m: Option<f64>,
    pub gamma: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub out: PathBuf,
    pub seed: u64,
    pub formats: Vec<Format>,
    pub spectrum: SpectrumConfig,
    pub ratio: RatioConfig,
    pub df: DfConfig,
    pub sandwich: SandwichConfig,
    pub learning_curve: LearningCurveSection,
    pub oracle: OracleConfig,
    pub mlp_bound: MlpBoundConfig,
}

fn merge(base: &mut toml::Value, over: toml::Value, path: &str) -> Result<()> {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                let key = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                match b.get_mut(&k) {
                    Some(slot) if slot.is_table() && v.is_table() => merge(slot, v, &key)?,
                    Some(slot) => *slot = v,
                    // optional keys are absent from the defaults
                    None if is_optional(&key) => {
                        b.insert(k, v);
                    }
                    None => bail!("unknown configuration key `{key}`"),
                }
            }
            Ok(())
        }
        _ => bail!("configuration key `{path}` must be a table"),
    }
}

fn is_optional(key: &str) -> bool {
    matches!(
        key,
        "sandwich.rate" | "learning_curve.regime" | "learning_curve.mu" | "mlp_bound.g" | "mlp_bound.b" | "mlp_bound.m"
    )
}

impl RunConfig {
    /// Defaults, then `DKSPEC_OUT`, then the user file.
    pub fn load(user: Option<&Path>, env_out: Option<String>) -> Result<Self> {
        let mut value: toml::Value = toml::from_str(DEFAULTS).context("shipped defaults are malformed")?;
        if let Some(out) = env_out.filter(|s| !s.is_empty()) {
            value
                .as_table_mut()
                .expect("defaults are a table")
                .insert("out".into(), toml::Value::String(out));
        }
        if let Some(path) = user {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            let over: toml::Value =
                toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
            merge(&mut value, over, "")?;
        }
        let cfg: RunConfig = value.try_into().context("invalid configuration")?;
        Ok(cfg)
    }
}

/// Reads a stack file: TOML or JSON (by extension) with a single `stack` key.
pub fn read_stack_file(path: &Path) -> Result<Vec<StackEntry>> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct StackFile {
        stack: Vec<StackEntry>,
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading stack file {}", path.display()))?;
    let parsed: StackFile = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).with_context(|| format!("parsing stack file {}", path.display()))?
    } else {
        toml::from_str(&text).with_context(|| format!("parsing stack file {}", path.display()))?
    };
    resolve_stack(&parsed.stack)?;
    Ok(parsed.stack)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse() {
        let cfg = RunConfig::load(None, None).unwrap();
        assert_eq!(cfg.out, PathBuf::from("dkspec-out"));
        assert_eq!(resolve_stack(&cfg.spectrum.stack).unwrap().len(), 3);
        assert_eq!(cfg.learning_curve.noise, NoiseKind::Gaussian { sigma: 0.1 });
        assert!(cfg.sandwich.rate.is_none());
    }

    #[test]
    fn env_and_user_file_layer() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "seed = 7\n[sandwich]\nrate = 0.25\n").unwrap();
        let cfg = RunConfig::load(Some(&p), Some("elsewhere".into())).unwrap();
        assert_eq!(cfg.out, PathBuf::from("elsewhere"));
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.sandwich.rate, Some(0.25));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "[spectrum]\ndimension = 4\n").unwrap();
        let e = RunConfig::load(Some(&p), None).unwrap_err();
        assert!(e.to_string().contains("spectrum.dimension"), "{e}");
        std::fs::write(&p, "colour = 1\n").unwrap();
        assert!(RunConfig::load(Some(&p), None).is_err());
    }

    #[test]
    fn polynomial_entries_round_trip() {
        let v: Vec<StackEntry> = toml::from_str::<toml::Value>(
            "s = [\"exp\", { kind = \"polynomial\", coeffs = [0.0, 1.0] }]",
        )
        .unwrap()["s"]
            .clone()
            .try_into()
            .unwrap();
        let acts = resolve_stack(&v).unwrap();
        assert_eq!(acts[1], Activation::Polynomial { coeffs: vec![0.0, 1.0] });
        assert_eq!(stack_entries(&acts), v);
        assert!(resolve_stack(&[StackEntry::Name("relu".into())]).is_err());
    }
}
