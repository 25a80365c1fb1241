//! Experiment configuration.
//!
//! A TOML file with top-level run settings and the sections `[sequence]`,
//! `[certificate]`, `[budget]`, `[calibration]` and optionally `[slab]`:
//!
//! ```toml
//! master_seed = 7
//! l_list = [32, 64]
//!
//! [sequence]
//! kind = "lacunary"
//! support = { powers_of = 2 }
//! value = 0.9
//!
//! [certificate]
//! epsilon = 0.45
//! evidence = "p_n = 0.9 on every power of two"
//! ```
//!
//! Sequence kinds are `constant` (`value`), `power_law` (`amplitude`,
//! `exponent`), `lacunary` (`support`, `value`, `background`) and `table`
//! (`file`, `tail`). Table files hold one `n p_n` pair per line for
//! `n = 1, 2, ...`; `#` starts a comment.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use trunclab_core::embedding::SlabParameters;
use trunclab_core::harness::{PipelineConfig, DEFAULT_POSITIVITY_FLOOR};
use trunclab_core::sequence::{EpsilonCertificate, Probability, ProbabilitySequence, SequenceError, Support};
use trunclab_core::thresholds::{PcSettings, SlabBudget};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("{path}:{line}: {msg}")]
    Table { path: PathBuf, line: usize, msg: String },
    #[error("invalid sequence: {0}")]
    Sequence(#[from] SequenceError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportSpec {
    PowersOf(u64),
    Lengths(Vec<u64>),
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SequenceSpec {
    Constant {
        value: f64,
    },
    PowerLaw {
        amplitude: f64,
        exponent: f64,
    },
    Lacunary {
        support: SupportSpec,
        value: f64,
        #[serde(default)]
        background: f64,
    },
    Table {
        file: PathBuf,
        #[serde(default)]
        tail: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateSpec {
    pub epsilon: f64,
    #[serde(default)]
    pub evidence: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSpec {
    #[serde(default = "default_d_max")]
    pub d_max: usize,
    #[serde(default = "default_k_max")]
    pub k_max: u32,
}

impl Default for BudgetSpec {
    fn default() -> Self {
        Self {
            d_max: default_d_max(),
            k_max: default_k_max(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSpec {
    #[serde(default = "default_l_schedule")]
    pub l_schedule: Vec<u32>,
    #[serde(default = "default_bracket_tol")]
    pub bracket_tol: f64,
    #[serde(default = "default_trials_per_probe")]
    pub trials_per_probe: u64,
    #[serde(default = "default_scan_step")]
    pub scan_step: f64,
    /// Persisted calibration table, relative to the config file.
    #[serde(default)]
    pub table: Option<PathBuf>,
}

impl Default for CalibrationSpec {
    fn default() -> Self {
        Self {
            l_schedule: default_l_schedule(),
            bracket_tol: default_bracket_tol(),
            trials_per_probe: default_trials_per_probe(),
            scan_step: default_scan_step(),
            table: None,
        }
    }
}

impl CalibrationSpec {
    pub fn settings(&self) -> PcSettings {
        PcSettings {
            l_schedule: self.l_schedule.clone(),
            bracket_tol: self.bracket_tol,
            trials_per_probe: self.trials_per_probe,
            scan_step: self.scan_step,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SlabSpec {
    pub d: usize,
    pub k: u32,
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default = "default_search_limit")]
    pub search_limit: u64,
    #[serde(default = "default_verify_window")]
    pub verify_window: i64,
    #[serde(default = "default_l_list")]
    pub l_list: Vec<u32>,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default = "default_containment_trials")]
    pub containment_trials: u64,
    #[serde(default = "default_floor")]
    pub positivity_floor: f64,
    pub sequence: SequenceSpec,
    pub certificate: CertificateSpec,
    #[serde(default)]
    pub budget: BudgetSpec,
    #[serde(default)]
    pub calibration: CalibrationSpec,
    #[serde(default)]
    pub slab: Option<SlabSpec>,
}

fn default_margin() -> f64 {
    0.02
}
fn default_search_limit() -> u64 {
    1 << 30
}
fn default_verify_window() -> i64 {
    4
}
fn default_l_list() -> Vec<u32> {
    vec![32, 64]
}
fn default_trials() -> u64 {
    2000
}
fn default_containment_trials() -> u64 {
    1000
}
fn default_floor() -> f64 {
    DEFAULT_POSITIVITY_FLOOR
}
fn default_d_max() -> usize {
    6
}
fn default_k_max() -> u32 {
    4
}
fn default_l_schedule() -> Vec<u32> {
    vec![16, 32, 64]
}
fn default_bracket_tol() -> f64 {
    0.01
}
fn default_trials_per_probe() -> u64 {
    1000
}
fn default_scan_step() -> f64 {
    0.05
}

/// A parsed config together with its source text and directory.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub file: ConfigFile,
    pub text: String,
    pub path: PathBuf,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.into(),
            source,
        })?;
        Self::parse(&text, path)
    }

    /// Parse `text` as if read from `path`; relative file references resolve
    /// against the parent of `path`.
    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let file = toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: path.into(),
            source,
        })?;
        Ok(Self {
            file,
            text: text.into(),
            path: path.into(),
        })
    }

    pub fn resolve(&self, relative: &Path) -> PathBuf {
        match self.path.parent() {
            Some(dir) if relative.is_relative() => dir.join(relative),
            _ => relative.into(),
        }
    }

    pub fn sequence(&self) -> Result<ProbabilitySequence, ConfigError> {
        Ok(match &self.file.sequence {
            SequenceSpec::Constant { value } => ProbabilitySequence::constant(Probability::new(*value)?),
            SequenceSpec::PowerLaw { amplitude, exponent } => ProbabilitySequence::power_law(*amplitude, *exponent)?,
            SequenceSpec::Lacunary {
                support,
                value,
                background,
            } => {
                let support = match support {
                    SupportSpec::PowersOf(base) => Support::powers(*base)?,
                    SupportSpec::Lengths(lengths) => Support::explicit(lengths.clone())?,
                };
                ProbabilitySequence::lacunary(support, Probability::new(*value)?, Probability::new(*background)?)
            }
            SequenceSpec::Table { file, tail } => {
                let values = load_table(&self.resolve(file))?;
                ProbabilitySequence::table(values, Probability::new(*tail)?)
            }
        })
    }

    pub fn certificate(&self) -> Result<EpsilonCertificate, ConfigError> {
        let c = &self.file.certificate;
        Ok(EpsilonCertificate::new(c.epsilon, c.evidence.clone())?)
    }

    pub fn slab(&self) -> Result<Option<SlabParameters>, ConfigError> {
        self.file
            .slab
            .map(|s| SlabParameters::new(s.d, s.k).map_err(|e| ConfigError::Invalid(format!("[slab]: {e}"))))
            .transpose()
    }

    pub fn calibration_table_path(&self) -> Option<PathBuf> {
        self.file.calibration.table.as_deref().map(|p| self.resolve(p))
    }

    pub fn pipeline_config(&self) -> Result<PipelineConfig, ConfigError> {
        let f = &self.file;
        let cfg = PipelineConfig {
            sequence: self.sequence()?,
            certificate: self.certificate()?,
            margin: f.margin,
            search_limit: f.search_limit,
            budget: SlabBudget {
                d_max: f.budget.d_max,
                k_max: f.budget.k_max,
            },
            calibration: f.calibration.settings(),
            slab: self.slab()?,
            verify_window: f.verify_window,
            l_list: f.l_list.clone(),
            trials: f.trials,
            containment_trials: f.containment_trials,
            positivity_floor: f.positivity_floor,
            master_seed: f.master_seed,
        };
        cfg.validate().map_err(ConfigError::Invalid)?;
        Ok(cfg)
    }
}

/// Read a two-column `n p_n` table; lengths must run `1, 2, 3, ...`.
pub fn load_table(path: &Path) -> Result<Vec<Probability>, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.into(),
        source,
    })?;
    parse_table(&text, path)
}

pub fn parse_table(text: &str, path: &Path) -> Result<Vec<Probability>, ConfigError> {
    let mut values = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let err = |msg: String| ConfigError::Table {
            path: path.into(),
            line: i + 1,
            msg,
        };
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut cols = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty());
        let (Some(n), Some(p), None) = (cols.next(), cols.next(), cols.next()) else {
            return Err(err("expected two columns `n p_n`".into()));
        };
        let n: u64 = n.parse().map_err(|_| err(format!("bad length `{n}`")))?;
        let p: f64 = p.parse().map_err(|_| err(format!("bad probability `{p}`")))?;
        if n != values.len() as u64 + 1 {
            return Err(err(format!("expected length {}, found {n}", values.len() + 1)));
        }
        values.push(Probability::new(p).map_err(|e| err(e.to_string()))?);
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[sequence]
kind = "constant"
value = 0.5

[certificate]
epsilon = 0.25
"#;

    #[test]
    fn defaults_fill_in() {
        let c = LoadedConfig::parse(MINIMAL, Path::new("x.toml")).unwrap();
        let cfg = c.pipeline_config().unwrap();
        assert_eq!(cfg.l_list, vec![32, 64]);
        assert_eq!(cfg.budget, SlabBudget { d_max: 6, k_max: 4 });
        assert_eq!(cfg.positivity_floor, DEFAULT_POSITIVITY_FLOOR);
        assert_eq!(cfg.slab, None);
        assert_eq!(cfg.sequence.eval(7).unwrap(), 0.5);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{MINIMAL}\n[budget]\nd_max = 4\nkmax = 2\n");
        assert!(matches!(
            LoadedConfig::parse(&text, Path::new("x.toml")),
            Err(ConfigError::Parse { .. })
        ));
    }

    #[test]
    fn lacunary_supports() {
        let text = r#"
[sequence]
kind = "lacunary"
support = { lengths = [3, 1, 40] }
value = 0.8
background = 0.1

[certificate]
epsilon = 0.4
"#;
        let seq = LoadedConfig::parse(text, Path::new("x.toml"))
            .unwrap()
            .sequence()
            .unwrap();
        assert_eq!(seq.eval(40).unwrap(), 0.8);
        assert_eq!(seq.eval(2).unwrap(), 0.1);
    }

    #[test]
    fn bad_epsilon_is_rejected() {
        let text = MINIMAL.replace("0.25", "0.75");
        let c = LoadedConfig::parse(&text, Path::new("x.toml")).unwrap();
        assert!(matches!(c.pipeline_config(), Err(ConfigError::Sequence(_))));
    }

    #[test]
    fn tables() {
        let t = parse_table("# n p\n1 0.5\n2, 0.25  # second\n\n3 1\n", Path::new("t")).unwrap();
        assert_eq!(t.iter().map(|p| p.get()).collect::<Vec<_>>(), vec![0.5, 0.25, 1.0]);
        for bad in ["2 0.5\n", "1 0.5 3\n", "1 1.5\n", "1 x\n"] {
            assert!(parse_table(bad, Path::new("t")).is_err(), "{bad}");
        }
    }
}
