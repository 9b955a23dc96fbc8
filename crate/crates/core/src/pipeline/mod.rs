//! End-to-end orchestration: corpus preparation, training, generation runs
//! with their on-disk artifacts, verification of exported records,
//! evaluation bundles and summary reports.
//!
//! Every file is written to a temporary sibling and renamed into place, so a
//! reader never observes a half-written artifact.

mod corpus;
mod report;
mod run;

pub use corpus::*;
pub use report::*;
pub use run::*;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::beat::BeatError;
use crate::beatgen::{BeatgenError, CorpusOptions};
use crate::evalstats::EvalError;
use crate::gan::{GanConfig, GanError};
use crate::plausibility::{PlausibilityConfig, PlausibilityError};
use crate::verifier::{Demographics, RulesConfig};
use crate::xml::XmlError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_ZERO_PLAUSIBLE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Beat(#[from] BeatError),
    #[error(transparent)]
    Beatgen(#[from] BeatgenError),
    #[error(transparent)]
    Gan(#[from] GanError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("run artifacts disagree with the manifest: {0}")]
    Inconsistent(String),
}

impl PipelineError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        use PipelineError::*;
        match self {
            Config(_)
            | Beat(BeatError::InvalidFraction(_))
            | Beatgen(BeatgenError::EmptyCorpus)
            | Gan(GanError::InvalidConfig(_))
            | Gan(GanError::Plausibility(PlausibilityError::InvalidConfig(_))) => EXIT_CONFIG,
            Io { .. } | Format { .. } | Beat(_) | Gan(GanError::Checkpoint(_)) => EXIT_IO,
            _ => EXIT_FAILURE,
        }
    }

    fn io(path: &Path, source: io::Error) -> Self {
        PipelineError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn format(path: &Path, message: impl ToString) -> Self {
        PipelineError::Format {
            path: path.to_path_buf(),
            message: message.to_string(),
        }
    }

    fn xml(path: &Path, e: XmlError) -> Self {
        Self::format(path, e)
    }
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train_fraction: f64,
    pub split_seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.9,
            split_seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub bins: usize,
    pub seed: u64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self { bins: 20, seed: 0 }
    }
}

/// Everything a pipeline command reads from the config file. Every section
/// and key is optional.
///
/// ```toml
/// [data]
/// train_fraction = 0.9
///
/// [gan]
/// epochs_max = 200
/// mode = "accumulate"
///
/// [gan.arch]
/// lstm_hidden = 4
/// gen_channels = [2, 2, 2, 2]
/// disc_channels = [2, 2, 2, 2]
///
/// [plausibility]
/// mmd_threshold = 0.004
///
/// [demographics]
/// age_years = 62
/// sex = "Female"
/// ```
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub data: DataConfig,
    pub beatgen: CorpusOptions,
    pub gan: GanConfig,
    pub plausibility: PlausibilityConfig,
    pub rules: RulesConfig,
    /// Patient data attached to generated records.
    pub demographics: Demographics,
    pub evaluation: EvaluationConfig,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Reads `path`, or returns the defaults when there is none.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| PipelineError::Config(format!("{}: {e}", p.display())))?;
                Self::from_toml(&text).map_err(|e| match e {
                    PipelineError::Config(m) => PipelineError::Config(format!("{}: {m}", p.display())),
                    other => other,
                })
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if !(self.data.train_fraction > 0.0 && self.data.train_fraction < 1.0) {
            return bad(format!("data.train_fraction {} must lie in (0, 1)", self.data.train_fraction));
        }
        if !(self.beatgen.noise_std_mv >= 0.0 && self.beatgen.noise_std_mv.is_finite()) {
            return bad("beatgen.noise_std_mv must be a non-negative number".into());
        }
        if self.evaluation.bins == 0 {
            return bad("evaluation.bins must be positive".into());
        }
        if let Some(age) = self.demographics.age_years {
            if !(0.0..=150.0).contains(&age) {
                return bad(format!("demographics.age_years {age} out of range"));
            }
        }
        self.gan.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.plausibility.validate().map_err(|e| PipelineError::Config(e.to_string()))
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| PipelineError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| PipelineError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| PipelineError::io(path, e))?;
    tmp.persist(path).map_err(|e| PipelineError::io(path, e.error))?;
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| PipelineError::format(path, e))
}

fn to_json_pretty<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("manifest serialises");
    out.push(b'\n');
    out
}

fn jsonl<T: Serialize>(items: impl IntoIterator<Item = T>) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(&item).expect("record serialises"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gan::Mode;

    #[test]
    fn config_round_trips_through_toml() {
        let mut cfg = PipelineConfig::default();
        cfg.gan.mode = Mode::AccumulativeLearning;
        cfg.gan.epochs_max = 7;
        cfg.demographics = Demographics::new(62.0, crate::Sex::Female);
        let back = PipelineConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_config_keeps_defaults() {
        let cfg = PipelineConfig::from_toml("[gan]\nepochs_max = 12\nmode = \"accumulate\"\n").unwrap();
        assert_eq!(cfg.gan.epochs_max, 12);
        assert_eq!(cfg.gan.batch_size, 32);
        assert_eq!(cfg.data.train_fraction, 0.9);
        assert_eq!(cfg.plausibility.min_epochs, 10);
    }

    #[test]
    fn shipped_desk_config_loads() {
        let cfg = PipelineConfig::from_toml(include_str!("../../../../configs/desk.toml")).unwrap();
        assert_eq!(cfg.gan.arch, crate::gan::ArchConfig::desk());
        let defaults = PipelineConfig {
            gan: GanConfig {
                arch: crate::gan::ArchConfig::desk(),
                ..GanConfig::default()
            },
            ..PipelineConfig::default()
        };
        assert_eq!(cfg, defaults);
    }

    #[test]
    fn config_errors_map_to_exit_4() {
        for text in ["[gan]\nbatch_size = 0\n", "[data]\ntrain_fraction = 1.5\n", "bogus = 1\n", "[gan\n"] {
            let e = PipelineConfig::from_toml(text).unwrap_err();
            assert_eq!(e.exit_code(), EXIT_CONFIG, "{text:?}");
        }
        let missing = PipelineConfig::load(Some(Path::new("/nonexistent/cfg.toml"))).unwrap_err();
        assert_eq!(missing.exit_code(), EXIT_CONFIG);
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/a.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }
}
