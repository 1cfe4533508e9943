use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::allocator::SolverConfig;
use crate::error::{Error, Result};
use crate::forecast::TrainConfig;
use crate::workload::{DeadlineRule, ScenarioConfig};

/// Allocation methods an experiment can compare.
///
/// `Ours` is the full pipeline: forecast-driven reservation followed by the
/// exact solver when the instance is small enough, the heuristic otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodSpec {
    Ours,
    Exact,
    Heuristic,
    Dld,
    Mec,
    Gsa,
}

impl MethodSpec {
    pub const ALL: [MethodSpec; 6] = [
        MethodSpec::Ours,
        MethodSpec::Exact,
        MethodSpec::Heuristic,
        MethodSpec::Dld,
        MethodSpec::Mec,
        MethodSpec::Gsa,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            MethodSpec::Ours => "ours",
            MethodSpec::Exact => "exact",
            MethodSpec::Heuristic => "heuristic",
            MethodSpec::Dld => "dld",
            MethodSpec::Mec => "mec",
            MethodSpec::Gsa => "gsa",
        }
    }

    pub fn is_baseline(&self) -> bool {
        matches!(self, MethodSpec::Dld | MethodSpec::Mec | MethodSpec::Gsa)
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        MethodSpec::ALL
            .into_iter()
            .find(|m| m.name() == lower)
            .ok_or_else(|| Error::Config {
                path: "methods".into(),
                message: format!(
                    "unknown method `{s}`; expected one of ours, exact, heuristic, dld, mec, gsa"
                ),
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub train: TrainConfig,
    pub solver: SolverConfig,
    pub methods: Vec<MethodSpec>,
    pub seeds: Vec<u64>,
    pub deadline_min: f64,
    pub deadline_max: f64,
    pub output_dir: PathBuf,
    /// Adds a generation timestamp to report.json. Off by default so reports
    /// are byte-reproducible.
    pub timestamp: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            train: TrainConfig::default(),
            solver: SolverConfig::default(),
            methods: vec![
                MethodSpec::Ours,
                MethodSpec::Dld,
                MethodSpec::Mec,
                MethodSpec::Gsa,
            ],
            seeds: (0..30).collect(),
            deadline_min: 0.2,
            deadline_max: 2.0,
            output_dir: PathBuf::from("out"),
            timestamp: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |path: &str, message: &str| {
            Err(Error::Config {
                path: path.into(),
                message: message.into(),
            })
        };
        if self.methods.is_empty() {
            return err("methods", "at least one method is required");
        }
        if self.seeds.is_empty() {
            return err("seeds", "at least one seed is required");
        }
        if !(self.deadline_min > 0.0
            && self.deadline_min < self.deadline_max
            && self.deadline_max.is_finite())
        {
            return err(
                "deadline_min",
                "must satisfy 0 < deadline_min < deadline_max",
            );
        }
        self.scenario.validate()?;
        self.train.validate()?;
        self.solver.validate()
    }

    pub fn deadline_rule(&self) -> DeadlineRule {
        DeadlineRule {
            min: self.deadline_min,
            max: self.deadline_max,
        }
    }

    /// Parses a JSON document layered over the built-in defaults. Unknown
    /// keys are rejected with their full path.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// SHA-256 over the canonical JSON serialization.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(canonical.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Sets one scalar field addressed by a dotted path such as
    /// `scenario.n_tasks`, re-validating the result.
    pub fn with_override(&self, key: &str, value: &str) -> Result<Self> {
        let mut doc = serde_json::to_value(self)?;
        let pointer = format!("/{}", key.replace('.', "/"));
        let slot = doc.pointer_mut(&pointer).ok_or_else(|| Error::Config {
            path: key.into(),
            message: "no such config key".into(),
        })?;
        if slot.is_object() || slot.is_array() {
            return Err(Error::Config {
                path: key.into(),
                message: "only scalar keys can be swept".into(),
            });
        }
        *slot =
            serde_json::from_str(value).unwrap_or_else(|_| serde_json::Value::String(value.into()));
        Self::from_json_str(&doc.to_string())
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::Config {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    ExperimentConfig::from_json_str(&text)
}
