use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::synth::SyntheticSpec;
use crate::causal::TeConfig;
use crate::error::{CgadError, Result};
use crate::forecaster::{ModelConfig, TrainConfig};
use crate::scoring::PotConfig;

/// Environment variable that overrides `output_dir`.
pub const OUT_DIR_ENV: &str = "CGAD_OUT_DIR";

/// Input and artifact locations. Unset paths default to files inside
/// `output_dir`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub graph: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub scores: Option<PathBuf>,
    /// Trailing share of the training file held out for validation.
    pub val_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { train: None, test: None, labels: None, graph: None, model: None, scores: None, val_fraction: 0.2 }
    }
}

/// Which scores the tail threshold is fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Calibration {
    /// Collective scores of the held-out validation windows.
    Validation,
    /// Collective scores of the test period itself.
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringConfig {
    pub initial_quantile: f64,
    pub risk_q: f64,
    pub min_peaks: usize,
    pub calibration: Calibration,
    /// Take median and MAD from validation errors instead of test errors.
    pub mad_from_validation: bool,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        let pot = PotConfig::default();
        Self {
            initial_quantile: pot.initial_quantile,
            risk_q: pot.risk_q,
            min_peaks: pot.min_peaks,
            calibration: Calibration::Validation,
            mad_from_validation: false,
        }
    }
}

impl ScoringConfig {
    pub fn pot(&self) -> PotConfig {
        PotConfig { initial_quantile: self.initial_quantile, risk_q: self.risk_q, min_peaks: self.min_peaks }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub per_node: bool,
    pub collective: bool,
    pub causal_events: bool,
    /// Pair for the causal-event view; defaults to the strongest graph edge.
    pub event_source: Option<String>,
    pub event_target: Option<String>,
    pub block: usize,
    pub top_events: usize,
    /// In-degree kept per node by the top-k reference graph.
    pub top_k: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            per_node: true,
            collective: true,
            causal_events: true,
            event_source: None,
            event_target: None,
            block: 500,
            top_events: 10,
            top_k: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub output_dir: PathBuf,
    pub data: DataConfig,
    pub synth: SyntheticSpec,
    pub graph: TeConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub scoring: ScoringConfig,
    pub report: ReportConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("cgad-out"),
            data: DataConfig::default(),
            synth: SyntheticSpec::default(),
            graph: TeConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            scoring: ScoringConfig::default(),
            report: ReportConfig::default(),
        }
    }
}

/// The part of the configuration that determines numeric results.
#[derive(Serialize)]
struct Algorithmic<'a> {
    val_fraction: f64,
    synth: &'a SyntheticSpec,
    graph: &'a TeConfig,
    model: &'a ModelConfig,
    train: &'a TrainConfig,
    scoring: &'a ScoringConfig,
}

impl PipelineConfig {
    /// Reads an optional TOML file and applies `section.key=value`
    /// overrides on top of it.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CgadError::io(p, e))?;
                text.parse::<toml::Table>()
                    .map_err(|e| CgadError::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for item in overrides {
            apply_override(&mut table, item)?;
        }
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CgadError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.graph.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        self.scoring.pot().validate()?;
        self.synth.validate()?;
        if !(self.data.val_fraction > 0.0 && self.data.val_fraction < 1.0) {
            return Err(CgadError::Config(format!("val_fraction {} must lie in (0, 1)", self.data.val_fraction)));
        }
        if self.report.block == 0 {
            return Err(CgadError::Config("report block must be positive".into()));
        }
        Ok(())
    }

    /// Uses one seed for data generation, chunk sampling, initialization
    /// and shuffling.
    pub fn set_seed(&mut self, seed: u64) {
        self.synth.seed = seed;
        self.graph.rng_seed = seed;
        self.model.rng_seed = seed;
        self.train.shuffle_seed = seed;
    }

    /// First 16 hex digits of the SHA-256 of the algorithmic settings.
    pub fn config_hash(&self) -> String {
        let algorithmic = Algorithmic {
            val_fraction: self.data.val_fraction,
            synth: &self.synth,
            graph: &self.graph,
            model: &self.model,
            train: &self.train,
            scoring: &self.scoring,
        };
        let json = serde_json::to_string(&algorithmic).expect("config serializes");
        Sha256::digest(json.as_bytes()).iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Comment lines identifying the producer of an artifact.
    pub fn artifact_header(&self) -> Vec<String> {
        vec![
            format!("cgad {}", env!("CARGO_PKG_VERSION")),
            format!("config-hash {}", self.config_hash()),
        ]
    }

    fn in_out(&self, explicit: &Option<PathBuf>, name: &str) -> PathBuf {
        explicit.clone().unwrap_or_else(|| self.output_dir.join(name))
    }

    pub fn train_path(&self) -> PathBuf {
        self.in_out(&self.data.train, "train.csv")
    }

    pub fn test_path(&self) -> PathBuf {
        self.in_out(&self.data.test, "test.csv")
    }

    pub fn labels_path(&self) -> PathBuf {
        self.in_out(&self.data.labels, "test_labels.txt")
    }

    pub fn graph_path(&self) -> PathBuf {
        self.in_out(&self.data.graph, "graph.txt")
    }

    pub fn model_path(&self) -> PathBuf {
        self.in_out(&self.data.model, "model.ckpt")
    }

    pub fn scores_path(&self) -> PathBuf {
        self.in_out(&self.data.scores, "scores.csv")
    }
}

/// Sets `section.key` (or a top-level `key`) to `value`, read as a TOML
/// value when possible and as a string otherwise.
fn apply_override(table: &mut toml::Table, item: &str) -> Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| CgadError::Argument(format!("override {item:?} is not key=value")))?;
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let path: Vec<&str> = key.trim().split('.').collect();
    let (last, parents) = path.split_last().expect("split yields at least one part");
    let mut cur = table;
    for p in parents {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CgadError::Config(format!("{p} in override {item:?} is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
