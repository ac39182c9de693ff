use std::fs;
use std::path::{Path, PathBuf};

use earlysurv::compare::NamedConfig;
use earlysurv::data::GeneratorConfig;
use earlysurv::train::TrainConfig;
use earlysurv::ModelKind;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub dataset: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    /// Generator seed.
    pub data: u64,
    pub split: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Overrides the checkpoint's threshold.
    pub threshold: Option<f64>,
    /// Evaluate every record instead of the checkpoint's test split.
    pub all_records: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareSection {
    pub configs: Vec<NamedConfig>,
    pub seeds: Vec<u64>,
}

impl Default for CompareSection {
    fn default() -> Self {
        Self {
            configs: [ModelKind::Safe, ModelKind::SafeR]
                .into_iter()
                .map(|model| NamedConfig::from_config(TrainConfig { model, ..Default::default() }))
                .collect(),
            seeds: vec![0, 1, 2, 3, 4],
        }
    }
}

/// Everything a run needs. Loaded from one JSON document; command-line
/// flags are applied on top.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub generator: GeneratorConfig,
    pub train: TrainConfig,
    pub eval: EvalSection,
    pub compare: CompareSection,
    pub paths: Paths,
    pub seeds: Seeds,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    /// Writes the resolved configuration into `dir`.
    pub fn echo(&self, dir: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).map_err(earlysurv::Error::from)?;
        fs::write(dir.join("resolved_config.json"), text + "\n").map_err(earlysurv::Error::from)?;
        Ok(())
    }

    pub fn dataset(&self) -> Result<&Path, CliError> {
        let p = self
            .paths
            .dataset
            .as_deref()
            .ok_or_else(|| CliError::Usage("no dataset path (use --data or paths.dataset)".into()))?;
        require_file(p)
    }

    pub fn checkpoint(&self) -> Result<&Path, CliError> {
        let p = self
            .paths
            .checkpoint
            .as_deref()
            .ok_or_else(|| CliError::Usage("no checkpoint path (use --checkpoint or paths.checkpoint)".into()))?;
        require_file(p)
    }

    /// Output directory, created if missing.
    pub fn output_dir(&self) -> Result<PathBuf, CliError> {
        let dir = self.paths.output_dir.clone().unwrap_or_else(|| PathBuf::from("."));
        fs::create_dir_all(&dir)
            .map_err(|e| CliError::Usage(format!("cannot create output directory {}: {e}", dir.display())))?;
        Ok(dir)
    }
}

fn require_file(p: &Path) -> Result<&Path, CliError> {
    if p.is_file() {
        Ok(p)
    } else {
        Err(CliError::Usage(format!("{} is not a readable file", p.display())))
    }
}
