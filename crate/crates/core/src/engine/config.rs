// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Key-value engine configuration.

use std::path::{Path, PathBuf};

use crate::error::{MmgcError, Result};
use crate::ingest::{IngestConfig, DEFAULT_BATCH_SIZE, DEFAULT_LENGTH_BOUND, DEFAULT_SPLIT_FRACTION};
use crate::models::ModelRegistry;
use crate::types::{ErrorMode, ErrorSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub store: PathBuf,
    pub dimensions: Option<PathBuf>,
    pub grouping: Option<PathBuf>,
    pub error_mode: ErrorMode,
    /// Absolute bound, or percent in relative mode.
    pub epsilon: f64,
    pub model_types: Vec<String>,
    pub length_bound: usize,
    pub split_fraction: f64,
    pub splitting: bool,
    pub batch_size: usize,
    pub partitions: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            store: PathBuf::from("mmgc-store"),
            dimensions: None,
            grouping: None,
            error_mode: ErrorMode::Absolute,
            epsilon: 0.0,
            model_types: vec!["pmc_mean".into(), "swing".into(), "gorilla".into()],
            length_bound: DEFAULT_LENGTH_BOUND,
            split_fraction: DEFAULT_SPLIT_FRACTION,
            splitting: true,
            batch_size: DEFAULT_BATCH_SIZE,
            partitions: 1,
        }
    }
}

impl EngineConfig {
    /// Read `key = value` lines. Relative paths are resolved against the
    /// directory holding the file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base).map_err(|(line, reason)| MmgcError::Parse { path: path.to_owned(), line, reason })
    }

    pub fn parse(text: &str, base: &Path) -> std::result::Result<Self, (usize, String)> {
        let mut config = Self::default();
        for (index, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fail = |reason: String| (index + 1, reason);
            let (key, value) =
                line.split_once('=').ok_or_else(|| fail(format!("expected key = value, got {line:?}")))?;
            config.set(key.trim(), value.trim(), base).map_err(|e| fail(e.to_string()))?;
        }
        Ok(config)
    }

    /// Apply one setting, as from a config line.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        let number = |what: &str| MmgcError::invalid(format!("{key}: invalid {what} {value:?}"));
        match key {
            "store" => self.store = base.join(value),
            "dimensions" => self.dimensions = Some(base.join(value)),
            "grouping" => self.grouping = Some(base.join(value)),
            "error_mode" => {
                self.error_mode = match value.to_ascii_lowercase().as_str() {
                    "absolute" => ErrorMode::Absolute,
                    "relative" => ErrorMode::Relative,
                    _ => {
                        return Err(MmgcError::invalid(format!(
                            "error_mode must be absolute or relative, got {value:?}"
                        )))
                    }
                }
            }
            "epsilon" => self.epsilon = value.parse().map_err(|_| number("number"))?,
            "model_types" => {
                self.model_types = value.split(',').map(|s| s.trim().to_owned()).filter(|s| !s.is_empty()).collect()
            }
            "length_bound" => self.length_bound = value.parse().map_err(|_| number("integer"))?,
            "split_fraction" => self.split_fraction = value.parse().map_err(|_| number("number"))?,
            "splitting" => self.splitting = value.parse().map_err(|_| number("boolean"))?,
            "batch_size" => self.batch_size = value.parse().map_err(|_| number("integer"))?,
            "partitions" => self.partitions = value.parse().map_err(|_| number("integer"))?,
            _ => return Err(MmgcError::invalid(format!("unknown setting {key:?}"))),
        }
        Ok(())
    }

    pub fn error_spec(&self) -> Result<ErrorSpec> {
        ErrorSpec::new(self.error_mode, self.epsilon)
    }

    /// Check the values and that referenced files exist.
    pub fn validate(&self) -> Result<()> {
        self.error_spec()?;
        if self.batch_size == 0 || self.partitions == 0 {
            return Err(MmgcError::invalid("batch_size and partitions must be positive"));
        }
        for path in [&self.dimensions, &self.grouping].into_iter().flatten() {
            if !path.exists() {
                return Err(MmgcError::invalid(format!("{} does not exist", path.display())));
            }
        }
        Ok(())
    }

    pub fn ingest_config(&self, registry: &ModelRegistry) -> Result<IngestConfig> {
        Ok(IngestConfig::new(registry, &self.model_types, self.error_spec()?, self.length_bound, self.split_fraction)?
            .with_splitting(self.splitting))
    }
}
