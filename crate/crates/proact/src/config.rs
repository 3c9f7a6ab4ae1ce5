//! Pipeline configuration: a structured TOML document mirroring every
//! module's config keys, with the default operating points baked in.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::delivery::DeliveryConfig;
use crate::scheduler::SamplingConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("referenced file missing: {0}")]
    MissingFile(PathBuf),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct PathsConfig {
    pub trace: Option<PathBuf>,
    pub personas: Option<PathBuf>,
    pub bank: Option<PathBuf>,
    pub pois: Option<PathBuf>,
    pub tools: Option<PathBuf>,
    pub fixtures: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocationConfig {
    pub radius_m: f64,
    pub max_pois: usize,
}

impl Default for LocationConfig {
    fn default() -> Self {
        LocationConfig { radius_m: 100.0, max_pois: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotionConfig {
    pub window_s: f64,
    pub threshold: f64,
}

impl Default for MotionConfig {
    fn default() -> Self {
        MotionConfig { window_s: 2.0, threshold: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AudioConfig {
    pub window_s: f64,
}

impl Default for AudioConfig {
    fn default() -> Self {
        AudioConfig { window_s: 30.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    pub k: usize,
    pub fallback_scenario: String,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig { k: 30, fallback_scenario: "others".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReasonerConfig {
    /// Proactive-score threshold; decisions use score >= threshold
    /// unless `strict` flips the comparison to strictly greater.
    pub threshold: i64,
    pub strict: bool,
    pub retry: usize,
    /// "scripted:<path>" or "remote:<url>".
    pub backend: String,
    pub model: String,
    pub timeout_s: f64,
    pub task_instructions: String,
}

impl Default for ReasonerConfig {
    fn default() -> Self {
        ReasonerConfig {
            threshold: 3,
            strict: false,
            retry: 1,
            backend: String::new(),
            model: "default".into(),
            timeout_s: 30.0,
            task_instructions: crate::reasoner::DEFAULT_TASK_INSTRUCTIONS.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub tolerance_s: f64,
    pub strict_args: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { tolerance_s: 5.0, strict_args: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnotationConfig {
    pub window_s: f64,
}

impl Default for AnnotationConfig {
    fn default() -> Self {
        AnnotationConfig { window_s: 5.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub paths: PathsConfig,
    pub sampling: SamplingConfig,
    pub location: LocationConfig,
    pub motion: MotionConfig,
    pub audio: AudioConfig,
    pub retrieval: RetrievalConfig,
    pub reasoner: ReasonerConfig,
    pub delivery: DeliveryConfig,
    pub eval: EvalConfig,
    pub annotation: AnnotationConfig,
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let config: PipelineConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let mut config = Self::from_toml_str(&text)?;
        // Relative data paths resolve against the config file location.
        if let Some(dir) = path.parent() {
            config.paths = config.paths.resolved_against(dir);
        }
        config.check_files()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if self.sampling.high_interval_s >= self.sampling.low_interval_s {
            return Err(ConfigError::Invalid(
                "sampling.high_interval_s must be < sampling.low_interval_s".into(),
            ));
        }
        if self.sampling.high_interval_s <= 0.0 || self.sampling.tick_s <= 0.0 {
            return Err(ConfigError::Invalid("sampling intervals must be > 0".into()));
        }
        if !(1..=5).contains(&self.reasoner.threshold) {
            return Err(ConfigError::Invalid("reasoner.threshold must be in 1..=5".into()));
        }
        if !(0.0..=1.0).contains(&self.delivery.sim_threshold) {
            return Err(ConfigError::Invalid("delivery.sim_threshold must be in [0,1]".into()));
        }
        Ok(())
    }

    fn check_files(&self) -> Result<(), ConfigError> {
        let paths = [
            &self.paths.trace,
            &self.paths.personas,
            &self.paths.bank,
            &self.paths.pois,
            &self.paths.tools,
            &self.paths.fixtures,
        ];
        for path in paths.into_iter().flatten() {
            if !path.exists() {
                return Err(ConfigError::MissingFile(path.clone()));
            }
        }
        if let Some(script) = self.reasoner.backend.strip_prefix("scripted:") {
            let p = PathBuf::from(script);
            if !p.exists() {
                return Err(ConfigError::MissingFile(p));
            }
        }
        Ok(())
    }

    pub fn snapshot(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

impl PathsConfig {
    fn resolved_against(self, dir: &Path) -> PathsConfig {
        let resolve = |p: Option<PathBuf>| {
            p.map(|p| if p.is_relative() { dir.join(p) } else { p })
        };
        PathsConfig {
            trace: resolve(self.trace),
            personas: resolve(self.personas),
            bank: resolve(self.bank),
            pois: resolve(self.pois),
            tools: resolve(self.tools),
            fixtures: resolve(self.fixtures),
        }
    }
}
