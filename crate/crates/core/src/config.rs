//! Run configuration, read from TOML or JSON by file extension. Every
//! section is optional and falls back to the built-in defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lang::LangConfig;
use crate::neuro::{ModelConfig, TrainConfig};
use crate::scene::{CameraIntrinsics, DepthSensor};
use crate::tactile::GelConfig;
use crate::vision::{DetectorKind, DetectorProfile, LocalizeOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Detectors {
    pub active: DetectorKind,
    pub yolo_like: DetectorProfile,
    pub gsam_like: DetectorProfile,
}

impl Default for Detectors {
    fn default() -> Self {
        Detectors {
            active: DetectorKind::GsamLike,
            yolo_like: DetectorProfile::yolo_like(),
            gsam_like: DetectorProfile::gsam_like(),
        }
    }
}

impl Detectors {
    pub fn get(&self, kind: DetectorKind) -> &DetectorProfile {
        match kind {
            DetectorKind::YoloLike => &self.yolo_like,
            DetectorKind::GsamLike => &self.gsam_like,
        }
    }

    pub fn active_profile(&self) -> &DetectorProfile {
        self.get(self.active)
    }
}

/// External explanation service. The API key is never stored in the file,
/// only the name of the environment variable holding it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    pub endpoint: Option<String>,
    pub timeout_secs: f64,
    pub api_key_env: String,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig { endpoint: None, timeout_secs: 10.0, api_key_env: "TOUCHSTONE_LLM_API_KEY".into() }
    }
}

impl LlmConfig {
    pub fn api_key(&self) -> Option<String> {
        std::env::var(&self.api_key_env).ok().filter(|k| !k.is_empty())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub camera: CameraIntrinsics,
    pub depth_sensor: DepthSensor,
    pub detectors: Detectors,
    pub localize: LocalizeOptions,
    pub gel: GelConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub lang: LangConfig,
    pub llm: LlmConfig,
}

impl Config {
    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Config = match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
            Some("json") => serde_json::from_str(&text)?,
            _ => return Err(Error::Config(format!("{}: expected a .toml or .json file", path.display()))),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.camera.validate()?;
        self.detectors.yolo_like.validate()?;
        self.detectors.gsam_like.validate()?;
        self.gel.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        self.lang.ripeness.validate()?;
        if !(self.llm.timeout_secs > 0.0) {
            return Err(Error::Config("llm.timeout_secs must be positive".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_toml_keeps_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "[train]\npretrain_epochs = 3\n[lang.ripeness.ripe_below]\nbanana = 60.0\n").unwrap();
        let c = Config::load(&p).unwrap();
        assert_eq!(c.train.pretrain_epochs, 3);
        assert_eq!(c.train.finetune_epochs, TrainConfig::default().finetune_epochs);
        assert_eq!(c.gel, GelConfig::default());
        assert_eq!(c.llm.timeout_secs, 10.0);
    }

    #[test]
    fn default_round_trips_through_both_formats() {
        let dir = tempfile::tempdir().unwrap();
        let c = Config::default();
        let t = dir.path().join("c.toml");
        std::fs::write(&t, c.to_toml().unwrap()).unwrap();
        assert_eq!(Config::load(&t).unwrap(), c);
        let j = dir.path().join("c.json");
        std::fs::write(&j, serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(Config::load(&j).unwrap(), c);
    }

    #[test]
    fn unknown_extension_and_bad_values_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.yaml");
        std::fs::write(&p, "").unwrap();
        assert!(Config::load(&p).is_err());
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "[llm]\ntimeout_secs = 0.0\n").unwrap();
        assert!(Config::load(&p).is_err());
    }
}
