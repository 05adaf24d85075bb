//! Run configuration: one TOML file with a section per stage.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{CleanConfig, SyntheticGenConfig, WindowSpec};
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::models::{ModelKind, TrainConfig};
use crate::ppo::PpoConfig;
use crate::util::sha256_hex;

/// Where the campaign's 5-minute data comes from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataSection {
    /// 5-minute CSV export; when absent the synthetic generator is used.
    pub csv: Option<PathBuf>,
}

/// Training settings for each model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelTraining {
    pub heating: TrainConfig,
    pub valve: TrainConfig,
    pub cooling: TrainConfig,
}

impl ModelTraining {
    pub fn get(&self, kind: ModelKind) -> &TrainConfig {
        match kind {
            ModelKind::Heating => &self.heating,
            ModelKind::Valve => &self.valve,
            ModelKind::Cooling => &self.cooling,
        }
    }

    pub fn get_mut(&mut self, kind: ModelKind) -> &mut TrainConfig {
        match kind {
            ModelKind::Heating => &mut self.heating,
            ModelKind::Valve => &mut self.valve,
            ModelKind::Cooling => &mut self.cooling,
        }
    }

    fn all_mut(&mut self) -> [&mut TrainConfig; 3] {
        [&mut self.heating, &mut self.valve, &mut self.cooling]
    }

    fn from_scratch() -> Self {
        let t = TrainConfig::default();
        Self { heating: t.clone(), valve: t.clone(), cooling: t }
    }

    fn warm() -> Self {
        let t = TrainConfig { max_epochs: 20, patience: 4, freeze_ffn: true, ..TrainConfig::default() };
        Self { heating: t.clone(), valve: t.clone(), cooling: t }
    }
}

impl Default for ModelTraining {
    fn default() -> Self {
        Self::from_scratch()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Models and policy retrained every week.
    Adaptive,
    /// Trained on the first window only, then frozen.
    Static,
    /// The recorded rule-based set points.
    Rbc,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Adaptive, Variant::Static, Variant::Rbc];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Adaptive => "adaptive",
            Variant::Static => "static",
            Variant::Rbc => "rbc",
        }
    }

    pub fn parse(s: &str) -> Result<Variant> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::config(format!("unknown variant {s:?}; expected adaptive, static or rbc")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CampaignSection {
    /// Number of weekly iterations; all available windows when absent.
    pub n_weeks: Option<usize>,
    /// Index of the first window to run.
    pub first_window: usize,
    pub variants: Vec<Variant>,
    /// PPO environment steps for each warm-started weekly retraining.
    pub ppo_retrain_steps: u64,
}

impl Default for CampaignSection {
    fn default() -> Self {
        Self { n_weeks: None, first_window: 0, variants: Variant::ALL.to_vec(), ppo_retrain_steps: 100_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    /// Seeds model initialisation, shuffling and policy sampling.
    pub seed: u64,
    pub data: DataSection,
    pub synthetic: SyntheticGenConfig,
    pub clean: CleanConfig,
    pub window: WindowSpec,
    /// From-scratch training (first iteration).
    pub train: ModelTraining,
    /// Warm-start retraining with frozen feature layers.
    pub retrain: ModelTraining,
    pub env: EnvConfig,
    /// First-iteration policy training; `total_steps` is the budget.
    pub ppo: PpoConfig,
    pub campaign: CampaignSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 7,
            data: DataSection::default(),
            synthetic: SyntheticGenConfig::default(),
            clean: CleanConfig::default(),
            window: WindowSpec::default(),
            train: ModelTraining::from_scratch(),
            retrain: ModelTraining::warm(),
            env: EnvConfig::default(),
            ppo: PpoConfig::default(),
            campaign: CampaignSection::default(),
        }
    }
}

impl Config {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(s).map_err(|e| Error::Config(format!("config parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::NotFound(path.to_path_buf()));
        }
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("config serialization error: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.window.validate()?;
        self.env.validate()?;
        self.ppo.validate()?;
        for t in [&self.train, &self.retrain] {
            for k in ModelKind::ALL {
                t.get(k).validate()?;
            }
        }
        if self.data.csv.is_none() {
            self.synthetic.validate()?;
        }
        if self.campaign.variants.is_empty() {
            return Err(Error::config("at least one controller variant is required"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form; identifies a configuration in outputs.
    pub fn hash(&self) -> String {
        let js = serde_json::to_vec(self).expect("config serializes");
        sha256_hex(&js)
    }

    /// Sets every seed in the configuration from one value.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.synthetic.seed = seed;
        self.ppo.seed = seed;
    }

    /// Warm retraining always runs with frozen feature layers.
    pub fn normalized(mut self) -> Self {
        for t in self.retrain.all_mut() {
            t.freeze_ffn = true;
        }
        for t in self.train.all_mut() {
            t.freeze_ffn = false;
        }
        self
    }
}

/// Output directory override.
pub const ENV_OUT_DIR: &str = "RELEARN_OUT_DIR";
/// Worker thread count override.
pub const ENV_THREADS: &str = "RELEARN_THREADS";

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_roundtrips_through_toml() {
        let cfg = Config::default();
        let s = cfg.to_toml_string().unwrap();
        let back = Config::from_toml_str(&s).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn partial_file_uses_defaults() {
        let cfg = Config::from_toml_str("seed = 3\n[ppo]\ntotal_steps = 500\n").unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.ppo.total_steps, 500);
        assert_eq!(cfg.ppo.lr, 0.0025);
        assert_eq!(cfg.train.heating.base_lr, 0.001);
    }

    #[test]
    fn bad_values_rejected() {
        assert!(Config::from_toml_str("[ppo]\nclip_eps = 1.5\n").is_err());
        assert!(Config::from_toml_str("[window]\ntrain_weeks = 0\n").is_err());
        assert!(Config::from_toml_str("seed = \"x\"\n").is_err());
    }

    #[test]
    fn variant_names() {
        assert_eq!(Variant::parse("Static").unwrap(), Variant::Static);
        assert!(Variant::parse("other").is_err());
    }
}
