//! Declarative run configuration: a TOML file with one optional section per
//! pipeline stage. Command-line flags override file values, which override
//! the built-in defaults.

use groundtex::bow::VocabConfig;
use groundtex::embednet::{EmbedNetConfig, TrainConfig};
use groundtex::error::{Error, Result};
use groundtex::evalloc::CampaignConfig;
use groundtex::pairs::PairConfig;
use groundtex::synth::{CanvasConfig, MapSetConfig};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub canvas: Option<CanvasConfig>,
    pub mapset: Option<MapSetConfig>,
    pub pairs: Option<PairConfig>,
    pub net: Option<EmbedNetConfig>,
    pub train: Option<TrainConfig>,
    pub vocab: Option<VocabConfig>,
    pub campaign: Option<CampaignConfig>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn canvas(&self) -> CanvasConfig {
        self.canvas.clone().unwrap_or_default()
    }

    pub fn mapset(&self) -> MapSetConfig {
        self.mapset.clone().unwrap_or_default()
    }

    pub fn pairs(&self) -> PairConfig {
        self.pairs.clone().unwrap_or_default()
    }

    pub fn net(&self) -> EmbedNetConfig {
        self.net.clone().unwrap_or_default()
    }

    pub fn train(&self) -> TrainConfig {
        self.train.clone().unwrap_or_default()
    }

    pub fn vocab(&self) -> VocabConfig {
        self.vocab.clone().unwrap_or_default()
    }

    pub fn campaign(&self) -> CampaignConfig {
        self.campaign.clone().unwrap_or_default()
    }
}

/// Apply an optional flag value over a config field.
pub fn override_opt<T: Copy>(field: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *field = v;
    }
}
