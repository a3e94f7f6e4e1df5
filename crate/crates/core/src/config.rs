use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::decoder::DecoderSettings;
use crate::error::{Error, Result};
use crate::spectral::{FeatureFlavor, FeatureSpec, ShrinkageSpec};

/// Group name -> member classes (1-based), used for directional summaries.
pub type Grouping = BTreeMap<String, Vec<usize>>;

/// Free parameters of one evaluation run.
///
/// `window_len` (T) and `delay` (D) count samples; at the 1 kHz rate used
/// throughout they are also milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "defaults::window_len")]
    pub window_len: usize,
    #[serde(default)]
    pub delay: usize,
    #[serde(default = "defaults::frequencies")]
    pub frequencies: usize,
    #[serde(default = "defaults::modes")]
    pub modes: usize,
    #[serde(default = "defaults::flavor")]
    pub flavor: FeatureFlavor,
    #[serde(default)]
    pub shrinkage: ShrinkageSpec,
    #[serde(default)]
    pub log_power: bool,
    #[serde(default = "defaults::yes")]
    pub whiten: bool,
    /// Clustering window W (minimum trials per clustered dataset).
    #[serde(default = "defaults::cluster_window")]
    pub cluster_window: usize,
    /// Fixed LDA ridge; `null` selects `1e-6 * trace / P`.
    #[serde(default)]
    pub ridge: Option<f64>,
    #[serde(default)]
    pub zca_epsilon: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    /// Anchor EDC; `null` evaluates every EDC as an anchor.
    #[serde(default)]
    pub anchor: Option<String>,
    #[serde(default)]
    pub grouping: Option<Grouping>,
}

mod defaults {
    use crate::spectral::FeatureFlavor;

    pub fn window_len() -> usize {
        650
    }
    pub fn frequencies() -> usize {
        4
    }
    pub fn modes() -> usize {
        187
    }
    pub fn flavor() -> FeatureFlavor {
        FeatureFlavor::ComplexSpectrum
    }
    pub fn yes() -> bool {
        true
    }
    pub fn cluster_window() -> usize {
        900
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn feature_spec(&self) -> FeatureSpec {
        FeatureSpec {
            window_len: self.window_len,
            delay: self.delay,
            frequencies: self.frequencies,
            flavor: self.flavor,
            shrinkage: self.shrinkage,
            log_power: self.log_power,
        }
    }

    pub fn decoder_settings(&self) -> DecoderSettings {
        DecoderSettings {
            modes: self.modes,
            whiten: self.whiten,
            zca_epsilon: self.zca_epsilon,
            ridge: self.ridge,
        }
    }

    /// Checks counts and, given the dataset trial length, the window bounds.
    pub fn validate(&self, trial_len: Option<usize>) -> Result<()> {
        self.feature_spec().validate()?;
        if self.modes == 0 {
            return Err(Error::param("P must be at least 1"));
        }
        if self.cluster_window == 0 {
            return Err(Error::param("clustering window W must be at least 1"));
        }
        if let Some(r) = self.ridge {
            if !(r >= 0.0) {
                return Err(Error::param(format!("ridge must be >= 0, got {r}")));
            }
        }
        if !(self.zca_epsilon >= 0.0) {
            return Err(Error::param(format!(
                "ZCA epsilon must be >= 0, got {}",
                self.zca_epsilon
            )));
        }
        if let Some(len) = trial_len {
            if self.delay + self.window_len > len {
                return Err(Error::param(format!(
                    "D + T = {} exceeds the {len}-sample trials",
                    self.delay + self.window_len
                )));
            }
        }
        if let Some(groups) = &self.grouping {
            if let Some((name, _)) = groups.iter().find(|(_, c)| c.is_empty()) {
                return Err(Error::param(format!("group {name:?} is empty")));
            }
        }
        Ok(())
    }
}
