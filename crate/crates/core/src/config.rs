//! Shared enums and the global JSON configuration bundle.
//!
//! Every section is optional in the JSON file; missing fields fall back to
//! the defaults below. `Config::default()` matches `config/default.json`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::acquisition::AcquisitionConfig;
use crate::dtw::DtwOptions;
use crate::error::{Error, Result};
use crate::events::{DetectorConfig, CURRENT_THRESHOLD_A, POWER_THRESHOLD_W};
use crate::neuralnet::TrainConfig;
use crate::signalgen::{presets, ApplianceModel, Schedule};

/// Which channels the pipeline uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Voltage and current; detection on per-cycle active power.
    #[default]
    Power,
    /// Current only; detection on per-cycle RMS current.
    Current,
}

/// Detector thresholds for both modes, so one file serves either.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorSettings {
    pub power_threshold_w: f64,
    pub current_threshold_a: f64,
    pub refractory: usize,
    pub debounce: usize,
}

impl Default for DetectorSettings {
    fn default() -> Self {
        DetectorSettings {
            power_threshold_w: POWER_THRESHOLD_W,
            current_threshold_a: CURRENT_THRESHOLD_A,
            refractory: 25,
            debounce: 3,
        }
    }
}

impl DetectorSettings {
    pub fn for_mode(&self, mode: Mode) -> DetectorConfig {
        DetectorConfig {
            threshold: match mode {
                Mode::Power => self.power_threshold_w,
                Mode::Current => self.current_threshold_a,
            },
            mode,
            refractory: self.refractory,
            debounce: self.debounce,
        }
    }
}

/// Synthetic event dataset and baseline settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub events_per_class: usize,
    /// Relative spread of per-event appliance perturbations.
    pub spread: f64,
    /// Probability that another appliance runs in the background during an event.
    pub background_probability: f64,
    /// Train / validation / test fractions.
    pub ratios: [f64; 3],
    /// Templates kept per class for the k-NN-DTW baseline.
    pub templates_per_class: usize,
    pub k: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            events_per_class: 1000,
            spread: 0.15,
            background_probability: 0.5,
            ratios: [0.7, 0.1, 0.2],
            templates_per_class: 40,
            k: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub appliances: Vec<ApplianceModel>,
    pub schedule: Schedule,
    pub acquisition: AcquisitionConfig,
    pub detector: DetectorSettings,
    pub dtw: DtwOptions,
    /// Read harmonic bins straight from the bit-reversed FFT output.
    pub skip_reorder: bool,
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            appliances: presets(),
            schedule: Schedule::new(4.0).with("lamp", 0.5, 2.5).with("laptop", 1.3, 3.3),
            acquisition: AcquisitionConfig::default(),
            detector: DetectorSettings::default(),
            dtw: DtwOptions::default(),
            skip_reorder: true,
            dataset: DatasetConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl Config {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Config = serde_json::from_str(s).map_err(|e| Error::config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.acquisition.validate()?;
        self.schedule.validate()?;
        self.train.validate()?;
        for m in &self.appliances {
            m.validate()?;
        }
        for mode in [Mode::Power, Mode::Current] {
            self.detector.for_mode(mode).validate()?;
        }
        let d = &self.dataset;
        if d.ratios.iter().any(|r| !(*r >= 0.0)) || (d.ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!(
                "split ratios {:?} must be non-negative and sum to 1",
                d.ratios
            )));
        }
        if !(0.0..=1.0).contains(&d.background_probability) || !(d.spread >= 0.0) {
            return Err(Error::config(
                "background_probability must lie in [0, 1] and spread be ≥ 0",
            ));
        }
        if d.k == 0 || d.k > d.templates_per_class {
            return Err(Error::config(format!(
                "k = {} must lie in 1..={} (templates per class)",
                d.k, d.templates_per_class
            )));
        }
        Ok(())
    }

    pub fn appliance(&self, id: &str) -> Option<&ApplianceModel> {
        self.appliances.iter().find(|m| m.id == id)
    }

    pub fn labels(&self) -> Vec<String> {
        self.appliances.iter().map(|m| m.id.clone()).collect()
    }
}
