//! TOML experiment files.
//!
//! ```toml
//! id = "pilots8"
//! n_subcarriers = 64
//! cp_len = 16
//! n_pilots = 8
//! clip_ratio = 1.0
//! n_paths = 24
//! max_delay = 16
//! decay_const = 4.0
//! train_snr_db = 20.0
//! snr_grid = [5.0, 10.0, 15.0, 20.0, 25.0]
//! min_bits = 1000000
//! seed = 1
//! ```
//!
//! Every key is optional and falls back to the default scenario. Unknown
//! keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelConfig;
use crate::error::{Error, Result};
use crate::experiments::{Detector, SweepSpec, DEFAULT_MIN_BITS, DEFAULT_SNR_GRID};
use crate::neuralnet::TrainConfig;
use crate::receiver::{ScenarioConfig, TrainSnr};
use crate::signal::{ClipConfig, FrameConfig};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub id: Option<String>,
    pub n_subcarriers: Option<usize>,
    pub cp_len: Option<usize>,
    pub n_pilots: Option<usize>,
    /// Overrides the evenly spaced layout implied by `n_pilots`.
    pub pilot_indices: Option<Vec<usize>>,
    /// Absent means no clipping.
    pub clip_ratio: Option<f64>,
    pub n_paths: Option<usize>,
    pub max_delay: Option<usize>,
    pub decay_const: Option<f64>,
    pub train_snr_db: Option<f64>,
    /// With `train_snr_high_db`, trains on SNRs drawn uniformly from the range.
    pub train_snr_low_db: Option<f64>,
    pub train_snr_high_db: Option<f64>,
    pub snr_grid: Option<Vec<f64>>,
    pub min_bits: Option<u64>,
    pub max_frames: Option<u64>,
    pub seed: Option<u64>,
    pub n_steps: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub hidden: Option<Vec<usize>>,
    pub stats_draws: Option<usize>,
}

pub const DEFAULT_STATS_DRAWS: usize = 20_000;

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::InvalidConfig(format!("config file {} not found", path.display())),
            _ => Error::Io(e),
        })?;
        Self::parse(&text)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn stats_draws(&self) -> usize {
        self.stats_draws.unwrap_or(DEFAULT_STATS_DRAWS)
    }

    pub fn snr_grid(&self) -> Vec<f64> {
        self.snr_grid.clone().unwrap_or_else(|| DEFAULT_SNR_GRID.to_vec())
    }

    pub fn scenario(&self) -> Result<ScenarioConfig> {
        let base = ScenarioConfig::default();
        let n = self.n_subcarriers.unwrap_or(base.frame.n_subcarriers);
        let cp = self.cp_len.unwrap_or(base.frame.cp_len);
        let mut frame = match &self.pilot_indices {
            Some(idx) => {
                if self.n_pilots.is_some_and(|p| p != idx.len()) {
                    return Err(Error::InvalidConfig("n_pilots disagrees with pilot_indices".into()));
                }
                FrameConfig { n_subcarriers: n, cp_len: cp, pilot_indices: idx.clone(), clip: None }
            }
            None => FrameConfig::new(n, cp, self.n_pilots.unwrap_or(n)).map_err(as_config)?,
        };
        if let Some(cr) = self.clip_ratio {
            frame = frame.with_clip(ClipConfig::with_ratio(cr));
        }
        let channel = ChannelConfig {
            n_paths: self.n_paths.unwrap_or(base.channel.n_paths),
            max_delay: self.max_delay.unwrap_or(base.channel.max_delay),
            decay_const: self.decay_const.unwrap_or(base.channel.decay_const),
        };
        let train_snr = match (self.train_snr_low_db, self.train_snr_high_db, self.train_snr_db) {
            (Some(low_db), Some(high_db), None) => {
                if !(low_db <= high_db) {
                    return Err(Error::InvalidConfig("train_snr_low_db must not exceed train_snr_high_db".into()));
                }
                TrainSnr::Mixed { low_db, high_db }
            }
            (None, None, snr) => TrainSnr::Fixed { snr_db: snr.unwrap_or(20.0) },
            _ => {
                return Err(Error::InvalidConfig(
                    "give either train_snr_db or both train_snr_low_db and train_snr_high_db".into(),
                ))
            }
        };
        let sc = ScenarioConfig { id: self.id.clone().unwrap_or(base.id), frame, channel, train_snr };
        sc.validate().map_err(as_config)?;
        Ok(sc)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let base = TrainConfig::default();
        let cfg = TrainConfig {
            n_steps: self.n_steps.unwrap_or(base.n_steps),
            batch_size: self.batch_size.unwrap_or(base.batch_size),
            learning_rate: self.learning_rate.unwrap_or(base.learning_rate),
            seed: self.seed(),
            ..base
        };
        cfg.validate().map_err(as_config)?;
        Ok(cfg)
    }

    pub fn arch(&self) -> crate::receiver::ReceiverArch {
        match &self.hidden {
            Some(h) => crate::receiver::ReceiverArch { hidden: h.clone() },
            None => Default::default(),
        }
    }

    pub fn sweep_spec(&self, detectors: Vec<Detector>) -> Result<SweepSpec> {
        let spec = SweepSpec {
            scenario: self.scenario()?,
            snr_grid: self.snr_grid(),
            detectors,
            min_bits: self.min_bits.unwrap_or(DEFAULT_MIN_BITS),
            max_frames: self.max_frames,
            seed: self.seed(),
        };
        spec.validate().map_err(as_config)?;
        Ok(spec)
    }
}

fn as_config(e: Error) -> Error {
    match e {
        Error::InvalidInput(m) => Error::InvalidConfig(m),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default_scenario() {
        let cfg = ExperimentConfig::parse("").unwrap();
        assert_eq!(cfg.scenario().unwrap(), ScenarioConfig::default());
        assert_eq!(cfg.snr_grid(), vec![5.0, 10.0, 15.0, 20.0, 25.0]);
    }

    #[test]
    fn all_documented_keys_parse() {
        let text = r#"
            id = "combined"
            n_subcarriers = 64
            cp_len = 0
            n_pilots = 8
            clip_ratio = 1.0
            n_paths = 24
            max_delay = 16
            decay_const = 4.0
            train_snr_db = 20.0
            snr_grid = [10.0, 20.0]
            min_bits = 100000
            seed = 5
        "#;
        let cfg = ExperimentConfig::parse(text).unwrap();
        let sc = cfg.scenario().unwrap();
        assert_eq!(sc.frame.pilot_indices, vec![0, 8, 16, 24, 32, 40, 48, 56]);
        assert!(!sc.has_cp() && sc.is_clipped());
        let spec = cfg.sweep_spec(vec![Detector::Ls]).unwrap();
        assert_eq!((spec.min_bits, spec.seed), (100_000, 5));
    }

    #[test]
    fn explicit_pilots() {
        let cfg = ExperimentConfig::parse("pilot_indices = [1, 9, 17]").unwrap();
        assert_eq!(cfg.scenario().unwrap().frame.pilot_indices, vec![1, 9, 17]);
        let bad = ExperimentConfig::parse("pilot_indices = [1, 9]\nn_pilots = 3").unwrap();
        assert!(matches!(bad.scenario(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn bad_values_are_config_errors() {
        for text in ["n_pilots = 0", "cp_len = 65", "unknown_key = 1", "seed = \"x\"", "min_bits = 10"] {
            let r = ExperimentConfig::parse(text).and_then(|c| c.sweep_spec(vec![Detector::Ls]));
            assert!(matches!(r, Err(Error::InvalidConfig(_))), "{text}: {r:?}");
        }
    }

    #[test]
    fn mixed_training_snr() {
        let cfg = ExperimentConfig::parse("train_snr_low_db = 5.0\ntrain_snr_high_db = 25.0").unwrap();
        assert_eq!(cfg.scenario().unwrap().train_snr, TrainSnr::Mixed { low_db: 5.0, high_db: 25.0 });
        let both = ExperimentConfig::parse("train_snr_db = 20.0\ntrain_snr_low_db = 5.0").unwrap();
        assert!(both.scenario().is_err());
    }
}
