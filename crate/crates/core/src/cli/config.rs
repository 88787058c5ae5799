use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::SyntheticWorldSpec;
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::linearizer::LinearizerConfig;
use crate::pretrain::TrainConfig;
use crate::tasks::{FinetuneConfig, LinkingConfig, OmissionConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum WorldKind {
    /// Labelled clusters for typing.
    Typing,
    /// Uniquely named patches.
    Patch,
    /// Pixel-space queries against duplicate-name candidates.
    Linking,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum IndexKind {
    /// Geohash cells; coordinates are longitude/latitude.
    Geohash,
    /// Square cells in dataset units.
    Grid,
}

/// Input files. Relative paths resolve against the working directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub input: Option<PathBuf>,
    pub entities: Vec<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    pub candidates: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub reports: Vec<PathBuf>,
}

/// Every knob of every subcommand. `seed` drives all randomness: it replaces
/// the seeds of the world, pretraining, finetuning and omission sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub world_kind: WorldKind,
    pub index: IndexKind,
    /// Geohash precision; derived from `context_radius` when absent.
    pub index_precision: Option<usize>,
    /// Radius of pretraining, candidate and typing contexts.
    pub context_radius: f64,
    pub vocab_size: usize,
    /// Seeds averaged by `ablate-omission`, starting at `seed`.
    pub omission_seeds: usize,
    pub length_counts: Vec<usize>,
    pub paths: Paths,
    pub world: SyntheticWorldSpec,
    pub linearizer: LinearizerConfig,
    pub encoder: EncoderConfig,
    pub pretrain: TrainConfig,
    pub finetune: FinetuneConfig,
    pub linking: LinkingConfig,
    pub omission: OmissionConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut c = RunConfig {
            seed: 0,
            world_kind: WorldKind::Typing,
            index: IndexKind::Geohash,
            index_precision: None,
            context_radius: 0.0015,
            vocab_size: 400,
            omission_seeds: 1,
            length_counts: vec![0, 1, 2, 4, 8],
            paths: Paths::default(),
            world: SyntheticWorldSpec::default(),
            linearizer: LinearizerConfig::default(),
            encoder: EncoderConfig::default(),
            pretrain: TrainConfig::default(),
            finetune: FinetuneConfig::default(),
            linking: LinkingConfig::default(),
            omission: OmissionConfig::default(),
        };
        c.encoder.max_seq_len = 64;
        c.linearizer.max_seq_len = 64;
        c
    }
}

/// The part of a run manifest needed for replay.
#[derive(Deserialize)]
struct ManifestConfig {
    config: RunConfig,
}

impl RunConfig {
    /// Reads a TOML config, or the `config` section of a JSON run manifest.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let schema = |detail: String| Error::Schema { path: path.to_path_buf(), detail };
        if path.extension().is_some_and(|e| e == "json") {
            let m: ManifestConfig = serde_json::from_str(&text).map_err(|e| schema(e.to_string()))?;
            Ok(m.config)
        } else {
            toml::from_str(&text).map_err(|e| schema(e.to_string()))
        }
    }

    /// Pushes `seed` into every section and checks cross-section constraints.
    pub fn finalize(&mut self) -> Result<()> {
        self.world.seed = self.seed;
        self.pretrain.seed = self.seed;
        self.finetune.seed = self.seed;
        self.omission.seed = self.seed;
        if !(self.context_radius > 0.0) {
            return Err(Error::Config(format!("context_radius must be positive, got {}", self.context_radius)));
        }
        if self.linearizer.max_seq_len > self.encoder.max_seq_len {
            return Err(Error::Config(format!(
                "linearizer.max_seq_len {} exceeds encoder.max_seq_len {}",
                self.linearizer.max_seq_len, self.encoder.max_seq_len
            )));
        }
        if self.omission_seeds == 0 {
            return Err(Error::Config("omission_seeds must be at least 1".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = RunConfig::default();
        let back: RunConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<RunConfig>("sede = 3").is_err());
        assert!(toml::from_str::<RunConfig>("[encoder]\nhiden = 3").is_err());
        assert!(toml::from_str::<RunConfig>("[world.region]\nmin_x = 0.0\nmin_y = 0.0\nmax_x = 1.0\nmax_y = 1.0\nz = 1").is_err());
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let c: RunConfig = toml::from_str("seed = 4\n[pretrain]\nsteps = 9").unwrap();
        assert_eq!(c.pretrain.steps, 9);
        assert_eq!(c.pretrain.batch_size, 12);
        assert_eq!(c.seed, 4);
    }

    #[test]
    fn seed_propagates() {
        let mut c = RunConfig { seed: 11, ..Default::default() };
        c.finalize().unwrap();
        assert_eq!((c.world.seed, c.pretrain.seed, c.finetune.seed, c.omission.seed), (11, 11, 11, 11));
    }
}
