//! The TOML run configuration. Every section is optional; keys given in a
//! file are laid over the defaults and unknown keys are rejected.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use privsplit::data::{ClusterSpec, TinyImageSpec};
use privsplit::evaluation::AttackConfig;
use privsplit::experiments::default_proportions;
use privsplit::models::Proportion;
use privsplit::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::UsageError;

pub const SEED_ENV: &str = "PRIVSPLIT_SEED";
pub const RESOLVED_CONFIG: &str = "config.resolved.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Toy,
    Images,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub kind: DatasetKind,
    /// `<dir>/<class>/*.pgm|*.ppm`; the builtin gratings are used when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Baselines {
    pub pixelate_factor: usize,
    pub blur_radius: usize,
    pub p3_threshold: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub proportions: Vec<Proportion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Master seed; when set it replaces the seed of every section.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub dataset: DatasetSection,
    /// Training on the 2-D clusters.
    pub train: TrainConfig,
    /// Training on tiny images.
    pub image_train: TrainConfig,
    pub clusters: ClusterSpec,
    pub images: TinyImageSpec,
    pub attack: AttackConfig,
    pub baselines: Baselines,
    pub sweep: SweepSection,
}

/// Defaults for the tiny-image pipeline.
pub fn image_train_defaults() -> TrainConfig {
    TrainConfig {
        iterations: 3000,
        use_perceptual: true,
        ..TrainConfig::default()
    }
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: None,
            dataset: DatasetSection {
                kind: DatasetKind::Images,
                data_dir: None,
            },
            train: TrainConfig::default(),
            image_train: image_train_defaults(),
            clusters: ClusterSpec::default(),
            images: TinyImageSpec::default(),
            attack: AttackConfig::default(),
            baselines: Baselines {
                pixelate_factor: 5,
                blur_radius: 4,
                p3_threshold: 1,
            },
            sweep: SweepSection {
                proportions: default_proportions(),
            },
        }
    }
}

fn overlay(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => overlay(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

impl Config {
    /// Parses `text` over the defaults.
    pub fn from_toml(text: &str) -> Result<Self> {
        let user: toml::Table = text.parse().map_err(|e| UsageError(format!("config: {e}")))?;
        let mut merged = toml::Table::try_from(Config::default()).expect("defaults serialize");
        overlay(&mut merged, user);
        let cfg: Config = merged.try_into().map_err(|e| UsageError(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, e: &dyn std::fmt::Display| UsageError(format!("[{what}] {e}"));
        self.train.validate().map_err(|e| bad("train", &e))?;
        self.image_train.validate().map_err(|e| bad("image_train", &e))?;
        if self.sweep.proportions.is_empty() {
            return Err(bad("sweep", &"proportions must not be empty").into());
        }
        if self.baselines.pixelate_factor == 0 || self.baselines.p3_threshold == 0 {
            return Err(bad("baselines", &"pixelate_factor and p3_threshold must be at least 1").into());
        }
        Ok(())
    }

    /// Applies the seed precedence: flag, then environment, then the file.
    pub fn resolve_seed(&mut self, flag: Option<u64>, env: Option<&str>) -> Result<()> {
        let env = env
            .map(|s| {
                s.trim()
                    .parse::<u64>()
                    .map_err(|_| UsageError(format!("{SEED_ENV}=`{s}` is not an unsigned integer")))
            })
            .transpose()?;
        let Some(seed) = flag.or(env).or(self.seed) else {
            return Ok(());
        };
        self.seed = Some(seed);
        self.train.seed = seed;
        self.image_train.seed = seed;
        self.clusters.seed = seed;
        self.images.seed = seed;
        self.attack.seed = seed;
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn train_for(&self, kind: DatasetKind) -> &TrainConfig {
        match kind {
            DatasetKind::Toy => &self.train,
            DatasetKind::Images => &self.image_train,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(Config::from_toml("").unwrap(), Config::default());
    }

    #[test]
    fn partial_section_keeps_section_defaults() {
        let cfg = Config::from_toml("[image_train]\niterations = 7\n").unwrap();
        assert_eq!(cfg.image_train.iterations, 7);
        assert!(cfg.image_train.use_perceptual);
        assert_eq!(cfg.train, TrainConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in ["bogus = 1", "[train]\nbogus = 1", "[nope]\nx = 1", "[train.adam]\nbeta3 = 0.5"] {
            let err = Config::from_toml(text).unwrap_err();
            assert!(err.downcast_ref::<UsageError>().is_some(), "{text}: {err}");
        }
    }

    #[test]
    fn resolved_copy_parses_back() {
        let mut cfg = Config::from_toml("[train]\nprivacy_proportion = \"1/4\"\n[sweep]\nproportions = [\"1/2\"]\n").unwrap();
        cfg.resolve_seed(Some(5), None).unwrap();
        assert_eq!(Config::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn seed_precedence() {
        let mut cfg = Config::from_toml("seed = 3").unwrap();
        cfg.resolve_seed(Some(1), Some("2")).unwrap();
        assert_eq!((cfg.seed, cfg.train.seed, cfg.images.seed), (Some(1), 1, 1));

        let mut cfg = Config::from_toml("seed = 3").unwrap();
        cfg.resolve_seed(None, Some("2")).unwrap();
        assert_eq!(cfg.clusters.seed, 2);

        let mut cfg = Config::from_toml("seed = 3").unwrap();
        cfg.resolve_seed(None, None).unwrap();
        assert_eq!(cfg.attack.seed, 3);

        let mut cfg = Config::from_toml("[train]\nseed = 8").unwrap();
        cfg.resolve_seed(None, None).unwrap();
        assert_eq!((cfg.seed, cfg.train.seed, cfg.image_train.seed), (None, 8, 0));

        assert!(Config::default().resolve_seed(None, Some("x")).is_err());
    }

    #[test]
    fn invalid_values_are_usage_errors() {
        let err = Config::from_toml("[train]\nbatch_size = 0").unwrap_err();
        assert!(err.downcast_ref::<UsageError>().is_some());
        let err = Config::from_toml("[train]\nprivacy_proportion = \"1/3\"").unwrap_err();
        assert!(err.downcast_ref::<UsageError>().is_some());
    }
}
