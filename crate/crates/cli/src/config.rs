use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use pdon::forward::TrainConfig;
use pdon::inverse::{InitConfig, RefineConfig};
use pdon::models::{Architecture, NetworkSpec};

/// Optional TOML run configuration. Every key is optional; command-line
/// flags take precedence over it.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Overrides the seed of every stochastic stage.
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub arch: Option<Architecture>,
    /// Full network description; replaces the architecture default.
    pub network: Option<NetworkSpec>,
    pub paths: Paths,
    pub train: TrainConfig,
    pub init: InitConfig,
    pub refine: RefineConfig,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub refine: Option<PathBuf>,
    pub init: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        // Relative paths in the file are relative to the file.
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.out,
            &mut cfg.paths.train,
            &mut cfg.paths.test,
            &mut cfg.paths.data,
            &mut cfg.paths.model,
            &mut cfg.paths.refine,
            &mut cfg.paths.init,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.train.validate()?;
        cfg.init.validate()?;
        cfg.refine.validate()?;
        Ok(cfg)
    }

    pub fn apply_seed(&mut self, seed: Option<u64>) {
        if let Some(s) = seed.or(self.seed) {
            self.seed = Some(s);
            self.train.seed = s;
            self.init.seed = s;
            self.refine.seed = s;
        }
    }
}

/// `flag`, else the configured path, else an error naming the flag.
pub fn require(flag: Option<PathBuf>, configured: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    match flag.or_else(|| configured.clone()) {
        Some(p) => Ok(p),
        None => bail!("missing --{name} (or paths.{name} in the config file)"),
    }
}

/// Output directory: flag, config `out`, `$PDON_OUT/<stage>`, then
/// `pdon-out/<stage>`.
pub fn output_dir(flag: Option<PathBuf>, cfg: &RunConfig, stage: &str) -> PathBuf {
    flag.or_else(|| cfg.out.clone()).unwrap_or_else(|| {
        let root = std::env::var_os("PDON_OUT").map_or_else(|| PathBuf::from("pdon-out"), PathBuf::from);
        root.join(stage)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("sed = 3").is_err());
        assert!(toml::from_str::<RunConfig>("[train]\nepoch = 3").is_err());
    }

    #[test]
    fn partial_sections_keep_defaults() {
        let cfg: RunConfig = toml::from_str("arch = \"parametric-ld\"\n[train]\nepochs = 20").unwrap();
        assert_eq!(cfg.arch, Some(Architecture::ParametricLd));
        assert_eq!(cfg.train.epochs, 20);
        assert_eq!(cfg.train.batch_size, TrainConfig::default().batch_size);
        assert_eq!(cfg.init, InitConfig::default());
    }

    #[test]
    fn seed_reaches_every_stage() {
        let mut cfg = RunConfig::default();
        cfg.apply_seed(Some(9));
        assert_eq!((cfg.train.seed, cfg.init.seed, cfg.refine.seed), (9, 9, 9));
    }

    #[test]
    fn config_paths_resolve_against_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("run.toml");
        std::fs::write(&file, "[paths]\ntrain = \"d/train\"\n").unwrap();
        let cfg = RunConfig::load(Some(&file)).unwrap();
        assert_eq!(cfg.paths.train.unwrap(), dir.path().join("d/train"));
    }
}
