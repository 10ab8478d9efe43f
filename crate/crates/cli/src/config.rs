use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use beamscan_core::array::case_by_id;
use beamscan_core::env::{load_scene_file, Scene};
use beamscan_core::pipeline::PipelineConfig;
use beamscan_core::reference::reference_scene;
use clap::Args;
use serde::{Deserialize, Serialize};

/// Everything a command needs; echoed next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Scene document; the built-in reference venue when absent.
    pub scene: Option<PathBuf>,
    pub cases: Vec<u32>,
    pub pipeline: PipelineConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scene: None,
            cases: (1..=12).collect(),
            pipeline: PipelineConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn scene(&self) -> Result<Scene> {
        match &self.scene {
            Some(p) => {
                if !p.exists() {
                    bail!("scene file not found: {}", p.display());
                }
                load_scene_file(p).with_context(|| format!("cannot load scene {}", p.display()))
            }
            None => Ok(reference_scene()?),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.cases.is_empty() {
            bail!("no cases selected");
        }
        for id in &self.cases {
            case_by_id(*id)?;
        }
        if let Some(p) = &self.scene {
            if !p.exists() {
                bail!("scene file not found: {}", p.display());
            }
        }
        if self.pipeline.sim.n_scan == 0 {
            bail!("n_scan must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML run config; flags given on the command line take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Scene document (default: built-in reference venue).
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Comma-separated case ids, 1..12 (default: all).
    #[arg(long, value_delimiter = ',')]
    pub cases: Option<Vec<u32>>,
    /// Base noise seed; case `n` draws from `seed + n`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Overwrite existing outputs.
    #[arg(long)]
    pub force: bool,
    /// Guard bins M between the noise region and the LOS pulse.
    #[arg(long)]
    pub guard_m: Option<usize>,
    /// Angle gate for candidate matching, degrees.
    #[arg(long)]
    pub angle_tol: Option<f64>,
    /// NLOS peak threshold above the noise power, dB.
    #[arg(long)]
    pub peak_threshold_db: Option<f64>,
    /// Scans per case.
    #[arg(long)]
    pub n_scan: Option<usize>,
}

impl CommonArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = &self.scene {
            cfg.scene = Some(s.clone());
        }
        if let Some(c) = &self.cases {
            cfg.cases = c.clone();
        }
        let p = &mut cfg.pipeline;
        if let Some(v) = self.seed {
            p.sim.rng_seed = v;
        }
        if let Some(v) = self.guard_m {
            p.guard_m = v;
        }
        if let Some(v) = self.angle_tol {
            p.angle_tol_deg = v;
        }
        if let Some(v) = self.peak_threshold_db {
            p.peaks.threshold_db = v;
        }
        if let Some(v) = self.n_scan {
            p.sim.n_scan = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_round_trips() {
        let mut cfg = RunConfig {
            scene: Some("venue.toml".into()),
            cases: vec![2, 8],
            ..RunConfig::default()
        };
        cfg.pipeline.sim.rng_seed = 42;
        cfg.pipeline.peaks.threshold_db = 4.5;
        let text = cfg.to_toml().unwrap();
        assert_eq!(toml::from_str::<RunConfig>(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("cases = [1]\nbogus = 3\n").is_err());
    }
}
