//! Run configuration: one TOML document covering every module's settings.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::ep::EpConfig;
use crate::error::{Error, Result};
use crate::gpe::NonlinearConfig;
use crate::lattice::{GridSpec, LatticeParams};
use crate::resonance::SolverConfig;

/// Default loop geometry for the `loop` command.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoopConfig {
    pub radius: f64,
    pub steps: usize,
    pub cycles: usize,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            radius: 0.3,
            steps: 64,
            cycles: 4,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::config("loops.radius", "must be positive"));
        }
        if self.steps < 32 {
            return Err(Error::config("loops.steps", "must be at least 32"));
        }
        if self.cycles == 0 {
            return Err(Error::config("loops.cycles", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub lattice: LatticeParams,
    pub grid: GridSpec,
    pub solver: SolverConfig,
    pub ep: EpConfig,
    pub loops: LoopConfig,
    pub nonlinear: NonlinearConfig,
    /// Seed for randomized robustness checks.
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            lattice: LatticeParams::default(),
            grid: GridSpec::default(),
            solver: SolverConfig::default(),
            ep: EpConfig::default(),
            loops: LoopConfig::default(),
            nonlinear: NonlinearConfig::default(),
            seed: 20100601,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let l = &self.lattice;
        for (key, v) in [("lattice.v0", l.v0), ("lattice.field", l.field)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(key, "must be positive"));
            }
        }
        for (key, v) in [("lattice.delta", l.delta), ("lattice.phi", l.phi), ("lattice.g", l.g)] {
            if !v.is_finite() {
                return Err(Error::config(key, "must be finite"));
            }
        }
        self.grid.validate()?;
        self.solver.validate()?;
        self.ep.validate()?;
        self.loops.validate()?;
        self.nonlinear.validate()?;
        if self.output_dir.as_os_str().is_empty() {
            return Err(Error::config("output_dir", "must not be empty"));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::input(format!("cannot serialize configuration: {e}")))
    }
}

/// Parses and validates a TOML configuration. Unknown keys are errors.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let de = toml::Deserializer::parse(text).map_err(|e| Error::input(format!("malformed configuration: {e}")))?;
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        Error::config(key, e.into_inner().message().trim().to_string())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &std::path::Path) -> Result<RunConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}
