//! The on-disk run configuration: the core run blocks plus orchestration
//! fields (output directory, parallelism) and the extra lists used by the
//! sweep and noise-scan commands.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wellshake::config::{
    CrabSpec, GridSpec, NoiseBlock, OptimizerSpec, ProtocolSpec, RunSpec, StateSpec, UnitsSpec,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub protocol: Option<ProtocolSpec>,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub units: UnitsSpec,
    #[serde(default)]
    pub crab: CrabSpec,
    #[serde(default)]
    pub optimizer: OptimizerSpec,
    #[serde(default)]
    pub noise: Option<NoiseBlock>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Worker threads; 0 or absent picks the machine default.
    #[serde(default)]
    pub threads: Option<usize>,

    // spectrum
    #[serde(default)]
    pub n_states: Option<usize>,
    // wigner
    #[serde(default)]
    pub state: Option<StateSpec>,
    // sweep
    #[serde(default)]
    pub alphas: Option<Vec<f64>>,
    #[serde(default)]
    pub ts_over_2pi: Option<Vec<f64>>,
    #[serde(default)]
    pub sweep_target: Option<StateSpec>,
    // noise-scan
    #[serde(default)]
    pub gamma1_list: Option<Vec<f64>>,
    #[serde(default)]
    pub gamma2_list: Option<Vec<f64>>,
    #[serde(default)]
    pub reoptimize: Option<bool>,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
        let config: RunConfig = serde_json::from_str(&text).map_err(|e| {
            anyhow::anyhow!(
                "{} line {} column {}: {e}",
                path.display(),
                e.line(),
                e.column()
            )
        })?;
        Ok(config)
    }

    /// The core run spec for protocol commands.
    pub fn to_run_spec(&self) -> anyhow::Result<RunSpec> {
        let protocol = self
            .protocol
            .clone()
            .ok_or_else(|| anyhow::anyhow!("config needs a protocol block for this command"))?;
        Ok(RunSpec {
            protocol,
            grid: self.grid,
            units: self.units.clone(),
            crab: self.crab,
            optimizer: self.optimizer,
            noise: self.noise,
            seed: self.seed,
        })
    }

    /// Reject blocks that the invoked command would silently ignore.
    pub fn forbid(&self, command: &str, fields: &[(&str, bool)]) -> anyhow::Result<()> {
        let stray: Vec<&str> = fields
            .iter()
            .filter_map(|&(name, present)| present.then_some(name))
            .collect();
        if stray.is_empty() {
            Ok(())
        } else {
            anyhow::bail!("config keys not used by `{command}`: {}", stray.join(", "))
        }
    }
}

/// A protocol command accepts only the spec kinds it owns.
pub fn check_kind(command: &str, spec: &ProtocolSpec, allowed: &[&str]) -> anyhow::Result<()> {
    let kind = spec.kind_name();
    if allowed.contains(&kind) {
        Ok(())
    } else {
        anyhow::bail!(
            "`{command}` cannot run protocol kind '{kind}' (expected one of: {})",
            allowed.join(", ")
        )
    }
}
