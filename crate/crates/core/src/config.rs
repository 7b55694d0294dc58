//! Run specification blocks: everything a protocol run needs, minus the
//! orchestration concerns (output directory, thread count) that belong to the
//! driver.
//!
//! All blocks reject unknown keys so typos fail loudly at parse time.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::UnitSystem;
use crate::potential::{self, PotentialFamily};
use crate::states::GkpParams;

fn default_n_points() -> usize {
    512
}

/// Spatial grid block. A missing half width picks the single-well default
/// (12) or the two-well rule `separation/2 + 8`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "default_n_points")]
    pub n_points: usize,
    #[serde(default)]
    pub half_width: Option<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { n_points: default_n_points(), half_width: None }
    }
}

impl GridSpec {
    pub fn resolve_half_width(&self, separation: Option<f64>) -> f64 {
        self.half_width.unwrap_or(match separation {
            Some(d) => d / 2.0 + 8.0,
            None => 12.0,
        })
    }
}

/// Physical conversion block: exactly one experimental platform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ConversionSpec {
    /// Mass (kg), waist (m), depth (J).
    Tweezer { mass: f64, waist: f64, depth: f64 },
    /// Mass (kg), wavelength (m), depth (J).
    Lattice { mass: f64, wavelength: f64, depth: f64 },
    /// Charging and Josephson energies (J).
    Transmon { e_c: f64, e_j: f64 },
}

impl ConversionSpec {
    pub fn to_units(&self) -> Result<UnitSystem> {
        match *self {
            ConversionSpec::Tweezer { mass, waist, depth } => {
                potential::convert_tweezer(mass, waist, depth)
            }
            ConversionSpec::Lattice { mass, wavelength, depth } => {
                potential::convert_lattice(mass, wavelength, depth)
            }
            ConversionSpec::Transmon { e_c, e_j } => potential::convert_transmon(e_c, e_j),
        }
    }
}

fn default_family() -> PotentialFamily {
    PotentialFamily::GaussianWell
}

/// Well family, nonharmonicity (directly or through a conversion), and the
/// two-well separation floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitsSpec {
    #[serde(default = "default_family")]
    pub family: PotentialFamily,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub conversion: Option<ConversionSpec>,
    #[serde(default)]
    pub d_min: Option<f64>,
}

impl Default for UnitsSpec {
    fn default() -> Self {
        Self { family: default_family(), alpha: Some(0.25), conversion: None, d_min: None }
    }
}

impl UnitsSpec {
    pub fn resolve(&self) -> Result<UnitSystem> {
        match (self.alpha, &self.conversion) {
            (Some(_), Some(_)) => Err(Error::Config(
                "units: give either alpha or a conversion block, not both".into(),
            )),
            (Some(alpha), None) => UnitSystem::dimensionless(alpha),
            (None, Some(conv)) => conv.to_units(),
            (None, None) => Err(Error::Config("units: missing alpha".into())),
        }
    }

    pub fn resolve_d_min(&self, alpha: f64) -> f64 {
        self.d_min.unwrap_or_else(|| potential::default_d_min(alpha))
    }
}

fn default_n_harmonics_u() -> usize {
    12
}
fn default_n_harmonics_beta() -> usize {
    6
}
fn default_bound_u() -> f64 {
    3.0
}
fn default_bound_beta() -> f64 {
    0.5
}
fn default_freq_cutoff() -> f64 {
    4.0
}
fn default_envelope_ramp() -> f64 {
    0.15
}
fn default_steps_per_period() -> usize {
    crate::propagate::DEFAULT_STEPS_PER_PERIOD
}

/// Control parametrization block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrabSpec {
    #[serde(default = "default_n_harmonics_u")]
    pub n_harmonics_u: usize,
    #[serde(default = "default_n_harmonics_beta")]
    pub n_harmonics_beta: usize,
    #[serde(default = "default_bound_u")]
    pub bound_u: f64,
    #[serde(default = "default_bound_beta")]
    pub bound_beta: f64,
    /// High-frequency cutoff in trap-frequency units.
    #[serde(default = "default_freq_cutoff")]
    pub freq_cutoff: f64,
    #[serde(default = "default_envelope_ramp")]
    pub envelope_ramp: f64,
    /// Depth modulation joins the optimization; defaults to off for state
    /// preparation and on for gates.
    #[serde(default)]
    pub optimize_beta: Option<bool>,
    #[serde(default = "default_steps_per_period")]
    pub steps_per_period: usize,
}

impl Default for CrabSpec {
    fn default() -> Self {
        Self {
            n_harmonics_u: default_n_harmonics_u(),
            n_harmonics_beta: default_n_harmonics_beta(),
            bound_u: default_bound_u(),
            bound_beta: default_bound_beta(),
            freq_cutoff: default_freq_cutoff(),
            envelope_ramp: default_envelope_ramp(),
            optimize_beta: None,
            steps_per_period: default_steps_per_period(),
        }
    }
}

fn default_budget() -> usize {
    4000
}
fn default_max_dressings() -> usize {
    20
}
fn default_simplex_scale() -> f64 {
    0.3
}
fn default_stall_evals() -> usize {
    400
}

/// Search budget block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSpec {
    #[serde(default = "default_budget")]
    pub budget_evals: usize,
    #[serde(default = "default_max_dressings")]
    pub max_dressings: usize,
    #[serde(default = "default_simplex_scale")]
    pub simplex_scale: f64,
    #[serde(default = "default_stall_evals")]
    pub stall_evals: usize,
    /// Early stop once the cost reaches this value.
    #[serde(default)]
    pub target_infidelity: Option<f64>,
}

impl Default for OptimizerSpec {
    fn default() -> Self {
        Self {
            budget_evals: default_budget(),
            max_dressings: default_max_dressings(),
            simplex_scale: default_simplex_scale(),
            stall_evals: default_stall_evals(),
            target_infidelity: None,
        }
    }
}

fn default_n_trajectories() -> usize {
    200
}

/// Noise block (strengths plus Monte Carlo size; the stream seed derives from
/// the run seed).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseBlock {
    #[serde(default)]
    pub gamma1: f64,
    #[serde(default)]
    pub gamma2: f64,
    #[serde(default = "default_n_trajectories")]
    pub n_trajectories: usize,
}

impl NoiseBlock {
    pub fn validate(&self) -> Result<()> {
        if self.gamma1 < 0.0 || self.gamma2 < 0.0 {
            return Err(Error::Config("noise strengths must be nonnegative".into()));
        }
        if self.n_trajectories == 0 {
            return Err(Error::Config("n_trajectories must be positive".into()));
        }
        Ok(())
    }
}

/// Target or basis states nameable from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateSpec {
    Fock { n: usize },
    Coherent { re: f64, im: f64 },
    Gkp { coeffs: Vec<f64>, displacements: Vec<f64>, squeeze: f64 },
    /// The three-peak instance with weights (1,2,1) and squeezing 0.6.
    GkpThreePeak,
    FourCat { gamma: f64, sign: crate::states::CatSign },
    CubicPhase { cubicity: f64, squeeze: f64 },
}

impl StateSpec {
    pub fn gkp_params(&self) -> Option<GkpParams> {
        match self {
            StateSpec::Gkp { coeffs, displacements, squeeze } => Some(GkpParams {
                coeffs: coeffs.clone(),
                displacements: displacements.clone(),
                squeeze: *squeeze,
            }),
            StateSpec::GkpThreePeak => Some(GkpParams::three_peak()),
            _ => None,
        }
    }
}

/// Two-level subspaces for gate protocols.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "basis", rename_all = "snake_case", deny_unknown_fields)]
pub enum SubspaceSpec {
    /// Two lowest well eigenstates.
    Fock01,
    /// Four-legged cat pair C+/C-.
    FourCat { gamma: f64 },
    /// Two-legged cat pair.
    TwoCat { gamma: f64 },
    /// Mutually displaced GKP combs.
    GkpPair { squeeze: f64 },
    /// Symmetric/antisymmetric ground pair of a double well; uses the
    /// protocol's separation and runs on a two-well landscape.
    KerrCat,
}

/// Named 2x2 target unitaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateSpec {
    Identity,
    SigmaX,
    SigmaZ,
    Hadamard,
}

impl GateSpec {
    pub fn unitary(&self) -> crate::optimize::TargetUnitary {
        use crate::optimize::TargetUnitary as U;
        match self {
            GateSpec::Identity => U::identity(),
            GateSpec::SigmaX => U::sigma_x(),
            GateSpec::SigmaZ => U::sigma_z(),
            GateSpec::Hadamard => U::hadamard(),
        }
    }
}

/// Input ensemble for the cooling protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "ensemble", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoolInput {
    /// Uniform mixture of the four lowest states.
    FourLowest,
    /// Boltzmann weights at the given temperature (units of the level
    /// spacing) over the sorted states.
    Boltzmann { temperature: f64 },
}

impl Default for CoolInput {
    fn default() -> Self {
        CoolInput::FourLowest
    }
}

/// The protocol block: which experiment to run and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProtocolSpec {
    Prepare {
        target: StateSpec,
        t_over_2pi: f64,
    },
    DoubleCat {
        separation: f64,
        t_over_2pi: f64,
        /// Amplitude of the built-in approach-and-return guess; default is a
        /// kind-specific fraction of the room between separation and d_min.
        #[serde(default)]
        approach: Option<f64>,
    },
    Gate {
        subspace: SubspaceSpec,
        gate: GateSpec,
        t_over_2pi: f64,
        /// Lobe separation for the Kerr-cat basis built on a double well.
        #[serde(default)]
        separation: Option<f64>,
    },
    Transfer {
        separation: f64,
        t_over_2pi: f64,
        #[serde(default)]
        approach: Option<f64>,
    },
    DiscriminateKick {
        kick: f64,
        /// Eigenstate indices of the two inputs.
        #[serde(default)]
        states: Option<(usize, usize)>,
        /// Prepare the phase imprint with an optimized pulse instead of
        /// applying it instantaneously.
        #[serde(default)]
        optimized_imprint: bool,
        #[serde(default)]
        t_over_2pi: Option<f64>,
    },
    DiscriminateSteal {
        separation: f64,
        t_over_2pi: f64,
        #[serde(default)]
        states: Option<(usize, usize)>,
        #[serde(default)]
        approach: Option<f64>,
    },
    Cool {
        separation: f64,
        t_over_2pi: f64,
        #[serde(default)]
        input: Option<CoolInput>,
        #[serde(default)]
        approach: Option<f64>,
    },
}

impl ProtocolSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ProtocolSpec::Prepare { .. } => "prepare",
            ProtocolSpec::DoubleCat { .. } => "double_cat",
            ProtocolSpec::Gate { .. } => "gate",
            ProtocolSpec::Transfer { .. } => "transfer",
            ProtocolSpec::DiscriminateKick { .. } => "discriminate_kick",
            ProtocolSpec::DiscriminateSteal { .. } => "discriminate_steal",
            ProtocolSpec::Cool { .. } => "cool",
        }
    }

    /// Static two-well separation, where the protocol has one.
    pub fn separation(&self) -> Option<f64> {
        match self {
            ProtocolSpec::DoubleCat { separation, .. }
            | ProtocolSpec::Transfer { separation, .. }
            | ProtocolSpec::DiscriminateSteal { separation, .. }
            | ProtocolSpec::Cool { separation, .. } => Some(*separation),
            ProtocolSpec::Gate { separation, .. } => *separation,
            _ => None,
        }
    }
}

/// Everything a single protocol run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub protocol: ProtocolSpec,
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
}

impl RunSpec {
    /// Structural validation before any computation.
    pub fn validate(&self) -> Result<Vec<String>> {
        let mut errors = Vec::new();
        if let Err(e) = self.units.resolve() {
            errors.push(format!("units: {e}"));
        }
        if self.grid.n_points < 64 || !self.grid.n_points.is_power_of_two() {
            errors.push(format!(
                "grid: n_points must be a power of two >= 64, got {}",
                self.grid.n_points
            ));
        }
        if let Some(hw) = self.grid.half_width {
            if !(hw > 0.0) {
                errors.push(format!("grid: half_width must be positive, got {hw}"));
            }
        }
        if let Some(noise) = &self.noise {
            if let Err(e) = noise.validate() {
                errors.push(e.to_string());
            }
        }
        if self.optimizer.budget_evals == 0 {
            errors.push("optimizer: budget_evals must be positive".into());
        }
        match &self.protocol {
            ProtocolSpec::Prepare { t_over_2pi, .. }
            | ProtocolSpec::DoubleCat { t_over_2pi, .. }
            | ProtocolSpec::Gate { t_over_2pi, .. }
            | ProtocolSpec::Transfer { t_over_2pi, .. }
            | ProtocolSpec::DiscriminateSteal { t_over_2pi, .. }
            | ProtocolSpec::Cool { t_over_2pi, .. } => {
                if !(*t_over_2pi > 0.0) {
                    errors.push(format!("protocol: t_over_2pi must be positive, got {t_over_2pi}"));
                }
            }
            ProtocolSpec::DiscriminateKick { kick, .. } => {
                if !kick.is_finite() || *kick == 0.0 {
                    errors.push("protocol: kick must be finite and nonzero".into());
                }
            }
        }
        if let Some(d) = self.protocol.separation() {
            if !(d > 0.0) {
                errors.push(format!("protocol: separation must be positive, got {d}"));
            }
            if let Ok(units) = self.units.resolve() {
                let d_min = self.units.resolve_d_min(units.alpha);
                if d < d_min {
                    errors.push(format!(
                        "protocol: separation {d} is below the configured floor d_min = {d_min}"
                    ));
                }
            }
        }
        if errors.is_empty() {
            Ok(errors)
        } else {
            Err(Error::Config(errors.join("; ")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_prepare_config_parses_with_defaults() {
        let json = r#"{
            "protocol": { "kind": "prepare", "target": { "state": "fock", "n": 1 }, "t_over_2pi": 6.0 },
            "units": { "alpha": 0.25 }
        }"#;
        let spec: RunSpec = serde_json::from_str(json).unwrap();
        spec.validate().unwrap();
        assert_eq!(spec.grid.n_points, 512);
        assert_eq!(spec.crab.n_harmonics_u, 12);
        assert_eq!(spec.optimizer.budget_evals, 4000);
        assert_eq!(spec.protocol.kind_name(), "prepare");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let json = r#"{
            "protocol": { "kind": "prepare", "target": { "state": "fock", "n": 1 }, "t_over_2pi": 6.0 },
            "units": { "alpha": 0.25 },
            "grdi": {}
        }"#;
        assert!(serde_json::from_str::<RunSpec>(json).is_err());
    }

    #[test]
    fn missing_alpha_is_a_named_error() {
        let json = r#"{
            "protocol": { "kind": "prepare", "target": { "state": "fock", "n": 1 }, "t_over_2pi": 6.0 },
            "units": {}
        }"#;
        let spec: RunSpec = serde_json::from_str(json).unwrap();
        let err = spec.validate().unwrap_err().to_string();
        assert!(err.contains("alpha"), "{err}");
    }

    #[test]
    fn negative_noise_fails_validation() {
        let json = r#"{
            "protocol": { "kind": "prepare", "target": { "state": "fock", "n": 1 }, "t_over_2pi": 6.0 },
            "units": { "alpha": 0.25 },
            "noise": { "gamma1": -0.5 }
        }"#;
        let spec: RunSpec = serde_json::from_str(json).unwrap();
        assert!(spec.validate().is_err());
    }

    #[test]
    fn two_well_separation_respects_the_floor() {
        let json = r#"{
            "protocol": { "kind": "double_cat", "separation": 4.0, "t_over_2pi": 6.0 },
            "units": { "alpha": 0.25, "d_min": 8.0 }
        }"#;
        let spec: RunSpec = serde_json::from_str(json).unwrap();
        let err = spec.validate().unwrap_err().to_string();
        assert!(err.contains("below the configured floor"), "{err}");
    }

    #[test]
    fn conversion_block_resolves_units() {
        let json = r#"{
            "protocol": { "kind": "prepare", "target": { "state": "fock", "n": 1 }, "t_over_2pi": 6.0 },
            "units": { "family": "cosine_well", "conversion": { "transmon": { "e_c": 1.0, "e_j": 50.0 } } }
        }"#;
        let spec: RunSpec = serde_json::from_str(json).unwrap();
        let units = spec.units.resolve().unwrap();
        assert!((units.alpha - 0.31622776601683794).abs() < 1e-12);
    }

    #[test]
    fn resolved_spec_round_trips_through_json() {
        let json = r#"{
            "protocol": { "kind": "gate", "subspace": { "basis": "four_cat", "gamma": 2.0 },
                          "gate": "sigma_x", "t_over_2pi": 6.0 },
            "units": { "alpha": 0.25 },
            "optimizer": { "budget_evals": 123 },
            "seed": 99
        }"#;
        let spec: RunSpec = serde_json::from_str(json).unwrap();
        let text = serde_json::to_string_pretty(&spec).unwrap();
        let back: RunSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(spec, back);
    }
}
