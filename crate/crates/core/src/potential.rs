//! Potential families, time-dependent landscapes, and physical-parameter
//! conversions.
//!
//! Every family shares the same reduced shape convention: `v` is even,
//! `v(0) = 0`, `v''(0) = 2`, so the full potential
//! `V(x) = [1 + beta(t)] v(alpha (x - u(t))) / (2 alpha^2)` is `x^2/2` at
//! leading order around its minimum regardless of family or alpha.

use serde::{Deserialize, Serialize};

use crate::crab::Control;
use crate::error::{Error, Result};
use crate::grid::UnitSystem;

const HBAR: f64 = 1.054_571_817e-34;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialFamily {
    Harmonic,
    QuarticApprox,
    GaussianWell,
    CosineWell,
    SineSquared,
}

impl PotentialFamily {
    /// Reduced shape `v(y)`.
    pub fn reduced_shape(self, y: f64) -> f64 {
        match self {
            PotentialFamily::Harmonic => y * y,
            PotentialFamily::QuarticApprox => y * y - y.powi(4) / 3.0,
            PotentialFamily::GaussianWell => 1.5 * (1.0 - (-2.0 * y * y / 3.0).exp()),
            PotentialFamily::CosineWell => 0.5 * (1.0 - (2.0 * y).cos()),
            PotentialFamily::SineSquared => {
                let s = y.sin();
                s * s
            }
        }
    }

    /// Large-|y| limit of the reduced shape, where one exists.
    pub fn asymptote(self) -> Option<f64> {
        match self {
            PotentialFamily::GaussianWell => Some(1.5),
            _ => None,
        }
    }

    /// Periodic families repeat their well every `pi` in reduced units; their
    /// spectrum has no unbound continuum, only bands.
    pub fn is_periodic(self) -> bool {
        matches!(self, PotentialFamily::CosineWell | PotentialFamily::SineSquared)
    }

    pub fn name(self) -> &'static str {
        match self {
            PotentialFamily::Harmonic => "harmonic",
            PotentialFamily::QuarticApprox => "quartic_approx",
            PotentialFamily::GaussianWell => "gaussian",
            PotentialFamily::CosineWell => "cosine",
            PotentialFamily::SineSquared => "sine_squared",
        }
    }
}

/// One well: a reduced shape scaled by its nonharmonicity, with position and
/// depth controls.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Well {
    pub family: PotentialFamily,
    pub alpha: f64,
    /// Position control u(t), in grid units.
    pub position: Control,
    /// Depth modulation beta(t); the well is scaled by 1 + beta.
    pub depth: Control,
}

impl Well {
    pub fn resting(family: PotentialFamily, alpha: f64) -> Result<Self> {
        Self::new(family, alpha, Control::Zero, Control::Zero)
    }

    pub fn new(family: PotentialFamily, alpha: f64, position: Control, depth: Control) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::NonPositive { what: "alpha", value: alpha });
        }
        Ok(Self { family, alpha, position, depth })
    }
}

/// One or two wells sharing the axis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PotentialLandscape {
    pub wells: Vec<Well>,
    /// Minimum admissible instantaneous separation for a two-well landscape.
    pub d_min: f64,
}

/// Default separation floor keeping two Gaussian wells resolved.
pub fn default_d_min(alpha: f64) -> f64 {
    4.0 / alpha
}

impl PotentialLandscape {
    pub fn single(family: PotentialFamily, alpha: f64) -> Result<Self> {
        Ok(Self {
            wells: vec![Well::resting(family, alpha)?],
            d_min: default_d_min(alpha),
        })
    }

    pub fn single_with(well: Well) -> Self {
        let d_min = default_d_min(well.alpha);
        Self { wells: vec![well], d_min }
    }

    pub fn pair(left: Well, right: Well, d_min: f64) -> Result<Self> {
        if !(d_min > 0.0) {
            return Err(Error::NonPositive { what: "d_min", value: d_min });
        }
        Ok(Self { wells: vec![left, right], d_min })
    }

    pub fn validate(&self) -> Result<()> {
        if self.wells.is_empty() || self.wells.len() > 2 {
            return Err(Error::WellCount(self.wells.len()));
        }
        if self.wells.len() == 2 && self.separation(0.0) < self.d_min {
            return Err(Error::Config(format!(
                "initial well separation {} is below d_min {}",
                self.separation(0.0),
                self.d_min
            )));
        }
        Ok(())
    }

    /// Instantaneous distance between the two well centers (0 for one well).
    pub fn separation(&self, t: f64) -> f64 {
        match self.wells.as_slice() {
            [a, b] => (a.position.value(t) - b.position.value(t)).abs(),
            _ => 0.0,
        }
    }

    /// Fill `out` with the total potential over `xs` at time `t`.
    pub fn evaluate_into(&self, xs: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
        self.evaluate_shifted_into(xs, t, 0.0, 0.0, out)
    }

    /// Like [`evaluate_into`](Self::evaluate_into) with extra offsets added to
    /// every position and depth control, the hook through which stochastic
    /// noise enters the dynamics.
    pub fn evaluate_shifted_into(
        &self,
        xs: &[f64],
        t: f64,
        du: f64,
        dbeta: f64,
        out: &mut [f64],
    ) -> Result<()> {
        assert_eq!(xs.len(), out.len());
        out.fill(0.0);
        for well in &self.wells {
            let u = well.position.value(t) + du;
            let depth_factor = 1.0 + well.depth.value(t) + dbeta;
            if depth_factor <= 0.0 {
                return Err(Error::DepthNonPositive { t, value: depth_factor });
            }
            let alpha = well.alpha;
            let scale = depth_factor / (2.0 * alpha * alpha);
            match well.family {
                // Write the common families out explicitly so the inner loop
                // stays free of the enum match.
                PotentialFamily::GaussianWell => {
                    let c = 2.0 * alpha * alpha / 3.0;
                    for (o, &x) in out.iter_mut().zip(xs) {
                        let d = x - u;
                        *o += scale * 1.5 * (1.0 - (-c * d * d).exp());
                    }
                }
                PotentialFamily::Harmonic => {
                    for (o, &x) in out.iter_mut().zip(xs) {
                        let d = alpha * (x - u);
                        *o += scale * d * d;
                    }
                }
                family => {
                    for (o, &x) in out.iter_mut().zip(xs) {
                        *o += scale * family.reduced_shape(alpha * (x - u));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn evaluate(&self, xs: &[f64], t: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; xs.len()];
        self.evaluate_into(xs, t, &mut out)?;
        Ok(out)
    }

    /// Potential at a single point.
    pub fn value_at(&self, x: f64, t: f64) -> Result<f64> {
        let mut out = [0.0];
        self.evaluate_into(&[x], t, &mut out)?;
        Ok(out[0])
    }

    pub fn alpha(&self) -> f64 {
        self.wells[0].alpha
    }

    pub fn family(&self) -> PotentialFamily {
        self.wells[0].family
    }
}

/// Oscillator units of an atom in a Gaussian optical tweezer.
///
/// Inputs in SI: mass (kg), waist (m), trap depth (J).
pub fn convert_tweezer(mass: f64, waist: f64, depth: f64) -> Result<UnitSystem> {
    check_positive(&[("mass", mass), ("waist", waist), ("depth", depth)])?;
    let omega = (4.0 * depth / (mass * waist * waist)).sqrt();
    let length = (HBAR * HBAR * waist * waist / (4.0 * mass * depth)).powf(0.25);
    let alpha = 3f64.sqrt() * length / waist;
    UnitSystem::new(omega, length, alpha)
}

/// Oscillator units of an atom on one site of an optical lattice.
///
/// Inputs in SI: mass (kg), lattice wavelength (m), lattice depth (J).
/// The nonharmonicity is the Lamb-Dicke parameter `2 pi l / lambda`.
pub fn convert_lattice(mass: f64, wavelength: f64, depth: f64) -> Result<UnitSystem> {
    check_positive(&[("mass", mass), ("wavelength", wavelength), ("depth", depth)])?;
    let k = 2.0 * std::f64::consts::PI / wavelength;
    let omega = k * (2.0 * depth / mass).sqrt();
    let length = (HBAR / (mass * omega)).sqrt();
    let alpha = k * length;
    UnitSystem::new(omega, length, alpha)
}

/// Oscillator units of a transmon with charging energy `e_c` and Josephson
/// energy `e_j` (both in J, or any common energy unit).
///
/// Matching the cosine well to the scaled form fixes
/// `alpha = (E_C / 2 E_J)^{1/4}`, so the relative anharmonicity is
/// `alpha^2 / 2 = sqrt(E_C / 8 E_J)`. The "length" is the phase zero-point
/// spread, dimensionless.
pub fn convert_transmon(e_c: f64, e_j: f64) -> Result<UnitSystem> {
    check_positive(&[("e_c", e_c), ("e_j", e_j)])?;
    let omega = (8.0 * e_c * e_j).sqrt() / HBAR;
    let length = (8.0 * e_c / e_j).powf(0.25);
    let alpha = (e_c / (2.0 * e_j)).powf(0.25);
    UnitSystem::new(omega, length, alpha)
}

fn check_positive(pairs: &[(&'static str, f64)]) -> Result<()> {
    for &(what, value) in pairs {
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::NonPositive { what, value });
        }
    }
    Ok(())
}
