//! Constructors for every target state used by the protocols: Fock states of
//! the nonharmonic well, coherent states, finite GKP combs, four-legged and
//! double-well cats, and cubic-phase states.
//!
//! All constructors return unit-norm states (grid-normalized) and refuse
//! inputs whose tails fall off the grid.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{inner_product, SpatialGrid, WaveFunction};
use crate::spectrum::EigenBasis;

/// Weighted comb of squeezed displaced Gaussians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GkpParams {
    pub coeffs: Vec<f64>,
    pub displacements: Vec<f64>,
    pub squeeze: f64,
}

impl GkpParams {
    /// The three-peak instance with weights (1, 2, 1), displacements
    /// `(-sqrt(4 pi), 0, sqrt(4 pi))` and squeezing 0.6.
    pub fn three_peak() -> Self {
        let d = (4.0 * PI).sqrt();
        Self { coeffs: vec![1.0, 2.0, 1.0], displacements: vec![-d, 0.0, d], squeeze: 0.6 }
    }

    fn validate(&self) -> Result<()> {
        if self.coeffs.is_empty() || self.coeffs.len() != self.displacements.len() {
            return Err(Error::Config(
                "gkp coeffs and displacements must be nonempty and the same length".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CatSign {
    Plus,
    Minus,
}

impl CatSign {
    fn factor(self) -> f64 {
        match self {
            CatSign::Plus => 1.0,
            CatSign::Minus => -1.0,
        }
    }
}

/// Ground state of the leading harmonic approximation,
/// `pi^{-1/4} exp(-x^2/2)`.
pub fn harmonic_ground(grid: &Arc<SpatialGrid>) -> WaveFunction {
    WaveFunction::from_fn(grid, |x| Complex64::new(PI.powf(-0.25) * (-x * x / 2.0).exp(), 0.0))
}

/// Coherent state `psi_gamma(x) = pi^{-1/4} exp[-(x - sqrt2 Re gamma)^2 / 2
/// + i sqrt2 x Im gamma]`.
pub fn coherent(grid: &Arc<SpatialGrid>, gamma: Complex64) -> Result<WaveFunction> {
    if !gamma.re.is_finite() || !gamma.im.is_finite() {
        return Err(Error::Config("coherent amplitude must be finite".into()));
    }
    let x0 = 2f64.sqrt() * gamma.re;
    let p0 = 2f64.sqrt() * gamma.im;
    let raw: Vec<Complex64> = grid
        .xs()
        .iter()
        .map(|&x| {
            Complex64::new(PI.powf(-0.25) * (-(x - x0).powi(2) / 2.0).exp(), 0.0)
                * Complex64::cis(p0 * x)
        })
        .collect();
    // the analytic form integrates to one; any deficit is mass off the grid
    let norm_sq: f64 = raw.iter().map(|a| a.norm_sqr()).sum::<f64>() * grid.dx;
    if (norm_sq - 1.0).abs() > 1e-10 {
        return Err(Error::TailClipping { leaked: (norm_sq - 1.0).abs() });
    }
    let mut psi = WaveFunction { grid: Arc::clone(grid), space: crate::grid::Space::Position, amps: raw };
    psi.normalize();
    Ok(psi)
}

/// Finite GKP state: normalized sum of squeezed displaced copies of the
/// harmonic ground state.
pub fn gkp(grid: &Arc<SpatialGrid>, params: &GkpParams) -> Result<WaveFunction> {
    params.validate()?;
    let s = params.squeeze;
    let stretch = s.exp();
    let amp = (s / 2.0).exp() * PI.powf(-0.25);
    let psi = WaveFunction::from_fn(grid, |x| {
        let mut acc = 0.0;
        for (&c, &d) in params.coeffs.iter().zip(&params.displacements) {
            let y = stretch * (x - d);
            acc += c * amp * (-y * y / 2.0).exp();
        }
        Complex64::new(acc, 0.0)
    });
    check_edges(&psi)?;
    Ok(psi)
}

/// Four-legged cat `N [psi_g + psi_{-g} +/- psi_{ig} +/- psi_{-ig}]`.
pub fn four_legged_cat(grid: &Arc<SpatialGrid>, gamma: Complex64, sign: CatSign) -> Result<WaveFunction> {
    if gamma.norm() < 0.5 {
        return Err(Error::Config(format!(
            "four-legged cat needs |gamma| >~ 1 to resolve its legs, got {}",
            gamma.norm()
        )));
    }
    let legs = [
        (gamma, 1.0),
        (-gamma, 1.0),
        (gamma * Complex64::i(), sign.factor()),
        (-gamma * Complex64::i(), sign.factor()),
    ];
    let mut amps = vec![Complex64::ZERO; grid.n_points];
    for (g, w) in legs {
        let x0 = 2f64.sqrt() * g.re;
        let p0 = 2f64.sqrt() * g.im;
        for (a, &x) in amps.iter_mut().zip(grid.xs()) {
            *a += w
                * Complex64::new(PI.powf(-0.25) * (-(x - x0).powi(2) / 2.0).exp(), 0.0)
                * Complex64::cis(p0 * x);
        }
    }
    let mut psi = WaveFunction { grid: Arc::clone(grid), space: crate::grid::Space::Position, amps };
    let raw = psi.norm_sq();
    if raw < 1e-12 {
        return Err(Error::Config("cat components cancel to numerical zero".into()));
    }
    psi.normalize();
    check_edges(&psi)?;
    Ok(psi)
}

/// Two-legged cat `N [psi_gamma +/- psi_{-gamma}]`.
pub fn two_legged_cat(grid: &Arc<SpatialGrid>, gamma: Complex64, sign: CatSign) -> Result<WaveFunction> {
    if gamma.norm() < 0.5 {
        return Err(Error::Config(format!(
            "two-legged cat needs |gamma| >~ 1 to resolve its legs, got {}",
            gamma.norm()
        )));
    }
    let a = coherent(grid, gamma)?;
    let b = coherent(grid, -gamma)?;
    let f = sign.factor();
    let amps = a.amps.iter().zip(&b.amps).map(|(x, y)| x + f * y).collect();
    let mut psi = WaveFunction { grid: Arc::clone(grid), space: crate::grid::Space::Position, amps };
    if psi.norm_sq() < 1e-12 {
        return Err(Error::Config("cat components cancel to numerical zero".into()));
    }
    psi.normalize();
    check_edges(&psi)?;
    Ok(psi)
}

fn localized_lobes(grid: &Arc<SpatialGrid>, d: f64) -> Result<(WaveFunction, WaveFunction, f64)> {
    if !(d > 0.0) {
        return Err(Error::NonPositive { what: "separation", value: d });
    }
    let mk = |center: f64| {
        let mut w = WaveFunction::from_fn(grid, |x| {
            Complex64::new(PI.powf(-0.25) * (-(x - center).powi(2) / 2.0).exp(), 0.0)
        });
        w.normalize();
        w
    };
    let left = mk(-d / 2.0);
    let right = mk(d / 2.0);
    let overlap = inner_product(&left, &right)?.norm();
    if overlap > 1e-3 {
        return Err(Error::LobeOverlap { overlap });
    }
    Ok((left, right, overlap))
}

/// Double-well cat `N [psi_0(x + d/2) + e^{i phase} psi_0(x - d/2)]`; the
/// balanced cat of the two-well protocols uses `phase = pi/2`.
pub fn double_well_cat(grid: &Arc<SpatialGrid>, d: f64, phase: f64) -> Result<WaveFunction> {
    let (left, right, _) = localized_lobes(grid, d)?;
    let w = Complex64::cis(phase);
    let amps = left
        .amps
        .iter()
        .zip(&right.amps)
        .map(|(l, r)| l + w * r)
        .collect();
    let mut psi = WaveFunction { grid: Arc::clone(grid), space: crate::grid::Space::Position, amps };
    psi.normalize();
    check_edges(&psi)?;
    Ok(psi)
}

/// Symmetric/antisymmetric combination of the two localized ground lobes.
/// Normalizing `L +/- R` is the symmetric (Loewdin) orthogonalization of the
/// slightly overlapping pair, so `K+` and `K-` come out exactly orthogonal.
pub fn kerr_cat(grid: &Arc<SpatialGrid>, d: f64, sign: CatSign) -> Result<WaveFunction> {
    let (left, right, _) = localized_lobes(grid, d)?;
    let f = sign.factor();
    let amps = left
        .amps
        .iter()
        .zip(&right.amps)
        .map(|(l, r)| l + f * r)
        .collect();
    let mut psi = WaveFunction { grid: Arc::clone(grid), space: crate::grid::Space::Position, amps };
    psi.normalize();
    check_edges(&psi)?;
    Ok(psi)
}

/// Cubic-phase state: `N exp(i c x^3)` on squeezed vacuum
/// `e^{s/2} psi_0(e^s x)`.
pub fn cubic_phase(grid: &Arc<SpatialGrid>, cubicity: f64, squeeze: f64) -> Result<WaveFunction> {
    // phase advance between neighboring samples must stay well under pi
    let winding = 3.0 * cubicity.abs() * grid.half_width().powi(2) * grid.dx;
    if winding >= PI {
        return Err(Error::PhaseAliasing { winding });
    }
    let stretch = squeeze.exp();
    let mut psi = WaveFunction::from_fn(grid, |x| {
        let y = stretch * x;
        Complex64::new(PI.powf(-0.25) * (-y * y / 2.0).exp(), 0.0)
            * Complex64::cis(cubicity * x * x * x)
    });
    psi.normalize();
    check_edges(&psi)?;
    Ok(psi)
}

/// The n-th eigenstate of the landscape backing `basis`.
pub fn fock_target(basis: &EigenBasis, n: usize) -> Result<WaveFunction> {
    basis.state(n).cloned()
}

/// Refuse states with visible mass in the outermost grid cells.
fn check_edges(psi: &WaveFunction) -> Result<()> {
    let n = psi.amps.len();
    let leak = (psi.amps[0].norm_sqr()
        + psi.amps[1].norm_sqr()
        + psi.amps[n - 1].norm_sqr()
        + psi.amps[n - 2].norm_sqr())
        * psi.grid.dx;
    if leak > 1e-12 {
        return Err(Error::TailClipping { leaked: leak });
    }
    Ok(())
}

/// Exact symmetric orthogonalization of a nearly orthogonal pair. Both inputs
/// must be unit norm; the output pair spans the same plane and is orthonormal.
pub fn lowdin_pair(a: &WaveFunction, b: &WaveFunction) -> Result<(WaveFunction, WaveFunction)> {
    lowdin_pair_with_cap(a, b, 1e-3)
}

/// [`lowdin_pair`] with an explicit overlap ceiling, for basis pairs that are
/// legitimately less separated than double-well lobes (displaced GKP combs).
pub fn lowdin_pair_with_cap(
    a: &WaveFunction,
    b: &WaveFunction,
    cap: f64,
) -> Result<(WaveFunction, WaveFunction)> {
    let s = inner_product(a, b)?;
    let mag = s.norm();
    if mag <= 1e-10 {
        return Ok((a.clone(), b.clone()));
    }
    if mag > cap {
        return Err(Error::LobeOverlap { overlap: mag });
    }
    // S^{-1/2} for [[1, s], [s*, 1]] built from its eigenbasis
    let phase = s / mag;
    let lp = 1.0 / (1.0 + mag).sqrt();
    let lm = 1.0 / (1.0 - mag).sqrt();
    let c_on = 0.5 * (lp + lm);
    let c_off = 0.5 * (lp - lm);
    let mut a2 = a.clone();
    let mut b2 = b.clone();
    for ((na, nb), (oa, ob)) in a2.amps.iter_mut().zip(b2.amps.iter_mut()).zip(a.amps.iter().zip(&b.amps)) {
        let cross_a = c_off * phase * ob;
        let cross_b = c_off * phase.conj() * oa;
        *na = c_on * oa + cross_a;
        *nb = c_on * ob + cross_b;
    }
    Ok((a2, b2))
}
