//! Classical stochastic control noise and Monte Carlo estimates of noisy
//! fidelities.
//!
//! White noise on the position and depth controls is discretized per
//! propagator step: each step gets an independent Gaussian offset of variance
//! `gamma / dt`, so the time-integrated correlator matches
//! `<xi(t) xi(t')> = gamma delta(t - t')` at the propagator's resolution.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::WaveFunction;
use crate::potential::PotentialLandscape;
use crate::propagate::{evolve, NoisePath, RecordSpec, TimeGrid};
use crate::rng::stream_rng;

/// Noise strengths and Monte Carlo size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Position-noise strength (time-integrated variance density).
    pub gamma1: f64,
    /// Depth-noise strength.
    pub gamma2: f64,
    pub n_trajectories: usize,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if self.gamma1 < 0.0 {
            return Err(Error::NonPositive { what: "gamma1 (>= 0)", value: self.gamma1 });
        }
        if self.gamma2 < 0.0 {
            return Err(Error::NonPositive { what: "gamma2 (>= 0)", value: self.gamma2 });
        }
        if self.n_trajectories == 0 {
            return Err(Error::NonPositive { what: "n_trajectories", value: 0.0 });
        }
        Ok(())
    }

    pub fn is_quiet(&self) -> bool {
        self.gamma1 == 0.0 && self.gamma2 == 0.0
    }
}

/// Monte-Carlo-averaged fidelity with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub fidelity_mean: f64,
    pub std_error: f64,
    pub n_trajectories: usize,
    pub n_failed: usize,
}

/// Draw one piecewise-constant noise path. The stream is fully determined by
/// `(spec.seed, trajectory_index)`, independent of scheduling.
pub fn sample_noise_path(spec: &NoiseSpec, time: &TimeGrid, trajectory: u64) -> NoisePath {
    let mut rng = stream_rng(spec.seed, "noise", trajectory);
    let sigma1 = (spec.gamma1 / time.dt).sqrt();
    let sigma2 = (spec.gamma2 / time.dt).sqrt();
    let mut position = Vec::with_capacity(time.n_steps);
    let mut depth = Vec::with_capacity(time.n_steps);
    for _ in 0..time.n_steps {
        // both streams always draw, so gamma choices do not reshuffle the
        // other channel's samples (matched-seed comparisons stay matched)
        let g1: f64 = rng.sample(StandardNormal);
        let g2: f64 = rng.sample(StandardNormal);
        position.push(sigma1 * g1);
        depth.push(sigma2 * g2);
    }
    NoisePath { position, depth }
}

/// Fidelity of a noisy protocol against a target, averaged over noise
/// realizations of the Monte Carlo density matrix.
///
/// With both strengths zero this runs the single deterministic trajectory and
/// reports zero standard error.
pub fn noisy_fidelity(
    initial: &WaveFunction,
    landscape: &PotentialLandscape,
    time: &TimeGrid,
    target: &WaveFunction,
    spec: &NoiseSpec,
) -> Result<DensityEstimate> {
    spec.validate()?;
    let n = if spec.is_quiet() { 1 } else { spec.n_trajectories };

    let fidelities: Vec<Option<f64>> = (0..n as u64)
        .into_par_iter()
        .map(|idx| {
            let path = sample_noise_path(spec, time, idx);
            match evolve(initial, landscape, time, RecordSpec::default(), None, Some(&path)) {
                Ok(traj) => crate::grid::fidelity(&traj.final_state, target).ok(),
                Err(_) => None,
            }
        })
        .collect();

    let kept: Vec<f64> = fidelities.iter().flatten().copied().collect();
    let n_failed = n - kept.len();
    if kept.is_empty() {
        return Err(Error::Config("every noisy trajectory failed to propagate".into()));
    }
    let mean = compensated_mean(&kept);
    let std_error = if kept.len() < 2 || spec.is_quiet() {
        0.0
    } else {
        let var = kept.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (kept.len() - 1) as f64;
        (var / kept.len() as f64).sqrt()
    };
    Ok(DensityEstimate { fidelity_mean: mean, std_error, n_trajectories: kept.len(), n_failed })
}

// index-ordered Kahan sum, so the result does not depend on which worker
// finished first
fn compensated_mean(xs: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for &x in xs {
        let y = x - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum / xs.len() as f64
}

/// One row of a noise scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseScanCell {
    pub gamma1: f64,
    pub gamma2: f64,
    pub alpha: f64,
    pub mean_infidelity: f64,
    pub std_error: f64,
    pub n_failed: usize,
}

/// Evaluate the protocol's fidelity across a grid of noise strengths. The
/// same trajectory streams are reused for every cell (matched seeds), so
/// monotone trends are not washed out by resampling.
pub fn noise_scan(
    initial: &WaveFunction,
    landscape: &PotentialLandscape,
    time: &TimeGrid,
    target: &WaveFunction,
    base: &NoiseSpec,
    gamma1_list: &[f64],
    gamma2_list: &[f64],
) -> Result<Vec<NoiseScanCell>> {
    if gamma1_list.is_empty() || gamma2_list.is_empty() {
        return Err(Error::Config("noise scan needs nonempty gamma lists".into()));
    }
    let alpha = landscape.alpha();
    let mut cells = Vec::with_capacity(gamma1_list.len() * gamma2_list.len());
    for &g1 in gamma1_list {
        for &g2 in gamma2_list {
            let spec = NoiseSpec { gamma1: g1, gamma2: g2, ..*base };
            let est = noisy_fidelity(initial, landscape, time, target, &spec)?;
            cells.push(NoiseScanCell {
                gamma1: g1,
                gamma2: g2,
                alpha,
                mean_infidelity: 1.0 - est.fidelity_mean,
                std_error: est.std_error,
                n_failed: est.n_failed,
            });
        }
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crab::{Control, CrabWaveform};
    use crate::grid::make_grid;
    use crate::potential::{PotentialFamily, PotentialLandscape, Well};
    use crate::states::harmonic_ground;

    fn quiet_spec() -> NoiseSpec {
        NoiseSpec { gamma1: 0.0, gamma2: 0.0, n_trajectories: 64, seed: 5 }
    }

    #[test]
    fn zero_strength_paths_are_identically_zero() {
        let time = TimeGrid::periods(2.0, 200).unwrap();
        let path = sample_noise_path(&quiet_spec(), &time, 3);
        assert!(path.position.iter().all(|&v| v == 0.0));
        assert!(path.depth.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn step_variance_matches_the_white_noise_discretization() {
        let spec = NoiseSpec { gamma1: 2e-4, gamma2: 5e-5, n_trajectories: 1, seed: 9 };
        let time = TimeGrid::periods(50.0, 200).unwrap();
        let path = sample_noise_path(&spec, &time, 0);
        let n = path.position.len() as f64;
        assert!(n >= 1e4);
        for (vals, gamma) in [(&path.position, spec.gamma1), (&path.depth, spec.gamma2)] {
            let var = vals.iter().map(|v| v * v).sum::<f64>() / n;
            let expect = gamma / time.dt;
            // chi-square 3-sigma band around the expected variance
            let band = 3.0 * expect * (2.0 / n).sqrt();
            assert!(
                (var - expect).abs() < band,
                "sample variance {var} vs {expect} (band {band})"
            );
        }
    }

    #[test]
    fn steps_are_uncorrelated_at_lag_one() {
        let spec = NoiseSpec { gamma1: 1e-4, gamma2: 0.0, n_trajectories: 1, seed: 2 };
        let time = TimeGrid::periods(50.0, 200).unwrap();
        let path = sample_noise_path(&spec, &time, 0);
        let n = path.position.len();
        let var = path.position.iter().map(|v| v * v).sum::<f64>() / n as f64;
        let cov = path
            .position
            .windows(2)
            .map(|w| w[0] * w[1])
            .sum::<f64>()
            / (n - 1) as f64;
        assert!(cov.abs() < 4.0 * var / (n as f64).sqrt(), "lag-1 covariance {cov}");
    }

    #[test]
    fn paths_are_reproducible_per_trajectory_index() {
        let spec = NoiseSpec { gamma1: 1e-4, gamma2: 2e-4, n_trajectories: 8, seed: 11 };
        let time = TimeGrid::periods(1.0, 200).unwrap();
        let a = sample_noise_path(&spec, &time, 5);
        let b = sample_noise_path(&spec, &time, 5);
        assert_eq!(a, b);
        let c = sample_noise_path(&spec, &time, 6);
        assert_ne!(a, c);
    }

    fn driven_landscape(time: &TimeGrid) -> PotentialLandscape {
        let mut wf = CrabWaveform::new(time.duration, 4, 3.0, 4.0, Control::Zero).unwrap();
        let pattern = [0.2, 0.0, 0.0, 0.15, -0.1, 0.0, 0.05, 0.0];
        let p: Vec<f64> = pattern.iter().copied().cycle().take(wf.param_count()).collect();
        wf.set_params(&p);
        let well = Well::new(
            PotentialFamily::GaussianWell,
            0.25,
            Control::Crab(Box::new(wf)),
            Control::Zero,
        )
        .unwrap();
        PotentialLandscape::single_with(well)
    }

    #[test]
    fn zero_noise_equals_the_deterministic_run_exactly() {
        let grid = make_grid(256, 12.0).unwrap();
        let psi0 = harmonic_ground(&grid);
        let time = TimeGrid::periods(2.0, 200).unwrap();
        let landscape = driven_landscape(&time);
        let traj = evolve(&psi0, &landscape, &time, RecordSpec::default(), None, None).unwrap();
        let f_det = crate::grid::fidelity(&traj.final_state, &psi0).unwrap();

        let est = noisy_fidelity(&psi0, &landscape, &time, &psi0, &quiet_spec()).unwrap();
        assert_eq!(est.fidelity_mean, f_det);
        assert_eq!(est.std_error, 0.0);
        assert_eq!(est.n_trajectories, 1);
    }

    #[test]
    fn fidelity_degrades_monotonically_with_position_noise() {
        let grid = make_grid(256, 12.0).unwrap();
        let psi0 = harmonic_ground(&grid);
        let time = TimeGrid::periods(2.0, 200).unwrap();
        let landscape = driven_landscape(&time);
        let target = evolve(&psi0, &landscape, &time, RecordSpec::default(), None, None)
            .unwrap()
            .final_state;

        let mut means = Vec::new();
        for gamma1 in [0.0, 2e-3, 8e-3] {
            let spec = NoiseSpec { gamma1, gamma2: 0.0, n_trajectories: 48, seed: 21 };
            let est = noisy_fidelity(&psi0, &landscape, &time, &target, &spec).unwrap();
            means.push((est.fidelity_mean, est.std_error));
        }
        assert!((means[0].0 - 1.0).abs() < 1e-12);
        // matched seeds: the ordering should be clean at 3 sigma
        assert!(
            means[0].0 - means[1].0 > -3.0 * means[1].1,
            "{:?}",
            means
        );
        assert!(
            means[1].0 - means[2].0 > -3.0 * (means[1].1 + means[2].1),
            "{:?}",
            means
        );
        assert!(means[2].0 < means[0].0);
    }

    #[test]
    fn stderr_shrinks_with_the_trajectory_count() {
        let grid = make_grid(256, 12.0).unwrap();
        let psi0 = harmonic_ground(&grid);
        let time = TimeGrid::periods(1.0, 200).unwrap();
        let landscape = driven_landscape(&time);
        let spec_small = NoiseSpec { gamma1: 4e-3, gamma2: 0.0, n_trajectories: 32, seed: 3 };
        let spec_big = NoiseSpec { n_trajectories: 128, ..spec_small };
        let small = noisy_fidelity(&psi0, &landscape, &time, &psi0, &spec_small).unwrap();
        let big = noisy_fidelity(&psi0, &landscape, &time, &psi0, &spec_big).unwrap();
        // doubling twice should shrink the error by about 2; allow slack for
        // the variance of the variance
        let ratio = small.std_error / big.std_error;
        assert!(ratio > 1.2 && ratio < 3.5, "stderr ratio {ratio}");
    }

    #[test]
    fn scan_covers_the_grid_with_matched_streams() {
        let grid = make_grid(256, 12.0).unwrap();
        let psi0 = harmonic_ground(&grid);
        let time = TimeGrid::periods(1.0, 200).unwrap();
        let landscape = driven_landscape(&time);
        let base = NoiseSpec { gamma1: 0.0, gamma2: 0.0, n_trajectories: 16, seed: 17 };
        let cells = noise_scan(
            &psi0,
            &landscape,
            &time,
            &psi0,
            &base,
            &[0.0, 1e-3],
            &[0.0, 1e-3],
        )
        .unwrap();
        assert_eq!(cells.len(), 4);
        // the (0,0) cell is the deterministic infidelity
        let det = evolve(&psi0, &landscape, &time, RecordSpec::default(), None, None).unwrap();
        let f = crate::grid::fidelity(&det.final_state, &psi0).unwrap();
        assert_eq!(cells[0].mean_infidelity, 1.0 - f);
        assert!(cells.iter().all(|c| c.alpha == 0.25));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(NoiseSpec { gamma1: -1.0, gamma2: 0.0, n_trajectories: 1, seed: 0 }
            .validate()
            .is_err());
        assert!(NoiseSpec { gamma1: 0.0, gamma2: 0.0, n_trajectories: 0, seed: 0 }
            .validate()
            .is_err());
    }
}
