//! Phase-space and excitation diagnostics: Wigner maps, average excitation
//! numbers, and probability-density histories.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::grid::WaveFunction;
use crate::propagate::Trajectory;
use crate::spectrum::EigenBasis;

/// Real-valued Wigner map on the position grid and a momentum grid of half
/// the state's resolvable extent.
#[derive(Debug, Clone)]
pub struct WignerMap {
    pub xs: Vec<f64>,
    /// Ascending momentum samples.
    pub ps: Vec<f64>,
    /// `values[i][k]` is W(xs[i], ps[k]).
    pub values: Vec<Vec<f64>>,
}

impl WignerMap {
    pub fn dx(&self) -> f64 {
        self.xs[1] - self.xs[0]
    }

    pub fn dp(&self) -> f64 {
        self.ps[1] - self.ps[0]
    }

    /// Total integral, which should be one for a normalized state.
    pub fn integral(&self) -> f64 {
        let cell = self.dx() * self.dp();
        self.values.iter().flatten().sum::<f64>() * cell
    }

    /// Marginal over momentum: |psi(x)|^2 on the x grid.
    pub fn position_marginal(&self) -> Vec<f64> {
        let dp = self.dp();
        self.values.iter().map(|row| row.iter().sum::<f64>() * dp).collect()
    }

    /// Marginal over position: |psi(p)|^2 on the p grid.
    pub fn momentum_marginal(&self) -> Vec<f64> {
        let dx = self.dx();
        let n_p = self.ps.len();
        (0..n_p)
            .map(|k| self.values.iter().map(|row| row[k]).sum::<f64>() * dx)
            .collect()
    }
}

/// Wigner transform `W(x,p) = (1/pi) Int psi*(x+y) psi(x-y) e^{2ipy} dy`,
/// computed row-by-row with an FFT over the offset coordinate.
///
/// With `p_grid = None` the natural momentum grid (the state's Nyquist band
/// halved) is used and each row costs one FFT. An explicit grid is evaluated
/// by direct summation and must stay inside the halved band.
pub fn wigner(psi: &WaveFunction, p_grid: Option<&[f64]>) -> Result<WignerMap> {
    let nsq = psi.norm_sq();
    if (nsq - 1.0).abs() > 1e-8 {
        return Err(Error::Unnormalized(nsq));
    }
    let grid = &psi.grid;
    let n = grid.n_points;
    let dx = grid.dx;
    let p_limit = std::f64::consts::PI / (2.0 * dx);

    if let Some(ps) = p_grid {
        if ps.iter().any(|p| p.abs() > p_limit) {
            return Err(Error::KickTooLarge {
                k: ps.iter().fold(0.0f64, |m, p| m.max(p.abs())),
                limit: p_limit,
            });
        }
    }

    // offsets in FFT order: y_j = j dx for j < n/2, (j - n) dx beyond
    let offset = |j: usize| -> i64 {
        if j < n / 2 {
            j as i64
        } else {
            j as i64 - n as i64
        }
    };

    let mut rows_in: Vec<Vec<Complex64>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut g = vec![Complex64::ZERO; n];
        for (j, slot) in g.iter_mut().enumerate() {
            let d = offset(j);
            let jp = i as i64 + d;
            let jm = i as i64 - d;
            if jp >= 0 && jp < n as i64 && jm >= 0 && jm < n as i64 {
                *slot = psi.amps[jp as usize].conj() * psi.amps[jm as usize];
            }
        }
        rows_in.push(g);
    }

    let scale = dx / std::f64::consts::PI;
    match p_grid {
        None => {
            // natural grid: q_k = k dq conjugate to y, p = q/2
            let ifft = FftPlanner::new().plan_fft_inverse(n);
            let dq = 2.0 * std::f64::consts::PI / (n as f64 * dx);
            let mut ps: Vec<(f64, usize)> = (0..n)
                .map(|k| {
                    let q = if k < n / 2 { k as f64 * dq } else { (k as f64 - n as f64) * dq };
                    (q / 2.0, k)
                })
                .collect();
            ps.sort_by(|a, b| a.0.total_cmp(&b.0));

            let mut values = Vec::with_capacity(n);
            for mut g in rows_in {
                ifft.process(&mut g);
                let row: Vec<f64> = ps.iter().map(|&(_, k)| g[k].re * scale).collect();
                values.push(row);
            }
            Ok(WignerMap {
                xs: grid.xs().to_vec(),
                ps: ps.into_iter().map(|(p, _)| p).collect(),
                values,
            })
        }
        Some(ps) => {
            let mut values = Vec::with_capacity(n);
            for g in rows_in {
                let row: Vec<f64> = ps
                    .iter()
                    .map(|&p| {
                        let mut acc = Complex64::ZERO;
                        for (j, &gj) in g.iter().enumerate() {
                            let y = offset(j) as f64 * dx;
                            acc += gj * Complex64::cis(2.0 * p * y);
                        }
                        acc.re * scale
                    })
                    .collect();
                values.push(row);
            }
            Ok(WignerMap { xs: grid.xs().to_vec(), ps: ps.to_vec(), values })
        }
    }
}

/// Excitation number averaged over a trajectory: the plain time integral
/// `Int dt Sum_n n P_n(t)` and its division by the duration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AverageExcitation {
    pub integral: f64,
    pub time_average: f64,
}

pub fn average_excitation(traj: &Trajectory, _basis: &EigenBasis) -> Result<AverageExcitation> {
    let rec = &traj.observables;
    if rec.occupations.is_empty() || rec.occupations.len() != rec.times.len() {
        return Err(Error::MissingRecords { what: "occupation" });
    }
    // trapezoid over the recorded times
    let nbar: Vec<f64> = rec
        .occupations
        .iter()
        .map(|p| p.iter().enumerate().map(|(n, &pn)| n as f64 * pn).sum())
        .collect();
    let mut integral = 0.0;
    for (w, ts) in nbar.windows(2).zip(rec.times.windows(2)) {
        integral += 0.5 * (w[0] + w[1]) * (ts[1] - ts[0]);
    }
    let time_average = if traj.duration > 0.0 { integral / traj.duration } else { 0.0 };
    Ok(AverageExcitation { integral, time_average })
}

/// Probability-density history from the recorded snapshots.
pub fn density_map(traj: &Trajectory) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    if traj.snapshots.is_empty() {
        return Err(Error::MissingRecords { what: "snapshot" });
    }
    let rows = traj.snapshots.iter().map(|s| s.density()).collect();
    Ok((traj.snapshot_times.clone(), rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{fidelity, make_grid, to_momentum};
    use crate::potential::{PotentialFamily, PotentialLandscape};
    use crate::propagate::{evolve, RecordSpec, TimeGrid};
    use crate::spectrum::diagonalize;
    use crate::states::{coherent, harmonic_ground};
    use std::f64::consts::PI;

    #[test]
    fn ground_state_wigner_peaks_at_one_over_pi() {
        let grid = make_grid(256, 10.0).unwrap();
        let psi = harmonic_ground(&grid);
        let w = wigner(&psi, None).unwrap();
        let i0 = w.xs.iter().position(|&x| x.abs() < 1e-12).unwrap();
        let k0 = w.ps.iter().position(|&p| p.abs() < 1e-12).unwrap();
        assert!((w.values[i0][k0] - 1.0 / PI).abs() < 1e-6);
        // Gaussian Wigner functions are nonnegative
        for row in &w.values {
            for &v in row {
                assert!(v >= -1e-10);
            }
        }
        assert!((w.integral() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn fock_one_wigner_is_negative_at_the_origin() {
        let grid = make_grid(512, 12.0).unwrap();
        let landscape = PotentialLandscape::single(PotentialFamily::Harmonic, 0.25).unwrap();
        let basis = diagonalize(&landscape, &grid, 2).unwrap();
        let w = wigner(&basis.states[1], None).unwrap();
        let i0 = w.xs.iter().position(|&x| x.abs() < 1e-12).unwrap();
        let k0 = w.ps.iter().position(|&p| p.abs() < 1e-12).unwrap();
        assert!((w.values[i0][k0] + 1.0 / PI).abs() < 1e-4, "W(0,0) = {}", w.values[i0][k0]);
    }

    #[test]
    fn coherent_state_wigner_is_displaced() {
        let grid = make_grid(256, 12.0).unwrap();
        let gamma = Complex64::new(1.0, 0.5);
        let psi = coherent(&grid, gamma).unwrap();
        let w = wigner(&psi, None).unwrap();
        let mut best = (0.0, 0.0, f64::MIN);
        for (i, row) in w.values.iter().enumerate() {
            for (k, &v) in row.iter().enumerate() {
                if v > best.2 {
                    best = (w.xs[i], w.ps[k], v);
                }
            }
        }
        assert!((best.0 - 2f64.sqrt() * gamma.re).abs() < 2.0 * w.dx());
        assert!((best.1 - 2f64.sqrt() * gamma.im).abs() < 2.0 * w.dp());
        // the discrete peak sits up to half a cell away from the true maximum
        assert!((best.2 - 1.0 / PI).abs() < 2e-3);
    }

    #[test]
    fn wigner_marginals_match_both_densities() {
        let grid = make_grid(256, 12.0).unwrap();
        let psi = coherent(&grid, Complex64::new(0.8, -0.6)).unwrap();
        let w = wigner(&psi, None).unwrap();

        let px = w.position_marginal();
        for (m, a) in px.iter().zip(&psi.amps) {
            assert!((m - a.norm_sqr()).abs() < 1e-6);
        }

        let pp = w.momentum_marginal();
        let phi = to_momentum(&psi).unwrap();
        // compare on the halved grid by locating each Wigner p in the fft grid
        let mut dens = vec![0.0; grid.n_points];
        for (a, &p) in phi.amps.iter().zip(grid.ps()) {
            let idx = ((p - w.ps[0]) / w.dp()).round() as i64;
            if idx >= 0 && (idx as usize) < dens.len() {
                dens[idx as usize] = a.norm_sqr();
            }
        }
        for (k, &m) in pp.iter().enumerate() {
            if dens[k] > 0.0 {
                assert!((m - dens[k]).abs() < 1e-6, "p = {}: {m} vs {}", w.ps[k], dens[k]);
            }
        }
    }

    #[test]
    fn wigner_overlap_formula_reproduces_fidelity() {
        let grid = make_grid(256, 12.0).unwrap();
        let a = coherent(&grid, Complex64::new(0.6, 0.0)).unwrap();
        let b = coherent(&grid, Complex64::new(0.0, 0.4)).unwrap();
        let wa = wigner(&a, None).unwrap();
        let wb = wigner(&b, None).unwrap();
        let cell = wa.dx() * wa.dp();
        let overlap: f64 = wa
            .values
            .iter()
            .zip(&wb.values)
            .flat_map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x * y))
            .sum::<f64>()
            * cell
            * 2.0
            * PI;
        let f = fidelity(&a, &b).unwrap();
        assert!((overlap - f).abs() < 1e-5, "{overlap} vs {f}");
    }

    #[test]
    fn explicit_p_grid_agrees_with_the_fft_route() {
        let grid = make_grid(128, 8.0).unwrap();
        let psi = harmonic_ground(&grid);
        let w_fft = wigner(&psi, None).unwrap();
        let subset: Vec<f64> = w_fft.ps.iter().copied().step_by(16).collect();
        let w_dft = wigner(&psi, Some(&subset)).unwrap();
        for (k, &p) in subset.iter().enumerate() {
            let k_fft = w_fft.ps.iter().position(|&q| (q - p).abs() < 1e-12).unwrap();
            for i in 0..w_fft.xs.len() {
                assert!((w_dft.values[i][k] - w_fft.values[i][k_fft]).abs() < 1e-12);
            }
        }
        // out-of-band request is refused
        let too_far = [std::f64::consts::PI / grid.dx];
        assert!(wigner(&psi, Some(&too_far)).is_err());
    }

    #[test]
    fn excitation_averages_for_stationary_states() {
        let grid = make_grid(256, 12.0).unwrap();
        let landscape = PotentialLandscape::single(PotentialFamily::GaussianWell, 0.25).unwrap();
        let basis = diagonalize(&landscape, &grid, 4).unwrap();
        let time = TimeGrid::periods(2.0, 200).unwrap();
        let record = RecordSpec { observable_stride: 20, ..Default::default() };

        let traj =
            evolve(&basis.states[1], &landscape, &time, record, Some(&basis), None).unwrap();
        let n = average_excitation(&traj, &basis).unwrap();
        assert!((n.time_average - 1.0).abs() < 1e-6, "time average {}", n.time_average);
        assert!((n.integral - time.duration).abs() < 1e-4);

        let traj0 =
            evolve(&basis.states[0], &landscape, &time, record, Some(&basis), None).unwrap();
        let n0 = average_excitation(&traj0, &basis).unwrap();
        assert!(n0.time_average.abs() < 1e-8);
    }

    #[test]
    fn coherent_state_keeps_its_poisson_mean() {
        let grid = make_grid(256, 12.0).unwrap();
        let landscape = PotentialLandscape::single(PotentialFamily::Harmonic, 0.25).unwrap();
        let basis = diagonalize(&landscape, &grid, 16).unwrap();
        let gamma = 1.1;
        let psi = coherent(&grid, Complex64::new(gamma, 0.0)).unwrap();
        let time = TimeGrid::periods(1.0, 200).unwrap();
        let record = RecordSpec { observable_stride: 25, ..Default::default() };
        let traj = evolve(&psi, &landscape, &time, record, Some(&basis), None).unwrap();
        let n = average_excitation(&traj, &basis).unwrap();
        assert!(
            (n.time_average - gamma * gamma).abs() < 1e-3,
            "time average {} vs {}",
            n.time_average,
            gamma * gamma
        );
    }

    #[test]
    fn density_map_rows_are_normalized_and_stationary_for_eigenstates() {
        let grid = make_grid(256, 12.0).unwrap();
        let landscape = PotentialLandscape::single(PotentialFamily::GaussianWell, 0.25).unwrap();
        let basis = diagonalize(&landscape, &grid, 2).unwrap();
        // the split-step eigenvector differs from the true one at O(dt^2);
        // resolve below 1e-8 by cranking the step rate
        let time = TimeGrid::periods(0.25, 25600).unwrap();
        let record = RecordSpec { snapshot_stride: 1600, ..Default::default() };
        let traj = evolve(&basis.states[1], &landscape, &time, record, None, None).unwrap();
        let (times, rows) = density_map(&traj).unwrap();
        assert_eq!(times.len(), rows.len());
        let first = &rows[0];
        for row in &rows {
            let total: f64 = row.iter().sum::<f64>() * grid.dx;
            assert!((total - 1.0).abs() < 1e-8);
            for (a, b) in row.iter().zip(first) {
                assert!((a - b).abs() < 1e-8);
            }
        }

        let bare = evolve(
            &basis.states[0],
            &landscape,
            &time,
            RecordSpec::default(),
            None,
            None,
        )
        .unwrap();
        assert!(matches!(density_map(&bare), Err(Error::MissingRecords { .. })));
    }
}
