//! Time evolution under the controlled landscape via Strang splitting.
//!
//! Each step applies a half kinetic phase in momentum space, the full
//! potential phase with controls sampled at the step midpoint, and another
//! half kinetic phase. Interior half kinetics merge into full steps whenever
//! nothing needs the position representation in between, which halves the
//! FFT count on record-free runs.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{inner_product, SpatialGrid, Space, WaveFunction};
use crate::potential::PotentialLandscape;
use crate::spectrum::{occupations, EigenBasis};

/// Uniform step grid covering a protocol of the given duration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub duration: f64,
    pub dt: f64,
    pub n_steps: usize,
}

pub const DEFAULT_STEPS_PER_PERIOD: usize = 200;
const DT_MAX: f64 = std::f64::consts::TAU / 20.0;

impl TimeGrid {
    /// Steps of at most `2 pi / steps_per_period`, chosen so `dt * n = T`
    /// exactly.
    pub fn new(duration: f64, steps_per_period: usize) -> Result<Self> {
        if !(duration >= 0.0) || !duration.is_finite() {
            return Err(Error::NonPositive { what: "duration", value: duration });
        }
        if steps_per_period == 0 {
            return Err(Error::NonPositive { what: "steps_per_period", value: 0.0 });
        }
        let dt_target = std::f64::consts::TAU / steps_per_period as f64;
        if dt_target > DT_MAX {
            return Err(Error::Config(format!(
                "dt = {dt_target} exceeds the stability bound {DT_MAX}"
            )));
        }
        let n_steps = (duration / dt_target).ceil() as usize;
        let dt = if n_steps == 0 { dt_target } else { duration / n_steps as f64 };
        Ok(Self { duration, dt, n_steps })
    }

    /// Protocol quoted in trap periods, `T = 2 pi * periods`.
    pub fn periods(t_over_2pi: f64, steps_per_period: usize) -> Result<Self> {
        Self::new(std::f64::consts::TAU * t_over_2pi, steps_per_period)
    }

    /// Controls are sampled here: the midpoint of step `k`.
    pub fn midpoint(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.dt
    }
}

/// Piecewise-constant stochastic offsets added to every position and depth
/// control, one value per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisePath {
    pub position: Vec<f64>,
    pub depth: Vec<f64>,
}

impl NoisePath {
    pub fn zero(n_steps: usize) -> Self {
        Self { position: vec![0.0; n_steps], depth: vec![0.0; n_steps] }
    }
}

/// What to record along the way. Strides are in steps; zero disables.
#[derive(Debug, Clone, Copy, Default)]
pub struct RecordSpec {
    pub observable_stride: usize,
    pub snapshot_stride: usize,
}

#[derive(Debug, Clone, Default)]
pub struct ObservableRecord {
    pub times: Vec<f64>,
    pub x_mean: Vec<f64>,
    pub p_mean: Vec<f64>,
    pub norm: Vec<f64>,
    pub occupations: Vec<Vec<f64>>,
}

/// Result of one evolution: the final state plus whatever was recorded.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub final_state: WaveFunction,
    pub observables: ObservableRecord,
    pub snapshot_times: Vec<f64>,
    pub snapshots: Vec<WaveFunction>,
    pub n_steps: usize,
    pub duration: f64,
}

struct Stepper {
    grid: Arc<SpatialGrid>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    /// exp(-i p^2/2 * dt/2) with the inverse-FFT 1/N folded in.
    kin_half: Vec<Complex64>,
    kin_full: Vec<Complex64>,
    v_buf: Vec<f64>,
}

impl Stepper {
    fn new(grid: &Arc<SpatialGrid>, dt: f64) -> Self {
        let n = grid.n_points;
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(n);
        let ifft = planner.plan_fft_inverse(n);
        let scratch_len = fft.get_inplace_scratch_len().max(ifft.get_inplace_scratch_len());
        let inv_n = 1.0 / n as f64;
        let kin_half: Vec<Complex64> = grid
            .ps()
            .iter()
            .map(|&p| Complex64::cis(-p * p / 2.0 * dt / 2.0) * inv_n)
            .collect();
        let kin_full: Vec<Complex64> = grid
            .ps()
            .iter()
            .map(|&p| Complex64::cis(-p * p / 2.0 * dt) * inv_n)
            .collect();
        Self {
            grid: Arc::clone(grid),
            fft,
            ifft,
            scratch: vec![Complex64::ZERO; scratch_len],
            kin_half,
            kin_full,
            v_buf: vec![0.0; n],
        }
    }

    fn kinetic(&mut self, amps: &mut [Complex64], half: bool) {
        self.fft.process_with_scratch(amps, &mut self.scratch);
        let phase = if half { &self.kin_half } else { &self.kin_full };
        for (a, k) in amps.iter_mut().zip(phase) {
            *a *= k;
        }
        self.ifft.process_with_scratch(amps, &mut self.scratch);
    }

    fn potential(
        &mut self,
        amps: &mut [Complex64],
        landscape: &PotentialLandscape,
        t: f64,
        dt: f64,
        du: f64,
        dbeta: f64,
    ) -> Result<()> {
        landscape.evaluate_shifted_into(self.grid.xs(), t, du, dbeta, &mut self.v_buf)?;
        for (a, &v) in amps.iter_mut().zip(&self.v_buf) {
            *a *= Complex64::cis(-v * dt);
        }
        Ok(())
    }
}

/// Evolve `psi0` for the full time grid.
pub fn evolve(
    psi0: &WaveFunction,
    landscape: &PotentialLandscape,
    time: &TimeGrid,
    record: RecordSpec,
    basis: Option<&EigenBasis>,
    noise: Option<&NoisePath>,
) -> Result<Trajectory> {
    if psi0.space != Space::Position {
        return Err(Error::SpaceMismatch { expected: "position" });
    }
    let nsq = psi0.norm_sq();
    if (nsq - 1.0).abs() > 1e-8 {
        return Err(Error::Unnormalized(nsq));
    }
    if let Some(path) = noise {
        if path.position.len() != time.n_steps || path.depth.len() != time.n_steps {
            return Err(Error::Config(format!(
                "noise path length {} does not match {} steps",
                path.position.len(),
                time.n_steps
            )));
        }
    }
    landscape.validate()?;

    let grid = &psi0.grid;
    let mut amps = psi0.amps.clone();
    let mut out = Trajectory {
        final_state: psi0.clone(),
        observables: ObservableRecord::default(),
        snapshot_times: Vec::new(),
        snapshots: Vec::new(),
        n_steps: time.n_steps,
        duration: time.duration,
    };

    let wants_obs = |k: usize| {
        record.observable_stride > 0 && (k % record.observable_stride == 0 || k == time.n_steps)
    };
    let wants_snap = |k: usize| {
        record.snapshot_stride > 0 && (k % record.snapshot_stride == 0 || k == time.n_steps)
    };

    if wants_obs(0) {
        record_observables(&mut out.observables, grid, &amps, 0.0, basis)?;
    }
    if wants_snap(0) {
        out.snapshot_times.push(0.0);
        out.snapshots.push(psi0.clone());
    }
    if time.n_steps == 0 {
        return Ok(out);
    }

    let mut stepper = Stepper::new(grid, time.dt);
    let dx = grid.dx;

    stepper.kinetic(&mut amps, true);
    for k in 0..time.n_steps {
        let t_mid = time.midpoint(k);
        let (du, dbeta) = match noise {
            Some(p) => (p.position[k], p.depth[k]),
            None => (0.0, 0.0),
        };
        stepper.potential(&mut amps, landscape, t_mid, time.dt, du, dbeta)?;

        // norm is representation-independent; check it mid-split each step
        let norm = (amps.iter().map(|a| a.norm_sqr()).sum::<f64>() * dx).sqrt();
        if (norm - 1.0).abs() > 1e-8 {
            return Err(Error::NormDrift { step: k, drift: (norm - 1.0).abs() });
        }

        let last = k + 1 == time.n_steps;
        if wants_obs(k + 1) || wants_snap(k + 1) || last {
            stepper.kinetic(&mut amps, true);
            let t = if last { time.duration } else { (k + 1) as f64 * time.dt };
            if wants_obs(k + 1) {
                record_observables(&mut out.observables, grid, &amps, t, basis)?;
            }
            if wants_snap(k + 1) {
                out.snapshot_times.push(t);
                out.snapshots.push(WaveFunction {
                    grid: Arc::clone(grid),
                    space: Space::Position,
                    amps: amps.clone(),
                });
            }
            if !last {
                stepper.kinetic(&mut amps, true);
            }
        } else {
            stepper.kinetic(&mut amps, false);
        }
    }

    out.final_state = WaveFunction { grid: Arc::clone(grid), space: Space::Position, amps };
    Ok(out)
}

fn record_observables(
    rec: &mut ObservableRecord,
    grid: &Arc<SpatialGrid>,
    amps: &[Complex64],
    t: f64,
    basis: Option<&EigenBasis>,
) -> Result<()> {
    let dx = grid.dx;
    let mut norm_sq = 0.0;
    let mut x_mean = 0.0;
    for (a, &x) in amps.iter().zip(grid.xs()) {
        let d = a.norm_sqr();
        norm_sq += d;
        x_mean += d * x;
    }
    norm_sq *= dx;
    x_mean *= dx;

    let psi = WaveFunction {
        grid: Arc::clone(grid),
        space: Space::Position,
        amps: amps.to_vec(),
    };
    let phi = crate::grid::to_momentum(&psi)?;
    let p_mean: f64 = phi
        .amps
        .iter()
        .zip(grid.ps())
        .map(|(a, &p)| a.norm_sqr() * p)
        .sum::<f64>()
        * grid.dp;

    rec.times.push(t);
    rec.norm.push(norm_sq.sqrt());
    rec.x_mean.push(x_mean);
    rec.p_mean.push(p_mean);
    if let Some(b) = basis {
        rec.occupations.push(occupations(&psi, b)?);
    }
    Ok(())
}

/// Evolve a set of states under the same landscape, verifying that their
/// pairwise overlaps survive (a unitarity witness).
pub fn evolve_basis(
    states: &[WaveFunction],
    landscape: &PotentialLandscape,
    time: &TimeGrid,
) -> Result<Vec<WaveFunction>> {
    let before = gram(states)?;
    let finals: Vec<WaveFunction> = states
        .iter()
        .map(|s| Ok(evolve(s, landscape, time, RecordSpec::default(), None, None)?.final_state))
        .collect::<Result<_>>()?;
    let after = gram(&finals)?;
    let mut dev = 0.0f64;
    for (a, b) in before.iter().zip(&after) {
        dev = dev.max((a - b).norm());
    }
    if dev > 1e-8 {
        return Err(Error::Config(format!(
            "evolution failed the unitarity witness: overlap drift {dev:.3e}"
        )));
    }
    Ok(finals)
}

fn gram(states: &[WaveFunction]) -> Result<Vec<Complex64>> {
    let mut g = Vec::with_capacity(states.len() * states.len());
    for a in states {
        for b in states {
            g.push(inner_product(a, b)?);
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crab::{Control, CrabWaveform};
    use crate::grid::{fidelity, make_grid};
    use crate::potential::{PotentialFamily, PotentialLandscape, Well};
    use crate::spectrum::diagonalize;
    use crate::states::{coherent, harmonic_ground};
    use std::f64::consts::TAU;

    fn harmonic() -> PotentialLandscape {
        PotentialLandscape::single(PotentialFamily::Harmonic, 0.25).unwrap()
    }

    #[test]
    fn coherent_state_rotates_in_the_harmonic_well() {
        let grid = make_grid(512, 12.0).unwrap();
        let psi0 = coherent(&grid, Complex64::new(2.0, 0.0)).unwrap();
        let time = TimeGrid::periods(1.0, 800).unwrap();
        let record = RecordSpec { observable_stride: 40, ..Default::default() };
        let traj = evolve(&psi0, &harmonic(), &time, record, None, None).unwrap();

        let f = fidelity(&traj.final_state, &psi0).unwrap();
        assert!(f >= 1.0 - 1e-8, "return fidelity {f}");

        // split-step renormalizes the trap frequency by dt^2/24, so the ridge
        // tracks cos t to ~ x0 * t * dt^2 / 24
        for (&t, &x) in traj.observables.times.iter().zip(&traj.observables.x_mean) {
            let expect = 2.0 * 2f64.sqrt() * t.cos();
            assert!((x - expect).abs() < 5e-5, "t={t}: {x} vs {expect}");
        }
    }

    #[test]
    fn quench_response_follows_the_classical_solution() {
        let grid = make_grid(512, 12.0).unwrap();
        let psi0 = harmonic_ground(&grid);
        let well = Well::new(
            PotentialFamily::Harmonic,
            0.25,
            Control::Constant(1.0),
            Control::Zero,
        )
        .unwrap();
        let landscape = PotentialLandscape::single_with(well);
        let time = TimeGrid::periods(2.0, 6400).unwrap();
        let record = RecordSpec { observable_stride: 16, ..Default::default() };
        let traj = evolve(&psi0, &landscape, &time, record, None, None).unwrap();
        for (&t, &x) in traj.observables.times.iter().zip(&traj.observables.x_mean) {
            let expect = 1.0 - t.cos();
            assert!((x - expect).abs() < 1e-6, "t={t}: {x} vs {expect}");
        }
    }

    #[test]
    fn zero_duration_is_the_identity() {
        let grid = make_grid(256, 10.0).unwrap();
        let psi0 = harmonic_ground(&grid);
        let time = TimeGrid::new(0.0, 200).unwrap();
        let traj = evolve(&psi0, &harmonic(), &time, RecordSpec::default(), None, None).unwrap();
        for (a, b) in psi0.amps.iter().zip(&traj.final_state.amps) {
            assert_eq!(a, b);
        }
    }

    fn driven_landscape(t_over_2pi: f64) -> PotentialLandscape {
        let mut wf = CrabWaveform::new(TAU * t_over_2pi, 3, 3.0, 4.0, Control::Zero).unwrap();
        wf.set_params(&[0.5, 0.0, 0.0, 0.3, -0.2, 0.0]);
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
    fn strang_error_scales_as_dt_squared() {
        let grid = make_grid(256, 12.0).unwrap();
        let psi0 = harmonic_ground(&grid);
        let landscape = driven_landscape(2.0);
        let run = |steps_per_period: usize| {
            let time = TimeGrid::periods(2.0, steps_per_period).unwrap();
            evolve(&psi0, &landscape, &time, RecordSpec::default(), None, None)
                .unwrap()
                .final_state
        };
        let reference = run(800);
        let err = |psi: &WaveFunction| -> f64 {
            psi.amps
                .iter()
                .zip(&reference.amps)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt()
        };
        let e1 = err(&run(100));
        let e2 = err(&run(200));
        let ratio = e1 / e2;
        assert!(
            (3.5..=4.5).contains(&ratio),
            "halving dt gave error ratio {ratio} ({e1} / {e2})"
        );
    }

    #[test]
    fn norm_is_conserved_over_ten_thousand_steps() {
        let grid = make_grid(256, 12.0).unwrap();
        let psi0 = harmonic_ground(&grid);
        let landscape = driven_landscape(50.0);
        let time = TimeGrid::periods(50.0, 200).unwrap();
        assert!(time.n_steps >= 10_000);
        let record = RecordSpec { observable_stride: 500, ..Default::default() };
        let traj = evolve(&psi0, &landscape, &time, record, None, None).unwrap();
        for &n in &traj.observables.norm {
            assert!((n - 1.0).abs() <= 1e-10, "norm drift {}", (n - 1.0).abs());
        }
    }

    #[test]
    fn time_reversal_recovers_the_initial_state() {
        let grid = make_grid(256, 12.0).unwrap();
        let psi0 = harmonic_ground(&grid);
        let landscape = driven_landscape(2.0);
        let time = TimeGrid::periods(2.0, 200).unwrap();
        let fwd = evolve(&psi0, &landscape, &time, RecordSpec::default(), None, None).unwrap();

        // reverse: conjugate the state, drive with u(T - t), conjugate back
        let mids: Vec<f64> = (0..time.n_steps).map(|k| time.midpoint(k)).collect();
        let fwd_vals: Vec<f64> = mids
            .iter()
            .map(|&t| landscape.wells[0].position.value(t))
            .collect();
        let rev_vals: Vec<f64> = fwd_vals.iter().rev().copied().collect();
        let rev_ctrl = Control::Samples(
            crate::crab::SampledControl::new(mids.clone(), rev_vals).unwrap(),
        );
        let rev_well =
            Well::new(PotentialFamily::GaussianWell, 0.25, rev_ctrl, Control::Zero).unwrap();
        let rev_landscape = PotentialLandscape::single_with(rev_well);

        let mut conj = fwd.final_state.clone();
        for a in &mut conj.amps {
            *a = a.conj();
        }
        let back = evolve(&conj, &rev_landscape, &time, RecordSpec::default(), None, None)
            .unwrap()
            .final_state;
        let mut back_conj = back;
        for a in &mut back_conj.amps {
            *a = a.conj();
        }
        let f = fidelity(&back_conj, &psi0).unwrap();
        assert!(f >= 1.0 - 1e-8, "reversal fidelity {f}");
    }

    #[test]
    fn energy_is_conserved_with_static_controls() {
        let grid = make_grid(512, 12.0).unwrap();
        let landscape =
            PotentialLandscape::single(PotentialFamily::GaussianWell, 0.25).unwrap();
        let basis = diagonalize(&landscape, &grid, 4).unwrap();
        // an honest superposition so the energy is not an eigenvalue
        let mut psi0 = basis.states[0].clone();
        for (a, b) in psi0.amps.iter_mut().zip(&basis.states[3].amps) {
            *a = (*a + b) / 2f64.sqrt();
        }
        let energy = |psi: &WaveFunction| -> f64 {
            let v = landscape.evaluate(psi.grid.xs(), 0.0).unwrap();
            let pot: f64 = psi
                .amps
                .iter()
                .zip(&v)
                .map(|(a, &vj)| a.norm_sqr() * vj)
                .sum::<f64>()
                * psi.grid.dx;
            let phi = crate::grid::to_momentum(psi).unwrap();
            let kin: f64 = phi
                .amps
                .iter()
                .zip(psi.grid.ps())
                .map(|(a, &p)| a.norm_sqr() * p * p / 2.0)
                .sum::<f64>()
                * psi.grid.dp;
            pot + kin
        };
        let e0 = energy(&psi0);
        let time = TimeGrid::periods(5.0, 800).unwrap();
        let traj = evolve(&psi0, &landscape, &time, RecordSpec::default(), None, None).unwrap();
        let e1 = energy(&traj.final_state);
        assert!((e1 - e0).abs() < 1e-8, "energy drift {}", (e1 - e0).abs());
    }

    #[test]
    fn basis_evolution_preserves_overlaps_and_stationary_phases() {
        let grid = make_grid(512, 12.0).unwrap();
        let landscape = PotentialLandscape::single(PotentialFamily::Harmonic, 0.25).unwrap();
        let basis = diagonalize(&landscape, &grid, 2).unwrap();
        let time = TimeGrid::periods(1.0, 200).unwrap();
        let finals = evolve_basis(&basis.states, &landscape, &time).unwrap();
        for (n, (phi, out)) in basis.states.iter().zip(&finals).enumerate() {
            let ip = inner_product(phi, out).unwrap();
            assert!(ip.norm() >= 1.0 - 1e-8);
            // e^{-i E_n 2 pi} with E_n = n + 1/2 is -1 for every n
            assert!(ip.re < -(1.0 - 1e-6), "n={n}: phase {ip}");
        }

        let empty = evolve_basis(&[], &landscape, &time).unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn snapshots_and_final_record_are_emitted() {
        let grid = make_grid(256, 10.0).unwrap();
        let psi0 = harmonic_ground(&grid);
        let time = TimeGrid::periods(1.0, 100).unwrap();
        let record = RecordSpec { observable_stride: 37, snapshot_stride: 50 };
        let traj = evolve(&psi0, &harmonic(), &time, record, None, None).unwrap();
        assert_eq!(traj.observables.times.first(), Some(&0.0));
        assert_eq!(traj.observables.times.last(), Some(&time.duration));
        assert_eq!(traj.snapshot_times.len(), traj.snapshots.len());
        assert_eq!(traj.snapshot_times.last(), Some(&time.duration));
        for s in &traj.snapshots {
            assert!((s.norm_sq() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn unnormalized_input_is_rejected() {
        let grid = make_grid(256, 10.0).unwrap();
        let mut psi0 = harmonic_ground(&grid);
        for a in &mut psi0.amps {
            *a *= 1.5;
        }
        let time = TimeGrid::periods(1.0, 200).unwrap();
        assert!(matches!(
            evolve(&psi0, &harmonic(), &time, RecordSpec::default(), None, None),
            Err(Error::Unnormalized(_))
        ));
    }
}
