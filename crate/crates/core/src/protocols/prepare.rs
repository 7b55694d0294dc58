//! State preparation: the well's ground state is driven into a configured
//! target by an optimized position control, in a single well (`prepare`) or a
//! symmetrically shaken pair of wells (`double_cat`).

use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use num_complex::Complex64;

use super::{
    landscape_from_controls, resting_landscape, setup, ArtifactWriter, Protocol, ProtocolOutcome,
    RunContext,
};
use crate::analysis::{density_map, wigner};
use crate::config::{ProtocolSpec, StateSpec};
use crate::crab::{Control, CrabWaveform};
use crate::error::{Error, Result};
use crate::grid::{fidelity, SpatialGrid, WaveFunction};
use crate::io;
use crate::noise::{noisy_fidelity, NoiseSpec};
use crate::optimize::{optimize, ControlProblem, OptimizationResult, Target};
use crate::potential::{PotentialLandscape, Well};
use crate::propagate::{evolve, RecordSpec, TimeGrid};
use crate::spectrum::diagonalize;
use crate::states;

/// Materialize a named target state on the grid.
pub fn build_target_state(
    family: crate::potential::PotentialFamily,
    grid: &Arc<SpatialGrid>,
    alpha: f64,
    spec: &StateSpec,
) -> Result<WaveFunction> {
    match spec {
        StateSpec::Fock { n } => {
            let basis = diagonalize(&PotentialLandscape::single(family, alpha)?, grid, n + 1)?;
            states::fock_target(&basis, *n)
        }
        StateSpec::Coherent { re, im } => states::coherent(grid, Complex64::new(*re, *im)),
        StateSpec::Gkp { .. } | StateSpec::GkpThreePeak => {
            states::gkp(grid, &spec.gkp_params().expect("gkp params"))
        }
        StateSpec::FourCat { gamma, sign } => {
            states::four_legged_cat(grid, Complex64::new(*gamma, 0.0), *sign)
        }
        StateSpec::CubicPhase { cubicity, squeeze } => {
            states::cubic_phase(grid, *cubicity, *squeeze)
        }
    }
}

fn single_well_builder(
    ctx: &RunContext,
    alpha: f64,
    with_beta: bool,
) -> Box<dyn Fn(&[CrabWaveform]) -> Result<PotentialLandscape> + Sync + Send> {
    let family = ctx.spec.units.family;
    Box::new(move |wfs: &[CrabWaveform]| {
        let depth = if with_beta {
            Control::Crab(Box::new(wfs[1].clone()))
        } else {
            Control::Zero
        };
        let well = Well::new(family, alpha, Control::Crab(Box::new(wfs[0].clone())), depth)?;
        Ok(PotentialLandscape::single_with(well))
    })
}

/// Shared tail of every optimizing protocol: artifacts for the winning pulse.
pub(crate) fn export_optimized(
    ctx: &RunContext,
    landscape: &PotentialLandscape,
    time: &TimeGrid,
    initials: &[WaveFunction],
    result: &OptimizationResult,
    wigner_states: Option<(&WaveFunction, &WaveFunction)>,
) -> Result<Vec<String>> {
    let mut writer = ArtifactWriter::new(ctx);
    if ctx.out_dir.is_none() {
        return Ok(writer.artifacts);
    }
    writer.write_controls(landscape, time)?;
    writer.write_waveforms(result)?;

    let alpha = landscape.alpha();
    // occupation columns only make sense against a single-well ladder
    let occ_basis = if landscape.wells.len() == 1 {
        diagonalize(&resting_landscape(ctx, alpha)?, &initials[0].grid, 4).ok()
    } else {
        None
    };
    let obs_stride = (time.n_steps / 256).max(1);
    let snap_stride = (time.n_steps / 64).max(1);
    let record = RecordSpec { observable_stride: obs_stride, snapshot_stride: snap_stride };
    for (i, psi0) in initials.iter().enumerate() {
        let traj = evolve(psi0, landscape, time, record, occ_basis.as_ref(), None)?;
        let name = if initials.len() == 1 {
            "trajectory.csv".to_string()
        } else {
            format!("trajectory_{i}.csv")
        };
        writer.write(&name, |w| io::write_trajectory_csv(w, &traj.observables))?;
        let dname = if initials.len() == 1 {
            "density.csv".to_string()
        } else {
            format!("density_{i}.csv")
        };
        let (times, rows) = density_map(&traj)?;
        writer.write(&dname, |w| io::write_density_csv(w, &times, psi0.grid.xs(), &rows))?;
    }
    if let Some((first, last)) = wigner_states {
        let wi = wigner(first, None)?;
        writer.write("wigner_initial.csv", |w| io::write_wigner_csv(w, &wi))?;
        let wf = wigner(last, None)?;
        writer.write("wigner_final.csv", |w| io::write_wigner_csv(w, &wf))?;
    }
    Ok(writer.artifacts)
}

pub struct Prepare;

impl Protocol for Prepare {
    fn kind(&self) -> &'static str {
        "prepare"
    }

    fn run(&self, ctx: &RunContext) -> Result<ProtocolOutcome> {
        let ProtocolSpec::Prepare { target, t_over_2pi } = &ctx.spec.protocol else {
            return Err(Error::Config("prepare driver handed a foreign spec".into()));
        };
        let s = setup(ctx, *t_over_2pi)?;
        let rest = resting_landscape(ctx, s.alpha)?;
        let initial = diagonalize(&rest, &s.grid, 1)?.states.remove(0);
        let target_state = build_target_state(ctx.spec.units.family, &s.grid, s.alpha, target)?;

        let with_beta = ctx.spec.crab.optimize_beta.unwrap_or(false);
        let mut waveforms = vec![super::position_waveform(ctx, &s.time)?];
        if with_beta {
            waveforms.push(super::depth_waveform(ctx, &s.time)?);
        }
        let problem = ControlProblem {
            waveforms,
            build: single_well_builder(ctx, s.alpha, with_beta),
            initial: vec![initial.clone()],
            target: Target::State(target_state.clone()),
            time: s.time,
            leakage_weight: 0.0,
            separation_guard: false,
            amplitude_guard: 1.0,
            noise_batch: Vec::new(),
        };
        let result = optimize(&problem, &ctx.optimizer_options())?;

        let finals = problem.evolve_candidate(&result.best_waveforms)?;
        let f = fidelity(&finals[0], &target_state)?;
        let best_landscape = (problem.build)(&result.best_waveforms)?;
        let artifacts = export_optimized(
            ctx,
            &best_landscape,
            &s.time,
            &[initial.clone()],
            &result,
            Some((&initial, &finals[0])),
        )?;

        let mut metrics = vec![
            ("fidelity".to_string(), f),
            ("infidelity".to_string(), 1.0 - f),
            ("best_cost".to_string(), result.best_cost),
            ("n_evals".to_string(), result.n_evals as f64),
            ("n_props".to_string(), result.n_props as f64),
            ("n_dressings".to_string(), result.n_dressings as f64),
        ];
        if let Some(noise) = &ctx.spec.noise {
            noise.validate()?;
            let spec = NoiseSpec {
                gamma1: noise.gamma1,
                gamma2: noise.gamma2,
                n_trajectories: noise.n_trajectories,
                seed: crate::rng::stream_key(ctx.spec.seed, "noise-mc", 0),
            };
            let est = noisy_fidelity(&initial, &best_landscape, &s.time, &target_state, &spec)?;
            metrics.push(("noisy_fidelity_mean".to_string(), est.fidelity_mean));
            metrics.push(("noisy_fidelity_stderr".to_string(), est.std_error));
            metrics.push(("noisy_failed_trajectories".to_string(), est.n_failed as f64));
        }
        Ok(ProtocolOutcome { metrics, artifacts })
    }

    fn replay(&self, ctx: &RunContext, controls: &crate::io::LoadedControls) -> Result<Vec<(String, f64)>> {
        let ProtocolSpec::Prepare { target, t_over_2pi } = &ctx.spec.protocol else {
            return Err(Error::Config("prepare driver handed a foreign spec".into()));
        };
        let s = setup(ctx, *t_over_2pi)?;
        let rest = resting_landscape(ctx, s.alpha)?;
        let initial = diagonalize(&rest, &s.grid, 1)?.states.remove(0);
        let target_state = build_target_state(ctx.spec.units.family, &s.grid, s.alpha, target)?;
        let landscape = landscape_from_controls(ctx.spec.units.family, s.alpha, s.d_min, controls)?;
        let traj = evolve(&initial, &landscape, &s.time, RecordSpec::default(), None, None)?;
        let f = fidelity(&traj.final_state, &target_state)?;
        Ok(vec![("fidelity".to_string(), f), ("infidelity".to_string(), 1.0 - f)])
    }
}

/// Balanced-cat preparation on a symmetrically shaken pair of wells.
pub struct DoubleCat;

pub(crate) fn pair_builder(
    ctx: &RunContext,
    alpha: f64,
    half_separation: f64,
    min_half: f64,
    with_beta: bool,
) -> Box<dyn Fn(&[CrabWaveform]) -> Result<PotentialLandscape> + Sync + Send> {
    let family = ctx.spec.units.family;
    Box::new(move |wfs: &[CrabWaveform]| {
        let shake = Control::Crab(Box::new(wfs[0].clone()));
        let mk = |sign: f64| -> Result<Well> {
            let depth = if with_beta {
                Control::Crab(Box::new(wfs[1].clone()))
            } else {
                Control::Zero
            };
            Well::new(
                family,
                alpha,
                Control::PairPosition {
                    shake: Box::new(shake.clone()),
                    half_separation,
                    min_half,
                    sign,
                },
                depth,
            )
        };
        PotentialLandscape::pair(mk(-1.0)?, mk(1.0)?, 2.0 * min_half)
    })
}

/// Single well, or a symmetric pair when a separation is supplied.
pub(crate) fn pair_or_single_builder(
    ctx: &RunContext,
    alpha: f64,
    separation: Option<f64>,
    d_min: f64,
    with_beta: bool,
) -> Box<dyn Fn(&[CrabWaveform]) -> Result<PotentialLandscape> + Sync + Send> {
    match separation {
        Some(d) => pair_builder(ctx, alpha, d / 2.0, d_min / 2.0, with_beta),
        None => single_well_builder(ctx, alpha, with_beta),
    }
}

/// The left-lobe initial state of the two-well protocols.
pub(crate) fn left_lobe(grid: &Arc<SpatialGrid>, separation: f64) -> WaveFunction {
    let mut psi = WaveFunction::from_fn(grid, |x| {
        Complex64::new(
            std::f64::consts::PI.powf(-0.25)
                * (-(x + separation / 2.0).powi(2) / 2.0).exp(),
            0.0,
        )
    });
    psi.normalize();
    psi
}

impl Protocol for DoubleCat {
    fn kind(&self) -> &'static str {
        "double_cat"
    }

    fn run(&self, ctx: &RunContext) -> Result<ProtocolOutcome> {
        let ProtocolSpec::DoubleCat { separation, t_over_2pi, approach } = ctx.spec.protocol
        else {
            return Err(Error::Config("double_cat driver handed a foreign spec".into()));
        };
        let s = setup(ctx, t_over_2pi)?;
        let initial = left_lobe(&s.grid, separation);
        let target = states::double_well_cat(&s.grid, separation, FRAC_PI_2)?;

        let with_beta = ctx.spec.crab.optimize_beta.unwrap_or(false);
        let mut waveforms =
            vec![super::pair_shake_waveform(ctx, &s.time, separation, s.d_min, 0.8, approach)?];
        if with_beta {
            waveforms.push(super::depth_waveform(ctx, &s.time)?);
        }
        let problem = ControlProblem {
            waveforms,
            build: pair_builder(ctx, s.alpha, separation / 2.0, s.d_min / 2.0, with_beta),
            initial: vec![initial.clone()],
            target: Target::State(target.clone()),
            time: s.time,
            leakage_weight: 0.0,
            separation_guard: false,
            amplitude_guard: 1.0,
            noise_batch: Vec::new(),
        };
        let result = optimize(&problem, &ctx.optimizer_options())?;

        let finals = problem.evolve_candidate(&result.best_waveforms)?;
        let f = fidelity(&finals[0], &target)?;
        let best_landscape = (problem.build)(&result.best_waveforms)?;

        // the parametrization enforces u1 = -u2; record the witness
        let mut asym: f64 = 0.0;
        for k in 0..s.time.n_steps {
            let t = s.time.midpoint(k);
            let u1 = best_landscape.wells[0].position.value(t);
            let u2 = best_landscape.wells[1].position.value(t);
            asym = asym.max((u1 + u2).abs());
        }

        let artifacts = export_optimized(
            ctx,
            &best_landscape,
            &s.time,
            &[initial.clone()],
            &result,
            Some((&initial, &finals[0])),
        )?;
        Ok(ProtocolOutcome {
            metrics: vec![
                ("fidelity".to_string(), f),
                ("infidelity".to_string(), 1.0 - f),
                ("control_asymmetry".to_string(), asym),
                ("min_separation".to_string(), super::min_separation(&best_landscape, &s.time)),
                ("best_cost".to_string(), result.best_cost),
                ("n_evals".to_string(), result.n_evals as f64),
                ("n_props".to_string(), result.n_props as f64),
            ],
            artifacts,
        })
    }

    fn replay(&self, ctx: &RunContext, controls: &crate::io::LoadedControls) -> Result<Vec<(String, f64)>> {
        let ProtocolSpec::DoubleCat { separation, t_over_2pi, .. } = ctx.spec.protocol else {
            return Err(Error::Config("double_cat driver handed a foreign spec".into()));
        };
        let s = setup(ctx, t_over_2pi)?;
        let initial = left_lobe(&s.grid, separation);
        let target = states::double_well_cat(&s.grid, separation, FRAC_PI_2)?;
        let landscape = landscape_from_controls(ctx.spec.units.family, s.alpha, s.d_min, controls)?;
        let traj = evolve(&initial, &landscape, &s.time, RecordSpec::default(), None, None)?;
        let f = fidelity(&traj.final_state, &target)?;
        Ok(vec![("fidelity".to_string(), f), ("infidelity".to_string(), 1.0 - f)])
    }
}
