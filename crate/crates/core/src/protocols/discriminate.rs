//! Single-shot discrimination of two orthogonal states, either by opposite
//! momentum kicks in one well or by selectively stealing one state into a
//! second well.

use super::{
    barrier_cut, landscape_from_controls, lone_well_basis, population_left, resting_landscape,
    setup, Protocol, ProtocolOutcome, RunContext,
};
use crate::config::ProtocolSpec;
use crate::error::{Error, Result};
use crate::grid::{apply_phase, to_momentum, WaveFunction};
use crate::optimize::{optimize, state_infidelity, ControlProblem, Target};
use crate::propagate::{evolve, RecordSpec};
use crate::spectrum::diagonalize;

/// Classify by momentum sign, with the decision boundary oriented along the
/// kick: mass of the `+`-kicked state on the kick's side plus the `-`-kicked
/// state's mass on the opposite side, at equal priors; also the irreducible
/// confusion mass between the two momentum densities.
pub(crate) fn momentum_classification(
    kicked_plus: &WaveFunction,
    kicked_minus: &WaveFunction,
    kick: f64,
) -> Result<(f64, f64)> {
    let rho = |psi: &WaveFunction| -> Result<Vec<(f64, f64)>> {
        let phi = to_momentum(psi)?;
        let mut pairs: Vec<(f64, f64)> = phi
            .amps
            .iter()
            .zip(phi.grid.ps())
            .map(|(a, &p)| (p, a.norm_sqr()))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(pairs)
    };
    let dp = kicked_plus.grid.dp;
    let plus = rho(kicked_plus)?;
    let minus = rho(kicked_minus)?;

    let mass = |pairs: &[(f64, f64)], positive: bool| -> f64 {
        pairs
            .iter()
            .map(|&(p, d)| {
                if p == 0.0 {
                    d / 2.0
                } else if (p > 0.0) == positive {
                    d
                } else {
                    0.0
                }
            })
            .sum::<f64>()
            * dp
    };
    let plus_side = kick > 0.0;
    let success = 0.5 * (mass(&plus, plus_side) + mass(&minus, !plus_side));
    let confusion = plus
        .iter()
        .zip(&minus)
        .map(|(&(_, a), &(_, b))| a.min(b))
        .sum::<f64>()
        * dp;
    Ok((success, confusion))
}

pub struct DiscriminateKick;

impl Protocol for DiscriminateKick {
    fn kind(&self) -> &'static str {
        "discriminate_kick"
    }

    fn run(&self, ctx: &RunContext) -> Result<ProtocolOutcome> {
        let ProtocolSpec::DiscriminateKick { kick, states, optimized_imprint, t_over_2pi } =
            ctx.spec.protocol
        else {
            return Err(Error::Config("kick driver handed a foreign spec".into()));
        };
        let (n_plus, n_minus) = states.unwrap_or((0, 1));
        let s = setup(ctx, t_over_2pi.unwrap_or(1.0))?;
        if kick.abs() > s.grid.p_max() / 2.0 {
            return Err(Error::KickTooLarge { k: kick, limit: s.grid.p_max() / 2.0 });
        }
        let rest = resting_landscape(ctx, s.alpha)?;
        let basis = diagonalize(&rest, &s.grid, n_plus.max(n_minus) + 1)?;
        let psi_plus = basis.state(n_plus)?.clone();
        let psi_minus = basis.state(n_minus)?.clone();

        let ideal_plus = apply_phase(&psi_plus, kick)?;
        let ideal_minus = apply_phase(&psi_minus, -kick)?;

        if !optimized_imprint {
            let (success, confusion) = momentum_classification(&ideal_plus, &ideal_minus, kick)?;
            return Ok(ProtocolOutcome {
                metrics: vec![
                    ("success".to_string(), success),
                    ("density_overlap".to_string(), confusion),
                ],
                artifacts: Vec::new(),
            });
        }

        // optimized route: one pulse must imprint opposite kicks on both states
        let t = t_over_2pi.ok_or_else(|| {
            Error::Config("optimized imprint needs t_over_2pi".into())
        })?;
        let s = setup(ctx, t)?;
        let with_beta = ctx.spec.crab.optimize_beta.unwrap_or(false);
        let mut waveforms = vec![super::position_waveform(ctx, &s.time)?];
        if with_beta {
            waveforms.push(super::depth_waveform(ctx, &s.time)?);
        }
        let target_plus = ideal_plus.clone();
        let target_minus = ideal_minus.clone();
        let problem = ControlProblem {
            waveforms,
            build: super::prepare::pair_or_single_builder(ctx, s.alpha, None, s.d_min, with_beta),
            initial: vec![psi_plus, psi_minus],
            target: Target::Custom(Box::new(move |finals| {
                let a = state_infidelity(&finals[0], &target_plus)?;
                let b = state_infidelity(&finals[1], &target_minus)?;
                Ok(0.5 * (a + b))
            })),
            time: s.time,
            leakage_weight: 0.0,
            separation_guard: false,
            amplitude_guard: 1.0,
            noise_batch: Vec::new(),
        };
        let result = optimize(&problem, &ctx.optimizer_options())?;
        let finals = problem.evolve_candidate(&result.best_waveforms)?;
        let f_plus = 1.0 - state_infidelity(&finals[0], &ideal_plus)?;
        let f_minus = 1.0 - state_infidelity(&finals[1], &ideal_minus)?;
        let (success, confusion) = momentum_classification(&finals[0], &finals[1], kick)?;

        let best_landscape = (problem.build)(&result.best_waveforms)?;
        let artifacts = super::prepare::export_optimized(
            ctx,
            &best_landscape,
            &s.time,
            &problem.initial,
            &result,
            None,
        )?;
        Ok(ProtocolOutcome {
            metrics: vec![
                ("success".to_string(), success),
                ("density_overlap".to_string(), confusion),
                ("imprint_fidelity_plus".to_string(), f_plus),
                ("imprint_fidelity_minus".to_string(), f_minus),
                ("n_evals".to_string(), result.n_evals as f64),
                ("n_props".to_string(), result.n_props as f64),
            ],
            artifacts,
        })
    }

    fn replay(&self, ctx: &RunContext, controls: &crate::io::LoadedControls) -> Result<Vec<(String, f64)>> {
        let ProtocolSpec::DiscriminateKick { kick, states, optimized_imprint, t_over_2pi } =
            ctx.spec.protocol
        else {
            return Err(Error::Config("kick driver handed a foreign spec".into()));
        };
        if !optimized_imprint {
            // nothing was optimized; rerun the deterministic classification
            return self
                .run(&RunContext {
                    spec: ctx.spec.clone(),
                    out_dir: None,
                    parallel: ctx.parallel,
                })
                .map(|o| o.metrics);
        }
        let (n_plus, n_minus) = states.unwrap_or((0, 1));
        let t = t_over_2pi.ok_or_else(|| {
            Error::Config("optimized imprint needs t_over_2pi".into())
        })?;
        let s = setup(ctx, t)?;
        let rest = resting_landscape(ctx, s.alpha)?;
        let basis = diagonalize(&rest, &s.grid, n_plus.max(n_minus) + 1)?;
        let landscape = landscape_from_controls(ctx.spec.units.family, s.alpha, s.d_min, controls)?;
        let finals: Vec<WaveFunction> = [basis.state(n_plus)?, basis.state(n_minus)?]
            .into_iter()
            .map(|b| {
                Ok(evolve(b, &landscape, &s.time, RecordSpec::default(), None, None)?.final_state)
            })
            .collect::<Result<_>>()?;
        let (success, confusion) = momentum_classification(&finals[0], &finals[1], kick)?;
        Ok(vec![
            ("success".to_string(), success),
            ("density_overlap".to_string(), confusion),
        ])
    }
}

pub struct DiscriminateSteal;

struct StealSetup {
    s: super::Setup,
    inputs: Vec<WaveFunction>,
}

fn steal_setup(
    ctx: &RunContext,
    separation: f64,
    t_over_2pi: f64,
    states: Option<(usize, usize)>,
) -> Result<StealSetup> {
    let (n_plus, n_minus) = states.unwrap_or((0, 1));
    let s = setup(ctx, t_over_2pi)?;
    let basis = lone_well_basis(ctx, &s.grid, s.alpha, -separation / 2.0, n_plus.max(n_minus) + 1)?;
    let inputs = vec![basis.state(n_plus)?.clone(), basis.state(n_minus)?.clone()];
    Ok(StealSetup { s, inputs })
}

/// Steal success: the `+` input should end in the right well, the `-` input
/// should stay left.
fn steal_success(finals: &[WaveFunction], x_cut: f64) -> f64 {
    let p_right_plus = 1.0 - population_left(&finals[0], x_cut);
    let p_left_minus = population_left(&finals[1], x_cut);
    0.5 * (p_right_plus + p_left_minus)
}

impl Protocol for DiscriminateSteal {
    fn kind(&self) -> &'static str {
        "discriminate_steal"
    }

    fn run(&self, ctx: &RunContext) -> Result<ProtocolOutcome> {
        let ProtocolSpec::DiscriminateSteal { separation, t_over_2pi, states, approach } =
            ctx.spec.protocol
        else {
            return Err(Error::Config("steal driver handed a foreign spec".into()));
        };
        let st = steal_setup(ctx, separation, t_over_2pi, states)?;
        let s = &st.s;

        let with_beta = ctx.spec.crab.optimize_beta.unwrap_or(false);
        let mut waveforms =
            vec![super::pair_shake_waveform(ctx, &s.time, separation, s.d_min, 1.0, approach)?];
        if with_beta {
            waveforms.push(super::depth_waveform(ctx, &s.time)?);
        }
        let x_cut = 0.0; // symmetric pair keeps its barrier at the origin
        let problem = ControlProblem {
            waveforms,
            build: super::prepare::pair_builder(
                ctx,
                s.alpha,
                separation / 2.0,
                s.d_min / 2.0,
                with_beta,
            ),
            initial: st.inputs.clone(),
            target: Target::Custom(Box::new(move |finals| {
                Ok(1.0 - steal_success(finals, x_cut))
            })),
            time: s.time,
            leakage_weight: 0.0,
            separation_guard: false,
            amplitude_guard: 1.0,
            noise_batch: Vec::new(),
        };
        let result = optimize(&problem, &ctx.optimizer_options())?;

        let finals = problem.evolve_candidate(&result.best_waveforms)?;
        let best_landscape = (problem.build)(&result.best_waveforms)?;
        let cut = barrier_cut(&best_landscape, &s.grid)?;
        let success = steal_success(&finals, cut);
        let p_right_plus = 1.0 - population_left(&finals[0], cut);
        let p_left_minus = population_left(&finals[1], cut);

        let artifacts = super::prepare::export_optimized(
            ctx,
            &best_landscape,
            &s.time,
            &st.inputs,
            &result,
            None,
        )?;
        Ok(ProtocolOutcome {
            metrics: vec![
                ("success".to_string(), success),
                ("p_right_plus".to_string(), p_right_plus),
                ("p_left_minus".to_string(), p_left_minus),
                ("min_separation".to_string(), super::min_separation(&best_landscape, &s.time)),
                ("best_cost".to_string(), result.best_cost),
                ("n_evals".to_string(), result.n_evals as f64),
                ("n_props".to_string(), result.n_props as f64),
            ],
            artifacts,
        })
    }

    fn replay(&self, ctx: &RunContext, controls: &crate::io::LoadedControls) -> Result<Vec<(String, f64)>> {
        let ProtocolSpec::DiscriminateSteal { separation, t_over_2pi, states, .. } =
            ctx.spec.protocol
        else {
            return Err(Error::Config("steal driver handed a foreign spec".into()));
        };
        let st = steal_setup(ctx, separation, t_over_2pi, states)?;
        let landscape = landscape_from_controls(ctx.spec.units.family, st.s.alpha, st.s.d_min, controls)?;
        let finals: Vec<WaveFunction> = st
            .inputs
            .iter()
            .map(|b| {
                Ok(evolve(b, &landscape, &st.s.time, RecordSpec::default(), None, None)?
                    .final_state)
            })
            .collect::<Result<_>>()?;
        let cut = barrier_cut(&landscape, &st.s.grid)?;
        Ok(vec![("success".to_string(), steal_success(&finals, cut))])
    }
}
