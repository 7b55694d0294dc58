//! Algorithmic cooling by spatial sorting: the optimized shaking carries the
//! excited fraction of the left well into the right well while the ground
//! fraction stays put; a which-well measurement then post-selects the ground
//! state.

use super::{
    barrier_cut, landscape_from_controls, lone_well_basis, population_left, project_left, setup,
    Protocol, ProtocolOutcome, RunContext,
};
use crate::config::{CoolInput, ProtocolSpec};
use crate::error::{Error, Result};
use crate::grid::{inner_product, WaveFunction};
use crate::optimize::{optimize, ControlProblem, Target};
use crate::propagate::{evolve, RecordSpec};

const N_SORTED: usize = 4;

pub struct Cool;

struct CoolSetup {
    s: super::Setup,
    states: Vec<WaveFunction>,
    energies: Vec<f64>,
}

fn cool_setup(ctx: &RunContext, separation: f64, t_over_2pi: f64) -> Result<CoolSetup> {
    let s = setup(ctx, t_over_2pi)?;
    let basis = lone_well_basis(ctx, &s.grid, s.alpha, -separation / 2.0, N_SORTED)?;
    Ok(CoolSetup { s, states: basis.states, energies: basis.energies })
}

fn ensemble_weights(input: &CoolInput, energies: &[f64]) -> Vec<f64> {
    match input {
        CoolInput::FourLowest => vec![1.0 / energies.len() as f64; energies.len()],
        CoolInput::Boltzmann { temperature } => {
            let e0 = energies[0];
            let raw: Vec<f64> =
                energies.iter().map(|e| (-(e - e0) / temperature.max(1e-9)).exp()).collect();
            let z: f64 = raw.iter().sum();
            raw.into_iter().map(|w| w / z).collect()
        }
    }
}

/// Sorting cost: the ground state should stay left, everything above should
/// end up right.
fn sorting_cost(finals: &[WaveFunction], x_cut: f64) -> f64 {
    let mut acc = population_left(&finals[0], x_cut);
    for f in &finals[1..] {
        acc += 1.0 - population_left(f, x_cut);
    }
    1.0 - acc / finals.len() as f64
}

/// Post-selected figures for a mixed input: keep probability of the "left"
/// outcome and the conditional ground fidelity of what is kept.
pub(crate) fn postselect(
    finals: &[WaveFunction],
    weights: &[f64],
    ground: &WaveFunction,
    x_cut: f64,
) -> Result<(f64, f64)> {
    let mut acceptance = 0.0;
    let mut ground_mass = 0.0;
    for (f, &w) in finals.iter().zip(weights) {
        acceptance += w * population_left(f, x_cut);
        let kept = project_left(f, x_cut);
        ground_mass += w * inner_product(ground, &kept)?.norm_sqr();
    }
    let conditional = if acceptance > 0.0 { ground_mass / acceptance } else { 0.0 };
    Ok((acceptance, conditional))
}

impl Protocol for Cool {
    fn kind(&self) -> &'static str {
        "cool"
    }

    fn run(&self, ctx: &RunContext) -> Result<ProtocolOutcome> {
        let ProtocolSpec::Cool { separation, t_over_2pi, input, approach } = ctx.spec.protocol
        else {
            return Err(Error::Config("cool driver handed a foreign spec".into()));
        };
        let cs = cool_setup(ctx, separation, t_over_2pi)?;
        let s = &cs.s;
        let weights = ensemble_weights(&input.unwrap_or_default(), &cs.energies);

        let with_beta = ctx.spec.crab.optimize_beta.unwrap_or(false);
        let mut waveforms =
            vec![super::pair_shake_waveform(ctx, &s.time, separation, s.d_min, 0.9, approach)?];
        if with_beta {
            waveforms.push(super::depth_waveform(ctx, &s.time)?);
        }
        let x_cut = 0.0;
        let problem = ControlProblem {
            waveforms,
            build: super::prepare::pair_builder(
                ctx,
                s.alpha,
                separation / 2.0,
                s.d_min / 2.0,
                with_beta,
            ),
            initial: cs.states.clone(),
            target: Target::Custom(Box::new(move |finals| Ok(sorting_cost(finals, x_cut)))),
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

        let mut metrics = vec![
            ("sorting_cost".to_string(), sorting_cost(&finals, cut)),
            ("keep_ground".to_string(), population_left(&finals[0], cut)),
        ];
        for (n, f) in finals.iter().enumerate().skip(1) {
            metrics.push((format!("remove_{n}"), 1.0 - population_left(f, cut)));
        }
        let (acceptance, conditional) = postselect(&finals, &weights, &cs.states[0], cut)?;
        metrics.push(("acceptance_probability".to_string(), acceptance));
        metrics.push(("conditional_ground_fidelity".to_string(), conditional));
        metrics.push(("min_separation".to_string(), super::min_separation(&best_landscape, &s.time)));
        metrics.push(("n_evals".to_string(), result.n_evals as f64));
        metrics.push(("n_props".to_string(), result.n_props as f64));

        let artifacts = super::prepare::export_optimized(
            ctx,
            &best_landscape,
            &s.time,
            &cs.states,
            &result,
            None,
        )?;
        Ok(ProtocolOutcome { metrics, artifacts })
    }

    fn replay(&self, ctx: &RunContext, controls: &crate::io::LoadedControls) -> Result<Vec<(String, f64)>> {
        let ProtocolSpec::Cool { separation, t_over_2pi, .. } = ctx.spec.protocol else {
            return Err(Error::Config("cool driver handed a foreign spec".into()));
        };
        let cs = cool_setup(ctx, separation, t_over_2pi)?;
        let landscape = landscape_from_controls(ctx.spec.units.family, cs.s.alpha, cs.s.d_min, controls)?;
        let finals: Vec<WaveFunction> = cs
            .states
            .iter()
            .map(|b| {
                Ok(evolve(b, &landscape, &cs.s.time, RecordSpec::default(), None, None)?
                    .final_state)
            })
            .collect::<Result<_>>()?;
        let cut = barrier_cut(&landscape, &cs.s.grid)?;
        Ok(vec![("sorting_cost".to_string(), sorting_cost(&finals, cut))])
    }
}
