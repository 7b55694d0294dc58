//! State-preserving transport: the two lowest states of the left well move to
//! the right well without picking up a relative phase, scored as an identity
//! gate between the localized bases.

use super::{
    landscape_from_controls, lone_well_basis, setup, Protocol, ProtocolOutcome, RunContext,
};
use crate::config::ProtocolSpec;
use crate::error::{Error, Result};
use crate::grid::{fidelity, WaveFunction};
use crate::optimize::{gate_infidelity, optimize, ControlProblem, Target, TargetUnitary};
use crate::propagate::{evolve, RecordSpec};

pub struct Transfer;

struct TransferSetup {
    s: super::Setup,
    left: Vec<WaveFunction>,
    right: Vec<WaveFunction>,
}

fn transfer_setup(ctx: &RunContext, separation: f64, t_over_2pi: f64) -> Result<TransferSetup> {
    let s = setup(ctx, t_over_2pi)?;
    let left = lone_well_basis(ctx, &s.grid, s.alpha, -separation / 2.0, 2)?.states;
    let right = lone_well_basis(ctx, &s.grid, s.alpha, separation / 2.0, 2)?.states;
    Ok(TransferSetup { s, left, right })
}

impl Protocol for Transfer {
    fn kind(&self) -> &'static str {
        "transfer"
    }

    fn run(&self, ctx: &RunContext) -> Result<ProtocolOutcome> {
        let ProtocolSpec::Transfer { separation, t_over_2pi, approach } = ctx.spec.protocol
        else {
            return Err(Error::Config("transfer driver handed a foreign spec".into()));
        };
        let ts = transfer_setup(ctx, separation, t_over_2pi)?;
        let s = &ts.s;

        let with_beta = ctx.spec.crab.optimize_beta.unwrap_or(true);
        let mut waveforms =
            vec![super::pair_shake_waveform(ctx, &s.time, separation, s.d_min, 0.9, approach)?];
        if with_beta {
            waveforms.push(super::depth_waveform(ctx, &s.time)?);
        }
        let unitary = TargetUnitary::identity();
        let problem = ControlProblem {
            waveforms,
            build: super::prepare::pair_builder(
                ctx,
                s.alpha,
                separation / 2.0,
                s.d_min / 2.0,
                with_beta,
            ),
            initial: ts.left.clone(),
            target: Target::Gate { basis: ts.right.clone(), unitary },
            time: s.time,
            leakage_weight: 0.0,
            separation_guard: false,
            amplitude_guard: 1.0,
            noise_batch: Vec::new(),
        };
        let result = optimize(&problem, &ctx.optimizer_options())?;

        let finals = problem.evolve_candidate(&result.best_waveforms)?;
        let inf = gate_infidelity(&finals, &ts.right, &unitary)?;

        // relative-phase witness: an equal superposition must arrive as the
        // matching superposition on the right
        let best_landscape = (problem.build)(&result.best_waveforms)?;
        let mix = |pair: &[WaveFunction]| {
            let mut m = pair[0].clone();
            for (a, b) in m.amps.iter_mut().zip(&pair[1].amps) {
                *a = (*a + b) / 2f64.sqrt();
            }
            m
        };
        let sup_in = mix(&ts.left);
        let sup_out = mix(&ts.right);
        let sup_final =
            evolve(&sup_in, &best_landscape, &s.time, RecordSpec::default(), None, None)?
                .final_state;
        let sup_fidelity = fidelity(&sup_final, &sup_out)?;

        let artifacts = super::prepare::export_optimized(
            ctx,
            &best_landscape,
            &s.time,
            &ts.left,
            &result,
            None,
        )?;
        Ok(ProtocolOutcome {
            metrics: vec![
                ("gate_fidelity".to_string(), 1.0 - inf),
                ("gate_infidelity".to_string(), inf),
                ("superposition_fidelity".to_string(), sup_fidelity),
                ("min_separation".to_string(), super::min_separation(&best_landscape, &s.time)),
                ("best_cost".to_string(), result.best_cost),
                ("n_evals".to_string(), result.n_evals as f64),
                ("n_props".to_string(), result.n_props as f64),
            ],
            artifacts,
        })
    }

    fn replay(&self, ctx: &RunContext, controls: &crate::io::LoadedControls) -> Result<Vec<(String, f64)>> {
        let ProtocolSpec::Transfer { separation, t_over_2pi, .. } = ctx.spec.protocol else {
            return Err(Error::Config("transfer driver handed a foreign spec".into()));
        };
        let ts = transfer_setup(ctx, separation, t_over_2pi)?;
        let landscape = landscape_from_controls(ctx.spec.units.family, ts.s.alpha, ts.s.d_min, controls)?;
        let finals: Vec<WaveFunction> = ts
            .left
            .iter()
            .map(|b| {
                Ok(evolve(b, &landscape, &ts.s.time, RecordSpec::default(), None, None)?
                    .final_state)
            })
            .collect::<Result<_>>()?;
        let inf = gate_infidelity(&finals, &ts.right, &TargetUnitary::identity())?;
        Ok(vec![
            ("gate_fidelity".to_string(), 1.0 - inf),
            ("gate_infidelity".to_string(), inf),
        ])
    }
}
