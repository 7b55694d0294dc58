//! Subspace unitaries: drive a chosen two-level basis through a target 2x2
//! unitary with optimized position (and, by default, depth) modulation.

use std::sync::Arc;

use num_complex::Complex64;

use super::{
    landscape_from_controls, resting_landscape, setup, Protocol, ProtocolOutcome, RunContext,
};
use crate::config::{ProtocolSpec, SubspaceSpec};
use crate::error::{Error, Result};
use crate::grid::{inner_product, SpatialGrid, WaveFunction};
use crate::optimize::{
    gate_infidelity, optimize, ControlProblem, Target, TargetUnitary,
};
use crate::propagate::{evolve, RecordSpec};
use crate::spectrum::diagonalize;
use crate::states::{self, CatSign, GkpParams};

pub(crate) fn build_subspace(
    ctx: &RunContext,
    grid: &Arc<SpatialGrid>,
    alpha: f64,
    spec: &SubspaceSpec,
    separation: Option<f64>,
) -> Result<Vec<WaveFunction>> {
    match spec {
        SubspaceSpec::Fock01 => {
            let basis = diagonalize(&resting_landscape(ctx, alpha)?, grid, 2)?;
            Ok(basis.states)
        }
        SubspaceSpec::FourCat { gamma } => {
            let g = Complex64::new(*gamma, 0.0);
            Ok(vec![
                states::four_legged_cat(grid, g, CatSign::Plus)?,
                states::four_legged_cat(grid, g, CatSign::Minus)?,
            ])
        }
        SubspaceSpec::TwoCat { gamma } => {
            let g = Complex64::new(*gamma, 0.0);
            Ok(vec![
                states::two_legged_cat(grid, g, CatSign::Plus)?,
                states::two_legged_cat(grid, g, CatSign::Minus)?,
            ])
        }
        SubspaceSpec::GkpPair { squeeze } => {
            let spacing = (4.0 * std::f64::consts::PI).sqrt();
            let zero = GkpParams {
                coeffs: vec![1.0, 2.0, 1.0],
                displacements: vec![-spacing, 0.0, spacing],
                squeeze: *squeeze,
            };
            let half = spacing / 2.0;
            let one = GkpParams {
                coeffs: zero.coeffs.clone(),
                displacements: zero.displacements.iter().map(|d| d + half).collect(),
                squeeze: *squeeze,
            };
            let a = states::gkp(grid, &zero)?;
            let b = states::gkp(grid, &one)?;
            let (a, b) = states::lowdin_pair_with_cap(&a, &b, 0.05)?;
            Ok(vec![a, b])
        }
        SubspaceSpec::KerrCat => {
            let d = separation.ok_or_else(|| {
                Error::Config("kerr_cat basis needs the protocol's separation".into())
            })?;
            Ok(vec![
                states::kerr_cat(grid, d, CatSign::Plus)?,
                states::kerr_cat(grid, d, CatSign::Minus)?,
            ])
        }
    }
}

/// Targets `sum_k U[k][j] |b_k>` for per-state fidelity reporting.
fn target_states(basis: &[WaveFunction], u: &TargetUnitary) -> Vec<WaveFunction> {
    (0..2)
        .map(|j| {
            let mut out = basis[0].clone();
            for (idx, a) in out.amps.iter_mut().enumerate() {
                *a = u.0[0][j] * basis[0].amps[idx] + u.0[1][j] * basis[1].amps[idx];
            }
            out
        })
        .collect()
}

pub struct Gate;

impl Protocol for Gate {
    fn kind(&self) -> &'static str {
        "gate"
    }

    fn run(&self, ctx: &RunContext) -> Result<ProtocolOutcome> {
        let ProtocolSpec::Gate { subspace, gate, t_over_2pi, separation } = ctx.spec.protocol
        else {
            return Err(Error::Config("gate driver handed a foreign spec".into()));
        };
        let s = setup(ctx, t_over_2pi)?;
        let basis = build_subspace(ctx, &s.grid, s.alpha, &subspace, separation)?;
        let unitary = gate.unitary();

        let with_beta = ctx.spec.crab.optimize_beta.unwrap_or(true);
        let mut waveforms = vec![super::position_waveform(ctx, &s.time)?];
        if with_beta {
            waveforms.push(super::depth_waveform(ctx, &s.time)?);
        }
        let problem = ControlProblem {
            waveforms,
            build: super::prepare::pair_or_single_builder(ctx, s.alpha, separation, s.d_min, with_beta),
            initial: basis.clone(),
            target: Target::Gate { basis: basis.clone(), unitary },
            time: s.time,
            leakage_weight: 0.0,
            separation_guard: false,
            amplitude_guard: 1.0,
            noise_batch: Vec::new(),
        };
        let result = optimize(&problem, &ctx.optimizer_options())?;

        let finals = problem.evolve_candidate(&result.best_waveforms)?;
        let inf = gate_infidelity(&finals, &basis, &unitary)?;
        let targets = target_states(&basis, &unitary);
        let f0 = inner_product(&targets[0], &finals[0])?.norm_sqr();
        let f1 = inner_product(&targets[1], &finals[1])?.norm_sqr();

        let best_landscape = (problem.build)(&result.best_waveforms)?;
        let artifacts = super::prepare::export_optimized(
            ctx,
            &best_landscape,
            &s.time,
            &basis,
            &result,
            None,
        )?;
        Ok(ProtocolOutcome {
            metrics: vec![
                ("gate_fidelity".to_string(), 1.0 - inf),
                ("gate_infidelity".to_string(), inf),
                ("fidelity_state_0".to_string(), f0),
                ("fidelity_state_1".to_string(), f1),
                ("best_cost".to_string(), result.best_cost),
                ("n_evals".to_string(), result.n_evals as f64),
                ("n_props".to_string(), result.n_props as f64),
            ],
            artifacts,
        })
    }

    fn replay(&self, ctx: &RunContext, controls: &crate::io::LoadedControls) -> Result<Vec<(String, f64)>> {
        let ProtocolSpec::Gate { subspace, gate, t_over_2pi, separation } = ctx.spec.protocol
        else {
            return Err(Error::Config("gate driver handed a foreign spec".into()));
        };
        let s = setup(ctx, t_over_2pi)?;
        let basis = build_subspace(ctx, &s.grid, s.alpha, &subspace, separation)?;
        let landscape = landscape_from_controls(ctx.spec.units.family, s.alpha, s.d_min, controls)?;
        let finals: Vec<WaveFunction> = basis
            .iter()
            .map(|b| {
                Ok(evolve(b, &landscape, &s.time, RecordSpec::default(), None, None)?.final_state)
            })
            .collect::<Result<_>>()?;
        let inf = gate_infidelity(&finals, &basis, &gate.unitary())?;
        Ok(vec![
            ("gate_fidelity".to_string(), 1.0 - inf),
            ("gate_infidelity".to_string(), inf),
        ])
    }
}
