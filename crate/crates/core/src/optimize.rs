//! Cost functions (state and subspace gate infidelity) and the
//! derivative-free search: an adaptive Nelder-Mead simplex inside, dressed
//! frequency restarts outside, best-so-far carried between restarts.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::crab::CrabWaveform;
use crate::error::{Error, Result};
use crate::grid::{inner_product, WaveFunction};
use crate::potential::PotentialLandscape;
use crate::propagate::{evolve, RecordSpec, TimeGrid};
use crate::rng::stream_rng;

/// `1 - |<target|psi>|^2`, clamped into [0, 1].
pub fn state_infidelity(psi: &WaveFunction, target: &WaveFunction) -> Result<f64> {
    for s in [psi, target] {
        let n = s.norm_sq();
        if (n - 1.0).abs() > 1e-8 {
            return Err(Error::Unnormalized(n));
        }
    }
    let f = inner_product(target, psi)?.norm_sqr();
    Ok((1.0 - f).clamp(0.0, 1.0))
}

/// A 2x2 target unitary on a chosen subspace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetUnitary(pub [[Complex64; 2]; 2]);

impl TargetUnitary {
    pub fn identity() -> Self {
        Self([[Complex64::ONE, Complex64::ZERO], [Complex64::ZERO, Complex64::ONE]])
    }

    pub fn sigma_x() -> Self {
        Self([[Complex64::ZERO, Complex64::ONE], [Complex64::ONE, Complex64::ZERO]])
    }

    pub fn sigma_z() -> Self {
        Self([[Complex64::ONE, Complex64::ZERO], [Complex64::ZERO, -Complex64::ONE]])
    }

    pub fn hadamard() -> Self {
        let s = Complex64::new(1.0 / 2f64.sqrt(), 0.0);
        Self([[s, s], [s, -s]])
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.0;
        let mut dev = 0.0f64;
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = Complex64::ZERO;
                for k in 0..2 {
                    acc += m[i][k] * m[j][k].conj();
                }
                let expect = if i == j { Complex64::ONE } else { Complex64::ZERO };
                dev = dev.max((acc - expect).norm());
            }
        }
        if dev > 1e-12 {
            return Err(Error::NotUnitary { dev });
        }
        Ok(())
    }
}

/// Subspace average gate infidelity `1 - [Tr(M M^dag) + |Tr M|^2] / 6` with
/// `M = U_target^dag O` and `O_kj = <basis_k | evolved_j>`.
///
/// Zero exactly when the evolution acts as the target on the subspace up to a
/// global phase; leakage out of the subspace shrinks `M` and is penalized
/// automatically.
pub fn gate_infidelity(
    evolved: &[WaveFunction],
    basis: &[WaveFunction],
    target: &TargetUnitary,
) -> Result<f64> {
    if evolved.len() != 2 || basis.len() != 2 {
        return Err(Error::Config("gate fidelity needs exactly two basis states".into()));
    }
    target.validate()?;
    let mut dev = 0.0f64;
    for i in 0..2 {
        for j in 0..2 {
            let ip = inner_product(&basis[i], &basis[j])?;
            let expect = if i == j { Complex64::ONE } else { Complex64::ZERO };
            dev = dev.max((ip - expect).norm());
        }
    }
    if dev > 1e-8 {
        return Err(Error::NonOrthonormalBasis { dev });
    }
    Ok(1.0 - gate_fidelity_unchecked(evolved, basis, target)?)
}

fn gate_fidelity_unchecked(
    evolved: &[WaveFunction],
    basis: &[WaveFunction],
    target: &TargetUnitary,
) -> Result<f64> {
    let mut o = [[Complex64::ZERO; 2]; 2];
    for k in 0..2 {
        for j in 0..2 {
            o[k][j] = inner_product(&basis[k], &evolved[j])?;
        }
    }
    let u = &target.0;
    let mut m = [[Complex64::ZERO; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                m[i][j] += u[k][i].conj() * o[k][j];
            }
        }
    }
    let tr_mmdag: f64 = m.iter().flatten().map(|c| c.norm_sqr()).sum();
    let tr_m = m[0][0] + m[1][1];
    Ok(((tr_mmdag + tr_m.norm_sqr()) / 6.0).clamp(0.0, 1.0))
}

/// Population retained in the subspace, averaged over the evolved pair.
pub fn subspace_population(evolved: &[WaveFunction], basis: &[WaveFunction]) -> Result<f64> {
    let mut acc = 0.0;
    for e in evolved {
        for b in basis {
            acc += inner_product(b, e)?.norm_sqr();
        }
    }
    Ok(acc / evolved.len().max(1) as f64)
}

/// What the optimizer drives toward.
pub enum Target {
    State(WaveFunction),
    Gate { basis: Vec<WaveFunction>, unitary: TargetUnitary },
    /// Arbitrary cost on the evolved states (discrimination, cooling).
    Custom(Box<dyn Fn(&[WaveFunction]) -> Result<f64> + Sync + Send>),
}

type LandscapeBuilder = Box<dyn Fn(&[CrabWaveform]) -> Result<PotentialLandscape> + Sync + Send>;

/// One optimization task: the waveforms to tune, how they assemble into a
/// landscape, what evolves, and what counts as cost.
pub struct ControlProblem {
    pub waveforms: Vec<CrabWaveform>,
    pub build: LandscapeBuilder,
    pub initial: Vec<WaveFunction>,
    pub target: Target,
    pub time: TimeGrid,
    /// Extra penalty weight on subspace leakage for gate targets.
    pub leakage_weight: f64,
    /// Reject candidates whose instantaneous well separation dips below the
    /// landscape floor (for independently controlled wells; symmetric pairs
    /// enforce the floor by clamping instead).
    pub separation_guard: bool,
    /// Penalty weight on raw-waveform excess beyond the amplitude bound.
    /// The sampled control clamps regardless; the penalty keeps the search
    /// out of the clamp's flat regions, where coefficient moves stop changing
    /// the control. Zero disables.
    pub amplitude_guard: f64,
    /// Noise-aware cost: average the cost over these pre-sampled noise paths
    /// for every candidate (common random numbers). Empty means noiseless.
    /// Supported for state targets.
    pub noise_batch: Vec<crate::propagate::NoisePath>,
}

impl ControlProblem {
    pub fn props_per_eval(&self) -> usize {
        self.initial.len().max(1) * self.noise_batch.len().max(1)
    }

    pub fn param_count(&self) -> usize {
        self.waveforms.iter().map(|w| w.param_count()).sum()
    }

    fn bounds(wfs: &[CrabWaveform]) -> Vec<f64> {
        let mut b = Vec::new();
        for w in wfs {
            b.extend(std::iter::repeat(w.amplitude_bound).take(w.param_count()));
        }
        b
    }

    fn assemble(template: &[CrabWaveform], params: &[f64]) -> Vec<CrabWaveform> {
        let mut wfs = template.to_vec();
        let mut offset = 0;
        for w in &mut wfs {
            let n = w.param_count();
            w.set_params(&params[offset..offset + n]);
            offset += n;
        }
        wfs
    }

    /// Smooth penalty for raw-waveform excursions beyond the amplitude bound.
    pub fn clamp_penalty(&self, wfs: &[CrabWaveform]) -> f64 {
        if self.amplitude_guard == 0.0 {
            return 0.0;
        }
        let mut acc = 0.0;
        for w in wfs {
            let excess = (w.max_abs_raw(192) / w.amplitude_bound - 1.0).max(0.0);
            acc += excess * excess;
        }
        self.amplitude_guard * acc
    }

    /// Evolve the initial states under the candidate waveforms. With a noise
    /// batch configured, every initial state is propagated once per batch
    /// path and the finals are grouped path-major.
    pub fn evolve_candidate(&self, wfs: &[CrabWaveform]) -> Result<Vec<WaveFunction>> {
        let landscape = (self.build)(wfs)?;
        if self.separation_guard && landscape.wells.len() == 2 {
            for k in 0..self.time.n_steps {
                let t = self.time.midpoint(k);
                if landscape.separation(t) < landscape.d_min {
                    return Err(Error::Config(format!("separation floor violated at t = {t}")));
                }
            }
        }
        if self.noise_batch.is_empty() {
            self.initial
                .iter()
                .map(|psi| {
                    Ok(evolve(psi, &landscape, &self.time, RecordSpec::default(), None, None)?
                        .final_state)
                })
                .collect()
        } else {
            let mut out = Vec::with_capacity(self.noise_batch.len() * self.initial.len());
            for path in &self.noise_batch {
                for psi in &self.initial {
                    out.push(
                        evolve(psi, &landscape, &self.time, RecordSpec::default(), None, Some(path))?
                            .final_state,
                    );
                }
            }
            Ok(out)
        }
    }

    /// Cost of the evolved states under this problem's target.
    pub fn cost_of(&self, finals: &[WaveFunction]) -> Result<f64> {
        if !self.noise_batch.is_empty() {
            let Target::State(t) = &self.target else {
                return Err(Error::Config(
                    "noise-averaged optimization supports state targets only".into(),
                ));
            };
            let mut acc = 0.0;
            for f in finals {
                acc += state_infidelity(f, t)?;
            }
            return Ok(acc / finals.len().max(1) as f64);
        }
        match &self.target {
            Target::State(t) => state_infidelity(&finals[0], t),
            Target::Gate { basis, unitary } => {
                let mut c = gate_infidelity(finals, basis, unitary)?;
                if self.leakage_weight > 0.0 {
                    c += self.leakage_weight * (1.0 - subspace_population(finals, basis)?);
                }
                Ok(c)
            }
            Target::Custom(f) => f(finals),
        }
    }

    /// Full candidate evaluation against a (possibly re-dressed) waveform
    /// template; propagation failures surface as infinite cost rather than
    /// aborting the search.
    pub fn evaluate_on(&self, template: &[CrabWaveform], params: &[f64]) -> (f64, bool) {
        let wfs = Self::assemble(template, params);
        match self.evolve_candidate(&wfs).and_then(|finals| self.cost_of(&finals)) {
            Ok(c) if c.is_finite() => (c + self.clamp_penalty(&wfs), false),
            _ => (f64::INFINITY, true),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizeOptions {
    /// Total cost-function evaluation budget.
    pub budget_evals: usize,
    /// Dressing restarts; the eval budget is spread across them.
    pub max_dressings: usize,
    /// Initial simplex displacement per coordinate.
    pub simplex_scale: f64,
    /// Stop as soon as the best cost drops to this value.
    pub target_cost: Option<f64>,
    /// Abandon the current dressing after this many evaluations without
    /// improvement (0 picks a dimension-scaled default).
    pub stall_evals: usize,
    pub seed: u64,
    /// Evaluate simplex batches (initialization, shrink) on the rayon pool.
    pub parallel: bool,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            budget_evals: 4000,
            max_dressings: 20,
            simplex_scale: 0.3,
            target_cost: None,
            stall_evals: 0,
            seed: 0,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizationResult {
    /// The dressed waveforms with the best coefficients installed; sampling
    /// them reproduces the optimized control.
    pub best_waveforms: Vec<CrabWaveform>,
    pub best_params: Vec<f64>,
    pub best_cost: f64,
    /// Best-so-far after every evaluation; nonincreasing by construction.
    pub cost_history: Vec<f64>,
    /// Evaluation indices at which a dressing restart happened.
    pub dressing_boundaries: Vec<usize>,
    pub n_evals: usize,
    pub n_props: usize,
    pub n_dressings: usize,
    pub n_failed: usize,
    pub seed: u64,
}

struct Tracker {
    budget: usize,
    n_evals: usize,
    n_failed: usize,
    best_cost: f64,
    best_params: Vec<f64>,
    cost_history: Vec<f64>,
    target_cost: Option<f64>,
    last_improvement: usize,
}

impl Tracker {
    fn remaining(&self) -> usize {
        self.budget.saturating_sub(self.n_evals)
    }

    fn done(&self) -> bool {
        self.remaining() == 0 || self.target_cost.map_or(false, |t| self.best_cost <= t)
    }

    fn record(&mut self, params: &[f64], cost: f64, failed: bool) {
        self.n_evals += 1;
        if failed {
            self.n_failed += 1;
        }
        if cost < self.best_cost {
            if cost < self.best_cost * (1.0 - 1e-4) {
                self.last_improvement = self.n_evals;
            }
            self.best_cost = cost;
            self.best_params = params.to_vec();
        }
        self.cost_history.push(self.best_cost);
    }

    fn eval_one(&mut self, cost: &(dyn Fn(&[f64]) -> (f64, bool) + Sync), p: &[f64]) -> f64 {
        let (c, failed) = cost(p);
        self.record(p, c, failed);
        c
    }

    fn eval_batch(
        &mut self,
        cost: &(dyn Fn(&[f64]) -> (f64, bool) + Sync),
        candidates: &[Vec<f64>],
        parallel: bool,
    ) -> Vec<f64> {
        let results: Vec<(f64, bool)> = if parallel {
            candidates.par_iter().map(|p| cost(p)).collect()
        } else {
            candidates.iter().map(|p| cost(p)).collect()
        };
        for (p, &(c, failed)) in candidates.iter().zip(&results) {
            self.record(p, c, failed);
        }
        results.into_iter().map(|(c, _)| c).collect()
    }
}

fn clamp_params(p: &mut [f64], bounds: &[f64]) {
    for (x, &b) in p.iter_mut().zip(bounds) {
        *x = x.clamp(-b, b);
    }
}

/// Adaptive Nelder-Mead on the current harmonic block. Restarts from a
/// shrunken simplex around the incumbent whenever the simplex collapses.
#[allow(clippy::too_many_arguments)]
fn nelder_mead(
    tracker: &mut Tracker,
    cost: &(dyn Fn(&[f64]) -> (f64, bool) + Sync),
    bounds: &[f64],
    scale0: f64,
    budget: usize,
    stall_evals: usize,
    parallel: bool,
) {
    let n = bounds.len();
    if n == 0 || budget == 0 {
        return;
    }
    let end_evals = tracker.n_evals + budget;
    // hand the remaining budget to a fresh dressing once progress dries up
    let stall_window = if stall_evals > 0 { stall_evals } else { (8 * (n + 1)).max(200) };
    let out_of_budget = |tr: &Tracker| {
        tr.done()
            || tr.n_evals >= end_evals
            || tr.n_evals.saturating_sub(tr.last_improvement) > stall_window
    };

    // Gao-Han adaptive coefficients
    let nf = n as f64;
    let alpha = 1.0;
    let beta = 1.0 + 2.0 / nf;
    let gamma = 0.75 - 1.0 / (2.0 * nf);
    let delta = 1.0 - 1.0 / nf;

    let mut scale = scale0;
    'restart: loop {
        if out_of_budget(tracker) {
            return;
        }
        let x0 = if tracker.best_cost.is_finite() {
            tracker.best_params.clone()
        } else {
            vec![0.0; n]
        };
        let mut candidates = vec![x0.clone()];
        for i in 0..n {
            let mut xi = x0.clone();
            xi[i] += if xi[i] + scale <= bounds[i] { scale } else { -scale };
            clamp_params(&mut xi, bounds);
            candidates.push(xi);
        }
        let take = candidates.len().min(end_evals.saturating_sub(tracker.n_evals));
        candidates.truncate(take);
        if candidates.is_empty() {
            return;
        }
        let costs = tracker.eval_batch(cost, &candidates, parallel);
        let mut simplex: Vec<(Vec<f64>, f64)> = candidates.into_iter().zip(costs).collect();
        if simplex.len() < n + 1 {
            return;
        }

        loop {
            if out_of_budget(tracker) {
                return;
            }
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let f_best = simplex[0].1;
            let f_second_worst = simplex[n - 1].1;
            let f_worst = simplex[n].1;

            let spread = (f_worst - f_best).abs();
            let diam = simplex[1..]
                .iter()
                .map(|(x, _)| {
                    x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
                })
                .fold(0.0, f64::max);
            if (spread < 1e-12 && diam < 1e-10) || diam < 1e-13 {
                scale *= 0.5;
                if scale < 1e-6 {
                    scale = scale0;
                }
                continue 'restart;
            }

            let centroid: Vec<f64> = (0..n)
                .map(|i| simplex[..n].iter().map(|(x, _)| x[i]).sum::<f64>() / nf)
                .collect();
            let worst = simplex[n].0.clone();
            let mut xr: Vec<f64> =
                centroid.iter().zip(&worst).map(|(c, w)| c + alpha * (c - w)).collect();
            clamp_params(&mut xr, bounds);
            let fr = tracker.eval_one(cost, &xr);

            if fr < f_best {
                if out_of_budget(tracker) {
                    return;
                }
                let mut xe: Vec<f64> =
                    centroid.iter().zip(&xr).map(|(c, r)| c + beta * (r - c)).collect();
                clamp_params(&mut xe, bounds);
                let fe = tracker.eval_one(cost, &xe);
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            } else if fr < f_second_worst {
                simplex[n] = (xr, fr);
            } else {
                let (mut xc, against): (Vec<f64>, f64) = if fr < f_worst {
                    (centroid.iter().zip(&xr).map(|(c, r)| c + gamma * (r - c)).collect(), fr)
                } else {
                    (centroid.iter().zip(&worst).map(|(c, w)| c - gamma * (c - w)).collect(), f_worst)
                };
                clamp_params(&mut xc, bounds);
                if out_of_budget(tracker) {
                    return;
                }
                let fc = tracker.eval_one(cost, &xc);
                if fc < against {
                    simplex[n] = (xc, fc);
                } else {
                    let best = simplex[0].0.clone();
                    let shrunk: Vec<Vec<f64>> = simplex[1..]
                        .iter()
                        .map(|(x, _)| {
                            let mut s: Vec<f64> =
                                best.iter().zip(x).map(|(b, xi)| b + delta * (xi - b)).collect();
                            clamp_params(&mut s, bounds);
                            s
                        })
                        .collect();
                    let take = shrunk.len().min(end_evals.saturating_sub(tracker.n_evals));
                    if take == 0 {
                        return;
                    }
                    let costs = tracker.eval_batch(cost, &shrunk[..take], parallel);
                    for ((slot, x), c) in
                        simplex[1..1 + take].iter_mut().zip(shrunk).zip(costs)
                    {
                        *slot = (x, c);
                    }
                }
            }
        }
    }
}

/// Dressed derivative-free optimization of a control problem.
pub fn optimize(problem: &ControlProblem, opts: &OptimizeOptions) -> Result<OptimizationResult> {
    if opts.budget_evals == 0 {
        return Err(Error::NonPositive { what: "budget_evals", value: 0.0 });
    }
    let n = problem.param_count();

    let mut tracker = Tracker {
        budget: opts.budget_evals,
        n_evals: 0,
        n_failed: 0,
        best_cost: f64::INFINITY,
        best_params: vec![0.0; n],
        cost_history: Vec::new(),
        target_cost: opts.target_cost,
        last_improvement: 0,
    };

    // the guess itself is the first candidate
    let mut template = problem.waveforms.clone();
    {
        let cost = |p: &[f64]| problem.evaluate_on(&template, p);
        tracker.eval_one(&cost, &vec![0.0; n]);
    }

    let mut dressing_boundaries = Vec::new();
    let mut n_dressings = 0;

    if n > 0 {
        let mut rng = stream_rng(opts.seed, "dressing", 0);
        let per_dressing = (opts.budget_evals / opts.max_dressings.max(1)).max(2 * n + 2);
        // first round runs on the waveforms as handed in (typically undetuned
        // base frequencies); dressing kicks in for the restarts
        let mut first = true;
        while !tracker.done() {
            if !first {
                // absorb the incumbent into the guess, then re-randomize frequencies
                let mut offset = 0;
                for w in &mut template {
                    let cnt = w.param_count();
                    w.set_params(&tracker.best_params[offset..offset + cnt]);
                    w.dress(&mut rng);
                    offset += cnt;
                }
                n_dressings += 1;
                dressing_boundaries.push(tracker.n_evals);
                // zero coefficients reproduce the absorbed best exactly
                tracker.best_params = vec![0.0; n];
            }
            first = false;

            let budget = per_dressing.min(tracker.remaining());
            let bounds = ControlProblem::bounds(&template);
            // later blocks are corrections; scale the simplex with how much
            // cost is left to remove
            let scale = if tracker.best_cost.is_finite() {
                (opts.simplex_scale * tracker.best_cost.sqrt()).clamp(0.02, opts.simplex_scale)
            } else {
                opts.simplex_scale
            };
            tracker.last_improvement = tracker.n_evals;
            let cost = |p: &[f64]| problem.evaluate_on(&template, p);
            nelder_mead(
                &mut tracker,
                &cost,
                &bounds,
                scale,
                budget,
                opts.stall_evals,
                opts.parallel,
            );
        }
    }

    let best_params = tracker.best_params.clone();
    let best_waveforms = ControlProblem::assemble(&template, &best_params);

    Ok(OptimizationResult {
        best_params,
        best_cost: tracker.best_cost,
        cost_history: tracker.cost_history,
        dressing_boundaries,
        n_evals: tracker.n_evals,
        n_props: tracker.n_evals * problem.props_per_eval(),
        n_dressings,
        n_failed: tracker.n_failed,
        seed: opts.seed,
        best_waveforms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crab::Control;
    use crate::grid::make_grid;
    use crate::potential::{PotentialFamily, PotentialLandscape, Well};
    use crate::spectrum::diagonalize;
    use crate::states::{coherent, harmonic_ground};
    use std::f64::consts::TAU;
    use std::sync::Arc;

    fn basis_pair(alpha: f64) -> Vec<WaveFunction> {
        let grid = make_grid(256, 12.0).unwrap();
        let landscape = PotentialLandscape::single(PotentialFamily::GaussianWell, alpha).unwrap();
        diagonalize(&landscape, &grid, 2).unwrap().states
    }

    fn apply_matrix(basis: &[WaveFunction], u: &TargetUnitary) -> Vec<WaveFunction> {
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

    #[test]
    fn state_infidelity_pins_the_definition() {
        let grid = make_grid(256, 10.0).unwrap();
        let a = harmonic_ground(&grid);
        assert_eq!(state_infidelity(&a, &a).unwrap(), 0.0);

        let basis = basis_pair(0.25);
        let inf = state_infidelity(&basis[0], &basis[1]).unwrap();
        assert!((inf - 1.0).abs() < 1e-9);

        // cos(theta) mixture at theta = pi/6 -> infidelity sin^2 = 1/4
        let theta = std::f64::consts::PI / 6.0;
        let mut mixed = basis[0].clone();
        for (m, b) in mixed.amps.iter_mut().zip(&basis[1].amps) {
            *m = theta.cos() * *m + theta.sin() * b;
        }
        let inf = state_infidelity(&mixed, &basis[0]).unwrap();
        assert!((inf - 0.25).abs() < 1e-10);
    }

    #[test]
    fn gate_infidelity_hits_the_analytic_values() {
        let basis = basis_pair(0.25);

        // M = identity
        let target = TargetUnitary::sigma_x();
        let evolved = apply_matrix(&basis, &target);
        let inf = gate_infidelity(&evolved, &basis, &target).unwrap();
        assert!(inf.abs() < 1e-12, "M=I infidelity {inf}");

        // M = 0: evolved states entirely outside the subspace
        let grid = make_grid(256, 12.0).unwrap();
        let landscape =
            PotentialLandscape::single(PotentialFamily::GaussianWell, 0.25).unwrap();
        let high = diagonalize(&landscape, &grid, 4).unwrap().states;
        let outside = vec![high[2].clone(), high[3].clone()];
        let inf = gate_infidelity(&outside, &basis, &TargetUnitary::identity()).unwrap();
        assert!((inf - 1.0).abs() < 1e-12, "M=0 infidelity {inf}");

        // M = diag(1, i): F = (2 + |1+i|^2)/6 = 2/3
        let mut rotated = vec![basis[0].clone(), basis[1].clone()];
        for a in &mut rotated[1].amps {
            *a *= Complex64::i();
        }
        let inf = gate_infidelity(&rotated, &basis, &TargetUnitary::identity()).unwrap();
        assert!((inf - 1.0 / 3.0).abs() < 1e-12, "M=diag(1,i) infidelity {inf}");
    }

    #[test]
    fn gate_infidelity_ignores_global_phases() {
        let basis = basis_pair(0.25);
        let target = TargetUnitary::hadamard();
        let evolved = apply_matrix(&basis, &target);
        let base = gate_infidelity(&evolved, &basis, &target).unwrap();
        for phase in [0.3, 1.2, 4.0] {
            let mut shifted = evolved.clone();
            for s in &mut shifted {
                for a in &mut s.amps {
                    *a *= Complex64::cis(phase);
                }
            }
            let inf = gate_infidelity(&shifted, &basis, &target).unwrap();
            assert!((inf - base).abs() < 1e-12);
        }
    }

    #[test]
    fn gate_infidelity_validates_inputs() {
        let basis = basis_pair(0.25);
        let skewed = vec![basis[0].clone(), basis[0].clone()];
        assert!(matches!(
            gate_infidelity(&skewed.clone(), &skewed, &TargetUnitary::identity()),
            Err(Error::NonOrthonormalBasis { .. })
        ));

        let not_unitary = TargetUnitary([
            [Complex64::ONE, Complex64::ONE],
            [Complex64::ZERO, Complex64::ONE],
        ]);
        assert!(matches!(
            gate_infidelity(&basis.clone(), &basis, &not_unitary),
            Err(Error::NotUnitary { .. })
        ));
    }

    fn displacement_problem(grid_n: usize) -> ControlProblem {
        let grid = make_grid(grid_n, 12.0).unwrap();
        let psi0 = harmonic_ground(&grid);
        let target = coherent(&grid, Complex64::new(1.0, 0.0)).unwrap();
        let time = TimeGrid::periods(2.0, 200).unwrap();
        let wf = CrabWaveform::new(time.duration, 4, 3.0, 4.0, Control::Zero).unwrap();
        ControlProblem {
            waveforms: vec![wf],
            build: Box::new(|wfs: &[CrabWaveform]| {
                let well = Well::new(
                    PotentialFamily::Harmonic,
                    0.25,
                    Control::Crab(Box::new(wfs[0].clone())),
                    Control::Zero,
                )?;
                Ok(PotentialLandscape::single_with(well))
            }),
            initial: vec![psi0],
            target: Target::State(target),
            time,
            leakage_weight: 0.0,
            separation_guard: false,
            amplitude_guard: 1.0,
            noise_batch: Vec::new(),
        }
    }

    #[test]
    fn optimizer_solves_the_driven_displacement() {
        let problem = displacement_problem(256);
        let opts = OptimizeOptions {
            budget_evals: 2500,
            max_dressings: 6,
            target_cost: Some(5e-4),
            seed: 11,
            ..Default::default()
        };
        let result = optimize(&problem, &opts).unwrap();
        assert!(
            result.best_cost < 1e-3,
            "driven displacement stalled at {}",
            result.best_cost
        );
        // replaying the stored waveforms reproduces the reported cost
        let finals = problem.evolve_candidate(&result.best_waveforms).unwrap();
        let replay = problem.cost_of(&finals).unwrap();
        assert!((replay - result.best_cost).abs() < 1e-12);
    }

    #[test]
    fn optimizer_is_deterministic_in_serial_mode() {
        let problem = displacement_problem(128);
        let opts = OptimizeOptions {
            budget_evals: 300,
            max_dressings: 3,
            seed: 42,
            parallel: false,
            ..Default::default()
        };
        let a = optimize(&problem, &opts).unwrap();
        let b = optimize(&problem, &opts).unwrap();
        assert_eq!(a.best_cost, b.best_cost);
        assert_eq!(a.best_params, b.best_params);
        assert_eq!(a.cost_history, b.cost_history);
        assert_eq!(a.n_evals, b.n_evals);
    }

    #[test]
    fn parallel_and_serial_agree() {
        let problem = displacement_problem(128);
        let mk = |parallel| OptimizeOptions {
            budget_evals: 200,
            max_dressings: 2,
            seed: 7,
            parallel,
            ..Default::default()
        };
        let a = optimize(&problem, &mk(false)).unwrap();
        let b = optimize(&problem, &mk(true)).unwrap();
        assert_eq!(a.best_cost, b.best_cost);
        assert_eq!(a.best_params, b.best_params);
    }

    #[test]
    fn history_is_monotone_and_budget_respected() {
        let problem = displacement_problem(128);
        let opts = OptimizeOptions {
            budget_evals: 400,
            max_dressings: 4,
            seed: 3,
            ..Default::default()
        };
        let r = optimize(&problem, &opts).unwrap();
        assert!(r.n_evals <= 400);
        assert_eq!(r.cost_history.len(), r.n_evals);
        for w in r.cost_history.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert!(r.n_dressings >= 1);
        // dressing boundaries are recorded in order
        for w in r.dressing_boundaries.windows(2) {
            assert!(w[0] < w[1]);
        }
    }

    #[test]
    fn guess_only_problem_returns_after_one_evaluation() {
        let grid = make_grid(128, 10.0).unwrap();
        let psi0 = harmonic_ground(&grid);
        let target = psi0.clone();
        let time = TimeGrid::periods(1.0, 200).unwrap();
        let problem = ControlProblem {
            waveforms: vec![],
            build: Box::new(|_| {
                PotentialLandscape::single(PotentialFamily::Harmonic, 0.25)
            }),
            initial: vec![psi0],
            target: Target::State(target),
            time,
            leakage_weight: 0.0,
            separation_guard: false,
            amplitude_guard: 1.0,
            noise_batch: Vec::new(),
        };
        let r = optimize(&problem, &OptimizeOptions::default()).unwrap();
        assert_eq!(r.n_evals, 1);
        assert!(r.best_cost < 1e-6);
    }

    #[test]
    fn failed_candidates_do_not_abort_the_search() {
        // a landscape builder that rejects large first coefficients
        let grid = make_grid(128, 10.0).unwrap();
        let psi0 = harmonic_ground(&grid);
        let target = coherent(&grid, Complex64::new(0.5, 0.0)).unwrap();
        let time = TimeGrid::periods(1.0, 200).unwrap();
        let wf = CrabWaveform::new(time.duration, 2, 3.0, 4.0, Control::Zero).unwrap();
        let problem = ControlProblem {
            waveforms: vec![wf],
            build: Box::new(|wfs: &[CrabWaveform]| {
                if wfs[0].params()[0] > 0.2 {
                    return Err(Error::Config("rejected".into()));
                }
                let well = Well::new(
                    PotentialFamily::Harmonic,
                    0.25,
                    Control::Crab(Box::new(wfs[0].clone())),
                    Control::Zero,
                )?;
                Ok(PotentialLandscape::single_with(well))
            }),
            initial: vec![psi0],
            target: Target::State(target),
            time,
            leakage_weight: 0.0,
            separation_guard: false,
            amplitude_guard: 1.0,
            noise_batch: Vec::new(),
        };
        let opts = OptimizeOptions {
            budget_evals: 200,
            max_dressings: 2,
            simplex_scale: 1.5, // guarantees some rejected candidates
            seed: 5,
            ..Default::default()
        };
        let r = optimize(&problem, &opts).unwrap();
        assert!(r.n_failed > 0);
        assert!(r.best_cost.is_finite());
    }

    #[test]
    fn target_cost_stops_early() {
        let problem = displacement_problem(128);
        let opts = OptimizeOptions {
            budget_evals: 4000,
            target_cost: Some(0.5),
            seed: 1,
            ..Default::default()
        };
        let r = optimize(&problem, &opts).unwrap();
        assert!(r.best_cost <= 0.5);
        assert!(r.n_evals < 4000);
    }

    #[test]
    fn grid_shares_are_not_entangled_across_candidates() {
        // two evaluations of the same params give the same cost (pure function)
        let problem = displacement_problem(128);
        let params = vec![0.2, -0.1, 0.05, 0.3, 0.0, 0.1, -0.2, 0.15];
        let (a, _) = problem.evaluate_on(&problem.waveforms, &params);
        let (b, _) = problem.evaluate_on(&problem.waveforms, &params);
        assert_eq!(a, b);
        let _ = Arc::strong_count(&problem.initial[0].grid);
        let _ = TAU;
    }
}


/// One `(alpha, T)` cell of a duration sweep.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SweepCell {
    pub alpha: f64,
    pub t_over_2pi: f64,
    pub best_infidelity: f64,
    pub avg_excitation: f64,
    pub n_evals: usize,
    pub n_props: usize,
}

/// Scan protocol durations (per nonharmonicity), optimizing each cell and
/// carrying the previous duration's best control into the next as a warm
/// start. For stationary-state targets the padded control preserves its
/// fidelity exactly, so the best infidelity is nonincreasing along each row.
///
/// `make(alpha, t_over_2pi, warm)` builds the cell's problem; `warm` is the
/// previous cell's result when one exists. The options' budget applies per
/// cell and each cell draws its own dressing stream.
pub fn time_sweep<F>(
    make: F,
    alphas: &[f64],
    ts_over_2pi: &[f64],
    opts: &OptimizeOptions,
    occupation_states: usize,
) -> Result<Vec<SweepCell>>
where
    F: Fn(f64, f64, Option<&OptimizationResult>) -> Result<ControlProblem>,
{
    if alphas.is_empty() || ts_over_2pi.is_empty() {
        return Err(Error::Config("sweep needs nonempty alpha and T lists".into()));
    }
    if ts_over_2pi.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("sweep durations must be strictly increasing".into()));
    }
    let mut cells = Vec::with_capacity(alphas.len() * ts_over_2pi.len());
    for (row, &alpha) in alphas.iter().enumerate() {
        let mut prev: Option<OptimizationResult> = None;
        for (col, &t) in ts_over_2pi.iter().enumerate() {
            let problem = make(alpha, t, prev.as_ref())?;
            let cell_idx = (row * ts_over_2pi.len() + col) as u64;
            let cell_opts = OptimizeOptions {
                seed: crate::rng::stream_key(opts.seed, "sweep-cell", cell_idx),
                ..opts.clone()
            };
            let result = optimize(&problem, &cell_opts)?;

            let avg_excitation =
                sweep_occupation(&problem, &result, occupation_states).unwrap_or(f64::NAN);
            cells.push(SweepCell {
                alpha,
                t_over_2pi: t,
                best_infidelity: result.best_cost,
                avg_excitation,
                n_evals: result.n_evals,
                n_props: result.n_props,
            });
            prev = Some(result);
        }
    }
    Ok(cells)
}

fn sweep_occupation(
    problem: &ControlProblem,
    result: &OptimizationResult,
    n_states: usize,
) -> Result<f64> {
    if n_states == 0 {
        return Ok(f64::NAN);
    }
    let landscape = (problem.build)(&result.best_waveforms)?;
    let grid = &problem.initial[0].grid;
    let basis = crate::spectrum::diagonalize(&landscape, grid, n_states)?;
    let stride = (problem.time.n_steps / 64).max(1);
    let record = crate::propagate::RecordSpec { observable_stride: stride, snapshot_stride: 0 };
    let traj = crate::propagate::evolve(
        &problem.initial[0],
        &landscape,
        &problem.time,
        record,
        Some(&basis),
        None,
    )?;
    Ok(crate::analysis::average_excitation(&traj, &basis)?.time_average)
}
