//! Command-line driver for the wellshake toolkit.

mod config;
mod manifest;

use std::path::PathBuf;
use std::time::Instant;

use anyhow::Context;
use clap::{Parser, Subcommand};

use config::{check_kind, RunConfig};
use manifest::RunManifest;
use wellshake::config::StateSpec;
use wellshake::crab::{Control, CrabWaveform, SampledControl};
use wellshake::grid::make_grid;
use wellshake::io;
use wellshake::noise::{noise_scan, noisy_fidelity, sample_noise_path, NoiseSpec};
use wellshake::optimize::{
    optimize, time_sweep, ControlProblem, OptimizationResult, OptimizeOptions, Target,
};
use wellshake::potential::{PotentialLandscape, Well};
use wellshake::propagate::TimeGrid;
use wellshake::protocols::{
    build_target_state, landscape_from_controls, replay_protocol, run_protocol, RunContext,
};
use wellshake::spectrum::{diagonalize, kerr_estimate, transition_frequencies};

#[derive(Parser)]
#[command(
    name = "wellshake",
    version,
    about = "Quantum state preparation and control in modulated nonharmonic wells"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Path to the JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker thread count override.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output directory override (also honors WELLSHAKE_OUT).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Validate the configuration and print the resolved defaults, then exit.
    #[arg(long, global = true)]
    dry_run: bool,

    /// Single-threaded, bit-stable execution.
    #[arg(long, global = true)]
    serial: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Eigenenergies and level splittings of the configured well.
    Spectrum,
    /// State preparation (single-well target or a double-well cat).
    Prepare,
    /// A two-level subspace unitary.
    Gate,
    /// Inter-well state transfer.
    Transfer,
    /// Single-shot state discrimination (kick or steal).
    Discriminate,
    /// Algorithmic cooling by spatial sorting.
    Cool,
    /// Best infidelity and average excitation over (alpha, T) cells.
    Sweep,
    /// Noisy infidelity over a (gamma1, gamma2) grid.
    NoiseScan,
    /// Wigner map of a configured state.
    Wigner,
    /// Re-evaluate an exported run's controls against its manifest.
    Replay {
        /// Output directory of the finished run (holding manifest.json).
        #[arg(long)]
        run: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Prepare => "prepare",
            Command::Gate => "gate",
            Command::Transfer => "transfer",
            Command::Discriminate => "discriminate",
            Command::Cool => "cool",
            Command::Sweep => "sweep",
            Command::NoiseScan => "noise-scan",
            Command::Wigner => "wigner",
            Command::Replay { .. } => "replay",
        }
    }
}

fn main() {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}

fn err_str(e: wellshake::Error) -> anyhow::Error {
    anyhow::anyhow!(e.to_string())
}

fn load_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("--config is required for this command"))?;
    let mut config = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output_dir = Some(out.clone());
    } else if config.output_dir.is_none() {
        if let Ok(env_out) = std::env::var("WELLSHAKE_OUT") {
            if !env_out.is_empty() {
                config.output_dir = Some(PathBuf::from(env_out));
            }
        }
    }
    if cli.serial {
        config.threads = Some(1);
    } else if let Some(threads) = cli.threads {
        config.threads = Some(threads);
    }
    Ok(config)
}

fn dispatch(cli: Cli) -> anyhow::Result<i32> {
    if let Command::Replay { run } = &cli.command {
        return replay_run(run);
    }
    let command = cli.command.name();
    let config = load_config(&cli)?;
    if let Some(n) = config.threads {
        if n > 0 {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .context("thread pool")?;
        }
    }
    let serial = config.threads == Some(1);

    if cli.dry_run {
        validate_only(command, &config)?;
        println!("{}", serde_json::to_string_pretty(&config)?);
        return Ok(0);
    }

    let started = Instant::now();
    let mut manifest = RunManifest::new(command, config.clone());
    let result = execute(command, &config, serial, &mut manifest);
    manifest.wall_time_s = started.elapsed().as_secs_f64();

    match result {
        Ok(()) => {
            if let Some(dir) = &config.output_dir {
                manifest.write(dir)?;
            }
            for (name, value) in &manifest.metrics {
                println!("{name} = {value:.12e}");
            }
            Ok(0)
        }
        Err(e) => {
            manifest.error = Some(format!("{e:#}"));
            if let Some(dir) = &config.output_dir {
                manifest.write(dir)?;
            }
            eprintln!("error: {e:#}");
            Ok(2)
        }
    }
}

fn validate_only(command: &str, config: &RunConfig) -> anyhow::Result<()> {
    match command {
        "spectrum" | "wigner" => {
            config.units.resolve().map_err(err_str)?;
        }
        "sweep" => {
            anyhow::ensure!(config.alphas.is_some(), "sweep needs an `alphas` list");
            anyhow::ensure!(config.ts_over_2pi.is_some(), "sweep needs a `ts_over_2pi` list");
        }
        "noise-scan" => {
            config.to_run_spec()?.validate().map_err(err_str)?;
            anyhow::ensure!(config.gamma1_list.is_some(), "noise-scan needs a `gamma1_list`");
            anyhow::ensure!(config.gamma2_list.is_some(), "noise-scan needs a `gamma2_list`");
        }
        _ => {
            config.to_run_spec()?.validate().map_err(err_str)?;
        }
    }
    Ok(())
}

fn execute(
    command: &str,
    config: &RunConfig,
    serial: bool,
    manifest: &mut RunManifest,
) -> anyhow::Result<()> {
    match command {
        "spectrum" => run_spectrum(config, manifest),
        "wigner" => run_wigner(config, manifest),
        "sweep" => run_sweep(config, serial, manifest),
        "noise-scan" => run_noise_scan(config, serial, manifest),
        other => run_protocol_command(other, config, serial, manifest),
    }
}

fn run_protocol_command(
    command: &str,
    config: &RunConfig,
    serial: bool,
    manifest: &mut RunManifest,
) -> anyhow::Result<()> {
    let spec = config.to_run_spec()?;
    let allowed: &[&str] = match command {
        "prepare" => &["prepare", "double_cat"],
        "gate" => &["gate"],
        "transfer" => &["transfer"],
        "discriminate" => &["discriminate_kick", "discriminate_steal"],
        "cool" => &["cool"],
        other => anyhow::bail!("unknown command {other}"),
    };
    check_kind(command, &spec.protocol, allowed)?;
    config.forbid(
        command,
        &[
            ("alphas", config.alphas.is_some()),
            ("ts_over_2pi", config.ts_over_2pi.is_some()),
            ("gamma1_list", config.gamma1_list.is_some()),
            ("gamma2_list", config.gamma2_list.is_some()),
            ("state", config.state.is_some()),
            ("n_states", config.n_states.is_some()),
        ],
    )?;

    let ctx = RunContext { spec, out_dir: config.output_dir.clone(), parallel: !serial };
    let outcome = run_protocol(&ctx).map_err(err_str)?;
    manifest.metrics = outcome.metrics.into_iter().collect();
    manifest.artifacts = outcome.artifacts;
    Ok(())
}

fn run_spectrum(config: &RunConfig, manifest: &mut RunManifest) -> anyhow::Result<()> {
    let units = config.units.resolve().map_err(err_str)?;
    let n_states = config.n_states.unwrap_or(8);
    let grid = make_grid(config.grid.n_points, config.grid.resolve_half_width(None))
        .map_err(err_str)?;
    let landscape =
        PotentialLandscape::single(config.units.family, units.alpha).map_err(err_str)?;
    let basis = diagonalize(&landscape, &grid, n_states).map_err(err_str)?;
    let splitting = transition_frequencies(&basis).ok();

    for (n, &e) in basis.energies.iter().enumerate() {
        manifest.metrics.insert(format!("energy_{n}"), e);
    }
    if let Some(tf) = &splitting {
        manifest.metrics.insert("omega_10".into(), tf.omega_10);
        manifest.metrics.insert("omega_21".into(), tf.omega_21);
        manifest.metrics.insert("splitting".into(), tf.splitting);
        manifest.metrics.insert("kerr_over_omega".into(), kerr_estimate(units.alpha));
    }
    if let Some(dir) = &config.output_dir {
        let mut w = io::create(&dir.join("spectrum.csv")).map_err(err_str)?;
        io::write_spectrum_csv(
            &mut w,
            &basis.energies,
            splitting.map(|tf| (tf.omega_10, tf.omega_21, tf.splitting)),
        )
        .map_err(err_str)?;
        manifest.artifacts.push("spectrum.csv".into());
    }
    Ok(())
}

fn run_wigner(config: &RunConfig, manifest: &mut RunManifest) -> anyhow::Result<()> {
    let units = config.units.resolve().map_err(err_str)?;
    let state = config
        .state
        .clone()
        .ok_or_else(|| anyhow::anyhow!("wigner needs a `state` block"))?;
    let grid = make_grid(config.grid.n_points, config.grid.resolve_half_width(None))
        .map_err(err_str)?;
    let psi = build_target_state(config.units.family, &grid, units.alpha, &state)
        .map_err(err_str)?;
    let map = wellshake::analysis::wigner(&psi, None).map_err(err_str)?;
    manifest.metrics.insert("wigner_integral".into(), map.integral());
    if let Some(dir) = &config.output_dir {
        let mut w = io::create(&dir.join("wigner.csv")).map_err(err_str)?;
        io::write_wigner_csv(&mut w, &map).map_err(err_str)?;
        manifest.artifacts.push("wigner.csv".into());
    }
    Ok(())
}

fn run_sweep(config: &RunConfig, serial: bool, manifest: &mut RunManifest) -> anyhow::Result<()> {
    let alphas = config
        .alphas
        .clone()
        .ok_or_else(|| anyhow::anyhow!("sweep needs an `alphas` list"))?;
    let ts = config
        .ts_over_2pi
        .clone()
        .ok_or_else(|| anyhow::anyhow!("sweep needs a `ts_over_2pi` list"))?;
    let target_spec = config.sweep_target.clone().unwrap_or(StateSpec::Fock { n: 1 });
    let family = config.units.family;
    let grid_spec = config.grid;
    let crab = config.crab;

    let make = |alpha: f64,
                t: f64,
                warm: Option<&OptimizationResult>|
     -> wellshake::Result<ControlProblem> {
        let grid = make_grid(grid_spec.n_points, grid_spec.resolve_half_width(None))?;
        let time = TimeGrid::periods(t, crab.steps_per_period)?;
        let landscape = PotentialLandscape::single(family, alpha)?;
        let initial = diagonalize(&landscape, &grid, 1)?.states.remove(0);
        let target = build_target_state(family, &grid, alpha, &target_spec)?;
        let wf = match warm {
            None => {
                let mut w = CrabWaveform::new(
                    time.duration,
                    crab.n_harmonics_u,
                    crab.bound_u,
                    crab.freq_cutoff,
                    Control::Zero,
                )?;
                w.envelope_ramp = crab.envelope_ramp;
                w
            }
            Some(prev) => CrabWaveform::warm_started(
                time.duration,
                crab.n_harmonics_u,
                crab.bound_u,
                crab.freq_cutoff,
                &prev.best_waveforms[0],
            )?,
        };
        Ok(ControlProblem {
            waveforms: vec![wf],
            build: Box::new(move |wfs: &[CrabWaveform]| {
                let well = Well::new(
                    family,
                    alpha,
                    Control::Crab(Box::new(wfs[0].clone())),
                    Control::Zero,
                )?;
                Ok(PotentialLandscape::single_with(well))
            }),
            initial: vec![initial],
            target: Target::State(target),
            time,
            leakage_weight: 0.0,
            separation_guard: false,
            amplitude_guard: 1.0,
            noise_batch: Vec::new(),
        })
    };

    let opts = OptimizeOptions {
        budget_evals: config.optimizer.budget_evals,
        max_dressings: config.optimizer.max_dressings,
        simplex_scale: config.optimizer.simplex_scale,
        stall_evals: config.optimizer.stall_evals,
        target_cost: config.optimizer.target_infidelity,
        seed: config.seed,
        parallel: !serial,
    };
    let cells = time_sweep(make, &alphas, &ts, &opts, 6).map_err(err_str)?;
    for c in &cells {
        manifest.metrics.insert(
            format!("infidelity_a{:.3}_t{:.1}", c.alpha, c.t_over_2pi),
            c.best_infidelity,
        );
        manifest.metrics.insert(
            format!("nbar_a{:.3}_t{:.1}", c.alpha, c.t_over_2pi),
            c.avg_excitation,
        );
    }
    if let Some(dir) = &config.output_dir {
        let mut w = io::create(&dir.join("sweep.csv")).map_err(err_str)?;
        io::write_sweep_csv(&mut w, &cells).map_err(err_str)?;
        manifest.artifacts.push("sweep.csv".into());
    }
    Ok(())
}

fn run_noise_scan(
    config: &RunConfig,
    serial: bool,
    manifest: &mut RunManifest,
) -> anyhow::Result<()> {
    let g1 = config
        .gamma1_list
        .clone()
        .ok_or_else(|| anyhow::anyhow!("noise-scan needs a `gamma1_list`"))?;
    let g2 = config
        .gamma2_list
        .clone()
        .ok_or_else(|| anyhow::anyhow!("noise-scan needs a `gamma2_list`"))?;
    let spec = config.to_run_spec()?;
    let wellshake::config::ProtocolSpec::Prepare { target, t_over_2pi } = spec.protocol.clone()
    else {
        anyhow::bail!("noise-scan runs on a `prepare` protocol block");
    };
    let dir = config
        .output_dir
        .clone()
        .ok_or_else(|| anyhow::anyhow!("noise-scan needs an output directory"))?;

    // optimize the pulse noiselessly once, with full artifacts
    let ctx = RunContext { spec: spec.clone(), out_dir: Some(dir.clone()), parallel: !serial };
    let outcome = run_protocol(&ctx).map_err(err_str)?;
    manifest.metrics = outcome.metrics.iter().cloned().collect();
    manifest.artifacts = outcome.artifacts.clone();

    let units = spec.units.resolve().map_err(err_str)?;
    let grid = make_grid(spec.grid.n_points, spec.grid.resolve_half_width(None))
        .map_err(err_str)?;
    let rest = PotentialLandscape::single(spec.units.family, units.alpha).map_err(err_str)?;
    let initial = diagonalize(&rest, &grid, 1).map_err(err_str)?.states.remove(0);
    let target_state =
        build_target_state(spec.units.family, &grid, units.alpha, &target).map_err(err_str)?;
    let time =
        TimeGrid::periods(t_over_2pi, spec.crab.steps_per_period).map_err(err_str)?;

    let mut rd = std::io::BufReader::new(std::fs::File::open(dir.join("controls.csv"))?);
    let controls = io::read_controls_csv(&mut rd, "controls.csv").map_err(err_str)?;
    let optimized = landscape_from_controls(
        spec.units.family,
        units.alpha,
        spec.units.resolve_d_min(units.alpha),
        &controls,
    )
    .map_err(err_str)?;

    let n_trajectories = config.noise.map_or(200, |n| n.n_trajectories);
    let reoptimize = config.reoptimize.unwrap_or(false);
    let mut cells = Vec::new();
    if !reoptimize {
        let base = NoiseSpec {
            gamma1: 0.0,
            gamma2: 0.0,
            n_trajectories,
            seed: wellshake::rng::stream_key(config.seed, "noise-scan", 0),
        };
        cells = noise_scan(&initial, &optimized, &time, &target_state, &base, &g1, &g2)
            .map_err(err_str)?;
    } else {
        // re-optimize under each noise level, warm-started from the noiseless
        // pulse, with a small common-random-number batch per evaluation
        let u_guess = Control::Samples(
            SampledControl::new(controls.times.clone(), controls.wells[0].0.clone())
                .map_err(err_str)?,
        );
        for (idx, (&gamma1, &gamma2)) in g1
            .iter()
            .flat_map(|a| g2.iter().map(move |b| (a, b)))
            .enumerate()
        {
            let cell_seed =
                wellshake::rng::stream_key(config.seed, "noise-reopt", idx as u64);
            let batch_spec =
                NoiseSpec { gamma1, gamma2, n_trajectories: 8, seed: cell_seed };
            let batch: Vec<_> = (0..8)
                .map(|i| sample_noise_path(&batch_spec, &time, i))
                .collect();
            let family = spec.units.family;
            let alpha = units.alpha;
            let crab = spec.crab;
            let mut wf = CrabWaveform::new(
                time.duration,
                crab.n_harmonics_u,
                crab.bound_u,
                crab.freq_cutoff,
                u_guess.clone(),
            )
            .map_err(err_str)?;
            wf.envelope_ramp = crab.envelope_ramp;
            let problem = ControlProblem {
                waveforms: vec![wf],
                build: Box::new(move |wfs: &[CrabWaveform]| {
                    let well = Well::new(
                        family,
                        alpha,
                        Control::Crab(Box::new(wfs[0].clone())),
                        Control::Zero,
                    )?;
                    Ok(PotentialLandscape::single_with(well))
                }),
                initial: vec![initial.clone()],
                target: Target::State(target_state.clone()),
                time,
                leakage_weight: 0.0,
                separation_guard: false,
                amplitude_guard: 1.0,
                noise_batch: batch,
            };
            let opts = OptimizeOptions {
                budget_evals: spec.optimizer.budget_evals,
                max_dressings: spec.optimizer.max_dressings,
                simplex_scale: spec.optimizer.simplex_scale,
                stall_evals: spec.optimizer.stall_evals,
                target_cost: None,
                seed: cell_seed,
                parallel: !serial,
            };
            let result = optimize(&problem, &opts).map_err(err_str)?;
            let tuned = (problem.build)(&result.best_waveforms).map_err(err_str)?;
            let est_spec = NoiseSpec {
                gamma1,
                gamma2,
                n_trajectories,
                seed: wellshake::rng::stream_key(config.seed, "noise-scan", 0),
            };
            let est = noisy_fidelity(&initial, &tuned, &time, &target_state, &est_spec)
                .map_err(err_str)?;
            cells.push(wellshake::noise::NoiseScanCell {
                gamma1,
                gamma2,
                alpha,
                mean_infidelity: 1.0 - est.fidelity_mean,
                std_error: est.std_error,
                n_failed: est.n_failed,
            });
        }
    }

    for c in &cells {
        manifest.metrics.insert(
            format!("infidelity_g1_{:.2e}_g2_{:.2e}", c.gamma1, c.gamma2),
            c.mean_infidelity,
        );
    }
    let mut w = io::create(&dir.join("noise_scan.csv")).map_err(err_str)?;
    io::write_noise_scan_csv(&mut w, &cells).map_err(err_str)?;
    manifest.artifacts.push("noise_scan.csv".into());
    Ok(())
}

fn replay_run(run_dir: &PathBuf) -> anyhow::Result<i32> {
    let manifest = RunManifest::load(&run_dir.join("manifest.json"))
        .with_context(|| format!("loading {}/manifest.json", run_dir.display()))?;
    let spec = manifest.config.to_run_spec()?;
    let mut rd = std::io::BufReader::new(
        std::fs::File::open(run_dir.join("controls.csv"))
            .context("replay needs the run's controls.csv")?,
    );
    let controls = io::read_controls_csv(&mut rd, "controls.csv").map_err(err_str)?;
    let ctx = RunContext { spec, out_dir: None, parallel: true };
    let replayed = replay_protocol(&ctx, &controls).map_err(err_str)?;

    let mut ok = true;
    for (name, value) in &replayed {
        match manifest.metrics.get(name) {
            Some(orig) => {
                let pass = (orig - value).abs() <= 1e-10;
                println!(
                    "{name}: manifest {orig:.12e} replay {value:.12e} -> {}",
                    if pass { "OK" } else { "MISMATCH" }
                );
                ok &= pass;
            }
            None => println!("{name}: {value:.12e} (not in manifest)"),
        }
    }
    Ok(if ok { 0 } else { 3 })
}
