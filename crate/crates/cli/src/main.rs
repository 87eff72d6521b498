use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{debug, info};

use drsynth::certificates::{check_drcbc, safety_lower_bound};
use drsynth::config::{ExperimentConfig, ResolvedCertificate};
use drsynth::export::{
    decode_policy, encode_policy, encode_value_grid, policy_csv, value_grid_csv, Manifest,
};
use drsynth::harness::{monte_carlo, run_group_study, PolicySource, SimulationConfig};
use drsynth::oracle::run_oracle_suite;
use drsynth::synthesis::{evaluate_fixed_distribution_with, min_over_initial, value_iteration_with, PolicyTable};
use drsynth::Error;

#[derive(Parser, Debug)]
#[command(name = "drsynth", version, about = "Distributionally robust synthesis and certificate checks")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// TOML experiment configuration.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(short, long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(short, long, global = true)]
    workers: Option<usize>,
    /// Output directory for artifacts.
    #[arg(short, long, global = true, default_value = "drsynth-out")]
    out: PathBuf,
    /// More output (-v, -vv).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Only errors.
    #[arg(short, long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Robust value iteration; writes the value grid and policy table.
    Synth,
    /// Exact evaluation of a policy under the discretized true distribution.
    Eval {
        /// Policy cache written by `synth` (re-synthesized when omitted).
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Monte Carlo simulation of a policy table or certificate control.
    Simulate {
        #[arg(long, conflicts_with = "fixture")]
        policy: Option<PathBuf>,
        /// Bundled certificate whose control is simulated.
        #[arg(long)]
        fixture: Option<String>,
        #[arg(long)]
        trials: Option<usize>,
        /// Write every trajectory to trajectories.csv.
        #[arg(long)]
        log: bool,
    },
    /// Verify a certificate on probe grids.
    CheckCert {
        /// Bundled certificate (v_bar_1, v_bar_2, v_bar_4d).
        #[arg(long)]
        fixture: Option<String>,
    },
    /// Repeated synthesis study over (N, θ) groups.
    Study {
        /// 100 repetitions per group instead of 20.
        #[arg(long)]
        paper_scale: bool,
        #[arg(long)]
        repetitions: Option<usize>,
    },
    /// Duality and brute-force game-tree cross-checks.
    Oracle {
        #[arg(long, default_value_t = 100)]
        duality: usize,
        #[arg(long, default_value_t = 20)]
        game: usize,
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
    },
}

enum Failure {
    /// A check ran and did not pass.
    Check(String),
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Argument(_) | Error::Dimension { .. } => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

struct Run {
    config: ExperimentConfig,
    config_text: String,
    out: PathBuf,
    workers: usize,
}

impl Run {
    fn manifest(&self, command: &str) -> Manifest {
        Manifest::new(command, self.config.seed, self.workers, &self.config_text)
    }

    fn write(&self, manifest: &mut Manifest, name: &str, bytes: &[u8]) -> CliResult<()> {
        fs::create_dir_all(&self.out)
            .map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", self.out.display())))?;
        let path = self.out.join(name);
        fs::write(&path, bytes).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))?;
        manifest.add(name, bytes);
        debug!("wrote {}", path.display());
        Ok(())
    }

    fn finish(&self, manifest: Manifest, stem: &str) -> CliResult<()> {
        let json = manifest.to_json();
        let mut scratch = Manifest::new("", 0, 0, "");
        self.write(&mut scratch, &format!("{stem}.manifest.json"), json.as_bytes())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if cli.global.quiet {
        log::LevelFilter::Error
    } else {
        match cli.global.verbose {
            0 => log::LevelFilter::Info,
            1 => log::LevelFilter::Debug,
            _ => log::LevelFilter::Trace,
        }
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .format_target(false)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let g = cli.global;
    if let Some(w) = g.workers {
        if w == 0 {
            return Err(Failure::Usage("--workers must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    let config_text = match &g.config {
        Some(p) => fs::read_to_string(p)
            .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", p.display())))?,
        None => String::new(),
    };
    let mut config = ExperimentConfig::from_toml_str(&config_text)?;
    if let Some(s) = g.seed {
        config.seed = s;
        config.study.seed = s;
    }
    let run = Run {
        config,
        config_text,
        out: g.out,
        workers: rayon::current_num_threads(),
    };
    match cli.command {
        Command::Synth => synth(&run),
        Command::Eval { policy } => eval(&run, policy.as_deref()),
        Command::Simulate {
            policy,
            fixture,
            trials,
            log,
        } => simulate(&run, policy.as_deref(), fixture, trials, log),
        Command::CheckCert { fixture } => check_cert(&run, fixture),
        Command::Study {
            paper_scale,
            repetitions,
        } => study(&run, paper_scale, repetitions),
        Command::Oracle {
            duality,
            game,
            tolerance,
        } => oracle(&run, duality, game, tolerance),
    }
}

fn samples_csv(samples: &[Vec<f64>]) -> String {
    let mut out = String::from("sample,w\n");
    for (i, w) in samples.iter().enumerate() {
        let cols: Vec<String> = w.iter().map(|v| v.to_string()).collect();
        out.push_str(&format!("{i},{}\n", cols.join(" ")));
    }
    out
}

fn synthesize(run: &Run, manifest: &mut Manifest) -> CliResult<PolicyTable> {
    let c = &run.config;
    let model = c.build_model()?;
    let kind = c.spec_kind(&model);
    let grid = c.state_grid(&model)?;
    let (amb, samples) = c.ambiguity(&model)?;
    if let Some(s) = samples {
        run.write(manifest, "nominal_samples.csv", samples_csv(&s).as_bytes())?;
    }
    info!(
        "synthesizing {} ({kind}) on {} nodes, radius {}, {} nominal atoms",
        model.name,
        grid.len(),
        amb.radius(),
        amb.nominal().len()
    );
    let (vg, policy) = value_iteration_with(&model, &amb, &grid, &c.solver, kind, &c.synthesis_options())?;
    if model.init().bounding_box().is_some() {
        let (v, x) = min_over_initial(&vg, &model, c.grid.resolution)?;
        info!("min robust value over X0: {v:.6} at {x:?}");
    }
    run.write(manifest, "values.csv", value_grid_csv(&vg).as_bytes())?;
    run.write(manifest, "policy.csv", policy_csv(&policy).as_bytes())?;
    run.write(manifest, "values.bin", &encode_value_grid(&vg))?;
    run.write(manifest, "policy.bin", &encode_policy(&policy))?;
    Ok(policy)
}

fn synth(run: &Run) -> CliResult<()> {
    let mut m = run.manifest("synth");
    synthesize(run, &mut m)?;
    run.finish(m, "synth")
}

fn read_policy(path: &Path) -> CliResult<PolicyTable> {
    let bytes = fs::read(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    Ok(decode_policy(&bytes)?)
}

fn eval(run: &Run, policy: Option<&Path>) -> CliResult<()> {
    let c = &run.config;
    let mut m = run.manifest("eval");
    let policy = match policy {
        Some(p) => read_policy(p)?,
        None => synthesize(run, &mut m)?,
    };
    let model = c.build_model()?;
    let kind = c.spec_kind(&model);
    let grid = c.state_grid(&model)?;
    let dist = c.truth(&model)?.discretize(c.simulation.evaluation_atoms)?;
    let vg = evaluate_fixed_distribution_with(&model, &policy, &dist, &grid, kind, c.grid.interpolation)?;
    let (v, x) = min_over_initial(&vg, &model, c.grid.resolution)?;
    let summary = format!(
        "exact evaluation under {} atoms: min over X0 = {v:.6} at {x:?}\n",
        dist.len()
    );
    print!("{summary}");
    run.write(&mut m, "eval_values.csv", value_grid_csv(&vg).as_bytes())?;
    run.write(&mut m, "eval_summary.txt", summary.as_bytes())?;
    run.finish(m, "eval")
}

fn resolve_certificate(run: &Run, fixture: Option<String>) -> CliResult<ResolvedCertificate> {
    let mut c = run.config.clone();
    if fixture.is_some() {
        c.certificate.fixture = fixture;
    }
    Ok(c.certificate()?)
}

fn simulate(
    run: &Run,
    policy: Option<&Path>,
    fixture: Option<String>,
    trials: Option<usize>,
    log_all: bool,
) -> CliResult<()> {
    let c = &run.config;
    let mut m = run.manifest("simulate");
    let trials = trials.unwrap_or(c.simulation.trials);
    let use_certificate = fixture.is_some() || (policy.is_none() && (c.certificate.fixture.is_some() || c.certificate.v_bar.is_some()));
    let report = if use_certificate {
        let cert = resolve_certificate(run, fixture)?;
        let truth = match &c.simulation.distribution {
            Some(d) => d.build(&cert.model)?,
            None => cert.truth.clone(),
        };
        let mut sim = SimulationConfig::new(trials, c.seed, truth, drsynth::synthesis::SpecKind::Safety);
        sim.initial = c.simulation.initial.clone();
        sim.log_trajectories = log_all || c.simulation.log_trajectories;
        info!("simulating certificate control `{}` for {trials} trials", cert.name);
        monte_carlo(&cert.model, PolicySource::Certificate(&cert.candidate), &sim)?
    } else {
        let table = match policy {
            Some(p) => read_policy(p)?,
            None => synthesize(run, &mut m)?,
        };
        let model = c.build_model()?;
        let mut sim = SimulationConfig::new(trials, c.seed, c.truth(&model)?, c.spec_kind(&model));
        sim.initial = c.simulation.initial.clone();
        sim.log_trajectories = log_all || c.simulation.log_trajectories;
        info!("simulating policy table for {trials} trials");
        monte_carlo(&model, PolicySource::Table(&table), &sim)?
    };
    print!("{}", report.to_text());
    run.write(&mut m, "simulation.txt", report.to_text().as_bytes())?;
    if !report.trajectories.is_empty() {
        run.write(&mut m, "trajectories.csv", report.trajectories_csv().as_bytes())?;
    }
    run.finish(m, "simulate")
}

fn check_cert(run: &Run, fixture: Option<String>) -> CliResult<()> {
    let cert = resolve_certificate(run, fixture)?;
    let mut m = run.manifest("check-cert");
    info!(
        "checking `{}` with radius {}, order {}, {} nominal atoms",
        cert.name,
        cert.ambiguity.radius(),
        cert.ambiguity.order(),
        cert.ambiguity.nominal().len()
    );
    let report = check_drcbc(
        &cert.candidate,
        &cert.model,
        &cert.ambiguity,
        &cert.verify_box,
        &cert.grid,
        &run.config.solver,
    )?;
    let bound = safety_lower_bound(&cert.candidate, cert.model.horizon(), cert.candidate.delta());
    let text = format!(
        "{}safety lower bound over T = {} from delta: {bound:.6}\n",
        report.to_text(),
        cert.model.horizon()
    );
    print!("{text}");
    run.write(&mut m, "certificate_report.txt", text.as_bytes())?;
    run.write(&mut m, "certificate_report.csv", report.to_csv().as_bytes())?;
    run.finish(m, "check-cert")?;
    if report.overall {
        Ok(())
    } else {
        let failed: Vec<&str> = report.failed().map(|r| r.condition.id()).collect();
        Err(Failure::Check(format!("certificate conditions failed: {}", failed.join(", "))))
    }
}

fn study(run: &Run, paper_scale: bool, repetitions: Option<usize>) -> CliResult<()> {
    let mut s = run.config.study.clone();
    if paper_scale {
        s = s.paper_scale();
    }
    if let Some(r) = repetitions {
        s.repetitions = r;
    }
    let mut m = run.manifest("study");
    info!("study: {} groups x {} repetitions", s.groups.len(), s.repetitions);
    let report = run_group_study(&s)?;
    print!("{}", report.to_text());
    run.write(&mut m, "study_repetitions.csv", report.repetitions_csv().as_bytes())?;
    run.write(&mut m, "study_groups.csv", report.groups_csv().as_bytes())?;
    run.finish(m, "study")
}

fn oracle(run: &Run, duality: usize, game: usize, tolerance: f64) -> CliResult<()> {
    let mut m = run.manifest("oracle");
    let report = run_oracle_suite(run.config.seed, duality, game, &run.config.solver)?;
    print!("{}", report.to_text());
    run.write(&mut m, "oracle.txt", report.to_text().as_bytes())?;
    run.finish(m, "oracle")?;
    if report.passed(tolerance) {
        Ok(())
    } else {
        Err(Failure::Check(format!("oracle discrepancies exceed {tolerance:e}")))
    }
}
