use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use absynth_core::config::{pendulum_default_config, ProjectConfig, SystemConfig};
use absynth_core::convexity::Horizon;
use absynth_core::error::Error;
use absynth_core::pipeline::{
    certify, render_phase_plot, trajectory_csv, write_json, write_strategy,
    write_transition_system, Pipeline,
};
use absynth_core::supervisor::ClosedLoopRun;

/// Exit codes: 0 success, 2 certificate failure, 3 synthesis infeasibility,
/// 1 anything else.
const EXIT_CERT: u8 = 2;
const EXIT_SYNTH: u8 = 3;

#[derive(Parser)]
#[command(
    name = "absynth",
    version,
    about = "Finite-state abstractions and supervisor synthesis for sampled nonlinear systems"
)]
struct Cli {
    /// Project config JSON; defaults to the built-in pendulum study
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override a config leaf by dotted path, e.g. --set abstraction.n_horizon=2
    #[arg(short = 's', long = "set", global = true)]
    set: Vec<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evaluate the convexity certificates and the chosen superset radius
    Certify,
    /// Build the abstraction for every horizon up to N and report statistics
    Abstract,
    /// Synthesize a worst-case supervisor and write the strategy file
    Synthesize,
    /// Run the closed loop from one or more initial states
    Simulate {
        /// Initial state "x1,x2"; repeatable. Defaults to the config start.
        #[arg(long = "x0")]
        x0: Vec<String>,
    },
    /// Emit the phase-plane figure without writing other artifacts
    Plot,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(Error::ConditionsViolated(msg)) => {
            eprintln!("certificate failure: {msg}");
            ExitCode::from(EXIT_CERT)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(cli: &Cli) -> Result<ProjectConfig, Error> {
    let src = match &cli.config {
        Some(path) => std::fs::read_to_string(path)?,
        None => pendulum_default_config().to_json(),
    };
    ProjectConfig::from_json(&src, &cli.set)
}

fn run(cli: &Cli) -> Result<ExitCode, Error> {
    let cfg = load_config(cli)?;
    match &cli.cmd {
        Cmd::Certify => cmd_certify(cfg),
        Cmd::Abstract => cmd_abstract(cfg),
        Cmd::Synthesize => cmd_synthesize(cfg),
        Cmd::Simulate { x0 } => cmd_simulate(cfg, x0),
        Cmd::Plot => cmd_plot(cfg),
    }
}

fn horizon_label(h: &Horizon) -> String {
    match h {
        Horizon::Steps(k) => format!("{k} steps"),
        Horizon::Time(t) => format!("t = {t:.3}"),
    }
}

fn cmd_certify(cfg: ProjectConfig) -> Result<ExitCode, Error> {
    let report = certify(&cfg)?;
    for (k, c) in report.certificates.iter().enumerate() {
        let tag = if c.estimated { "ESTIMATED" } else { "closed form" };
        let r = if c.r_max.is_infinite() {
            "unbounded".to_string()
        } else {
            format!("{:.4}", c.r_max)
        };
        println!("N={}: r_max = {r} ({tag}, {})", k + 1, horizon_label(&c.horizon));
    }
    match report.requested_radius {
        Some(r) => println!(
            "admissible superset radius {r}: {}",
            if report.admitted { "OK" } else { "FAIL" }
        ),
        None => println!("auto superset radius: {:.4}", report.resolved_radius),
    }
    if cfg.output.formats.iter().any(|f| f == "json") {
        let path = PathBuf::from(&cfg.output.dir).join("certify.json");
        write_json(&path, &report)?;
        println!("wrote {}", path.display());
    }
    Ok(if report.admitted {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_CERT)
    })
}

fn cmd_abstract(cfg: ProjectConfig) -> Result<ExitCode, Error> {
    let n = cfg.abstraction.n_horizon;
    let p = Pipeline::new(cfg)?;
    println!(
        "{:>3} {:>14} {:>18} {:>10} {:>12}",
        "N", "half-spaces", "feasibility tests", "states", "transitions"
    );
    for k in 1..=n {
        let abs = p.abstraction(k)?;
        let s = &abs.stats;
        println!(
            "{k:>3} {:>14} {:>18} {:>10} {:>12}",
            s.half_space_solves, s.feasibility_tests, s.states, s.transitions
        );
        if p.wants("json") {
            let path = p.out_dir().join(format!("transition-system-{k}.json"));
            write_transition_system(&path, &p.q, &abs)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_synthesize(cfg: ProjectConfig) -> Result<ExitCode, Error> {
    let n = cfg.abstraction.n_horizon;
    let p = Pipeline::new(cfg)?;
    let abs = p.abstraction(n)?;
    let strat = p.synthesize(&abs)?;
    if p.wants("json") {
        let path = p.out_dir().join("strategy.json");
        write_strategy(&path, &abs, &strat)?;
        println!("wrote {}", path.display());
    }
    if strat.winnable {
        println!(
            "winnable from cells {:?}, worst-case bound {} samples",
            strat.start,
            strat.bound.unwrap()
        );
        Ok(ExitCode::SUCCESS)
    } else {
        println!("not winnable from cells {:?} at N = {n}", strat.start);
        Ok(ExitCode::from(EXIT_SYNTH))
    }
}

fn parse_x0(spec: &str) -> Result<Vec<f64>, Error> {
    let parts: Vec<f64> = spec
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| Error::Config(format!("--x0 '{spec}' is not \"x1,x2\"")))?;
    if parts.len() != 2 {
        return Err(Error::Config(format!("--x0 '{spec}' needs two components")));
    }
    Ok(parts)
}

fn ellipse_omega(cfg: &ProjectConfig) -> Option<f64> {
    match &cfg.system {
        SystemConfig::Pendulum { omega, .. } => Some(*omega),
        _ => None,
    }
}

fn cmd_simulate(cfg: ProjectConfig, x0_specs: &[String]) -> Result<ExitCode, Error> {
    let n = cfg.abstraction.n_horizon;
    let p = Pipeline::new(cfg)?;
    let abs = p.abstraction(n)?;
    let strat = p.synthesize(&abs)?;
    if !strat.winnable {
        println!("not winnable from cells {:?} at N = {n}; nothing to simulate", strat.start);
        return Ok(ExitCode::from(EXIT_SYNTH));
    }
    let x0s: Vec<Vec<f64>> = if x0_specs.is_empty() {
        vec![p.cfg.synthesis.start.to_vec()]
    } else {
        x0_specs.iter().map(|s| parse_x0(s)).collect::<Result<_, _>>()?
    };
    let runs = p.simulate(&abs, &strat, &x0s)?;
    let t_sample = match &p.cfg.system {
        SystemConfig::Pendulum { t_sample, .. } => *t_sample,
        SystemConfig::Expression { t_sample, .. } => *t_sample,
        SystemConfig::Plugin { .. } => 1.0,
    };
    for (i, run) in runs.iter().enumerate() {
        match run.reached {
            Some(k) => println!("run {i}: reached the target after {k} samples"),
            None => println!("run {i}: target not reached within {} samples", p.cfg.synthesis.max_steps),
        }
        if p.wants("csv") {
            let path = p.out_dir().join(format!("trajectory-{i}.csv"));
            std::fs::create_dir_all(p.out_dir())?;
            std::fs::write(&path, trajectory_csv(t_sample, &p.q, run))?;
            println!("wrote {}", path.display());
        }
    }
    write_plot(&p, &strat, &runs)?;
    Ok(ExitCode::SUCCESS)
}

fn write_plot(p: &Pipeline, strat: &absynth_core::supervisor::Strategy, runs: &[ClosedLoopRun]) -> Result<(), Error> {
    if !p.wants("svg") {
        return Ok(());
    }
    let svg = render_phase_plot(
        &p.q,
        Some(strat),
        &strat.target,
        ellipse_omega(&p.cfg),
        runs,
    );
    let path = p.out_dir().join("phase.svg");
    std::fs::create_dir_all(p.out_dir())?;
    std::fs::write(&path, svg)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_plot(cfg: ProjectConfig) -> Result<ExitCode, Error> {
    let n = cfg.abstraction.n_horizon;
    let p = Pipeline::new(cfg)?;
    let abs = p.abstraction(n)?;
    let strat = p.synthesize(&abs)?;
    let runs = if strat.winnable {
        p.simulate(&abs, &strat, &[p.cfg.synthesis.start.to_vec()])?
    } else {
        Vec::new()
    };
    write_plot(&p, &strat, &runs)?;
    Ok(ExitCode::SUCCESS)
}
