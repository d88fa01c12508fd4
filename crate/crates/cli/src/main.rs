use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use pilotwave::interactions::CoeffConvention;
use pilotwave::scenarios::{catalog, run_scenario};
use pilotwave_cli::config::RunConfig;
use pilotwave_cli::{output, snapshot, svg};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "pilotwave", version, about = "Pilot-wave trajectory ensembles for measurement scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Convention {
    Full,
    Bare,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its artifacts.
    Run {
        /// Scenario name; may come from --config instead.
        scenario: Option<String>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        dt: Option<f64>,
        /// Output directory [default: $PILOTWAVE_OUT/<scenario>, else out/<scenario>].
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        plots: bool,
        #[arg(long)]
        collapse_comparator: bool,
        #[arg(long, value_enum)]
        coeff_convention: Option<Convention>,
        /// TOML run configuration; command-line flags take precedence.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// List the scenario catalog.
    List {
        #[arg(long)]
        json: bool,
    },
    /// Check a TOML run configuration without running it.
    Validate { file: PathBuf },
}

/// Failure kinds mapped to exit codes.
enum Failure {
    Invalid(anyhow::Error),
    Assertions,
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Invalid(e)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::List { json } => list(json).map_err(Failure::from),
        Command::Validate { file } => validate(&file).map_err(Failure::from),
        Command::Run { scenario, n, seed, dt, out, plots, collapse_comparator, coeff_convention, config } => {
            let cfg = (|| -> Result<RunConfig> {
                let mut cfg = match &config {
                    Some(p) => RunConfig::load(p)?,
                    None => RunConfig::default(),
                };
                cfg.scenario = scenario.or(cfg.scenario);
                cfg.n = n.or(cfg.n);
                cfg.seed = seed.or(cfg.seed);
                cfg.dt = dt.or(cfg.dt);
                cfg.out = out.or(cfg.out);
                cfg.plots |= plots;
                cfg.model.collapse_comparator |= collapse_comparator;
                if let Some(c) = coeff_convention {
                    cfg.model.coeff_convention = match c {
                        Convention::Full => CoeffConvention::Full,
                        Convention::Bare => CoeffConvention::Bare,
                    };
                }
                Ok(cfg)
            })();
            match cfg {
                Ok(cfg) => run(&cfg),
                Err(e) => Err(Failure::Invalid(e)),
            }
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Assertions) => ExitCode::from(1),
        Err(Failure::Invalid(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

#[derive(Serialize)]
struct ListEntry {
    name: &'static str,
    anchor: &'static str,
    summary: &'static str,
}

fn list(json: bool) -> Result<()> {
    let entries: Vec<ListEntry> =
        catalog().into_iter().map(|e| ListEntry { name: e.name, anchor: e.anchor, summary: e.summary }).collect();
    if json {
        print!("{}", output::to_json(&entries)?);
    } else {
        let w = entries.iter().map(|e| e.name.len()).max().unwrap_or(0);
        let a = entries.iter().map(|e| e.anchor.len()).max().unwrap_or(0);
        for e in &entries {
            println!("{:w$}  {:a$}  {}", e.name, e.anchor, e.summary);
        }
    }
    Ok(())
}

fn validate(file: &Path) -> Result<()> {
    let spec = RunConfig::load(file)?.spec()?;
    println!("{}: ok ({}, n = {}, seed = {})", file.display(), spec.name, spec.n, spec.seed);
    Ok(())
}

fn out_dir(cfg: &RunConfig, scenario: &str) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| {
        std::env::var_os("PILOTWAVE_OUT").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out")).join(scenario)
    })
}

fn run(cfg: &RunConfig) -> Result<(), Failure> {
    let spec = cfg.spec()?;
    let dir = out_dir(cfg, &spec.name);
    log::info!("running {} with n = {}, seed = {}", spec.name, spec.n, spec.seed);
    let output = run_scenario(&spec, cfg.plots).with_context(|| format!("scenario {} failed", spec.name))?;
    fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;

    let mut artifacts = vec!["trajectories.csv".to_string()];
    let mut w = BufWriter::new(File::create(dir.join("trajectories.csv")).context("trajectories.csv")?);
    output::write_trajectories(&mut w, &output.run, &output.coord_names)?;
    w.flush().context("trajectories.csv")?;

    for (i, s) in output.snapshots.iter().enumerate() {
        let name = format!("snapshot_{i:02}_{}.pwsnap", s.name);
        let mut w = BufWriter::new(File::create(dir.join(&name)).with_context(|| name.clone())?);
        snapshot::write_snapshot(&mut w, s.t, &s.name, &s.field)?;
        w.flush().with_context(|| name.clone())?;
        artifacts.push(name);
    }
    if let Some(plot) = &output.plot {
        fs::write(dir.join("plot.svg"), svg::render(plot)).context("plot.svg")?;
        artifacts.push("plot.svg".into());
    }
    let mut report = output.report;
    artifacts.push("report.json".into());
    report.artifacts = artifacts;
    fs::write(dir.join("report.json"), output::to_json(&report)?).context("report.json")?;

    for a in &report.assertions {
        let measured = a.measured.map_or("n/a".to_string(), |m| format!("{m:.6e}"));
        println!(
            "{} {:28} measured {} {} {:e}",
            if a.passed { "PASS" } else { "FAIL" },
            a.name,
            measured,
            a.relation,
            a.threshold
        );
    }
    println!("{}: {} ({})", spec.name, if report.passed { "passed" } else { "FAILED" }, dir.display());
    if report.passed {
        Ok(())
    } else {
        Err(Failure::Assertions)
    }
}
