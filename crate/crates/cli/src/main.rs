//! `slm`: command-line front end for the spatial logistic model.

mod commands;
mod config;
mod output;
mod plot;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand as ClapSubcommand};
use serde_json::Value;

use commands::{CliError, Ctx};
use config::{RunConfig, Subcommand};
use output::{Manifest, RunDir};

#[derive(Parser)]
#[command(name = "slm", version, about = "Simulate and analyse the spatial logistic birth-death model")]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Random seed; overrides `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of independent replicas; overrides `replicas`.
    #[arg(long, global = true)]
    replicas: Option<u64>,
    /// Output root; runs go to `<out>/<subcommand>/<label>/`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Run label; defaults to a UTC timestamp.
    #[arg(long, global = true)]
    label: Option<String>,
    /// Also write SVG plots.
    #[arg(long, global = true)]
    plots: bool,
    /// Set a config value by dot path, e.g. `model.m=0.3`. Repeatable.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(ClapSubcommand, Clone, Copy)]
enum Command {
    /// Exact simulation of independent replicas.
    Simulate,
    /// Correlation estimates from a `simulate` run (`est.run`).
    Estimate,
    /// Integrate the closed radial correlation hierarchy.
    Hierarchy,
    /// Integrate the kinetic (mean-field) equation on a grid.
    Kinetic,
    /// Run the operator verification battery on a lattice fixture.
    Verify,
}

impl From<Command> for Subcommand {
    fn from(c: Command) -> Self {
        match c {
            Command::Simulate => Subcommand::Simulate,
            Command::Estimate => Subcommand::Estimate,
            Command::Hierarchy => Subcommand::Hierarchy,
            Command::Kinetic => Subcommand::Kinetic,
            Command::Verify => Subcommand::Verify,
        }
    }
}

/// Config document after file loading, `--override`s and explicit flags, in
/// that order of precedence (later wins).
fn assemble(cli: &Cli) -> Result<Value, CliError> {
    let mut root = match &cli.config {
        Some(path) => config::load(path).map_err(CliError::Config)?,
        None => Value::Object(Default::default()),
    };
    let mut errors = Vec::new();
    for spec in &cli.overrides {
        if let Err(e) = config::apply_override(&mut root, spec) {
            errors.push(e);
        }
    }
    if root.is_object() {
        let map = root.as_object_mut().unwrap();
        if let Some(s) = cli.seed {
            map.insert("seed".into(), s.into());
        }
        if let Some(r) = cli.replicas {
            map.insert("replicas".into(), r.into());
        }
        if let Some(o) = &cli.out {
            map.insert("out".into(), o.to_string_lossy().into_owned().into());
        }
        if let Some(l) = &cli.label {
            map.insert("label".into(), l.clone().into());
        }
    }
    if errors.is_empty() {
        Ok(root)
    } else {
        Err(CliError::Config(errors))
    }
}

/// Bytes of every input file the run depends on, for the manifest hash.
fn input_files(cfg: &RunConfig) -> std::io::Result<Vec<Vec<u8>>> {
    let mut paths: Vec<PathBuf> = Vec::new();
    if let Some(est) = &cfg.est {
        paths.push(est.run.join("summary.json"));
        if let Some(s) = &est.summary {
            paths.extend(s.files.iter().map(|f| est.run.join(f)));
        }
    }
    if let Some(k0) = cfg.verify.as_ref().and_then(|v| v.k0.clone()) {
        paths.push(k0);
    }
    paths.iter().map(std::fs::read).collect()
}

fn execute(cmd: Subcommand, cfg: &RunConfig, dir: &mut RunDir, plots: bool) -> Result<(), CliError> {
    let mut ctx = Ctx { cfg, dir, plots };
    match cmd {
        Subcommand::Simulate => commands::simulate(&mut ctx),
        Subcommand::Estimate => commands::estimate(&mut ctx),
        Subcommand::Hierarchy => commands::hierarchy(&mut ctx),
        Subcommand::Kinetic => commands::kinetic(&mut ctx),
        Subcommand::Verify => commands::verify(&mut ctx),
    }
}

fn run(cli: &Cli) -> Result<PathBuf, CliError> {
    let started = Instant::now();
    let started_utc = chrono::Utc::now().to_rfc3339();
    let cmd = Subcommand::from(cli.command);
    let root = assemble(cli)?;
    let base = cli
        .config
        .as_deref()
        .and_then(Path::parent)
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let cfg = config::validate(&root, cmd, &base).map_err(CliError::Config)?;

    let resolved = serde_json::to_string_pretty(&cfg).expect("config serializes") + "\n";
    let inputs = input_files(&cfg)?;
    let mut chunks: Vec<&[u8]> = vec![resolved.as_bytes()];
    chunks.extend(inputs.iter().map(Vec::as_slice));
    let inputs_sha256 = output::sha256_hex(&chunks);

    let label = cfg.label.clone().unwrap_or_else(output::timestamp_label);
    let mut dir = RunDir::create(&cfg.out, cmd.name(), &label)?;
    dir.write("resolved_config.json", &resolved)?;
    let result = execute(cmd, &cfg, &mut dir, cli.plots);

    let manifest = Manifest {
        subcommand: cmd.name().into(),
        status: result.as_ref().map_or_else(|e| e.status().into(), |_| "ok".into()),
        exit_code: result.as_ref().map_or_else(CliError::exit_code, |_| 0),
        error: result.as_ref().err().map(ToString::to_string),
        inputs_sha256,
        seed: cfg.seed,
        versions: output::versions(),
        started_utc,
        wall_time_s: started.elapsed().as_secs_f64(),
        command_line: std::env::args().collect(),
        outputs: dir.outputs.clone(),
    };
    dir.write_json("manifest.json", &manifest)?;
    result.map(|_| dir.path)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(path) => {
            println!("{}", path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            match &e {
                CliError::Config(errs) => {
                    eprintln!("invalid configuration ({} problem{}):", errs.len(), if errs.len() == 1 { "" } else { "s" });
                    for err in errs {
                        eprintln!("  {err}");
                    }
                }
                other => eprintln!("error: {other}"),
            }
            ExitCode::from(e.exit_code())
        }
    }
}
