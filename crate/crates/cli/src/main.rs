//! `toda-lab`: experiment driver for the Toda lattice laboratory.
//!
//! Every subcommand reads an optional JSON config, applies command-line
//! overrides, runs its replicas in parallel (capped by
//! `TODA_LAB_THREADS`), and writes CSV/JSON artifacts into the output
//! directory. Exit codes: 0 success, 2 configuration error, 3 runtime
//! numerical failure.

mod config;
mod experiments;
mod output;

use clap::{Args, Parser, Subcommand};
use config::ExperimentConfig;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "toda-lab", version, about = "Toda lattice thermal-equilibrium laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Overrides {
    /// JSON config file; flags below override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long, short = 'n')]
    n: Option<usize>,
    #[arg(long, short = 't')]
    t: Option<f64>,
    #[arg(long)]
    step: Option<f64>,
    /// Integration scheme: rk4 | rk45.
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long)]
    abs_tol: Option<f64>,
    #[arg(long)]
    sample_every: Option<f64>,
    /// Explicit localization threshold; default is (2N)^-1.
    #[arg(long)]
    zeta: Option<f64>,
    /// Bulk collar: "default", "fraction:F", or "sites:K".
    #[arg(long)]
    collar: Option<String>,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// First stream id; replica r uses stream_offset + r.
    #[arg(long)]
    stream_offset: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Thermal sampling moments and spacing statistics.
    Sample(Overrides),
    /// Integrate the flow; conserved-quantity and eigenvalue drift.
    Evolve(Overrides),
    /// Spectral diagnostics, gap statistics, and density estimate.
    Spectrum(Overrides),
    /// Localization-center bijections, witnesses, and decay rates.
    Centers(Overrides),
    /// Local charges: continuity order study and window sums.
    Charges(Overrides),
    /// Asymptotic scattering relation and first-entry evolution.
    Scattering(Overrides),
    /// Boundary-entry identity and transfer-matrix checks.
    Thouless(Overrides),
    /// Effective-velocity solve versus measured velocities.
    Velocity(Overrides),
    /// Open-versus-torus finite-speed comparison.
    CompareDomains(Overrides),
    /// Invariance of the periodic thermal marginals.
    Invariance(Overrides),
}

fn build_config(name: &str, o: &Overrides) -> Result<ExperimentConfig, String> {
    let mut cfg = match &o.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    cfg.experiment = name.to_string();
    if let Some(v) = o.beta {
        cfg.beta = v;
    }
    if let Some(v) = o.theta {
        cfg.theta = v;
    }
    if let Some(v) = o.n {
        cfg.n = v;
    }
    if let Some(v) = o.t {
        cfg.t = v;
    }
    if let Some(v) = o.step {
        cfg.step = v;
    }
    if let Some(v) = &o.scheme {
        cfg.scheme = v.clone();
    }
    if let Some(v) = o.rel_tol {
        cfg.rel_tol = v;
    }
    if let Some(v) = o.abs_tol {
        cfg.abs_tol = v;
    }
    if let Some(v) = o.sample_every {
        cfg.sample_every = v;
    }
    if let Some(v) = o.zeta {
        cfg.zeta_mode = config::ZetaMode::Explicit(v);
    }
    if let Some(v) = &o.collar {
        cfg.collar_mode = config::CollarMode(v.clone());
    }
    if let Some(v) = o.replicas {
        cfg.replicas = v;
    }
    if let Some(v) = o.seed {
        cfg.seed = v;
    }
    if let Some(v) = o.stream_offset {
        cfg.stream_offset = v;
    }
    if let Some(v) = &o.output_dir {
        cfg.output_dir = v.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() {
    let cli = Cli::parse();
    let (name, overrides, runner): (
        &str,
        &Overrides,
        fn(&ExperimentConfig) -> experiments::RunResult,
    ) = match &cli.command {
        Command::Sample(o) => ("sample", o, experiments::run_sample),
        Command::Evolve(o) => ("evolve", o, experiments::run_evolve),
        Command::Spectrum(o) => ("spectrum", o, experiments::run_spectrum),
        Command::Centers(o) => ("centers", o, experiments::run_centers),
        Command::Charges(o) => ("charges", o, experiments::run_charges),
        Command::Scattering(o) => ("scattering", o, experiments::run_scattering),
        Command::Thouless(o) => ("thouless", o, experiments::run_thouless),
        Command::Velocity(o) => ("velocity", o, experiments::run_velocity),
        Command::CompareDomains(o) => ("compare-domains", o, experiments::run_compare_domains),
        Command::Invariance(o) => ("invariance", o, experiments::run_invariance),
    };
    let cfg = match build_config(name, overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("configuration error: {e}");
            std::process::exit(2);
        }
    };
    if let Err(e) = runner(&cfg) {
        eprintln!("runtime failure in '{name}': {e}");
        // flag partial outputs for downstream tooling
        let flag = serde_json::json!({ "experiment": name, "status": "failed", "error": e });
        let _ = output::write_json(&cfg.output_dir.join("summary.json"), &flag);
        std::process::exit(3);
    }
}
