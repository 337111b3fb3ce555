use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kslab::experiments::{run, write_outputs, ExperimentConfig, ExperimentKind};
use kslab::KsError;

/// Keller–Segel convergence laboratory.
///
/// Exit codes: 0 all checks pass, 2 a check failed, 3 suspected blow-up,
/// 4 configuration error, 1 anything else (I/O).
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One PDE solve with snapshots and diagnostics.
    Run(Common),
    /// Local viscous vs mollified non-local solutions over ε.
    SweepEpsilon(Common),
    /// Cauchy check over decreasing σ.
    SweepSigma(Common),
    /// Shifted diffusion over decreasing η.
    SweepEta(Common),
    /// Particle system vs non-local PDE over N.
    Particles(Common),
    /// Porous-medium solver against the Barenblatt profile.
    PmeOracle(Common),
    /// Mollifier commutator ratios over ε.
    Commutator(Common),
}

#[derive(Args)]
struct Common {
    /// TOML config; the built-in preset is used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed; particle seeds become seed, seed+1, …
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads. Results do not depend on it.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Print the effective config and exit.
    #[arg(long)]
    print_config: bool,
}

impl Command {
    fn split(self) -> (ExperimentKind, Common) {
        match self {
            Command::Run(c) => (ExperimentKind::SingleRun, c),
            Command::SweepEpsilon(c) => (ExperimentKind::EpsilonSweep, c),
            Command::SweepSigma(c) => (ExperimentKind::SigmaSweep, c),
            Command::SweepEta(c) => (ExperimentKind::EtaSweep, c),
            Command::Particles(c) => (ExperimentKind::ParticleMeanfield, c),
            Command::PmeOracle(c) => (ExperimentKind::PmeOracle, c),
            Command::Commutator(c) => (ExperimentKind::Commutator, c),
        }
    }
}

fn config(kind: ExperimentKind, args: &Common) -> Result<ExperimentConfig, KsError> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::preset(kind),
    };
    if cfg.experiment != kind {
        return Err(KsError::Config(format!(
            "config is for `{}`, subcommand runs `{}`",
            cfg.experiment.name(),
            kind.name()
        )));
    }
    if let Some(seed) = args.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let (kind, args) = Cli::parse().command.split();
    if args.threads == 0 {
        eprintln!("error: --threads must be ≥ 1");
        return ExitCode::from(4);
    }
    #[cfg(feature = "parallel")]
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(args.threads).build_global() {
        eprintln!("error: thread pool: {e}");
        return ExitCode::from(1);
    }
    let cfg = match config(kind, &args).and_then(|c| c.validate().map(|_| c)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(4);
        }
    };
    if args.print_config {
        print!("{}", cfg.to_toml());
        return ExitCode::SUCCESS;
    }
    let outcome = match run(&cfg) {
        Ok(o) => o,
        Err(e @ (KsError::Config(_) | KsError::Invalid(_))) => {
            eprintln!("error: {e}");
            return ExitCode::from(4);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if let Err(e) = write_outputs(&cfg, &outcome, &cfg.output_dir) {
        eprintln!("error: writing {}: {e}", cfg.output_dir.display());
        return ExitCode::from(1);
    }
    print!("{}", outcome.report.summary());
    let verdict = outcome.report.verdict();
    println!("{} -> {:?} ({})", kind.name(), verdict, cfg.output_dir.display());
    ExitCode::from(verdict.exit_code() as u8)
}
