use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ladderfp_cli::commands::figure;
use ladderfp_cli::{parse_config, run, CliError, CliResult, Command, RunConfig};

/// Exact and stochastic dynamics of the magnetization difference in a spin ladder.
#[derive(Parser, Debug)]
#[command(name = "ladderfp", version)]
struct Cli {
    /// Run configuration (`key = value` lines); defaults apply when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the `out` key).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for the parallel loops.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Largest dimension handed to the dense eigensolver.
    #[arg(long, global = true)]
    dense_ceiling: Option<usize>,
    /// Spin operator normalization: half or pauli.
    #[arg(long, global = true)]
    convention: Option<String>,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Sector dimension and the X-subspace table.
    Info,
    /// P_X(t) of the configured initial state.
    EvolveQuantum,
    /// Naive master equation from a point mass at initial_x.
    EvolveStochastic,
    /// TCL2 rates, the initial-value check and the TCL master equation.
    Tcl,
    /// Rate scale from the TCL2 plateaus.
    FitGamma,
    /// Mean-trajectory deviations for the mixed and random initial states.
    Delta,
    /// Fine and coarse structure of the rotated rung coupling.
    BlockStructure,
    /// Eigenstate diagonals of x and x^2 in the energy window.
    Eth,
    /// Quantum vs naive and TCL master equations for the configured state.
    Compare,
    /// Artifacts behind one figure (1..=7).
    ReproduceFigure { figure: u8 },
}

const CORETYPE_VAR: &str = "OPENBLAS_CORETYPE";

/// Some OpenBLAS builds pick faulty kernels on recent CPUs; pin a safe core
/// type by re-running the process with it set.
fn reexec_with_safe_blas() -> Option<ExitCode> {
    if std::env::var_os(CORETYPE_VAR).is_some() {
        return None;
    }
    let exe = std::env::current_exe().ok()?;
    let status = std::process::Command::new(exe)
        .args(std::env::args_os().skip(1))
        .env(CORETYPE_VAR, "Haswell")
        .status()
        .ok()?;
    Some(ExitCode::from(status.code().unwrap_or(2).clamp(0, 255) as u8))
}

fn load(cli: &Cli) -> CliResult<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))?;
            parse_config(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.override_key("seed", &seed.to_string())?;
    }
    if let Some(d) = cli.dense_ceiling {
        config.override_key("dense_ceiling", &d.to_string())?;
    }
    if let Some(c) = &cli.convention {
        config.override_key("convention", c)?;
    }
    if let Some(out) = &cli.out {
        config.override_key("out", &out.display().to_string())?;
    }
    Ok(config)
}

fn execute(cli: Cli) -> CliResult<()> {
    let config = load(&cli)?;
    if let Some(k) = cli.threads {
        if k == 0 {
            return Err(CliError::validation("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::validation(e.to_string()))?;
    }
    ladderfp_core::dense_backend_check().map_err(|e| {
        CliError::Numerical(format!("dense eigensolver self-check failed ({e}); try {CORETYPE_VAR}=Haswell"))
    })?;
    let command = match cli.command {
        Sub::Info => Command::Info,
        Sub::EvolveQuantum => Command::EvolveQuantum,
        Sub::EvolveStochastic => Command::EvolveStochastic,
        Sub::Tcl => Command::Tcl,
        Sub::FitGamma => Command::FitGamma,
        Sub::Delta => Command::Delta,
        Sub::BlockStructure => Command::BlockStructure,
        Sub::Eth => Command::Eth,
        Sub::Compare => Command::Compare,
        Sub::ReproduceFigure { figure: n } => figure(n)?,
    };
    run(command, &config, &mut std::io::stdout().lock())
}

fn main() -> ExitCode {
    if let Some(code) = reexec_with_safe_blas() {
        return code;
    }
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ladderfp: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
