use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wschaos_cli::commands::{cmd_basis, cmd_compare, cmd_evolve, cmd_lyapunov, cmd_resonances, cmd_section, Context};
use wschaos_cli::config::{RunConfig, SolverChoice};
use wschaos_cli::CliError;

/// Wannier-Stark condensate dynamics: basis, GPE and mode-model runs, and
/// phase-space analysis.
#[derive(Parser)]
#[command(name = "wschaos", version, about)]
struct Cli {
    /// More log output; repeat for debug detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML run configuration.
    #[arg(short, long)]
    config: PathBuf,
    /// Override a config value, e.g. `--set run.tol=1e-12`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory; same as `--set output.dir=...`.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the Wannier-Stark basis and report the overlap couplings.
    Basis(ConfigArgs),
    /// Evolve the preparation with the GPE, the mode model, or both.
    Evolve {
        #[command(flatten)]
        args: ConfigArgs,
        /// Defaults to `run.solver` from the config.
        #[arg(long, value_enum)]
        solver: Option<SolverChoice>,
    },
    /// Poincaré section of the three-mode model.
    Section(ConfigArgs),
    /// Largest Lyapunov exponents across a line of launches.
    Lyapunov(ConfigArgs),
    /// Predicted resonance loci of the decoupled flow.
    Resonances(ConfigArgs),
    /// RMS population difference of two trajectory tables.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-1,0,1")]
        wells: Vec<i32>,
        /// JSON report file.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

fn context(args: &ConfigArgs) -> Result<Context, CliError> {
    let mut overrides = args.overrides.clone();
    if let Some(out) = &args.out {
        overrides.push(format!("output.dir={}", toml::Value::String(out.display().to_string())));
    }
    let config = RunConfig::load(&args.config, &overrides)?;
    for o in &overrides {
        log::info!("override {o}");
    }
    Ok(Context::new(config, overrides))
}

fn run(cli: Cli) -> Result<String, CliError> {
    match &cli.command {
        Command::Basis(a) => cmd_basis(&context(a)?),
        Command::Evolve { args, solver } => {
            let ctx = context(args)?;
            let solver = solver.unwrap_or(ctx.config.run.solver);
            cmd_evolve(&ctx, solver)
        }
        Command::Section(a) => cmd_section(&context(a)?),
        Command::Lyapunov(a) => cmd_lyapunov(&context(a)?),
        Command::Resonances(a) => cmd_resonances(&context(a)?),
        Command::Compare { a, b, wells, report } => cmd_compare(a, b, wells, report.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    match run(cli) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
