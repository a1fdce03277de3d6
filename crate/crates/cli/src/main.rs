use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use finger_dyn::error::EXIT_OK;
use finger_dyn::{cmd_calibrate, cmd_compare, cmd_simulate, cmd_validate, parse_config, CliError, Options};
use finger_dyn_core::dynamics::ModelVariant;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    /// Integrate one run and write the trajectory CSV.
    Simulate,
    /// Run the seeded oracle sweeps.
    Validate,
    /// Run the full and reduced models side by side.
    Compare,
    /// Fit free parameters to a reference trajectory.
    Calibrate,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Variant {
    Full,
    Reduced,
}

#[derive(Debug, Parser)]
#[command(name = "finger-dyn", version, about = "Tendon-driven three-link finger dynamics")]
struct Args {
    command: Command,
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output file: trajectory CSV, report or fitted parameters.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    variant: Option<Variant>,
    /// Seed for the randomized checks.
    #[arg(long)]
    seed: Option<u64>,
    /// Check the inertia matrix with the uncorrected d11 expression.
    #[arg(long)]
    use_paper_d11: bool,
    /// Reference trajectory CSV for `calibrate`.
    #[arg(long)]
    reference: Option<PathBuf>,
}

fn run(args: Args) -> Result<(), CliError> {
    let cfg = parse_config(&args.config)?;
    let opts = Options {
        out: args.out,
        variant: args.variant.map(|v| match v {
            Variant::Full => ModelVariant::Full,
            Variant::Reduced => ModelVariant::Reduced,
        }),
        seed: args.seed,
        use_paper_d11: args.use_paper_d11,
        reference: args.reference,
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match args.command {
        Command::Simulate => cmd_simulate(&cfg, &opts, &mut out).map(drop),
        Command::Validate => cmd_validate(&cfg, &opts, &mut out).map(drop),
        Command::Compare => cmd_compare(&cfg, &opts, &mut out).map(drop),
        Command::Calibrate => cmd_calibrate(&cfg, &opts, &mut out).map(drop),
    }?;
    out.flush().ok();
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(()) => ExitCode::from(EXIT_OK as u8),
        Err(e) => {
            eprintln!("finger-dyn: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
