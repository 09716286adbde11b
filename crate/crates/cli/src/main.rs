mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use args::{expand_config, Cli, Command};
use commands::NotConverged;

const EXIT_RUNTIME: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<NotConverged>().is_some() {
        return EXIT_NOT_CONVERGED;
    }
    match err.downcast_ref::<levspec::Error>() {
        Some(levspec::Error::EnsembleNonConvergence { .. }) => EXIT_NOT_CONVERGED,
        Some(e) if e.is_validation() => EXIT_VALIDATION,
        _ => EXIT_RUNTIME,
    }
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    commands::log::set_level(cli.verbose);
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(levspec::Error::InvalidConfig("--threads must be >= 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match &cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Psd(a) => commands::psd(a),
        Command::Theory(a) => commands::theory(a),
        Command::Fit(a) => commands::fit(a),
        Command::Profile(a) => commands::profile(a),
        Command::Ensemble(a) => commands::ensemble(a),
    }
}

fn main() -> ExitCode {
    let argv = match expand_config(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("levspec: {e:#}");
            return ExitCode::from(exit_code(&e));
        }
    };
    // Usage errors exit with 2 through clap.
    let cli = Cli::parse_from(argv);
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("levspec: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
