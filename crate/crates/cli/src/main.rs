use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use halo_choice_cli::{run, Cli, CliError};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::from_clap(e);
            eprintln!("{}", err.single_line());
            return ExitCode::from(err.exit_code());
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match run(cli, &mut out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", err.single_line());
            ExitCode::from(err.exit_code())
        }
    }
}
