use std::process::ExitCode;

use clap::Parser;
use relayfb_cli::{execute, output_path, write_output, Cli, CliError};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = output_path(&cli).and_then(|out| {
        let text = execute(cli)?;
        write_output(out.as_deref(), &text)
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("relayfb: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &CliError) -> u8 {
    err.exit_code() as u8
}
