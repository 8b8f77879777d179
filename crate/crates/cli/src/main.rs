use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use tio_cli::{run, Cli, Failure};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let mut stdout = std::io::stdout().lock();
    match run(cli, &mut stdout) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("tio: {f}");
            if matches!(f, Failure::Usage(_)) {
                eprintln!("run `tio --help` for usage");
            }
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
