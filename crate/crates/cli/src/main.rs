use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use flowpose_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(out) => {
            print!("{out}");
            let _ = std::io::stdout().flush();
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("flowpose: {e}");
            ExitCode::from(2)
        }
    }
}
