use std::process::ExitCode;

use clap::Parser;
use pognac_cli::{run, Cli};

fn main() -> ExitCode {
    let invocation: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    match run(cli, invocation) {
        Ok(m) => {
            for o in &m.outputs {
                println!("{}\t{}", o.sha256, o.file);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
