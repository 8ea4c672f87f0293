use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use fslpn_cli::{run, Cli, OUT_DIR_ENV};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let env_out = std::env::var(OUT_DIR_ENV).ok();
    match run(&cli, env_out.as_deref()) {
        Ok(text) => {
            print!("{text}");
            let _ = std::io::stdout().flush();
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("fslpn {}: {e}", cli.command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
