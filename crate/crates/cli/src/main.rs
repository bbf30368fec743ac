use std::process::ExitCode;

use clap::Parser;
use island_cli::{run, Cli, Command};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let out = match &cli.command {
        Command::Pf(o) | Command::Coherency(o) | Command::Island(o) | Command::Simulate(o) => o.out.clone(),
    };
    let result = run(&cli.command).and_then(|outcome| {
        outcome.artifacts.write_to(&out)?;
        Ok(outcome)
    });
    match result {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            println!("wrote {} to {}", outcome.artifacts.names().join(", "), out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
