use std::process::ExitCode;

use clap::Parser;
use jcoupling_driver::app::{run, Cli};
use jcoupling_driver::CliError;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.workers {
        pool = pool.num_threads(n);
    }
    let result = match pool.build() {
        Ok(pool) => pool.install(|| run(cli)),
        Err(e) => Err(CliError::Config(format!("cannot start worker pool: {e}"))),
    };
    match result {
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
