use std::process::ExitCode;

use clap::Parser;
use lgc_cli::{catalog_text, run, Args, RunConfig};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    if args.list_models {
        print!("{}", catalog_text());
        return ExitCode::SUCCESS;
    }
    let result = RunConfig::from_args(&args).and_then(|cfg| run(&cfg));
    match result {
        Ok(report) if report.success() => {
            println!("wrote {}", report.out.display());
            ExitCode::SUCCESS
        }
        Ok(report) => {
            for a in &report.aborts {
                eprintln!("error: {a}");
            }
            eprintln!("partial outputs kept in {}", report.out.display());
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
