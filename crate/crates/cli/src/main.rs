mod args;
mod error;
mod run;

use clap::{CommandFactory, FromArgMatches};

use args::{Cli, RunConfig};
use rqc_core::formats::{schema_versions, REPORT_SCHEMA_VERSION};

fn version() -> String {
    let schemas: Vec<String> = schema_versions()
        .into_iter()
        .map(|(name, v)| format!("{name} v{v}"))
        .collect();
    format!("{} (schemas: {})", env!("CARGO_PKG_VERSION"), schemas.join(", "))
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let version: &'static str = Box::leak(version().into_boxed_str());
    let matches = Cli::command().version(version).get_matches();
    let cli = Cli::from_arg_matches(&matches).unwrap_or_else(|e| e.exit());
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    let cfg = RunConfig {
        schema_version: REPORT_SCHEMA_VERSION,
        threads: cli.threads,
        command: cli.command,
    };
    if let Err(e) = run::run(&cfg) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
