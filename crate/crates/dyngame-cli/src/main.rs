use clap::Parser;
use dyngame_cli::{run, RunConfig};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DYNGAME_LOG", "error")).init();
    let config = RunConfig::parse();
    std::process::exit(run(&config));
}
