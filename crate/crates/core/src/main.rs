use clap::Parser;
use skylink::cli::{run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SKYLINK_LOG_LEVEL", "warn"))
        .init();
    let cli = Cli::parse();
    std::process::exit(run(&cli));
}
