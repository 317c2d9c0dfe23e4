use clap::Parser;
use discourse_cli::{execute, Cli};
use tracing_subscriber::EnvFilter;

fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let mut stdout = std::io::stdout().lock();
    if let Err(err) = execute(cli, &mut stdout) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
