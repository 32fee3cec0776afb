use clap::Parser;

use conley_flow::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    match run(cli.command, &cli.config, &cli.out, &cli.overrides) {
        Ok(outcome) => std::process::exit(outcome.exit_code()),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}
