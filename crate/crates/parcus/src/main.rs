use clap::Parser;

use parcus::cli::{run, Cli};
use parcus::Error;

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        // 2 for configuration/usage problems, 1 for runtime failures.
        let code = match err {
            Error::Config(_) | Error::Parse { .. } => 2,
            _ => 1,
        };
        std::process::exit(code);
    }
}
