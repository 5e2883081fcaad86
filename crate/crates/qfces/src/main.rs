use clap::error::ErrorKind;
use clap::Parser;
use qfces::cli::{run, Cli};

#[tokio::main]
async fn main() {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => match err.kind() {
            // Help and version output exit 0 through clap itself.
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => err.exit(),
            // Usage mistakes are validation failures.
            _ => {
                eprint!("{err}");
                std::process::exit(1);
            }
        },
    };
    if let Err(err) = run(cli).await {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
