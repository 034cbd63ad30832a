use clap::Parser;
use wasserfair_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => println!("{summary}"),
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            std::process::exit(e.exit_code());
        }
    }
}
