use clap::Parser;

fn main() {
    let cli = issta_cli::Cli::parse();
    if let Err(e) = issta_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
