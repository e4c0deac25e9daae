use clap::Parser;

fn main() {
    let args = gedanken_cli::Args::parse();
    std::process::exit(gedanken_cli::run_cli(&args));
}
