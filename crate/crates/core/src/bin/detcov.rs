use clap::Parser;

fn main() {
    let cli = detcov::cli::Cli::parse();
    std::process::exit(detcov::cli::run(&cli));
}
