use clap::Parser;

fn main() {
    let cli = dynlogit::cli::Cli::parse();
    std::process::exit(dynlogit::cli::run(cli));
}
