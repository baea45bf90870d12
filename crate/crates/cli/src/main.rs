use clap::Parser;

fn main() {
    let cli = cantor_cli::Cli::parse();
    std::process::exit(cantor_cli::execute(cli));
}
