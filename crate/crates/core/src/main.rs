use clap::Parser;

fn main() {
    let cli = dmnls::cli::Cli::parse();
    std::process::exit(dmnls::cli::dispatch(cli));
}
