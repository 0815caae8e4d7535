use clap::Parser;

fn main() {
    let cli = itr_cli::cli::Cli::parse();
    if let Err(err) = itr_cli::cli::run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
