use clap::Parser;

fn main() {
    let args = svi_cli::Args::parse();
    std::process::exit(svi_cli::execute(&args));
}
