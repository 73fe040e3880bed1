use clap::Parser;

fn main() {
    std::process::exit(mcdlab::cli::run(mcdlab::cli::Args::parse()));
}
