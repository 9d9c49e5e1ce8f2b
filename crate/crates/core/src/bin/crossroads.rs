use clap::Parser;

fn main() -> anyhow::Result<()> {
    crossroads::cli::run(crossroads::cli::Cli::parse())
}
