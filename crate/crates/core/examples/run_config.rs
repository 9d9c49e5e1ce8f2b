//! Prints the default run configuration as TOML, the starting point for
//! `crossroads --config`.
use crossroads::config::RunConfig;

fn main() {
    print!("{}", RunConfig::default().to_toml());
}
