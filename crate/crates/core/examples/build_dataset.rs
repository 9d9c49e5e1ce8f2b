//! Builds every split at a reduced scale, verifies each curated episode
//! and writes the manifest.
//!
//! `cargo run --release --example build_dataset -- [scale] [seed] [out.json]`
use std::time::Instant;

use crossroads::curation::{build_datasets, verify_collision, verify_interaction, CurationConfig, Curator, DatasetCounts, EpisodeKind, Split};
use crossroads::map::build_default_map;
use crossroads::planners::OracleConfig;
use crossroads::sim::SimConfig;

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let scale: f64 = args.first().map_or(Ok(0.1), |s| s.parse())?;
    let seed: u64 = args.get(1).map_or(Ok(0), |s| s.parse())?;
    let graph = build_default_map();
    let (sim, oracle, cur) = (SimConfig::default(), OracleConfig::default(), CurationConfig::default());
    let curator = Curator::new(&graph, sim.clone(), oracle.clone(), cur.clone());
    let t0 = Instant::now();
    let m = build_datasets(&curator, &DatasetCounts::default(), scale, seed)?;
    println!("built in {:.1?}, hash {}", t0.elapsed(), m.hash);
    for split in [Split::Train, Split::Val, Split::Test, Split::TestInteraction] {
        let specs = m.split(split);
        let count = |k| specs.iter().filter(|s| s.kind == k).count();
        println!(
            "  {:<17} {:>5} episodes: {} generic, {} collision, {} interaction",
            split.label(),
            specs.len(),
            count(EpisodeKind::Generic),
            count(EpisodeKind::Collision),
            count(EpisodeKind::Interaction)
        );
    }
    let (mut bad_i, mut bad_c) = (0, 0);
    for e in &m.entries {
        match e.spec.kind {
            EpisodeKind::Interaction => bad_i += verify_interaction(&graph, &e.spec, &sim, &cur).is_err() as usize,
            EpisodeKind::Collision => bad_c += !verify_collision(&graph, &e.spec, &sim, &oracle)? as usize,
            EpisodeKind::Generic => {}
        }
    }
    println!("verification failures: {bad_i} interaction, {bad_c} collision");
    if let Some(path) = args.get(2) {
        std::fs::write(path, m.to_json())?;
        println!("wrote {path}");
    }
    Ok(())
}
