//! Plays one curated interaction scene and writes its step trace as JSON
//! lines, one object per step, to stdout.
//!
//! `cargo run --release --example episode_trace -- [setting] [seed] > trace.jsonl`
use crossroads::curation::{CurationConfig, Curator};
use crossroads::map::build_default_map;
use crossroads::planners::{Oracle, OracleConfig};
use crossroads::sim::{run_episode, write_trace_jsonl, SimConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let setting: u8 = std::env::args().nth(1).map_or(Ok(1), |s| s.parse())?;
    let seed: u64 = std::env::args().nth(2).map_or(Ok(0), |s| s.parse())?;
    let graph = build_default_map();
    let sim = SimConfig::default();
    let curator = Curator::new(&graph, sim.clone(), OracleConfig::default(), CurationConfig::default());
    let spec = curator.gen_interaction(setting, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let world = spec.instantiate(&graph)?;
    let mut ego = Oracle::new(sim.clone(), OracleConfig::default());
    let mut others = ego.clone();
    let r = run_episode(world, &mut ego, &mut others, &sim, spec.seed);
    eprintln!(
        "{} agents, ego {}, conflict {:?}: {:?} after {} steps, reward {:.2}",
        spec.agents.len(),
        spec.ego,
        spec.conflict_agents,
        r.status,
        r.length,
        r.total_reward
    );
    write_trace_jsonl(&r.trace, std::io::stdout().lock())?;
    Ok(())
}
