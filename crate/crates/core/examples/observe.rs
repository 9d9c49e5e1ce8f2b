//! Encodes the ego observation of a generic scene and prints the feature
//! rows, then the fixed-width vector the MLP consumes.
use crossroads::curation::{CurationConfig, Curator};
use crossroads::map::build_default_map;
use crossroads::obs::{encode, pad_fixed, FEATURE_NAMES, MAX_AGENTS};
use crossroads::planners::OracleConfig;
use crossroads::sim::SimConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let graph = build_default_map();
    let sim = SimConfig::default();
    let curator = Curator::new(&graph, sim.clone(), OracleConfig::default(), CurationConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let spec = (0..50)
        .map(|_| curator.gen_generic(&mut rng))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .max_by_key(|s| {
            let w = s.instantiate(&graph).expect("valid spec");
            w.neighbours(w.ego, sim.observation_radius).len()
        })
        .expect("nonempty");
    let world = spec.instantiate(&graph)?;
    let obs = encode(&world, world.ego, sim.observation_radius)?;
    println!("{} agents in the scene, {} within {} m of the ego", world.agents.len(), obs.len(), sim.observation_radius);
    println!("{:>6} {}", "agent", FEATURE_NAMES.map(|n| format!("{n:>12}")).join(""));
    for (id, row) in obs.agent_ids.iter().zip(&obs.rows) {
        println!("{id:>6} {}", row.iter().map(|x| format!("{x:>12.3}")).collect::<String>());
    }
    let flat = pad_fixed(&obs.nearest(MAX_AGENTS), MAX_AGENTS)?;
    println!("padded MLP input: {} values", flat.len());
    Ok(())
}
