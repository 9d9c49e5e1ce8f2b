//! Oracle, Car-Follower and always-Go egos on freshly curated interaction
//! scenes with Oracle traffic, with and without action noise.
//!
//! `cargo run --release --example oracle_benchmark -- [episodes] [seed]`
use std::time::Instant;

use crossroads::curation::{CurationConfig, Curator};
use crossroads::eval::{evaluate, EvalContext};
use crossroads::map::build_default_map;
use crossroads::planners::{CarFollower, Constant, Oracle, OracleConfig};
use crossroads::sim::{Action, Policy, SimConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    let n = args.first().copied().unwrap_or(200) as usize;
    let seed = args.get(1).copied().unwrap_or(7);
    let graph = build_default_map();
    let sim = SimConfig::default();
    let oracle = OracleConfig::default();
    let t0 = Instant::now();
    let curator = Curator::new(&graph, sim.clone(), oracle.clone(), CurationConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let owned: Vec<_> = (0..n).map(|i| curator.gen_interaction((i % 3) as u8 + 1, &mut rng)).collect::<Result<_, _>>()?;
    let specs: Vec<_> = owned.iter().collect();
    println!("{n} interaction scenes in {:.1?}", t0.elapsed());

    let ctx = EvalContext { graph: &graph, sim: sim.clone(), oracle: oracle.clone() };
    let makers: Vec<(&str, Box<dyn Fn() -> Box<dyn Policy>>)> = vec![
        ("oracle", Box::new(|| Box::new(Oracle::new(sim.clone(), oracle.clone())))),
        ("car-follower", Box::new(|| Box::new(CarFollower::new(sim.clone(), Default::default())))),
        ("always-go", Box::new(|| Box::new(Constant(Action::Go)))),
    ];
    println!("{:>13} {:>5} {:>9} {:>10} {:>8} {:>7}", "ego", "noise", "success%", "collision%", "timeout%", "steps");
    for (name, make) in &makers {
        for p in [0.0, 0.1] {
            let r = evaluate(&ctx, &specs, &mut |_| make(), &[0, 1], p, None)?.overall;
            println!(
                "{name:>13} {p:>5} {:>9.1} {:>10.1} {:>8.1} {:>7.1}",
                r.success_pct, r.collision_pct, r.timeout_pct, r.time_to_finish
            );
        }
    }
    Ok(())
}
