//! Runs every behavioral analysis with rule-based egos on a small split
//! and prints the tables.
//!
//! `cargo run --release --example behavior_analyses -- [episodes]`
use crossroads::curation::{CurationConfig, Curator};
use crossroads::eval::{
    counterfactual_log, density_analysis, driver_type_sweep, min_ttc_study, offset_grid, perturbation_study,
    AnalysisRecord, EvalContext, MIN_TTC_EDGES,
};
use crossroads::map::build_default_map;
use crossroads::planners::{CarFollower, Oracle, OracleConfig};
use crossroads::sim::{Policy, SimConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn show(title: &str, rec: &AnalysisRecord) -> anyhow::Result<()> {
    println!("== {title} {:?}", rec.summary);
    let mut out = Vec::new();
    rec.write_csv(&mut out)?;
    print!("{}", String::from_utf8(out)?);
    Ok(())
}

fn main() -> anyhow::Result<()> {
    let n: usize = std::env::args().nth(1).map_or(Ok(60), |s| s.parse())?;
    let graph = build_default_map();
    let sim = SimConfig::default();
    let oracle_cfg = OracleConfig::default();
    let curator = Curator::new(&graph, sim.clone(), oracle_cfg.clone(), CurationConfig::default());
    let ctx = EvalContext { graph: &graph, sim: sim.clone(), oracle: oracle_cfg.clone() };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let owned: Vec<_> = (0..n).map(|i| curator.gen_interaction((i % 3) as u8 + 1, &mut rng)).collect::<Result<_, _>>()?;
    let specs: Vec<_> = owned.iter().collect();
    let mut oracle = Oracle::new(sim.clone(), oracle_cfg.clone());
    let mut follower = CarFollower::new(sim.clone(), Default::default());

    let grid = offset_grid(-2.0, 2.0, 0.5);
    show("perturbation (oracle)", &perturbation_study(&ctx, &curator, &mut oracle, &grid, 10, 1)?)?;
    show("min TTC (a = oracle, b = car-follower)", &min_ttc_study(&ctx, &specs, [&mut oracle, &mut follower], &MIN_TTC_EDGES, 1)?)?;
    let cf = counterfactual_log(&ctx, &specs, &mut oracle, &mut follower, 1.0, 1)?;
    println!("== counterfactual {:?} ({} logged steps)", cf.summary, cf.rows.len());
    let mut make = |_| Box::new(Oracle::new(sim.clone(), oracle_cfg.clone())) as Box<dyn Policy>;
    show("driver-type sweep (oracle)", &driver_type_sweep(&ctx, &specs, &mut make, &[-1.0, -0.5, 0.0, 0.5, 1.0], &[0])?)?;
    show("density (oracle)", &density_analysis(&ctx, &specs, &mut oracle, 1)?)?;
    Ok(())
}
