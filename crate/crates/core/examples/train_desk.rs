//! Trains one network on a small freshly built dataset and prints the
//! learning curve.
//!
//! `cargo run --release --example train_desk -- <arch> [episodes] [batch] [lr] [updates_per_step] [seed]`
use std::time::Instant;

use crossroads::curation::{build_datasets, CurationConfig, Curator, DatasetCounts, Split};
use crossroads::eval::EvalContext;
use crossroads::map::build_default_map;
use crossroads::planners::OracleConfig;
use crossroads::sim::SimConfig;
use crossroads::train::{default_spec, train, TrainConfig};

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize| args.get(i).map(String::as_str);
    let kind = arg(0).unwrap_or("mlp").parse()?;
    let mut cfg = TrainConfig::default();
    cfg.episodes = arg(1).map_or(Ok(300), str::parse)?;
    cfg.batch = arg(2).map_or(Ok(32), str::parse)?;
    cfg.lr = arg(3).map_or(Ok(1e-3), str::parse)?;
    cfg.updates_per_step = arg(4).map_or(Ok(1.0), str::parse)?;
    let seed = arg(5).map_or(Ok(0), str::parse)?;
    cfg.val_every = 50;

    let graph = build_default_map();
    let sim = SimConfig::default();
    let oracle = OracleConfig::default();
    let t0 = Instant::now();
    let curator = Curator::new(&graph, sim.clone(), oracle.clone(), CurationConfig::default());
    let counts = DatasetCounts {
        interaction_pool: 0,
        interaction_only: 0,
        test_generic: 0,
        test_interaction: 0,
        ..DatasetCounts::default()
    };
    let manifest = build_datasets(&curator, &counts, 0.5, 11)?;
    println!("dataset ready in {:.1?}", t0.elapsed());
    let ctx = EvalContext { graph: &graph, sim, oracle };
    let tr = manifest.split(Split::Train);
    let val = manifest.split(Split::Val);
    let t0 = Instant::now();
    let out = train(&ctx, &cfg, default_spec(kind), &tr, &val, seed, |r| {
        if r.val_success.is_some() || r.episode % 10 == 0 {
            println!(
                "ep {:4} steps {:6} reward {:7.3} loss {:>9} val s/c/t {:?}/{:?}/{:?}  [{:.0?}]",
                r.episode,
                r.env_steps,
                r.mean_reward,
                r.loss.map_or("-".into(), |l| format!("{l:.4}")),
                r.val_success,
                r.val_collision,
                r.val_timeout,
                t0.elapsed()
            );
        }
    })?;
    println!("train steps {} in {:.1?}", out.train_steps, t0.elapsed());
    Ok(())
}
