//! Trains a small DeepSet briefly, writes the checkpoint to disk, reloads it
//! and evaluates the greedy policy under clean and noisy traffic.
//!
//! `cargo run --release --example checkpoint_eval -- [episodes] [out.json]`
use crossroads::curation::{build_datasets, CurationConfig, Curator, DatasetCounts, Split};
use crossroads::eval::{evaluate, EvalContext};
use crossroads::map::build_default_map;
use crossroads::planners::OracleConfig;
use crossroads::sim::{Policy, SimConfig};
use crossroads::train::{default_spec, train, LearnedPolicy, TrainConfig};
use crossroads_nn::{ArchKind, Checkpoint};

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let episodes = args.first().map_or(Ok(40), |s| s.parse())?;
    let path = args.get(1).cloned().unwrap_or_else(|| std::env::temp_dir().join("deepset.json").display().to_string());

    let graph = build_default_map();
    let curator = Curator::new(&graph, SimConfig::default(), OracleConfig::default(), CurationConfig::default());
    let counts = DatasetCounts { interaction_pool: 0, interaction_only: 0, ..DatasetCounts::default() };
    let manifest = build_datasets(&curator, &counts, 0.05, 3)?;
    let ctx = EvalContext { graph: &graph, sim: SimConfig::default(), oracle: OracleConfig::default() };

    let cfg = TrainConfig { episodes, batch: 32, lr: 1e-3, val_every: 0, ..TrainConfig::default() };
    let out = train(&ctx, &cfg, default_spec(ArchKind::DeepSet), &manifest.split(Split::Train), &[], 0, |_| {})?;
    out.checkpoint().save(path.as_ref())?;
    println!("{} gradient steps, checkpoint at {path}", out.train_steps);

    let ck = Checkpoint::load(path.as_ref())?;
    let policy = LearnedPolicy::from_checkpoint(&ck, cfg.observation_radius)?;
    let test = manifest.split(Split::Test);
    for p in [0.0, 0.1] {
        let r = evaluate(&ctx, &test, &mut |_| Box::new(policy.clone()) as Box<dyn Policy>, &[0, 1], p, None)?;
        let m = r.overall;
        println!(
            "noise p={p:.1}: {} episodes  success {:.1}%  collision {:.1}%  timeout {:.1}%  mean length {:.1}",
            m.episodes, m.success_pct, m.collision_pct, m.timeout_pct, m.time_to_finish
        );
    }
    Ok(())
}
