//! Command-line front end. The `crossroads` binary only calls [`run`].

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Parser, Subcommand};
use crossroads_nn::{ArchKind, Checkpoint};
use serde::Serialize;

use crate::config::RunConfig;
use crate::curation::{build_datasets, Curator, DatasetManifest, EpisodeSpec, Split};
use crate::eval::{
    counterfactual_log, density_analysis, driver_type_sweep, evaluate, min_ttc_study, offset_grid,
    perturbation_study, AnalysisKind, AnalysisRecord, EvalContext, MetricsReport,
};
use crate::map::{build_default_map, LaneGraph};
use crate::planners::{CarFollower, Constant, Oracle};
use crate::sim::{Action, Policy};
use crate::train::{default_spec, train, write_curve_csv, LearnedPolicy};

#[derive(Debug, Parser)]
#[command(name = "crossroads", version, about = "Urban intersection simulator and interaction-aware Q-learning")]
pub struct Cli {
    /// TOML run configuration; defaults apply to every missing key.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Map utilities.
    Map {
        #[command(subcommand)]
        action: MapAction,
    },
    /// Dataset utilities.
    Data {
        #[command(subcommand)]
        action: DataAction,
    },
    /// Trains a network and writes checkpoint, learning curve and summary.
    Train {
        #[arg(long)]
        arch: ArchKind,
        #[arg(long)]
        out: PathBuf,
        /// Dataset manifest; built from the config when absent.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Evaluates a policy against Oracle traffic.
    Eval {
        /// Checkpoint file, or one of oracle, car-follower, always-go, always-stop.
        #[arg(long)]
        checkpoint: String,
        #[arg(long)]
        split: Option<String>,
        /// Comma-separated evaluation seeds.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        noise_p: Option<f64>,
        /// Override the ego driver type.
        #[arg(long, allow_hyphen_values = true)]
        beta: Option<f64>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Output directory; the JSON summary goes to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Behavioral analyses; each writes `<kind>.csv` and `<kind>.json`.
    Analyze {
        kind: AnalysisKind,
        #[arg(long)]
        out: PathBuf,
        /// Policy under study (checkpoint or built-in name).
        #[arg(long, default_value = "oracle")]
        checkpoint: String,
        /// Second policy of the min-TTC and counterfactual analyses.
        #[arg(long, default_value = "car-follower")]
        probe: String,
        #[arg(long)]
        split: Option<String>,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum MapAction {
    /// Loads and validates a map, printing a census.
    Validate {
        /// Map JSON; the configured or built-in map when absent.
        #[arg(long)]
        map: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum DataAction {
    /// Builds every split and writes the manifest.
    Generate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        scale: Option<f64>,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Map { action: MapAction::Validate { map } } => map_validate(map.as_deref().or(cfg.map.as_deref())),
        Command::Data { action: DataAction::Generate { manifest, seed, scale } } => {
            let mut cfg = cfg;
            cfg.data.seed = seed.unwrap_or(cfg.data.seed);
            cfg.data.scale = scale.unwrap_or(cfg.data.scale);
            cfg.validate()?;
            let graph = load_map(cfg.map.as_deref())?;
            let m = generate(&cfg, &graph)?;
            fs::write(&manifest, m.to_json()).with_context(|| format!("writing {}", manifest.display()))?;
            print_json(&manifest_summary(&m))
        }
        Command::Train { arch, out, manifest } => train_cmd(&cfg, arch, &out, manifest.as_deref()),
        Command::Eval { checkpoint, split, seeds, noise_p, beta, manifest, out } => {
            let mut cfg = cfg;
            if let Some(s) = seeds {
                cfg.eval.seeds = s;
            }
            cfg.eval.noise_p = noise_p.unwrap_or(cfg.eval.noise_p);
            if let Some(s) = split {
                cfg.eval.split = parse_split(&s)?;
            }
            cfg.validate()?;
            eval_cmd(&cfg, &checkpoint, beta, manifest.as_deref(), out.as_deref())
        }
        Command::Analyze { kind, out, checkpoint, probe, split, manifest } => {
            let split = split.as_deref().map(parse_split).transpose()?;
            analyze_cmd(&cfg, kind, &out, &checkpoint, &probe, split, manifest.as_deref())
        }
    }
}

fn parse_split(s: &str) -> Result<Split> {
    Split::parse(s).with_context(|| format!("unknown split `{s}` (train, val, test, test-interaction)"))
}

fn print_json<T: Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(v)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn load_map(path: Option<&Path>) -> Result<LaneGraph> {
    Ok(match path {
        Some(p) => LaneGraph::load(p).with_context(|| format!("loading map {}", p.display()))?,
        None => build_default_map(),
    })
}

fn map_validate(path: Option<&Path>) -> Result<()> {
    let g = load_map(path)?;
    #[derive(Serialize)]
    struct Census {
        name: String,
        segments: usize,
        lanes: usize,
        junctions: std::collections::BTreeMap<String, usize>,
        spawns: usize,
        goals: usize,
    }
    print_json(&Census {
        name: g.name.clone(),
        segments: g.segments().len(),
        lanes: g.lanes().count(),
        junctions: g.junction_census().into_iter().map(|(k, n)| (k.label().to_string(), n)).collect(),
        spawns: g.spawns().len(),
        goals: g.goals().len(),
    })
}

fn generate(cfg: &RunConfig, graph: &LaneGraph) -> Result<DatasetManifest> {
    let curator = Curator::new(graph, cfg.sim.clone(), cfg.oracle.clone(), cfg.curation.clone());
    Ok(build_datasets(&curator, &cfg.data.counts, cfg.data.scale, cfg.data.seed)?)
}

fn manifest_summary(m: &DatasetManifest) -> serde_json::Value {
    let splits: serde_json::Map<_, _> = [Split::Train, Split::Val, Split::Test, Split::TestInteraction]
        .into_iter()
        .map(|s| (s.label().to_string(), m.split_len(s).into()))
        .collect();
    serde_json::json!({ "seed": m.seed, "scale": m.scale, "hash": m.hash, "splits": splits })
}

/// Loads a manifest and checks its hash, or builds one from the config.
fn dataset(cfg: &RunConfig, graph: &LaneGraph, path: Option<&Path>) -> Result<DatasetManifest> {
    let Some(p) = path else { return generate(cfg, graph) };
    let s = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
    let m = DatasetManifest::from_json(&s).with_context(|| format!("parsing {}", p.display()))?;
    ensure!(m.hash_ok(), "manifest {} fails its integrity hash", p.display());
    Ok(m)
}

fn nonempty<'m>(m: &'m DatasetManifest, split: Split) -> Result<Vec<&'m EpisodeSpec>> {
    let v = m.split(split);
    ensure!(!v.is_empty(), "split {} is empty", split.label());
    Ok(v)
}

/// A built-in planner name or a checkpoint path.
fn make_policy(cfg: &RunConfig, which: &str) -> Result<Box<dyn Policy>> {
    Ok(match which {
        "oracle" => Box::new(Oracle::new(cfg.sim.clone(), cfg.oracle.clone())),
        "car-follower" => Box::new(CarFollower::new(cfg.sim.clone(), cfg.car_follower.clone())),
        "always-go" => Box::new(Constant(Action::Go)),
        "always-stop" => Box::new(Constant(Action::Stop)),
        path => {
            let ck = Checkpoint::load(Path::new(path)).with_context(|| format!("loading checkpoint {path}"))?;
            Box::new(LearnedPolicy::from_checkpoint(&ck, cfg.sim.observation_radius)?)
        }
    })
}

fn train_cmd(cfg: &RunConfig, arch: ArchKind, out: &Path, manifest: Option<&Path>) -> Result<()> {
    let graph = load_map(cfg.map.as_deref())?;
    let m = dataset(cfg, &graph, manifest)?;
    let tr = nonempty(&m, Split::Train)?;
    let val = m.split(Split::Val);
    let ctx = EvalContext { graph: &graph, sim: cfg.sim.clone(), oracle: cfg.oracle.clone() };
    fs::create_dir_all(out)?;
    let result = train(&ctx, &cfg.train, default_spec(arch), &tr, &val, cfg.seed, |r| {
        if let Some(s) = r.val_success {
            eprintln!("episode {:5}  env steps {:7}  validation success {s:.1}%", r.episode, r.env_steps);
        }
    })?;
    result.checkpoint().save(&out.join("checkpoint.json"))?;
    write_curve_csv(&result.curve, BufWriter::new(File::create(out.join("curve.csv"))?))?;
    let summary = serde_json::json!({
        "arch": arch.label(),
        "seed": cfg.seed,
        "manifest_hash": m.hash,
        "train_steps": result.train_steps,
        "initial_val": result.initial_val,
        "final_val": result.final_val,
    });
    write_json(&out.join("summary.json"), &summary)?;
    print_json(&summary)
}

fn write_report(out: &Path, r: &MetricsReport) -> Result<()> {
    fs::create_dir_all(out)?;
    let mut w = csv::Writer::from_path(out.join("outcomes.csv"))?;
    w.write_record(["seed", "index", "kind", "junction", "status", "length", "total_reward"])?;
    for (seed, o) in &r.outcomes {
        let kind = serde_json::to_value(o.kind)?.as_str().unwrap_or_default().to_string();
        let status = serde_json::to_value(o.status)?.as_str().unwrap_or_default().to_string();
        w.write_record([
            seed.to_string(),
            o.index.to_string(),
            kind,
            o.junction.clone(),
            status,
            o.length.to_string(),
            o.total_reward.to_string(),
        ])?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(out.join("metrics.csv"))?;
    w.write_record(["scope", "episodes", "time_to_finish", "collision_pct", "timeout_pct", "success_pct"])?;
    let mut rows = vec![("overall".to_string(), r.overall), ("std".to_string(), r.std)];
    rows.extend(r.per_seed.iter().map(|(s, m)| (format!("seed:{s}"), *m)));
    rows.extend(r.per_junction.iter().map(|(k, m)| (format!("junction:{k}"), *m)));
    for (scope, m) in rows {
        w.write_record([
            scope,
            m.episodes.to_string(),
            m.time_to_finish.to_string(),
            m.collision_pct.to_string(),
            m.timeout_pct.to_string(),
            m.success_pct.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn report_summary(r: &MetricsReport) -> serde_json::Value {
    serde_json::json!({
        "policy": r.policy,
        "seeds": r.seeds,
        "noise_p": r.noise_p,
        "overall": r.overall,
        "std": r.std,
        "per_junction": r.per_junction,
    })
}

fn eval_cmd(cfg: &RunConfig, which: &str, beta: Option<f64>, manifest: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let graph = load_map(cfg.map.as_deref())?;
    make_policy(cfg, which)?;
    let m = dataset(cfg, &graph, manifest)?;
    let specs = nonempty(&m, cfg.eval.split)?;
    let ctx = EvalContext { graph: &graph, sim: cfg.sim.clone(), oracle: cfg.oracle.clone() };
    let mut make = |_| make_policy(cfg, which).expect("policy loaded once already");
    let report = evaluate(&ctx, &specs, &mut make, &cfg.eval.seeds, cfg.eval.noise_p, beta)?;
    let summary = report_summary(&report);
    if let Some(dir) = out {
        write_report(dir, &report)?;
        write_json(&dir.join("summary.json"), &summary)?;
    }
    print_json(&summary)
}

fn write_record(out: &Path, rec: &AnalysisRecord) -> Result<()> {
    fs::create_dir_all(out)?;
    let name = rec.kind.label();
    rec.write_csv(BufWriter::new(File::create(out.join(format!("{name}.csv")))?))?;
    write_json(
        &out.join(format!("{name}.json")),
        &serde_json::json!({
            "kind": name,
            "columns": rec.columns,
            "rows": rec.rows.len(),
            "summary": rec.summary,
            "episodes": rec.episodes,
        }),
    )
}

fn analyze_cmd(
    cfg: &RunConfig,
    kind: AnalysisKind,
    out: &Path,
    which: &str,
    probe: &str,
    split: Option<Split>,
    manifest: Option<&Path>,
) -> Result<()> {
    let graph = load_map(cfg.map.as_deref())?;
    let ctx = EvalContext { graph: &graph, sim: cfg.sim.clone(), oracle: cfg.oracle.clone() };
    let a = &cfg.analysis;
    let mut ego = make_policy(cfg, which)?;
    let rec = if kind == AnalysisKind::Perturbation {
        let curator = Curator::new(&graph, cfg.sim.clone(), cfg.oracle.clone(), cfg.curation.clone());
        let grid = offset_grid(a.offset_min, a.offset_max, a.offset_step);
        perturbation_study(&ctx, &curator, ego.as_mut(), &grid, a.episodes_per_offset, a.seed)?
    } else {
        let m = dataset(cfg, &graph, manifest)?;
        let default_split = match kind {
            AnalysisKind::Density | AnalysisKind::Sweep => Split::Test,
            _ => Split::TestInteraction,
        };
        let specs = nonempty(&m, split.unwrap_or(default_split))?;
        match kind {
            AnalysisKind::MinTtc => {
                let mut b = make_policy(cfg, probe)?;
                min_ttc_study(&ctx, &specs, [ego.as_mut(), b.as_mut()], &a.ttc_edges, a.seed)?
            }
            AnalysisKind::Counterfactual => {
                let mut b = make_policy(cfg, probe)?;
                counterfactual_log(&ctx, &specs, ego.as_mut(), b.as_mut(), a.ttc_threshold, a.seed)?
            }
            AnalysisKind::Sweep => {
                let mut make = |_| make_policy(cfg, which).expect("policy loaded once already");
                driver_type_sweep(&ctx, &specs, &mut make, &a.betas, &cfg.eval.seeds)?
            }
            AnalysisKind::Density => density_analysis(&ctx, &specs, ego.as_mut(), a.seed)?,
            AnalysisKind::Perturbation => bail!("handled above"),
        }
    };
    write_record(out, &rec)?;
    print_json(&rec.summary)
}
