//! Tour of the bundled map: junction census, spawn points and a few routes.
//!
//! ```bash
//! cargo run --release -p crossroads --example map_tour
//! # rewrite assets/default_map.json from the geometric recipe
//! cargo run --release -p crossroads --example map_tour -- --export
//! ```

use crossroads::map::{build_default_map, default_map_file, LaneGraph};

fn main() -> anyhow::Result<()> {
    if std::env::args().any(|a| a == "--export") {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/assets/default_map.json");
        std::fs::write(path, default_map_file().to_json()? + "\n")?;
        println!("wrote {path}");
        return Ok(());
    }

    let graph = build_default_map();
    println!("map '{}'", graph.name);
    for (kind, count) in graph.junction_census() {
        println!("  {:<15} {count}", kind.label());
    }
    println!("  segments: {}, spawns: {}, goals: {}", graph.segments().len(), graph.spawns().len(), graph.goals().len());

    let lengths: Vec<f64> = graph
        .spawns()
        .iter()
        .flat_map(|&s| graph.goals().iter().map(move |&g| (s, g)))
        .map(|(s, g)| graph.shortest_route(s, g).map(|r| r.total_length()))
        .collect::<Result<_, _>>()?;
    let mean = lengths.iter().sum::<f64>() / lengths.len() as f64;
    let max = lengths.iter().cloned().fold(0.0, f64::max);
    println!("  {} spawn/goal pairs routable, mean length {mean:.1} m, max {max:.1} m", lengths.len());

    show_route(&graph, 0, 12);
    show_route(&graph, 5, 40);
    Ok(())
}

fn show_route(graph: &LaneGraph, spawn: usize, goal: usize) {
    let (s, g) = (graph.spawns()[spawn], graph.goals()[goal]);
    let route = graph.shortest_route(s, g).expect("route");
    let legs: Vec<String> = route.legs().iter().map(|l| l.segment.to_string()).collect();
    println!(
        "  route {:?} -> {:?}: {:.1} m via segments [{}]",
        route.start(),
        route.goal(),
        route.total_length(),
        legs.join(", ")
    );
}
