mod common;

use std::sync::OnceLock;

use crossroads::curation::{build_datasets, DatasetCounts, DatasetManifest, EpisodeKind, EpisodeSpec, Split};
use crossroads::eval::{
    counterfactual_log, density_analysis, driver_type_sweep, evaluate, min_ttc_study, offset_grid,
    perturbation_study, quantile, run_specs, EpisodeOutcome, EvalContext, EvalError, Metrics, MIN_TTC_EDGES,
};
use crossroads::map::LaneGraph;
use crossroads::planners::{CarFollower, Constant, Oracle};
use crossroads::sim::{Action, EpisodeStatus, Policy};
use proptest::prelude::*;

fn fixture() -> &'static (LaneGraph, DatasetManifest) {
    static F: OnceLock<(LaneGraph, DatasetManifest)> = OnceLock::new();
    F.get_or_init(|| {
        let g = crossroads::map::build_default_map();
        let m = build_datasets(&common::curator(&g), &DatasetCounts::default(), 0.02, 11).unwrap();
        (g, m)
    })
}

fn ctx() -> EvalContext<'static> {
    let (g, _) = fixture();
    EvalContext { graph: g, sim: Default::default(), oracle: Default::default() }
}

fn split(s: Split) -> Vec<&'static EpisodeSpec> {
    fixture().1.split(s)
}

fn oracle_maker(c: &EvalContext<'_>) -> impl FnMut(u64) -> Box<dyn Policy> {
    let (sim, oracle) = (c.sim.clone(), c.oracle.clone());
    move |_| Box::new(Oracle::new(sim.clone(), oracle.clone()))
}

fn status_of(k: u8) -> EpisodeStatus {
    [EpisodeStatus::Success, EpisodeStatus::Collision, EpisodeStatus::Timeout][k as usize % 3]
}

proptest! {
    #[test]
    fn metrics_partition_the_episodes(
        raw in proptest::collection::vec((0u8..3, 1u32..200, 0u8..3), 1..80),
    ) {
        let junctions = ["none", "cross", "t"];
        let outcomes: Vec<EpisodeOutcome> = raw
            .iter()
            .enumerate()
            .map(|(i, &(s, len, j))| EpisodeOutcome {
                index: i,
                kind: EpisodeKind::Generic,
                junction: junctions[j as usize].into(),
                status: status_of(s),
                length: len,
                total_reward: 0.0,
            })
            .collect();
        let m = Metrics::of(&outcomes);
        prop_assert!((m.success_pct + m.collision_pct + m.timeout_pct - 100.0).abs() < 1e-9);
        let n = outcomes.len() as f64;
        let succ = outcomes.iter().filter(|o| o.status == EpisodeStatus::Success).count() as f64;
        prop_assert!((m.success_pct - 100.0 * succ / n).abs() < 1e-9);
        let mean_len = outcomes.iter().map(|o| o.length as f64).sum::<f64>() / n;
        prop_assert!((m.time_to_finish - mean_len).abs() < 1e-9);
        let by_j: usize = junctions
            .iter()
            .map(|j| Metrics::of(&outcomes.iter().filter(|o| o.junction == *j).cloned().collect::<Vec<_>>()).episodes)
            .sum();
        prop_assert_eq!(by_j, outcomes.len());
    }
}

#[test]
fn report_is_reproducible_and_partitions_by_junction() {
    let c = ctx();
    let test = split(Split::Test);
    let a = evaluate(&c, &test, &mut oracle_maker(&c), &[0, 1], 0.0, None).unwrap();
    let b = evaluate(&c, &test, &mut oracle_maker(&c), &[0, 1], 0.0, None).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.overall.episodes, 2 * test.len());
    assert_eq!(a.per_junction.values().map(|m| m.episodes).sum::<usize>(), a.overall.episodes);
    assert_eq!(a.per_seed.len(), 2);

    // Zero noise is the same as plain Oracle traffic.
    let mut ego = Oracle::new(c.sim.clone(), c.oracle.clone());
    let mut others = Oracle::new(c.sim.clone(), c.oracle.clone());
    let direct = run_specs(&c, &test, &mut ego, &mut others, 1, None).unwrap();
    let from_report: Vec<_> = a.outcomes.iter().filter(|(s, _)| *s == 1).map(|(_, o)| o.clone()).collect();
    assert_eq!(direct, from_report);
}

#[test]
fn always_stop_never_succeeds() {
    let c = ctx();
    let test = split(Split::Test);
    let r = evaluate(&c, &test, &mut |_| Box::new(Constant(Action::Stop)), &[0], 0.0, None).unwrap();
    assert_eq!(r.overall.success_pct, 0.0);
    assert_eq!(r.overall.timeout_pct + r.overall.collision_pct, 100.0);
    assert!(r.overall.timeout_pct >= 90.0, "{:?}", r.overall);
}

#[test]
fn bad_inputs_are_rejected() {
    let c = ctx();
    let test = split(Split::Test);
    assert!(matches!(evaluate(&c, &[], &mut oracle_maker(&c), &[0], 0.0, None), Err(EvalError::Empty(_))));
    assert!(matches!(evaluate(&c, &test, &mut oracle_maker(&c), &[], 0.0, None), Err(EvalError::Empty(_))));
    assert!(matches!(evaluate(&c, &test, &mut oracle_maker(&c), &[0], 1.2, None), Err(EvalError::Noise(_))));
    assert!(matches!(evaluate(&c, &test, &mut oracle_maker(&c), &[0], 0.0, Some(2.0)), Err(EvalError::BadBeta(_))));
    assert!(matches!(driver_type_sweep(&c, &test, &mut oracle_maker(&c), &[-1.5], &[0]), Err(EvalError::BadBeta(_))));
}

#[test]
fn offset_grid_has_a_single_clean_zero() {
    let g = offset_grid(-2.0, 2.0, 0.1);
    assert_eq!(g.len(), 41);
    assert_eq!(g.iter().filter(|&&x| x == 0.0).count(), 1);
    assert!(g.iter().all(|x| !(x.is_sign_negative() && *x == 0.0)));
    assert_eq!((g[0], g[40]), (-2.0, 2.0));
    assert!(g.contains(&0.3) && g.contains(&-1.5));
}

#[test]
fn perturbation_rows_follow_the_grid() {
    let c = ctx();
    let (g, _) = fixture();
    let cur = common::curator(g);
    let mut ego = Oracle::new(c.sim.clone(), c.oracle.clone());
    let offsets = [1.0, -2.0, 0.0, 2.0, 0.0];
    let r = perturbation_study(&c, &cur, &mut ego, &offsets, 3, 0).unwrap();
    assert_eq!(r.column("offset_s").unwrap(), vec![-2.0, 0.0, 1.0, 2.0]);
    assert_eq!(r.episodes.len(), 12);
    for row in &r.rows {
        assert!((0.0..=100.0).contains(&row[2]) || row[2].is_nan());
    }
    // The ego clearly ahead has no reason to wait.
    assert_eq!(r.row_at(-2.0).unwrap()[2], 100.0);
    assert!(r.summary.contains_key("go_pct_ambiguous"));
    assert!(perturbation_study(&c, &cur, &mut ego, &[], 3, 0).is_err());
}

#[test]
fn counterfactual_log_edge_cases() {
    let c = ctx();
    let ti = split(Split::TestInteraction);
    let mut a = Oracle::new(c.sim.clone(), c.oracle.clone());
    let mut b = Oracle::new(c.sim.clone(), c.oracle.clone());
    let none = counterfactual_log(&c, &ti, &mut a, &mut b, 0.0, 0).unwrap();
    assert!(none.rows.is_empty());
    let same = counterfactual_log(&c, &ti, &mut a, &mut b, 2.0, 0).unwrap();
    assert_eq!(same.summary["disagree"], 0.0);
    assert_eq!(same.summary["agree"], same.rows.len() as f64);
    assert!(same.rows.iter().all(|r| r[2] < 2.0 && r[3] == r[4]));
    let mut cf = CarFollower::new(c.sim.clone(), Default::default());
    let diff = counterfactual_log(&c, &ti, &mut a, &mut cf, 2.0, 0).unwrap();
    assert_eq!(diff.summary["agree"] + diff.summary["disagree"], diff.rows.len() as f64);
}

#[test]
fn sweep_rows_match_direct_evaluation() {
    let c = ctx();
    let test = split(Split::Test);
    let r = driver_type_sweep(&c, &test, &mut oracle_maker(&c), &[0.5, -1.0, 0.5], &[0, 1]).unwrap();
    assert_eq!(r.column("beta").unwrap(), vec![-1.0, 0.5]);
    for &b in &[-1.0, 0.5] {
        let m = evaluate(&c, &test, &mut oracle_maker(&c), &[0, 1], 0.0, Some(b)).unwrap().overall;
        assert_eq!(r.row_at(b).unwrap(), &[b, m.time_to_finish, m.collision_pct, m.timeout_pct, m.success_pct]);
    }
    let (mut x, mut y) = (Vec::new(), Vec::new());
    r.write_csv(&mut x).unwrap();
    driver_type_sweep(&c, &test, &mut oracle_maker(&c), &[0.5, -1.0], &[0, 1]).unwrap().write_csv(&mut y).unwrap();
    assert_eq!(x, y);
}

#[test]
fn density_bins_cover_every_ego_step() {
    let c = ctx();
    let test = split(Split::Test);
    let mut ego = Oracle::new(c.sim.clone(), c.oracle.clone());
    let r = density_analysis(&c, &test, &mut ego, 3).unwrap();
    let agents = r.column("agents").unwrap();
    assert!(agents.iter().all(|&n| (0.0..=8.0).contains(&n) && n.fract() == 0.0));
    let steps: f64 = r.column("steps").unwrap().iter().sum();
    let mut ego = Oracle::new(c.sim.clone(), c.oracle.clone());
    let mut others = Oracle::new(c.sim.clone(), c.oracle.clone());
    let lens: u32 = run_specs(&c, &test, &mut ego, &mut others, 3, None).unwrap().iter().map(|o| o.length).sum();
    assert_eq!(steps, lens as f64);
    for row in &r.rows {
        assert!(row[2] <= row[3] && row[3] <= row[4] && row[4] <= row[5] && row[5] <= row[6]);
    }
}

#[test]
fn quantiles_interpolate_linearly() {
    let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
    assert_eq!(quantile(&xs, 0.0), 1.0);
    assert_eq!(quantile(&xs, 0.5), 3.0);
    assert_eq!(quantile(&xs, 0.25), 2.0);
    assert_eq!(quantile(&xs, 1.0), 5.0);
    assert!((quantile(&[0.0, 10.0], 0.995) - 9.95).abs() < 1e-12);
    assert!(quantile(&[], 0.5).is_nan());
}

#[test]
fn oracle_goes_freely_when_nothing_is_in_reach() {
    let c = ctx();
    let ti = split(Split::TestInteraction);
    let mut a = Oracle::new(c.sim.clone(), c.oracle.clone());
    let mut b = Constant(Action::Go);
    let r = min_ttc_study(&c, &ti, [&mut a, &mut b], &MIN_TTC_EDGES, 0).unwrap();
    let inf = r.rows.iter().find(|row| row[0].is_infinite()).expect("infinite-TTC bin");
    assert!(inf[3] >= 95.0, "{inf:?}");
    assert!(r.rows.iter().all(|row| row[5].is_nan() || row[5] == 100.0));
    // Go-rates in finite bins sit below the free-road rate.
    let finite_go: Vec<f64> = r.rows.iter().filter(|row| row[0].is_finite() && row[2] > 0.0).map(|row| row[3]).collect();
    assert!(finite_go.iter().all(|&g| g <= inf[3]));
}
