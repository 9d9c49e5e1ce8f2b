use rand::seq::SliceRandom;
use rand::Rng;

use super::conflicts::{conflict_triples, first_meeting, movement_conflicts, movements, MEET_TOLERANCE};
use super::{initial_overlap_free, AgentSpec, CurationConfig, CurationError, EpisodeKind, EpisodeSpec, Movement, MovementConflict};
use crate::map::{LaneGraph, LanePoint};
use crate::planners::{Constant, Oracle, OracleConfig};
use crate::sim::{run_episode, Action, AgentId, AgentState, EpisodeStatus, SimConfig, WorldState};

/// Step at which an agent moving `stride` per step first covers `distance`,
/// accumulating positions exactly like the simulator.
pub fn arrival_step(stride: f64, distance: f64) -> u32 {
    let mut s = 0.0;
    let mut k = 0;
    while s < distance {
        s += stride;
        k += 1;
    }
    k
}

/// Episode generators over one map.
pub struct Curator<'g> {
    pub graph: &'g LaneGraph,
    pub sim: SimConfig,
    pub oracle: OracleConfig,
    pub cfg: CurationConfig,
    moves: Vec<Movement>,
    conflicts: Vec<MovementConflict>,
    triples: Vec<[usize; 3]>,
    /// Per spawn: goals whose shortest route length lies in the window.
    eligible: Vec<Vec<usize>>,
}

struct Placed {
    spawn: LanePoint,
    goal: LanePoint,
    beta: f64,
    route: Vec<u32>,
}

impl<'g> Curator<'g> {
    pub fn new(graph: &'g LaneGraph, sim: SimConfig, oracle: OracleConfig, cfg: CurationConfig) -> Self {
        let moves = movements(graph);
        let conflicts = movement_conflicts(&moves);
        let triples = conflict_triples(&moves, &conflicts);
        let eligible = graph
            .spawns()
            .iter()
            .map(|&sp| {
                graph
                    .goals()
                    .iter()
                    .enumerate()
                    .filter(|(_, &g)| {
                        graph.shortest_route(sp, g).map_or(false, |r| {
                            let l = r.total_length();
                            l >= cfg.min_route_length && l <= cfg.max_route_length
                        })
                    })
                    .map(|(i, _)| i)
                    .collect()
            })
            .collect();
        Curator {
            graph,
            sim,
            oracle,
            cfg,
            moves,
            conflicts,
            triples,
            eligible,
        }
    }

    pub fn movements(&self) -> &[Movement] {
        &self.moves
    }

    pub fn conflicts(&self) -> &[MovementConflict] {
        &self.conflicts
    }

    fn exhausted(&self, what: &str) -> CurationError {
        CurationError::GenerationExhausted {
            what: what.into(),
            tries: self.cfg.retry_limit,
        }
    }

    fn random_generic_agent<R: Rng>(&self, rng: &mut R) -> Option<Placed> {
        let si = rng.gen_range(0..self.graph.spawns().len());
        let goals = &self.eligible[si];
        if goals.is_empty() {
            return None;
        }
        let spawn = self.graph.spawns()[si];
        let goal = self.graph.goals()[*goals.choose(rng).unwrap()];
        let route = self.graph.shortest_segment_sequence(spawn, goal).ok()?;
        Some(Placed {
            spawn,
            goal,
            beta: rng.gen_range(-1.0..=1.0),
            route,
        })
    }

    /// Adds agents at random spawns whose footprints clear everyone placed so far.
    fn add_random_agents<R: Rng>(&self, rng: &mut R, placed: &mut Vec<Placed>, count: usize) {
        let mut attempts = 0;
        let target = placed.len() + count;
        while placed.len() < target && attempts < 50 * (count + 1) {
            attempts += 1;
            let Some(p) = self.random_generic_agent(rng) else { continue };
            let clash = placed.iter().any(|q| {
                q.spawn == p.spawn || {
                    let (a, b) = (self.pose_of(q.spawn), self.pose_of(p.spawn));
                    self.sim.footprint(a).overlaps(&self.sim.footprint(b))
                }
            });
            if !clash {
                placed.push(p);
            }
        }
    }

    fn pose_of(&self, p: LanePoint) -> crate::map::Pose {
        let seg = self.graph.segment(p.segment).unwrap();
        crate::map::Pose {
            position: seg.point_at(p.offset),
            heading: seg.heading_at(p.offset),
        }
    }

    fn assemble<R: Rng>(
        &self,
        rng: &mut R,
        kind: EpisodeKind,
        placed: Vec<Placed>,
        ego_slot: usize,
        conflict_slots: &[usize],
    ) -> (EpisodeSpec, Vec<AgentId>) {
        let mut ids: Vec<AgentId> = (0..placed.len() as AgentId).collect();
        ids.shuffle(rng);
        let agents = placed
            .into_iter()
            .zip(&ids)
            .map(|(p, &id)| AgentSpec {
                id,
                spawn: p.spawn,
                goal: p.goal,
                beta: p.beta,
                route: p.route,
            })
            .collect();
        let spec = EpisodeSpec {
            kind,
            setting: None,
            ego: ids[ego_slot],
            agents,
            conflict_agents: conflict_slots.iter().map(|&k| ids[k]).collect(),
            junction: None,
            junction_kind: None,
            perturbation: None,
            seed: rng.gen(),
        };
        (spec, ids)
    }

    /// Random agents with distinct, non-overlapping spawns and route-length
    /// bounded goals. Driver-types are uniform on [-1, 1].
    pub fn gen_generic<R: Rng>(&self, rng: &mut R) -> Result<EpisodeSpec, CurationError> {
        let (lo, hi) = self.cfg.generic_agents;
        for _ in 0..self.cfg.retry_limit {
            let n = rng.gen_range(lo..=hi);
            let mut placed = Vec::new();
            self.add_random_agents(rng, &mut placed, n);
            if placed.len() != n {
                continue;
            }
            let ego = rng.gen_range(0..n);
            let (spec, _) = self.assemble(rng, EpisodeKind::Generic, placed, ego, &[]);
            return Ok(spec);
        }
        Err(self.exhausted("generic"))
    }

    /// Generic-style scenes in which an always-Go ego collides while an
    /// Oracle-driven ego does not.
    pub fn gen_collision<R: Rng>(&self, rng: &mut R) -> Result<EpisodeSpec, CurationError> {
        for _ in 0..self.cfg.retry_limit {
            let mut spec = self.gen_generic(rng)?;
            spec.kind = EpisodeKind::Collision;
            if verify_collision(self.graph, &spec, &self.sim, &self.oracle)? {
                return Ok(spec);
            }
        }
        Err(self.exhausted("collision"))
    }

    fn goal_on(&self, lane: u32, rng: &mut impl Rng) -> LanePoint {
        let len = self.graph.segment(lane).unwrap().length();
        let (lo, hi) = self.cfg.goal_downstream;
        let hi = hi.min(len - 0.5);
        let lo = lo.min(hi);
        LanePoint::new(lane, rng.gen_range(lo..=hi))
    }

    /// Interaction episode of the given setting with arrival perturbation
    /// drawn uniformly from the configured jitter.
    pub fn gen_interaction<R: Rng>(&self, setting: u8, rng: &mut R) -> Result<EpisodeSpec, CurationError> {
        if !(1..=3).contains(&setting) {
            return Err(CurationError::BadSetting(setting));
        }
        for _ in 0..self.cfg.retry_limit {
            let j = self.cfg.jitter;
            let candidate = if setting == 3 {
                self.try_triple(rng)
            } else {
                let k = rng.gen_range(-j..=j);
                self.try_pair(setting, k, None, rng)
            };
            let Some(spec) = candidate else { continue };
            if verify_interaction(self.graph, &spec, &self.sim, &self.cfg).is_ok() {
                return Ok(spec);
            }
        }
        Err(self.exhausted(&format!("interaction setting {setting}")))
    }

    /// Setting-1 scene in which the other agent reaches the conflict point
    /// `offset` steps after the ego (negative: before). The arrival window
    /// is not enforced.
    pub fn gen_interaction_with_offset<R: Rng>(&self, offset: i32, rng: &mut R) -> Result<EpisodeSpec, CurationError> {
        for _ in 0..self.cfg.retry_limit {
            let Some(spec) = self.try_pair(1, offset, Some(0), rng) else { continue };
            let world = spec.instantiate(self.graph)?;
            if initial_overlap_free(&world, &self.sim) {
                return Ok(spec);
            }
        }
        Err(self.exhausted("offset interaction"))
    }

    /// Two conflict agents; the second arrives `k` steps after the first.
    /// The ego is the first (`Some(0)`), the second (`Some(1)`) or random.
    fn try_pair<R: Rng>(&self, setting: u8, k: i32, ego: Option<usize>, rng: &mut R) -> Option<EpisodeSpec> {
        let c = *self.conflicts.choose(rng)?;
        let (ia, sa, ib, sb) = if rng.gen_bool(0.5) { (c.a, c.s_a, c.b, c.s_b) } else { (c.b, c.s_b, c.a, c.s_a) };
        let (ma, mb) = (&self.moves[ia], &self.moves[ib]);
        let betas = [rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)];
        // Start positions in steps from the movement start, as a function of
        // the first agent's arrival step t: w = sigma - (t + k - 0.5).
        let sigma = [sa / self.stride(betas[0]), sb / self.stride(betas[1])];
        let ks = [0, k];
        let t = self.pick_arrival(rng, &[ia, ib], &betas, &sigma, &ks)?;
        let mut placed = Vec::new();
        for x in 0..2 {
            let w = sigma[x] - (t + ks[x]) as f64 + 0.5;
            placed.push(self.place(&self.moves[[ia, ib][x]], w, betas[x], rng)?);
        }
        if setting == 2 {
            let back = self.cfg.trailing_gap + self.sim.footprint_length;
            let lead = &placed[1];
            if lead.spawn.offset < back {
                return None;
            }
            placed.push(Placed {
                spawn: LanePoint::new(lead.spawn.segment, lead.spawn.offset - back),
                goal: lead.goal,
                beta: rng.gen_range(-1.0..=1.0),
                route: lead.route.clone(),
            });
        }
        let bg = rng.gen_range(self.cfg.background_agents.0..=self.cfg.background_agents.1);
        self.add_random_agents(rng, &mut placed, bg);
        let ego_slot = ego.unwrap_or_else(|| rng.gen_range(0..2));
        let (mut spec, _) = self.assemble(rng, EpisodeKind::Interaction, placed, ego_slot, &[0, 1]);
        spec.setting = Some(setting);
        spec.junction = Some(ma.junction);
        spec.junction_kind = Some(ma.kind);
        debug_assert_eq!(ma.junction, mb.junction);
        spec.perturbation = Some(if ego_slot == 0 { k } else { -k });
        Some(spec)
    }

    fn stride(&self, beta: f64) -> f64 {
        (2.7 * beta + 8.3) * self.sim.dt
    }

    /// Draws the reference arrival step `t` so that every agent starts on its
    /// incoming lane, where agent `x` starts `sigma[x] - (t + ks[x] - 0.5)`
    /// steps into its movement.
    fn pick_arrival<R: Rng>(&self, rng: &mut R, moves: &[usize], betas: &[f64], sigma: &[f64], ks: &[i32]) -> Option<i32> {
        let mut lo = self.cfg.min_arrival_steps as f64 - *ks.iter().min().unwrap() as f64;
        let mut hi = f64::INFINITY;
        for x in 0..moves.len() {
            let in_len = self.graph.segment(self.moves[moves[x]].in_lane()).unwrap().length();
            let room = in_len / self.stride(betas[x]);
            // 0 <= sigma - t - k + 0.5 <= room
            hi = hi.min(sigma[x] - ks[x] as f64 + 0.5);
            lo = lo.max(sigma[x] - ks[x] as f64 + 0.5 - room);
        }
        let (lo, hi) = (lo.ceil() as i32, hi.floor() as i32);
        (lo <= hi).then(|| rng.gen_range(lo..=hi))
    }

    /// Agent on movement `m` starting `w` steps into it.
    fn place(&self, m: &Movement, w: f64, beta: f64, rng: &mut impl Rng) -> Option<Placed> {
        let s = w * self.stride(beta);
        let in_len = self.graph.segment(m.in_lane()).unwrap().length();
        if !(0.0..=in_len).contains(&s) {
            return None;
        }
        Some(Placed {
            spawn: LanePoint::new(m.in_lane(), s),
            goal: self.goal_on(m.out_lane(), rng),
            beta,
            route: m.segments.clone(),
        })
    }

    fn try_triple<R: Rng>(&self, rng: &mut R) -> Option<EpisodeSpec> {
        let tri = *self.triples.choose(rng)?;
        let betas: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        // m[x][y]: steps for x to reach its meeting point with y from its movement start.
        let mut m = [[0.0f64; 3]; 3];
        for x in 0..3 {
            for y in 0..3 {
                if x != y {
                    let (mx, my) = (&self.moves[tri[x]], &self.moves[tri[y]]);
                    let (sx, _) = first_meeting(&mx.route, 0.0, &my.route, 0.0, MEET_TOLERANCE)?;
                    m[x][y] = sx / self.stride(betas[x]);
                }
            }
        }
        // Least-squares start offsets around the conflict cycle: we want
        // w_x - w_y = m[x][y] - m[y][x] for every pair.
        let c = |x: usize, y: usize| m[x][y] - m[y][x];
        let r = c(0, 1) + c(1, 2) + c(2, 0);
        let w0 = 0.0;
        let w1 = w0 - c(0, 1) + r / 3.0;
        let w2 = w1 - c(1, 2) + r / 3.0;
        let bases = [w0, w1, w2];
        // Express as sigma - t form with sigma_x = earliest meeting shifted by the base.
        let earliest = (0..3)
            .flat_map(|x| (0..3).filter(move |&y| y != x).map(move |y| (x, y)))
            .map(|(x, y)| m[x][y] - bases[x])
            .fold(f64::INFINITY, f64::min);
        let sigma: Vec<f64> = bases.iter().map(|b| b + earliest).collect();
        let j = self.cfg.jitter;
        let ks = [0, rng.gen_range(-j..=j), rng.gen_range(-j..=j)];
        let t = self.pick_arrival(rng, &tri, &betas, &sigma, &ks)?;
        let mut placed = Vec::new();
        for x in 0..3 {
            let w = sigma[x] - (t + ks[x]) as f64 + 0.5;
            placed.push(self.place(&self.moves[tri[x]], w, betas[x], rng)?);
        }
        let bg = rng.gen_range(self.cfg.background_agents.0..=self.cfg.background_agents.1);
        self.add_random_agents(rng, &mut placed, bg);
        let ego_slot = rng.gen_range(0..3);
        let (mut spec, _) = self.assemble(rng, EpisodeKind::Interaction, placed, ego_slot, &[0, 1, 2]);
        spec.setting = Some(3);
        spec.junction = Some(self.moves[tri[0]].junction);
        spec.junction_kind = Some(self.moves[tri[0]].kind);
        Some(spec)
    }
}

/// Arrival steps of every pair of conflict agents at their meeting point
/// under unconstrained all-Go motion: `(a, b, arrival_a, arrival_b)`.
pub fn conflict_arrivals(world: &WorldState, ids: &[AgentId], sim: &SimConfig) -> Option<Vec<(AgentId, AgentId, u32, u32)>> {
    let mut out = Vec::new();
    for x in 0..ids.len() {
        for y in x + 1..ids.len() {
            let (a, b): (&AgentState, &AgentState) = (world.agent(ids[x])?, world.agent(ids[y])?);
            let (sa, sb) = first_meeting(&a.route, 0.0, &b.route, 0.0, MEET_TOLERANCE)?;
            out.push((a.id, b.id, arrival_step(a.stride(sim.dt), sa), arrival_step(b.stride(sim.dt), sb)));
        }
    }
    Some(out)
}

/// Checks an interaction spec: overlap-free start and every pair of conflict
/// agents reaching its meeting point within the arrival window.
pub fn verify_interaction(
    graph: &LaneGraph,
    spec: &EpisodeSpec,
    sim: &SimConfig,
    cfg: &CurationConfig,
) -> Result<Vec<(AgentId, AgentId, u32, u32)>, String> {
    let world = spec.instantiate(graph).map_err(|e| e.to_string())?;
    if !initial_overlap_free(&world, sim) {
        return Err("agents overlap at t = 0".into());
    }
    let arrivals = conflict_arrivals(&world, &spec.conflict_agents, sim).ok_or("conflict agents never meet")?;
    for &(a, b, ta, tb) in &arrivals {
        if ta.abs_diff(tb) > cfg.arrival_window {
            return Err(format!("agents {a} and {b} arrive {ta} and {tb}"));
        }
    }
    Ok(arrivals)
}

/// True when an always-Go ego collides and an Oracle ego does not, with
/// Oracle-driven traffic in both runs.
pub fn verify_collision(
    graph: &LaneGraph,
    spec: &EpisodeSpec,
    sim: &SimConfig,
    oracle: &OracleConfig,
) -> Result<bool, CurationError> {
    let world = spec.instantiate(graph)?;
    if !initial_overlap_free(&world, sim) {
        return Ok(false);
    }
    let mut others = Oracle::new(sim.clone(), oracle.clone());
    let reckless = run_episode(world.clone(), &mut Constant(Action::Go), &mut others, sim, spec.seed);
    if reckless.status != EpisodeStatus::Collision {
        return Ok(false);
    }
    let mut ego = Oracle::new(sim.clone(), oracle.clone());
    let careful = run_episode(world, &mut ego, &mut others, sim, spec.seed);
    Ok(careful.status != EpisodeStatus::Collision)
}
