//! Shared planner plumbing: problem instances, configuration, the per-robot
//! motion pipeline, solution assembly and run reports.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clustering::{cluster_motions, ClusterConfig, ClusterMethod};
use crate::dbpibt::PibtStats;
use crate::dynamics::{Control, DynamicsModel, ModelKind, State};
use crate::error::{Error, Result};
use crate::geometry::{shapes_intersect, RobotBody, Workspace};
use crate::heuristics::{HeuristicConfig, HeuristicStats, RobotHeuristic};
use crate::primitives::{generate_primitives, replay, rollout_applicable, MotionRef, PrimitiveSet};

pub const SOLUTION_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct RobotSpec {
    pub model: DynamicsModel,
    pub body: RobotBody,
    pub start: State,
    pub goal: State,
}

#[derive(Clone, Debug)]
pub struct Instance {
    pub workspace: Arc<Workspace>,
    pub robots: Vec<RobotSpec>,
}

impl Instance {
    /// Checks dimensions, bounds and that starts are free and pairwise
    /// separated.
    pub fn validate(&self, margin: f64) -> Result<()> {
        let ws = &self.workspace;
        for (i, r) in self.robots.iter().enumerate() {
            r.model.validate()?;
            for (what, x) in [("start", &r.start), ("goal", &r.goal)] {
                if x.len() != r.model.state_dim() {
                    return Err(Error::DimensionMismatch {
                        what,
                        expected: r.model.state_dim(),
                        got: x.len(),
                    });
                }
                if !r.model.state_in_bounds(x) {
                    return Err(Error::InvalidScenario(format!("robot {i} {what} out of bounds")));
                }
            }
            if !r.body.state_free(ws, &r.start) {
                return Err(Error::InvalidScenario(format!("robot {i} start in collision")));
            }
        }
        for i in 0..self.robots.len() {
            for j in i + 1..self.robots.len() {
                let (a, b) = (&self.robots[i], &self.robots[j]);
                if shapes_intersect(&a.body, &a.start, &b.body, &b.start, margin)? {
                    return Err(Error::InvalidScenario(format!("starts of robots {i} and {j} collide")));
                }
            }
        }
        Ok(())
    }

    pub fn kinds(&self) -> Vec<ModelKind> {
        let mut k: Vec<ModelKind> = self.robots.iter().map(|r| r.model.kind).collect();
        k.sort_by_key(|k| k.id());
        k.dedup();
        k
    }
}

/// One primitive set per dynamics model.
pub type PrimitiveLibrary = BTreeMap<ModelKind, Arc<PrimitiveSet>>;

/// Generates `count` primitives of `horizon` steps for every model in the
/// instance.
pub fn generate_library(inst: &Instance, count: usize, horizon: usize, seed: u64) -> Result<PrimitiveLibrary> {
    let mut lib = PrimitiveLibrary::new();
    for r in &inst.robots {
        if lib.contains_key(&r.model.kind) {
            continue;
        }
        let set = generate_primitives(&r.model, count, horizon, seed)?;
        lib.insert(r.model.kind, Arc::new(set));
    }
    Ok(lib)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlannerKind {
    Dblacam,
    Dbpibt,
}

impl PlannerKind {
    pub fn id(self) -> &'static str {
        match self {
            PlannerKind::Dblacam => "dblacam",
            PlannerKind::Dbpibt => "dbpibt",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub planner: PlannerKind,
    /// Discontinuity bound.
    pub delta: f64,
    pub alpha: f64,
    pub delta_g: f64,
    /// Extra clearance between robots.
    pub margin: f64,
    pub heuristic: HeuristicConfig,
    pub cluster: ClusterConfig,
    pub livelock: bool,
    pub livelock_window: usize,
    pub livelock_alternations: usize,
    /// Explored-table cell size for linear dims; `None` means `delta / 2`.
    pub explored_res: Option<f64>,
    pub explored_angle_res: f64,
    pub time_limit: Option<f64>,
    pub node_budget: Option<usize>,
    /// Horizon cap for the standalone low-level planner.
    pub max_horizons: usize,
    /// Extra primitive rounds appended between restarts; 0 disables.
    pub incremental_rounds: usize,
    pub incremental_count: usize,
    pub seed: u64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            planner: PlannerKind::Dblacam,
            delta: 0.5,
            alpha: 1.0,
            delta_g: 0.3,
            margin: 0.0,
            heuristic: HeuristicConfig::default(),
            cluster: ClusterConfig::default(),
            livelock: true,
            livelock_window: 5,
            livelock_alternations: 3,
            explored_res: None,
            explored_angle_res: PI / 8.0,
            time_limit: Some(60.0),
            node_budget: None,
            max_horizons: 500,
            incremental_rounds: 0,
            incremental_count: 100,
            seed: 0,
        }
    }
}

impl PlannerConfig {
    pub fn alpha_delta(&self) -> f64 {
        self.alpha * self.delta
    }

    fn heuristic_config(&self) -> HeuristicConfig {
        HeuristicConfig {
            goal_tolerance: self.delta_g,
            alpha_delta: self.alpha_delta(),
            ..self.heuristic.clone()
        }
    }
}

/// Wall-clock breakdown of one run.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Timing {
    pub total: Duration,
    pub heuristic: Duration,
    pub rollout: Duration,
    pub clustering: Duration,
    pub collision_planned: Duration,
    pub collision_unplanned: Duration,
}

impl Timing {
    /// Component names and seconds, in a fixed order.
    pub fn columns(&self) -> [(&'static str, f64); 6] {
        [
            ("total_s", self.total.as_secs_f64()),
            ("heuristic_s", self.heuristic.as_secs_f64()),
            ("collision_unplanned_s", self.collision_unplanned.as_secs_f64()),
            ("clustering_s", self.clustering.as_secs_f64()),
            ("collision_planned_s", self.collision_planned.as_secs_f64()),
            ("rollout_s", self.rollout.as_secs_f64()),
        ]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchStats {
    pub iterations: usize,
    pub nodes: usize,
    pub horizons: usize,
    pub pibt: PibtStats,
    pub heuristic: HeuristicStats,
    pub livelock_flags: usize,
    pub primitive_rounds: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotPath {
    pub states: Vec<State>,
    pub controls: Vec<Control>,
    /// Steps until the robot last enters its goal region.
    pub k: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub version: u32,
    pub planner: PlannerKind,
    pub seed: u64,
    pub cost: f64,
    pub robots: Vec<RobotPath>,
    pub stats: SearchStats,
    pub models: Vec<DynamicsModel>,
    pub config: PlannerConfig,
}

impl Solution {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Solution = serde_json::from_str(text)?;
        if s.version != SOLUTION_VERSION {
            return Err(Error::InvalidScenario(format!("unsupported solution version {}", s.version)));
        }
        Ok(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Solved,
    NoSolution,
    Timeout,
    BudgetExhausted,
}

#[derive(Clone, Debug)]
pub struct PlanReport {
    pub status: Status,
    pub solution: Option<Solution>,
    pub stats: SearchStats,
    pub timing: Timing,
    pub reason: Option<String>,
}

/// Concatenates per-horizon motions into per-robot paths. Trailing motions
/// that hold the state are dropped; `k` counts steps up to the last state
/// outside the goal region.
pub fn assemble_paths(inst: &Instance, horizons: &[Vec<MotionRef>], delta_g: f64) -> (Vec<RobotPath>, f64) {
    let mut paths = Vec::with_capacity(inst.robots.len());
    let mut cost = 0.0;
    for (i, r) in inst.robots.iter().enumerate() {
        let mut used = horizons.len();
        while used > 0 && horizons[used - 1][i].states.windows(2).all(|w| w[0] == w[1]) {
            used -= 1;
        }
        let mut states = vec![r.start.clone()];
        let mut controls = Vec::new();
        for h in &horizons[..used] {
            let m = &h[i];
            states.extend(m.states[1..].iter().cloned());
            controls.extend(m.controls.iter().cloned());
        }
        let k = states
            .iter()
            .rposition(|x| r.model.distance_unchecked(x, &r.goal) > delta_g)
            .map_or(0, |p| p + 1);
        cost += k as f64 * r.model.dt;
        paths.push(RobotPath { states, controls, k });
    }
    (paths, cost)
}

/// Per-run planner state: heuristics, primitive sets, rng and counters.
pub struct Context<'a> {
    pub inst: &'a Instance,
    pub cfg: &'a PlannerConfig,
    pub prims: Vec<Arc<PrimitiveSet>>,
    pub heuristics: Vec<RobotHeuristic>,
    rng: ChaCha8Rng,
    pub timing: Timing,
    pub stats: SearchStats,
    started: Instant,
}

impl<'a> Context<'a> {
    /// Builds per-robot heuristics. Fails with `InvalidGoal` when a goal is
    /// in collision.
    pub fn new(inst: &'a Instance, lib: &PrimitiveLibrary, cfg: &'a PlannerConfig) -> Result<Self> {
        let started = Instant::now();
        let mut timing = Timing::default();
        let mut prims = Vec::with_capacity(inst.robots.len());
        let mut heuristics = Vec::with_capacity(inst.robots.len());
        for (i, r) in inst.robots.iter().enumerate() {
            let set = lib
                .get(&r.model.kind)
                .ok_or_else(|| Error::InvalidScenario(format!("no primitives for model {}", r.model.kind.id())))?;
            if set.model.dt != r.model.dt {
                return Err(Error::InvalidScenario(format!(
                    "primitive dt {} differs from robot {i} dt {}",
                    set.model.dt, r.model.dt
                )));
            }
            prims.push(set.clone());
            let t = Instant::now();
            heuristics.push(RobotHeuristic::build(
                i,
                inst.workspace.clone(),
                r.body.clone(),
                r.model.clone(),
                set.clone(),
                &r.start,
                &r.goal,
                cfg.heuristic_config(),
                cfg.seed,
            )?);
            timing.heuristic += t.elapsed();
        }
        Ok(Context {
            inst,
            cfg,
            prims,
            heuristics,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5EED)),
            timing,
            stats: SearchStats::default(),
            started,
        })
    }

    pub fn elapsed(&self) -> Duration {
        self.started.elapsed()
    }

    pub fn timed_out(&self) -> bool {
        self.cfg.time_limit.is_some_and(|t| self.elapsed().as_secs_f64() >= t)
    }

    pub fn at_goal(&self, x: &[State]) -> bool {
        self.inst
            .robots
            .iter()
            .zip(x)
            .all(|(r, s)| r.model.distance_unchecked(s, &r.goal) <= self.cfg.delta_g)
    }

    pub fn goal_distances(&self, x: &[State]) -> Vec<f64> {
        self.inst
            .robots
            .iter()
            .zip(x)
            .map(|(r, s)| r.model.distance_unchecked(s, &r.goal))
            .collect()
    }

    pub fn value(&mut self, robot: usize, x: &State) -> f64 {
        let t = Instant::now();
        let h = self.heuristics[robot].value(x);
        self.timing.heuristic += t.elapsed();
        h
    }

    /// Applicable motions, rolled out, scored and ordered, for every robot.
    /// Robots in `flagged` are clustered by final-state proximity.
    pub fn process_motions(&mut self, x: &[State], flagged: &[bool]) -> Vec<Vec<MotionRef>> {
        let ad = self.cfg.alpha_delta();
        let mut out = Vec::with_capacity(x.len());
        for (i, r) in self.inst.robots.iter().enumerate() {
            let t = Instant::now();
            let cands = self.prims[i].applicable_motions(&x[i], ad);
            let mut rolled = rollout_applicable(&r.model, &self.inst.workspace, &r.body, i, &x[i], &cands);
            self.timing.rollout += t.elapsed();

            let t = Instant::now();
            self.heuristics[i].assign(&mut rolled);
            self.timing.heuristic += t.elapsed();

            let t = Instant::now();
            let method = match self.cfg.cluster.method {
                ClusterMethod::None => ClusterMethod::None,
                _ if flagged.get(i).copied().unwrap_or(false) => ClusterMethod::Scgoc,
                m => m,
            };
            let stay = rolled.iter().find(|m| m.is_stay()).cloned();
            let mut ordered = cluster_motions(rolled, method, &self.cfg.cluster, r.model.kind, &r.model.metric(), &mut self.rng);
            // selection may thin the stay motion away; keep it as a last resort
            if let Some(stay) = stay {
                if !ordered.iter().any(|m| m.is_stay()) {
                    ordered.push(stay);
                }
            }
            self.timing.clustering += t.elapsed();
            out.push(ordered.into_iter().map(Arc::new).collect());
        }
        out
    }

    /// Rebuilds robot `i`'s motion along primitive `prim` from `x`.
    pub fn hydrate(&mut self, i: usize, x: &State, prim: usize, h: f64) -> MotionRef {
        let t = Instant::now();
        let r = &self.inst.robots[i];
        let m = replay(&r.model, &r.body, i, x, &self.prims[i].primitives[prim], h);
        self.timing.rollout += t.elapsed();
        Arc::new(m)
    }

    pub fn finish(mut self, status: Status, horizons: Option<&[Vec<MotionRef>]>, reason: Option<String>) -> PlanReport {
        self.stats.heuristic = HeuristicStats::default();
        for h in &self.heuristics {
            let s = h.stats;
            let a = &mut self.stats.heuristic;
            a.queries += s.queries;
            a.table_hits += s.table_hits;
            a.est_calls += s.est_calls;
            a.est_successes += s.est_successes;
            a.est_expansions += s.est_expansions;
            a.fallbacks += s.fallbacks;
        }
        self.timing.collision_planned = self.stats.pibt.planned_time;
        self.timing.collision_unplanned = self.stats.pibt.unplanned_time;
        self.timing.total = self.elapsed();
        if let Some(h) = horizons {
            self.stats.horizons = h.len();
        }
        let solution = horizons.map(|h| {
            let (robots, cost) = assemble_paths(self.inst, h, self.cfg.delta_g);
            Solution {
                version: SOLUTION_VERSION,
                planner: self.cfg.planner,
                seed: self.cfg.seed,
                cost,
                robots,
                stats: self.stats,
                models: self.inst.robots.iter().map(|r| r.model.clone()).collect(),
                config: self.cfg.clone(),
            }
        });
        PlanReport {
            status,
            solution,
            stats: self.stats,
            timing: self.timing,
            reason,
        }
    }
}

/// Report for an instance that cannot start, e.g. a goal in collision.
pub fn unsolvable(reason: String, elapsed: Duration) -> PlanReport {
    PlanReport {
        status: Status::NoSolution,
        solution: None,
        stats: SearchStats::default(),
        timing: Timing {
            total: elapsed,
            ..Default::default()
        },
        reason: Some(reason),
    }
}

/// Runs the configured planner.
pub fn plan(inst: &Instance, lib: &PrimitiveLibrary, cfg: &PlannerConfig) -> Result<PlanReport> {
    match cfg.planner {
        PlannerKind::Dblacam => crate::dblacam::search_incremental(inst, lib, cfg),
        PlannerKind::Dbpibt => crate::dbpibt::plan_standalone(inst, lib, cfg),
    }
}
