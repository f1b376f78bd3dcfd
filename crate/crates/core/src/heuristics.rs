//! Cost-to-go estimation for motions.
//!
//! Two levels cooperate. A reverse wavefront over a workspace grid, seeded
//! at the goal position, gives a coarse time estimate that knows about
//! obstacle topology. States along its shortest corridor from the start
//! populate the reverse lookup table. Queries that find no stored state
//! within the lookup threshold run a guided expansive-space tree forward
//! under the full dynamics; the states on a successful branch are stored in
//! the forward table with their remaining durations.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{angle_diff, DimKind, DynamicsModel, State, Vector};
use crate::error::{Error, Result};
use crate::geometry::{PosedShape, RobotBody, Workspace};
use crate::nn::DynamicIndex;
use crate::primitives::{PrimitiveSet, RolledMotion};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeuristicMode {
    Hest,
    ReverseGridOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeuristicConfig {
    pub mode: HeuristicMode,
    /// Lookup threshold for reusing a stored state's value.
    pub lookup_distance: f64,
    pub goal_tolerance: f64,
    /// Discontinuity radius used when the forward tree picks primitives.
    pub alpha_delta: f64,
    pub grid_resolution: f64,
    pub est_budget: usize,
    pub fallback_inflation: f64,
    pub density_radius: f64,
    /// Primitives tried per tree expansion; the one ending closest to the
    /// goal under the coarse estimate is kept.
    pub est_samples: usize,
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        HeuristicConfig {
            mode: HeuristicMode::Hest,
            lookup_distance: 1.0,
            goal_tolerance: 0.3,
            alpha_delta: 0.5,
            grid_resolution: 0.25,
            est_budget: 2000,
            fallback_inflation: 2.0,
            density_radius: 0.5,
            est_samples: 5,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HeuristicStats {
    pub queries: usize,
    pub table_hits: usize,
    pub est_calls: usize,
    pub est_successes: usize,
    pub est_expansions: usize,
    pub fallbacks: usize,
}

#[derive(Clone, Copy, Debug)]
struct HeapItem(f64, usize);

impl PartialEq for HeapItem {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for HeapItem {}
impl PartialOrd for HeapItem {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for HeapItem {
    fn cmp(&self, o: &Self) -> Ordering {
        o.0.total_cmp(&self.0).then(o.1.cmp(&self.1))
    }
}

/// Grid distances (meters) from the goal position over free cells.
#[derive(Clone, Debug)]
pub struct Wavefront {
    dim: usize,
    res: f64,
    origin: [f64; 3],
    counts: [usize; 3],
    plane_z: f64,
    blocked: Vec<bool>,
    dist: Vec<f64>,
    /// Every cell left unsettled is at least this far from the goal.
    frontier: f64,
    complete: bool,
    goal: [f64; 3],
    settled: usize,
}

impl Wavefront {
    /// Dijkstra over the 8- (2D) or 26-connected (3D) grid. Cells whose
    /// center is closer than `clearance` to an obstacle or the boundary are
    /// blocked. With `stop_near` set the sweep ends once that position is
    /// settled and the frontier has moved a margin past it.
    pub fn compute(
        ws: &Workspace,
        dim: usize,
        plane_z: f64,
        goal: [f64; 3],
        res: f64,
        clearance: f64,
        stop_near: Option<[f64; 3]>,
    ) -> Wavefront {
        let mut origin = [0.0; 3];
        let mut counts = [1usize; 3];
        for i in 0..dim {
            origin[i] = ws.lower[i];
            counts[i] = ((ws.upper[i] - ws.lower[i]) / res).ceil().max(1.0) as usize;
        }
        let n = counts[0] * counts[1] * counts[2];
        let mut wf = Wavefront {
            dim,
            res,
            origin,
            counts,
            plane_z,
            blocked: vec![false; n],
            dist: vec![f64::INFINITY; n],
            frontier: 0.0,
            complete: false,
            goal,
            settled: 0,
        };
        for c in 0..n {
            let p = wf.center(c);
            wf.blocked[c] = !ws.point_free(p) || (clearance > 0.0 && !ws.shape_free(&PosedShape::sphere(ws.dim, p, clearance)));
        }
        let offsets = wf.offsets();
        let start_cell = wf.cell_of(goal);
        let target = stop_near.map(|p| wf.cell_of(p));
        let mut heap = BinaryHeap::new();
        let mut done = vec![false; n];
        wf.dist[start_cell] = 0.0;
        heap.push(HeapItem(0.0, start_cell));
        let mut stop_at = f64::INFINITY;
        while let Some(HeapItem(d, c)) = heap.pop() {
            if done[c] {
                continue;
            }
            if d > stop_at {
                wf.frontier = d;
                return wf;
            }
            done[c] = true;
            wf.settled += 1;
            wf.frontier = d;
            if Some(c) == target {
                stop_at = d * 1.25 + 2.0 * res;
            }
            let idx = wf.unindex(c);
            for (off, len) in &offsets {
                let mut nb = [0usize; 3];
                let mut ok = true;
                for i in 0..3 {
                    let v = idx[i] as i64 + off[i];
                    if v < 0 || v >= wf.counts[i] as i64 {
                        ok = false;
                        break;
                    }
                    nb[i] = v as usize;
                }
                if !ok {
                    continue;
                }
                let m = wf.index(nb);
                if wf.blocked[m] || done[m] {
                    continue;
                }
                let nd = d + len * res;
                if nd < wf.dist[m] {
                    wf.dist[m] = nd;
                    heap.push(HeapItem(nd, m));
                }
            }
        }
        wf.complete = true;
        wf
    }

    fn offsets(&self) -> Vec<([i64; 3], f64)> {
        let zr: i64 = if self.dim == 3 { 1 } else { 0 };
        let mut out = Vec::new();
        for dz in -zr..=zr {
            for dy in -1..=1i64 {
                for dx in -1..=1i64 {
                    if dx == 0 && dy == 0 && dz == 0 {
                        continue;
                    }
                    let len = ((dx * dx + dy * dy + dz * dz) as f64).sqrt();
                    out.push(([dx, dy, dz], len));
                }
            }
        }
        out
    }

    fn neighbors<'a>(&'a self, c: usize, offsets: &'a [([i64; 3], f64)]) -> impl Iterator<Item = usize> + 'a {
        let idx = self.unindex(c);
        offsets.iter().filter_map(move |(off, _)| {
            let mut nb = [0usize; 3];
            for i in 0..3 {
                let v = idx[i] as i64 + off[i];
                if v < 0 || v >= self.counts[i] as i64 {
                    return None;
                }
                nb[i] = v as usize;
            }
            Some(self.index(nb))
        })
    }

    fn index(&self, i: [usize; 3]) -> usize {
        (i[2] * self.counts[1] + i[1]) * self.counts[0] + i[0]
    }

    fn unindex(&self, c: usize) -> [usize; 3] {
        let x = c % self.counts[0];
        let y = (c / self.counts[0]) % self.counts[1];
        let z = c / (self.counts[0] * self.counts[1]);
        [x, y, z]
    }

    fn center(&self, c: usize) -> [f64; 3] {
        let i = self.unindex(c);
        let mut p = [0.0, 0.0, self.plane_z];
        for d in 0..self.dim {
            p[d] = self.origin[d] + (i[d] as f64 + 0.5) * self.res;
        }
        p
    }

    fn cell_of(&self, p: [f64; 3]) -> usize {
        let mut i = [0usize; 3];
        for d in 0..self.dim {
            let v = ((p[d] - self.origin[d]) / self.res).floor();
            i[d] = v.clamp(0.0, (self.counts[d] - 1) as f64) as usize;
        }
        self.index(i)
    }

    pub fn cells(&self) -> usize {
        self.dist.len()
    }

    pub fn settled(&self) -> usize {
        self.settled
    }

    pub fn is_complete(&self) -> bool {
        self.complete
    }

    fn euclid(&self, p: [f64; 3]) -> f64 {
        (0..self.dim).map(|d| (p[d] - self.goal[d]).powi(2)).sum::<f64>().sqrt()
    }

    /// Grid distance in meters, never below the straight-line distance.
    /// `None` for positions the sweep proved unreachable.
    pub fn value(&self, p: [f64; 3]) -> Option<f64> {
        let c = self.cell_of(p);
        let euclid = self.euclid(p);
        let d = if self.dist[c].is_finite() && !self.blocked[c] {
            self.dist[c]
        } else if self.blocked[c] {
            let idx = self.unindex(c);
            let mut best = f64::INFINITY;
            for (off, len) in self.offsets() {
                let mut nb = [0usize; 3];
                let mut ok = true;
                for i in 0..3 {
                    let v = idx[i] as i64 + off[i];
                    if v < 0 || v >= self.counts[i] as i64 {
                        ok = false;
                        break;
                    }
                    nb[i] = v as usize;
                }
                if ok {
                    let m = self.index(nb);
                    if !self.blocked[m] && self.dist[m].is_finite() {
                        best = best.min(self.dist[m] + len * self.res);
                    }
                }
            }
            if best.is_finite() {
                best
            } else if self.complete {
                return None;
            } else {
                self.frontier
            }
        } else if self.complete {
            return None;
        } else {
            self.frontier
        };
        Some(d.max(euclid))
    }

    /// Cell centers from `from` down the steepest descent to the goal cell.
    pub fn corridor(&self, from: [f64; 3]) -> Vec<([f64; 3], f64)> {
        let mut c = self.cell_of(from);
        let mut out = Vec::new();
        let offsets = self.offsets();
        if !self.dist[c].is_finite() {
            // start cell too close to an obstacle: enter through a neighbor
            match self.neighbors(c, &offsets).min_by(|a, b| self.dist[*a].total_cmp(&self.dist[*b])) {
                Some(m) if self.dist[m].is_finite() => c = m,
                _ => return out,
            }
        }
        loop {
            out.push((self.center(c), self.dist[c]));
            if self.dist[c] == 0.0 {
                break;
            }
            let mut next = None;
            let mut best = self.dist[c];
            for m in self.neighbors(c, &offsets) {
                if self.dist[m] < best {
                    best = self.dist[m];
                    next = Some(m);
                }
            }
            match next {
                Some(m) => c = m,
                None => break,
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableKind {
    Reverse,
    Forward,
}

/// Insert-only store of states with their cost-to-go in seconds.
#[derive(Clone, Debug)]
pub struct HeuristicTable {
    pub kind: TableKind,
    pub robot: usize,
    index: DynamicIndex,
    entries: Vec<(State, f64)>,
}

impl HeuristicTable {
    pub fn new(kind: TableKind, robot: usize, model: &DynamicsModel) -> Self {
        HeuristicTable {
            kind,
            robot,
            index: DynamicIndex::new(model.metric()),
            entries: Vec::new(),
        }
    }

    pub fn insert(&mut self, x: State, h: f64) {
        debug_assert!(h >= 0.0);
        self.index.insert(x.values(), self.entries.len());
        self.entries.push((x, h.max(0.0)));
    }

    pub fn nearest(&self, x: &State) -> Option<(&State, f64, f64)> {
        self.index
            .nearest(x.values())
            .map(|(id, d)| (&self.entries[id].0, self.entries[id].1, d))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(State, f64)] {
        &self.entries
    }
}

/// Time lower bound: straight-line travel at top speed, or turning to the
/// goal heading at the top yaw rate, whichever is longer.
fn travel_floor(model: &DynamicsModel, x: &State, goal: &State, max_speed: f64) -> f64 {
    let travel = model.position_distance(x, goal) / max_speed;
    match (model.kind.heading_index(), model.max_turn_rate()) {
        (Some(i), Some(w)) if w > 0.0 => travel.max(angle_diff(x.values()[i], goal.values()[i]).abs() / w),
        _ => travel,
    }
}

/// Coarse time-to-goal from the wavefront.
#[derive(Clone, Debug)]
pub struct ReverseEstimate {
    pub wave: Wavefront,
    pub max_speed: f64,
    pub goal: State,
    model: DynamicsModel,
    goal_tolerance: f64,
    inflation: f64,
}

impl ReverseEstimate {
    fn position(&self, x: &State) -> [f64; 3] {
        let p = self.model.kind.position_dim();
        let mut out = [0.0, 0.0, self.wave.plane_z];
        out[..p].copy_from_slice(&x.values()[..p]);
        out
    }

    pub fn estimate(&self, x: &State) -> f64 {
        if self.model.distance_unchecked(x, &self.goal) <= self.goal_tolerance {
            return 0.0;
        }
        let p = self.position(x);
        let coarse = match self.wave.value(p) {
            Some(d) => d / self.max_speed,
            None => self.wave.euclid(p) / self.max_speed * self.inflation,
        };
        coarse.max(travel_floor(&self.model, x, &self.goal, self.max_speed))
    }
}

struct EstNode {
    state: State,
    parent: Option<usize>,
    cost: f64,
    density: u32,
    reverse: f64,
    failures: u32,
}

/// Per-robot heuristic: reverse estimate, lookup tables and forward trees.
pub struct RobotHeuristic {
    pub robot: usize,
    pub config: HeuristicConfig,
    model: DynamicsModel,
    body: RobotBody,
    ws: Arc<Workspace>,
    primitives: Arc<PrimitiveSet>,
    pub reverse: ReverseEstimate,
    pub reverse_table: HeuristicTable,
    pub forward_table: HeuristicTable,
    rng: ChaCha8Rng,
    pub stats: HeuristicStats,
}

impl RobotHeuristic {
    /// Builds the reverse estimate for one robot. In grid-only mode the sweep
    /// covers the whole workspace; otherwise it stops shortly past `start`.
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        robot: usize,
        ws: Arc<Workspace>,
        body: RobotBody,
        model: DynamicsModel,
        primitives: Arc<PrimitiveSet>,
        start: &State,
        goal: &State,
        config: HeuristicConfig,
        seed: u64,
    ) -> Result<Self> {
        if !body.state_free(&ws, goal) {
            return Err(Error::InvalidGoal { robot });
        }
        let pdim = model.kind.position_dim();
        let pos = |x: &State| {
            let mut p = [0.0, 0.0, body.plane_z];
            p[..pdim].copy_from_slice(&x.values()[..pdim]);
            p
        };
        let stop = match config.mode {
            HeuristicMode::Hest => Some(pos(start)),
            HeuristicMode::ReverseGridOnly => None,
        };
        let clearance = body.shape.min_extent();
        let wave = Wavefront::compute(&ws, pdim, body.plane_z, pos(goal), config.grid_resolution, clearance, stop);
        let reverse = ReverseEstimate {
            wave,
            max_speed: model.max_speed(),
            goal: goal.clone(),
            model: model.clone(),
            goal_tolerance: config.goal_tolerance,
            inflation: config.fallback_inflation,
        };
        let mut reverse_table = HeuristicTable::new(TableKind::Reverse, robot, &model);
        if config.mode == HeuristicMode::Hest {
            let corridor = reverse.wave.corridor(pos(start));
            for (k, (p, d)) in corridor.iter().enumerate() {
                let heading = corridor
                    .get(k + 1)
                    .map(|(q, _)| (q[1] - p[1]).atan2(q[0] - p[0]))
                    .unwrap_or(0.0);
                let x = corridor_state(&model, goal, *p, heading);
                let h = if model.distance_unchecked(&x, goal) <= config.goal_tolerance {
                    0.0
                } else {
                    (d / reverse.max_speed).max(travel_floor(&model, &x, goal, reverse.max_speed))
                };
                reverse_table.insert(x, h);
            }
            reverse_table.insert(goal.clone(), 0.0);
        }
        Ok(RobotHeuristic {
            robot,
            config,
            forward_table: HeuristicTable::new(TableKind::Forward, robot, &model),
            model,
            body,
            ws,
            primitives,
            reverse,
            reverse_table,
            rng: ChaCha8Rng::seed_from_u64(seed ^ (robot as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
            stats: HeuristicStats::default(),
        })
    }

    pub fn goal(&self) -> &State {
        &self.reverse.goal
    }

    fn at_goal(&self, x: &State) -> bool {
        self.model.distance_unchecked(x, &self.reverse.goal) <= self.config.goal_tolerance
    }

    fn floor(&self, x: &State) -> f64 {
        travel_floor(&self.model, x, &self.reverse.goal, self.reverse.max_speed)
    }

    fn finish(&self, x: &State, h: f64) -> f64 {
        if self.at_goal(x) {
            0.0
        } else {
            h.max(self.floor(x))
        }
    }

    /// Cost-to-go of a single state.
    pub fn value(&mut self, x: &State) -> f64 {
        self.stats.queries += 1;
        if self.at_goal(x) {
            return 0.0;
        }
        let h = match self.config.mode {
            HeuristicMode::ReverseGridOnly => self.reverse.estimate(x),
            HeuristicMode::Hest => match self.lookup(x) {
                Some(h) => {
                    self.stats.table_hits += 1;
                    h
                }
                None => self.est_search(x),
            },
        };
        self.finish(x, h)
    }

    fn lookup(&self, x: &State) -> Option<f64> {
        let r = self.reverse_table.nearest(x);
        let f = self.forward_table.nearest(x);
        let best = match (r, f) {
            (Some(a), Some(b)) => Some(if b.2 < a.2 { b } else { a }),
            (a, b) => a.or(b),
        };
        best.filter(|(_, _, d)| *d <= self.config.lookup_distance).map(|(_, h, _)| h)
    }

    /// Assigns `h` to the final state of every motion.
    pub fn assign(&mut self, motions: &mut [RolledMotion]) {
        for m in motions.iter_mut() {
            let x = m.final_state().clone();
            m.h = self.value(&x);
        }
    }

    /// Forward guided tree search from `x`. Returns a forward-table value
    /// within the lookup threshold, or the cost of a branch that reaches
    /// the goal or comes within the threshold of any stored state (plus that
    /// state's value), or the inflated coarse estimate when the budget runs
    /// out.
    pub fn est_forward(&mut self, x: &State) -> f64 {
        self.stats.queries += 1;
        if self.at_goal(x) {
            return 0.0;
        }
        if let Some((_, h, d)) = self.forward_table.nearest(x) {
            if d <= self.config.lookup_distance {
                self.stats.table_hits += 1;
                return self.finish(x, h);
            }
        }
        let h = self.est_search(x);
        self.finish(x, h)
    }

    fn est_search(&mut self, x: &State) -> f64 {
        self.stats.est_calls += 1;
        let cfg = self.config.clone();
        let dt = self.model.dt;
        let mut density_index = DynamicIndex::new(self.model.metric());
        let mut nodes: Vec<EstNode> = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        let push = |nodes: &mut Vec<EstNode>,
                    weights: &mut Vec<f64>,
                    index: &mut DynamicIndex,
                    node: EstNode| {
            let near = index.within(node.state.values(), cfg.density_radius);
            for &j in &near {
                nodes[j].density += 1;
                weights[j] = est_weight(&nodes[j]);
            }
            let mut node = node;
            node.density = near.len() as u32;
            index.insert(node.state.values(), nodes.len());
            weights.push(est_weight(&node));
            nodes.push(node);
        };
        let root_reverse = self.reverse.estimate(x);
        push(
            &mut nodes,
            &mut weights,
            &mut density_index,
            EstNode {
                state: x.clone(),
                parent: None,
                cost: 0.0,
                density: 0,
                reverse: root_reverse,
                failures: 0,
            },
        );
        let mut found: Option<(usize, f64)> = None;
        for _ in 0..cfg.est_budget {
            let total: f64 = weights.iter().sum();
            if !(total > 0.0) {
                break;
            }
            let mut pick = self.rng.gen_range(0.0..total);
            let mut sel = weights.len() - 1;
            for (i, w) in weights.iter().enumerate() {
                if pick < *w {
                    sel = i;
                    break;
                }
                pick -= w;
            }
            self.stats.est_expansions += 1;
            let from = nodes[sel].state.clone();
            let cands = self.primitives.applicable(&from, cfg.alpha_delta);
            if cands.is_empty() {
                weights[sel] = 0.0;
                continue;
            }
            let mut best: Option<(Vec<State>, f64)> = None;
            let mut joined: Option<(Vec<State>, f64)> = None;
            for _ in 0..cfg.est_samples.max(1) {
                let p = &self.primitives.primitives[cands[self.rng.gen_range(0..cands.len())]];
                let mut states = Vec::with_capacity(p.controls.len() + 1);
                states.push(from.clone());
                let mut ok = true;
                let mut goal_at = None;
                for (k, u) in p.controls.iter().enumerate() {
                    let next = self.model.step_unchecked(states.last().unwrap(), u);
                    if !self.model.state_in_bounds(&next) || !self.body.state_free(&self.ws, &next) {
                        ok = false;
                        break;
                    }
                    let reached = self.at_goal(&next);
                    states.push(next);
                    if reached {
                        goal_at = Some(k + 1);
                        break;
                    }
                }
                if !ok {
                    continue;
                }
                if let Some(k) = goal_at {
                    found = Some((sel, nodes[sel].cost + k as f64 * dt));
                    break;
                }
                if let Some(h) = self.lookup(states.last().unwrap()) {
                    joined = Some((states, h));
                    break;
                }
                let score = self.reverse.estimate(states.last().unwrap());
                if best.as_ref().map_or(true, |(_, s)| score < *s) {
                    best = Some((states, score));
                }
            }
            if found.is_some() {
                break;
            }
            if let Some((states, h)) = joined {
                // reached a stored state: its value completes the estimate
                let cost = nodes[sel].cost + (states.len() - 1) as f64 * dt;
                let x = states.last().unwrap().clone();
                let reverse = self.reverse.estimate(&x);
                push(
                    &mut nodes,
                    &mut weights,
                    &mut density_index,
                    EstNode {
                        state: x,
                        parent: Some(sel),
                        cost,
                        density: 0,
                        reverse,
                        failures: 0,
                    },
                );
                found = Some((nodes.len() - 1, cost + h));
                break;
            }
            match best {
                Some((states, score)) => {
                    let cost = nodes[sel].cost + (states.len() - 1) as f64 * dt;
                    push(
                        &mut nodes,
                        &mut weights,
                        &mut density_index,
                        EstNode {
                            state: states.last().unwrap().clone(),
                            parent: Some(sel),
                            cost,
                            density: 0,
                            reverse: score,
                            failures: 0,
                        },
                    );
                }
                None => {
                    nodes[sel].failures += 1;
                    if nodes[sel].failures >= 3 {
                        weights[sel] = 0.0;
                    }
                }
            }
        }
        match found {
            Some((leaf, total)) => {
                self.stats.est_successes += 1;
                // a random branch can be far longer than needed; no stored
                // value exceeds what a failed search would have returned
                let mut n = Some(leaf);
                while let Some(i) = n {
                    let remaining = (total - nodes[i].cost).min(nodes[i].reverse * cfg.fallback_inflation);
                    self.forward_table.insert(nodes[i].state.clone(), remaining);
                    n = nodes[i].parent;
                }
                total.min(root_reverse * cfg.fallback_inflation)
            }
            None => {
                self.stats.fallbacks += 1;
                root_reverse * cfg.fallback_inflation
            }
        }
    }
}

fn est_weight(n: &EstNode) -> f64 {
    1.0 / (1.0 + n.density as f64) * 1.0 / (1.0 + n.reverse)
}

fn corridor_state(model: &DynamicsModel, goal: &State, p: [f64; 3], heading: f64) -> State {
    let pdim = model.kind.position_dim();
    let mut v = Vector::from_elem(0.0, model.state_dim());
    for (i, k) in model.dim_kinds().iter().enumerate() {
        v[i] = match k {
            DimKind::Position => p[i],
            DimKind::Angle => heading,
            DimKind::Velocity => 0.0,
        };
    }
    if p[..pdim] == goal.values()[..pdim] {
        return goal.clone();
    }
    State(v)
}
