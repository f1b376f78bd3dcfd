//! High-level lazy search over joint configurations. Each node carries a
//! queue of constraint chains that force motions on robots one at a time;
//! the low-level planner completes the rest.

use std::collections::{HashSet, VecDeque};
use std::f64::consts::PI;
use std::rc::Rc;
use std::time::Instant;

use crate::dbpibt::{assign_priorities, dbpibt_plan};
use crate::dynamics::{wrap_angle, DimKind, State};
use crate::error::{Error, Result};
use crate::planner::{
    generate_library, unsolvable, Context, Instance, PlanReport, PlannerConfig, PrimitiveLibrary, Status,
};
use crate::primitives::{generate_primitives, MotionRef};

/// A candidate motion by primitive id; the rollout itself is rebuilt from
/// the owning node's state when needed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MotionId {
    pub primitive: usize,
    pub h: f64,
}

/// One forced assignment in a constraint chain.
#[derive(Debug)]
pub struct ConstraintNode {
    pub parent: Option<Rc<ConstraintNode>>,
    pub who: Option<usize>,
    pub motion: Option<MotionId>,
    pub depth: usize,
}

impl ConstraintNode {
    pub fn root() -> Rc<Self> {
        Rc::new(ConstraintNode {
            parent: None,
            who: None,
            motion: None,
            depth: 0,
        })
    }

    /// `(who, motion)` pairs from this node up to the root.
    pub fn constraints(self: &Rc<Self>) -> Vec<(usize, MotionId)> {
        let mut out = Vec::with_capacity(self.depth);
        let mut c = Some(self.clone());
        while let Some(n) = c {
            if let (Some(w), Some(m)) = (n.who, n.motion) {
                out.push((w, m));
            }
            c = n.parent.clone();
        }
        out
    }
}

/// Constraint-tree work item. Children are created one at a time so that a
/// node stuck behind many failures does not hold every sibling at once.
enum Pending {
    Eval(Rc<ConstraintNode>),
    /// Next child of the chain: the given candidate index of the robot at
    /// the chain's depth in priority order.
    Expand(Rc<ConstraintNode>, usize),
}

struct HighNode {
    state: Vec<State>,
    /// Breadth-first: siblings come before any deeper chain.
    tree: VecDeque<Pending>,
    /// Motions that led here from the parent.
    chosen: Option<Vec<MotionId>>,
    parent: Option<usize>,
    order: Option<Vec<usize>>,
    h: Vec<f64>,
    /// Remaining generations of space-cover recovery per robot.
    flagged: Vec<usize>,
    /// Ordered candidates per robot, kept while the node is open.
    candidates: Option<Vec<Vec<MotionId>>>,
}

/// Number of nodes whose rolled-out candidates stay in memory.
const HYDRATED_CACHE: usize = 16;

/// Quantized joint state used as the explored-table key.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ExploredKey(pub Vec<i64>);

/// Cells of `linear_res` for position and velocity dims. Angle cells of
/// `angle_res` are centered on multiples of `angle_res` so that values just
/// below pi and just above -pi share a cell.
pub fn explored_key(kinds: &[&[DimKind]], x: &[State], linear_res: f64, angle_res: f64) -> ExploredKey {
    let bins = (2.0 * PI / angle_res).round().max(1.0) as i64;
    let mut out = Vec::new();
    for (k, s) in kinds.iter().zip(x) {
        for (kind, v) in k.iter().zip(s.values()) {
            out.push(match kind {
                DimKind::Angle => {
                    let a = (wrap_angle(*v) + PI) / angle_res;
                    ((a + 0.5).floor() as i64).rem_euclid(bins)
                }
                _ => (v / linear_res).floor() as i64,
            });
        }
    }
    ExploredKey(out)
}

/// True when the last `alternations` differences of `history` are nonzero
/// and strictly alternate in sign.
pub fn alternates(history: &[f64], alternations: usize) -> bool {
    if alternations == 0 || history.len() < alternations + 1 {
        return false;
    }
    let mut run = 0;
    let mut prev = 0.0f64;
    for w in history.windows(2) {
        let x = w[1] - w[0];
        if x != 0.0 && prev != 0.0 && x.signum() != prev.signum() {
            run += 1;
        } else if x != 0.0 {
            run = 1;
        } else {
            run = 0;
        }
        prev = x;
        if run >= alternations {
            return true;
        }
    }
    false
}

struct Search<'a, 'b> {
    ctx: &'b mut Context<'a>,
    nodes: Vec<HighNode>,
    explored: HashSet<ExploredKey>,
    kinds: Vec<&'static [DimKind]>,
    linear_res: f64,
    hydrated: VecDeque<(usize, Vec<Vec<MotionRef>>)>,
}

impl Search<'_, '_> {
    fn key(&self, x: &[State]) -> ExploredKey {
        explored_key(&self.kinds, x, self.linear_res, self.ctx.cfg.explored_angle_res)
    }

    /// Rolled-out candidates of node `q`, computing them on first use.
    fn candidates(&mut self, q: usize) -> Vec<Vec<MotionRef>> {
        if let Some(pos) = self.hydrated.iter().position(|(id, _)| *id == q) {
            let entry = self.hydrated.remove(pos).unwrap();
            let out = entry.1.clone();
            self.hydrated.push_front(entry);
            return out;
        }
        let out = match &self.nodes[q].candidates {
            Some(ids) => {
                let ids = ids.clone();
                let x = self.nodes[q].state.clone();
                ids.iter()
                    .enumerate()
                    .map(|(i, ms)| ms.iter().map(|m| self.ctx.hydrate(i, &x[i], m.primitive, m.h)).collect())
                    .collect()
            }
            None => {
                let flagged: Vec<bool> = self.nodes[q].flagged.iter().map(|&f| f > 0).collect();
                let x = self.nodes[q].state.clone();
                let ms: Vec<Vec<MotionRef>> = self.ctx.process_motions(&x, &flagged);
                self.nodes[q].candidates = Some(
                    ms.iter()
                        .map(|v| {
                            v.iter()
                                .map(|m| MotionId {
                                    primitive: m.primitive,
                                    h: m.h,
                                })
                                .collect()
                        })
                        .collect(),
                );
                ms
            }
        };
        self.hydrated.push_front((q, out.clone()));
        self.hydrated.truncate(HYDRATED_CACHE);
        out
    }

    fn release(&mut self, q: usize) {
        self.nodes[q].candidates = None;
        self.hydrated.retain(|(id, _)| *id != q);
    }

    /// Robots whose h over the last `window` nodes up to `q` alternates.
    fn livelock_step(&self, q: usize) -> Vec<bool> {
        let cfg = self.ctx.cfg;
        let n = self.ctx.inst.robots.len();
        let mut chain = Vec::new();
        let mut c = Some(q);
        while let Some(i) = c {
            if chain.len() == cfg.livelock_window {
                break;
            }
            chain.push(i);
            c = self.nodes[i].parent;
        }
        chain.reverse();
        (0..n)
            .map(|r| {
                let hist: Vec<f64> = chain.iter().map(|&i| self.nodes[i].h[r]).collect();
                alternates(&hist, cfg.livelock_alternations)
            })
            .collect()
    }

    fn backtrack(&mut self, q: usize) -> Vec<Vec<MotionRef>> {
        let mut chain = Vec::new();
        let mut c = Some(q);
        while let Some(i) = c {
            chain.push(i);
            c = self.nodes[i].parent;
        }
        chain.reverse();
        let mut out = Vec::new();
        for w in chain.windows(2) {
            let from = self.nodes[w[0]].state.clone();
            let chosen = self.nodes[w[1]].chosen.clone().unwrap();
            out.push(
                chosen
                    .iter()
                    .enumerate()
                    .map(|(i, m)| self.ctx.hydrate(i, &from[i], m.primitive, m.h))
                    .collect(),
            );
        }
        out
    }
}

/// Runs the lazy search once with the given primitive library.
pub fn search(inst: &Instance, lib: &PrimitiveLibrary, cfg: &PlannerConfig) -> Result<PlanReport> {
    let started = Instant::now();
    inst.validate(cfg.margin)?;
    let mut ctx = match Context::new(inst, lib, cfg) {
        Ok(c) => c,
        Err(Error::InvalidGoal { robot }) => {
            return Ok(unsolvable(format!("goal of robot {robot} is in collision"), started.elapsed()))
        }
        Err(e) => return Err(e),
    };
    let n = inst.robots.len();
    let start: Vec<State> = inst.robots.iter().map(|r| r.start.clone()).collect();
    if ctx.at_goal(&start) {
        return Ok(ctx.finish(Status::Solved, Some(&[]), None));
    }
    let h0: Vec<f64> = (0..n).map(|i| ctx.value(i, &start[i])).collect();
    let mut s = Search {
        kinds: inst.robots.iter().map(|r| r.model.dim_kinds()).collect(),
        linear_res: cfg.explored_res.unwrap_or(cfg.delta / 2.0),
        ctx: &mut ctx,
        nodes: Vec::new(),
        explored: HashSet::new(),
        hydrated: VecDeque::new(),
    };
    let key = s.key(&start);
    s.explored.insert(key);
    s.nodes.push(HighNode {
        state: start,
        tree: VecDeque::from([Pending::Eval(ConstraintNode::root())]),
        chosen: None,
        parent: None,
        order: None,
        h: h0,
        flagged: vec![0; n],
        candidates: None,
    });
    let mut open: Vec<usize> = vec![0];
    let mut status = Status::NoSolution;
    let mut found = None;

    while let Some(&top) = open.last() {
        if s.ctx.timed_out() {
            status = Status::Timeout;
            break;
        }
        if cfg.node_budget.is_some_and(|b| s.ctx.stats.iterations >= b) {
            status = Status::BudgetExhausted;
            break;
        }
        s.ctx.stats.iterations += 1;
        if s.ctx.at_goal(&s.nodes[top].state) {
            found = Some(top);
            status = Status::Solved;
            break;
        }
        let Some(item) = s.nodes[top].tree.pop_front() else {
            open.pop();
            s.release(top);
            continue;
        };
        let cands = s.candidates(top);
        if s.nodes[top].order.is_none() {
            let d = s.ctx.goal_distances(&s.nodes[top].state);
            s.nodes[top].order = Some(assign_priorities(&d));
        }
        let node = &mut s.nodes[top];
        let order = node.order.clone().unwrap();
        let listed = node.candidates.as_ref().unwrap();
        let c = match item {
            Pending::Eval(c) => c,
            Pending::Expand(parent, k) => {
                let i = order[parent.depth];
                if k + 1 < listed[i].len() {
                    node.tree.push_front(Pending::Expand(parent.clone(), k + 1));
                }
                Rc::new(ConstraintNode {
                    who: Some(i),
                    motion: Some(listed[i][k]),
                    depth: parent.depth + 1,
                    parent: Some(parent),
                })
            }
        };
        if c.depth < n && !listed[order[c.depth]].is_empty() {
            node.tree.push_back(Pending::Expand(c.clone(), 0));
        }
        let constraints: Vec<(usize, MotionRef)> = c
            .constraints()
            .into_iter()
            .map(|(w, m)| {
                let r = cands[w].iter().find(|r| r.primitive == m.primitive).unwrap();
                (w, r.clone())
            })
            .collect();
        let Some(motions) = dbpibt_plan(&cands, &order, &constraints, cfg.margin, &mut s.ctx.stats.pibt) else {
            continue;
        };
        let next: Vec<State> = motions.iter().map(|m| m.final_state().clone()).collect();
        let key = s.key(&next);
        if !s.explored.insert(key) {
            continue;
        }
        let flagged = s.nodes[top].flagged.iter().map(|f| f.saturating_sub(1)).collect();
        s.nodes.push(HighNode {
            state: next,
            tree: VecDeque::from([Pending::Eval(ConstraintNode::root())]),
            chosen: Some(
                motions
                    .iter()
                    .map(|m| MotionId {
                        primitive: m.primitive,
                        h: m.h,
                    })
                    .collect(),
            ),
            parent: Some(top),
            order: None,
            h: motions.iter().map(|m| m.h).collect(),
            flagged,
            candidates: None,
        });
        let q = s.nodes.len() - 1;
        s.ctx.stats.nodes += 1;
        if cfg.livelock {
            let newly = s.livelock_step(q);
            for (r, f) in newly.into_iter().enumerate() {
                if f && s.nodes[q].flagged[r] == 0 {
                    s.nodes[q].flagged[r] = cfg.livelock_window;
                    s.ctx.stats.livelock_flags += 1;
                }
            }
        }
        open.push(q);
    }
    let horizons = found.map(|q| s.backtrack(q));
    drop(s);
    Ok(ctx.finish(status, horizons.as_deref(), None))
}

/// Repeats [`search`] with more primitives after each unsuccessful round
/// that still has time left. With zero rounds this is a single search.
pub fn search_incremental(inst: &Instance, lib: &PrimitiveLibrary, cfg: &PlannerConfig) -> Result<PlanReport> {
    let started = Instant::now();
    let mut lib = lib.clone();
    let mut round = 0;
    loop {
        let mut c = cfg.clone();
        if let Some(t) = cfg.time_limit {
            c.time_limit = Some((t - started.elapsed().as_secs_f64()).max(0.0));
        }
        let mut report = search(inst, &lib, &c)?;
        report.stats.primitive_rounds = round;
        if let Some(s) = report.solution.as_mut() {
            s.stats.primitive_rounds = round;
            s.config = cfg.clone();
        }
        let retry = matches!(report.status, Status::NoSolution | Status::BudgetExhausted) && report.reason.is_none();
        if !retry || round >= cfg.incremental_rounds {
            report.timing.total = started.elapsed();
            return Ok(report);
        }
        round += 1;
        for set in lib.values_mut() {
            let extra = generate_primitives(&set.model, cfg.incremental_count, set.horizon, cfg.seed.wrapping_add(round as u64))?;
            let mut grown = (**set).clone();
            grown.extend_with(&extra)?;
            *set = std::sync::Arc::new(grown);
        }
    }
}

/// Convenience: generates primitives and runs the configured search.
pub fn solve(inst: &Instance, count: usize, horizon: usize, cfg: &PlannerConfig) -> Result<PlanReport> {
    let lib = generate_library(inst, count, horizon, cfg.seed)?;
    crate::planner::plan(inst, &lib, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_wraps_angles() {
        let kinds: Vec<&[DimKind]> = vec![&[DimKind::Position, DimKind::Position, DimKind::Angle]];
        let k = |x: &[f64]| explored_key(&kinds, &[State::new(x)], 0.25, PI / 8.0);
        assert_eq!(k(&[1.0, 2.0, 0.3]), k(&[1.0, 2.0, 0.3]));
        assert_ne!(k(&[1.0, 2.0, 0.3]), k(&[1.5, 2.0, 0.3]));
        assert_eq!(k(&[0.0, 0.0, PI - 1e-9]), k(&[0.0, 0.0, -PI + 1e-9]));
        assert_ne!(k(&[0.0, 0.0, 0.0]), k(&[0.0, 0.0, PI / 4.0]));
    }

    #[test]
    fn alternation_rule() {
        assert!(alternates(&[5.0, 4.0, 5.0, 4.0], 3));
        assert!(!alternates(&[5.0, 4.0, 3.0, 2.0, 1.0], 3));
        assert!(!alternates(&[5.0, 4.0, 5.0], 3));
        assert!(!alternates(&[5.0, 4.0, 4.0, 5.0, 4.0], 3));
        assert!(alternates(&[1.0, 5.0, 4.0, 5.0, 4.0], 3));
    }

    #[test]
    fn constraint_chain() {
        let root = ConstraintNode::root();
        assert!(root.constraints().is_empty());
        let m = MotionId { primitive: 3, h: 1.0 };
        let child = Rc::new(ConstraintNode {
            parent: Some(root.clone()),
            who: Some(1),
            motion: Some(m),
            depth: 1,
        });
        let grandchild = Rc::new(ConstraintNode {
            parent: Some(child),
            who: Some(0),
            motion: Some(MotionId { primitive: 5, h: 2.0 }),
            depth: 2,
        });
        let c = grandchild.constraints();
        assert_eq!(c.len(), 2);
        assert_eq!(c[1], (1, m));
    }
}
