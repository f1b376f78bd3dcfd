//! One-horizon joint motion assignment by priority inheritance with
//! backtracking over motion primitives.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{footprints_collide_unchecked, Aabb};
use crate::planner::{unsolvable, Context, Instance, PlanReport, PlannerConfig, PrimitiveLibrary, Status};
use crate::primitives::MotionRef;

/// Robots sorted by distance to goal, farthest first; ties by id.
pub fn assign_priorities(distances: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..distances.len()).collect();
    order.sort_by(|&a, &b| distances[b].total_cmp(&distances[a]).then(a.cmp(&b)));
    order
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PibtStats {
    pub invocations: usize,
    pub calls: usize,
    pub collision_checks: usize,
    #[serde(skip)]
    pub planned_time: Duration,
    #[serde(skip)]
    pub unplanned_time: Duration,
}

impl PibtStats {
    pub fn operations(&self) -> usize {
        self.calls + self.collision_checks
    }
}

/// Per-call state of the recursive planner.
struct Frame<'a> {
    motions: &'a [Vec<MotionRef>],
    set_boxes: Vec<Aabb>,
    order: &'a [usize],
    reserved: Vec<Option<MotionRef>>,
    entered: Vec<bool>,
    margin: f64,
    dim: usize,
    stats: &'a mut PibtStats,
}

impl Frame<'_> {
    fn collide(&mut self, a: &MotionRef, b: &MotionRef) -> bool {
        if !a.footprint.aabb.inflate(self.margin / 2.0).overlaps(&b.footprint.aabb.inflate(self.margin / 2.0), self.dim) {
            return false;
        }
        self.stats.collision_checks += 1;
        footprints_collide_unchecked(&a.footprint, &b.footprint, self.margin)
    }

    fn blocked_by_reserved(&mut self, i: usize, m: &MotionRef) -> bool {
        let t = Instant::now();
        let mut hit = false;
        for j in 0..self.reserved.len() {
            if j == i {
                continue;
            }
            if let Some(r) = self.reserved[j].clone() {
                if self.collide(m, &r) {
                    hit = true;
                    break;
                }
            }
        }
        self.stats.planned_time += t.elapsed();
        hit
    }

    fn conflicts_with_set(&mut self, m: &MotionRef, j: usize) -> bool {
        let t = Instant::now();
        let mut hit = false;
        if m.footprint.aabb.inflate(self.margin / 2.0).overlaps(&self.set_boxes[j].inflate(self.margin / 2.0), self.dim) {
            for k in 0..self.motions[j].len() {
                let other = self.motions[j][k].clone();
                if self.collide(m, &other) {
                    hit = true;
                    break;
                }
            }
        }
        self.stats.unplanned_time += t.elapsed();
        hit
    }

    fn plan(&mut self, i: usize) -> bool {
        self.entered[i] = true;
        self.stats.calls += 1;
        for k in 0..self.motions[i].len() {
            let m = self.motions[i][k].clone();
            if self.blocked_by_reserved(i, &m) {
                continue;
            }
            self.reserved[i] = Some(m.clone());
            let mut failed = None;
            for &j in self.order {
                if self.reserved[j].is_some() || self.entered[j] {
                    continue;
                }
                if self.conflicts_with_set(&m, j) && !self.plan(j) {
                    failed = Some(j);
                    break;
                }
            }
            let Some(j) = failed else { return true };
            self.reserved[i] = None;
            self.hold(j);
        }
        false
    }

    /// A robot whose call failed keeps its stay motion when that is still
    /// free, so later candidates of its caller have to avoid it.
    fn hold(&mut self, j: usize) {
        let Some(stay) = self.motions[j].iter().find(|m| m.is_stay()).cloned() else { return };
        if !self.blocked_by_reserved(j, &stay) {
            self.reserved[j] = Some(stay);
        }
    }
}

/// Assigns one motion per robot so that no two reserved motions collide.
///
/// `motions[i]` is robot `i`'s candidate list in try order, `order` the
/// priority order and `constraints` forced assignments. Returns `None` when
/// the constraints collide or some root call fails.
pub fn dbpibt_plan(
    motions: &[Vec<MotionRef>],
    order: &[usize],
    constraints: &[(usize, MotionRef)],
    margin: f64,
    stats: &mut PibtStats,
) -> Option<Vec<MotionRef>> {
    let n = motions.len();
    assert_eq!(order.len(), n);
    stats.invocations += 1;
    let dim = motions
        .iter()
        .flatten()
        .chain(constraints.iter().map(|(_, m)| m))
        .map(|m| m.footprint.dim)
        .next()
        .unwrap_or(2);
    let set_boxes = motions
        .iter()
        .map(|ms| ms.iter().fold(Aabb::EMPTY, |a, m| a.union(&m.footprint.aabb)))
        .collect();
    let mut frame = Frame {
        motions,
        set_boxes,
        order,
        reserved: vec![None; n],
        entered: vec![false; n],
        margin,
        dim,
        stats,
    };
    for (i, m) in constraints {
        if frame.blocked_by_reserved(*i, m) {
            return None;
        }
        frame.reserved[*i] = Some(m.clone());
    }
    for &i in order {
        if frame.reserved[i].is_none() && !frame.plan(i) {
            return None;
        }
    }
    Some(frame.reserved.into_iter().map(|m| m.unwrap()).collect())
}

/// Greedy planner: one low-level call per horizon from the current joint
/// state, without backtracking across horizons. Fails when a call fails or
/// the horizon cap is reached.
pub fn plan_standalone(inst: &Instance, lib: &PrimitiveLibrary, cfg: &PlannerConfig) -> Result<PlanReport> {
    let started = Instant::now();
    inst.validate(cfg.margin)?;
    let mut ctx = match Context::new(inst, lib, cfg) {
        Ok(c) => c,
        Err(Error::InvalidGoal { robot }) => {
            return Ok(unsolvable(format!("goal of robot {robot} is in collision"), started.elapsed()))
        }
        Err(e) => return Err(e),
    };
    let mut x: Vec<_> = inst.robots.iter().map(|r| r.start.clone()).collect();
    let flagged = vec![false; x.len()];
    let mut horizons = Vec::new();
    loop {
        if ctx.at_goal(&x) {
            return Ok(ctx.finish(Status::Solved, Some(&horizons), None));
        }
        if ctx.timed_out() {
            return Ok(ctx.finish(Status::Timeout, None, None));
        }
        if horizons.len() >= cfg.max_horizons {
            return Ok(ctx.finish(Status::BudgetExhausted, None, Some("horizon cap reached".into())));
        }
        let cands = ctx.process_motions(&x, &flagged);
        let order = assign_priorities(&ctx.goal_distances(&x));
        ctx.stats.iterations += 1;
        match dbpibt_plan(&cands, &order, &[], cfg.margin, &mut ctx.stats.pibt) {
            Some(m) => {
                x = m.iter().map(|m| m.final_state().clone()).collect();
                horizons.push(m);
                ctx.stats.horizons += 1;
            }
            None => return Ok(ctx.finish(Status::NoSolution, None, Some("no consistent assignment".into()))),
        }
    }
}
