//! Independent solution checker. Re-integrates every control with the
//! dynamics module and re-checks collisions with the geometry module; no
//! planner code is involved.

use serde::{Deserialize, Serialize};

use crate::dynamics::State;
use crate::geometry::shapes_intersect;
use crate::planner::{Instance, Solution};

/// Slack on the final goal distance.
pub const GOAL_SLACK: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Shape { robot: usize, detail: String },
    Start { robot: usize },
    Residual { robot: usize, step: usize, residual: f64 },
    ControlBounds { robot: usize, step: usize },
    StateBounds { robot: usize, step: usize },
    Environment { robot: usize, step: usize },
    RobotCollision { a: usize, b: usize, step: usize },
    Goal { robot: usize, distance: f64 },
    Cost { claimed: f64, recomputed: f64 },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
}

pub fn validate(inst: &Instance, sol: &Solution, delta_g: f64) -> ValidationReport {
    let mut v = Vec::new();
    let n = inst.robots.len();
    if sol.robots.len() != n {
        v.push(Violation::Shape {
            robot: n.min(sol.robots.len()),
            detail: format!("expected {n} robot paths, got {}", sol.robots.len()),
        });
        return ValidationReport { ok: false, violations: v };
    }
    let mut cost = 0.0;
    for (i, (r, p)) in inst.robots.iter().zip(&sol.robots).enumerate() {
        if p.states.len() != p.controls.len() + 1 {
            v.push(Violation::Shape {
                robot: i,
                detail: format!("{} states for {} controls", p.states.len(), p.controls.len()),
            });
            continue;
        }
        if p.states[0] != r.start {
            v.push(Violation::Start { robot: i });
        }
        for (k, x) in p.states.iter().enumerate() {
            if !r.model.state_in_bounds(x) {
                v.push(Violation::StateBounds { robot: i, step: k });
            }
            if !r.body.state_free(&inst.workspace, x) {
                v.push(Violation::Environment { robot: i, step: k });
            }
        }
        for (k, u) in p.controls.iter().enumerate() {
            if !r.model.control_in_bounds(u) {
                v.push(Violation::ControlBounds { robot: i, step: k });
            }
            match r.model.step(&p.states[k], u) {
                Ok(next) if next == p.states[k + 1] => {}
                Ok(next) => v.push(Violation::Residual {
                    robot: i,
                    step: k,
                    residual: next
                        .values()
                        .iter()
                        .zip(p.states[k + 1].values())
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max),
                }),
                Err(e) => v.push(Violation::Shape {
                    robot: i,
                    detail: e.to_string(),
                }),
            }
        }
        let last = p.states.last().unwrap();
        if let Ok(d) = r.model.distance(last, &r.goal) {
            if d > delta_g + GOAL_SLACK {
                v.push(Violation::Goal { robot: i, distance: d });
            }
        }
        cost += p.k as f64 * r.model.dt;
    }
    if (cost - sol.cost).abs() > 1e-9 {
        v.push(Violation::Cost {
            claimed: sol.cost,
            recomputed: cost,
        });
    }
    let horizon = sol.robots.iter().map(|p| p.states.len()).max().unwrap_or(0);
    let at = |i: usize, k: usize| -> &State {
        let s = &sol.robots[i].states;
        &s[k.min(s.len() - 1)]
    };
    for k in 0..horizon {
        for a in 0..n {
            for b in a + 1..n {
                if sol.robots[a].states.is_empty() || sol.robots[b].states.is_empty() {
                    continue;
                }
                let (ra, rb) = (&inst.robots[a], &inst.robots[b]);
                if shapes_intersect(&ra.body, at(a, k), &rb.body, at(b, k), 0.0).unwrap_or(true) {
                    v.push(Violation::RobotCollision { a, b, step: k });
                }
            }
        }
    }
    ValidationReport {
        ok: v.is_empty(),
        violations: v,
    }
}
