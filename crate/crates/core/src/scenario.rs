//! Scenario files and generators.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{DimKind, DynamicsModel, ModelKind, State};
use crate::error::{Error, Result};
use crate::geometry::{shapes_intersect, CollisionShape, Obstacle, RobotBody, Workspace};
use crate::planner::{Instance, RobotSpec};

pub const SCENARIO_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRobot {
    pub model: ModelKind,
    /// Full model override; defaults apply when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dynamics: Option<DynamicsModel>,
    pub shape: CollisionShape,
    pub start: Vec<f64>,
    pub goal: Vec<f64>,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub plane_z: f64,
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDefaults {
    pub delta: f64,
    pub alpha: f64,
    pub delta_g: f64,
}

impl Default for ScenarioDefaults {
    fn default() -> Self {
        ScenarioDefaults {
            delta: 0.5,
            alpha: 1.0,
            delta_g: 0.3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub version: u32,
    pub name: String,
    pub workspace: Workspace,
    pub robots: Vec<ScenarioRobot>,
    #[serde(default)]
    pub defaults: ScenarioDefaults,
}

impl Scenario {
    /// Resolves models (bound to the workspace box) and bodies.
    pub fn instance(&self) -> Result<Instance> {
        let ws = Arc::new(self.workspace.clone());
        let mut robots = Vec::with_capacity(self.robots.len());
        for (i, r) in self.robots.iter().enumerate() {
            let mut model = r.dynamics.clone().unwrap_or_else(|| DynamicsModel::new(r.model));
            if model.kind != r.model {
                return Err(Error::InvalidScenario(format!("robot {i} model id and dynamics disagree")));
            }
            if model.kind.position_dim() > ws.dim {
                return Err(Error::InvalidScenario(format!("robot {i} model needs a 3D workspace")));
            }
            let p = model.kind.position_dim();
            model.bind_workspace(&ws.lower[..p], &ws.upper[..p]);
            r.shape.validate()?;
            let mut body = RobotBody::new(r.model, r.shape.clone(), ws.dim);
            body.plane_z = r.plane_z;
            robots.push(RobotSpec {
                model,
                body,
                start: State::new(&r.start),
                goal: State::new(&r.goal),
            });
        }
        Ok(Instance { workspace: ws, robots })
    }

    /// Starts free and pairwise separated, goals in bounds, zero goal
    /// velocities.
    pub fn check(&self) -> Result<Instance> {
        if self.version != SCENARIO_VERSION {
            return Err(Error::InvalidScenario(format!("unsupported scenario version {}", self.version)));
        }
        let inst = self.instance()?;
        inst.validate(0.0)?;
        for (i, r) in inst.robots.iter().enumerate() {
            for (k, kind) in r.model.dim_kinds().iter().enumerate() {
                if *kind == DimKind::Velocity && r.goal[k] != 0.0 {
                    return Err(Error::InvalidScenario(format!("robot {i} goal velocity must be zero")));
                }
            }
        }
        Ok(inst)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text)?;
        s.check()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Scenario::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }
}

pub const ROBOT_RADIUS: f64 = 0.2;

fn sphere() -> CollisionShape {
    CollisionShape::Sphere { radius: ROBOT_RADIUS }
}

fn robot(model: ModelKind, shape: CollisionShape, start: Vec<f64>, goal: Vec<f64>) -> ScenarioRobot {
    ScenarioRobot {
        model,
        dynamics: None,
        shape,
        start,
        goal,
        plane_z: 0.0,
    }
}

/// Full state of `kind` at position `p` with heading `theta`, at rest.
fn pose(kind: ModelKind, p: [f64; 2], theta: f64) -> Vec<f64> {
    match kind {
        ModelKind::Unicycle1st => vec![p[0], p[1], theta],
        ModelKind::DoubleIntegrator2d => vec![p[0], p[1], 0.0, 0.0],
        ModelKind::DoubleIntegrator3d => vec![p[0], p[1], 1.0, 0.0, 0.0, 0.0],
        ModelKind::CarWithTrailer => vec![p[0], p[1], theta, theta],
    }
}

fn shape_for(kind: ModelKind) -> CollisionShape {
    match kind {
        ModelKind::CarWithTrailer => CollisionShape::CarTrailer {
            body_half_extents: vec![0.25, 0.15],
            trailer_half_extents: vec![0.15, 0.15],
            hitch: 0.5,
        },
        _ => sphere(),
    }
}

fn wrap(theta: f64) -> f64 {
    crate::dynamics::wrap_angle(theta)
}

/// `n` unicycles on a circle, each heading through the center to the
/// antipodal point.
pub fn circle(n: usize, radius: f64) -> Scenario {
    let side = 2.0 * radius + 3.0;
    let c = side / 2.0;
    let at = |k: usize| {
        let a = 2.0 * PI * k as f64 / n as f64;
        [c + radius * a.cos(), c + radius * a.sin()]
    };
    let robots = (0..n)
        .map(|k| {
            let a = 2.0 * PI * k as f64 / n as f64;
            let s = at(k);
            // even counts reuse the partner's start so swaps are exact
            let g = if n % 2 == 0 {
                at((k + n / 2) % n)
            } else {
                [c - radius * a.cos(), c - radius * a.sin()]
            };
            let heading = wrap(a + PI);
            robot(
                ModelKind::Unicycle1st,
                sphere(),
                pose(ModelKind::Unicycle1st, s, heading),
                pose(ModelKind::Unicycle1st, g, heading),
            )
        })
        .collect();
    Scenario {
        version: SCENARIO_VERSION,
        name: format!("circle-{n}"),
        workspace: Workspace::empty(2, vec![0.0, 0.0], vec![side, side]).unwrap(),
        robots,
        defaults: ScenarioDefaults::default(),
    }
}

/// Random unit boxes covering about `density` of a `size` square, with
/// unicycle starts and goals sampled in free space.
pub fn random2d(n: usize, size: f64, density: f64, seed: u64) -> Result<Scenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = (density * size * size).round() as usize;
    let mut obstacles = Vec::with_capacity(count);
    for _ in 0..count {
        obstacles.push(Obstacle::Box {
            center: vec![rng.gen_range(0.5..size - 0.5), rng.gen_range(0.5..size - 0.5)],
            half_extents: vec![0.5, 0.5],
            yaw: 0.0,
        });
    }
    let ws = Workspace::new(2, vec![0.0, 0.0], vec![size, size], obstacles)?;
    let body = RobotBody::new(ModelKind::Unicycle1st, sphere(), 2);
    let min_sep = 2.0 * ROBOT_RADIUS + 0.3;
    let sample = |taken: &[State], rng: &mut ChaCha8Rng| -> Result<State> {
        for _ in 0..10_000 {
            let x = State::new(&[
                rng.gen_range(ROBOT_RADIUS..size - ROBOT_RADIUS),
                rng.gen_range(ROBOT_RADIUS..size - ROBOT_RADIUS),
                rng.gen_range(-PI..PI),
            ]);
            // keep a clearance ring so some motion out of the cell exists
            let clear = State::new(&[x[0], x[1], 0.0]);
            let ring = RobotBody::new(ModelKind::Unicycle1st, CollisionShape::Sphere { radius: ROBOT_RADIUS + 0.1 }, 2);
            if !body.state_free(&ws, &x) || !ring.state_free(&ws, &clear) {
                continue;
            }
            if taken.iter().all(|t| ((t[0] - x[0]).powi(2) + (t[1] - x[1]).powi(2)).sqrt() >= min_sep) {
                return Ok(x);
            }
        }
        Err(Error::InvalidScenario("could not place robots in free space".into()))
    };
    let mut starts: Vec<State> = Vec::new();
    let mut goals: Vec<State> = Vec::new();
    for _ in 0..n {
        let s = sample(&starts, &mut rng)?;
        starts.push(s);
        let g = sample(&goals, &mut rng)?;
        goals.push(g);
    }
    let robots = starts
        .into_iter()
        .zip(goals)
        .map(|(s, g)| robot(ModelKind::Unicycle1st, sphere(), s.values().to_vec(), g.values().to_vec()))
        .collect();
    Ok(Scenario {
        version: SCENARIO_VERSION,
        name: format!("random2d-n{n}-s{seed}"),
        workspace: ws,
        robots,
        defaults: ScenarioDefaults::default(),
    })
}

const HEADON_WIDTH: f64 = 0.9;

/// Two unicycles 2 m apart facing each other, goals exchanged, in a
/// corridor 0.9 m wide: just enough room to squeeze past each other.
pub fn headon2() -> Scenario {
    let y = HEADON_WIDTH / 2.0;
    let robots = vec![
        robot(
            ModelKind::Unicycle1st,
            sphere(),
            pose(ModelKind::Unicycle1st, [1.5, y], 0.0),
            pose(ModelKind::Unicycle1st, [3.5, y], 0.0),
        ),
        robot(
            ModelKind::Unicycle1st,
            sphere(),
            pose(ModelKind::Unicycle1st, [3.5, y], -PI),
            pose(ModelKind::Unicycle1st, [1.5, y], -PI),
        ),
    ];
    Scenario {
        version: SCENARIO_VERSION,
        name: "headon2".into(),
        workspace: Workspace::empty(2, vec![0.0, 0.0], vec![5.0, HEADON_WIDTH]).unwrap(),
        robots,
        defaults: ScenarioDefaults::default(),
    }
}

/// Circle swap cycling through unicycle, double integrator and car with
/// trailer.
pub fn swap_hetero(n: usize, radius: f64) -> Scenario {
    let mut s = circle(n, radius);
    let kinds = [ModelKind::Unicycle1st, ModelKind::DoubleIntegrator2d, ModelKind::CarWithTrailer];
    for (k, r) in s.robots.iter_mut().enumerate() {
        let kind = kinds[k % kinds.len()];
        let heading = r.start[2];
        *r = robot(
            kind,
            shape_for(kind),
            pose(kind, [r.start[0], r.start[1]], heading),
            pose(kind, [r.goal[0], r.goal[1]], heading),
        );
    }
    s.name = format!("swap-hetero-{n}");
    s
}

/// Checks that no two robot bodies overlap at the given states.
pub fn pairwise_free(inst: &Instance, x: &[State]) -> Result<bool> {
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let (a, b) = (&inst.robots[i], &inst.robots[j]);
            if shapes_intersect(&a.body, &x[i], &b.body, &x[j], 0.0)? {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_is_antipodal() {
        let s = circle(2, 2.0);
        assert_eq!(s.robots[0].start[..2], s.robots[1].goal[..2]);
        assert_eq!(s.robots[1].start[..2], s.robots[0].goal[..2]);
        s.check().unwrap();
    }

    #[test]
    fn generated_scenarios_pass_checks() {
        for seed in 0..5 {
            let s = random2d(8, 10.0, 0.1, seed).unwrap();
            s.check().unwrap();
            let inst = s.instance().unwrap();
            for r in &inst.robots {
                assert!(r.body.state_free(&inst.workspace, &r.goal));
            }
            assert_eq!(random2d(8, 10.0, 0.1, seed).unwrap(), s);
        }
        swap_hetero(3, 2.0).check().unwrap();
        headon2().check().unwrap();
    }

    #[test]
    fn headon_geometry() {
        let s = headon2();
        let d = (s.robots[0].start[0] - s.robots[1].start[0]).abs();
        assert_eq!(d, 2.0);
        assert_eq!(s.robots[0].goal, vec![3.5, 0.45, 0.0]);
        assert_eq!(s.robots[1].goal[..2], s.robots[0].start[..2]);
    }

    #[test]
    fn round_trip() {
        let s = swap_hetero(3, 2.0);
        let back = Scenario::from_json(&s.to_json().unwrap()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn rejects_nonzero_goal_velocity() {
        let mut s = swap_hetero(2, 2.0);
        s.robots[1].goal[2] = 0.1;
        assert!(s.check().is_err());
    }
}
