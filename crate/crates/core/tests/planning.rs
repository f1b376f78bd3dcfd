use std::sync::Arc;

use dblacam::dynamics::{Control, DynamicsModel, ModelKind, State};
use dblacam::geometry::{CollisionShape, Obstacle, Workspace};
use dblacam::planner::{assemble_paths, generate_library, plan, PlannerConfig, PlannerKind, Solution, Status};
use dblacam::primitives::RolledMotion;
use dblacam::scenario::{circle, headon2, Scenario, ScenarioDefaults, ScenarioRobot, SCENARIO_VERSION};
use dblacam::validate::{validate, Violation};

fn unicycle(start: [f64; 3], goal: [f64; 3]) -> ScenarioRobot {
    ScenarioRobot {
        model: ModelKind::Unicycle1st,
        dynamics: None,
        shape: CollisionShape::Sphere { radius: 0.2 },
        start: start.to_vec(),
        goal: goal.to_vec(),
        plane_z: 0.0,
    }
}

fn scenario(name: &str, ws: Workspace, robots: Vec<ScenarioRobot>) -> Scenario {
    Scenario {
        version: SCENARIO_VERSION,
        name: name.into(),
        workspace: ws,
        robots,
        defaults: ScenarioDefaults::default(),
    }
}

fn config(seed: u64) -> PlannerConfig {
    PlannerConfig {
        seed,
        time_limit: Some(60.0),
        ..PlannerConfig::default()
    }
}

#[test]
fn swap_on_empty_four_by_four() {
    let ws = Workspace::empty(2, vec![0.0, 0.0], vec![4.0, 4.0]).unwrap();
    let sc = scenario(
        "swap",
        ws,
        vec![unicycle([1.0, 2.0, 0.0], [3.0, 2.0, 0.0]), unicycle([3.0, 2.0, 3.0], [1.0, 2.0, 3.0])],
    );
    let inst = sc.check().unwrap();
    let cfg = config(0);
    let lib = generate_library(&inst, 300, 20, 0).unwrap();
    let r = plan(&inst, &lib, &cfg).unwrap();
    assert_eq!(r.status, Status::Solved);
    let sol = r.solution.unwrap();
    let v = validate(&inst, &sol, cfg.delta_g);
    assert!(v.ok, "{:?}", v.violations);
}

#[test]
fn walled_off_goal_exhausts() {
    // a full-height wall splits the room; the goal is free but unreachable
    let wall = Obstacle::Box {
        center: vec![1.5, 0.75],
        half_extents: vec![0.1, 0.75],
        yaw: 0.0,
    };
    let ws = Workspace::new(2, vec![0.0, 0.0], vec![2.5, 1.5], vec![wall]).unwrap();
    let sc = scenario("walled", ws, vec![unicycle([0.6, 0.75, 0.0], [2.1, 0.75, 0.0])]);
    let inst = sc.check().unwrap();
    let cfg = config(0);
    let lib = generate_library(&inst, 100, 20, 0).unwrap();
    let r = plan(&inst, &lib, &cfg).unwrap();
    assert_eq!(r.status, Status::NoSolution);
    assert!(r.solution.is_none());
    assert!(r.timing.total.as_secs_f64() < 60.0);
}

#[test]
fn goal_inside_obstacle_is_reported_unsolvable() {
    let block = Obstacle::Sphere {
        center: vec![3.0, 1.0],
        radius: 0.5,
    };
    let ws = Workspace::new(2, vec![0.0, 0.0], vec![4.0, 2.0], vec![block]).unwrap();
    let sc = scenario("buried", ws, vec![unicycle([0.5, 1.0, 0.0], [3.0, 1.0, 0.0])]);
    let inst = sc.check().unwrap();
    let lib = generate_library(&inst, 50, 20, 0).unwrap();
    let r = plan(&inst, &lib, &config(0)).unwrap();
    assert_eq!(r.status, Status::NoSolution);
    assert!(r.reason.unwrap().contains("collision"));
}

/// One robot driving straight at 0.5 m/s for `steps` steps of 0.1 s.
fn straight(inst_model: &DynamicsModel, from: &State, steps: usize, speed: f64) -> RolledMotion {
    let u = Control::new(&[speed, 0.0]);
    let mut states = vec![from.clone()];
    for _ in 0..steps {
        states.push(inst_model.step(states.last().unwrap(), &u).unwrap());
    }
    RolledMotion {
        primitive: 0,
        robot: 0,
        footprint: dblacam::geometry::RobotBody::new(ModelKind::Unicycle1st, CollisionShape::Sphere { radius: 0.2 }, 2)
            .footprint(&states),
        states,
        controls: vec![u; steps],
        h: 0.0,
    }
}

#[test]
fn cost_counts_steps_until_goal() {
    let ws = Workspace::empty(2, vec![0.0, 0.0], vec![4.0, 2.0]).unwrap();
    let sc = scenario("line", ws, vec![unicycle([0.5, 1.0, 0.0], [1.5, 1.0, 0.0])]);
    let inst = sc.check().unwrap();
    let model = &inst.robots[0].model;
    let go = straight(model, &inst.robots[0].start, 20, 0.5);
    assert!(model.distance(go.final_state(), &inst.robots[0].goal).unwrap() < 1e-9);

    // goal reached exactly at step 20 of one horizon
    let (paths, cost) = assemble_paths(&inst, &[vec![Arc::new(go.clone())]], 1e-6);
    assert_eq!(paths[0].k, 20);
    assert!((cost - 2.0).abs() < 1e-12);

    // two more horizons of staying are trimmed
    let stay = straight(model, go.final_state(), 20, 0.0);
    let horizons = vec![vec![Arc::new(go)], vec![Arc::new(stay.clone())], vec![Arc::new(stay)]];
    let (paths, cost) = assemble_paths(&inst, &horizons, 1e-6);
    assert_eq!(paths[0].states.len(), 21);
    assert!((cost - 2.0).abs() < 1e-12);
}

#[test]
fn validator_reports_overlap_step() {
    let sc = headon2();
    let inst = sc.check().unwrap();
    let lib = generate_library(&inst, 300, 20, 0).unwrap();
    let cfg = config(0);
    let mut sol = plan(&inst, &lib, &cfg).unwrap().solution.unwrap();
    assert!(validate(&inst, &sol, cfg.delta_g).ok);

    // put robot 1 on top of robot 0 at step 7 without touching the controls
    let k = 7;
    sol.robots[1].states[k] = sol.robots[0].states[k].clone();
    let v = validate(&inst, &sol, cfg.delta_g);
    assert!(!v.ok);
    assert!(v.violations.contains(&Violation::RobotCollision { a: 0, b: 1, step: k }));
    assert!(v
        .violations
        .iter()
        .any(|x| matches!(x, Violation::Residual { robot: 1, step, .. } if *step == k - 1)));
}

#[test]
fn validator_rejects_wrong_cost_and_short_goal() {
    let sc = circle(2, 1.5);
    let inst = sc.check().unwrap();
    let lib = generate_library(&inst, 300, 20, 1).unwrap();
    let cfg = config(1);
    let sol = plan(&inst, &lib, &cfg).unwrap().solution.unwrap();
    assert!(validate(&inst, &sol, cfg.delta_g).ok);

    let mut bad = sol.clone();
    bad.cost += 0.1;
    assert!(matches!(validate(&inst, &bad, cfg.delta_g).violations[..], [Violation::Cost { .. }]));

    let mut short = sol.clone();
    short.robots[0].states.truncate(2);
    short.robots[0].controls.truncate(1);
    assert!(validate(&inst, &short, cfg.delta_g)
        .violations
        .iter()
        .any(|x| matches!(x, Violation::Goal { robot: 0, .. })));
}

#[test]
fn solution_json_is_exact() {
    let sc = circle(3, 2.0);
    let inst = sc.check().unwrap();
    let lib = generate_library(&inst, 300, 20, 2).unwrap();
    let sol = plan(&inst, &lib, &config(2)).unwrap().solution.unwrap();
    let back = Solution::from_json(&sol.to_json().unwrap()).unwrap();
    assert_eq!(back.robots, sol.robots);
    assert_eq!(back.cost.to_bits(), sol.cost.to_bits());
    assert!(validate(&inst, &back, 0.3).ok);
}

#[test]
fn same_seed_same_solution() {
    let sc = circle(4, 2.0);
    let inst = sc.check().unwrap();
    let run = || {
        let lib = generate_library(&inst, 300, 20, 5).unwrap();
        plan(&inst, &lib, &config(5)).unwrap().solution.unwrap().to_json().unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn standalone_low_level_planner() {
    let sc = circle(2, 1.5);
    let inst = sc.check().unwrap();
    let cfg = PlannerConfig {
        planner: PlannerKind::Dbpibt,
        ..config(0)
    };
    let lib = generate_library(&inst, 300, 20, 0).unwrap();
    let r = plan(&inst, &lib, &cfg).unwrap();
    if let Some(sol) = &r.solution {
        assert!(validate(&inst, sol, cfg.delta_g).ok);
        assert_eq!(sol.stats.horizons, r.stats.horizons);
    }
    assert!(r.stats.horizons <= cfg.max_horizons);

    let capped = PlannerConfig { max_horizons: 1, ..cfg };
    let r = plan(&inst, &lib, &capped).unwrap();
    assert_eq!(r.status, Status::BudgetExhausted);
}
