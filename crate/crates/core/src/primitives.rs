//! Motion primitives: sampled generation, canonical form, persistence and
//! the applicable-motion query.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Control, DimKind, DynamicsModel, ModelKind, State, StateMetric, Vector};
use crate::error::{Error, Result};
use crate::geometry::{Footprint, RobotBody, Workspace};
use crate::nn::{DynamicIndex, KdTree};

pub const FILE_VERSION: u32 = 1;

/// Final states closer than this are duplicates.
pub const DUPLICATE_DISTANCE: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionPrimitive {
    pub id: usize,
    pub states: Vec<State>,
    pub controls: Vec<Control>,
}

impl MotionPrimitive {
    pub fn horizon(&self) -> usize {
        self.controls.len()
    }

    pub fn start(&self) -> &State {
        &self.states[0]
    }

    pub fn is_stay(&self) -> bool {
        self.controls.iter().all(|u| u.values().iter().all(|v| *v == 0.0))
    }
}

/// A primitive re-integrated from a robot's actual state.
#[derive(Clone, Debug)]
pub struct RolledMotion {
    pub primitive: usize,
    pub robot: usize,
    pub states: Vec<State>,
    pub controls: Vec<Control>,
    /// Cost-to-go of the final state, assigned by the heuristic.
    pub h: f64,
    pub footprint: Footprint,
}

impl RolledMotion {
    pub fn final_state(&self) -> &State {
        self.states.last().unwrap()
    }

    pub fn is_stay(&self) -> bool {
        self.controls.iter().all(|u| u.values().iter().all(|v| *v == 0.0))
    }
}

pub type MotionRef = Arc<RolledMotion>;

#[derive(Clone, Debug)]
pub struct PrimitiveSet {
    pub model: DynamicsModel,
    pub horizon: usize,
    pub primitives: Vec<MotionPrimitive>,
    reduced_dims: Vec<usize>,
    reduced_metric: StateMetric,
    index: KdTree,
}

impl PartialEq for PrimitiveSet {
    fn eq(&self, o: &Self) -> bool {
        self.model == o.model && self.horizon == o.horizon && self.primitives == o.primitives
    }
}

#[derive(Serialize, Deserialize)]
struct PrimitiveFile {
    version: u32,
    model_id: String,
    dt: f64,
    horizon: usize,
    count: usize,
    model: DynamicsModel,
    primitives: Vec<MotionPrimitive>,
}

fn unbounded_positions(model: &DynamicsModel) -> DynamicsModel {
    let mut m = model.clone();
    let p = m.kind.position_dim();
    m.bind_workspace(&vec![-1.0e9; p], &vec![1.0e9; p]);
    m
}

/// Start states of the stay primitives. Their reduced states cover every
/// orientation within 0.4 under the default angle weight.
fn stay_starts(model: &DynamicsModel) -> Vec<State> {
    let n = model.state_dim();
    match model.kind {
        ModelKind::Unicycle1st => (0..4)
            .map(|i| State::new(&[0.0, 0.0, -PI + i as f64 * PI / 2.0]))
            .collect(),
        ModelKind::CarWithTrailer => {
            let mut out = Vec::new();
            for i in 0..8 {
                for j in 0..8 {
                    let a = -PI + i as f64 * PI / 4.0;
                    let b = -PI + j as f64 * PI / 4.0;
                    out.push(State::new(&[0.0, 0.0, a, b]));
                }
            }
            out
        }
        ModelKind::DoubleIntegrator2d | ModelKind::DoubleIntegrator3d => vec![State(Vector::from_elem(0.0, n))],
    }
}

fn sample_start(model: &DynamicsModel, rng: &mut ChaCha8Rng) -> State {
    let kinds = model.dim_kinds();
    let mut v = Vector::from_elem(0.0, kinds.len());
    for (i, k) in kinds.iter().enumerate() {
        v[i] = match k {
            DimKind::Position => 0.0,
            DimKind::Angle => rng.gen_range(-PI..PI),
            DimKind::Velocity => rng.gen_range(model.state_lower[i]..=model.state_upper[i]),
        };
    }
    if model.kind == ModelKind::CarWithTrailer {
        v[3] = crate::dynamics::wrap_angle(v[2] + rng.gen_range(-PI / 4.0..PI / 4.0));
    }
    State(v)
}

fn segment_lengths(horizon: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let segments = rng.gen_range(2..=4).min(horizon);
    let mut cuts: Vec<usize> = Vec::new();
    while cuts.len() + 1 < segments {
        let c = rng.gen_range(1..horizon);
        if !cuts.contains(&c) {
            cuts.push(c);
        }
    }
    cuts.sort_unstable();
    let mut lens = Vec::with_capacity(segments);
    let mut prev = 0;
    for c in cuts.into_iter().chain(std::iter::once(horizon)) {
        lens.push(c - prev);
        prev = c;
    }
    lens
}

/// Piecewise-constant controls from `x0`. Double integrators pick a target
/// velocity per segment so the velocity stays inside its bounds.
fn sample_controls(model: &DynamicsModel, x0: &State, horizon: usize, rng: &mut ChaCha8Rng) -> Vec<Control> {
    let m = model.control_dim();
    let mut controls = Vec::with_capacity(horizon);
    let mut x = x0.clone();
    for len in segment_lengths(horizon, rng) {
        let mut u = Vector::from_elem(0.0, m);
        match model.kind {
            ModelKind::DoubleIntegrator2d | ModelKind::DoubleIntegrator3d => {
                let p = model.kind.position_dim();
                for i in 0..m {
                    let target = rng.gen_range(model.state_lower[p + i]..=model.state_upper[p + i]);
                    let a = (target - x[p + i]) / (len as f64 * model.dt);
                    u[i] = a.clamp(model.control_lower[i], model.control_upper[i]);
                }
            }
            _ => {
                for i in 0..m {
                    u[i] = rng.gen_range(model.control_lower[i]..=model.control_upper[i]);
                }
            }
        }
        let u = Control(u);
        for _ in 0..len {
            x = model.step_unchecked(&x, &u);
            controls.push(u.clone());
        }
    }
    controls
}

/// Samples `count` distinct canonical primitives of `horizon` steps.
///
/// The first primitives are stays (zero control) when the model admits a
/// fixed point; the rest are piecewise-constant control rollouts with 2 to 4
/// segments. Candidates leaving the state bounds or ending within
/// [`DUPLICATE_DISTANCE`] of an accepted final state are resampled.
pub fn generate_primitives(model: &DynamicsModel, count: usize, horizon: usize, seed: u64) -> Result<PrimitiveSet> {
    if count == 0 || horizon == 0 {
        return Err(Error::ContractViolation("primitive count and horizon must be positive".into()));
    }
    model.validate()?;
    let gen_model = unbounded_positions(model);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut primitives: Vec<MotionPrimitive> = Vec::with_capacity(count);
    let mut finals = DynamicIndex::new(gen_model.metric());

    let mut accept = |states: Vec<State>, controls: Vec<Control>, primitives: &mut Vec<MotionPrimitive>| {
        let last = states.last().unwrap().values().to_vec();
        if let Some((_, d)) = finals.nearest(&last) {
            if d < DUPLICATE_DISTANCE {
                return false;
            }
        }
        finals.insert(&last, primitives.len());
        primitives.push(MotionPrimitive {
            id: primitives.len(),
            states,
            controls,
        });
        true
    };

    for x0 in stay_starts(&gen_model) {
        if primitives.len() == count {
            break;
        }
        let controls = vec![gen_model.zero_control(); horizon];
        let (states, ok) = gen_model.rollout(&x0, &controls)?;
        debug_assert!(ok);
        accept(states, controls, &mut primitives);
    }

    let max_attempts = 100 * count;
    let mut attempts = 0;
    while primitives.len() < count {
        if attempts >= max_attempts {
            return Err(Error::GenerationExhausted {
                requested: count,
                produced: primitives.len(),
                attempts,
            });
        }
        attempts += 1;
        let x0 = sample_start(&gen_model, &mut rng);
        let controls = sample_controls(&gen_model, &x0, horizon, &mut rng);
        if !controls.iter().all(|u| gen_model.control_in_bounds(u)) {
            continue;
        }
        let (states, ok) = gen_model.rollout(&x0, &controls)?;
        if !ok {
            continue;
        }
        accept(states, controls, &mut primitives);
    }
    PrimitiveSet::new(model.clone(), horizon, primitives)
}

impl PrimitiveSet {
    pub fn new(model: DynamicsModel, horizon: usize, primitives: Vec<MotionPrimitive>) -> Result<Self> {
        for (i, p) in primitives.iter().enumerate() {
            if p.id != i {
                return Err(Error::ContractViolation(format!("primitive {i} carries id {}", p.id)));
            }
            if p.horizon() != horizon || p.states.len() != horizon + 1 {
                return Err(Error::ContractViolation(format!("primitive {i} has the wrong horizon")));
            }
        }
        let reduced_dims = model.reduced_dims();
        let reduced_metric = model.metric().restrict(&reduced_dims);
        let points: Vec<f64> = primitives
            .iter()
            .flat_map(|p| reduced_dims.iter().map(|&d| p.start()[d]).collect::<Vec<_>>())
            .collect();
        let index = KdTree::build(&reduced_metric, points, (0..primitives.len()).collect());
        Ok(PrimitiveSet {
            model,
            horizon,
            primitives,
            reduced_dims,
            reduced_metric,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.primitives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    pub fn reduce(&self, x: &State) -> Vec<f64> {
        self.reduced_dims.iter().map(|&d| x[d]).collect()
    }

    pub fn reduced_metric(&self) -> &StateMetric {
        &self.reduced_metric
    }

    /// Ids of primitives whose translation-reduced start lies within
    /// `radius` of the reduced `x`, ascending.
    pub fn applicable(&self, x: &State, radius: f64) -> Vec<usize> {
        let q = self.reduce(x);
        let mut out = Vec::new();
        self.index.within(&self.reduced_metric, &q, radius, &mut out);
        out.sort_unstable();
        out
    }

    pub fn applicable_motions(&self, x: &State, alpha_delta: f64) -> Vec<&MotionPrimitive> {
        self.applicable(x, alpha_delta)
            .into_iter()
            .map(|i| &self.primitives[i])
            .collect()
    }

    /// Appends freshly generated primitives, skipping duplicates of existing
    /// final states.
    pub fn extend_with(&mut self, extra: &PrimitiveSet) -> Result<usize> {
        let metric = unbounded_positions(&self.model).metric();
        let mut added = 0;
        let mut prims = std::mem::take(&mut self.primitives);
        for p in &extra.primitives {
            let last = p.states.last().unwrap();
            let dup = prims
                .iter()
                .any(|q| metric.dist(q.states.last().unwrap().values(), last.values()) < DUPLICATE_DISTANCE);
            if !dup {
                let mut p = p.clone();
                p.id = prims.len();
                prims.push(p);
                added += 1;
            }
        }
        *self = PrimitiveSet::new(self.model.clone(), self.horizon, prims)?;
        Ok(added)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = PrimitiveFile {
            version: FILE_VERSION,
            model_id: self.model.kind.id().to_string(),
            dt: self.model.dt,
            horizon: self.horizon,
            count: self.primitives.len(),
            model: self.model.clone(),
            primitives: self.primitives.clone(),
        };
        let text = serde_json::to_string(&file)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    /// Loads a set and checks it was generated for `model`.
    pub fn load_for(path: impl AsRef<Path>, model: &DynamicsModel) -> Result<Self> {
        let set = Self::load(path)?;
        if set.model.kind != model.kind || set.model.dt != model.dt {
            return Err(Error::CorruptPrimitiveFile(format!(
                "model mismatch: file has {} dt={}, expected {} dt={}",
                set.model.kind, set.model.dt, model.kind, model.dt
            )));
        }
        Ok(set)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let corrupt = |m: String| Error::CorruptPrimitiveFile(m);
        let file: PrimitiveFile = serde_json::from_str(text).map_err(|e| corrupt(e.to_string()))?;
        if file.version != FILE_VERSION {
            return Err(corrupt(format!("unsupported version {}", file.version)));
        }
        if ModelKind::from_id(&file.model_id) != Some(file.model.kind) || file.dt != file.model.dt {
            return Err(corrupt("header does not match embedded model".into()));
        }
        if file.count != file.primitives.len() {
            return Err(corrupt(format!("count {} but {} primitives", file.count, file.primitives.len())));
        }
        file.model.validate().map_err(|e| corrupt(e.to_string()))?;
        let model = unbounded_positions(&file.model);
        let pdim = model.kind.position_dim();
        for p in &file.primitives {
            if p.states.len() != file.horizon + 1 || p.controls.len() != file.horizon {
                return Err(corrupt(format!("primitive {} has the wrong length", p.id)));
            }
            if p.states.iter().any(|s| s.len() != model.state_dim()) {
                return Err(corrupt(format!("primitive {} has malformed states", p.id)));
            }
            if p.start().values()[..pdim].iter().any(|v| *v != 0.0) {
                return Err(corrupt(format!("primitive {} is not canonical", p.id)));
            }
            for (k, u) in p.controls.iter().enumerate() {
                if !model.control_in_bounds(u) {
                    return Err(corrupt(format!("primitive {} control {k} out of bounds", p.id)));
                }
                let next = model.step_unchecked(&p.states[k], u);
                if next != p.states[k + 1] {
                    return Err(corrupt(format!("primitive {} dynamics residual at step {k}", p.id)));
                }
            }
        }
        PrimitiveSet::new(file.model, file.horizon, file.primitives).map_err(|e| corrupt(e.to_string()))
    }
}

/// Forward-propagates each candidate's controls from the actual state `x`.
///
/// Motions leaving the state bounds or hitting the environment are dropped.
/// Repeated stay motions collapse into one since they roll out identically.
pub fn rollout_applicable(
    model: &DynamicsModel,
    ws: &Workspace,
    body: &RobotBody,
    robot: usize,
    x: &State,
    candidates: &[&MotionPrimitive],
) -> Vec<RolledMotion> {
    let mut out = Vec::with_capacity(candidates.len());
    let mut have_stay = false;
    for p in candidates {
        let stay = p.is_stay();
        if stay && have_stay {
            continue;
        }
        let mut states = Vec::with_capacity(p.controls.len() + 1);
        states.push(x.clone());
        let mut ok = true;
        for u in &p.controls {
            let next = model.step_unchecked(states.last().unwrap(), u);
            if !model.state_in_bounds(&next) || !body.state_free(ws, &next) {
                ok = false;
                break;
            }
            states.push(next);
        }
        if !ok {
            continue;
        }
        have_stay |= stay;
        let footprint = body.footprint(&states);
        out.push(RolledMotion {
            primitive: p.id,
            robot,
            states,
            controls: p.controls.clone(),
            h: 0.0,
            footprint,
        });
    }
    out
}

/// Re-integrates a primitive already known to be feasible from `x`.
/// Produces the same motion [`rollout_applicable`] did, bit for bit.
pub fn replay(model: &DynamicsModel, body: &RobotBody, robot: usize, x: &State, p: &MotionPrimitive, h: f64) -> RolledMotion {
    let mut states = Vec::with_capacity(p.controls.len() + 1);
    states.push(x.clone());
    for u in &p.controls {
        let next = model.step_unchecked(states.last().unwrap(), u);
        states.push(next);
    }
    let footprint = body.footprint(&states);
    RolledMotion {
        primitive: p.id,
        robot,
        states,
        controls: p.controls.clone(),
        h,
        footprint,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CollisionShape, Obstacle};

    fn uni() -> DynamicsModel {
        DynamicsModel::new(ModelKind::Unicycle1st)
    }

    #[test]
    fn double_integrator_single_stay() {
        let m = DynamicsModel::new(ModelKind::DoubleIntegrator2d);
        let set = generate_primitives(&m, 1, 10, 0).unwrap();
        assert_eq!(set.len(), 1);
        let p = &set.primitives[0];
        assert!(p.is_stay());
        assert!(p.states.iter().all(|s| s == &p.states[0]));
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_primitives(&uni(), 50, 20, 42).unwrap();
        let b = generate_primitives(&uni(), 50, 20, 42).unwrap();
        assert_eq!(a, b);
        let c = generate_primitives(&uni(), 50, 20, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn three_hundred_unicycle_primitives_are_distinct() {
        let m = uni();
        let set = generate_primitives(&m, 300, 20, 1).unwrap();
        assert_eq!(set.len(), 300);
        for (i, a) in set.primitives.iter().enumerate() {
            assert_eq!(a.horizon(), 20);
            assert_eq!(&a.start().values()[..2], &[0.0, 0.0]);
            for b in &set.primitives[i + 1..] {
                let d = m.distance(a.states.last().unwrap(), b.states.last().unwrap()).unwrap();
                assert!(d >= DUPLICATE_DISTANCE);
            }
            for k in 0..20 {
                assert_eq!(m.step(&a.states[k], &a.controls[k]).unwrap(), a.states[k + 1]);
                assert!(m.control_in_bounds(&a.controls[k]));
            }
        }
    }

    #[test]
    fn every_model_generates() {
        for kind in ModelKind::ALL {
            let m = DynamicsModel::new(kind);
            let set = generate_primitives(&m, 120, 20, 5).unwrap();
            assert_eq!(set.len(), 120);
            assert!(set.primitives[0].is_stay());
        }
    }

    #[test]
    fn generation_exhaustion() {
        // K = 1 with a tiny control range cannot produce many distinct finals
        let mut m = DynamicsModel::new(ModelKind::DoubleIntegrator2d);
        m.state_lower[2] = 0.0;
        m.state_upper[2] = 0.0;
        m.state_lower[3] = 0.0;
        m.state_upper[3] = 0.0;
        let err = generate_primitives(&m, 5, 1, 0).unwrap_err();
        assert!(matches!(err, Error::GenerationExhausted { produced: 1, .. }));
        assert!(generate_primitives(&m, 0, 1, 0).is_err());
    }

    fn fixed_set(thetas: &[f64]) -> PrimitiveSet {
        let m = uni();
        let prims = thetas
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let controls = vec![Control::new(&[0.5, 0.0]); 4];
                let (states, _) = m.rollout(&State::new(&[0.0, 0.0, t]), &controls).unwrap();
                MotionPrimitive { id: i, states, controls }
            })
            .collect();
        PrimitiveSet::new(m, 4, prims).unwrap()
    }

    #[test]
    fn applicable_examples() {
        let set = fixed_set(&[0.0, 0.3, 1.0]);
        let x = State::new(&[2.0, -1.0, 0.0]);
        assert_eq!(set.applicable(&x, f64::INFINITY), vec![0, 1, 2]);
        assert_eq!(set.applicable(&x, 0.2), vec![0, 1]);
        assert_eq!(set.applicable(&State::new(&[0.0, 0.0, 0.1]), 0.0), Vec::<usize>::new());
    }

    #[test]
    fn applicable_matches_linear_scan_and_ignores_translation() {
        let m = uni();
        let set = generate_primitives(&m, 300, 20, 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let x = State::new(&[rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-PI..PI)]);
            let r = rng.gen_range(0.0..1.0);
            let got = set.applicable(&x, r);
            let mut reduced_x = x.clone();
            reduced_x.0[0] = 0.0;
            reduced_x.0[1] = 0.0;
            let want: Vec<usize> = set
                .primitives
                .iter()
                .filter(|p| m.distance(&reduced_x, p.start()).unwrap() <= r)
                .map(|p| p.id)
                .collect();
            assert_eq!(got, want);
            let moved = State::new(&[x[0] + 3.0, x[1] - 7.0, x[2]]);
            assert_eq!(set.applicable(&moved, r), got);
        }
    }

    #[test]
    fn rollout_applicable_keeps_free_motions() {
        let mut m = uni();
        m.bind_workspace(&[-5.0, -5.0], &[5.0, 5.0]);
        let set = generate_primitives(&m, 100, 20, 3).unwrap();
        let ws = Workspace::empty(2, vec![-5.0, -5.0], vec![5.0, 5.0]).unwrap();
        let body = RobotBody::new(ModelKind::Unicycle1st, CollisionShape::Sphere { radius: 0.2 }, 2);
        let x = State::new(&[0.0, 0.0, 0.0]);
        let cands = set.applicable_motions(&x, 0.5);
        let stays = cands.iter().filter(|p| p.is_stay()).count();
        let rolled = rollout_applicable(&m, &ws, &body, 0, &x, &cands);
        assert_eq!(rolled.len(), cands.len() - stays.saturating_sub(1));
        for r in &rolled {
            for k in 0..20 {
                assert_eq!(m.step(&r.states[k], &r.controls[k]).unwrap(), r.states[k + 1]);
            }
        }
    }

    #[test]
    fn wall_ahead_discards_forward_motions() {
        let mut m = uni();
        m.bind_workspace(&[-5.0, -5.0], &[5.0, 5.0]);
        let controls = |v: f64, w: f64| vec![Control::new(&[v, w]); 20];
        let mk = |id, c: Vec<Control>| {
            let (states, _) = m.rollout(&State::new(&[0.0, 0.0, 0.0]), &c).unwrap();
            MotionPrimitive { id, states, controls: c }
        };
        let set = PrimitiveSet::new(
            m.clone(),
            20,
            vec![mk(0, controls(0.5, 0.0)), mk(1, controls(0.1, 0.5)), mk(2, controls(0.1, -0.5))],
        )
        .unwrap();
        let ws = Workspace::new(
            2,
            vec![-5.0, -5.0],
            vec![5.0, 5.0],
            vec![Obstacle::Box {
                center: vec![0.9, 0.0],
                half_extents: vec![0.1, 0.25],
                yaw: 0.0,
            }],
        )
        .unwrap();
        let body = RobotBody::new(ModelKind::Unicycle1st, CollisionShape::Sphere { radius: 0.2 }, 2);
        let x = State::new(&[0.0, 0.0, 0.0]);
        let rolled = rollout_applicable(&m, &ws, &body, 0, &x, &set.applicable_motions(&x, 1.0));
        let ids: Vec<usize> = rolled.iter().map(|r| r.primitive).collect();
        assert_eq!(ids, vec![1, 2]);
    }

    #[test]
    fn leaving_workspace_discards_motion() {
        let mut m = uni();
        m.bind_workspace(&[-1.0, -1.0], &[1.0, 1.0]);
        let c = vec![Control::new(&[0.5, 0.0]); 20];
        let (states, _) = m.rollout(&State::new(&[0.0, 0.0, PI / 2.0]), &c).unwrap();
        let set = PrimitiveSet::new(m.clone(), 20, vec![MotionPrimitive { id: 0, states, controls: c }]).unwrap();
        let ws = Workspace::empty(2, vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let body = RobotBody::new(ModelKind::Unicycle1st, CollisionShape::Sphere { radius: 0.1 }, 2);
        let x = State::new(&[0.0, 0.0, PI / 2.0]);
        assert!(rollout_applicable(&m, &ws, &body, 0, &x, &set.applicable_motions(&x, 0.5)).is_empty());
    }

    #[test]
    fn save_load_roundtrip_and_tamper() {
        let dir = tempfile::tempdir().unwrap();
        let m = DynamicsModel::new(ModelKind::CarWithTrailer);
        let set = generate_primitives(&m, 80, 20, 2).unwrap();
        let path = dir.path().join("prims.json");
        set.save(&path).unwrap();
        let back = PrimitiveSet::load(&path).unwrap();
        assert_eq!(set, back);
        for (a, b) in set.primitives.iter().zip(&back.primitives) {
            for (x, y) in a.states.iter().zip(&b.states) {
                for (u, v) in x.values().iter().zip(y.values()) {
                    assert_eq!(u.to_bits(), v.to_bits());
                }
            }
        }

        let mismatch = PrimitiveSet::load_for(&path, &uni());
        assert!(matches!(mismatch, Err(Error::CorruptPrimitiveFile(_))));

        let mut value: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        let old = value["primitives"][70]["states"][5][0].as_f64().unwrap();
        value["primitives"][70]["states"][5][0] = serde_json::json!(old + 1e-9);
        std::fs::write(&path, value.to_string()).unwrap();
        let err = PrimitiveSet::load(&path).unwrap_err();
        assert!(matches!(err, Error::CorruptPrimitiveFile(ref s) if s.contains("residual")));

        value["version"] = serde_json::json!(99);
        std::fs::write(&path, value.to_string()).unwrap();
        assert!(matches!(PrimitiveSet::load(&path), Err(Error::CorruptPrimitiveFile(_))));
    }

    #[test]
    fn empty_set_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let set = PrimitiveSet::new(uni(), 20, vec![]).unwrap();
        let path = dir.path().join("empty.json");
        set.save(&path).unwrap();
        let back = PrimitiveSet::load(&path).unwrap();
        assert!(back.is_empty());
        assert_eq!(back, set);
    }
}
