//! Robot dynamics models, explicit Euler integration and the state metric.
//!
//! Every model integrates `x_{k+1} = x_k + f(x_k, u_k) * dt` with angle
//! dimensions wrapped into `[-pi, pi)`. The integrator is deliberately first
//! order so that independently re-integrating a control sequence reproduces
//! a planned trajectory bit for bit.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};

/// Fixed-capacity real vector used for states and controls.
pub type Vector = SmallVec<[f64; 6]>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[serde(rename = "unicycle_1st")]
    Unicycle1st,
    #[serde(rename = "double_integrator_2d")]
    DoubleIntegrator2d,
    #[serde(rename = "double_integrator_3d")]
    DoubleIntegrator3d,
    CarWithTrailer,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::Unicycle1st,
        ModelKind::DoubleIntegrator2d,
        ModelKind::DoubleIntegrator3d,
        ModelKind::CarWithTrailer,
    ];

    pub fn id(self) -> &'static str {
        match self {
            ModelKind::Unicycle1st => "unicycle_1st",
            ModelKind::DoubleIntegrator2d => "double_integrator_2d",
            ModelKind::DoubleIntegrator3d => "double_integrator_3d",
            ModelKind::CarWithTrailer => "car_with_trailer",
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.id() == id)
    }

    pub fn dim_kinds(self) -> &'static [DimKind] {
        use DimKind::*;
        match self {
            ModelKind::Unicycle1st => &[Position, Position, Angle],
            ModelKind::DoubleIntegrator2d => &[Position, Position, Velocity, Velocity],
            ModelKind::DoubleIntegrator3d => {
                &[Position, Position, Position, Velocity, Velocity, Velocity]
            }
            ModelKind::CarWithTrailer => &[Position, Position, Angle, Angle],
        }
    }

    pub fn state_dim(self) -> usize {
        self.dim_kinds().len()
    }

    pub fn control_dim(self) -> usize {
        match self {
            ModelKind::Unicycle1st | ModelKind::DoubleIntegrator2d | ModelKind::CarWithTrailer => 2,
            ModelKind::DoubleIntegrator3d => 3,
        }
    }

    /// Number of leading position dimensions (the workspace dimension).
    pub fn position_dim(self) -> usize {
        match self {
            ModelKind::DoubleIntegrator3d => 3,
            _ => 2,
        }
    }

    /// Index of the heading used to orient the collision shape, if any.
    pub fn heading_index(self) -> Option<usize> {
        match self {
            ModelKind::Unicycle1st | ModelKind::CarWithTrailer => Some(2),
            _ => None,
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.id())
    }
}

/// Semantics of a state dimension.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimKind {
    Position,
    Angle,
    Velocity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct State(pub Vector);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Control(pub Vector);

impl State {
    pub fn new(values: &[f64]) -> Self {
        State(Vector::from_slice(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Control {
    pub fn new(values: &[f64]) -> Self {
        Control(Vector::from_slice(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

impl std::ops::Index<usize> for State {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl std::ops::Index<usize> for Control {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut r = a - two_pi * ((a + PI) / two_pi).floor();
    if r >= PI {
        r -= two_pi;
    }
    if r < -PI {
        r += two_pi;
    }
    r
}

/// Length of the shortest arc between two angles.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    wrap_angle(a - b).abs()
}

fn block_distance(kinds: &[DimKind], weights: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let mut pos = 0.0;
    let mut vel = 0.0;
    let mut ang = 0.0;
    for (i, k) in kinds.iter().enumerate() {
        let w = weights[i];
        match k {
            DimKind::Position => {
                let d = w * (a[i] - b[i]);
                pos += d * d;
            }
            DimKind::Velocity => {
                let d = w * (a[i] - b[i]);
                vel += d * d;
            }
            DimKind::Angle => ang += w * angle_diff(a[i], b[i]),
        }
    }
    pos.sqrt() + vel.sqrt() + ang
}

/// Weighted metric over states with per-dimension semantics.
///
/// Position and velocity dimensions each form a weighted Euclidean block;
/// angle dimensions contribute their weighted shortest arc. The metric is
/// the sum of the block distances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateMetric {
    pub kinds: Vec<DimKind>,
    pub weights: Vec<f64>,
}

impl StateMetric {
    pub fn new(kinds: Vec<DimKind>, weights: Vec<f64>) -> Self {
        assert_eq!(kinds.len(), weights.len());
        StateMetric { kinds, weights }
    }

    pub fn dim(&self) -> usize {
        self.kinds.len()
    }

    pub fn dist(&self, a: &[f64], b: &[f64]) -> f64 {
        block_distance(&self.kinds, &self.weights, a, b)
    }

    /// Exact distance from `q` to the axis-aligned box `[lo, hi]`.
    ///
    /// Angle intervals are assumed to be non-wrapping sub-intervals of
    /// `[-pi, pi)`.
    pub fn dist_to_box(&self, q: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
        let mut pos = 0.0;
        let mut vel = 0.0;
        let mut ang = 0.0;
        for i in 0..self.kinds.len() {
            let w = self.weights[i];
            match self.kinds[i] {
                DimKind::Position | DimKind::Velocity => {
                    let gap = if q[i] < lo[i] {
                        lo[i] - q[i]
                    } else if q[i] > hi[i] {
                        q[i] - hi[i]
                    } else {
                        0.0
                    };
                    let d = w * gap;
                    if self.kinds[i] == DimKind::Position {
                        pos += d * d;
                    } else {
                        vel += d * d;
                    }
                }
                DimKind::Angle => {
                    if q[i] < lo[i] || q[i] > hi[i] {
                        ang += w * angle_diff(q[i], lo[i]).min(angle_diff(q[i], hi[i]));
                    }
                }
            }
        }
        pos.sqrt() + vel.sqrt() + ang
    }

    /// The metric restricted to the dimensions in `dims`.
    pub fn restrict(&self, dims: &[usize]) -> StateMetric {
        StateMetric {
            kinds: dims.iter().map(|&i| self.kinds[i]).collect(),
            weights: dims.iter().map(|&i| self.weights[i]).collect(),
        }
    }
}

/// A dynamics model with its bounds and constants.
///
/// Position bounds default to an effectively unbounded range and are
/// normally bound to the workspace by [`DynamicsModel::bind_workspace`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicsModel {
    pub kind: ModelKind,
    pub dt: f64,
    pub state_lower: Vec<f64>,
    pub state_upper: Vec<f64>,
    pub control_lower: Vec<f64>,
    pub control_upper: Vec<f64>,
    /// Wheelbase `L` (car with trailer only).
    #[serde(default)]
    pub wheelbase: f64,
    /// Hitch length `L_h` (car with trailer only).
    #[serde(default)]
    pub hitch: f64,
    pub metric_weights: Vec<f64>,
}

const UNBOUNDED: f64 = 1.0e9;

impl DynamicsModel {
    /// Model with default bounds, `dt = 0.1` and default metric weights
    /// (1.0 position, 0.5 angle, 0.25 velocity).
    pub fn new(kind: ModelKind) -> Self {
        let kinds = kind.dim_kinds();
        let n = kinds.len();
        let mut state_lower = vec![-UNBOUNDED; n];
        let mut state_upper = vec![UNBOUNDED; n];
        for (i, k) in kinds.iter().enumerate() {
            match k {
                DimKind::Angle => {
                    state_lower[i] = -PI;
                    state_upper[i] = PI;
                }
                DimKind::Velocity => {
                    state_lower[i] = -0.5;
                    state_upper[i] = 0.5;
                }
                DimKind::Position => {}
            }
        }
        let (control_lower, control_upper, wheelbase, hitch) = match kind {
            ModelKind::Unicycle1st => (vec![-0.5, -0.5], vec![0.5, 0.5], 0.0, 0.0),
            ModelKind::DoubleIntegrator2d => (vec![-1.0; 2], vec![1.0; 2], 0.0, 0.0),
            ModelKind::DoubleIntegrator3d => (vec![-1.0; 3], vec![1.0; 3], 0.0, 0.0),
            ModelKind::CarWithTrailer => (
                vec![-0.1, -PI / 3.0],
                vec![0.5, PI / 3.0],
                0.4,
                0.5,
            ),
        };
        let metric_weights = kinds
            .iter()
            .map(|k| match k {
                DimKind::Position => 1.0,
                DimKind::Angle => 0.5,
                DimKind::Velocity => 0.25,
            })
            .collect();
        DynamicsModel {
            kind,
            dt: 0.1,
            state_lower,
            state_upper,
            control_lower,
            control_upper,
            wheelbase,
            hitch,
            metric_weights,
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    /// Restricts the position dimensions to the given workspace box.
    pub fn bind_workspace(&mut self, lower: &[f64], upper: &[f64]) {
        for i in 0..self.kind.position_dim() {
            self.state_lower[i] = lower[i];
            self.state_upper[i] = upper[i];
        }
    }

    pub fn state_dim(&self) -> usize {
        self.kind.state_dim()
    }

    pub fn control_dim(&self) -> usize {
        self.kind.control_dim()
    }

    pub fn dim_kinds(&self) -> &'static [DimKind] {
        self.kind.dim_kinds()
    }

    pub fn metric(&self) -> StateMetric {
        StateMetric::new(self.dim_kinds().to_vec(), self.metric_weights.clone())
    }

    /// Indices of the non-position dimensions (the translation-reduced state).
    pub fn reduced_dims(&self) -> Vec<usize> {
        (self.kind.position_dim()..self.state_dim()).collect()
    }

    /// Upper bound on the translational speed reachable under the bounds.
    pub fn max_speed(&self) -> f64 {
        match self.kind {
            ModelKind::Unicycle1st | ModelKind::CarWithTrailer => {
                self.control_lower[0].abs().max(self.control_upper[0].abs())
            }
            ModelKind::DoubleIntegrator2d | ModelKind::DoubleIntegrator3d => {
                let p = self.kind.position_dim();
                (p..self.state_dim())
                    .map(|i| {
                        let v = self.state_lower[i].abs().max(self.state_upper[i].abs());
                        v * v
                    })
                    .sum::<f64>()
                    .sqrt()
            }
        }
    }

    /// Largest yaw rate reachable within the control bounds, if the state has a heading.
    pub fn max_turn_rate(&self) -> Option<f64> {
        let bound = |i: usize| self.control_lower[i].abs().max(self.control_upper[i].abs());
        match self.kind {
            ModelKind::Unicycle1st => Some(bound(1)),
            ModelKind::CarWithTrailer => Some(bound(0) * bound(1).tan() / self.wheelbase),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.state_dim();
        let m = self.control_dim();
        if !(self.dt > 0.0) {
            return Err(Error::InvalidModel(format!("dt must be positive, got {}", self.dt)));
        }
        if self.state_lower.len() != n || self.state_upper.len() != n {
            return Err(Error::InvalidModel("state bound length mismatch".into()));
        }
        if self.control_lower.len() != m || self.control_upper.len() != m {
            return Err(Error::InvalidModel("control bound length mismatch".into()));
        }
        if self.metric_weights.len() != n {
            return Err(Error::InvalidModel("metric weight length mismatch".into()));
        }
        for (i, k) in self.dim_kinds().iter().enumerate() {
            if *k != DimKind::Angle && self.state_lower[i] > self.state_upper[i] {
                return Err(Error::InvalidModel(format!("state bound {i} is empty")));
            }
        }
        for i in 0..m {
            if self.control_lower[i] > self.control_upper[i] {
                return Err(Error::InvalidModel(format!("control bound {i} is empty")));
            }
        }
        if self.metric_weights.iter().any(|w| !(*w >= 0.0))
            || !self.metric_weights.iter().any(|w| *w > 0.0)
        {
            return Err(Error::InvalidModel(
                "metric weights must be nonnegative with one positive".into(),
            ));
        }
        if self.kind == ModelKind::CarWithTrailer && !(self.wheelbase > 0.0 && self.hitch > 0.0) {
            return Err(Error::InvalidModel(
                "car with trailer needs positive wheelbase and hitch".into(),
            ));
        }
        Ok(())
    }

    fn check_state(&self, x: &State) -> Result<()> {
        if x.len() != self.state_dim() {
            return Err(Error::DimensionMismatch {
                what: "state",
                expected: self.state_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    fn check_control(&self, u: &Control) -> Result<()> {
        if u.0.len() != self.control_dim() {
            return Err(Error::DimensionMismatch {
                what: "control",
                expected: self.control_dim(),
                got: u.0.len(),
            });
        }
        Ok(())
    }

    /// One explicit Euler step `x + f(x, u) * dt` with angles wrapped.
    pub fn step(&self, x: &State, u: &Control) -> Result<State> {
        self.check_state(x)?;
        self.check_control(u)?;
        Ok(self.step_unchecked(x, u))
    }

    pub(crate) fn step_unchecked(&self, x: &State, u: &Control) -> State {
        let dt = self.dt;
        let s = &x.0;
        let c = &u.0;
        let mut out = s.clone();
        match self.kind {
            ModelKind::Unicycle1st => {
                let (sin, cos) = s[2].sin_cos();
                out[0] = s[0] + c[0] * cos * dt;
                out[1] = s[1] + c[0] * sin * dt;
                out[2] = wrap_angle(s[2] + c[1] * dt);
            }
            ModelKind::DoubleIntegrator2d | ModelKind::DoubleIntegrator3d => {
                let p = self.kind.position_dim();
                for i in 0..p {
                    out[i] = s[i] + s[p + i] * dt;
                    out[p + i] = s[p + i] + c[i] * dt;
                }
            }
            ModelKind::CarWithTrailer => {
                let (sin, cos) = s[2].sin_cos();
                let v = c[0];
                out[0] = s[0] + v * cos * dt;
                out[1] = s[1] + v * sin * dt;
                out[2] = wrap_angle(s[2] + v / self.wheelbase * c[1].tan() * dt);
                out[3] = wrap_angle(s[3] + v / self.hitch * (s[2] - s[3]).sin() * dt);
            }
        }
        State(out)
    }

    /// Integrates `controls` from `x0`. The flag is true iff every visited
    /// state lies within the state bounds.
    pub fn rollout(&self, x0: &State, controls: &[Control]) -> Result<(Vec<State>, bool)> {
        self.check_state(x0)?;
        for u in controls {
            self.check_control(u)?;
        }
        let mut states = Vec::with_capacity(controls.len() + 1);
        states.push(x0.clone());
        let mut in_bounds = self.state_in_bounds(x0);
        for u in controls {
            let next = self.step_unchecked(states.last().unwrap(), u);
            in_bounds &= self.state_in_bounds(&next);
            states.push(next);
        }
        Ok((states, in_bounds))
    }

    pub fn distance(&self, a: &State, b: &State) -> Result<f64> {
        self.check_state(a)?;
        self.check_state(b)?;
        Ok(self.distance_unchecked(a, b))
    }

    pub(crate) fn distance_unchecked(&self, a: &State, b: &State) -> f64 {
        block_distance(self.dim_kinds(), &self.metric_weights, a.values(), b.values())
    }

    /// Euclidean distance between the position blocks of two states.
    pub fn position_distance(&self, a: &State, b: &State) -> f64 {
        (0..self.kind.position_dim())
            .map(|i| (a[i] - b[i]) * (a[i] - b[i]))
            .sum::<f64>()
            .sqrt()
    }

    pub fn state_in_bounds(&self, x: &State) -> bool {
        self.dim_kinds().iter().enumerate().all(|(i, k)| match k {
            DimKind::Angle => x[i] >= -PI && x[i] < PI,
            _ => x[i] >= self.state_lower[i] && x[i] <= self.state_upper[i],
        })
    }

    pub fn control_in_bounds(&self, u: &Control) -> bool {
        u.0.len() == self.control_dim()
            && (0..self.control_dim())
                .all(|i| u[i] >= self.control_lower[i] && u[i] <= self.control_upper[i])
    }

    /// Zero control, which leaves unicycle and car states fixed and keeps a
    /// double integrator at rest only when its velocity is zero.
    pub fn zero_control(&self) -> Control {
        Control(Vector::from_elem(0.0, self.control_dim()))
    }

    /// Normalizes angle dimensions of `x` into `[-pi, pi)`.
    pub fn normalize(&self, x: &mut State) {
        for (i, k) in self.dim_kinds().iter().enumerate() {
            if *k == DimKind::Angle {
                x.0[i] = wrap_angle(x.0[i]);
            }
        }
    }
}
