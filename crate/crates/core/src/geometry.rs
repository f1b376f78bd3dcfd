//! Workspace, obstacles, robot collision shapes and discrete-time collision
//! checks.
//!
//! All checks are exact at the sampled states: sphere/sphere and sphere/box
//! by closest-point distance, box/box by separating axes. Boxes only rotate
//! about the vertical axis, so in 3D the separating-axis test reduces to the
//! planar test plus a vertical interval overlap. Touching shapes do not
//! intersect.

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::dynamics::{ModelKind, State};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl Aabb {
    pub const EMPTY: Aabb = Aabb {
        lo: [f64::INFINITY; 3],
        hi: [f64::NEG_INFINITY; 3],
    };

    pub fn union(&self, o: &Aabb) -> Aabb {
        let mut r = *self;
        for i in 0..3 {
            r.lo[i] = r.lo[i].min(o.lo[i]);
            r.hi[i] = r.hi[i].max(o.hi[i]);
        }
        r
    }

    pub fn inflate(&self, by: f64) -> Aabb {
        let mut r = *self;
        for i in 0..3 {
            r.lo[i] -= by;
            r.hi[i] += by;
        }
        r
    }

    /// Open-interval overlap in the first `dim` axes.
    pub fn overlaps(&self, o: &Aabb, dim: usize) -> bool {
        (0..dim).all(|i| self.lo[i] < o.hi[i] && o.lo[i] < self.hi[i])
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Geom {
    Sphere(f64),
    Box([f64; 3]),
}

/// A primitive shape placed in the world.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PosedShape {
    pub dim: u8,
    pub geom: Geom,
    pub center: [f64; 3],
    pub cos: f64,
    pub sin: f64,
}

impl PosedShape {
    pub fn sphere(dim: usize, center: [f64; 3], radius: f64) -> Self {
        PosedShape {
            dim: dim as u8,
            geom: Geom::Sphere(radius),
            center,
            cos: 1.0,
            sin: 0.0,
        }
    }

    pub fn boxed(dim: usize, center: [f64; 3], half_extents: [f64; 3], yaw: f64) -> Self {
        let (sin, cos) = yaw.sin_cos();
        PosedShape {
            dim: dim as u8,
            geom: Geom::Box(half_extents),
            center,
            cos,
            sin,
        }
    }

    pub fn aabb(&self) -> Aabb {
        let c = self.center;
        let ext = match self.geom {
            Geom::Sphere(r) => [r, r, r],
            Geom::Box(h) => [
                self.cos.abs() * h[0] + self.sin.abs() * h[1],
                self.sin.abs() * h[0] + self.cos.abs() * h[1],
                h[2],
            ],
        };
        let mut b = Aabb {
            lo: [c[0] - ext[0], c[1] - ext[1], c[2] - ext[2]],
            hi: [c[0] + ext[0], c[1] + ext[1], c[2] + ext[2]],
        };
        if self.dim == 2 {
            b.lo[2] = 0.0;
            b.hi[2] = 0.0;
        }
        b
    }

    fn inflated(&self, by: f64) -> PosedShape {
        let mut s = *self;
        s.geom = match s.geom {
            Geom::Sphere(r) => Geom::Sphere(r + by),
            Geom::Box(h) => Geom::Box([h[0] + by, h[1] + by, h[2] + by]),
        };
        s
    }
}

fn sphere_sphere(dim: usize, a: &PosedShape, ra: f64, b: &PosedShape, rb: f64) -> bool {
    let d2: f64 = (0..dim).map(|i| (a.center[i] - b.center[i]).powi(2)).sum();
    let r = ra + rb;
    d2 < r * r
}

fn sphere_box(dim: usize, s: &PosedShape, r: f64, b: &PosedShape, h: [f64; 3]) -> bool {
    let dx = s.center[0] - b.center[0];
    let dy = s.center[1] - b.center[1];
    let local = [
        b.cos * dx + b.sin * dy,
        -b.sin * dx + b.cos * dy,
        s.center[2] - b.center[2],
    ];
    let mut d2 = 0.0;
    for i in 0..dim {
        let excess = local[i].abs() - h[i];
        if excess > 0.0 {
            d2 += excess * excess;
        }
    }
    d2 < r * r
}

fn box_box(dim: usize, a: &PosedShape, ha: [f64; 3], b: &PosedShape, hb: [f64; 3]) -> bool {
    let t = [b.center[0] - a.center[0], b.center[1] - a.center[1]];
    let axes_a = [[a.cos, a.sin], [-a.sin, a.cos]];
    let axes_b = [[b.cos, b.sin], [-b.sin, b.cos]];
    for l in axes_a.iter().chain(axes_b.iter()) {
        let proj = |axes: &[[f64; 2]; 2], h: [f64; 3]| {
            h[0] * (axes[0][0] * l[0] + axes[0][1] * l[1]).abs()
                + h[1] * (axes[1][0] * l[0] + axes[1][1] * l[1]).abs()
        };
        let dist = (t[0] * l[0] + t[1] * l[1]).abs();
        if dist >= proj(&axes_a, ha) + proj(&axes_b, hb) {
            return false;
        }
    }
    if dim == 3 && (b.center[2] - a.center[2]).abs() >= ha[2] + hb[2] {
        return false;
    }
    true
}

/// Exact intersection test between two placed shapes, with both inflated
/// by `margin / 2`.
pub fn posed_intersect(a: &PosedShape, b: &PosedShape, margin: f64) -> Result<bool> {
    if a.dim != b.dim {
        return Err(Error::ContractViolation(format!(
            "cannot intersect {}D and {}D shapes",
            a.dim, b.dim
        )));
    }
    Ok(posed_intersect_unchecked(a, b, margin))
}

pub(crate) fn posed_intersect_unchecked(a: &PosedShape, b: &PosedShape, margin: f64) -> bool {
    let (a, b) = if margin > 0.0 {
        (a.inflated(margin / 2.0), b.inflated(margin / 2.0))
    } else {
        (*a, *b)
    };
    let dim = a.dim as usize;
    match (a.geom, b.geom) {
        (Geom::Sphere(ra), Geom::Sphere(rb)) => sphere_sphere(dim, &a, ra, &b, rb),
        (Geom::Sphere(r), Geom::Box(h)) => sphere_box(dim, &a, r, &b, h),
        (Geom::Box(h), Geom::Sphere(r)) => sphere_box(dim, &b, r, &a, h),
        (Geom::Box(ha), Geom::Box(hb)) => box_box(dim, &a, ha, &b, hb),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Obstacle {
    Box {
        center: Vec<f64>,
        half_extents: Vec<f64>,
        #[serde(default)]
        yaw: f64,
    },
    Sphere {
        center: Vec<f64>,
        radius: f64,
    },
}

fn to3(v: &[f64]) -> [f64; 3] {
    [
        v.first().copied().unwrap_or(0.0),
        v.get(1).copied().unwrap_or(0.0),
        v.get(2).copied().unwrap_or(0.0),
    ]
}

impl Obstacle {
    pub fn posed(&self, dim: usize) -> PosedShape {
        match self {
            Obstacle::Box {
                center,
                half_extents,
                yaw,
            } => PosedShape::boxed(dim, to3(center), to3(half_extents), *yaw),
            Obstacle::Sphere { center, radius } => PosedShape::sphere(dim, to3(center), *radius),
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        let (center, ok) = match self {
            Obstacle::Box {
                center,
                half_extents,
                ..
            } => (
                center,
                half_extents.len() == dim && half_extents.iter().all(|h| *h > 0.0),
            ),
            Obstacle::Sphere { center, radius } => (center, *radius > 0.0),
        };
        if center.len() != dim || !ok {
            return Err(Error::InvalidScenario(format!("malformed obstacle {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct WorkspaceDef {
    dim: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    #[serde(default)]
    obstacles: Vec<Obstacle>,
}

/// Uniform grid over obstacle bounding boxes.
#[derive(Clone, Debug, Default)]
struct ObstacleGrid {
    cell: f64,
    origin: [f64; 3],
    counts: [usize; 3],
    cells: Vec<Vec<u32>>,
}

impl ObstacleGrid {
    fn build(dim: usize, lower: &[f64], upper: &[f64], shapes: &[PosedShape]) -> Self {
        let cell = 1.0;
        let mut origin = [0.0; 3];
        let mut counts = [1usize; 3];
        for i in 0..dim {
            origin[i] = lower[i];
            counts[i] = (((upper[i] - lower[i]) / cell).ceil() as usize).clamp(1, 512);
        }
        let mut grid = ObstacleGrid {
            cell,
            origin,
            counts,
            cells: vec![Vec::new(); counts[0] * counts[1] * counts[2]],
        };
        for (idx, s) in shapes.iter().enumerate() {
            let (lo, hi) = grid.range(&s.aabb(), dim);
            for z in lo[2]..=hi[2] {
                for y in lo[1]..=hi[1] {
                    for x in lo[0]..=hi[0] {
                        let c = grid.index(x, y, z);
                        grid.cells[c].push(idx as u32);
                    }
                }
            }
        }
        grid
    }

    fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (z * self.counts[1] + y) * self.counts[0] + x
    }

    fn range(&self, b: &Aabb, dim: usize) -> ([usize; 3], [usize; 3]) {
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        for i in 0..dim {
            let clampi = |v: f64| {
                let c = ((v - self.origin[i]) / self.cell).floor();
                c.clamp(0.0, (self.counts[i] - 1) as f64) as usize
            };
            lo[i] = clampi(b.lo[i]);
            hi[i] = clampi(b.hi[i]);
        }
        (lo, hi)
    }
}

/// Axis-aligned workspace with obstacles.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "WorkspaceDef", into = "WorkspaceDef")]
pub struct Workspace {
    pub dim: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub obstacles: Vec<Obstacle>,
    posed: Vec<PosedShape>,
    grid: ObstacleGrid,
}

impl PartialEq for Workspace {
    fn eq(&self, o: &Self) -> bool {
        self.dim == o.dim && self.lower == o.lower && self.upper == o.upper && self.obstacles == o.obstacles
    }
}

impl TryFrom<WorkspaceDef> for Workspace {
    type Error = Error;
    fn try_from(d: WorkspaceDef) -> Result<Self> {
        Workspace::new(d.dim, d.lower, d.upper, d.obstacles)
    }
}

impl From<Workspace> for WorkspaceDef {
    fn from(w: Workspace) -> Self {
        WorkspaceDef {
            dim: w.dim,
            lower: w.lower,
            upper: w.upper,
            obstacles: w.obstacles,
        }
    }
}

impl Workspace {
    pub fn new(dim: usize, lower: Vec<f64>, upper: Vec<f64>, obstacles: Vec<Obstacle>) -> Result<Self> {
        if !(dim == 2 || dim == 3) || lower.len() != dim || upper.len() != dim {
            return Err(Error::InvalidScenario(format!("workspace must be 2D or 3D, got dim {dim}")));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::InvalidScenario("workspace lower must be below upper".into()));
        }
        for o in &obstacles {
            o.validate(dim)?;
        }
        let posed: Vec<PosedShape> = obstacles.iter().map(|o| o.posed(dim)).collect();
        let grid = ObstacleGrid::build(dim, &lower, &upper, &posed);
        Ok(Workspace {
            dim,
            lower,
            upper,
            obstacles,
            posed,
            grid,
        })
    }

    pub fn empty(dim: usize, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        Workspace::new(dim, lower, upper, Vec::new())
    }

    pub fn bounds_aabb(&self) -> Aabb {
        let mut b = Aabb {
            lo: [0.0; 3],
            hi: [0.0; 3],
        };
        for i in 0..self.dim {
            b.lo[i] = self.lower[i];
            b.hi[i] = self.upper[i];
        }
        b
    }

    /// True iff the placed shape lies inside the bounds and touches no obstacle.
    pub fn shape_free(&self, s: &PosedShape) -> bool {
        let b = s.aabb();
        for i in 0..self.dim {
            if b.lo[i] < self.lower[i] || b.hi[i] > self.upper[i] {
                return false;
            }
        }
        if self.posed.is_empty() {
            return true;
        }
        let (lo, hi) = self.grid.range(&b, self.dim);
        let mut seen: SmallVec<[u32; 16]> = SmallVec::new();
        for z in lo[2]..=hi[2] {
            for y in lo[1]..=hi[1] {
                for x in lo[0]..=hi[0] {
                    for &o in &self.grid.cells[self.grid.index(x, y, z)] {
                        if seen.contains(&o) {
                            continue;
                        }
                        seen.push(o);
                        if posed_intersect_unchecked(s, &self.posed[o as usize], 0.0) {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }

    /// True iff the point is inside the bounds and outside every obstacle.
    pub fn point_free(&self, p: [f64; 3]) -> bool {
        self.shape_free(&PosedShape::sphere(self.dim, p, 0.0))
            && !self
                .posed
                .iter()
                .any(|o| point_inside(self.dim, p, o))
    }
}

fn point_inside(dim: usize, p: [f64; 3], o: &PosedShape) -> bool {
    match o.geom {
        Geom::Sphere(r) => (0..dim).map(|i| (p[i] - o.center[i]).powi(2)).sum::<f64>() <= r * r,
        Geom::Box(h) => {
            let dx = p[0] - o.center[0];
            let dy = p[1] - o.center[1];
            let local = [o.cos * dx + o.sin * dy, -o.sin * dx + o.cos * dy, p[2] - o.center[2]];
            (0..dim).all(|i| local[i].abs() <= h[i])
        }
    }
}

/// Robot collision shape. Orientation comes from the heading dimension of
/// the state when the model has one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CollisionShape {
    Sphere {
        radius: f64,
    },
    Box {
        half_extents: Vec<f64>,
    },
    /// Car body centered on the state position plus a trailer box whose
    /// center sits `hitch` behind it along the trailer heading.
    CarTrailer {
        body_half_extents: Vec<f64>,
        trailer_half_extents: Vec<f64>,
        hitch: f64,
    },
}

impl CollisionShape {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            CollisionShape::Sphere { radius } => *radius > 0.0,
            CollisionShape::Box { half_extents } => {
                (2..=3).contains(&half_extents.len()) && half_extents.iter().all(|h| *h > 0.0)
            }
            CollisionShape::CarTrailer {
                body_half_extents,
                trailer_half_extents,
                hitch,
            } => {
                *hitch > 0.0
                    && body_half_extents.iter().chain(trailer_half_extents).all(|h| *h > 0.0)
                    && body_half_extents.len() >= 2
                    && trailer_half_extents.len() >= 2
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidScenario(format!("malformed collision shape {self:?}")))
        }
    }

    /// Smallest inscribed extent, used for the tunneling check.
    pub fn min_extent(&self) -> f64 {
        match self {
            CollisionShape::Sphere { radius } => *radius,
            CollisionShape::Box { half_extents } => half_extents[..2].iter().cloned().fold(f64::INFINITY, f64::min),
            CollisionShape::CarTrailer {
                body_half_extents,
                trailer_half_extents,
                ..
            } => body_half_extents[..2]
                .iter()
                .chain(&trailer_half_extents[..2])
                .cloned()
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Radius of a sphere containing one shape part, centered at its pose.
    pub fn bounding_radius(&self) -> f64 {
        let norm = |h: &[f64]| h.iter().map(|v| v * v).sum::<f64>().sqrt();
        match self {
            CollisionShape::Sphere { radius } => *radius,
            CollisionShape::Box { half_extents } => norm(&half_extents[..2]),
            CollisionShape::CarTrailer {
                body_half_extents, ..
            } => norm(&body_half_extents[..2]),
        }
    }
}

pub type Parts = SmallVec<[PosedShape; 2]>;

/// Maps states of one robot to placed collision shapes.
#[derive(Clone, Debug, PartialEq)]
pub struct RobotBody {
    pub model: ModelKind,
    pub shape: CollisionShape,
    /// Workspace dimension.
    pub dim: usize,
    /// Height of planar robots in a 3D workspace.
    pub plane_z: f64,
}

impl RobotBody {
    pub fn new(model: ModelKind, shape: CollisionShape, dim: usize) -> Self {
        RobotBody {
            model,
            shape,
            dim,
            plane_z: 0.0,
        }
    }

    pub fn parts(&self, x: &State) -> Parts {
        let mut center = [x[0], x[1], 0.0];
        if self.model.position_dim() == 3 {
            center[2] = x[2];
        } else if self.dim == 3 {
            center[2] = self.plane_z;
        }
        let yaw = self.model.heading_index().map(|i| x[i]).unwrap_or(0.0);
        let mut out = Parts::new();
        match &self.shape {
            CollisionShape::Sphere { radius } => out.push(PosedShape::sphere(self.dim, center, *radius)),
            CollisionShape::Box { half_extents } => {
                out.push(PosedShape::boxed(self.dim, center, to3(half_extents), yaw))
            }
            CollisionShape::CarTrailer {
                body_half_extents,
                trailer_half_extents,
                hitch,
            } => {
                out.push(PosedShape::boxed(self.dim, center, to3(body_half_extents), yaw));
                let trailer_yaw = if self.model == ModelKind::CarWithTrailer { x[3] } else { yaw };
                let (s, c) = trailer_yaw.sin_cos();
                let tc = [center[0] - hitch * c, center[1] - hitch * s, center[2]];
                out.push(PosedShape::boxed(self.dim, tc, to3(trailer_half_extents), trailer_yaw));
            }
        }
        out
    }

    pub fn state_free(&self, ws: &Workspace, x: &State) -> bool {
        self.parts(x).iter().all(|p| ws.shape_free(p))
    }

    pub fn footprint(&self, states: &[State]) -> Footprint {
        let mut parts = Vec::with_capacity(states.len() * 2);
        let mut aabb = Aabb::EMPTY;
        let mut per = 0;
        for x in states {
            let p = self.parts(x);
            per = p.len();
            for s in &p {
                aabb = aabb.union(&s.aabb());
            }
            parts.extend(p);
        }
        Footprint {
            per_step: per,
            steps: states.len(),
            parts,
            aabb,
            dim: self.dim,
        }
    }
}

/// Placed shapes of a robot at every step of a motion.
#[derive(Clone, Debug, PartialEq)]
pub struct Footprint {
    pub per_step: usize,
    pub steps: usize,
    pub parts: Vec<PosedShape>,
    pub aabb: Aabb,
    pub dim: usize,
}

impl Footprint {
    pub fn at(&self, k: usize) -> &[PosedShape] {
        &self.parts[k * self.per_step..(k + 1) * self.per_step]
    }
}

/// Intersection test for two robot shapes at given states.
pub fn shapes_intersect(
    a: &RobotBody,
    state_a: &State,
    b: &RobotBody,
    state_b: &State,
    margin: f64,
) -> Result<bool> {
    if a.dim != b.dim {
        return Err(Error::ContractViolation(format!(
            "robot bodies live in {}D and {}D workspaces",
            a.dim, b.dim
        )));
    }
    let pa = a.parts(state_a);
    let pb = b.parts(state_b);
    for x in &pa {
        for y in &pb {
            if posed_intersect(x, y, margin)? {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

/// Time-synchronized footprint collision: shapes only conflict at equal
/// step indices.
pub fn footprints_collide(a: &Footprint, b: &Footprint, margin: f64) -> Result<bool> {
    if a.steps != b.steps {
        return Err(Error::ContractViolation(format!(
            "horizon mismatch: {} vs {} states",
            a.steps, b.steps
        )));
    }
    if a.dim != b.dim {
        return Err(Error::ContractViolation("footprints in different workspaces".into()));
    }
    Ok(footprints_collide_unchecked(a, b, margin))
}

pub(crate) fn footprints_collide_unchecked(a: &Footprint, b: &Footprint, margin: f64) -> bool {
    if !a.aabb.inflate(margin / 2.0).overlaps(&b.aabb.inflate(margin / 2.0), a.dim) {
        return false;
    }
    for k in 0..a.steps {
        for x in a.at(k) {
            for y in b.at(k) {
                if posed_intersect_unchecked(x, y, margin) {
                    return true;
                }
            }
        }
    }
    false
}
