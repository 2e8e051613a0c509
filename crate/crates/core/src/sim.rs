//! Deterministic closed-loop world: ground-truth terrain, a point-mass
//! vehicle, scripted obstacle agents and ground-truth view rendering.
//!
//! Nothing in the perception or control path reads the world directly; they
//! only see [`render_view`] output and the vehicle pose.

use crate::bt::FlightCommand;
use crate::classes::ClassId;
use crate::geometry::{CameraModel, GeometryError, GroundPoint, RigidPose, MIN_POSE_HEIGHT};
use crate::segmentation::ClassImage;
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("invalid terrain parameters: {0}")]
    InvalidParams(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassFraction {
    pub class: ClassId,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TerrainParams {
    /// Side lengths in meters; the terrain is centered on the world origin.
    pub extent_m: [f64; 2],
    pub resolution_m: f64,
    /// Typical patch size in meters.
    pub feature_scale_m: f64,
    /// Area fractions; earlier entries occupy the low end of the noise field,
    /// so later classes form patches embedded in earlier ones.
    pub mixture: Vec<ClassFraction>,
}

impl Default for TerrainParams {
    fn default() -> Self {
        Self {
            extent_m: [160.0, 160.0],
            resolution_m: 0.25,
            feature_scale_m: 24.0,
            mixture: vec![ClassFraction {
                class: ClassId::Grass,
                fraction: 1.0,
            }],
        }
    }
}

/// Ground-truth class grid, row-major (`y` outer).
#[derive(Debug, Clone, PartialEq)]
pub struct Terrain {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    /// World coordinates of the grid's lower-left corner.
    pub origin: GroundPoint,
    pub classes: Vec<ClassId>,
}

impl Terrain {
    /// Class at a world point; Background beyond the extent.
    #[inline]
    pub fn class_at(&self, p: &GroundPoint) -> ClassId {
        match self.cell_of(p) {
            Some((x, y)) => self.classes[y * self.width + x],
            None => ClassId::Background,
        }
    }

    #[inline]
    pub fn cell_of(&self, p: &GroundPoint) -> Option<(usize, usize)> {
        let fx = ((p.x - self.origin.x) / self.resolution).floor();
        let fy = ((p.y - self.origin.y) / self.resolution).floor();
        if fx >= 0.0 && fy >= 0.0 && fx < self.width as f64 && fy < self.height as f64 {
            Some((fx as usize, fy as usize))
        } else {
            None
        }
    }

    pub fn cell_center(&self, x: usize, y: usize) -> GroundPoint {
        GroundPoint::new(
            self.origin.x + (x as f64 + 0.5) * self.resolution,
            self.origin.y + (y as f64 + 0.5) * self.resolution,
        )
    }

    /// Fraction of cells labeled `class`.
    pub fn fraction(&self, class: ClassId) -> f64 {
        self.classes.iter().filter(|&&c| c == class).count() as f64 / self.classes.len() as f64
    }
}

struct ValueNoise {
    cols: usize,
    values: Vec<f64>,
    spacing: f64,
}

impl ValueNoise {
    fn new(rng: &mut ChaCha8Rng, extent: [f64; 2], spacing: f64) -> Self {
        let cols = (extent[0] / spacing).ceil() as usize + 2;
        let rows = (extent[1] / spacing).ceil() as usize + 2;
        let values = (0..cols * rows).map(|_| rng.random::<f64>()).collect();
        Self {
            cols,
            values,
            spacing,
        }
    }

    fn sample(&self, x: f64, y: f64) -> f64 {
        let (gx, gy) = (x / self.spacing, y / self.spacing);
        let (ix, iy) = (gx.floor() as usize, gy.floor() as usize);
        let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
        let (tx, ty) = (smooth(gx - ix as f64), smooth(gy - iy as f64));
        let at = |cx: usize, cy: usize| self.values[cy * self.cols + cx];
        let top = at(ix, iy) * (1.0 - tx) + at(ix + 1, iy) * tx;
        let bottom = at(ix, iy + 1) * (1.0 - tx) + at(ix + 1, iy + 1) * tx;
        top * (1.0 - ty) + bottom * ty
    }
}

/// Seeded procedural terrain. Classes are assigned by quantiles of a
/// two-octave value-noise field, so realized fractions match the mixture up
/// to rounding.
pub fn generate_terrain(seed: u64, params: &TerrainParams) -> Result<Terrain, SimError> {
    let [ex, ey] = params.extent_m;
    if !(ex > 0.0 && ey > 0.0 && ex.is_finite() && ey.is_finite()) {
        return Err(SimError::InvalidParams("extent must be positive"));
    }
    if !(params.resolution_m > 0.0) || params.resolution_m > ex.min(ey) {
        return Err(SimError::InvalidParams("resolution must be positive and below the extent"));
    }
    if !(params.feature_scale_m > 0.0) {
        return Err(SimError::InvalidParams("feature scale must be positive"));
    }
    if params.mixture.is_empty() || params.mixture.iter().any(|m| !(m.fraction >= 0.0)) {
        return Err(SimError::InvalidParams("mixture needs non-negative fractions"));
    }
    let total: f64 = params.mixture.iter().map(|m| m.fraction).sum();
    if !(total > 0.0) {
        return Err(SimError::InvalidParams("mixture fractions sum to zero"));
    }

    let width = (ex / params.resolution_m).round() as usize;
    let height = (ey / params.resolution_m).round() as usize;
    let origin = GroundPoint::new(-ex / 2.0, -ey / 2.0);
    let n = width * height;

    if params.mixture.len() == 1 {
        return Ok(Terrain {
            width,
            height,
            resolution: params.resolution_m,
            origin,
            classes: vec![params.mixture[0].class; n],
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coarse = ValueNoise::new(&mut rng, params.extent_m, params.feature_scale_m);
    let fine = ValueNoise::new(&mut rng, params.extent_m, params.feature_scale_m / 2.0);
    let mut field = Vec::with_capacity(n);
    for y in 0..height {
        for x in 0..width {
            let (px, py) = (
                (x as f64 + 0.5) * params.resolution_m,
                (y as f64 + 0.5) * params.resolution_m,
            );
            field.push(coarse.sample(px, py) + 0.35 * fine.sample(px, py));
        }
    }

    let mut sorted = field.clone();
    sorted.sort_unstable_by(f64::total_cmp);
    let mut thresholds = Vec::with_capacity(params.mixture.len());
    let mut acc = 0.0;
    for m in &params.mixture {
        acc += m.fraction / total;
        let k = ((acc * n as f64).round() as usize).min(n);
        thresholds.push(if k >= n { f64::INFINITY } else { sorted[k] });
    }
    let classes = field
        .iter()
        .map(|v| {
            let k = thresholds.iter().position(|t| v < t).unwrap_or(thresholds.len() - 1);
            params.mixture[k].class
        })
        .collect();
    Ok(Terrain {
        width,
        height,
        resolution: params.resolution_m,
        origin,
        classes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Person,
    Vehicle,
}

impl AgentKind {
    pub fn class(self) -> ClassId {
        match self {
            AgentKind::Person => ClassId::Person,
            AgentKind::Vehicle => ClassId::Vehicle,
        }
    }
}

/// Default pedestrian speed, m/s.
pub const WALKING_SPEED: f64 = 1.4;
/// Default person footprint radius, m.
pub const PERSON_RADIUS: f64 = 0.4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum AgentScript {
    Static,
    /// Walks the points in order at `speed`; optionally loops back to the first.
    Waypoints {
        points: Vec<GroundPoint>,
        speed: f64,
        #[serde(default)]
        looping: bool,
    },
    /// Seeded random walk inside an axis-aligned region.
    RandomWalk {
        min: GroundPoint,
        max: GroundPoint,
        speed: f64,
        seed: u64,
        /// Seconds between heading changes.
        #[serde(default = "default_turn_interval")]
        turn_interval: f64,
    },
    /// Deliberate intervention: once the vehicle has a landing target and is
    /// at or below `trigger_altitude`, appear `start_distance` meters from the
    /// target along `bearing`, walk to `offset` meters from its center, stay
    /// `dwell` seconds, then walk back out to `exit_distance` and stop.
    /// If the vehicle abandons that target before the walk out is complete,
    /// the person leaves the scene.
    Incursion {
        trigger_altitude: f64,
        bearing: f64,
        start_distance: f64,
        #[serde(default)]
        offset: f64,
        speed: f64,
        dwell: f64,
        exit_distance: f64,
    },
}

fn default_turn_interval() -> f64 {
    3.0
}

#[derive(Debug, Clone, PartialEq)]
enum AgentPhase {
    Idle,
    Waypoint(usize),
    Walk { heading: f64, next_turn: f64 },
    Waiting,
    Approaching { goal: GroundPoint, exit: GroundPoint },
    Dwelling { until: f64, exit: GroundPoint },
    Leaving { goal: GroundPoint },
    Done,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleAgent {
    pub kind: AgentKind,
    pub position: GroundPoint,
    pub radius: f64,
    pub script: AgentScript,
    /// Inactive agents are not part of the scene.
    pub active: bool,
    phase: AgentPhase,
    rng: Option<ChaCha8Rng>,
    /// Landing target an incursion was aimed at.
    aim: Option<GroundPoint>,
}

impl ObstacleAgent {
    pub fn new(kind: AgentKind, position: GroundPoint, radius: f64, script: AgentScript) -> Self {
        let (phase, active, rng) = match &script {
            AgentScript::Static => (AgentPhase::Idle, true, None),
            AgentScript::Waypoints { .. } => (AgentPhase::Waypoint(0), true, None),
            AgentScript::RandomWalk { seed, .. } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let heading = rng.random::<f64>() * std::f64::consts::TAU;
                (AgentPhase::Walk { heading, next_turn: 0.0 }, true, Some(rng))
            }
            AgentScript::Incursion { .. } => (AgentPhase::Waiting, false, None),
        };
        Self {
            kind,
            position,
            radius,
            script,
            active,
            phase,
            rng,
            aim: None,
        }
    }

    pub fn person(position: GroundPoint, script: AgentScript) -> Self {
        Self::new(AgentKind::Person, position, PERSON_RADIUS, script)
    }

    /// Moves toward `goal` by at most `step` meters; true once there.
    fn walk_toward(&mut self, goal: &GroundPoint, step: f64) -> bool {
        let d = self.position.distance(goal);
        if d <= step {
            self.position = *goal;
            true
        } else {
            let k = step / d;
            self.position.x += (goal.x - self.position.x) * k;
            self.position.y += (goal.y - self.position.y) * k;
            false
        }
    }

    fn advance(&mut self, clock: f64, dt: f64, uav_agl: f64, target: Option<&GroundPoint>) {
        if let Some(aim) = self.aim {
            let underway = matches!(
                self.phase,
                AgentPhase::Approaching { .. } | AgentPhase::Dwelling { .. } | AgentPhase::Leaving { .. }
            );
            if underway && target.is_none_or(|t| t.distance(&aim) > 1e-9) {
                self.active = false;
                self.phase = AgentPhase::Done;
                return;
            }
        }
        let script = self.script.clone();
        match (&script, self.phase.clone()) {
            (AgentScript::Waypoints { points, speed, looping }, AgentPhase::Waypoint(mut k)) => {
                let mut budget = speed * dt;
                while k < points.len() && budget > 0.0 {
                    let d = self.position.distance(&points[k]);
                    if self.walk_toward(&points[k], budget) {
                        budget -= d;
                        k += 1;
                        if k == points.len() && *looping {
                            k = 0;
                        }
                    } else {
                        budget = 0.0;
                    }
                }
                self.phase = AgentPhase::Waypoint(k);
            }
            (
                AgentScript::RandomWalk {
                    min,
                    max,
                    speed,
                    turn_interval,
                    ..
                },
                AgentPhase::Walk { mut heading, mut next_turn },
            ) => {
                let rng = self.rng.as_mut().expect("random walk agents own a generator");
                if clock >= next_turn {
                    heading = rng.random::<f64>() * std::f64::consts::TAU;
                    next_turn = clock + turn_interval;
                }
                let step = speed * dt;
                let mut x = self.position.x + heading.cos() * step;
                let mut y = self.position.y + heading.sin() * step;
                if x < min.x || x > max.x {
                    heading = std::f64::consts::PI - heading;
                    x = x.clamp(min.x, max.x);
                }
                if y < min.y || y > max.y {
                    heading = -heading;
                    y = y.clamp(min.y, max.y);
                }
                self.position = GroundPoint::new(x, y);
                self.phase = AgentPhase::Walk { heading, next_turn };
            }
            (
                AgentScript::Incursion {
                    trigger_altitude,
                    bearing,
                    start_distance,
                    offset,
                    exit_distance,
                    ..
                },
                AgentPhase::Waiting,
            ) => {
                if let Some(t) = target {
                    if uav_agl <= *trigger_altitude {
                        let (s, c) = bearing.sin_cos();
                        let at = |r: f64| GroundPoint::new(t.x + c * r, t.y + s * r);
                        self.position = at(*start_distance);
                        self.active = true;
                        self.aim = Some(*t);
                        self.phase = AgentPhase::Approaching {
                            goal: at(*offset),
                            exit: at(*exit_distance),
                        };
                    }
                }
            }
            (AgentScript::Incursion { speed, dwell, .. }, AgentPhase::Approaching { goal, exit }) => {
                if self.walk_toward(&goal, speed * dt) {
                    self.phase = AgentPhase::Dwelling {
                        until: clock + dwell,
                        exit,
                    };
                }
            }
            (AgentScript::Incursion { .. }, AgentPhase::Dwelling { until, exit }) => {
                if clock >= until {
                    self.phase = AgentPhase::Leaving { goal: exit };
                }
            }
            (AgentScript::Incursion { speed, .. }, AgentPhase::Leaving { goal }) => {
                if self.walk_toward(&goal, speed * dt) {
                    self.phase = AgentPhase::Done;
                }
            }
            _ => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub terrain: Terrain,
    pub agents: Vec<ObstacleAgent>,
    /// Simulated seconds.
    pub clock: f64,
    pub tick_rate: f64,
}

impl World {
    pub fn new(terrain: Terrain, agents: Vec<ObstacleAgent>, tick_rate: f64) -> Self {
        Self {
            terrain,
            agents,
            clock: 0.0,
            tick_rate,
        }
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.tick_rate
    }
}

pub fn generate_world(seed: u64, params: &TerrainParams, tick_rate: f64) -> Result<World, SimError> {
    if !(1.0..=10.0).contains(&tick_rate) {
        return Err(SimError::InvalidParams("tick rate must be within 1-10 Hz"));
    }
    Ok(World::new(generate_terrain(seed, params)?, Vec::new(), tick_rate))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UavState {
    pub x: f64,
    pub y: f64,
    /// Height above the (flat) ground.
    pub z: f64,
    pub heading: f64,
    pub max_horizontal_speed: f64,
    pub max_vertical_speed: f64,
}

impl UavState {
    pub fn ground_position(&self) -> GroundPoint {
        GroundPoint::new(self.x, self.y)
    }

    /// World-to-camera pose of the nadir camera.
    pub fn camera_pose(&self) -> RigidPose {
        RigidPose::nadir(self.x, self.y, self.z, self.heading)
    }
}

/// Advances agents and integrates the vehicle toward `command` for `dt`
/// seconds. `target` is the controller's current landing target, which
/// incursion scripts aim at.
pub fn step(
    world: &mut World,
    uav: &mut UavState,
    command: &FlightCommand,
    dt: f64,
    target: Option<&GroundPoint>,
) {
    assert!(dt > 0.0, "time step must be positive");
    let clock = world.clock + dt;
    for agent in world.agents.iter_mut() {
        agent.advance(clock, dt, uav.z, target);
    }

    let h_step = uav.max_horizontal_speed * dt;
    let v_step = uav.max_vertical_speed * dt;
    match *command {
        FlightCommand::HoldPosition | FlightCommand::Pause => {}
        FlightCommand::ForwardSearch { heading } => {
            uav.x += heading.cos() * h_step;
            uav.y += heading.sin() * h_step;
        }
        FlightCommand::GotoWaypoint { target, altitude } => {
            let (dx, dy) = (target.x - uav.x, target.y - uav.y);
            let d = dx.hypot(dy);
            if d <= h_step {
                uav.x = target.x;
                uav.y = target.y;
            } else {
                uav.x += dx / d * h_step;
                uav.y += dy / d * h_step;
            }
            let dz = altitude - uav.z;
            uav.z += dz.clamp(-v_step, v_step);
        }
        FlightCommand::Descend { rate } => {
            uav.z = (uav.z - rate.min(uav.max_vertical_speed) * dt).max(0.0);
        }
        FlightCommand::Climb { altitude } => {
            uav.z += (altitude - uav.z).clamp(-v_step, v_step);
        }
        FlightCommand::CommitLand => {
            uav.z = (uav.z - v_step).max(0.0);
        }
    }
    world.clock = clock;
}

/// Ground-truth class image seen by the nadir camera. Obstacle agents are
/// drawn over the terrain as discs of their class.
pub fn render_view(world: &World, uav: &UavState, cam: &CameraModel) -> Result<ClassImage, GeometryError> {
    if !(uav.z > MIN_POSE_HEIGHT) {
        return Err(GeometryError::PoseTooLow(uav.z));
    }
    let pose = uav.camera_pose();
    let rt = pose.rotation.transpose();
    let center = pose.camera_center();
    let active: Vec<&ObstacleAgent> = world.agents.iter().filter(|a| a.active).collect();
    let mut image = ClassImage::filled(cam.width, cam.height, ClassId::Background);
    for v in 0..cam.height {
        for u in 0..cam.width {
            let ray = rt
                * Vector3::new(
                    (u as f64 + 0.5 - cam.cx) / cam.fx,
                    (v as f64 + 0.5 - cam.cy) / cam.fy,
                    1.0,
                );
            if ray.z >= 0.0 {
                continue;
            }
            let s = -center.z / ray.z;
            let g = GroundPoint::new(center.x + s * ray.x, center.y + s * ray.y);
            let mut class = world.terrain.class_at(&g);
            for a in &active {
                if a.position.distance(&g) <= a.radius {
                    class = a.kind.class();
                }
            }
            image.set(u, v, class);
        }
    }
    Ok(image)
}

/// Ground-truth check: does any active agent's footprint intersect the disc?
/// For metrics only.
pub fn obstacle_in_radius(world: &World, center: &GroundPoint, radius: f64) -> bool {
    world
        .agents
        .iter()
        .any(|a| a.active && a.position.distance(center) < radius + a.radius)
}

/// Like [`obstacle_in_radius`], restricted to persons.
pub fn person_in_radius(world: &World, center: &GroundPoint, radius: f64) -> bool {
    world.agents.iter().any(|a| {
        a.active && a.kind == AgentKind::Person && a.position.distance(center) < radius + a.radius
    })
}
