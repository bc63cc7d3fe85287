//! Deterministic 3D environment: chamber and arena geometry, agent
//! kinematics with blocking collisions, imprinting objects, and the
//! software-rendered per-agent observations.

pub mod action;
pub mod mesh;
pub mod raster;

pub use action::{metabolic_cost, AgentAction, Rotation, Translation};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::Tensor;
use raster::{v3, Camera, Tri};

pub const AGENT_RADIUS: f64 = 1.2;
pub const AGENT_HEIGHT: f64 = 3.5;
pub const EYE_HEIGHT: f64 = 3.0;
pub const TRANSLATION_STEP: f64 = 0.5;
pub const ROTATION_STEP_DEG: f64 = 10.0;
/// Training-mode imprint objects redraw their action on this cadence.
pub const IMPRINT_ACTION_PERSIST: u32 = 10;
/// Test-mode imprint objects spin at this rate, degrees per tick.
pub const IMPRINT_TEST_SPIN_DEG: f64 = 3.0;
const OBJECT_RADIUS: f64 = 1.2;
const SPAWN_MAX_TRIES: usize = 10_000;

#[derive(Debug, thiserror::Error)]
pub enum EnvError {
    #[error("could not place agents without overlap after {tries} tries")]
    SpawnFailed { tries: usize },
    #[error("expected {expected} actions, got {got}")]
    WrongActionCount { expected: usize, got: usize },
    #[error("no agent with id {0}")]
    InvalidAgent(usize),
    #[error("unsupported resolution {0} (expected 64, 96, or 128)")]
    UnsupportedResolution(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorldKind {
    /// White cubic chamber, 60 units per side.
    Simple,
    /// White cubic chamber, 30 units per side.
    SimpleSmall,
    /// Circular fenced arena (diameter 21) on textured open terrain.
    RealisticArena,
}

impl WorldKind {
    /// Floor area used by the spatial statistics.
    pub fn floor_area(&self) -> f64 {
        match self {
            WorldKind::Simple => 60.0 * 60.0,
            WorldKind::SimpleSmall => 30.0 * 30.0,
            WorldKind::RealisticArena => std::f64::consts::PI * 10.5 * 10.5,
        }
    }

    /// True when a body of radius `margin` centered at `p` fits in the
    /// navigable region.
    pub fn contains(&self, p: [f64; 2], margin: f64) -> bool {
        match self {
            WorldKind::Simple => p[0].abs() <= 30.0 - margin && p[1].abs() <= 30.0 - margin,
            WorldKind::SimpleSmall => p[0].abs() <= 15.0 - margin && p[1].abs() <= 15.0 - margin,
            WorldKind::RealisticArena => (p[0] * p[0] + p[1] * p[1]).sqrt() <= 10.5 - margin,
        }
    }

    fn sample_position<R: Rng>(&self, margin: f64, rng: &mut R) -> [f64; 2] {
        match self {
            WorldKind::Simple | WorldKind::SimpleSmall => {
                let half = if matches!(self, WorldKind::Simple) { 30.0 } else { 15.0 };
                let lo = -(half - margin);
                let span = 2.0 * (half - margin);
                [lo + span * rng.random::<f64>(), lo + span * rng.random::<f64>()]
            }
            WorldKind::RealisticArena => {
                let r = (10.5 - margin) * rng.random::<f64>().sqrt();
                let a = std::f64::consts::TAU * rng.random::<f64>();
                [r * a.cos(), r * a.sin()]
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LightingSpec {
    pub angle_offset_deg: f64,
    pub intensity: f64,
}

impl Default for LightingSpec {
    fn default() -> Self {
        Self { angle_offset_deg: 0.0, intensity: 1.0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WorldSpec {
    pub kind: WorldKind,
    #[serde(default)]
    pub lighting: LightingSpec,
    /// Seeds the fixed scenery (ground texture, distractor placement).
    pub world_seed: u64,
}

#[derive(Clone, Copy, Debug)]
pub struct AgentBody {
    pub position: [f64; 2],
    pub heading: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImprintShape {
    Cube,
    Sphere,
    Cone,
    Torus,
}

impl ImprintShape {
    pub const ALL: [ImprintShape; 4] = [ImprintShape::Cube, ImprintShape::Sphere, ImprintShape::Cone, ImprintShape::Torus];

    pub fn as_str(&self) -> &'static str {
        match self {
            ImprintShape::Cube => "cube",
            ImprintShape::Sphere => "sphere",
            ImprintShape::Cone => "cone",
            ImprintShape::Torus => "torus",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImprintColor {
    Red,
    Green,
    Blue,
    Yellow,
}

impl ImprintColor {
    pub const ALL: [ImprintColor; 4] = [ImprintColor::Red, ImprintColor::Green, ImprintColor::Blue, ImprintColor::Yellow];

    pub fn as_str(&self) -> &'static str {
        match self {
            ImprintColor::Red => "red",
            ImprintColor::Green => "green",
            ImprintColor::Blue => "blue",
            ImprintColor::Yellow => "yellow",
        }
    }

    fn albedo(&self) -> [f32; 3] {
        match self {
            ImprintColor::Red => [0.85, 0.15, 0.12],
            ImprintColor::Green => [0.10, 0.65, 0.15],
            ImprintColor::Blue => [0.15, 0.25, 0.85],
            ImprintColor::Yellow => [0.90, 0.82, 0.10],
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub enum ImprintMode {
    /// Wanders the chamber: a uniformly drawn action held for a fixed
    /// number of ticks, moved with agent kinematics and wall blocking.
    RandomWalk { action: AgentAction, ticks_remaining: u32 },
    /// Fixed in place, rotating around the vertical axis.
    Spin { rate_deg: f64 },
}

#[derive(Clone, Copy, Debug)]
pub struct ImprintObject {
    pub shape: ImprintShape,
    pub color: ImprintColor,
    pub position: [f64; 2],
    pub heading: f64,
    pub mode: ImprintMode,
}

impl ImprintObject {
    pub fn random_walk(shape: ImprintShape, color: ImprintColor, position: [f64; 2]) -> Self {
        Self {
            shape,
            color,
            position,
            heading: 0.0,
            mode: ImprintMode::RandomWalk { action: AgentAction::STILL, ticks_remaining: 0 },
        }
    }

    pub fn spinning(shape: ImprintShape, color: ImprintColor, position: [f64; 2]) -> Self {
        Self { shape, color, position, heading: 0.0, mode: ImprintMode::Spin { rate_deg: IMPRINT_TEST_SPIN_DEG } }
    }
}

/// Advance one imprint object by one tick.
///
/// In random-walk mode a fresh action is drawn every
/// [`IMPRINT_ACTION_PERSIST`] ticks and applied with the same kinematics
/// and wall blocking as agents. In spin mode the object only rotates.
pub fn imprint_controller_step<R: Rng>(object: &mut ImprintObject, kind: &WorldKind, rng: &mut R) {
    match object.mode {
        ImprintMode::RandomWalk { mut action, mut ticks_remaining } => {
            if ticks_remaining == 0 {
                let t = rng.random_range(0..3);
                let r = rng.random_range(0..3);
                action = AgentAction::from_indices(t, r).unwrap();
                ticks_remaining = IMPRINT_ACTION_PERSIST;
            }
            object.heading = apply_rotation(object.heading, action.rotation);
            let proposal = apply_translation(object.position, object.heading, action.translation);
            if kind.contains(proposal, OBJECT_RADIUS) {
                object.position = proposal;
            }
            ticks_remaining -= 1;
            object.mode = ImprintMode::RandomWalk { action, ticks_remaining };
        }
        ImprintMode::Spin { rate_deg } => {
            object.heading = wrap_angle(object.heading + rate_deg.to_radians());
        }
    }
}

fn wrap_angle(a: f64) -> f64 {
    a.rem_euclid(std::f64::consts::TAU)
}

fn apply_rotation(heading: f64, rotation: Rotation) -> f64 {
    let step = ROTATION_STEP_DEG.to_radians();
    match rotation {
        Rotation::Clockwise => wrap_angle(heading - step),
        Rotation::Counterclockwise => wrap_angle(heading + step),
        Rotation::Still => heading,
    }
}

fn apply_translation(position: [f64; 2], heading: f64, translation: Translation) -> [f64; 2] {
    let dir = [heading.cos(), heading.sin()];
    match translation {
        Translation::Forward => [position[0] + TRANSLATION_STEP * dir[0], position[1] + TRANSLATION_STEP * dir[1]],
        Translation::Backward => [position[0] - TRANSLATION_STEP * dir[0], position[1] - TRANSLATION_STEP * dir[1]],
        Translation::Still => position,
    }
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

/// One RGB frame as seen by an agent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObservationImage {
    pub resolution: usize,
    /// Interleaved RGB, row-major, length `3 * resolution^2`.
    pub pixels: Vec<u8>,
}

impl ObservationImage {
    /// Planar `[3, res, res]` tensor scaled to [0, 1].
    pub fn to_tensor(&self) -> Tensor {
        let res = self.resolution;
        let mut data = vec![0.0f32; 3 * res * res];
        let plane = res * res;
        for (i, px) in self.pixels.chunks_exact(3).enumerate() {
            data[i] = px[0] as f32 / 255.0;
            data[plane + i] = px[1] as f32 / 255.0;
            data[2 * plane + i] = px[2] as f32 / 255.0;
        }
        Tensor::new(vec![3, res, res], data)
    }

    /// Write the frame as a binary PPM file (debugging aid).
    pub fn write_ppm(&self, path: &std::path::Path) -> std::io::Result<()> {
        use std::io::Write;
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        write!(f, "P6\n{} {}\n255\n", self.resolution, self.resolution)?;
        f.write_all(&self.pixels)
    }
}

pub struct StepResult {
    pub observations: Vec<ObservationImage>,
    pub metabolic: Vec<f64>,
}

/// Full simulation state: geometry, lighting, agent and object poses.
/// Advancing it is deterministic given the actions and the caller's RNG.
pub struct WorldState {
    pub spec: WorldSpec,
    pub agents: Vec<AgentBody>,
    pub objects: Vec<ImprintObject>,
    pub tick: u64,
    resolution: usize,
    static_tris: Vec<Tri>,
}

impl WorldState {
    pub fn new(spec: WorldSpec, n_agents: usize, resolution: usize) -> Result<Self, EnvError> {
        if !crate::networks::SUPPORTED_RESOLUTIONS.contains(&resolution) {
            return Err(EnvError::UnsupportedResolution(resolution));
        }
        let static_tris = build_static_scene(&spec);
        let agents = vec![AgentBody { position: [0.0, 0.0], heading: 0.0 }; n_agents];
        Ok(Self { spec, agents, objects: Vec::new(), tick: 0, resolution, static_tris })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn agent_count(&self) -> usize {
        self.agents.len()
    }

    /// Re-pose every agent uniformly at random over the navigable region
    /// with rejection sampling so no two bodies overlap. Training-mode
    /// imprint objects are re-seeded as well.
    pub fn spawn_random<R: Rng>(&mut self, rng: &mut R) -> Result<(), EnvError> {
        for i in 0..self.objects.len() {
            if matches!(self.objects[i].mode, ImprintMode::RandomWalk { .. }) {
                self.objects[i].position = self.spec.kind.sample_position(OBJECT_RADIUS, rng);
                self.objects[i].heading = std::f64::consts::TAU * rng.random::<f64>();
                self.objects[i].mode = ImprintMode::RandomWalk { action: AgentAction::STILL, ticks_remaining: 0 };
            }
        }
        let mut placed: Vec<[f64; 2]> = Vec::with_capacity(self.agents.len());
        for _ in 0..self.agents.len() {
            let mut ok = None;
            for _try in 0..SPAWN_MAX_TRIES {
                let p = self.spec.kind.sample_position(AGENT_RADIUS, rng);
                let clear_of_agents = placed.iter().all(|&q| dist2(p, q) >= (2.0 * AGENT_RADIUS).powi(2));
                let clear_of_objects = self
                    .objects
                    .iter()
                    .all(|o| dist2(p, o.position) >= (AGENT_RADIUS + OBJECT_RADIUS).powi(2));
                if clear_of_agents && clear_of_objects {
                    ok = Some(p);
                    break;
                }
            }
            match ok {
                Some(p) => placed.push(p),
                None => return Err(EnvError::SpawnFailed { tries: SPAWN_MAX_TRIES }),
            }
        }
        for (agent, p) in self.agents.iter_mut().zip(placed) {
            agent.position = p;
            agent.heading = std::f64::consts::TAU * rng.random::<f64>();
        }
        Ok(())
    }

    pub fn set_agent_pose(&mut self, agent_id: usize, position: [f64; 2], heading: f64) -> Result<(), EnvError> {
        let agent = self.agents.get_mut(agent_id).ok_or(EnvError::InvalidAgent(agent_id))?;
        agent.position = position;
        agent.heading = heading;
        Ok(())
    }

    pub fn set_lighting(&mut self, angle_offset_deg: f64, intensity: f64) {
        self.spec.lighting = LightingSpec { angle_offset_deg, intensity };
    }

    /// Advance one tick: rotations, then translations with blocking,
    /// then object controllers; finally render every agent's view from
    /// the post-move poses.
    pub fn step<R: Rng>(&mut self, actions: &[AgentAction], rng: &mut R) -> Result<StepResult, EnvError> {
        if actions.len() != self.agents.len() {
            return Err(EnvError::WrongActionCount { expected: self.agents.len(), got: actions.len() });
        }

        for (agent, action) in self.agents.iter_mut().zip(actions) {
            agent.heading = apply_rotation(agent.heading, action.rotation);
        }

        let proposals: Vec<[f64; 2]> = self
            .agents
            .iter()
            .zip(actions)
            .map(|(agent, action)| apply_translation(agent.position, agent.heading, action.translation))
            .collect();

        let min_sep2 = (2.0 * AGENT_RADIUS).powi(2);
        let blocked: Vec<bool> = (0..self.agents.len())
            .map(|i| {
                if proposals[i] == self.agents[i].position {
                    return false; // not moving
                }
                if !self.spec.kind.contains(proposals[i], AGENT_RADIUS) {
                    return true;
                }
                (0..self.agents.len()).any(|j| {
                    j != i
                        && (dist2(proposals[i], self.agents[j].position) < min_sep2
                            || dist2(proposals[i], proposals[j]) < min_sep2)
                })
            })
            .collect();
        for i in 0..self.agents.len() {
            if !blocked[i] {
                self.agents[i].position = proposals[i];
            }
        }

        for i in 0..self.objects.len() {
            let mut obj = self.objects[i];
            imprint_controller_step(&mut obj, &self.spec.kind, rng);
            self.objects[i] = obj;
        }

        self.tick += 1;

        let observations: Vec<ObservationImage> =
            (0..self.agents.len()).map(|i| self.render(i, self.resolution).expect("valid agent")).collect();
        let metabolic: Vec<f64> = actions.iter().map(|&a| metabolic_cost(a)).collect();
        Ok(StepResult { observations, metabolic })
    }

    /// Render the forward view of one agent. The observer's own body is
    /// not drawn. Read-only with respect to the world state.
    pub fn render(&self, agent_id: usize, resolution: usize) -> Result<ObservationImage, EnvError> {
        if !crate::networks::SUPPORTED_RESOLUTIONS.contains(&resolution) {
            return Err(EnvError::UnsupportedResolution(resolution));
        }
        let observer = self.agents.get(agent_id).ok_or(EnvError::InvalidAgent(agent_id))?;

        let mut dynamic: Vec<Tri> = Vec::new();
        for (i, agent) in self.agents.iter().enumerate() {
            if i == agent_id {
                continue;
            }
            mesh::agent_body(
                [agent.position[0] as f32, agent.position[1] as f32],
                agent.heading as f32,
                &mut dynamic,
            );
        }
        for obj in &self.objects {
            object_mesh(obj, &mut dynamic);
        }

        let camera = Camera {
            eye: v3(observer.position[0] as f32, observer.position[1] as f32, EYE_HEIGHT as f32),
            yaw: observer.heading as f32,
        };
        let pixels = raster::render_frame(&[&self.static_tris, &dynamic], &camera, &self.spec.lighting, resolution);
        Ok(ObservationImage { resolution, pixels })
    }
}

fn build_static_scene(spec: &WorldSpec) -> Vec<Tri> {
    match spec.kind {
        WorldKind::Simple => mesh::box_room(30.0, 60.0, mesh::ROOM_ALBEDO),
        WorldKind::SimpleSmall => mesh::box_room(15.0, 30.0, mesh::ROOM_ALBEDO),
        WorldKind::RealisticArena => {
            let mut tris = Vec::new();
            mesh::ground_patch(36.0, 24, spec.world_seed, &mut tris);
            mesh::fence_ring(10.5, 48, 2.2, 0.12, &mut tris);
            // fixed distractors outside the fence, seeded by the world
            let count = 8 + (spec.world_seed % 5) as usize; // 8..=12
            for k in 0..count {
                let u = fract_hash(spec.world_seed, k as u64, 0);
                let radius = 13.0 + 15.0 * fract_hash(spec.world_seed, k as u64, 1);
                let angle = std::f64::consts::TAU * u;
                let center = [(radius * angle.cos()) as f32, (radius * angle.sin()) as f32];
                if k % 2 == 0 {
                    mesh::rock(center, 1.0 + 1.2 * fract_hash(spec.world_seed, k as u64, 2) as f32, spec.world_seed ^ k as u64, &mut tris);
                } else {
                    mesh::tree(center, 4.0 + 3.0 * fract_hash(spec.world_seed, k as u64, 3) as f32, &mut tris);
                }
            }
            tris
        }
    }
}

fn fract_hash(seed: u64, a: u64, b: u64) -> f64 {
    let mut x = seed ^ a.wrapping_mul(0xD1B54A32D192ED03) ^ b.wrapping_mul(0x9E3779B97F4A7C15);
    x ^= x >> 33;
    x = x.wrapping_mul(0xFF51AFD7ED558CCD);
    x ^= x >> 33;
    (x >> 11) as f64 / (1u64 << 53) as f64
}

fn object_mesh(obj: &ImprintObject, out: &mut Vec<Tri>) {
    let albedo = obj.color.albedo();
    let center = v3(obj.position[0] as f32, obj.position[1] as f32, 1.8);
    let yaw = obj.heading as f32;
    match obj.shape {
        ImprintShape::Cube => mesh::cube(center, 1.0, yaw, albedo, out),
        ImprintShape::Sphere => mesh::uv_sphere(center, 1.2, 6, 10, albedo, out),
        ImprintShape::Cone => mesh::cone([center.x, center.y], center.z - 1.2, 1.1, 2.4, 10, albedo, out),
        ImprintShape::Torus => mesh::torus(center, 1.0, 0.45, 10, 6, yaw, albedo, out),
    }
}
