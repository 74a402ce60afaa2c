//! Pick-and-place scenario: scene geometry, simplified grasp and drop
//! physics, the trial phase machine and its metrics.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;
use crate::interpreter::{Command, GrowthCommand};
use crate::robot::{arc_point, tip_pose, RobotConfig, RobotState, TipPose};

pub const BLOCK_EDGE: f64 = 0.034;
/// Half-width of every square support surface (m).
pub const SUPPORT_HALF: f64 = 0.06;
pub const GRASP_HORIZONTAL_TOL: f64 = 0.015;
pub const GRASP_VERTICAL_TOL: f64 = 0.02;
pub const GRASP_YAW_TOL: f64 = 15.0 * std::f64::consts::PI / 180.0;
pub const GRIPPER_RADIUS: f64 = 0.03;
/// Length of the gripper hanging below the soft body; body collision
/// spheres stop this far short of the tip.
pub const GRIPPER_LENGTH: f64 = 0.06;
pub const BODY_SAMPLES: usize = 32;
/// Tip-to-goal distance counted as fine positioning (m).
pub const FINE_RADIUS: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TaskError {
    #[error("trial still in phase {0:?}")]
    IncompleteTrial(Phase),
    #[error("unknown target {0:?}")]
    UnknownTarget(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TargetId {
    T1,
    T2,
    T3,
}

impl TargetId {
    pub const ALL: [TargetId; 3] = [TargetId::T1, TargetId::T2, TargetId::T3];

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for TargetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for TargetId {
    type Err = TaskError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "T1" | "t1" => Ok(TargetId::T1),
            "T2" | "t2" => Ok(TargetId::T2),
            "T3" | "t3" => Ok(TargetId::T3),
            other => Err(TaskError::UnknownTarget(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceId {
    Start,
    Target(TargetId),
    Table,
}

impl fmt::Display for SurfaceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SurfaceId::Start => f.write_str("start"),
            SurfaceId::Target(t) => write!(f, "{t}"),
            SurfaceId::Table => f.write_str("table"),
        }
    }
}

/// A square pillar top. The pillar occupies the footprint from the table up to `top.y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pillar {
    pub id: SurfaceId,
    pub top: Vec3,
}

impl Pillar {
    pub fn contains_xz(&self, p: &Vec3) -> bool {
        (p.x - self.top.x).abs() <= SUPPORT_HALF && (p.z - self.top.z).abs() <= SUPPORT_HALF
    }

    /// Whether a sphere overlaps the pillar box.
    pub fn touches_sphere(&self, center: &Vec3, radius: f64) -> bool {
        let lo = Vec3::new(self.top.x - SUPPORT_HALF, 0.0, self.top.z - SUPPORT_HALF);
        let hi = Vec3::new(self.top.x + SUPPORT_HALF, self.top.y, self.top.z + SUPPORT_HALF);
        sphere_box_overlap(center, radius, &lo, &hi)
    }
}

fn sphere_box_overlap(center: &Vec3, radius: f64, lo: &Vec3, hi: &Vec3) -> bool {
    let nearest = Vec3::new(
        center.x.clamp(lo.x, hi.x),
        center.y.clamp(lo.y, hi.y),
        center.z.clamp(lo.z, hi.z),
    );
    (center - nearest).norm_squared() < radius * radius
}

/// The scene: a table at y = 0, the block's start pillar under the robot
/// base and three target pillars.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub base: Vec3,
    pub start: Pillar,
    pub targets: [Pillar; 3],
    pub block_edge: f64,
    pub active: TargetId,
}

pub fn make_scenario(active: TargetId) -> Scenario {
    Scenario {
        base: Vec3::new(0.0, 1.0, 0.0),
        start: Pillar {
            id: SurfaceId::Start,
            top: Vec3::new(0.0, 0.30, 0.0),
        },
        targets: [
            Pillar {
                id: SurfaceId::Target(TargetId::T1),
                top: Vec3::new(-0.25, 0.20, 0.0),
            },
            Pillar {
                id: SurfaceId::Target(TargetId::T2),
                top: Vec3::new(0.25, 0.17, 0.0),
            },
            Pillar {
                id: SurfaceId::Target(TargetId::T3),
                top: Vec3::new(0.0, 0.09, 0.25),
            },
        ],
        block_edge: BLOCK_EDGE,
        active,
    }
}

impl Scenario {
    pub fn pillars(&self) -> impl Iterator<Item = &Pillar> {
        std::iter::once(&self.start).chain(self.targets.iter())
    }

    pub fn target(&self, id: TargetId) -> &Pillar {
        &self.targets[id.index()]
    }

    pub fn active_target(&self) -> &Pillar {
        self.target(self.active)
    }

    pub fn half_edge(&self) -> f64 {
        0.5 * self.block_edge
    }

    /// Block-centre position when resting centred on `pillar`.
    pub fn rest_center(&self, pillar: &Pillar) -> Vec3 {
        pillar.top + Vec3::new(0.0, self.half_edge(), 0.0)
    }

    pub fn initial_block(&self) -> BlockState {
        BlockState {
            center: self.rest_center(&self.start),
            yaw: 0.0,
            status: BlockStatus::Resting(SurfaceId::Start),
        }
    }

    fn surface_height(&self, id: SurfaceId) -> f64 {
        match id {
            SurfaceId::Table => 0.0,
            SurfaceId::Start => self.start.top.y,
            SurfaceId::Target(t) => self.target(t).top.y,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "surface")]
pub enum BlockStatus {
    Resting(SurfaceId),
    Held,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockState {
    pub center: Vec3,
    pub yaw: f64,
    pub status: BlockStatus,
}

/// Folds an angle into `(-π/4, π/4]`; a square block looks the same every quarter turn.
pub fn wrap90(a: f64) -> f64 {
    let r = a.rem_euclid(FRAC_PI_2);
    if r > FRAC_PI_4 {
        r - FRAC_PI_2
    } else {
        r
    }
}

/// Whether closing the gripper at `tip` would capture `block`.
pub fn grasp_attempt(tip: &TipPose, block: &BlockState) -> bool {
    if !matches!(block.status, BlockStatus::Resting(_)) {
        return false;
    }
    let d = tip.position - block.center;
    d.x.hypot(d.z) <= GRASP_HORIZONTAL_TOL
        && d.y.abs() <= GRASP_VERTICAL_TOL
        && wrap90(tip.gripper_yaw - block.yaw).abs() <= GRASP_YAW_TOL
}

/// Optional lateral scatter on release: the landing point moves by up to
/// `coefficient × drop height` in a uniformly random direction.
#[derive(Debug, Clone)]
pub struct DropScatter {
    pub coefficient: f64,
    rng: ChaCha8Rng,
}

impl DropScatter {
    pub fn new(coefficient: f64, seed: u64) -> Self {
        Self {
            coefficient,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn offset(&mut self, height: f64) -> Vec3 {
        let radius = self.coefficient * height.max(0.0) * self.rng.gen::<f64>().sqrt();
        let angle = self.rng.gen_range(0.0..std::f64::consts::TAU);
        Vec3::new(radius * angle.cos(), 0.0, radius * angle.sin())
    }
}

/// Drops a held block straight down onto the highest surface beneath its
/// centre. Blocks that are already resting are returned unchanged.
pub fn release_resolve(block: &BlockState, scenario: &Scenario, scatter: Option<&mut DropScatter>) -> BlockState {
    if block.status != BlockStatus::Held {
        return *block;
    }
    let half = scenario.half_edge();
    let bottom = block.center.y - half;
    let mut center = block.center;
    let landing = |c: &Vec3| {
        scenario
            .pillars()
            .filter(|p| p.contains_xz(c) && p.top.y <= bottom + 1e-9)
            .max_by(|a, b| a.top.y.total_cmp(&b.top.y))
            .map_or(SurfaceId::Table, |p| p.id)
    };
    let mut surface = landing(&center);
    if let Some(s) = scatter {
        let drop = bottom - scenario.surface_height(surface);
        center += s.offset(drop);
        surface = landing(&center);
    }
    center.y = scenario.surface_height(surface) + half;
    BlockState {
        center,
        yaw: block.yaw,
        status: BlockStatus::Resting(surface),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Contact {
    Pillar(SurfaceId),
    Block,
}

/// Collision spheres of the body and gripper against the pillars and the
/// resting block. The gripper is allowed to touch the block it grasps.
pub fn check_collisions(
    state: &RobotState,
    config: &RobotConfig,
    scenario: &Scenario,
    block: &BlockState,
) -> Vec<Contact> {
    let base = config.base();
    let tip = tip_pose(state, config).position;
    let body_len = (state.length - GRIPPER_LENGTH).max(0.0);
    let body = (0..BODY_SAMPLES).map(|i| {
        let s = body_len * i as f64 / (BODY_SAMPLES - 1) as f64;
        arc_point(&base, state.length, state.bend, state.azimuth, s)
    });
    let block_box = matches!(block.status, BlockStatus::Resting(_)).then(|| {
        let h = Vec3::repeat(scenario.half_edge());
        (block.center - h, block.center + h)
    });

    let mut contacts = Vec::new();
    let mut note = |c: Contact| {
        if !contacts.contains(&c) {
            contacts.push(c);
        }
    };
    for center in body {
        for p in scenario.pillars() {
            if p.touches_sphere(&center, config.body_radius) {
                note(Contact::Pillar(p.id));
            }
        }
        if let Some((lo, hi)) = &block_box {
            if sphere_box_overlap(&center, config.body_radius, lo, hi) {
                note(Contact::Block);
            }
        }
    }
    for p in scenario.pillars() {
        if p.touches_sphere(&tip, GRIPPER_RADIUS) {
            note(Contact::Pillar(p.id));
        }
    }
    contacts
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Grasping,
    Placing,
    Done,
    Failed,
}

impl Phase {
    pub fn is_terminal(self) -> bool {
        matches!(self, Phase::Done | Phase::Failed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    FellToTable,
    MissedTarget,
    HitPillar,
    HitBlock,
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FailureReason::FellToTable => "fell to table",
            FailureReason::MissedTarget => "landed off target",
            FailureReason::HitPillar => "hit pillar",
            FailureReason::HitBlock => "hit block",
        })
    }
}

impl FromStr for FailureReason {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fell to table" => Ok(FailureReason::FellToTable),
            "landed off target" => Ok(FailureReason::MissedTarget),
            "hit pillar" => Ok(FailureReason::HitPillar),
            "hit block" => Ok(FailureReason::HitBlock),
            other => Err(format!("unknown failure reason {other:?}")),
        }
    }
}

/// Something that happened in the world during one tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TaskEvent {
    GraspMissed,
    Grasped,
    Released { surface: SurfaceId },
    Contact { contact: Contact },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoggedEvent {
    pub t: f64,
    pub event: TaskEvent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialState {
    pub target: TargetId,
    pub phase: Phase,
    pub clock: f64,
    pub grasp_time: f64,
    pub place_time: f64,
    pub eversion_time: f64,
    pub fine_grasp: f64,
    pub fine_place: f64,
    pub failure: Option<FailureReason>,
    pub log: Vec<LoggedEvent>,
}

impl TrialState {
    pub fn new(target: TargetId) -> Self {
        Self {
            target,
            phase: Phase::Grasping,
            clock: 0.0,
            grasp_time: 0.0,
            place_time: 0.0,
            eversion_time: 0.0,
            fine_grasp: 0.0,
            fine_place: 0.0,
            failure: None,
            log: Vec::new(),
        }
    }

    fn fail(&mut self, reason: FailureReason) {
        self.phase = Phase::Failed;
        self.failure = Some(reason);
    }

    /// Advances timers by `dt` and applies this tick's events.
    /// `goal_distance` is the tip's distance to the current phase goal.
    pub fn update(&mut self, dt: f64, events: &[TaskEvent], cmd: &Command, goal_distance: f64) {
        if self.phase.is_terminal() {
            return;
        }
        self.clock += dt;
        if cmd.growth != GrowthCommand::Hold {
            self.eversion_time += dt;
        }
        let fine = goal_distance <= FINE_RADIUS;
        match self.phase {
            Phase::Grasping => {
                self.grasp_time += dt;
                if fine {
                    self.fine_grasp += dt;
                }
            }
            Phase::Placing => {
                self.place_time += dt;
                if fine {
                    self.fine_place += dt;
                }
            }
            Phase::Done | Phase::Failed => unreachable!(),
        }
        for &event in events {
            self.log.push(LoggedEvent { t: self.clock, event });
            if self.phase.is_terminal() {
                continue;
            }
            match event {
                TaskEvent::Grasped if self.phase == Phase::Grasping => self.phase = Phase::Placing,
                TaskEvent::Released { surface } if self.phase == Phase::Placing => match surface {
                    SurfaceId::Target(t) if t == self.target => self.phase = Phase::Done,
                    SurfaceId::Table => self.fail(FailureReason::FellToTable),
                    _ => self.fail(FailureReason::MissedTarget),
                },
                TaskEvent::Contact { contact } => self.fail(match contact {
                    Contact::Pillar(_) => FailureReason::HitPillar,
                    Contact::Block => FailureReason::HitBlock,
                }),
                TaskEvent::Grasped | TaskEvent::GraspMissed | TaskEvent::Released { .. } => {}
            }
        }
    }
}

/// Per-trial metrics record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub target: TargetId,
    pub tpe_cm: Option<f64>,
    pub tct_total_s: f64,
    pub tct_grasp_s: f64,
    pub tct_place_s: f64,
    pub fine_grasp_s: f64,
    pub fine_place_s: f64,
    pub eversion_s: f64,
    pub steering_s: f64,
    pub failed: bool,
    pub failure_reason: Option<FailureReason>,
}

pub fn compute_result(trial: &TrialState, scenario: &Scenario, block: &BlockState) -> Result<TrialResult, TaskError> {
    if !trial.phase.is_terminal() {
        return Err(TaskError::IncompleteTrial(trial.phase));
    }
    let total = trial.grasp_time + trial.place_time;
    let tpe_cm = (trial.phase == Phase::Done).then(|| {
        let d = block.center - scenario.target(trial.target).top;
        100.0 * d.x.hypot(d.z)
    });
    Ok(TrialResult {
        target: trial.target,
        tpe_cm,
        tct_total_s: total,
        tct_grasp_s: trial.grasp_time,
        tct_place_s: trial.place_time,
        fine_grasp_s: trial.fine_grasp,
        fine_place_s: trial.fine_place,
        eversion_s: trial.eversion_time,
        steering_s: total - trial.eversion_time,
        failed: trial.phase == Phase::Failed,
        failure_reason: trial.failure,
    })
}

/// Scene state stepped alongside the robot: block physics, collisions and
/// the active trial.
#[derive(Debug, Clone)]
pub struct TaskWorld {
    pub scenario: Scenario,
    pub block: BlockState,
    pub trial: Option<TrialState>,
    grasp_offset: Vec3,
    scatter: Option<DropScatter>,
}

impl TaskWorld {
    pub fn new(scenario: Scenario) -> Self {
        let block = scenario.initial_block();
        Self {
            scenario,
            block,
            trial: None,
            grasp_offset: Vec3::zeros(),
            scatter: None,
        }
    }

    pub fn with_scatter(mut self, scatter: DropScatter) -> Self {
        self.scatter = Some(scatter);
        self
    }

    /// Puts the block back on the start pillar and starts a trial toward `target`.
    pub fn start_trial(&mut self, target: TargetId) {
        self.scenario.active = target;
        self.block = self.scenario.initial_block();
        self.grasp_offset = Vec3::zeros();
        self.trial = Some(TrialState::new(target));
    }

    pub fn reset(&mut self) {
        self.block = self.scenario.initial_block();
        self.grasp_offset = Vec3::zeros();
        self.trial = None;
    }

    pub fn trial_active(&self) -> bool {
        self.trial.as_ref().is_some_and(|t| !t.phase.is_terminal())
    }

    /// Position the tip is working toward in the current phase.
    pub fn goal(&self) -> Vec3 {
        match self.trial.as_ref().map(|t| t.phase) {
            Some(Phase::Placing) => self.scenario.rest_center(self.scenario.active_target()),
            _ => self.block.center,
        }
    }

    /// Offset from the tip to the centre of the held block.
    pub fn grasp_offset(&self) -> Vec3 {
        self.grasp_offset
    }

    /// Applies one simulation tick given the robot state before and after
    /// stepping. Returns the events raised.
    pub fn advance(
        &mut self,
        before: &RobotState,
        after: &RobotState,
        cmd: &Command,
        dt: f64,
        config: &RobotConfig,
    ) -> Vec<TaskEvent> {
        let tip = tip_pose(after, config);
        let mut events = Vec::new();
        if !before.gripper_closed && after.gripper_closed {
            if grasp_attempt(&tip, &self.block) {
                self.grasp_offset = self.block.center - tip.position;
                self.block.status = BlockStatus::Held;
                events.push(TaskEvent::Grasped);
            } else {
                events.push(TaskEvent::GraspMissed);
            }
        }
        if self.block.status == BlockStatus::Held {
            self.block.center = tip.position + self.grasp_offset;
            self.block.yaw = tip.gripper_yaw;
            if before.gripper_closed && !after.gripper_closed {
                self.block = release_resolve(&self.block, &self.scenario, self.scatter.as_mut());
                if let BlockStatus::Resting(surface) = self.block.status {
                    events.push(TaskEvent::Released { surface });
                }
            }
        }
        if self.trial_active() {
            events.extend(
                check_collisions(after, config, &self.scenario, &self.block)
                    .into_iter()
                    .map(|contact| TaskEvent::Contact { contact }),
            );
        }
        let goal_distance = (tip.position - self.goal()).norm();
        if let Some(trial) = self.trial.as_mut() {
            trial.update(dt, &events, cmd, goal_distance);
        }
        events
    }

    pub fn result(&self) -> Result<TrialResult, TaskError> {
        match &self.trial {
            Some(t) => compute_result(t, &self.scenario, &self.block),
            None => Err(TaskError::IncompleteTrial(Phase::Grasping)),
        }
    }
}
