use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::avoidance::{
    classify_obstacle, decide, ControllerMode, Decision, DecisionInput, LaneContext, ModeTag,
    ObstacleEstimate, Reading, Thresholds,
};
use crate::nn::{Network, NnError};
use crate::sim::{
    expert_steering, render_camera, sense_zones, wrap_angle, zone_reading, CameraFrame, SimError,
    World, Zone, ZoneReadings,
};

#[derive(Debug, thiserror::Error)]
pub enum ControlError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Source of the lane-following steering angle.
pub trait SteeringPolicy: Sync {
    /// Camera frame size (height, width) the policy wants.
    fn frame_size(&self) -> (usize, usize);

    fn steer(&self, frame: &CameraFrame, world: &World, lane: u8) -> Result<f64, ControlError>;
}

impl SteeringPolicy for Network {
    fn frame_size(&self) -> (usize, usize) {
        (self.config().input_height, self.config().input_width)
    }

    fn steer(&self, frame: &CameraFrame, _world: &World, _lane: u8) -> Result<f64, ControlError> {
        Ok(self.predict(&frame.to_tensor())? as f64)
    }
}

/// The scripted pure-pursuit driver, reading the world directly.
#[derive(Clone, Copy, Debug)]
pub struct ExpertPolicy {
    pub frame_size: (usize, usize),
}

impl Default for ExpertPolicy {
    fn default() -> Self {
        Self {
            frame_size: (32, 64),
        }
    }
}

impl SteeringPolicy for ExpertPolicy {
    fn frame_size(&self) -> (usize, usize) {
        self.frame_size
    }

    fn steer(&self, _frame: &CameraFrame, world: &World, lane: u8) -> Result<f64, ControlError> {
        Ok(expert_steering(
            &world.ego.pose,
            &world.track,
            lane,
            &world.config,
        )?)
    }
}

/// Ego position relative to the road for the given lane.
pub fn lane_context(world: &World, lane: u8) -> LaneContext {
    let proj = world.track.project(world.ego.pose.position());
    LaneContext {
        lane,
        lateral: proj.lateral,
        heading_error: wrap_angle(world.ego.pose.heading - proj.heading),
        lane_width: world.track.lane_width(),
    }
}

/// The center cone is wide enough to see adjacent-lane traffic well before it
/// is abreast. Center hits whose point on the map lies outside the kept lane
/// are ignored.
pub fn gate_center(world: &World, zones: &ZoneReadings, lane: u8) -> ZoneReadings {
    let track = &world.track;
    let (lo, half) = (track.lane_offset(lane), 0.5 * track.lane_width());
    let (center, center_bearing_deg) = zone_reading(
        &world.ego.pose,
        &world.obstacles,
        &world.config,
        Zone::Center,
        |p| (track.project(p).lateral - lo).abs() <= half,
    );
    ZoneReadings {
        center,
        center_bearing_deg,
        ..*zones
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TickOutcome {
    pub zones: ZoneReadings,
    pub estimate: ObstacleEstimate,
    pub frame: CameraFrame,
    pub cnn_steer: f64,
    pub mode_before: ModeTag,
    pub decision: Decision,
}

/// Owns the mode, the kept lane and the reading history between ticks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Controller {
    pub thresholds: Thresholds,
    mode: ControllerMode,
    lane: u8,
    history: VecDeque<Reading>,
}

impl Controller {
    pub fn new(thresholds: Thresholds, lane: u8) -> Self {
        Self {
            thresholds,
            mode: ControllerMode::CnnFollow,
            lane,
            history: VecDeque::new(),
        }
    }

    pub fn mode(&self) -> &ControllerMode {
        &self.mode
    }

    pub fn lane(&self) -> u8 {
        self.lane
    }

    /// Back to lane following in `lane`, keeping the reading history.
    pub fn reset(&mut self, lane: u8) {
        self.mode = ControllerMode::CnnFollow;
        self.lane = lane;
    }

    /// Reads the zone sensors and records the center reading. Also used while
    /// someone else drives so the closing-rate window stays current.
    pub fn observe(&mut self, world: &World) -> ZoneReadings {
        let raw = sense_zones(&world.ego.pose, &world.obstacles, &world.config, world.time);
        let zones = gate_center(world, &raw, self.lane);
        self.history.push_back(Reading {
            center: zones.center,
            ego_speed: world.ego.speed,
            timestamp: world.time,
        });
        while self.history.len() > self.thresholds.history_window {
            self.history.pop_front();
        }
        zones
    }

    pub fn render(&self, world: &World, policy: &dyn SteeringPolicy) -> CameraFrame {
        let (h, w) = policy.frame_size();
        render_camera(
            &world.ego.pose,
            &world.track,
            &world.obstacles,
            &world.config,
            h,
            w,
        )
    }

    /// One 10 Hz decision: sense, classify, ask the policy for a steering
    /// angle on the current frame, run the decision tree.
    pub fn tick(
        &mut self,
        world: &World,
        policy: &dyn SteeringPolicy,
    ) -> Result<TickOutcome, ControlError> {
        let zones = self.observe(world);
        let history: Vec<Reading> = self.history.iter().copied().collect();
        let estimate = classify_obstacle(&history, &self.thresholds);
        let frame = self.render(world, policy);
        let cnn_steer = policy.steer(&frame, world, self.lane)?;
        let input = DecisionInput {
            zones,
            estimate,
            cnn_steer,
            state: world.ego,
            ctx: lane_context(world, self.lane),
        };
        let mode_before = self.mode.tag();
        let decision = decide(&input, &self.mode, &self.thresholds, &world.config);
        self.mode = decision.mode;
        self.lane = decision.lane;
        Ok(TickOutcome {
            zones,
            estimate,
            frame,
            cnn_steer,
            mode_before,
            decision,
        })
    }
}
