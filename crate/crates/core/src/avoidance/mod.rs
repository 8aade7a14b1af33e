//! Zone-sensor obstacle avoidance: closing-rate classification, the decision
//! tree that arbitrates between CNN lane following, speed matching, lane
//! changes and stopping, and the 10 Hz controller that wires it to the world.

mod classify;
mod controller;
mod decide;

use serde::{Deserialize, Serialize};

pub use classify::{classify_obstacle, ObstacleEstimate, ObstacleKind, Reading};
pub use controller::{
    lane_context, ControlError, Controller, ExpertPolicy, SteeringPolicy, TickOutcome,
};
pub use decide::{decide, Decision, DecisionInput};

use crate::sim::WorldConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    /// Detection distance D, m.
    pub detect: f64,
    /// A side zone must read at least this far for its lane to count as clear.
    pub lane_clear: f64,
    /// Sensor range R; readings at R mean nothing was seen.
    pub sensor_range: f64,
    /// Yaw rate of a lane change, rad/s.
    pub maneuver_omega: f64,
    /// Largest heading deviation from the lane direction during a lane change.
    pub heading_limit: f64,
    /// Target speed during a lane change, m/s. Low enough that the turn-in and
    /// realign arcs fit inside one lane width.
    pub maneuver_speed: f64,
    /// Obstacles slower than this (m/s) are static.
    pub static_epsilon: f64,
    /// Center readings kept for the closing-rate estimate.
    pub history_window: usize,
    /// Allowed error of the predicted landing point in the target lane, m.
    pub lateral_tolerance: f64,
    /// Leaving SPEED_MATCH needs `center >= detect + release_margin` ...
    pub release_margin: f64,
    /// ... on this many consecutive ticks.
    pub release_ticks: u32,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            detect: 20.0,
            lane_clear: 20.0,
            sensor_range: 30.0,
            maneuver_omega: 0.5,
            heading_limit: 60f64.to_radians(),
            maneuver_speed: 0.4,
            static_epsilon: 0.2,
            history_window: 5,
            lateral_tolerance: 0.1,
            release_margin: 1.0,
            release_ticks: 3,
        }
    }
}

impl Thresholds {
    pub fn from_world(cfg: &WorldConfig) -> Self {
        Self {
            detect: cfg.detect_distance,
            sensor_range: cfg.sensor_range,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("detect", self.detect),
            ("lane_clear", self.lane_clear),
            ("sensor_range", self.sensor_range),
            ("maneuver_omega", self.maneuver_omega),
            ("heading_limit", self.heading_limit),
            ("maneuver_speed", self.maneuver_speed),
            ("static_epsilon", self.static_epsilon),
            ("lateral_tolerance", self.lateral_tolerance),
            ("release_margin", self.release_margin),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("threshold {name} must be positive, got {v}"));
            }
        }
        if self.history_window < 2 || self.release_ticks == 0 {
            return Err("history_window must be >= 2 and release_ticks >= 1".into());
        }
        if self.heading_limit >= std::f64::consts::FRAC_PI_2 {
            return Err("heading_limit must be below 90 degrees".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    /// +1 for left (counter-clockwise), -1 for right.
    pub fn sign(self) -> f64 {
        match self {
            Side::Left => 1.0,
            Side::Right => -1.0,
        }
    }

    pub fn mirrored(self) -> Self {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }

    /// Adjacent lane on this side, if there is one. Lane 1 is leftmost.
    pub fn neighbor(self, lane: u8) -> Option<u8> {
        match (self, lane) {
            (Side::Left, 2 | 3) => Some(lane - 1),
            (Side::Right, 1 | 2) => Some(lane + 1),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManeuverPhase {
    /// Turning toward the target lane at the maneuver rate.
    TurnIn,
    /// Heading held at the limit while crossing.
    Hold,
    /// Counter-steering back to the lane direction.
    Realign,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ControllerMode {
    CnnFollow,
    SpeedMatch {
        /// Last matched obstacle speed.
        target: f64,
        /// Consecutive ticks with the front beyond the release distance.
        clear_ticks: u32,
    },
    LaneChange {
        side: Side,
        target_lane: u8,
        phase: ManeuverPhase,
    },
    Stopped,
}

impl ControllerMode {
    pub fn tag(&self) -> ModeTag {
        match self {
            ControllerMode::CnnFollow => ModeTag::CnnFollow,
            ControllerMode::SpeedMatch { .. } => ModeTag::SpeedMatch,
            ControllerMode::LaneChange {
                side: Side::Left, ..
            } => ModeTag::LaneChangeLeft,
            ControllerMode::LaneChange {
                side: Side::Right, ..
            } => ModeTag::LaneChangeRight,
            ControllerMode::Stopped => ModeTag::Stopped,
        }
    }

    /// Left and right exchanged, lanes 1 and 3 swapped.
    pub fn mirrored(&self) -> Self {
        match *self {
            ControllerMode::LaneChange {
                side,
                target_lane,
                phase,
            } => ControllerMode::LaneChange {
                side: side.mirrored(),
                target_lane: mirror_lane(target_lane),
                phase,
            },
            other => other,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeTag {
    CnnFollow,
    SpeedMatch,
    LaneChangeLeft,
    LaneChangeRight,
    Stopped,
}

impl ModeTag {
    pub fn mirrored(self) -> Self {
        match self {
            ModeTag::LaneChangeLeft => ModeTag::LaneChangeRight,
            ModeTag::LaneChangeRight => ModeTag::LaneChangeLeft,
            other => other,
        }
    }
}

pub fn mirror_lane(lane: u8) -> u8 {
    4 - lane
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlCommand {
    /// rad/s, positive counter-clockwise.
    pub omega: f64,
    /// m/s, never negative.
    pub target_speed: f64,
    /// Equivalent steering angle, for logs and the vehicle state.
    pub steering: f64,
    pub mode: ModeTag,
}

impl ControlCommand {
    pub fn to_actuator(&self) -> crate::sim::ActuatorCommand {
        crate::sim::ActuatorCommand {
            omega: self.omega,
            target_speed: self.target_speed,
            steering: self.steering,
        }
    }
}

/// Where the ego sits relative to the road, as the decision tree needs it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaneContext {
    /// Lane the controller is keeping, 1..=3.
    pub lane: u8,
    /// Signed offset from the track centerline, positive left.
    pub lateral: f64,
    /// Ego heading minus the lane direction, wrapped.
    pub heading_error: f64,
    pub lane_width: f64,
}

impl LaneContext {
    pub fn lane_center(&self, lane: u8) -> f64 {
        (2.0 - lane as f64) * self.lane_width
    }

    pub fn mirrored(&self) -> Self {
        Self {
            lane: mirror_lane(self.lane),
            lateral: -self.lateral,
            heading_error: -self.heading_error,
            lane_width: self.lane_width,
        }
    }
}
