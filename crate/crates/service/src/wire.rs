//! JSON messages exchanged over `/ws`. Every message is one text frame with a
//! `kind` tag; see `docs/protocol.md` for the full schema.

use lanepilot_core::avoidance::ModeTag;
use lanepilot_core::eval::Driver;
use lanepilot_core::sim::{ActuatorCommand, Pose, ZoneReadings};
use serde::{Deserialize, Serialize};

use crate::session::SessionMode;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObstacleView {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
}

/// One 10 Hz snapshot of the session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Telemetry {
    pub tick: u64,
    /// Simulation time, s.
    pub time: f64,
    pub session: SessionMode,
    pub scenario: String,
    pub pose: Pose,
    pub speed: f64,
    pub lane: u8,
    pub cte: Option<f64>,
    pub zones: ZoneReadings,
    pub mode: ModeTag,
    pub driver: Driver,
    pub command: ActuatorCommand,
    pub obstacles: Vec<ObstacleView>,
    /// Live autonomy in eval sessions.
    pub autonomy_percent: Option<f64>,
    pub interventions: usize,
    pub recording: bool,
    pub recorded_samples: usize,
    pub collisions: u32,
    /// Whether the receiving client holds control authority.
    pub authority: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FramePayload {
    pub tick: u64,
    pub width: usize,
    pub height: usize,
    /// Binary PGM (P5), base64.
    pub pgm: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WireMessage {
    Telemetry(Box<Telemetry>),
    Frame(FramePayload),
    Control {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tick: Option<u64>,
        /// rad, positive to the left, within +-pi/2
        steering: f64,
        /// fraction of top speed, within [0, 1]
        throttle: f64,
    },
    TakeoverBegin {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tick: Option<u64>,
    },
    TakeoverEnd {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tick: Option<u64>,
    },
    RecordBegin {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tick: Option<u64>,
    },
    RecordEnd {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tick: Option<u64>,
        /// Set by the server: id of the saved dataset.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dataset: Option<String>,
    },
    Error {
        tick: u64,
        message: String,
    },
}

impl WireMessage {
    /// Rejects control values outside their documented ranges.
    pub fn validate(&self) -> Result<(), String> {
        if let WireMessage::Control { steering, throttle, .. } = *self {
            if !(-std::f64::consts::FRAC_PI_2..=std::f64::consts::FRAC_PI_2).contains(&steering) {
                return Err(format!("steering {steering} outside [-pi/2, pi/2]"));
            }
            if !(0.0..=1.0).contains(&throttle) {
                return Err(format!("throttle {throttle} outside [0, 1]"));
            }
        }
        Ok(())
    }

    /// Messages only the client holding control authority may send.
    pub fn needs_authority(&self) -> bool {
        matches!(
            self,
            WireMessage::Control { .. }
                | WireMessage::TakeoverBegin { .. }
                | WireMessage::TakeoverEnd { .. }
                | WireMessage::RecordBegin { .. }
                | WireMessage::RecordEnd { .. }
        )
    }
}
