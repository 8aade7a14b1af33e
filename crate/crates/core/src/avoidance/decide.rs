//! The decision tree, one call per 10 Hz tick.
//!
//! 1. Nothing within D: follow the CNN at cruise speed.
//! 2. Moving obstacle within D: keep the lane at the obstacle's speed.
//! 3. Static obstacle within D: change to the left lane if it exists and its
//!    zone is clear to `lane_clear`, else the right one, else stop.
//! 4. A lane change turns at `maneuver_omega` up to `heading_limit`, holds
//!    that heading, then counter-steers so it lands on the target lane
//!    center, and hands back to the CNN.

use serde::{Deserialize, Serialize};

use crate::avoidance::{
    ControlCommand, ControllerMode, LaneContext, ManeuverPhase, ModeTag, ObstacleEstimate,
    ObstacleKind, Side, Thresholds,
};
use crate::sim::{steering_to_omega, VehicleState, WorldConfig, ZoneReadings};

/// Heading deviation below which a realign counts as finished, rad.
const ALIGNED: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionInput {
    pub zones: ZoneReadings,
    pub estimate: ObstacleEstimate,
    /// Steering the CNN proposes for the current frame, rad.
    pub cnn_steer: f64,
    pub state: VehicleState,
    pub ctx: LaneContext,
}

impl DecisionInput {
    pub fn mirrored(&self) -> Self {
        Self {
            zones: self.zones.mirrored(),
            cnn_steer: -self.cnn_steer,
            ctx: self.ctx.mirrored(),
            ..*self
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub command: ControlCommand,
    pub mode: ControllerMode,
    /// Lane the controller keeps after this tick.
    pub lane: u8,
}

pub fn decide(
    input: &DecisionInput,
    mode: &ControllerMode,
    th: &Thresholds,
    cfg: &WorldConfig,
) -> Decision {
    let center = input.zones.center;
    match *mode {
        ControllerMode::CnnFollow | ControllerMode::Stopped if center >= th.detect => {
            follow(input, cfg)
        }
        ControllerMode::CnnFollow => react(input, th, cfg),
        ControllerMode::Stopped => stopped(input.ctx.lane),
        ControllerMode::SpeedMatch {
            target,
            clear_ticks,
        } => {
            if center < th.detect {
                return react(input, th, cfg);
            }
            let clear_ticks = if center >= th.detect + th.release_margin {
                clear_ticks + 1
            } else {
                0
            };
            if clear_ticks >= th.release_ticks {
                follow(input, cfg)
            } else {
                speed_match(input, target, clear_ticks, cfg)
            }
        }
        ControllerMode::LaneChange {
            side,
            target_lane,
            phase,
        } => maneuver(input, side, target_lane, phase, th, cfg),
    }
}

fn follow(input: &DecisionInput, cfg: &WorldConfig) -> Decision {
    Decision {
        command: lane_keep_command(input, cfg.cruise_speed, ModeTag::CnnFollow, cfg),
        mode: ControllerMode::CnnFollow,
        lane: input.ctx.lane,
    }
}

fn lane_keep_command(
    input: &DecisionInput,
    target_speed: f64,
    mode: ModeTag,
    cfg: &WorldConfig,
) -> ControlCommand {
    let steering = input
        .cnn_steer
        .clamp(-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2);
    ControlCommand {
        omega: steering_to_omega(steering, input.state.speed, cfg.wheelbase, cfg.omega_max),
        target_speed,
        steering,
        mode,
    }
}

fn speed_match(
    input: &DecisionInput,
    target: f64,
    clear_ticks: u32,
    cfg: &WorldConfig,
) -> Decision {
    Decision {
        command: lane_keep_command(input, target, ModeTag::SpeedMatch, cfg),
        mode: ControllerMode::SpeedMatch {
            target,
            clear_ticks,
        },
        lane: input.ctx.lane,
    }
}

fn stopped(lane: u8) -> Decision {
    Decision {
        command: ControlCommand {
            omega: 0.0,
            target_speed: 0.0,
            steering: 0.0,
            mode: ModeTag::Stopped,
        },
        mode: ControllerMode::Stopped,
        lane,
    }
}

/// Something is within D. A missing estimate is handled like a static
/// obstacle, the cautious reading.
fn react(input: &DecisionInput, th: &Thresholds, cfg: &WorldConfig) -> Decision {
    if input.estimate.kind == ObstacleKind::Moving {
        // never faster than cruise, even behind a faster obstacle
        let target = input.estimate.speed.clamp(0.0, cfg.cruise_speed);
        return speed_match(input, target, 0, cfg);
    }
    let lane = input.ctx.lane;
    for side in [Side::Left, Side::Right] {
        if let Some(target_lane) = side.neighbor(lane) {
            if side_zone(&input.zones, side) >= th.lane_clear {
                return maneuver(input, side, target_lane, ManeuverPhase::TurnIn, th, cfg);
            }
        }
    }
    stopped(lane)
}

fn side_zone(z: &ZoneReadings, side: Side) -> f64 {
    match side {
        Side::Left => z.left,
        Side::Right => z.right,
    }
}

fn maneuver(
    input: &DecisionInput,
    side: Side,
    target_lane: u8,
    mut phase: ManeuverPhase,
    th: &Thresholds,
    cfg: &WorldConfig,
) -> Decision {
    let ctx = &input.ctx;
    if side_zone(&input.zones, side) < th.lane_clear {
        return stopped(ctx.lane);
    }
    let s = side.sign();
    let dev = s * ctx.heading_error;
    let remaining = s * (ctx.lane_center(target_lane) - ctx.lateral);
    // lateral distance a realign arc from the current heading still covers
    let radius = input.state.speed / th.maneuver_omega;
    let realign_shift = radius * (1.0 - dev.max(0.0).cos());
    let lands = remaining - realign_shift <= th.lateral_tolerance;
    let tick = cfg.tick_period();

    if phase == ManeuverPhase::TurnIn && !lands && dev >= th.heading_limit - 1e-9 {
        phase = ManeuverPhase::Hold;
    }
    if phase != ManeuverPhase::Realign && lands {
        phase = ManeuverPhase::Realign;
    }
    if phase == ManeuverPhase::Realign && dev <= ALIGNED {
        let done = DecisionInput {
            ctx: LaneContext {
                lane: target_lane,
                ..*ctx
            },
            ..*input
        };
        return follow(&done, cfg);
    }

    let omega = match phase {
        // trimmed so the turn stops exactly at the heading limit
        ManeuverPhase::TurnIn => {
            s * th
                .maneuver_omega
                .min((th.heading_limit - dev).max(0.0) / tick)
        }
        ManeuverPhase::Hold => 0.0,
        ManeuverPhase::Realign => -s * th.maneuver_omega.min(dev.max(0.0) / tick),
    };
    let speed = input.state.speed;
    let steering = if speed > 1e-9 {
        (omega * cfg.wheelbase / speed).atan()
    } else {
        0.0
    };
    let mode = ControllerMode::LaneChange {
        side,
        target_lane,
        phase,
    };
    Decision {
        command: ControlCommand {
            omega,
            target_speed: th.maneuver_speed.min(cfg.cruise_speed),
            steering,
            mode: mode.tag(),
        },
        mode,
        lane: ctx.lane,
    }
}
