//! Shared fixtures for the integration tests.
#![allow(dead_code)]

pub mod nn;

use std::path::PathBuf;

use lanepilot_core::avoidance::{
    decide, mirror_lane, ControllerMode, DecisionInput, LaneContext, ModeTag, ObstacleEstimate,
    ObstacleKind, Thresholds,
};
use lanepilot_core::eval::{run_episode, EpisodeConfig, EvalMode, ModelRef, RunLog};
use lanepilot_core::nn::{encode_model, NetConfig, Network};
use lanepilot_core::sim::{Pose, Scenario, VehicleState, WorldConfig, ZoneReadings};

pub const DETECT: f64 = 20.0;
pub const LANE_CLEAR: f64 = 20.0;
pub const CRUISE: f64 = 2.0;
pub const MANEUVER_SPEED: f64 = 0.4;

/// Ego on the center line of `lane`, lane width 1, heading along the road.
pub fn input(center: f64, left: f64, right: f64, kind: ObstacleKind, obstacle_speed: f64, lane: u8) -> DecisionInput {
    DecisionInput {
        zones: ZoneReadings {
            left,
            center,
            right,
            timestamp: 0.0,
            center_bearing_deg: None,
        },
        estimate: ObstacleEstimate {
            kind,
            speed: obstacle_speed,
            distance: center,
            insufficient_history: kind == ObstacleKind::None,
        },
        cnn_steer: 0.02,
        state: VehicleState {
            pose: Pose::new(0.0, 2.0 - lane as f64, 0.0),
            speed: CRUISE,
            steering: 0.0,
        },
        ctx: LaneContext {
            lane,
            lateral: 2.0 - lane as f64,
            heading_error: 0.0,
            lane_width: 1.0,
        },
    }
}

/// The decision tree written out as a flat table lookup, independent of the
/// library code. Returns the mode after one tick and the target speed.
pub fn reference(
    center: f64,
    left: f64,
    right: f64,
    kind: ObstacleKind,
    obstacle_speed: f64,
    lane: u8,
    prior: &ControllerMode,
) -> (ModeTag, f64) {
    let front_clear = center >= DETECT;
    match prior {
        ControllerMode::Stopped if !front_clear => return (ModeTag::Stopped, 0.0),
        ControllerMode::Stopped | ControllerMode::CnnFollow if front_clear => {
            return (ModeTag::CnnFollow, CRUISE)
        }
        // one clear tick is not enough to release
        ControllerMode::SpeedMatch { target, .. } if front_clear => return (ModeTag::SpeedMatch, *target),
        _ => {}
    }
    if kind == ObstacleKind::Moving {
        return (ModeTag::SpeedMatch, obstacle_speed.min(CRUISE).max(0.0));
    }
    let left_lane = lane > 1;
    let right_lane = lane < 3;
    if left_lane && left >= LANE_CLEAR {
        (ModeTag::LaneChangeLeft, MANEUVER_SPEED)
    } else if right_lane && right >= LANE_CLEAR {
        (ModeTag::LaneChangeRight, MANEUVER_SPEED)
    } else {
        (ModeTag::Stopped, 0.0)
    }
}

pub const DISTANCES: [f64; 7] = [5.0, 14.0, 19.0, 20.0, 21.0, 25.0, 30.0];
pub const KINDS: [ObstacleKind; 3] = [ObstacleKind::None, ObstacleKind::Static, ObstacleKind::Moving];

pub fn priors() -> [ControllerMode; 3] {
    [
        ControllerMode::CnnFollow,
        ControllerMode::SpeedMatch {
            target: 1.0,
            clear_ticks: 0,
        },
        ControllerMode::Stopped,
    ]
}

/// Every grid point as (center, left, right, kind, lane, prior).
pub fn grid() -> Vec<(f64, f64, f64, ObstacleKind, u8, ControllerMode)> {
    let mut out = Vec::new();
    for &c in &DISTANCES {
        for &l in &DISTANCES {
            for &r in &DISTANCES {
                for kind in KINDS {
                    for lane in 1..=3u8 {
                        for prior in priors() {
                            out.push((c, l, r, kind, lane, prior));
                        }
                    }
                }
            }
        }
    }
    out
}

/// Runs `decide` over the grid. Returns the case count and the mismatches
/// against [`reference`].
pub fn truth_table_mismatches() -> (usize, Vec<String>) {
    let th = Thresholds::default();
    let cfg = WorldConfig::campus();
    let cases = grid();
    let mut bad = Vec::new();
    for &(c, l, r, kind, lane, prior) in &cases {
        let d = decide(&input(c, l, r, kind, 1.2, lane), &prior, &th, &cfg);
        let want = reference(c, l, r, kind, 1.2, lane, &prior);
        if (d.command.mode, d.command.target_speed) != want {
            bad.push(format!(
                "c={c} l={l} r={r} {kind:?} lane {lane} {prior:?}: got {:?} {} want {want:?}",
                d.command.mode, d.command.target_speed
            ));
        }
    }
    (cases.len(), bad)
}

/// Grid points where the mirrored input does not give the mirrored
/// decision. Points where both neighbors are open are skipped, the
/// left-first rule breaks the symmetry there.
pub fn mirror_violations() -> Vec<String> {
    let th = Thresholds::default();
    let cfg = WorldConfig::campus();
    let mut bad = Vec::new();
    for (c, l, r, kind, lane, prior) in grid() {
        if lane == 2 && l >= th.lane_clear && r >= th.lane_clear {
            continue;
        }
        let inp = input(c, l, r, kind, 1.2, lane);
        let a = decide(&inp, &prior, &th, &cfg);
        let b = decide(&inp.mirrored(), &prior.mirrored(), &th, &cfg);
        let ok = b.command.mode == a.command.mode.mirrored()
            && b.mode == a.mode.mirrored()
            && b.lane == mirror_lane(a.lane)
            && (b.command.omega + a.command.omega).abs() < 1e-12
            && b.command.target_speed == a.command.target_speed;
        if !ok {
            bad.push(format!("c={c} l={l} r={r} {kind:?} lane {lane} {prior:?}"));
        }
    }
    bad
}

pub fn init_net(seed: u64) -> (Network, ModelRef) {
    let net = Network::init(&NetConfig::tiny(seed)).unwrap();
    let model = ModelRef::from_bytes(format!("init:tiny:{seed}"), &encode_model(&net, None));
    (net, model)
}

/// The committed fixture run: an untrained network on the obstacle scenario.
pub fn golden_run() -> RunLog {
    let (net, model) = init_net(7);
    let scen = Scenario::builtin("fig5").unwrap();
    run_episode(&scen, &net, model, EpisodeConfig::new(8.0, 7, EvalMode::Oracle)).unwrap()
}

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}
