mod common;

use common::*;
use lanepilot_core::avoidance::{
    decide, mirror_lane, ControllerMode, ManeuverPhase, ModeTag, ObstacleKind, Side, Thresholds,
};
use lanepilot_core::avoidance::ControlCommand;
use lanepilot_core::sim::{step_vehicle, VehicleState, WorldConfig};
use proptest::prelude::*;

#[test]
fn truth_table_matches_reference() {
    let (cases, mismatches) = truth_table_mismatches();
    assert!(cases >= 300);
    assert!(mismatches.is_empty(), "{} of {cases} differ:\n{}", mismatches.len(), mismatches.join("\n"));
}

#[test]
fn mirror_symmetry_on_grid() {
    let bad = mirror_violations();
    assert!(bad.is_empty(), "{}", bad.join("\n"));
}

#[test]
fn obstacle_scenario_turns_right() {
    // static obstacle 14 m ahead, a car alongside on the left
    let th = Thresholds::default();
    let cfg = WorldConfig::campus();
    let d = decide(&input(14.0, 0.8, 30.0, ObstacleKind::Static, 0.0, 2), &ControllerMode::CnnFollow, &th, &cfg);
    assert_eq!(d.command.mode, ModeTag::LaneChangeRight);
    assert_eq!(d.command.omega, -0.5);
    assert_eq!(d.lane, 2);
}

#[test]
fn prefers_left_when_both_clear() {
    let th = Thresholds::default();
    let cfg = WorldConfig::campus();
    let d = decide(&input(10.0, 30.0, 30.0, ObstacleKind::Static, 0.0, 2), &ControllerMode::CnnFollow, &th, &cfg);
    assert_eq!(d.command.mode, ModeTag::LaneChangeLeft);
    assert!(d.command.omega > 0.0);
}

#[test]
fn outer_lanes_only_turn_inward() {
    let th = Thresholds::default();
    let cfg = WorldConfig::campus();
    let d = decide(&input(10.0, 30.0, 30.0, ObstacleKind::Static, 0.0, 1), &ControllerMode::CnnFollow, &th, &cfg);
    assert_eq!(d.command.mode, ModeTag::LaneChangeRight);
    let d = decide(&input(10.0, 30.0, 30.0, ObstacleKind::Static, 0.0, 3), &ControllerMode::CnnFollow, &th, &cfg);
    assert_eq!(d.command.mode, ModeTag::LaneChangeLeft);
}

fn distance() -> impl Strategy<Value = f64> {
    prop_oneof![0.01f64..30.0, proptest::sample::select(DISTANCES.to_vec())]
}

fn kind() -> impl Strategy<Value = ObstacleKind> {
    proptest::sample::select(KINDS.to_vec())
}

proptest! {
    /// Swapping left and right (zones, lanes 1 and 3, steering sign) mirrors
    /// the decision, except where the left-first tie-break applies.
    #[test]
    fn mirror_symmetry(c in distance(), l in distance(), r in distance(), k in kind(),
                       v in 0.0f64..3.0, lane in 1u8..=3, prior in 0usize..3) {
        let th = Thresholds::default();
        let cfg = WorldConfig::campus();
        let prior = [ControllerMode::CnnFollow, ControllerMode::SpeedMatch { target: 1.0, clear_ticks: 0 }, ControllerMode::Stopped][prior];
        let inp = input(c, l, r, k, v, lane);
        let both_open = lane == 2 && l >= th.lane_clear && r >= th.lane_clear;
        prop_assume!(!both_open);
        let a = decide(&inp, &prior, &th, &cfg);
        let b = decide(&inp.mirrored(), &prior.mirrored(), &th, &cfg);
        prop_assert_eq!(b.command.mode, a.command.mode.mirrored());
        prop_assert_eq!(b.mode, a.mode.mirrored());
        prop_assert_eq!(b.lane, mirror_lane(a.lane));
        prop_assert!((b.command.omega + a.command.omega).abs() < 1e-12);
        prop_assert!((b.command.steering + a.command.steering).abs() < 1e-12);
        prop_assert_eq!(b.command.target_speed, a.command.target_speed);
    }

    #[test]
    fn speed_match_never_exceeds_estimate(c in 0.01f64..20.0, v in -1.0f64..5.0, lane in 1u8..=3) {
        let th = Thresholds::default();
        let cfg = WorldConfig::campus();
        let d = decide(&input(c, 30.0, 30.0, ObstacleKind::Moving, v, lane), &ControllerMode::CnnFollow, &th, &cfg);
        prop_assert_eq!(d.command.mode, ModeTag::SpeedMatch);
        prop_assert!(d.command.target_speed <= v.max(0.0) + 1e-12);
        prop_assert!(d.command.target_speed >= 0.0);
    }
}

/// Same speed ramp as the world, without obstacles or a track.
fn physics_step(state: &VehicleState, cmd: &ControlCommand, cfg: &WorldConfig) -> VehicleState {
    let lim = cfg.accel_limit * cfg.dt;
    let mut next = *state;
    next.speed = (state.speed + (cmd.target_speed - state.speed).clamp(-lim, lim)).clamp(0.0, cfg.v_max);
    step_vehicle(&next, cmd.omega, cfg.dt)
}

/// Closed-loop lane change on an ideal straight road, integrated with the
/// vehicle model only. Returns (ticks, max |heading|, final lateral).
fn run_maneuver(lane: u8, side: Side) -> (usize, f64, f64, u8) {
    let th = Thresholds::default();
    let cfg = WorldConfig::campus();
    let mut inp = input(10.0, 30.0, 30.0, ObstacleKind::Static, 0.0, lane);
    if side == Side::Right {
        inp.zones.left = 5.0;
    }
    let mut state = inp.state;
    let mut mode = ControllerMode::CnnFollow;
    let mut kept = lane;
    let mut max_heading: f64 = 0.0;
    for tick in 0..400 {
        inp.state = state;
        inp.ctx.lane = kept;
        inp.ctx.lateral = state.pose.y;
        inp.ctx.heading_error = state.pose.heading;
        inp.cnn_steer = 0.0;
        let d = decide(&inp, &mode, &th, &cfg);
        mode = d.mode;
        kept = d.lane;
        if tick > 0 && mode == ControllerMode::CnnFollow {
            return (tick, max_heading, state.pose.y, kept);
        }
        for _ in 0..cfg.steps_per_tick() {
            state = physics_step(&state, &d.command, &cfg);
            max_heading = max_heading.max(state.pose.heading.abs());
        }
    }
    panic!("maneuver from lane {lane} to the {side:?} did not finish");
}

#[test]
fn maneuvers_terminate_bounded() {
    let th = Thresholds::default();
    for (lane, side) in [(2, Side::Left), (2, Side::Right), (3, Side::Left), (1, Side::Right)] {
        let (ticks, max_heading, y, kept) = run_maneuver(lane, side);
        let target = side.neighbor(lane).unwrap();
        assert_eq!(kept, target);
        assert!(ticks < 200, "{ticks} ticks");
        assert!(max_heading <= th.heading_limit + 1e-9, "heading {max_heading}");
        let target_y = 2.0 - target as f64;
        assert!((y - target_y).abs() <= th.lateral_tolerance + 0.05, "lateral {y} for lane {target}");
    }
}

#[test]
fn maneuver_phases_progress_in_order() {
    let th = Thresholds::default();
    let cfg = WorldConfig::campus();
    let mut inp = input(10.0, 30.0, 30.0, ObstacleKind::Static, 0.0, 2);
    let mut state = inp.state;
    let mut mode = ControllerMode::CnnFollow;
    let mut phases = Vec::new();
    for _ in 0..200 {
        inp.state = state;
        inp.ctx.lateral = state.pose.y;
        inp.ctx.heading_error = state.pose.heading;
        let d = decide(&inp, &mode, &th, &cfg);
        mode = d.mode;
        match mode {
            ControllerMode::LaneChange { phase, .. } => {
                if phases.last() != Some(&phase) {
                    phases.push(phase);
                }
            }
            _ => break,
        }
        for _ in 0..cfg.steps_per_tick() {
            state = physics_step(&state, &d.command, &cfg);
        }
    }
    assert_eq!(phases, vec![ManeuverPhase::TurnIn, ManeuverPhase::Hold, ManeuverPhase::Realign]);
}
