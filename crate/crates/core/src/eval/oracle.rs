use serde::{Deserialize, Serialize};

use crate::eval::INTERVENTION_SECONDS;
use crate::sim::{ActuatorCommand, WorldConfig};

/// Automatic safety driver. It takes over when the ego leaves its lane or
/// collides, and steers back with `omega = -k1 * cte - k2 * heading_error`
/// for exactly one intervention period.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SafetyOracle {
    pub k1: f64,
    pub k2: f64,
    /// Triggers when `|cte| > trigger_fraction * lane_width`.
    pub trigger_fraction: f64,
    /// Speed held during recovery, m/s. At 0.8 m/s the linearized recovery
    /// `s^2 + 2 s + 0.8` is overdamped, so `|cte|` shrinks monotonically.
    pub recovery_speed: f64,
}

impl Default for SafetyOracle {
    fn default() -> Self {
        Self {
            k1: 1.0,
            k2: 2.0,
            trigger_fraction: 0.5,
            recovery_speed: 0.8,
        }
    }
}

impl SafetyOracle {
    /// Why the oracle takes over, if it does.
    pub fn check(&self, cte: Option<f64>, lane_width: f64, collided: bool) -> Option<String> {
        if collided {
            return Some("collision".into());
        }
        match cte {
            Some(c) if c.abs() > self.trigger_fraction * lane_width => {
                Some(format!("cross-track error {c:.3} m"))
            }
            _ => None,
        }
    }

    pub fn hold_ticks(&self, cfg: &WorldConfig) -> u64 {
        (INTERVENTION_SECONDS * cfg.control_rate_hz).round() as u64
    }

    pub fn recovery_command(
        &self,
        cte: f64,
        heading_error: f64,
        cfg: &WorldConfig,
    ) -> ActuatorCommand {
        let omega = (-self.k1 * cte - self.k2 * heading_error).clamp(-cfg.omega_max, cfg.omega_max);
        ActuatorCommand {
            omega,
            target_speed: self.recovery_speed.min(cfg.v_max),
            steering: 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{wrap_angle, Pose, Track, VehicleState, World};

    #[test]
    fn trigger_threshold() {
        let o = SafetyOracle::default();
        assert!(o.check(Some(0.2), 1.0, false).is_none());
        assert!(o.check(Some(0.5), 1.0, false).is_none());
        assert!(o.check(Some(0.6), 1.0, false).is_some());
        assert!(o.check(Some(-0.6), 1.0, false).is_some());
        assert!(o.check(None, 1.0, false).is_none());
        assert_eq!(o.check(Some(0.0), 1.0, true).as_deref(), Some("collision"));
        assert_eq!(o.hold_ticks(&WorldConfig::campus()), 50);
    }

    /// Closed loop on a straight road from 0.6 m off center at cruise speed.
    #[test]
    fn recovery_shrinks_cte_monotonically() {
        let cfg = WorldConfig::campus();
        let track = Track::straight(300.0, 1.0).unwrap();
        let ego = VehicleState {
            pose: Pose::new(10.0, 0.6, 0.0),
            speed: cfg.cruise_speed,
            steering: 0.0,
        };
        let mut w = World::new(cfg.clone(), track, ego, vec![]).unwrap();
        let o = SafetyOracle::default();
        let mut prev = w.track.cross_track_error(&w.ego.pose, 2).unwrap();
        for _ in 0..o.hold_ticks(&cfg) {
            let cte = w.track.cross_track_error(&w.ego.pose, 2).unwrap();
            let he = wrap_angle(w.ego.pose.heading);
            w.set_command(o.recovery_command(cte, he, &cfg));
            for _ in 0..cfg.steps_per_tick() {
                w.step();
                let now = w.track.cross_track_error(&w.ego.pose, 2).unwrap();
                assert!(now.abs() <= prev.abs() + 1e-12, "{now} after {prev}");
                prev = now;
            }
        }
        assert!(prev.abs() < 0.1, "final cte {prev}");
    }
}
