use serde::{Deserialize, Serialize};

use crate::sim::geometry::{wrap_angle, Pose};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub pose: Pose,
    /// m/s, in `[0, v_max]`.
    pub speed: f64,
    /// Last commanded steering angle, radians.
    pub steering: f64,
}

/// Yaw rate for a steering angle: `omega = speed / wheelbase * tan(steering)`,
/// clamped to `+-omega_max`.
pub fn steering_to_omega(steering: f64, speed: f64, wheelbase: f64, omega_max: f64) -> f64 {
    let steering = steering.clamp(-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2);
    let omega = speed / wheelbase * steering.tan();
    if omega.is_nan() {
        return 0.0;
    }
    omega.clamp(-omega_max, omega_max)
}

/// Unicycle step, semi-implicit Euler: heading first, then position along the
/// new heading. Speed and steering are carried over unchanged.
pub fn step_vehicle(state: &VehicleState, omega: f64, dt: f64) -> VehicleState {
    let heading = if omega == 0.0 {
        state.pose.heading
    } else {
        wrap_angle(state.pose.heading + omega * dt)
    };
    let (x, y) = if state.speed == 0.0 {
        (state.pose.x, state.pose.y)
    } else {
        (
            state.pose.x + state.speed * heading.cos() * dt,
            state.pose.y + state.speed * heading.sin() * dt,
        )
    };
    VehicleState {
        pose: Pose { x, y, heading },
        ..*state
    }
}
