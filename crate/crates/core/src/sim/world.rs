use serde::{Deserialize, Serialize};

use crate::sim::geometry::Pose;
use crate::sim::track::Track;
use crate::sim::vehicle::{step_vehicle, VehicleState};
use crate::sim::SimError;

/// Simulator parameters. Unknown fields in scenario overrides fall back to the
/// campus defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub profile: String,
    /// Physics step, s.
    pub dt: f64,
    /// Sensor, decision and telemetry rate, Hz.
    pub control_rate_hz: f64,
    /// Obstacle detection distance D, m.
    pub detect_distance: f64,
    /// Ultrasonic range R, m. Readings are capped here.
    pub sensor_range: f64,
    /// Center zone spans `+-center_half_angle_deg`.
    pub center_half_angle_deg: i32,
    /// Side zones span from the center zone edge out to this angle.
    pub side_outer_angle_deg: i32,
    pub camera_ahead_m: f64,
    pub camera_width_m: f64,
    pub line_width_m: f64,
    pub wheelbase: f64,
    pub omega_max: f64,
    pub v_max: f64,
    pub cruise_speed: f64,
    pub accel_limit: f64,
    pub ego_radius: f64,
    pub lookahead_m: f64,
    pub expert_max_steer: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self::campus()
    }
}

impl WorldConfig {
    pub fn campus() -> Self {
        Self {
            profile: "campus".into(),
            dt: 0.02,
            control_rate_hz: 10.0,
            detect_distance: 20.0,
            sensor_range: 30.0,
            center_half_angle_deg: 15,
            side_outer_angle_deg: 60,
            camera_ahead_m: 20.0,
            camera_width_m: 6.6,
            line_width_m: 0.12,
            wheelbase: 1.0,
            omega_max: 1.5,
            // 30 km/h
            v_max: 30.0 / 3.6,
            cruise_speed: 2.0,
            accel_limit: 2.0,
            ego_radius: 0.3,
            lookahead_m: 4.0,
            expert_max_steer: 0.5,
        }
    }

    /// Same physics as campus; scenarios built for it use short tracks.
    pub fn tiny() -> Self {
        Self {
            profile: "tiny".into(),
            ..Self::campus()
        }
    }

    pub fn from_profile(name: &str) -> Result<Self, SimError> {
        match name {
            "campus" => Ok(Self::campus()),
            "tiny" => Ok(Self::tiny()),
            other => Err(SimError::Config(format!("unknown world profile `{other}`"))),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let positive = [
            ("dt", self.dt),
            ("control_rate_hz", self.control_rate_hz),
            ("detect_distance", self.detect_distance),
            ("sensor_range", self.sensor_range),
            ("camera_ahead_m", self.camera_ahead_m),
            ("camera_width_m", self.camera_width_m),
            ("wheelbase", self.wheelbase),
            ("omega_max", self.omega_max),
            ("v_max", self.v_max),
            ("accel_limit", self.accel_limit),
            ("ego_radius", self.ego_radius),
            ("lookahead_m", self.lookahead_m),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(SimError::Config(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.cruise_speed < 0.0 || self.cruise_speed > self.v_max {
            return Err(SimError::Config(
                "cruise_speed must lie in [0, v_max]".into(),
            ));
        }
        if !(0 < self.center_half_angle_deg
            && self.center_half_angle_deg < self.side_outer_angle_deg)
        {
            return Err(SimError::Config(
                "zone angles must satisfy 0 < center < side".into(),
            ));
        }
        let ratio = 1.0 / (self.dt * self.control_rate_hz);
        if (ratio - ratio.round()).abs() > 1e-9 {
            return Err(SimError::Config(
                "control period must be a whole number of physics steps".into(),
            ));
        }
        Ok(())
    }

    /// Physics steps per control tick (5 with the defaults).
    pub fn steps_per_tick(&self) -> usize {
        (1.0 / (self.dt * self.control_rate_hz)).round() as usize
    }

    pub fn tick_period(&self) -> f64 {
        1.0 / self.control_rate_hz
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub lane: u8,
    /// Arc length along the track.
    pub s: f64,
    /// Along its lane, m/s. Zero for static obstacles.
    pub speed: f64,
    pub radius: f64,
    pub pose: Pose,
}

impl Obstacle {
    pub fn on_lane(
        track: &Track,
        lane: u8,
        s: f64,
        speed: f64,
        radius: f64,
    ) -> Result<Self, SimError> {
        Track::check_lane(lane)?;
        if !(radius > 0.0) {
            return Err(SimError::Config(format!(
                "obstacle radius must be positive, got {radius}"
            )));
        }
        let s = track.normalize_s(s);
        Ok(Self {
            lane,
            s,
            speed,
            radius,
            pose: track.lane_pose(lane, s),
        })
    }

    pub fn is_static(&self) -> bool {
        self.speed == 0.0
    }

    fn advance(&mut self, track: &Track, dt: f64) {
        if self.speed != 0.0 {
            self.s = track.normalize_s(self.s + self.speed * dt);
            self.pose = track.lane_pose(self.lane, self.s);
        }
    }
}

/// Command held by the ego between control ticks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ActuatorCommand {
    pub omega: f64,
    pub target_speed: f64,
    /// Steering angle the command came from, for logging.
    pub steering: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct World {
    pub config: WorldConfig,
    pub track: Track,
    pub ego: VehicleState,
    pub obstacles: Vec<Obstacle>,
    pub command: ActuatorCommand,
    pub time: f64,
    pub steps: u64,
    /// Ego overlaps an obstacle after the latest step.
    pub colliding: bool,
    pub collisions: u32,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepEvents {
    /// First step of a new overlap.
    pub collision_onset: bool,
}

impl World {
    pub fn new(
        config: WorldConfig,
        track: Track,
        ego: VehicleState,
        obstacles: Vec<Obstacle>,
    ) -> Result<Self, SimError> {
        config.validate()?;
        Ok(Self {
            config,
            track,
            ego,
            obstacles,
            command: ActuatorCommand::default(),
            time: 0.0,
            steps: 0,
            colliding: false,
            collisions: 0,
        })
    }

    pub fn set_command(&mut self, command: ActuatorCommand) {
        self.command = command;
        self.ego.steering = command.steering;
    }

    fn overlapping(&self) -> bool {
        let p = self.ego.pose.position();
        self.obstacles
            .iter()
            .any(|o| (o.pose.position() - p).norm() < o.radius + self.config.ego_radius)
    }

    /// One physics step: ego speed tracks the commanded target under the
    /// acceleration limit, the pose follows the held yaw rate, and moving
    /// obstacles advance along their lanes.
    pub fn step(&mut self) -> StepEvents {
        let dt = self.config.dt;
        let target = self.command.target_speed.clamp(0.0, self.config.v_max);
        let dv = (target - self.ego.speed)
            .clamp(-self.config.accel_limit * dt, self.config.accel_limit * dt);
        self.ego.speed = (self.ego.speed + dv).clamp(0.0, self.config.v_max);
        self.ego = step_vehicle(&self.ego, self.command.omega, dt);
        for o in &mut self.obstacles {
            o.advance(&self.track, dt);
        }
        self.steps += 1;
        self.time = self.steps as f64 * dt;
        let now = self.overlapping();
        let onset = now && !self.colliding;
        self.colliding = now;
        if onset {
            self.collisions += 1;
        }
        StepEvents {
            collision_onset: onset,
        }
    }
}
