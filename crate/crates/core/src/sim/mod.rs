//! Deterministic 2D driving world.

mod camera;
mod expert;
mod geometry;
mod scenario;
mod sensor;
mod track;
mod vehicle;
mod world;

pub use camera::{
    column_lateral, pixel_size, render_camera, row_forward, CameraFrame, BACKGROUND_VALUE,
    LINE_VALUE, OBSTACLE_VALUE,
};
pub use expert::expert_steering;
pub use geometry::{wrap_angle, Pose, Vec2};
pub use scenario::{EgoStart, ObstacleSpec, Scenario, TrackRef};
pub use sensor::{
    hit_point, ray_circle, sense_zones, zone_rays, zone_reading, Zone, ZoneReadings, MIN_READING,
};
pub use track::{Projection, Track, TrackBuilder, TrackFile, LANE_COUNT};
pub use vehicle::{steering_to_omega, step_vehicle, VehicleState};
pub use world::{ActuatorCommand, Obstacle, StepEvents, World, WorldConfig};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid track: {0}")]
    Track(String),
    #[error("invalid lane index {0}, expected 1..=3")]
    Lane(u8),
    #[error("off track: {0}")]
    OffTrack(String),
    #[error("invalid world configuration: {0}")]
    Config(String),
    #[error("image error: {0}")]
    Image(String),
    #[error("scenario error: {0}")]
    Scenario(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
