//! Three-zone ultrasonic sensing by ray casting against obstacle disks.

use serde::{Deserialize, Serialize};

use crate::sim::geometry::{Pose, Vec2};
use crate::sim::world::{Obstacle, WorldConfig};

/// Smallest reading reported when a ray starts inside an obstacle.
pub const MIN_READING: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZoneReadings {
    pub left: f64,
    pub center: f64,
    pub right: f64,
    /// Simulation time of the reading, s.
    pub timestamp: f64,
    /// Ray angle of the nearest center hit, degrees, positive to the left.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center_bearing_deg: Option<i32>,
}

impl ZoneReadings {
    pub fn clear(range: f64, timestamp: f64) -> Self {
        Self {
            left: range,
            center: range,
            right: range,
            timestamp,
            center_bearing_deg: None,
        }
    }

    /// Left and right swapped.
    pub fn mirrored(&self) -> Self {
        Self {
            left: self.right,
            right: self.left,
            center_bearing_deg: self.center_bearing_deg.map(|d| -d),
            ..*self
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Zone {
    Left,
    Center,
    Right,
}

/// Ray angles in whole degrees relative to the heading. The center zone owns
/// its edges.
pub fn zone_rays(cfg: &WorldConfig, zone: Zone) -> std::ops::RangeInclusive<i32> {
    let (c, s) = (cfg.center_half_angle_deg, cfg.side_outer_angle_deg);
    match zone {
        Zone::Center => -c..=c,
        Zone::Left => (c + 1)..=s,
        Zone::Right => -s..=-(c + 1),
    }
}

/// Distance along a unit ray from `origin` to the first hit on a disk.
pub fn ray_circle(origin: Vec2, dir: Vec2, center: Vec2, radius: f64) -> Option<f64> {
    let oc = origin - center;
    let c = oc.dot(oc) - radius * radius;
    if c <= 0.0 {
        return Some(0.0);
    }
    let b = oc.dot(dir);
    if b >= 0.0 {
        return None;
    }
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    Some(-b - disc.sqrt())
}

/// Nearest hit in `zone` among the hits whose point `accept` keeps.
pub fn zone_reading(
    pose: &Pose,
    obstacles: &[Obstacle],
    cfg: &WorldConfig,
    zone: Zone,
    accept: impl Fn(Vec2) -> bool,
) -> (f64, Option<i32>) {
    let mut best = cfg.sensor_range;
    let mut bearing = None;
    for deg in zone_rays(cfg, zone) {
        let a = pose.heading + (deg as f64).to_radians();
        let dir = Vec2::from_angle(a);
        let origin = pose.position() + dir.scale(cfg.ego_radius);
        for o in obstacles {
            if let Some(t) = ray_circle(origin, dir, o.pose.position(), o.radius) {
                if t < best && accept(origin + dir.scale(t)) {
                    best = t;
                    bearing = Some(deg);
                }
            }
        }
    }
    (best.clamp(MIN_READING, cfg.sensor_range), bearing)
}

/// Where a center reading hit, given the pose it was taken from.
pub fn hit_point(pose: &Pose, cfg: &WorldConfig, distance: f64, bearing_deg: i32) -> Vec2 {
    let dir = Vec2::from_angle(pose.heading + (bearing_deg as f64).to_radians());
    pose.position() + dir.scale(cfg.ego_radius + distance)
}

/// Rays are cast at 1° steps from the vehicle periphery. Each zone reports
/// the nearest hit, or the sensor range when clear.
pub fn sense_zones(
    pose: &Pose,
    obstacles: &[Obstacle],
    cfg: &WorldConfig,
    timestamp: f64,
) -> ZoneReadings {
    let (center, center_bearing_deg) = zone_reading(pose, obstacles, cfg, Zone::Center, |_| true);
    ZoneReadings {
        left: zone_reading(pose, obstacles, cfg, Zone::Left, |_| true).0,
        center,
        right: zone_reading(pose, obstacles, cfg, Zone::Right, |_| true).0,
        timestamp,
        center_bearing_deg,
    }
}
