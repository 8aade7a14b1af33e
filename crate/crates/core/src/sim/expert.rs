//! Scripted expert driver used to label synthetic data.

use crate::sim::geometry::Pose;
use crate::sim::track::Track;
use crate::sim::world::WorldConfig;
use crate::sim::SimError;

/// Pure pursuit toward the lane center `lookahead_m` of arc length past the
/// vehicle's projection: `steering = atan(2 L sin(alpha) / d)`, where `alpha`
/// is the bearing of the target point and `d` its distance. Clamped to
/// `+-expert_max_steer`.
pub fn expert_steering(
    pose: &Pose,
    track: &Track,
    lane: u8,
    cfg: &WorldConfig,
) -> Result<f64, SimError> {
    Track::check_lane(lane)?;
    let proj = track.project(pose.position());
    if proj.beyond_ends || proj.lateral.abs() > track.half_width() + track.lane_width() {
        return Err(SimError::OffTrack(format!(
            "expert cannot drive from ({:.2}, {:.2}), lateral {:.2} m",
            pose.x, pose.y, proj.lateral
        )));
    }
    let (target, _) = track.point_at(proj.s + cfg.lookahead_m, track.lane_offset(lane));
    let (fwd, left) = pose.to_body(target);
    let alpha = left.atan2(fwd);
    let dist = fwd.hypot(left);
    let steer = (2.0 * cfg.wheelbase * alpha.sin()).atan2(dist);
    Ok(steer.clamp(-cfg.expert_max_steer, cfg.expert_max_steer))
}
