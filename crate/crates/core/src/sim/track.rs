//! Piecewise-linear track with three parallel lanes.
//!
//! The centerline runs down the middle of lane 2. Lane 1 is to the left of
//! the direction of travel, lane 3 to the right.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::sim::geometry::{Pose, Vec2};
use crate::sim::SimError;

pub const LANE_COUNT: usize = 3;

/// Maximum chord length used when discretizing arcs.
const ARC_STEP_M: f64 = 1.0;

/// On-disk track description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackFile {
    pub points: Vec<[f64; 2]>,
    #[serde(default = "default_lane_width")]
    pub lane_width: f64,
    #[serde(default = "default_lane_count")]
    pub lane_count: usize,
    #[serde(default)]
    pub closed: bool,
    /// Declared length; checked against the polyline when present.
    #[serde(default)]
    pub length: Option<f64>,
}

fn default_lane_width() -> f64 {
    1.0
}

fn default_lane_count() -> usize {
    LANE_COUNT
}

#[derive(Clone, Debug, PartialEq)]
pub struct Track {
    points: Vec<Vec2>,
    /// Arc length at the start of each segment, plus the total at the end.
    cumulative: Vec<f64>,
    closed: bool,
    lane_width: f64,
}

/// Closest point on the centerline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub segment: usize,
    /// Arc length of the closest point.
    pub s: f64,
    /// Signed lateral offset from the centerline, positive to the left.
    pub lateral: f64,
    /// Direction of travel at the closest point.
    pub heading: f64,
    /// Projection fell before the start or past the end of an open track.
    pub beyond_ends: bool,
}

impl Track {
    pub fn new(points: Vec<Vec2>, closed: bool, lane_width: f64) -> Result<Self, SimError> {
        let mut points = points;
        if closed && points.len() > 2 {
            let (a, b) = (points[0], *points.last().unwrap());
            if (a - b).norm() < 1e-9 {
                points.pop();
            }
        }
        if points.len() < 2 {
            return Err(SimError::Track("need at least two points".into()));
        }
        if !(lane_width.is_finite() && lane_width > 0.0) {
            return Err(SimError::Track(format!("bad lane width {lane_width}")));
        }
        let n_seg = if closed {
            points.len()
        } else {
            points.len() - 1
        };
        let mut cumulative = Vec::with_capacity(n_seg + 1);
        let mut acc = 0.0;
        cumulative.push(0.0);
        for i in 0..n_seg {
            let len = (points[(i + 1) % points.len()] - points[i]).norm();
            if !(len > 1e-9) {
                return Err(SimError::Track(format!("degenerate segment {i}")));
            }
            acc += len;
            cumulative.push(acc);
        }
        Ok(Self {
            points,
            cumulative,
            closed,
            lane_width,
        })
    }

    pub fn from_file(file: &TrackFile) -> Result<Self, SimError> {
        if file.lane_count != LANE_COUNT {
            return Err(SimError::Track(format!(
                "lane_count must be {LANE_COUNT}, got {}",
                file.lane_count
            )));
        }
        let pts = file.points.iter().map(|p| Vec2::new(p[0], p[1])).collect();
        let track = Self::new(pts, file.closed, file.lane_width)?;
        if let Some(declared) = file.length {
            if (declared - track.length()).abs() > 1e-6 {
                return Err(SimError::Track(format!(
                    "declared length {declared} but polyline is {}",
                    track.length()
                )));
            }
        }
        Ok(track)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)?;
        let file: TrackFile = serde_json::from_str(&text)?;
        Self::from_file(&file)
    }

    pub fn to_file(&self) -> TrackFile {
        TrackFile {
            points: self.points.iter().map(|p| [p.x, p.y]).collect(),
            lane_width: self.lane_width,
            lane_count: LANE_COUNT,
            closed: self.closed,
            length: Some(self.length()),
        }
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn lane_width(&self) -> f64 {
        self.lane_width
    }

    pub fn lane_count(&self) -> usize {
        LANE_COUNT
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    pub fn segment_count(&self) -> usize {
        self.cumulative.len() - 1
    }

    pub fn segment(&self, i: usize) -> (Vec2, Vec2) {
        (self.points[i], self.points[(i + 1) % self.points.len()])
    }

    /// Lateral offset of a lane center from the centerline.
    pub fn lane_offset(&self, lane: u8) -> f64 {
        (2.0 - lane as f64) * self.lane_width
    }

    /// Lateral offsets of the lane boundary lines.
    pub fn boundary_offsets(&self) -> [f64; LANE_COUNT + 1] {
        let w = self.lane_width;
        [1.5 * w, 0.5 * w, -0.5 * w, -1.5 * w]
    }

    /// Half the drivable width.
    pub fn half_width(&self) -> f64 {
        1.5 * self.lane_width
    }

    pub fn check_lane(lane: u8) -> Result<(), SimError> {
        if (1..=LANE_COUNT as u8).contains(&lane) {
            Ok(())
        } else {
            Err(SimError::Lane(lane))
        }
    }

    fn segment_projection(&self, i: usize, p: Vec2) -> (f64, f64, f64, bool) {
        let (a, b) = self.segment(i);
        let d = b - a;
        let len2 = d.dot(d);
        let raw = (p - a).dot(d) / len2;
        let t = raw.clamp(0.0, 1.0);
        let foot = a + d.scale(t);
        let dist = (p - foot).norm();
        let side = d.cross(p - a);
        let signed = if side < 0.0 { -dist } else { dist };
        let outside = (!self.closed)
            && ((i == 0 && raw < 0.0) || (i + 1 == self.segment_count() && raw > 1.0));
        (t, dist, signed, outside)
    }

    fn projection_on(&self, i: usize, p: Vec2) -> (f64, Projection) {
        let (t, dist, signed, outside) = self.segment_projection(i, p);
        let (a, b) = self.segment(i);
        let seg_len = self.cumulative[i + 1] - self.cumulative[i];
        let d = b - a;
        (
            dist,
            Projection {
                segment: i,
                s: self.cumulative[i] + t * seg_len,
                lateral: signed,
                heading: d.y.atan2(d.x),
                beyond_ends: outside,
            },
        )
    }

    /// Nearest point over all segments. Ties go to the lower segment index.
    pub fn project(&self, p: Vec2) -> Projection {
        self.project_among(p, 0..self.segment_count())
    }

    pub fn project_among(&self, p: Vec2, segments: impl IntoIterator<Item = usize>) -> Projection {
        let mut best: Option<(f64, Projection)> = None;
        for i in segments {
            let cand = self.projection_on(i, p);
            if best.as_ref().is_none_or(|(d, _)| cand.0 < *d) {
                best = Some(cand);
            }
        }
        best.expect("at least one segment").1
    }

    /// Segments with any point within `radius` of `center`.
    pub fn segments_near(&self, center: Vec2, radius: f64) -> Vec<usize> {
        (0..self.segment_count())
            .filter(|&i| self.segment_projection(i, center).1 <= radius)
            .collect()
    }

    /// Wraps (closed) or clamps (open) an arc length onto the track.
    pub fn normalize_s(&self, s: f64) -> f64 {
        let len = self.length();
        if self.closed {
            s.rem_euclid(len)
        } else {
            s.clamp(0.0, len)
        }
    }

    /// Point at arc length `s`, shifted `offset` to the left, and the
    /// direction of travel there.
    pub fn point_at(&self, s: f64, offset: f64) -> (Vec2, f64) {
        let s = self.normalize_s(s);
        let i = match self
            .cumulative
            .binary_search_by(|c| c.partial_cmp(&s).unwrap())
        {
            Ok(i) => i.min(self.segment_count() - 1),
            Err(i) => i.saturating_sub(1).min(self.segment_count() - 1),
        };
        let (a, b) = self.segment(i);
        let d = b - a;
        let len = self.cumulative[i + 1] - self.cumulative[i];
        let t = (s - self.cumulative[i]) / len;
        let dir = d.scale(1.0 / len);
        let p = a + d.scale(t) + dir.left_normal().scale(offset);
        (p, d.y.atan2(d.x))
    }

    /// Pose on a lane center at arc length `s`, facing the direction of travel.
    pub fn lane_pose(&self, lane: u8, s: f64) -> Pose {
        let (p, h) = self.point_at(s, self.lane_offset(lane));
        Pose::new(p.x, p.y, h)
    }

    /// Signed lateral distance from the center of `lane`, positive to the
    /// left of the direction of travel.
    pub fn cross_track_error(&self, pose: &Pose, lane: u8) -> Result<f64, SimError> {
        Self::check_lane(lane)?;
        let proj = self.project(pose.position());
        if proj.beyond_ends {
            return Err(SimError::OffTrack(format!(
                "({:.2}, {:.2}) is beyond the track ends",
                pose.x, pose.y
            )));
        }
        Ok(proj.lateral - self.lane_offset(lane))
    }

    pub fn straight(length: f64, lane_width: f64) -> Result<Self, SimError> {
        Self::new(
            vec![Vec2::new(0.0, 0.0), Vec2::new(length, 0.0)],
            false,
            lane_width,
        )
    }

    /// 580 m closed loop: two 40 m radius semicircles, one plain straight and
    /// one straight with an S-shaped bump (left 20°, right 40°, left 20°).
    pub fn campus() -> Self {
        let r = 40.0;
        let bump = 20f64.to_radians();
        let semi = arc_polyline_length(r, PI);
        let bump_len = 2.0 * arc_polyline_length(r, bump) + arc_polyline_length(r, 2.0 * bump);
        let chord = 4.0 * r * bump.sin();
        let straight = (580.0 - 2.0 * semi - bump_len + chord) / 2.0;
        let side = (straight - chord) / 2.0;
        let mut b = TrackBuilder::new();
        b.straight(side);
        b.arc(r, bump);
        b.arc(r, -2.0 * bump);
        b.arc(r, bump);
        b.straight(side);
        b.arc(r, PI);
        b.straight(straight);
        b.arc(r, PI);
        b.finish(true, 1.0).expect("campus track is valid")
    }

    /// Held-out evaluation loop with wider 60 m bends and a right-first S-bump.
    pub fn gentle_curve() -> Self {
        let r = 60.0;
        let bump = 12f64.to_radians();
        let chord = 4.0 * r * bump.sin();
        let straight = 160.0;
        let side = (straight - chord) / 2.0;
        let mut b = TrackBuilder::new();
        b.straight(straight);
        b.arc(r, PI);
        b.straight(side);
        b.arc(r, -bump);
        b.arc(r, 2.0 * bump);
        b.arc(r, -bump);
        b.straight(side);
        b.arc(r, PI);
        b.finish(true, 1.0).expect("gentle-curve track is valid")
    }
}

fn arc_pieces(radius: f64, angle: f64) -> usize {
    ((radius * angle.abs()) / ARC_STEP_M).ceil().max(1.0) as usize
}

/// Length of the chord polyline approximating an arc.
fn arc_polyline_length(radius: f64, angle: f64) -> f64 {
    let n = arc_pieces(radius, angle);
    n as f64 * 2.0 * radius * (angle.abs() / (2.0 * n as f64)).sin()
}

/// Builds a centerline from straights and arcs.
pub struct TrackBuilder {
    points: Vec<Vec2>,
    heading: f64,
}

impl Default for TrackBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl TrackBuilder {
    pub fn new() -> Self {
        Self {
            points: vec![Vec2::new(0.0, 0.0)],
            heading: 0.0,
        }
    }

    fn pos(&self) -> Vec2 {
        *self.points.last().unwrap()
    }

    pub fn straight(&mut self, length: f64) -> &mut Self {
        let p = self.pos() + Vec2::from_angle(self.heading).scale(length);
        self.points.push(p);
        self
    }

    /// Positive angle turns left.
    pub fn arc(&mut self, radius: f64, angle: f64) -> &mut Self {
        let n = arc_pieces(radius, angle);
        let side = angle.signum();
        let start = self.pos();
        let center = start
            + Vec2::from_angle(self.heading)
                .left_normal()
                .scale(side * radius);
        let start_angle = (start - center).y.atan2((start - center).x);
        for k in 1..=n {
            let a = start_angle + angle * k as f64 / n as f64;
            self.points.push(center + Vec2::from_angle(a).scale(radius));
        }
        self.heading += angle;
        self
    }

    pub fn finish(&self, closed: bool, lane_width: f64) -> Result<Track, SimError> {
        Track::new(self.points.clone(), closed, lane_width)
    }
}
