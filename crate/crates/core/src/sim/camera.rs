//! Bird's-eye camera: a window ahead of the vehicle rasterized in the body
//! frame. Row 0 is the far edge; column 0 is the left edge.

use crate::sim::geometry::{Pose, Vec2};
use crate::sim::track::Track;
use crate::sim::world::{Obstacle, WorldConfig};
use crate::sim::SimError;
use crate::tensor::Tensor;

pub const LINE_VALUE: u8 = 255;
pub const OBSTACLE_VALUE: u8 = 128;
pub const BACKGROUND_VALUE: u8 = 0;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CameraFrame {
    pub height: usize,
    pub width: usize,
    /// Row-major grayscale.
    pub pixels: Vec<u8>,
}

impl CameraFrame {
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    /// `[1, H, W]` tensor scaled to [0, 1].
    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(
            &[1, self.height, self.width],
            self.pixels.iter().map(|&p| p as f32 / 255.0).collect(),
        )
        .expect("frame dimensions are positive")
    }

    pub fn mirrored(&self) -> Self {
        let mut pixels = Vec::with_capacity(self.pixels.len());
        for row in self.pixels.chunks_exact(self.width) {
            pixels.extend(row.iter().rev());
        }
        Self { pixels, ..*self }
    }

    /// Binary PGM (P5, maxval 255).
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn from_pgm(bytes: &[u8]) -> Result<Self, SimError> {
        let bad = |m: &str| SimError::Image(m.to_string());
        let mut pos = 0;
        let mut tokens = Vec::with_capacity(4);
        while tokens.len() < 4 {
            while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
                if bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    pos += 1;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated PGM header"));
            }
            tokens.push(
                std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ascii header"))?,
            );
        }
        if tokens[0] != "P5" {
            return Err(bad("not a binary PGM (P5)"));
        }
        let parse = |t: &str| t.parse::<usize>().map_err(|_| bad("bad PGM dimension"));
        let (width, height, maxval) = (parse(tokens[1])?, parse(tokens[2])?, parse(tokens[3])?);
        if maxval != 255 {
            return Err(bad("only maxval 255 is supported"));
        }
        // single whitespace byte after maxval
        pos += 1;
        let n = width * height;
        if width == 0 || height == 0 || bytes.len() < pos + n {
            return Err(bad("PGM pixel data truncated"));
        }
        Ok(Self {
            height,
            width,
            pixels: bytes[pos..pos + n].to_vec(),
        })
    }
}

/// Meters per pixel along (forward, lateral).
pub fn pixel_size(cfg: &WorldConfig, height: usize, width: usize) -> (f64, f64) {
    (
        cfg.camera_ahead_m / height as f64,
        cfg.camera_width_m / width as f64,
    )
}

/// Body-frame lateral coordinate (positive left) of a column center. Exactly
/// antisymmetric about the image center.
pub fn column_lateral(col: usize, width: usize, m_per_px: f64) -> f64 {
    (width as f64 - 1.0 - 2.0 * col as f64) * 0.5 * m_per_px
}

pub fn row_forward(row: usize, height: usize, m_per_px: f64) -> f64 {
    (height as f64 - 0.5 - row as f64) * m_per_px
}

pub fn render_camera(
    pose: &Pose,
    track: &Track,
    obstacles: &[Obstacle],
    cfg: &WorldConfig,
    height: usize,
    width: usize,
) -> CameraFrame {
    let (fwd_px, lat_px) = pixel_size(cfg, height, width);
    let reach = cfg.camera_ahead_m.hypot(cfg.camera_width_m / 2.0) + track.half_width() + 1.0;
    let local = track.segments_near(pose.position(), reach);
    let boundaries = track.boundary_offsets();
    let half_line = cfg.line_width_m / 2.0;
    let near_obstacles: Vec<&Obstacle> = obstacles
        .iter()
        .filter(|o| (o.pose.position() - pose.position()).norm() <= reach + o.radius)
        .collect();

    let mut pixels = vec![BACKGROUND_VALUE; height * width];
    for row in 0..height {
        let forward = row_forward(row, height, fwd_px);
        for col in 0..width {
            let left = column_lateral(col, width, lat_px);
            let p: Vec2 = pose.to_world(forward, left);
            let px = &mut pixels[row * width + col];
            if near_obstacles
                .iter()
                .any(|o| (p - o.pose.position()).norm() <= o.radius)
            {
                *px = OBSTACLE_VALUE;
                continue;
            }
            if local.is_empty() {
                continue;
            }
            let lateral = track.project_among(p, local.iter().copied()).lateral;
            if boundaries.iter().any(|b| (lateral - b).abs() <= half_line) {
                *px = LINE_VALUE;
            }
        }
    }
    CameraFrame {
        height,
        width,
        pixels,
    }
}
