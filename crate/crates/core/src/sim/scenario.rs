//! Scenario files: a track, the ego start, obstacles, and optional overrides.
//!
//! ```json
//! {
//!   "name": "fig5",
//!   "profile": "campus",
//!   "track": "straight",
//!   "ego": { "lane": 2, "s": 10.0, "speed": 2.0 },
//!   "obstacles": [ { "lane": 2, "s": 24.6, "speed": 0.0, "radius": 0.3 } ],
//!   "overrides": { "cruise_speed": 1.5 },
//!   "thresholds": { "detect": 20.0 }
//! }
//! ```
//!
//! `track` is a built-in name (`campus`, `gentle-curve`, `straight`,
//! `short-straight`), `{"file": "path.json"}` or `{"inline": {...}}`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::avoidance::Thresholds;
use crate::sim::track::{Track, TrackFile};
use crate::sim::vehicle::VehicleState;
use crate::sim::world::{Obstacle, World, WorldConfig};
use crate::sim::SimError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TrackRef {
    Builtin(String),
    File { file: PathBuf },
    Inline { inline: TrackFile },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EgoStart {
    pub lane: u8,
    pub s: f64,
    #[serde(default)]
    pub speed: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObstacleSpec {
    pub lane: u8,
    pub s: f64,
    #[serde(default)]
    pub speed: f64,
    #[serde(default = "default_obstacle_radius")]
    pub radius: f64,
}

fn default_obstacle_radius() -> f64 {
    0.3
}

fn default_profile() -> String {
    "campus".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    #[serde(default = "default_profile")]
    pub profile: String,
    pub track: TrackRef,
    pub ego: EgoStart,
    #[serde(default)]
    pub obstacles: Vec<ObstacleSpec>,
    /// Partial `WorldConfig` applied over the profile defaults.
    #[serde(default)]
    pub overrides: serde_json::Map<String, serde_json::Value>,
    #[serde(default)]
    pub thresholds: Option<Thresholds>,
    /// Directory that relative track file paths are resolved against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl Scenario {
    fn simple(name: &str, track: &str, lane: u8, s: f64) -> Self {
        Self {
            name: name.into(),
            profile: "campus".into(),
            track: TrackRef::Builtin(track.into()),
            ego: EgoStart {
                lane,
                s,
                speed: None,
            },
            obstacles: Vec::new(),
            overrides: Default::default(),
            thresholds: None,
            base_dir: None,
        }
    }

    pub const BUILTIN: [&'static str; 5] = [
        "campus",
        "gentle-curve",
        "straight",
        "short-straight",
        "fig5",
    ];

    /// Built-in scenarios:
    /// - `campus`: the 580 m three-lane training loop
    /// - `gentle-curve`: held-out loop with 60 m bends
    /// - `straight`: 1 km straight road
    /// - `short-straight`: 120 m straight road, tiny profile
    /// - `fig5`: static obstacle 14 m ahead, a moving car alongside in lane 1
    pub fn builtin(name: &str) -> Result<Self, SimError> {
        Ok(match name {
            "campus" => Self::simple("campus", "campus", 2, 0.0),
            "gentle-curve" => Self::simple("gentle-curve", "gentle-curve", 2, 0.0),
            "straight" => Self::simple("straight", "straight", 2, 10.0),
            "short-straight" => Self {
                profile: "tiny".into(),
                ..Self::simple("short-straight", "short-straight", 2, 5.0)
            },
            "fig5" => {
                let cfg = WorldConfig::campus();
                let ego_s = 10.0;
                let radius = 0.3;
                let mut s = Self::simple("fig5", "straight", 2, ego_s);
                s.obstacles = vec![
                    ObstacleSpec {
                        lane: 2,
                        s: ego_s + cfg.ego_radius + 14.0 + radius,
                        speed: 0.0,
                        radius,
                    },
                    ObstacleSpec {
                        lane: 1,
                        s: ego_s + 0.8,
                        speed: cfg.cruise_speed,
                        radius,
                    },
                ];
                s
            }
            other => {
                return Err(SimError::Scenario(format!(
                    "unknown built-in scenario `{other}`"
                )))
            }
        })
    }

    /// A built-in name or a path to a scenario JSON file.
    pub fn resolve(name_or_path: &str) -> Result<Self, SimError> {
        if Self::BUILTIN.contains(&name_or_path) {
            Self::builtin(name_or_path)
        } else {
            Self::load(Path::new(name_or_path))
        }
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Scenario(format!("cannot read {}: {e}", path.display())))?;
        let mut s: Scenario = serde_json::from_str(&text)?;
        s.base_dir = path.parent().map(Path::to_path_buf);
        Ok(s)
    }

    pub fn builtin_track(name: &str) -> Result<Track, SimError> {
        match name {
            "campus" => Ok(Track::campus()),
            "gentle-curve" => Ok(Track::gentle_curve()),
            "straight" => Track::straight(1000.0, 1.0),
            "short-straight" => Track::straight(120.0, 1.0),
            other => Err(SimError::Scenario(format!(
                "unknown built-in track `{other}`"
            ))),
        }
    }

    pub fn track(&self) -> Result<Track, SimError> {
        match &self.track {
            TrackRef::Builtin(name) => Self::builtin_track(name),
            TrackRef::File { file } => {
                let path = match (&self.base_dir, file.is_relative()) {
                    (Some(dir), true) => dir.join(file),
                    _ => file.clone(),
                };
                Track::load(&path)
            }
            TrackRef::Inline { inline } => Track::from_file(inline),
        }
    }

    pub fn world_config(&self) -> Result<WorldConfig, SimError> {
        let base = WorldConfig::from_profile(&self.profile)?;
        if self.overrides.is_empty() {
            return Ok(base);
        }
        let mut value = serde_json::to_value(base)?;
        let obj = value
            .as_object_mut()
            .expect("config serializes to an object");
        for (k, v) in &self.overrides {
            if !obj.contains_key(k) {
                return Err(SimError::Scenario(format!("unknown override `{k}`")));
            }
            obj.insert(k.clone(), v.clone());
        }
        let cfg: WorldConfig = serde_json::from_value(value)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn thresholds(&self, cfg: &WorldConfig) -> Thresholds {
        self.thresholds
            .clone()
            .unwrap_or_else(|| Thresholds::from_world(cfg))
    }

    /// Builds the initial world.
    pub fn build(&self) -> Result<World, SimError> {
        let cfg = self.world_config()?;
        let track = self.track()?;
        Track::check_lane(self.ego.lane)?;
        let ego = VehicleState {
            pose: track.lane_pose(self.ego.lane, self.ego.s),
            speed: self
                .ego
                .speed
                .unwrap_or(cfg.cruise_speed)
                .clamp(0.0, cfg.v_max),
            steering: 0.0,
        };
        let obstacles = self
            .obstacles
            .iter()
            .map(|o| Obstacle::on_lane(&track, o.lane, o.s, o.speed, o.radius))
            .collect::<Result<Vec<_>, _>>()?;
        World::new(cfg, track, ego, obstacles)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_build() {
        for name in Scenario::BUILTIN {
            let s = Scenario::builtin(name).unwrap();
            let w = s.build().unwrap();
            assert_eq!(w.track.lane_count(), 3);
        }
        assert!(Scenario::builtin("nope").is_err());
    }

    #[test]
    fn json_roundtrip_with_overrides() {
        let text = r#"{
            "name": "custom",
            "track": {"inline": {"points": [[0,0],[50,0]], "lane_width": 1.0}},
            "ego": {"lane": 3, "s": 2.0},
            "obstacles": [{"lane": 1, "s": 20.0}],
            "overrides": {"cruise_speed": 1.5},
            "thresholds": {"detect": 15.0}
        }"#;
        let s: Scenario = serde_json::from_str(text).unwrap();
        let w = s.build().unwrap();
        assert_eq!(w.config.cruise_speed, 1.5);
        assert_eq!(w.ego.speed, 1.5);
        assert_eq!(w.obstacles[0].radius, 0.3);
        assert!((w.ego.pose.y + 1.0).abs() < 1e-12);
        let th = s.thresholds(&w.config);
        assert_eq!(th.detect, 15.0);
        assert_eq!(th.lane_clear, 20.0);
    }

    #[test]
    fn unknown_override_rejected() {
        let mut s = Scenario::builtin("straight").unwrap();
        s.overrides.insert("warp".into(), serde_json::json!(9));
        assert!(s.build().is_err());
    }

    #[test]
    fn track_file_resolved_relative_to_scenario() {
        let dir = tempfile::tempdir().unwrap();
        let track = Track::straight(80.0, 1.0).unwrap().to_file();
        std::fs::write(
            dir.path().join("t.json"),
            serde_json::to_string(&track).unwrap(),
        )
        .unwrap();
        let scen = r#"{"name":"f","track":{"file":"t.json"},"ego":{"lane":2,"s":1.0}}"#;
        let path = dir.path().join("s.json");
        std::fs::write(&path, scen).unwrap();
        let w = Scenario::resolve(path.to_str().unwrap())
            .unwrap()
            .build()
            .unwrap();
        assert_eq!(w.track.length(), 80.0);
    }
}
