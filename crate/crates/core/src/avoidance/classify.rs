use serde::{Deserialize, Serialize};

use crate::avoidance::Thresholds;

/// One center-zone reading with the ego speed at the same tick.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reading {
    pub center: f64,
    pub ego_speed: f64,
    pub timestamp: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObstacleKind {
    None,
    Static,
    Moving,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObstacleEstimate {
    pub kind: ObstacleKind,
    /// Estimated obstacle speed along the ego heading, m/s.
    pub speed: f64,
    pub distance: f64,
    /// Something is in range but there were too few readings to estimate a
    /// closing rate.
    pub insufficient_history: bool,
}

impl ObstacleEstimate {
    pub fn none(range: f64) -> Self {
        Self {
            kind: ObstacleKind::None,
            speed: 0.0,
            distance: range,
            insufficient_history: false,
        }
    }
}

/// Closing rate over the last `history_window` readings. Readings at the
/// sensor range are not part of the obstacle's track, so only the trailing
/// run of in-range readings is used. The obstacle speed is the mean ego
/// speed minus the closing rate.
pub fn classify_obstacle(history: &[Reading], th: &Thresholds) -> ObstacleEstimate {
    let Some(newest) = history.last() else {
        return ObstacleEstimate {
            insufficient_history: true,
            ..ObstacleEstimate::none(th.sensor_range)
        };
    };
    if newest.center >= th.detect {
        return ObstacleEstimate::none(th.sensor_range);
    }
    let window = &history[history.len().saturating_sub(th.history_window)..];
    let seen = window
        .iter()
        .rev()
        .take_while(|r| r.center < th.sensor_range)
        .count();
    let run = &window[window.len() - seen..];
    if run.len() < 2 {
        return ObstacleEstimate {
            insufficient_history: true,
            ..ObstacleEstimate::none(th.sensor_range)
        };
    }
    let (first, last) = (run[0], run[run.len() - 1]);
    let dt = last.timestamp - first.timestamp;
    if !(dt > 0.0) {
        return ObstacleEstimate {
            insufficient_history: true,
            ..ObstacleEstimate::none(th.sensor_range)
        };
    }
    let closing = (first.center - last.center) / dt;
    let ego = run.iter().map(|r| r.ego_speed).sum::<f64>() / run.len() as f64;
    let speed = ego - closing;
    let kind = if speed.abs() < th.static_epsilon {
        ObstacleKind::Static
    } else {
        ObstacleKind::Moving
    };
    ObstacleEstimate {
        kind,
        speed,
        distance: last.center,
        insufficient_history: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn readings(centers: &[f64], ego: f64) -> Vec<Reading> {
        centers
            .iter()
            .enumerate()
            .map(|(i, &c)| Reading {
                center: c,
                ego_speed: ego,
                timestamp: i as f64 * 0.1,
            })
            .collect()
    }

    #[test]
    fn constant_distance_is_co_moving() {
        let e = classify_obstacle(&readings(&[15.0; 5], 2.0), &Thresholds::default());
        assert_eq!(e.kind, ObstacleKind::Moving);
        assert!((e.speed - 2.0).abs() < 1e-12);
        assert_eq!(e.distance, 15.0);
    }

    #[test]
    fn closing_at_ego_speed_is_static() {
        let r = readings(&[15.8, 15.6, 15.4, 15.2, 15.0], 2.0);
        let e = classify_obstacle(&r, &Thresholds::default());
        assert_eq!(e.kind, ObstacleKind::Static);
        assert!(e.speed.abs() < 1e-9);
    }

    #[test]
    fn out_of_range_is_none() {
        let th = Thresholds::default();
        let e = classify_obstacle(&readings(&[30.0; 5], 2.0), &th);
        assert_eq!(e.kind, ObstacleKind::None);
        assert_eq!(e.distance, th.sensor_range);
        assert!(!e.insufficient_history);
        // beyond D but inside R is still nothing to act on
        assert_eq!(
            classify_obstacle(&readings(&[25.0; 5], 2.0), &th).kind,
            ObstacleKind::None
        );
    }

    #[test]
    fn short_history_is_flagged() {
        let th = Thresholds::default();
        for r in [
            readings(&[14.0], 2.0),
            readings(&[30.0, 30.0, 14.0], 2.0),
            vec![],
        ] {
            let e = classify_obstacle(&r, &th);
            assert_eq!(e.kind, ObstacleKind::None);
            assert!(e.insufficient_history);
            assert_eq!(e.distance, th.sensor_range);
        }
    }

    #[test]
    fn only_the_window_counts() {
        // an old jump outside the 5-reading window must not matter
        let r = readings(&[5.0, 5.0, 15.0, 15.0, 15.0, 15.0, 15.0], 1.2);
        let e = classify_obstacle(&r, &Thresholds::default());
        assert!((e.speed - 1.2).abs() < 1e-12);
    }
}
