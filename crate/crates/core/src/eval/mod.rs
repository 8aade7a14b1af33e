//! Closed-loop evaluation: the autonomy metric, the automatic safety driver,
//! the episode runner and replayable run logs.

mod episode;
mod oracle;
mod runlog;

use serde::{Deserialize, Serialize};

pub use episode::{run_episode, Driver, Episode, EpisodeConfig, EvalMode, HumanEvent, TickRecord};
pub use oracle::SafetyOracle;
pub use runlog::{
    fnv1a64, replay, replay_hash, verify_replay, LogLine, ModelRef, ReplayCheck, RunLog, RunSummary,
};

use crate::avoidance::ControlError;
use crate::sim::SimError;

/// Seconds charged per intervention, whatever its real length.
pub const INTERVENTION_SECONDS: f64 = 5.0;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("elapsed time must be positive, got {0}")]
    Elapsed(f64),
    #[error("invalid run log: {0}")]
    Format(String),
    #[error("episode already finished")]
    Finished,
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `(1 - n * 5 / elapsed) * 100`. Negative when interventions outweigh the
/// elapsed time; that is reported as is.
pub fn compute_autonomy(n_interventions: usize, elapsed_s: f64) -> Result<f64, EvalError> {
    if !(elapsed_s > 0.0 && elapsed_s.is_finite()) {
        return Err(EvalError::Elapsed(elapsed_s));
    }
    let autonomy = (1.0 - n_interventions as f64 * INTERVENTION_SECONDS / elapsed_s) * 100.0;
    if autonomy < 0.0 {
        log::warn!(
            "autonomy {autonomy:.2}% is negative: {n_interventions} interventions in {elapsed_s} s"
        );
    }
    Ok(autonomy)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InterventionSource {
    Human,
    Oracle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterventionRecord {
    pub start_tick: u64,
    /// Simulation time, s.
    pub start_time: f64,
    /// Always `INTERVENTION_SECONDS`.
    pub duration: f64,
    pub source: InterventionSource,
    pub trigger: String,
    /// Real span of a human takeover, once it has ended.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actual_duration: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AutonomyReport {
    pub autonomy_percent: f64,
    pub interventions: usize,
    pub elapsed_s: f64,
    pub distance_m: f64,
    pub collisions: u32,
}

impl AutonomyReport {
    pub fn new(
        interventions: usize,
        elapsed_s: f64,
        distance_m: f64,
        collisions: u32,
    ) -> Result<Self, EvalError> {
        Ok(Self {
            autonomy_percent: compute_autonomy(interventions, elapsed_s)?,
            interventions,
            elapsed_s,
            distance_m,
            collisions,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn autonomy_values() {
        assert_eq!(compute_autonomy(0, 37.5).unwrap(), 100.0);
        assert_eq!(compute_autonomy(2, 100.0).unwrap(), 90.0);
        let a = compute_autonomy(27, 995.0).unwrap();
        assert!((a - 86.43).abs() < 0.005, "{a}");
        assert_eq!(compute_autonomy(3, 10.0).unwrap(), -50.0);
        assert!(compute_autonomy(1, 0.0).is_err());
        assert!(compute_autonomy(1, -1.0).is_err());
    }
}
