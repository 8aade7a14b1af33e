//! JSONL run logs and their replay digest.
//!
//! One `{"type":"tick",...}` line per control tick, then one
//! `{"type":"summary",...}` line. serde_json writes floats as the shortest
//! decimal that round-trips, so re-serializing a parsed log reproduces it
//! byte for byte.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::avoidance::SteeringPolicy;
use crate::eval::episode::{run_episode, EpisodeConfig, EvalMode, TickRecord};
use crate::eval::{compute_autonomy, AutonomyReport, EvalError, InterventionRecord, SafetyOracle};
use crate::sim::Scenario;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Which steering model drove, and the digest of its bytes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelRef {
    /// `file:<path>`, `init:<profile>:<seed>` or `expert`.
    pub source: String,
    pub digest: String,
}

impl ModelRef {
    pub fn from_bytes(source: impl Into<String>, bytes: &[u8]) -> Self {
        Self {
            source: source.into(),
            digest: format!("{:016x}", fnv1a64(bytes)),
        }
    }

    pub fn expert() -> Self {
        Self::from_bytes("expert", b"")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: Scenario,
    pub seed: u64,
    pub mode: EvalMode,
    pub model: ModelRef,
    pub duration_s: f64,
    pub start_jitter: (f64, f64),
    pub oracle: SafetyOracle,
    pub end_reason: String,
    pub interventions: Vec<InterventionRecord>,
    pub report: AutonomyReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum LogLine {
    Tick(TickRecord),
    Summary(RunSummary),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunLog {
    pub ticks: Vec<TickRecord>,
    pub summary: RunSummary,
}

impl RunLog {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for t in &self.ticks {
            out.push_str(
                &serde_json::to_string(&LogLine::Tick(t.clone())).expect("tick serializes"),
            );
            out.push('\n');
        }
        out.push_str(
            &serde_json::to_string(&LogLine::Summary(self.summary.clone()))
                .expect("summary serializes"),
        );
        out.push('\n');
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, EvalError> {
        let mut ticks = Vec::new();
        let mut summary = None;
        for (i, line) in text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
        {
            if summary.is_some() {
                return Err(EvalError::Format(format!(
                    "line {} follows the summary",
                    i + 1
                )));
            }
            match serde_json::from_str(line)? {
                LogLine::Tick(t) => ticks.push(t),
                LogLine::Summary(s) => summary = Some(s),
            }
        }
        let summary = summary.ok_or_else(|| EvalError::Format("missing summary line".into()))?;
        let log = Self { ticks, summary };
        log.validate()?;
        Ok(log)
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        Self::from_jsonl(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), EvalError> {
        std::fs::write(path, self.to_jsonl())?;
        Ok(())
    }

    /// Tick cadence, intervention bookkeeping and the report agree.
    pub fn validate(&self) -> Result<(), EvalError> {
        let period = self.summary.scenario.world_config()?.tick_period();
        for (i, t) in self.ticks.iter().enumerate() {
            if t.tick != i as u64 || t.time != i as f64 * period {
                return Err(EvalError::Format(format!("tick {i} is out of cadence")));
            }
        }
        let r = &self.summary.report;
        if r.interventions != self.summary.interventions.len() {
            return Err(EvalError::Format(
                "intervention count differs from the list".into(),
            ));
        }
        if r.elapsed_s != self.ticks.len() as f64 * period {
            return Err(EvalError::Format(
                "elapsed time differs from the tick count".into(),
            ));
        }
        if r.autonomy_percent != compute_autonomy(r.interventions, r.elapsed_s)? {
            return Err(EvalError::Format(
                "autonomy differs from the intervention count".into(),
            ));
        }
        Ok(())
    }

    /// `time_s,interventions,autonomy_percent` after every tick.
    pub fn autonomy_csv(&self) -> String {
        let period = self
            .summary
            .scenario
            .world_config()
            .map(|c| c.tick_period())
            .unwrap_or(0.1);
        let mut out = String::from("time_s,interventions,autonomy_percent\n");
        let mut n = 0;
        for t in &self.ticks {
            while n < self.summary.interventions.len()
                && self.summary.interventions[n].start_tick <= t.tick
            {
                n += 1;
            }
            let elapsed = (t.tick + 1) as f64 * period;
            let a = compute_autonomy(n, elapsed).expect("elapsed is positive");
            out.push_str(&format!("{elapsed},{n},{a}\n"));
        }
        out
    }
}

/// Hex digest of the canonical JSONL form.
pub fn replay_hash(log: &RunLog) -> String {
    format!("{:016x}", fnv1a64(log.to_jsonl().as_bytes()))
}

/// Re-runs the episode a log describes. Only oracle-mode logs can be
/// replayed; human input is not recorded.
pub fn replay(log: &RunLog, policy: &dyn SteeringPolicy) -> Result<RunLog, EvalError> {
    let s = &log.summary;
    if s.mode != EvalMode::Oracle {
        return Err(EvalError::Format(
            "only oracle-mode runs can be replayed".into(),
        ));
    }
    let cfg = EpisodeConfig {
        duration_s: s.duration_s,
        seed: s.seed,
        mode: s.mode,
        start_jitter: s.start_jitter,
        oracle: s.oracle.clone(),
    };
    run_episode(&s.scenario, policy, s.model.clone(), cfg)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayCheck {
    pub recorded: String,
    pub replayed: String,
}

impl ReplayCheck {
    pub fn matches(&self) -> bool {
        self.recorded == self.replayed
    }
}

pub fn verify_replay(log: &RunLog, policy: &dyn SteeringPolicy) -> Result<ReplayCheck, EvalError> {
    Ok(ReplayCheck {
        recorded: replay_hash(log),
        replayed: replay_hash(&replay(log, policy)?),
    })
}
