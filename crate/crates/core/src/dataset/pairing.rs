use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetError, SamplePair};

/// Half the 10 Hz sensor period.
pub const DEFAULT_MAX_SKEW_US: u64 = 50_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub timestamp_us: u64,
    pub frame_file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteeringRecord {
    pub timestamp_us: u64,
    pub steering_rad: f64,
    #[serde(default)]
    pub speed_mps: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairingResult {
    pub pairs: Vec<SamplePair>,
    /// Images with no steering record within the allowed skew.
    pub dropped: usize,
}

fn check_sorted<T>(items: &[T], ts: impl Fn(&T) -> u64, what: &str) -> Result<(), DatasetError> {
    if items.windows(2).any(|w| ts(&w[0]) > ts(&w[1])) {
        return Err(DatasetError::Unsorted(what.to_string()));
    }
    Ok(())
}

/// Pairs every image with the steering record nearest in time. On an exact
/// tie the earlier record wins. Images whose nearest record is further than
/// `max_skew_us` away are dropped and counted.
pub fn pair_by_timestamp(
    images: &[ImageRecord],
    steering: &[SteeringRecord],
    max_skew_us: u64,
) -> Result<PairingResult, DatasetError> {
    if images.is_empty() || steering.is_empty() {
        return Err(DatasetError::Empty("image or steering log is empty".into()));
    }
    check_sorted(images, |r| r.timestamp_us, "image log")?;
    check_sorted(steering, |r| r.timestamp_us, "steering log")?;

    let mut pairs = Vec::with_capacity(images.len());
    let mut dropped = 0;
    for img in images {
        let t = img.timestamp_us;
        // first record at or after t
        let after = steering.partition_point(|r| r.timestamp_us < t);
        let mut best: Option<(&SteeringRecord, u64)> = None;
        if after > 0 {
            let r = &steering[after - 1];
            best = Some((r, t - r.timestamp_us));
        }
        if let Some(r) = steering.get(after) {
            let skew = r.timestamp_us - t;
            if best.is_none_or(|(_, b)| skew < b) {
                best = Some((r, skew));
            }
        }
        match best {
            Some((r, skew)) if skew <= max_skew_us => pairs.push(SamplePair {
                timestamp_us: t,
                frame_file: img.frame_file.clone(),
                steering_rad: r.steering_rad,
                speed_mps: r.speed_mps,
            }),
            _ => dropped += 1,
        }
    }
    Ok(PairingResult { pairs, dropped })
}
