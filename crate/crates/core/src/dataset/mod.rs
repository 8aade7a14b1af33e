//! Training data: timestamp pairing, the 80/20 split, minibatching, synthetic
//! generation and the on-disk dataset directory.
//!
//! A dataset directory holds `frames/%06d.pgm`, `log.csv`
//! (`timestamp_us,frame_file,steering_rad,speed_mps`) and `manifest.json`.

mod pairing;
mod split;
mod synth;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use pairing::{
    pair_by_timestamp, ImageRecord, PairingResult, SteeringRecord, DEFAULT_MAX_SKEW_US,
};
pub use split::{batch_iter, split_80_20, MIN_SPLIT_SAMPLES};
pub use synth::{generate_synthetic, AugmentSpec, SynthConfig};

use crate::sim::{CameraFrame, SimError};
use crate::tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("invalid dataset configuration: {0}")]
    Config(String),
    #[error("{0} is not sorted by timestamp")]
    Unsorted(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("too few samples: have {have}, need at least {need}")]
    TooFew { have: usize, need: usize },
    #[error("invalid dataset: {0}")]
    Format(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One row of `log.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplePair {
    pub timestamp_us: u64,
    pub frame_file: String,
    pub steering_rad: f64,
    #[serde(default)]
    pub speed_mps: f64,
}

/// An in-memory training sample, frame already scaled to [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub timestamp_us: u64,
    pub frame: Tensor,
    pub steering: f32,
    pub speed: f32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Ingested,
    Synthetic,
    /// Recorded from a human driving the simulator.
    Teleop,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub height: usize,
    pub width: usize,
    pub count: usize,
    pub provenance: Provenance,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub scenario: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub samples: Vec<SamplePair>,
    /// Parallel to `samples`.
    pub frames: Vec<CameraFrame>,
}

const MAX_STEERING: f64 = std::f64::consts::FRAC_PI_2;

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.samples.len() != self.frames.len() || self.manifest.count != self.samples.len() {
            return Err(DatasetError::Format(format!(
                "manifest count {}, {} log rows, {} frames",
                self.manifest.count,
                self.samples.len(),
                self.frames.len()
            )));
        }
        if self
            .samples
            .windows(2)
            .any(|w| w[0].timestamp_us > w[1].timestamp_us)
        {
            return Err(DatasetError::Unsorted("log.csv".into()));
        }
        for (s, f) in self.samples.iter().zip(&self.frames) {
            if !s.steering_rad.is_finite() || s.steering_rad.abs() > MAX_STEERING {
                return Err(DatasetError::Format(format!(
                    "steering {} at {} us out of range",
                    s.steering_rad, s.timestamp_us
                )));
            }
            if (f.height, f.width) != (self.manifest.height, self.manifest.width) {
                return Err(DatasetError::Format(format!(
                    "{} is {}x{}, expected {}x{}",
                    s.frame_file, f.height, f.width, self.manifest.height, self.manifest.width
                )));
            }
        }
        Ok(())
    }

    pub fn to_samples(&self) -> Vec<Sample> {
        self.samples
            .iter()
            .zip(&self.frames)
            .map(|(s, f)| Sample {
                timestamp_us: s.timestamp_us,
                frame: f.to_tensor(),
                steering: s.steering_rad as f32,
                speed: s.speed_mps as f32,
            })
            .collect()
    }

    /// Writes the dataset directory. Frame files are written under the names
    /// given in the log.
    pub fn write_dir(&self, dir: &Path) -> Result<(), DatasetError> {
        self.validate()?;
        std::fs::create_dir_all(dir.join("frames"))?;
        for (s, f) in self.samples.iter().zip(&self.frames) {
            let path = dir.join(&s.frame_file);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(path, f.to_pgm())?;
        }
        let mut w = csv::Writer::from_path(dir.join("log.csv"))?;
        for s in &self.samples {
            w.serialize(s)?;
        }
        w.flush()?;
        std::fs::write(
            dir.join("manifest.json"),
            serde_json::to_string_pretty(&self.manifest)?,
        )?;
        Ok(())
    }

    /// Loads a dataset directory. A missing `manifest.json` is tolerated and
    /// treated as an ingested dataset sized by its first frame.
    pub fn load_dir(dir: &Path) -> Result<Self, DatasetError> {
        let samples = read_log(&dir.join("log.csv"))?;
        if samples.is_empty() {
            return Err(DatasetError::Empty(format!("{}/log.csv", dir.display())));
        }
        let frames = samples
            .iter()
            .map(|s| read_frame(&dir.join(&s.frame_file)))
            .collect::<Result<Vec<_>, _>>()?;
        let manifest_path = dir.join("manifest.json");
        let manifest = if manifest_path.exists() {
            serde_json::from_str(&std::fs::read_to_string(manifest_path)?)?
        } else {
            DatasetManifest {
                height: frames[0].height,
                width: frames[0].width,
                count: samples.len(),
                provenance: Provenance::Ingested,
                seed: None,
                scenario: None,
            }
        };
        let d = Self {
            manifest,
            samples,
            frames,
        };
        d.validate()?;
        Ok(d)
    }
}

fn read_frame(path: &Path) -> Result<CameraFrame, DatasetError> {
    let bytes = std::fs::read(path)
        .map_err(|e| DatasetError::Format(format!("cannot read frame {}: {e}", path.display())))?;
    Ok(CameraFrame::from_pgm(&bytes)?)
}

fn read_log(path: &Path) -> Result<Vec<SamplePair>, DatasetError> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .map(|row| row.map_err(DatasetError::from))
        .collect()
}

/// Builds a dataset from an external recording: `images.csv`
/// (`timestamp_us,frame_file`, paths relative to `dir`) and `steering.csv`
/// (`timestamp_us,steering_rad[,speed_mps]`).
pub fn ingest_logs(dir: &Path, max_skew_us: u64) -> Result<(Dataset, usize), DatasetError> {
    let images: Vec<ImageRecord> = csv::Reader::from_path(dir.join("images.csv"))?
        .deserialize()
        .collect::<Result<_, _>>()?;
    let steering: Vec<SteeringRecord> = csv::Reader::from_path(dir.join("steering.csv"))?
        .deserialize()
        .collect::<Result<_, _>>()?;
    let PairingResult { pairs, dropped } = pair_by_timestamp(&images, &steering, max_skew_us)?;
    if pairs.is_empty() {
        return Err(DatasetError::Empty(
            "no image paired within the skew limit".into(),
        ));
    }
    let mut frames = Vec::with_capacity(pairs.len());
    let mut samples = Vec::with_capacity(pairs.len());
    for (i, p) in pairs.into_iter().enumerate() {
        frames.push(read_frame(&dir.join(&p.frame_file))?);
        samples.push(SamplePair {
            frame_file: format!("frames/{i:06}.pgm"),
            ..p
        });
    }
    let d = Dataset {
        manifest: DatasetManifest {
            height: frames[0].height,
            width: frames[0].width,
            count: samples.len(),
            provenance: Provenance::Ingested,
            seed: None,
            scenario: None,
        },
        samples,
        frames,
    };
    d.validate()?;
    Ok((d, dropped))
}
