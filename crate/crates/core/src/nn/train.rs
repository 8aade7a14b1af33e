use std::io::Write;
use std::path::Path;

use log::{debug, info};
use serde::{Deserialize, Serialize};

use crate::dataset::{batch_iter, Sample};
use crate::nn::network::{Gradients, Network};
use crate::nn::NnError;

/// Samples per gradient chunk. Chunks are the unit of parallel work; the
/// reduction always walks chunks in index order, so the result does not depend
/// on how many threads ran them.
pub const GRAD_CHUNK: usize = 10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Parallelism {
    Sequential,
    /// Rayon over gradient chunks. Falls back to sequential when the
    /// `parallel` feature is off.
    #[default]
    Parallel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f32,
    pub seed: u64,
    #[serde(default)]
    pub parallelism: Parallelism,
}

impl TrainConfig {
    /// Batch 100, 30 epochs, with the learning rate of the given profile.
    pub fn for_profile(profile: &str, seed: u64) -> Self {
        let learning_rate = if profile == "tiny" { 5e-2 } else { 1e-3 };
        Self {
            batch_size: 100,
            epochs: 30,
            learning_rate,
            seed,
            parallelism: Parallelism::default(),
        }
    }

    fn validate(&self) -> Result<(), NnError> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(NnError::Config("batch_size and epochs must be >= 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(NnError::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
}

/// Per-epoch losses. Row 0 holds the losses of the untrained network.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossCurve {
    pub epochs: Vec<EpochLoss>,
}

impl LossCurve {
    pub fn initial(&self) -> Option<&EpochLoss> {
        self.epochs.first()
    }

    pub fn last(&self) -> Option<&EpochLoss> {
        self.epochs.last()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_mse,val_mse\n");
        for e in &self.epochs {
            s.push_str(&format!("{},{},{}\n", e.epoch, e.train_mse, e.val_mse));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv().as_bytes())
    }
}

struct ChunkResult {
    grads: Gradients,
    sq_err: f64,
}

fn chunk_gradients(
    net: &Network,
    samples: &[Sample],
    indices: &[usize],
    batch_len: usize,
) -> Result<ChunkResult, NnError> {
    let mut grads = Gradients::zeros_like(net);
    let mut sq_err = 0.0;
    for &i in indices {
        let s = &samples[i];
        let trace = net.forward_trace(&s.frame)?;
        let diff = trace.prediction() - s.steering;
        sq_err += (diff as f64) * (diff as f64);
        let (g, _) = net.backward(&trace, 2.0 * diff / batch_len as f32)?;
        grads.accumulate(&g);
    }
    Ok(ChunkResult { grads, sq_err })
}

fn map_chunks<R, F>(indices: &[usize], mode: Parallelism, f: F) -> Result<Vec<R>, NnError>
where
    R: Send,
    F: Fn(&[usize]) -> Result<R, NnError> + Sync + Send,
{
    match mode {
        #[cfg(feature = "parallel")]
        Parallelism::Parallel => {
            use rayon::prelude::*;
            indices.par_chunks(GRAD_CHUNK).map(f).collect()
        }
        _ => indices.chunks(GRAD_CHUNK).map(f).collect(),
    }
}

/// Batch-mean gradient and summed squared error for the given samples.
pub fn batch_gradients(
    net: &Network,
    samples: &[Sample],
    batch: &[usize],
    mode: Parallelism,
) -> Result<(Gradients, f64), NnError> {
    let chunks = map_chunks(batch, mode, |c| {
        chunk_gradients(net, samples, c, batch.len())
    })?;
    let mut total = Gradients::zeros_like(net);
    let mut sq_err = 0.0;
    for c in &chunks {
        total.accumulate(&c.grads);
        sq_err += c.sq_err;
    }
    Ok((total, sq_err))
}

/// Mean squared prediction error over `samples`, accumulated in f64.
pub fn evaluate_mse(net: &Network, samples: &[Sample], mode: Parallelism) -> Result<f64, NnError> {
    if samples.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    let idx: Vec<usize> = (0..samples.len()).collect();
    let partial = map_chunks(&idx, mode, |c| {
        c.iter().try_fold(0.0f64, |acc, &i| {
            let p = net.predict(&samples[i].frame)?;
            let d = (p - samples[i].steering) as f64;
            Ok(acc + d * d)
        })
    })?;
    Ok(partial.iter().sum::<f64>() / samples.len() as f64)
}

/// Plain minibatch SGD. Each epoch visits the training set in a permutation
/// derived from `(cfg.seed, epoch)`; a short final batch is averaged over its
/// actual size.
pub fn train(
    mut net: Network,
    train_set: &[Sample],
    val_set: &[Sample],
    cfg: &TrainConfig,
) -> Result<(Network, LossCurve), NnError> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    let mut curve = LossCurve::default();
    curve.epochs.push(EpochLoss {
        epoch: 0,
        train_mse: evaluate_mse(&net, train_set, cfg.parallelism)?,
        val_mse: evaluate_mse(&net, val_set, cfg.parallelism)?,
    });

    for epoch in 1..=cfg.epochs {
        let mut sq_err = 0.0;
        for (b, batch) in batch_iter(train_set.len(), cfg.batch_size, epoch as u64, cfg.seed)
            .into_iter()
            .enumerate()
        {
            let (grads, err) = batch_gradients(&net, train_set, &batch, cfg.parallelism)?;
            if !err.is_finite() || !grads.is_finite() {
                return Err(NnError::Diverged { epoch, batch: b });
            }
            sq_err += err;
            net.apply_gradients(&grads, cfg.learning_rate);
        }
        let train_mse = sq_err / train_set.len() as f64;
        let val_mse = evaluate_mse(&net, val_set, cfg.parallelism)?;
        if !val_mse.is_finite() || !net.is_finite() {
            return Err(NnError::Diverged { epoch, batch: 0 });
        }
        debug!("epoch {epoch}: train {train_mse:.6} val {val_mse:.6}");
        curve.epochs.push(EpochLoss {
            epoch,
            train_mse,
            val_mse,
        });
    }
    if let (Some(first), Some(last)) = (curve.initial(), curve.last()) {
        info!(
            "trained {} epochs: val mse {:.6} -> {:.6}",
            cfg.epochs, first.val_mse, last.val_mse
        );
    }
    Ok((net, curve))
}
