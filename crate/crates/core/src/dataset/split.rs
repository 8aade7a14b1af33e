use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::DatasetError;

pub const MIN_SPLIT_SAMPLES: usize = 5;

/// Shuffled 80/20 split of `0..n`. The training side gets `floor(0.8 n)`
/// indices.
pub fn split_80_20(n: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>), DatasetError> {
    if n < MIN_SPLIT_SAMPLES {
        return Err(DatasetError::TooFew {
            have: n,
            need: MIN_SPLIT_SAMPLES,
        });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = n * 4 / 5;
    let val = idx.split_off(n_train);
    Ok((idx, val))
}

/// Shuffled minibatches of `0..n` for one epoch. The permutation depends only
/// on `(seed, epoch)`; the last batch may be short.
pub fn batch_iter(n: usize, batch_size: usize, epoch: u64, seed: u64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    idx.shuffle(&mut rng);
    idx.chunks(batch_size.max(1))
        .map(<[usize]>::to_vec)
        .collect()
}
