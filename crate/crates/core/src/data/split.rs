use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Dataset;
use crate::error::{Error, Result};

/// Splits `total` into integer parts proportional to `weights` by largest
/// remainder, so every part is within 1 of its exact share. Ties go to the
/// lower index.
pub fn apportion(total: usize, weights: &[usize]) -> Vec<usize> {
    let sum: usize = weights.iter().sum();
    if sum == 0 {
        return vec![0; weights.len()];
    }
    let mut parts: Vec<usize> = weights.iter().map(|&w| total * w / sum).collect();
    let mut rem: Vec<(usize, usize)> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| (total * w % sum, i))
        .collect();
    rem.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let assigned: usize = parts.iter().sum();
    for &(_, i) in rem.iter().take(total - assigned) {
        parts[i] += 1;
    }
    parts
}

/// Draws `train_n + val_n` samples after a seeded shuffle and returns them as
/// a new dataset whose first `train_n` samples form the training split.
///
/// With `stratified`, each class contributes to both splits in proportion to
/// its frequency (within one sample).
pub fn subset_and_split(
    dataset: &Dataset,
    train_n: usize,
    val_n: usize,
    seed: u64,
    stratified: bool,
) -> Result<Dataset> {
    let n = dataset.len();
    if train_n + val_n > n {
        return Err(Error::invalid(
            "subset_and_split",
            format!("requested {train_n} + {val_n} samples but only {n} are available"),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, val) = if stratified {
        let mut by_class = vec![Vec::new(); dataset.num_classes];
        for (i, &l) in dataset.labels.iter().enumerate() {
            by_class[l].push(i);
        }
        let counts: Vec<usize> = by_class.iter().map(Vec::len).collect();
        let tq = apportion(train_n, &counts);
        let mut vq = apportion(val_n, &counts);
        rebalance(&counts, &tq, &mut vq);
        let (mut train, mut val) = (Vec::new(), Vec::new());
        for (c, idx) in by_class.iter_mut().enumerate() {
            idx.shuffle(&mut rng);
            train.extend_from_slice(&idx[..tq[c]]);
            val.extend_from_slice(&idx[tq[c]..tq[c] + vq[c]]);
        }
        val.shuffle(&mut rng);
        (train, val)
    } else {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        (idx[..train_n].to_vec(), idx[train_n..train_n + val_n].to_vec())
    };
    train.shuffle(&mut rng);

    let order: Vec<usize> = train.iter().chain(&val).copied().collect();
    let (x, y) = dataset.select(&order)?;
    Dataset::with_split(
        x,
        y,
        dataset.num_classes,
        (0..train_n).collect(),
        (train_n..train_n + val_n).collect(),
    )
}

/// Moves validation quota away from classes where both quotas together exceed
/// the class size.
fn rebalance(counts: &[usize], train: &[usize], val: &mut [usize]) {
    let mut excess = 0;
    for c in 0..counts.len() {
        let over = (train[c] + val[c]).saturating_sub(counts[c]);
        val[c] -= over;
        excess += over;
    }
    for c in 0..counts.len() {
        if excess == 0 {
            break;
        }
        let room = counts[c] - train[c] - val[c];
        let give = room.min(excess);
        val[c] += give;
        excess -= give;
    }
}
