use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::DatasetError;

/// Splits items per class into train and test parts of proportion
/// `train_fraction`, shuffling each class with `seed`. Every class keeps at
/// least one item on each side. Output follows class order, then shuffled
/// order within the class.
pub fn stratified_split<T: Clone>(
    items: &[T],
    label_of: impl Fn(&T) -> &str,
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>), DatasetError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DatasetError::InvalidFraction(train_fraction));
    }
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, item) in items.iter().enumerate() {
        by_class.entry(label_of(item)).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (label, mut idx) in by_class {
        if idx.len() < 2 {
            return Err(DatasetError::ClassTooSmall {
                label: label.to_string(),
                clips: idx.len(),
            });
        }
        idx.shuffle(&mut rng);
        let n_train = ((idx.len() as f64 * train_fraction).round() as usize).clamp(1, idx.len() - 1);
        train.extend(idx[..n_train].iter().map(|&i| items[i].clone()));
        test.extend(idx[n_train..].iter().map(|&i| items[i].clone()));
    }
    Ok((train, test))
}
