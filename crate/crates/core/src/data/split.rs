//! Source/validation/target splits with class-stratified validation holdout.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DataError, DomainDataset, Result};

#[derive(Clone, Debug)]
pub struct Split {
    pub train: Vec<DomainDataset>,
    /// Held out from the training domains, one part per domain.
    pub val: Vec<DomainDataset>,
    pub targets: Vec<DomainDataset>,
}

/// Per class, shuffles the indices and moves `round(n_c · val_frac)` of them
/// to validation.
fn holdout(d: &DomainDataset, val_frac: f64, rng: &mut ChaCha8Rng) -> (DomainDataset, DomainDataset) {
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for c in 0..d.class_count {
        let mut idx: Vec<usize> = (0..d.len()).filter(|&i| d.labels[i] == c).collect();
        idx.shuffle(rng);
        let k = (idx.len() as f64 * val_frac).round() as usize;
        val.extend_from_slice(&idx[..k]);
        train.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (d.subset(&train), d.subset(&val))
}

fn check(datasets: &[DomainDataset], id: usize) -> Result<()> {
    if datasets.len() < 2 {
        return Err(DataError::Invalid("splitting needs at least two domains".into()));
    }
    if id >= datasets.len() {
        return Err(DataError::UnknownDomain {
            id,
            count: datasets.len(),
        });
    }
    Ok(())
}

fn build(datasets: &[DomainDataset], sources: &[usize], val_frac: f64, seed: u64) -> Split {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for &s in sources {
        let (t, v) = holdout(&datasets[s], val_frac, &mut rng);
        train.push(t);
        val.push(v);
    }
    let targets = (0..datasets.len())
        .filter(|i| !sources.contains(i))
        .map(|i| datasets[i].clone())
        .collect();
    Split { train, val, targets }
}

/// Every domain except `target` trains; `target` is untouched.
pub fn split_leave_one_out(datasets: &[DomainDataset], target: usize, val_frac: f64, seed: u64) -> Result<Split> {
    check(datasets, target)?;
    let sources: Vec<usize> = (0..datasets.len()).filter(|&i| i != target).collect();
    Ok(build(datasets, &sources, val_frac, seed))
}

/// Only `source` trains; every other domain is a target.
pub fn split_single_source(datasets: &[DomainDataset], source: usize, val_frac: f64, seed: u64) -> Result<Split> {
    check(datasets, source)?;
    Ok(build(datasets, &[source], val_frac, seed))
}
