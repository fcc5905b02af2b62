//! Skewed synthetic traffic for exercising the router.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// `draws` samples from `queries` with probability proportional to
/// `1 / rankˢ`, rank being the 1-based position in `queries`.
pub fn zipf_workload<S: AsRef<str>>(queries: &[S], draws: usize, exponent: f64, seed: u64) -> Result<Vec<String>> {
    if queries.is_empty() {
        return Err(Error::NoData("workload needs at least one query"));
    }
    if !(exponent >= 0.0 && exponent.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "zipf exponent must be >= 0, got {exponent}"
        )));
    }
    let weights = (1..=queries.len()).map(|rank| (rank as f64).powf(-exponent));
    let dist = WeightedIndex::new(weights).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..draws)
        .map(|_| queries[dist.sample(&mut rng)].as_ref().to_string())
        .collect())
}

/// Share of `log` taken by its `head` most frequent distinct queries.
pub fn head_volume_share<S: AsRef<str>>(log: &[S], head: usize) -> f64 {
    let table = super::build_frequency_table(log);
    if table.total() == 0 {
        return 0.0;
    }
    let covered: u64 = table.ranked().iter().take(head).map(|&(_, c)| c).sum();
    covered as f64 / table.total() as f64
}
