use std::collections::BTreeMap;

use crate::rng::SplitMix64;
use crate::Split;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SplitError {
    #[error("nothing to split")]
    Empty,
    #[error("split ratios must be non-negative and sum to 1 (got {0:?})")]
    Ratios(Vec<f64>),
    #[error("duplicate id `{0}`")]
    Duplicate(String),
}

const TIE: f64 = 1e-9;

/// Largest-remainder apportionment of `n` seats over `ratios`.
///
/// Remainders within 1e-9 of each other count as tied, and ties go to the
/// later-listed share, so 774 at 8:1:1 gives 619/77/78.
pub fn apportion(n: usize, ratios: &[f64]) -> Result<Vec<usize>, SplitError> {
    let sum: f64 = ratios.iter().sum();
    if ratios.is_empty() || ratios.iter().any(|r| !r.is_finite() || *r < 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(SplitError::Ratios(ratios.to_vec()));
    }
    let quotas: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut seats: Vec<usize> = quotas.iter().map(|q| (q + TIE).floor() as usize).collect();
    let mut remainders: Vec<Option<f64>> = quotas
        .iter()
        .zip(&seats)
        .map(|(q, s)| Some((q - *s as f64).max(0.0)))
        .collect();
    let mut left = n.saturating_sub(seats.iter().sum());
    while left > 0 {
        let mut best: Option<(usize, f64)> = None;
        for (i, r) in remainders.iter().enumerate() {
            let Some(r) = *r else { continue };
            best = match best {
                Some((_, b)) if r < b - TIE => best,
                Some((_, b)) if r <= b + TIE => Some((i, b.max(r))),
                _ => Some((i, r)),
            };
        }
        let (i, _) = best.expect("fewer leftover seats than shares");
        seats[i] += 1;
        remainders[i] = None;
        left -= 1;
    }
    Ok(seats)
}

/// Assigns each id to train / valid / test in proportion to `ratios`.
///
/// Ids are sorted before a seeded Fisher-Yates shuffle, so the assignment
/// depends only on the id set and the seed.
pub fn split_by_ratio(
    ids: &[String],
    ratios: [f64; 3],
    seed: u64,
) -> Result<BTreeMap<String, Split>, SplitError> {
    if ids.is_empty() {
        return Err(SplitError::Empty);
    }
    let mut sorted = ids.to_vec();
    sorted.sort();
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(SplitError::Duplicate(w[0].clone()));
    }
    let sizes = apportion(sorted.len(), &ratios)?;
    SplitMix64::new(seed).shuffle(&mut sorted);
    let mut out = BTreeMap::new();
    let mut it = sorted.into_iter();
    for (split, size) in Split::ALL.into_iter().zip(sizes) {
        for id in it.by_ref().take(size) {
            out.insert(id, split);
        }
    }
    Ok(out)
}
