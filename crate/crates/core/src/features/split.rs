use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::FeatureError;
use crate::config::SplitRatios;
use crate::intake::Dataset;

/// RNG stream reserved for split shuffling; training uses other streams.
pub(crate) const SPLIT_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    /// Partition of each dataset row, indexed by row.
    pub partition_of: Vec<Partition>,
    pub seed: u64,
}

impl SplitAssignment {
    pub fn rows_in(&self, p: Partition) -> impl Iterator<Item = usize> + '_ {
        self.partition_of
            .iter()
            .enumerate()
            .filter(move |(_, q)| **q == p)
            .map(|(i, _)| i)
    }
}

/// Splits `n` rows into (train, val, test) counts by the largest-remainder
/// method; equal remainders go to the earlier partition. Validation and test
/// each receive at least one row when `n >= 3`.
pub fn allocate(n: usize, ratios: &SplitRatios) -> [usize; 3] {
    let quotas = ratios.as_array().map(|r| r * n as f64);
    // tolerance keeps products like 50 * 0.7 from flooring to 34
    let mut counts = quotas.map(|q| ((q + 1e-9).floor() as usize).min(n));
    let assigned: usize = counts.iter().sum();
    let mut remaining = n.saturating_sub(assigned);
    let mut order = [0usize, 1, 2];
    let frac = |i: usize| (quotas[i] - counts[i] as f64).max(0.0);
    order.sort_by(|&a, &b| frac(b).partial_cmp(&frac(a)).unwrap().then(a.cmp(&b)));
    for &i in order.iter().cycle() {
        if remaining == 0 {
            break;
        }
        counts[i] += 1;
        remaining -= 1;
    }
    if n >= 3 {
        for i in [1, 2] {
            if counts[i] == 0 {
                let donor = (0..3).max_by_key(|&j| (counts[j], std::cmp::Reverse(j))).unwrap();
                counts[donor] -= 1;
                counts[i] += 1;
            }
        }
    }
    counts
}

/// Stratified, seed-deterministic train/val/test assignment over the rows
/// of `d`. Every row must carry a target value.
pub fn stratified_split(
    d: &Dataset,
    target: &str,
    ratios: &SplitRatios,
    seed: u64,
) -> Result<SplitAssignment, FeatureError> {
    let t = d
        .column_index(target)
        .ok_or_else(|| FeatureError::UnknownColumn(target.to_string()))?;
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, row) in d.rows().iter().enumerate() {
        let label = row[t].as_deref().ok_or(FeatureError::MissingTarget(i))?;
        by_class.entry(label).or_default().push(i);
    }
    if let Some((class, rows)) = by_class.iter().find(|(_, rows)| rows.len() < 3) {
        return Err(FeatureError::ClassTooSmall {
            class: class.to_string(),
            count: rows.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SPLIT_STREAM);
    let mut partition_of = vec![Partition::Train; d.row_count()];
    for rows in by_class.values_mut() {
        rows.shuffle(&mut rng);
        let [train, val, _] = allocate(rows.len(), ratios);
        for (k, &row) in rows.iter().enumerate() {
            partition_of[row] = if k < train {
                Partition::Train
            } else if k < train + val {
                Partition::Val
            } else {
                Partition::Test
            };
        }
    }
    Ok(SplitAssignment { partition_of, seed })
}
