//! Judge-quality metrics.
//!
//! Every rate takes already-resolved predictions. `None` stands for a record
//! whose verdict could not be parsed; such records are scored as incorrect
//! (accuracy) or with the maximal distance 5.0 (error distance).

mod aggregate;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::datamodel::{Adherence, Preference, Score};

pub use aggregate::{aggregate, aggregate_with, AggregateOptions, GroupKey, Observation, ObservedValue};

/// Distance charged for an unparseable pointwise record.
pub const FAILED_DISTANCE: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("no records to score")]
    EmptyInput,
    #[error("runs cover different items")]
    MisalignedRuns,
    #[error("input lists differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("at least two pairs are needed")]
    TooShort,
    #[error("a constant list has no rank correlation")]
    DegenerateInput,
}

fn ratio(num: usize, den: usize) -> Result<f64, MetricError> {
    if den == 0 {
        Err(MetricError::EmptyInput)
    } else {
        Ok(num as f64 / den as f64)
    }
}

/// Share of records whose preference equals gold. Ties count as exact
/// matches; failed records count as wrong.
pub fn judgment_accuracy(records: &[(Option<Preference>, Preference)]) -> Result<f64, MetricError> {
    exact_match_accuracy(records)
}

/// Generic exact-match accuracy over optional predictions.
pub fn exact_match_accuracy<T: PartialEq>(records: &[(Option<T>, T)]) -> Result<f64, MetricError> {
    let hits = records
        .iter()
        .filter(|(p, g)| p.as_ref().is_some_and(|p| p == g))
        .count();
    ratio(hits, records.len())
}

/// Exact-match accuracy against an instruction-following gold annotation.
pub fn instruction_following_accuracy<T: PartialEq>(records: &[(Option<T>, T)]) -> Result<f64, MetricError> {
    exact_match_accuracy(records)
}

/// Mean absolute deviation from the gold score, charging
/// [`FAILED_DISTANCE`] for failed records.
pub fn error_distance(records: &[(Option<Score>, Score)]) -> Result<f64, MetricError> {
    if records.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let total: f64 = records
        .iter()
        .map(|(p, g)| match p {
            Some(p) => (f64::from(p.get()) - f64::from(g.get())).abs(),
            None => FAILED_DISTANCE,
        })
        .sum();
    Ok(total / records.len() as f64)
}

/// Share of items whose resolved preference differs between the two
/// presentation orders. A failed side counts as a change.
pub fn position_bias_rate<K: Ord>(
    ab: &[(K, Option<Preference>)],
    ba: &[(K, Option<Preference>)],
) -> Result<f64, MetricError> {
    let ab = index_run(ab)?;
    let ba = index_run(ba)?;
    if ab.len() != ba.len() || ab.keys().zip(ba.keys()).any(|(x, y)| x != y) {
        return Err(MetricError::MisalignedRuns);
    }
    let flips = ab
        .iter()
        .filter(|(k, p)| match (p, ba[*k]) {
            (Some(x), Some(y)) => *x != y,
            _ => true,
        })
        .count();
    ratio(flips, ab.len())
}

fn index_run<K: Ord>(run: &[(K, Option<Preference>)]) -> Result<BTreeMap<&K, Option<Preference>>, MetricError> {
    let mut m = BTreeMap::new();
    for (k, p) in run {
        if m.insert(k, *p).is_some() {
            return Err(MetricError::MisalignedRuns);
        }
    }
    Ok(m)
}

/// A pairwise record for the length-bias rate. Lengths are in characters,
/// in underlying order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LengthRecord {
    pub predicted: Option<Preference>,
    pub gold: Preference,
    pub len_a: usize,
    pub len_b: usize,
}

impl LengthRecord {
    fn eligible(&self) -> bool {
        self.gold != Preference::Tie && self.len_a != self.len_b
    }

    fn longer(&self) -> Preference {
        if self.len_a > self.len_b {
            Preference::ModelA
        } else {
            Preference::ModelB
        }
    }
}

/// Among records with a non-tie gold and unequal lengths, the share where
/// the judge chose wrongly and chose the longer response.
pub fn length_bias_rate(records: &[LengthRecord]) -> Result<f64, MetricError> {
    let eligible: Vec<&LengthRecord> = records.iter().filter(|r| r.eligible()).collect();
    let biased = eligible
        .iter()
        .filter(|r| r.predicted.is_some_and(|p| p != r.gold && p == r.longer()))
        .count();
    ratio(biased, eligible.len())
}

/// Share of records whose reply met the format contract without repair.
pub fn format_adherence_rate(records: &[Adherence]) -> Result<f64, MetricError> {
    let strict = records.iter().filter(|a| **a == Adherence::Strict).count();
    ratio(strict, records.len())
}

/// Mean of the position and length bias rates.
pub fn composite_bias(position_rate: f64, length_rate: f64) -> f64 {
    (position_rate + length_rate) / 2.0
}

/// 1-based ranks with ties sharing the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && values[idx[end]] == values[idx[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation: Pearson correlation of average ranks.
pub fn spearman_rho(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(MetricError::TooShort);
    }
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    let n = ra.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return Err(MetricError::DegenerateInput);
    }
    Ok((cov / (va * vb).sqrt()).clamp(-1.0, 1.0))
}
