use std::collections::BTreeMap;

use thiserror::Error;

use crate::model::{AggregatedScore, Verdict};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScoreError {
    #[error("no data for criterion {criterion}: all {n_excluded} verdicts were \"no opinion\"")]
    NoData { criterion: char, n_excluded: usize },
    #[error("score {0} outside 1..5")]
    OutOfRange(u8),
}

/// Map the 1..5 answer scale onto 1..4 with "no opinion" removed.
pub fn remap(score: u8) -> Result<Option<u8>, ScoreError> {
    match score {
        1 | 2 => Ok(Some(score)),
        3 => Ok(None),
        4 | 5 => Ok(Some(score - 1)),
        other => Err(ScoreError::OutOfRange(other)),
    }
}

/// Mean and population standard deviation after exclusion and remap.
pub fn aggregate_scores(criterion: char, scores: &[u8]) -> Result<AggregatedScore, ScoreError> {
    let mut used = Vec::with_capacity(scores.len());
    for &s in scores {
        if let Some(v) = remap(s)? {
            used.push(f64::from(v));
        }
    }
    let n_excluded = scores.len() - used.len();
    if used.is_empty() {
        return Err(ScoreError::NoData { criterion, n_excluded });
    }
    let n = used.len() as f64;
    let mean = used.iter().sum::<f64>() / n;
    let variance = used.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(AggregatedScore {
        criterion,
        mean,
        stddev: variance.sqrt(),
        n_used: used.len(),
        n_excluded,
    })
}

/// Aggregate per criterion, in letter order.
pub fn aggregate_all(verdicts: &[Verdict]) -> BTreeMap<char, Result<AggregatedScore, ScoreError>> {
    let mut by_criterion: BTreeMap<char, Vec<u8>> = BTreeMap::new();
    for v in verdicts {
        by_criterion.entry(v.criterion).or_default().push(v.raw_score);
    }
    by_criterion
        .into_iter()
        .map(|(c, scores)| (c, aggregate_scores(c, &scores)))
        .collect()
}
