//! Fold averaging and majority voting.

use super::scores::ScoreMatrix;
use crate::error::{Error, Result};

/// Elementwise mean of score matrices covering the same segments, in the
/// row order of the first.
pub fn average_fold_scores(per_fold: &[ScoreMatrix]) -> Result<ScoreMatrix> {
    let first = per_fold.first().ok_or_else(|| Error::Config("no score files to average".into()))?;
    let aligned = per_fold.iter().map(|m| m.aligned_to(&first.ids)).collect::<Result<Vec<_>>>()?;
    let k = first.n_classes();
    if let Some(m) = aligned.iter().find(|m| m.n_classes() != k) {
        return Err(Error::Alignment(format!("{} has {} classes, expected {k}", m.system, m.n_classes())));
    }
    let n = aligned.len() as f64;
    let scores = (0..first.len())
        .map(|j| (0..k).map(|c| aligned.iter().map(|m| m.scores[j][c]).sum::<f64>() / n).collect())
        .collect();
    ScoreMatrix::new("average", first.ids.clone(), scores)
}

/// Most voted class per segment. Ties go to the tied class with the
/// higher fallback score, then to the lower class index.
pub fn majority_vote(predictions: &[Vec<usize>], fallback: &ScoreMatrix) -> Result<Vec<usize>> {
    if predictions.is_empty() {
        return Err(Error::Config("no predictions to vote on".into()));
    }
    let k = fallback.n_classes();
    for (i, p) in predictions.iter().enumerate() {
        if p.len() != fallback.len() {
            return Err(Error::Alignment(format!(
                "prediction list {i} has {} segments, fallback scores {}",
                p.len(),
                fallback.len()
            )));
        }
        if let Some(&c) = p.iter().find(|&&c| c >= k) {
            return Err(Error::Input(format!("prediction list {i} names class {c} of {k}")));
        }
    }
    Ok((0..fallback.len())
        .map(|j| {
            let mut votes = vec![0usize; k];
            for p in predictions {
                votes[p[j]] += 1;
            }
            let score = &fallback.scores[j];
            (0..k).fold(0, |best, c| {
                let better = votes[c] > votes[best] || (votes[c] == votes[best] && score[c] > score[best]);
                if better {
                    c
                } else {
                    best
                }
            })
        })
        .collect())
}

/// Majority vote over systems' own arg-max predictions, aligned by id to
/// the fallback.
pub fn vote_systems(systems: &[ScoreMatrix], fallback: &ScoreMatrix) -> Result<Vec<usize>> {
    let preds =
        systems.iter().map(|s| s.aligned_to(&fallback.ids).map(|m| m.predictions())).collect::<Result<Vec<_>>>()?;
    majority_vote(&preds, fallback)
}
