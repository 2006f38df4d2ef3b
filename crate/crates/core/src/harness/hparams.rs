use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Validation scores `scores[config][size][sample]`, each in `[0, 100]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigScoreTable {
    pub scores: Vec<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HpSelection {
    pub best: usize,
    /// Per-configuration mean of size-normalized scores.
    pub normalized_means: Vec<f64>,
}

impl ConfigScoreTable {
    fn validate(&self) -> Result<(usize, usize)> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        let Some(first) = self.scores.first() else {
            return bad("score table has no configurations".into());
        };
        let sizes = first.len();
        let samples = first.first().map_or(0, Vec::len);
        if sizes == 0 || samples == 0 {
            return bad("score table has no sizes or samples".into());
        }
        for (i, per_size) in self.scores.iter().enumerate() {
            if per_size.len() != sizes || per_size.iter().any(|s| s.len() != samples) {
                return bad(format!("configuration {i} does not have {sizes}x{samples} scores"));
            }
            if let Some(v) = per_size.iter().flatten().find(|v| !(0.0..=100.0).contains(*v)) {
                return bad(format!("score {v} of configuration {i} is outside [0, 100]"));
            }
        }
        Ok((sizes, samples))
    }
}

/// Picks the configuration with the best average performance across
/// training-set sizes, where each size's averaged score is first divided by
/// the best averaged score any configuration reached at that size. Ties go
/// to the smallest index.
pub fn select_hyperparameters(table: &ConfigScoreTable) -> Result<HpSelection> {
    let (sizes, samples) = table.validate()?;
    let averaged: Vec<Vec<f64>> = table
        .scores
        .iter()
        .map(|per_size| {
            per_size
                .iter()
                .map(|s| s.iter().sum::<f64>() / samples as f64)
                .collect()
        })
        .collect();
    let mut best_at = vec![f64::NEG_INFINITY; sizes];
    for row in &averaged {
        for (n, &v) in row.iter().enumerate() {
            best_at[n] = best_at[n].max(v);
        }
    }
    if let Some(n) = best_at.iter().position(|&m| m <= 0.0) {
        return Err(Error::NormalizationUndefined(n));
    }
    let normalized_means: Vec<f64> = averaged
        .iter()
        .map(|row| row.iter().zip(&best_at).map(|(v, m)| v / m).sum::<f64>() / sizes as f64)
        .collect();
    let best = normalized_means
        .iter()
        .enumerate()
        .fold(0, |b, (i, &v)| if v > normalized_means[b] { i } else { b });
    Ok(HpSelection { best, normalized_means })
}
