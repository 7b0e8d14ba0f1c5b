use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::steiner::rank_order;

/// How many columns to keep from a score table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    TopK(usize),
    /// Fraction in (0, 1]; rounds up, so any non-empty table keeps at least one column.
    TopPercent(f64),
    /// Keeps every column scoring at or above the value.
    Threshold(f64),
}

impl Selection {
    pub fn validate(&self) -> Result<(), EvalError> {
        match *self {
            Selection::TopK(0) => Err(EvalError::Selection("top-k must be at least 1".into())),
            Selection::TopPercent(p) if !(p > 0.0 && p <= 1.0) => {
                Err(EvalError::Selection(format!("top-percent must lie in (0, 1], got {p}")))
            }
            Selection::Threshold(t) if t.is_nan() => Err(EvalError::Selection("threshold is NaN".into())),
            _ => Ok(()),
        }
    }

    /// Selected indices in rank order (descending score, ties by index).
    pub fn apply(&self, scores: &[f64]) -> Vec<usize> {
        let order = rank_order(scores);
        let k = match *self {
            Selection::TopK(k) => k,
            Selection::TopPercent(p) => ((p * scores.len() as f64).ceil() as usize).min(scores.len()),
            Selection::Threshold(t) => order.iter().take_while(|&&i| scores[i] >= t).count(),
        };
        order.into_iter().take(k).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision/recall/F1 of a selection. Empty selection: precision 1. No relevant columns:
/// recall 1. F1 is 0 when precision and recall are both 0.
pub fn prf(selected: &[usize], labels: &[bool]) -> Prf {
    let relevant = labels.iter().filter(|&&l| l).count();
    let hit = selected.iter().filter(|&&i| labels[i]).count();
    let precision = if selected.is_empty() { 1.0 } else { hit as f64 / selected.len() as f64 };
    let recall = if relevant == 0 { 1.0 } else { hit as f64 / relevant as f64 };
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    Prf { precision, recall, f1 }
}
