use serde::Serialize;

use super::EvalError;

fn check(scores: &[f64], labels: &[bool]) -> Result<(usize, usize), EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::Length { scores: scores.len(), labels: labels.len() });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(EvalError::NaN);
    }
    let pos = labels.iter().filter(|&&l| l).count();
    Ok((pos, labels.len() - pos))
}

fn check_both_classes(scores: &[f64], labels: &[bool]) -> Result<(usize, usize), EvalError> {
    let (pos, neg) = check(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(EvalError::DegenerateLabels { positives: pos, negatives: neg });
    }
    Ok((pos, neg))
}

/// Score groups in descending order: (score, positives, negatives) per distinct score.
fn tie_groups(scores: &[f64], labels: &[bool]) -> Vec<(f64, usize, usize)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]));
    let mut out: Vec<(f64, usize, usize)> = Vec::new();
    for i in order {
        // -0.0 and 0.0 are one threshold.
        match out.last_mut() {
            Some(g) if g.0 == scores[i] => {
                if labels[i] { g.1 += 1 } else { g.2 += 1 }
            }
            _ => out.push((scores[i], labels[i] as usize, !labels[i] as usize)),
        }
    }
    out
}

/// Area under the ROC curve, trapezoidal over tie groups (ties count one half).
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    let (pos, neg) = check_both_classes(scores, labels)?;
    let mut area = 0.0;
    let mut tp = 0usize;
    for (_, p, n) in tie_groups(scores, labels) {
        area += n as f64 * (tp as f64 + p as f64 / 2.0);
        tp += p;
    }
    Ok(area / (pos as f64 * neg as f64))
}

/// Area under the precision-recall curve with step-wise interpolation: Σ ΔRecall · Precision over
/// descending thresholds.
pub fn pr_auc(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    let (pos, _) = check_both_classes(scores, labels)?;
    let (mut tp, mut selected, mut area) = (0usize, 0usize, 0.0);
    for (_, p, n) in tie_groups(scores, labels) {
        tp += p;
        selected += p + n;
        area += p as f64 / pos as f64 * (tp as f64 / selected as f64);
    }
    Ok(area)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OperatingPoint {
    /// Columns with score ≥ threshold are selected; `+inf` selects nothing.
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub selected: usize,
}

/// The highest threshold whose selection reaches `recall_floor`, and the precision there.
pub fn precision_at_high_recall(scores: &[f64], labels: &[bool], recall_floor: f64) -> Result<OperatingPoint, EvalError> {
    let (pos, _) = check(scores, labels)?;
    if pos == 0 {
        return Err(EvalError::DegenerateLabels { positives: 0, negatives: labels.len() });
    }
    let mut point = OperatingPoint { threshold: f64::INFINITY, precision: 1.0, recall: 0.0, selected: 0 };
    if point.recall >= recall_floor {
        return Ok(point);
    }
    let mut tp = 0usize;
    for (score, p, n) in tie_groups(scores, labels) {
        tp += p;
        point = OperatingPoint {
            threshold: score,
            precision: tp as f64 / (point.selected + p + n) as f64,
            recall: tp as f64 / pos as f64,
            selected: point.selected + p + n,
        };
        if point.recall >= recall_floor {
            return Ok(point);
        }
    }
    Err(EvalError::RecallUnreachable { floor: recall_floor, at_all_selected: point })
}
