use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use super::metrics::{pr_auc, precision_at_high_recall, roc_auc, OperatingPoint};
use super::select::{prf, Prf, Selection};
use super::EvalError;
use crate::graph::FdGraph;
use crate::steiner::{close_terminals, TerminalSet};

/// One question: a score and a gold label per column of its database graph.
#[derive(Debug, Clone)]
pub struct EvalExample<'g> {
    pub id: String,
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
    pub graph: &'g FdGraph,
}

/// Selection closed under join connectivity, ascending. Empty stays empty.
pub fn steiner_select(selected: &[usize], graph: &FdGraph) -> Vec<usize> {
    if selected.is_empty() {
        return Vec::new();
    }
    let terminals = TerminalSet::new(selected.to_vec(), graph.node_count()).expect("selection indices are distinct nodes");
    close_terminals(graph, &terminals).nodes().collect()
}

/// Macro (per-question, then mean) metrics along one axis, with and without closure.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Curve {
    pub x: Vec<f64>,
    pub raw: Vec<Prf>,
    pub steiner: Vec<Prf>,
}

impl Curve {
    pub fn to_csv(&self, x_name: &str) -> String {
        let mut out = format!(
            "{x_name},raw_precision,raw_recall,raw_f1,steiner_precision,steiner_recall,steiner_f1\n"
        );
        for ((x, r), s) in self.x.iter().zip(&self.raw).zip(&self.steiner) {
            let _ = writeln!(
                out,
                "{x},{},{},{},{},{},{}",
                r.precision, r.recall, r.f1, s.precision, s.recall, s.f1
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct SweepCurves {
    pub threshold: Curve,
    pub top_k: Curve,
}

pub const DEFAULT_KS: std::ops::RangeInclusive<usize> = 2..=20;

/// `points` evenly spaced thresholds from the lowest to the highest pooled score.
pub fn threshold_grid(examples: &[EvalExample<'_>], points: usize) -> Vec<f64> {
    let (lo, hi) = examples
        .iter()
        .flat_map(|e| e.scores.iter().copied())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s), hi.max(s)));
    if !lo.is_finite() || points == 0 {
        return Vec::new();
    }
    if points == 1 || lo == hi {
        return vec![lo];
    }
    (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect()
}

fn macro_prf(rows: &[Vec<Prf>], j: usize) -> Prf {
    let n = rows.len() as f64;
    let sum = rows.iter().fold(Prf::default(), |acc, r| Prf {
        precision: acc.precision + r[j].precision,
        recall: acc.recall + r[j].recall,
        f1: acc.f1 + r[j].f1,
    });
    Prf { precision: sum.precision / n, recall: sum.recall / n, f1: sum.f1 / n }
}

fn curve(examples: &[EvalExample<'_>], selections: &[Selection], x: Vec<f64>) -> Curve {
    let per_example: Vec<(Vec<Prf>, Vec<Prf>)> = examples
        .par_iter()
        .map(|e| {
            selections
                .iter()
                .map(|sel| {
                    let raw = sel.apply(&e.scores);
                    (prf(&raw, &e.labels), prf(&steiner_select(&raw, e.graph), &e.labels))
                })
                .unzip()
        })
        .collect();
    let (raw, steiner): (Vec<Vec<Prf>>, Vec<Vec<Prf>>) = per_example.into_iter().unzip();
    Curve {
        raw: (0..x.len()).map(|j| macro_prf(&raw, j)).collect(),
        steiner: (0..x.len()).map(|j| macro_prf(&steiner, j)).collect(),
        x,
    }
}

/// Macro P/R/F1 against thresholds and against top-k, raw and closed.
pub fn sweep_metrics(
    examples: &[EvalExample<'_>],
    thresholds: &[f64],
    ks: impl IntoIterator<Item = usize>,
) -> Result<SweepCurves, EvalError> {
    if examples.is_empty() {
        return Err(EvalError::NoExamples);
    }
    for e in examples {
        if e.scores.len() != e.labels.len() || e.scores.len() != e.graph.node_count() {
            return Err(EvalError::Length { scores: e.scores.len(), labels: e.labels.len() });
        }
    }
    let ks: Vec<usize> = ks.into_iter().collect();
    let by_threshold: Vec<Selection> = thresholds.iter().map(|&t| Selection::Threshold(t)).collect();
    let by_k: Vec<Selection> = ks.iter().map(|&k| Selection::TopK(k)).collect();
    Ok(SweepCurves {
        threshold: curve(examples, &by_threshold, thresholds.to_vec()),
        top_k: curve(examples, &by_k, ks.iter().map(|&k| k as f64).collect()),
    })
}

/// Per-question summary line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExampleRecord {
    pub id: String,
    pub columns: usize,
    pub relevant: usize,
    /// Absent when the question's labels are all one class.
    pub roc_auc: Option<f64>,
    pub pr_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub examples: usize,
    /// Column-level, pooled over every (question, column) pair.
    pub roc_auc: f64,
    pub pr_auc: f64,
    pub recall_floor: f64,
    pub operating_point: OperatingPoint,
    pub curves: SweepCurves,
    pub per_example: Vec<ExampleRecord>,
}

pub fn evaluate(
    examples: &[EvalExample<'_>],
    recall_floor: f64,
    thresholds: &[f64],
) -> Result<EvalReport, EvalError> {
    let curves = sweep_metrics(examples, thresholds, DEFAULT_KS)?;
    let scores: Vec<f64> = examples.iter().flat_map(|e| e.scores.iter().copied()).collect();
    let labels: Vec<bool> = examples.iter().flat_map(|e| e.labels.iter().copied()).collect();
    let per_example = examples
        .iter()
        .map(|e| ExampleRecord {
            id: e.id.clone(),
            columns: e.scores.len(),
            relevant: e.labels.iter().filter(|&&l| l).count(),
            roc_auc: roc_auc(&e.scores, &e.labels).ok(),
            pr_auc: pr_auc(&e.scores, &e.labels).ok(),
        })
        .collect();
    Ok(EvalReport {
        examples: examples.len(),
        roc_auc: roc_auc(&scores, &labels)?,
        pr_auc: pr_auc(&scores, &labels)?,
        recall_floor,
        operating_point: precision_at_high_recall(&scores, &labels, recall_floor)?,
        curves,
        per_example,
    })
}
