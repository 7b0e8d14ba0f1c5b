//! Ranking metrics, selection rules, threshold/top-k sweeps and latency tables.

mod bench;
mod metrics;
mod select;
mod sweep;

pub use bench::{latency_csv, median, percentile, samples_csv, summarize, LatencyRow, LatencySample, StageTimings};
pub use metrics::{pr_auc, precision_at_high_recall, roc_auc, OperatingPoint};
pub use select::{prf, Prf, Selection};
pub use sweep::{
    evaluate, steiner_select, sweep_metrics, threshold_grid, Curve, EvalExample, EvalReport, ExampleRecord,
    SweepCurves, DEFAULT_KS,
};

use thiserror::Error;

pub const DEFAULT_RECALL_FLOOR: f64 = 0.99;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("{scores} scores but {labels} labels")]
    Length { scores: usize, labels: usize },
    #[error("scores contain NaN")]
    NaN,
    #[error("labels need both classes ({positives} positive, {negatives} negative)")]
    DegenerateLabels { positives: usize, negatives: usize },
    #[error("recall floor {floor} unreachable; selecting everything gives recall {}", at_all_selected.recall)]
    RecallUnreachable { floor: f64, at_all_selected: OperatingPoint },
    #[error("invalid selection: {0}")]
    Selection(String),
    #[error("no examples to evaluate")]
    NoExamples,
}
