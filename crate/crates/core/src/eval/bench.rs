use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

/// Wall-clock per pipeline stage, milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct StageTimings {
    pub context_ms: f64,
    pub embed_ms: f64,
    pub forward_ms: f64,
    pub steiner_ms: f64,
}

impl StageTimings {
    pub fn total_ms(&self) -> f64 {
        self.context_ms + self.embed_ms + self.forward_ms + self.steiner_ms
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencySample {
    pub db_id: String,
    pub columns: usize,
    pub tables: usize,
    pub question: String,
    pub timings: StageTimings,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyRow {
    pub db_id: String,
    pub columns: usize,
    pub tables: usize,
    pub questions: usize,
    pub median_ms: f64,
    pub p95_ms: f64,
}

/// Median (mean of the middle pair for even counts) of a non-empty slice.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 }
}

/// Nearest-rank percentile, `q` in (0, 1].
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

/// Per-database aggregates, sorted by column count then id.
pub fn summarize(samples: &[LatencySample]) -> Vec<LatencyRow> {
    let mut by_db: BTreeMap<&str, Vec<&LatencySample>> = BTreeMap::new();
    for s in samples {
        by_db.entry(&s.db_id).or_default().push(s);
    }
    let mut rows: Vec<LatencyRow> = by_db
        .into_iter()
        .map(|(db, group)| {
            let totals: Vec<f64> = group.iter().map(|s| s.timings.total_ms()).collect();
            LatencyRow {
                db_id: db.to_string(),
                columns: group[0].columns,
                tables: group[0].tables,
                questions: group.len(),
                median_ms: median(&totals),
                p95_ms: percentile(&totals, 0.95),
            }
        })
        .collect();
    rows.sort_by(|a, b| a.columns.cmp(&b.columns).then_with(|| a.db_id.cmp(&b.db_id)));
    rows
}

pub fn latency_csv(rows: &[LatencyRow]) -> String {
    let mut out = String::from("db_id,columns,tables,questions,median_ms,p95_ms\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{:.3},{:.3}", r.db_id, r.columns, r.tables, r.questions, r.median_ms, r.p95_ms);
    }
    out
}

/// One line per question with its stage breakdown.
pub fn samples_csv(samples: &[LatencySample]) -> String {
    let mut out = String::from("db_id,columns,tables,context_ms,embed_ms,forward_ms,steiner_ms,total_ms\n");
    for s in samples {
        let t = &s.timings;
        let _ = writeln!(
            out,
            "{},{},{},{:.3},{:.3},{:.3},{:.3},{:.3}",
            s.db_id, s.columns, s.tables, t.context_ms, t.embed_ms, t.forward_ms, t.steiner_ms, t.total_ms()
        );
    }
    out
}
