//! Timing metrics computed from delivery, loop and query traces.

mod aoi;
mod aoii;
mod deadline;
mod estimation;
mod summary;

pub use aoi::{
    mean_aoi, peak_aoi, peak_summary, query_aoi, query_aoi_at, query_instants, AgeOrigin, AgeSawtooth, Breakpoint,
};
pub use aoii::{aoii, aoii_from_path, AoiiProcess};
pub use deadline::{deadline_metrics, deadline_metrics_from_pairs, DeadlineReport};
pub use estimation::{AgeBin, EstimationReport, EstimationTracker};
pub use summary::{summarize, summarize_spans, SampleSummary, Samples};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::protocols::{Conservation, LoopTrace};

/// Age-of-loop samples (seconds) of closed cycles, and the count left open.
pub fn loop_age(trace: &LoopTrace) -> Result<(SampleSummary, usize)> {
    let summary = summarize_spans(trace.closed()).ok_or(Error::NoClosedLoops)?;
    Ok((summary, trace.open_count()))
}

/// One line of a report: a named metric and its summary, in seconds unless
/// the name says otherwise.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricRow {
    pub metric: String,
    #[serde(flatten)]
    pub summary: SampleSummary,
}

impl MetricRow {
    pub fn new(metric: impl Into<String>, summary: SampleSummary) -> Self {
        Self { metric: metric.into(), summary }
    }

    /// A row holding a single scalar.
    pub fn scalar(metric: impl Into<String>, value: f64) -> Self {
        let summary = SampleSummary { mean: value, p50: value, p95: value, p99: value, max: value, min: value, count: 1 };
        Self::new(metric, summary)
    }
}

/// Metrics of one run.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TimingReport {
    pub rows: Vec<MetricRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deadline: Option<DeadlineReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conservation: Option<Conservation>,
    /// Error-vs-age curve when an estimation metric was requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimation_curve: Option<Vec<AgeBin>>,
}

impl TimingReport {
    pub fn push(&mut self, row: MetricRow) {
        self.rows.push(row);
    }

    pub fn get(&self, metric: &str) -> Option<&SampleSummary> {
        self.rows.iter().find(|r| r.metric == metric).map(|r| &r.summary)
    }

    /// CSV with columns `metric,mean,p50,p95,p99,max,count`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,mean,p50,p95,p99,max,count\n");
        for r in &self.rows {
            let s = &r.summary;
            out.push_str(&format!("{},{},{},{},{},{},{}\n", r.metric, s.mean, s.p50, s.p95, s.p99, s.max, s.count));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocols::LoopRecord;
    use crate::time::{Instant, Span};

    #[test]
    fn loop_age_excludes_open_cycles() {
        let trace = LoopTrace {
            cycles: vec![
                LoopRecord { cycle: 0, sent_at: Instant::ORIGIN, closed_at: Some(Instant::ORIGIN + Span::from_millis(6)) },
                LoopRecord { cycle: 1, sent_at: Instant::ORIGIN + Span::from_millis(10), closed_at: None },
            ],
            horizon: Instant::ORIGIN + Span::from_millis(12),
        };
        let (s, open) = loop_age(&trace).unwrap();
        assert_eq!((s.count, open), (1, 1));
        assert!((s.mean - 0.006).abs() < 1e-12);
    }

    #[test]
    fn no_closed_loops() {
        let trace = LoopTrace { cycles: vec![], horizon: Instant::ORIGIN };
        assert_eq!(loop_age(&trace), Err(Error::NoClosedLoops));
    }

    #[test]
    fn csv_layout() {
        let mut r = TimingReport::default();
        r.push(MetricRow::scalar("aoi_mean_s", 0.06));
        assert_eq!(r.to_csv(), "metric,mean,p50,p95,p99,max,count\naoi_mean_s,0.06,0.06,0.06,0.06,0.06,1\n");
    }
}
