//! CSV and JSON renderings of run and sweep reports.

use crate::engine::TraceRow;
use crate::time::{Instant, Span};

use super::run::{RunReport, SweepReport};

fn quote(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

impl RunReport {
    pub fn to_csv(&self) -> String {
        self.report.to_csv()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn trace_csv(&self) -> String {
        trace_csv(&self.trace)
    }

    pub fn sawtooth_csv(&self) -> Option<String> {
        self.sawtooth.as_deref().map(sawtooth_csv)
    }
}

/// Event log with columns `t_ns,entity,event,detail`.
pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from("t_ns,entity,event,detail\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.t_ns, r.entity, r.event, quote(&r.detail)));
    }
    out
}

/// Sawtooth breakpoints with columns `t_ns,age_ns`.
pub fn sawtooth_csv(points: &[(Instant, Span)]) -> String {
    let mut out = String::from("t_ns,age_ns\n");
    for (t, a) in points {
        out.push_str(&format!("{},{}\n", t.as_nanos(), a.as_nanos()));
    }
    out
}

impl SweepReport {
    /// Merged metrics, columns `metric,mean,std_error,n_seeds`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,mean,std_error,n_seeds\n");
        for m in &self.merged {
            out.push_str(&format!("{},{},{},{}\n", m.metric, m.mean, m.std_error, m.n_seeds));
        }
        out
    }

    /// Every seed's rows, columns `seed,metric,mean,p50,p95,p99,max,count`.
    pub fn per_seed_csv(&self) -> String {
        let mut out = String::from("seed,metric,mean,p50,p95,p99,max,count\n");
        for r in &self.per_seed {
            for row in &r.report.rows {
                let s = &row.summary;
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    r.seed, row.metric, s.mean, s.p50, s.p95, s.p99, s.max, s.count
                ));
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
