use serde::Serialize;

use crate::error::{Error, Result};
use crate::protocols::DeliveryTrace;
use crate::time::{Instant, Span};

/// Deadline-referenced metrics of a delivery trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DeadlineReport {
    pub deadline_s: f64,
    /// Packets whose deadline fell inside the run.
    pub eligible: u64,
    pub violation_prob: f64,
    /// Bits delivered within their deadline per second of run time.
    pub timely_throughput_bps: f64,
    /// Bits generated by eligible packets per second of run time.
    pub offered_load_bps: f64,
    /// Fraction of eligible packets delivered in `[deadline - window, deadline]`.
    pub on_time_fraction: Option<f64>,
}

/// Violation probability, timely throughput and on-time fraction.
///
/// Only packets whose deadline has passed by the horizon are judged, so
/// packets still in flight at the end do not count as violations.
pub fn deadline_metrics(trace: &DeliveryTrace, deadline: Span, earliness_window: Option<Span>) -> Result<DeadlineReport> {
    if deadline.is_zero() {
        return Err(Error::validation("deadline_s", "must be positive"));
    }
    if earliness_window.is_some_and(|w| w > deadline) {
        return Err(Error::validation("earliness_window_s", "must not exceed the deadline"));
    }
    let mut eligible = 0u64;
    let mut late = 0u64;
    let mut on_time = 0u64;
    let mut offered_bits = 0u128;
    let mut timely_bits = 0u128;
    for r in &trace.records {
        if r.generated_at.saturating_add(deadline) > trace.horizon {
            continue;
        }
        eligible += 1;
        offered_bits += r.size_bits as u128;
        match r.delivered_at().map(|d| d - r.generated_at) {
            Some(lat) if lat <= deadline => {
                timely_bits += r.size_bits as u128;
                if earliness_window.is_some_and(|w| lat >= deadline - w) {
                    on_time += 1;
                }
            }
            _ => late += 1,
        }
    }
    let run_s = trace.horizon.since_origin().as_secs_f64();
    let rate = |bits: u128| if run_s > 0.0 { bits as f64 / run_s } else { 0.0 };
    let frac = |n: u64| if eligible > 0 { n as f64 / eligible as f64 } else { 0.0 };
    Ok(DeadlineReport {
        deadline_s: deadline.as_secs_f64(),
        eligible,
        violation_prob: frac(late),
        timely_throughput_bps: rate(timely_bits),
        offered_load_bps: rate(offered_bits),
        on_time_fraction: earliness_window.map(|_| frac(on_time)),
    })
}

/// Convenience for traces built outside the simulator.
pub fn deadline_metrics_from_pairs(
    pairs: &[(Instant, Option<Instant>)],
    horizon: Instant,
    deadline: Span,
) -> Result<DeadlineReport> {
    deadline_metrics(&DeliveryTrace::from_pairs(pairs, horizon), deadline, None)
}
