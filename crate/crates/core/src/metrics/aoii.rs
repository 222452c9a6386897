//! Age of incorrect information for a two-state source.
//!
//! The receiver holds the sample of the freshest delivered update. AoII is
//! the time since the estimate last agreed with the true state; it is zero
//! while they agree. Episodes of disagreement contribute `L²/2` each to the
//! integral, so the time average is exact.

use crate::error::{Error, Result};
use crate::protocols::DeliveryTrace;
use crate::sources::{ProcessModel, TwoStatePath};
use crate::time::{Instant, Span};

use super::summary::{ramp_quantile_ns, SampleSummary};

#[derive(Clone, Debug, PartialEq)]
pub struct AoiiProcess {
    /// Disagreement episodes `[start, end)` within the window.
    episodes: Vec<(Instant, Instant)>,
    window_start: Instant,
    window_end: Instant,
    twice_integral: u128,
}

impl AoiiProcess {
    pub fn episodes(&self) -> &[(Instant, Instant)] {
        &self.episodes
    }

    pub fn window(&self) -> (Instant, Instant) {
        (self.window_start, self.window_end)
    }

    /// Time-average AoII in nanoseconds.
    pub fn mean_ns(&self) -> f64 {
        let width = (self.window_end - self.window_start).as_nanos() as u128;
        if width == 0 {
            return 0.0;
        }
        let d = 2 * width;
        (self.twice_integral / d) as f64 + (self.twice_integral % d) as f64 / d as f64
    }

    pub fn mean_secs(&self) -> f64 {
        self.mean_ns() / 1e9
    }

    /// Time average, time-weighted percentiles and maximum in seconds.
    /// `count` is the number of disagreement episodes.
    pub fn time_summary(&self) -> SampleSummary {
        let ramps: Vec<(f64, f64)> = self
            .episodes
            .iter()
            .map(|&(s, e)| {
                let from = self.window_start.max(s);
                ((from - s).as_secs_f64(), (e - from).as_secs_f64())
            })
            .collect();
        let width = (self.window_end - self.window_start).as_secs_f64();
        let max = ramps.iter().map(|(a, l)| a + l).fold(0.0, f64::max);
        let mean = self.mean_secs();
        let q = |p: f64| if width > 0.0 { ramp_quantile_ns(&ramps, width, p) } else { mean };
        SampleSummary { mean, p50: q(0.5), p95: q(0.95), p99: q(0.99), max, min: 0.0, count: self.episodes.len() as u64 }
    }

    /// AoII at `t`, or `None` outside the window.
    pub fn age_at(&self, t: Instant) -> Option<Span> {
        if t < self.window_start || t > self.window_end {
            return None;
        }
        let k = self.episodes.partition_point(|e| e.0 <= t);
        Some(match k.checked_sub(1).map(|i| self.episodes[i]) {
            Some((s, e)) if t < e || (e == self.window_end && t == e) => t - s,
            _ => Span::ZERO,
        })
    }
}

/// AoII of a one-way run whose source observed a two-state process.
///
/// The window starts at the first reception, like the AoI window.
pub fn aoii(trace: &DeliveryTrace, process: &ProcessModel) -> Result<AoiiProcess> {
    let ProcessModel::TwoStateMarkov { initial, .. } = process else {
        return Err(Error::Unsupported("AoII needs a two-state process".into()));
    };
    let path = TwoStatePath { initial: *initial, flips: trace.process_flips.clone().unwrap_or_default() };
    aoii_from_path(&trace.receptions(), &path, trace.horizon)
}

/// AoII from `(generated_at, received_at)` pairs and the realized source path.
/// The receiver's estimate is the source state at the freshest anchor.
pub fn aoii_from_path(receptions: &[(Instant, Instant)], path: &TwoStatePath, horizon: Instant) -> Result<AoiiProcess> {
    // estimate changes: (time, new estimate)
    let mut rx: Vec<(Instant, Instant)> =
        receptions.iter().filter(|(_, r)| *r <= horizon).map(|&(g, r)| (r, g)).collect();
    rx.sort_unstable();
    let mut changes: Vec<(Instant, u8)> = Vec::new();
    let mut anchor: Option<Instant> = None;
    for (r, g) in rx {
        if anchor.is_some_and(|a| g <= a) {
            continue;
        }
        anchor = Some(g);
        let v = path.value_at(g);
        match changes.last_mut() {
            Some(last) if last.0 == r => last.1 = v,
            _ => changes.push((r, v)),
        }
    }
    let Some(&(window_start, first_estimate)) = changes.first() else {
        return Err(Error::NoDeliveries);
    };
    let window_end = horizon.max(window_start);

    let mut episodes = Vec::new();
    let mut estimate = first_estimate;
    let mut truth = path.value_at(window_start);
    let mut open: Option<Instant> = (estimate != truth).then(|| {
        // the estimate last matched just before the most recent flip
        let k = path.flips.partition_point(|f| *f <= window_start);
        path.flips[k - 1]
    });

    let mut fi = path.flips.partition_point(|f| *f <= window_start);
    let mut ci = 1;
    loop {
        let next_flip = path.flips.get(fi).copied().filter(|f| *f <= window_end);
        let next_change = changes.get(ci).map(|c| c.0);
        let t = match (next_flip, next_change) {
            (None, None) => break,
            (Some(f), None) => f,
            (None, Some(c)) => c,
            (Some(f), Some(c)) => f.min(c),
        };
        while path.flips.get(fi).is_some_and(|f| *f == t) {
            truth ^= 1;
            fi += 1;
        }
        if changes.get(ci).is_some_and(|c| c.0 == t) {
            estimate = changes[ci].1;
            ci += 1;
        }
        match (open, estimate == truth) {
            (Some(s), true) => {
                episodes.push((s, t));
                open = None;
            }
            (None, false) => open = Some(t),
            _ => {}
        }
    }
    if let Some(s) = open {
        episodes.push((s, window_end));
    }

    let mut twice_integral: u128 = 0;
    for &(s, e) in &episodes {
        // an episode may have started before the window opened
        let lo = (window_start.max(s) - s).as_nanos() as u128;
        let hi = (e - s).as_nanos() as u128;
        twice_integral += hi * hi - lo * lo;
    }
    Ok(AoiiProcess { episodes, window_start, window_end, twice_integral })
}
