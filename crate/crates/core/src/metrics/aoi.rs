//! Age of information as an exact piecewise-linear sawtooth.
//!
//! The age `t - xi(t)` is built from receptions only. It jumps down when a
//! packet with a fresher anchor than the current one arrives and grows with
//! slope one in between. Stale or duplicate anchors never move `xi`. All
//! integrals are exact sums over the breakpoints in `u128` nanoseconds².

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocols::DeliveryTrace;
use crate::rng::RngStream;
use crate::sources::SourceSpec;
use crate::time::{Instant, Span};

use super::summary::{self, SampleSummary};

/// Where the measurement window starts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgeOrigin {
    /// At the first reception; the age is undefined before it.
    #[default]
    FirstReception,
    /// At the run origin, as if an update generated at time zero was
    /// already held. Adds an initial ramp to the average.
    RunStart,
}

/// A reception that refreshed the anchor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Breakpoint {
    pub t: Instant,
    /// `lim_{s -> t-} age(s)`; `None` for the reception that opens the window.
    pub age_before: Option<Span>,
    pub age_after: Span,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgeSawtooth {
    breakpoints: Vec<Breakpoint>,
    window_start: Instant,
    window_end: Instant,
    /// Twice the integral of the age over the window, ns².
    twice_integral: u128,
}

impl AgeSawtooth {
    /// Builds the sawtooth from `(generated_at, received_at)` pairs.
    pub fn new(receptions: &[(Instant, Instant)], horizon: Instant, origin: AgeOrigin) -> Result<Self> {
        let mut rx: Vec<(Instant, Instant)> =
            receptions.iter().filter(|(_, r)| *r <= horizon).map(|&(g, r)| (r, g)).collect();
        rx.sort_unstable();
        let mut breakpoints: Vec<Breakpoint> = Vec::new();
        let mut anchor: Option<Instant> = match origin {
            AgeOrigin::FirstReception => None,
            AgeOrigin::RunStart => {
                breakpoints.push(Breakpoint { t: Instant::ORIGIN, age_before: None, age_after: Span::ZERO });
                Some(Instant::ORIGIN)
            }
        };
        let mut i = 0;
        while i < rx.len() {
            let t = rx[i].0;
            // simultaneous receptions collapse into one refresh
            let mut freshest = rx[i].1;
            while i < rx.len() && rx[i].0 == t {
                freshest = freshest.max(rx[i].1);
                i += 1;
            }
            match anchor {
                Some(a) if freshest <= a => continue,
                Some(_) if breakpoints.last().is_some_and(|b| b.t == t) => {
                    // refresh at the run origin itself
                    let last = breakpoints.last_mut().expect("checked");
                    last.age_after = t - freshest;
                }
                Some(a) => breakpoints.push(Breakpoint { t, age_before: Some(t - a), age_after: t - freshest }),
                None => breakpoints.push(Breakpoint { t, age_before: None, age_after: t - freshest }),
            }
            anchor = Some(freshest);
        }
        let Some(first) = breakpoints.first() else {
            return Err(Error::NoDeliveries);
        };
        let window_start = first.t;
        let window_end = horizon.max(window_start);
        let mut twice_integral: u128 = 0;
        for (k, bp) in breakpoints.iter().enumerate() {
            let next = breakpoints.get(k + 1).map_or(window_end, |b| b.t);
            let len = (next - bp.t).as_nanos() as u128;
            twice_integral += len * (2 * bp.age_after.as_nanos() as u128 + len);
        }
        Ok(Self { breakpoints, window_start, window_end, twice_integral })
    }

    pub fn from_trace(trace: &DeliveryTrace, origin: AgeOrigin) -> Result<Self> {
        Self::new(&trace.receptions(), trace.horizon, origin)
    }

    pub fn breakpoints(&self) -> &[Breakpoint] {
        &self.breakpoints
    }

    pub fn window(&self) -> (Instant, Instant) {
        (self.window_start, self.window_end)
    }

    /// Exact `∫ age dt` over the window in ns².
    pub fn integral_ns2(&self) -> f64 {
        self.twice_integral as f64 / 2.0
    }

    /// Time-average age in nanoseconds, computed from the exact integral.
    pub fn mean_ns(&self) -> f64 {
        let width = (self.window_end - self.window_start).as_nanos() as u128;
        if width == 0 {
            return self.breakpoints[0].age_after.as_nanos() as f64;
        }
        let d = 2 * width;
        (self.twice_integral / d) as f64 + (self.twice_integral % d) as f64 / d as f64
    }

    /// Ramps `(age_after, length)` in seconds, one per refresh.
    fn ramps(&self) -> Vec<(f64, f64)> {
        self.breakpoints
            .iter()
            .enumerate()
            .map(|(k, bp)| {
                let next = self.breakpoints.get(k + 1).map_or(self.window_end, |b| b.t);
                (bp.age_after.as_secs_f64(), (next - bp.t).as_secs_f64())
            })
            .collect()
    }

    /// Summary of the age over time, in seconds: the exact time average,
    /// time-weighted percentiles and the largest age reached. `count` is the
    /// number of refreshing receptions.
    pub fn time_summary(&self) -> SampleSummary {
        let ramps = self.ramps();
        let width = (self.window_end - self.window_start).as_secs_f64();
        let max = ramps.iter().map(|(a, l)| a + l).fold(0.0, f64::max);
        let min = ramps.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
        let mean = self.mean_ns() / 1e9;
        let q = |p: f64| if width > 0.0 { summary::ramp_quantile_ns(&ramps, width, p) } else { mean };
        SampleSummary { mean, p50: q(0.5), p95: q(0.95), p99: q(0.99), max, min, count: self.breakpoints.len() as u64 }
    }

    /// Age at `t` (right-continuous), or `None` outside the window.
    pub fn age_at(&self, t: Instant) -> Option<Span> {
        if t < self.window_start || t > self.window_end {
            return None;
        }
        let k = self.breakpoints.partition_point(|b| b.t <= t);
        let bp = &self.breakpoints[k - 1];
        Some(bp.age_after + (t - bp.t))
    }

    /// Peak ages, one per refreshing reception after the first.
    pub fn peaks(&self) -> impl Iterator<Item = Span> + '_ {
        self.breakpoints.iter().filter_map(|b| b.age_before)
    }

    /// Ages immediately after each refresh.
    pub fn troughs(&self) -> impl Iterator<Item = Span> + '_ {
        self.breakpoints.iter().map(|b| b.age_after)
    }

    /// Breakpoint dump for plotting: `(t, age)` including both sides of each
    /// jump and the window end.
    pub fn dump(&self) -> Vec<(Instant, Span)> {
        let mut rows = Vec::with_capacity(2 * self.breakpoints.len() + 1);
        for bp in &self.breakpoints {
            if let Some(before) = bp.age_before {
                rows.push((bp.t, before));
            }
            rows.push((bp.t, bp.age_after));
        }
        if let Some(end_age) = self.age_at(self.window_end) {
            rows.push((self.window_end, end_age));
        }
        rows
    }
}

/// Time-average AoI of a delivery trace, rounded half-up to the nanosecond.
pub fn mean_aoi(trace: &DeliveryTrace) -> Result<Span> {
    let saw = AgeSawtooth::from_trace(trace, AgeOrigin::FirstReception)?;
    Ok(Span((saw.mean_ns() + 0.5).floor() as u64))
}

/// Peak-AoI samples (seconds) of a trace.
pub fn peak_aoi(trace: &DeliveryTrace) -> Result<SampleSummary> {
    let saw = AgeSawtooth::from_trace(trace, AgeOrigin::FirstReception).map_err(|e| match e {
        Error::NoDeliveries => Error::InsufficientDeliveries { needed: 2, got: 0 },
        e => e,
    })?;
    peak_summary(&saw)
}

pub fn peak_summary(saw: &AgeSawtooth) -> Result<SampleSummary> {
    summary::summarize_spans(saw.peaks()).ok_or(Error::InsufficientDeliveries { needed: 2, got: saw.breakpoints().len() })
}

/// Query instants of a periodic or Poisson query process within `[from, to]`.
pub fn query_instants(spec: &SourceSpec, rng: &mut RngStream, from: Instant, to: Instant) -> Result<Vec<Instant>> {
    if spec.needs_process() {
        return Err(Error::validation("query", "query processes must be periodic or poisson"));
    }
    spec.validate()?;
    let mut out = Vec::new();
    let mut t = spec.first_generation(rng);
    if let SourceSpec::Periodic { .. } = spec {
        // align the periodic grid to start inside the window
        while t < from {
            match spec.next_generation(t, rng, None, None, to) {
                Some(n) => t = n,
                None => return Ok(out),
            }
        }
    }
    loop {
        if t > to {
            break;
        }
        if t >= from {
            out.push(t);
        }
        match spec.next_generation(t, rng, None, None, to) {
            Some(n) => t = n,
            None => break,
        }
    }
    Ok(out)
}

/// AoI sampled at the given query instants (seconds); queries outside the
/// window are skipped.
pub fn query_aoi_at(saw: &AgeSawtooth, queries: &[Instant]) -> Result<SampleSummary> {
    summary::summarize_spans(queries.iter().filter_map(|&q| saw.age_at(q))).ok_or(Error::NoQueriesInWindow)
}

/// Query AoI: the age seen by an application that reads the information
/// at the instants of `query`.
pub fn query_aoi(trace: &DeliveryTrace, query: &SourceSpec, rng: &mut RngStream) -> Result<SampleSummary> {
    let saw = AgeSawtooth::from_trace(trace, AgeOrigin::FirstReception)?;
    let (from, to) = saw.window();
    let queries = query_instants(query, rng, from, to)?;
    query_aoi_at(&saw, &queries)
}
