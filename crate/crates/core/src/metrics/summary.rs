use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::time::Span;

/// Mean and tail statistics of a sample set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub mean: f64,
    pub p50: f64,
    pub p95: f64,
    pub p99: f64,
    pub max: f64,
    pub min: f64,
    pub count: u64,
}

/// Nearest-rank quantile of an ascending slice.
fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

/// Summarizes `values`; `None` when empty.
pub fn summarize(values: &[f64]) -> Option<SampleSummary> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    // summing in sorted order makes the mean independent of arrival order
    let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
    Some(SampleSummary {
        mean,
        p50: nearest_rank(&sorted, 0.50),
        p95: nearest_rank(&sorted, 0.95),
        p99: nearest_rank(&sorted, 0.99),
        max: sorted[sorted.len() - 1],
        min: sorted[0],
        count: sorted.len() as u64,
    })
}

/// Summary of durations, in seconds. The mean is taken over integer
/// nanoseconds, so it carries no float accumulation error.
pub fn summarize_spans(spans: impl IntoIterator<Item = Span>) -> Option<SampleSummary> {
    let ns: Vec<u64> = spans.into_iter().map(Span::as_nanos).collect();
    let secs: Vec<f64> = ns.iter().map(|&n| n as f64 / 1e9).collect();
    let mut s = summarize(&secs)?;
    let total: u128 = ns.iter().map(|&n| n as u128).sum();
    let n = ns.len() as u128;
    s.mean = ((total / n) as f64 + (total % n) as f64 / n as f64) / 1e9;
    Some(s)
}

/// Time-weighted quantile of a signal made of unit-slope ramps.
///
/// Each segment `(a0, len)` is a ramp from `a0` to `a0 + len`; the rest of
/// the `width` is spent at zero. Solved by bisection on the occupation
/// measure.
pub(crate) fn ramp_quantile(segments: &[(f64, f64)], width: f64, q: f64) -> f64 {
    let covered: f64 = segments.iter().map(|s| s.1).sum();
    let zero_mass = (width - covered).max(0.0);
    let target = q * width;
    let below = |x: f64| zero_mass + segments.iter().map(|&(a0, len)| (x - a0).clamp(0.0, len)).sum::<f64>();
    if zero_mass >= target {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0f64, segments.iter().map(|&(a0, len)| a0 + len).fold(0.0, f64::max));
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if below(mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-12 * hi.max(1.0) {
            break;
        }
    }
    hi
}

/// [`ramp_quantile`] rounded to the nanosecond.
pub(crate) fn ramp_quantile_ns(segments: &[(f64, f64)], width: f64, q: f64) -> f64 {
    (ramp_quantile(segments, width, q) * 1e9).round() / 1e9
}

/// Relative accuracy of the streaming sketch.
const SKETCH_ALPHA: f64 = 0.005;

/// Log-bucketed quantile sketch for non-negative values; each quantile is
/// within `SKETCH_ALPHA` relative error of some sample of the right rank.
#[derive(Clone, Debug, Default, PartialEq)]
struct LogSketch {
    zeros: u64,
    buckets: BTreeMap<i32, u64>,
    count: u64,
    sum: f64,
    min: f64,
    max: f64,
}

impl LogSketch {
    fn gamma() -> f64 {
        (1.0 + SKETCH_ALPHA) / (1.0 - SKETCH_ALPHA)
    }

    fn insert(&mut self, v: f64) {
        if self.count == 0 {
            self.min = v;
            self.max = v;
        } else {
            self.min = self.min.min(v);
            self.max = self.max.max(v);
        }
        self.count += 1;
        self.sum += v;
        if v <= 0.0 {
            self.zeros += 1;
        } else {
            let idx = (v.ln() / Self::gamma().ln()).ceil() as i32;
            *self.buckets.entry(idx).or_default() += 1;
        }
    }

    fn quantile(&self, q: f64) -> f64 {
        let rank = ((q * self.count as f64).ceil() as u64).clamp(1, self.count);
        if rank <= self.zeros {
            return self.min.min(0.0);
        }
        let mut seen = self.zeros;
        let g = Self::gamma();
        for (&idx, &c) in &self.buckets {
            seen += c;
            if seen >= rank {
                let v = 2.0 * g.powi(idx) / (1.0 + g);
                return v.clamp(self.min, self.max);
            }
        }
        self.max
    }

    fn summary(&self) -> SampleSummary {
        SampleSummary {
            mean: self.sum / self.count as f64,
            p50: self.quantile(0.50),
            p95: self.quantile(0.95),
            p99: self.quantile(0.99),
            max: self.max,
            min: self.min,
            count: self.count,
        }
    }
}

/// Sample accumulator: exact below `exact_cap` values, sketched beyond.
#[derive(Clone, Debug, PartialEq)]
pub struct Samples {
    exact: Vec<f64>,
    sketch: Option<LogSketch>,
    exact_cap: usize,
}

impl Default for Samples {
    fn default() -> Self {
        Self::with_exact_cap(Self::DEFAULT_EXACT_CAP)
    }
}

impl Samples {
    pub const DEFAULT_EXACT_CAP: usize = 10_000_000;

    pub fn with_exact_cap(exact_cap: usize) -> Self {
        Self { exact: Vec::new(), sketch: None, exact_cap }
    }

    pub fn push(&mut self, v: f64) {
        if let Some(s) = self.sketch.as_mut() {
            s.insert(v);
            return;
        }
        if self.exact.len() < self.exact_cap {
            self.exact.push(v);
            return;
        }
        let mut s = LogSketch::default();
        for x in self.exact.drain(..) {
            s.insert(x);
        }
        s.insert(v);
        self.sketch = Some(s);
    }

    pub fn len(&self) -> u64 {
        self.sketch.as_ref().map_or(self.exact.len() as u64, |s| s.count)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_exact(&self) -> bool {
        self.sketch.is_none()
    }

    pub fn summary(&self) -> Option<SampleSummary> {
        match &self.sketch {
            Some(s) => Some(s.summary()),
            None => summarize(&self.exact),
        }
    }
}

impl Extend<f64> for Samples {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for v in iter {
            self.push(v);
        }
    }
}

impl FromIterator<f64> for Samples {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Samples::default();
        s.extend(iter);
        s
    }
}
