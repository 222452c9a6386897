//! Squared error of a hold-last-sample estimator.
//!
//! The trace only records the process at generation instants. Between them
//! the tracker fills in the path consistently: Brownian bridges for a Wiener
//! process, the recorded flips for a two-state chain. The error is then
//! sampled on a regular grid and binned by the current age.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::protocols::DeliveryTrace;
use crate::rng::RngStream;
use crate::sources::{ProcessModel, TwoStatePath};
use crate::time::{Instant, Span};

#[derive(Clone, Debug, PartialEq)]
pub struct EstimationTracker {
    pub model: ProcessModel,
    /// Spacing of the error samples.
    pub grid: Span,
    pub bin_width: Span,
    pub n_bins: usize,
    /// Seed of the stream that fills in the unobserved path.
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AgeBin {
    pub age_lo_s: f64,
    pub mean_age_s: f64,
    pub mean_g: f64,
    pub count: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimationReport {
    /// Grid average of the squared error after the first reception.
    pub time_avg_g: f64,
    pub samples: u64,
    pub curve: Vec<AgeBin>,
}

impl EstimationReport {
    /// Count-weighted least-squares slope of mean error against age,
    /// through the origin.
    pub fn fit_slope(&self) -> Option<f64> {
        let (mut num, mut den) = (0.0, 0.0);
        for b in self.curve.iter().filter(|b| b.count > 0) {
            let w = b.count as f64;
            num += w * b.mean_age_s * b.mean_g;
            den += w * b.mean_age_s * b.mean_age_s;
        }
        (den > 0.0).then(|| num / den)
    }
}

const STREAM_FILL: u64 = 41;

impl EstimationTracker {
    pub fn new(model: ProcessModel, grid: Span, bin_width: Span, n_bins: usize) -> Self {
        Self { model, grid, bin_width, n_bins, seed: 0 }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.grid.is_zero() {
            return Err(Error::validation("grid_s", "must be positive"));
        }
        if self.bin_width.is_zero() || self.n_bins == 0 {
            return Err(Error::validation("bin_width_s", "need at least one non-empty bin"));
        }
        Ok(())
    }

    /// Time-average error and the error-vs-age curve of `trace`.
    pub fn evaluate(&self, trace: &DeliveryTrace) -> Result<EstimationReport> {
        self.validate()?;
        let known: Vec<(Instant, &[f64])> = trace
            .records
            .iter()
            .map(|r| {
                r.sample
                    .as_deref()
                    .map(|s| (r.generated_at, s))
                    .ok_or_else(|| Error::validation("process", "trace carries no process samples"))
            })
            .collect::<Result<_>>()?;

        // estimate refreshes: (reception, anchor, held sample)
        let mut rx: Vec<(Instant, Instant, usize)> = trace
            .records
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.delivered_at().map(|d| (d, r.generated_at, i)))
            .filter(|(d, _, _)| *d <= trace.horizon)
            .collect();
        rx.sort_unstable();
        let mut changes: Vec<(Instant, Instant, usize)> = Vec::new();
        for (d, g, i) in rx {
            if changes.last().is_some_and(|c| g <= c.1) {
                continue;
            }
            match changes.last_mut() {
                Some(last) if last.0 == d => *last = (d, g, i),
                _ => changes.push((d, g, i)),
            }
        }
        let Some(&(start, _, _)) = changes.first() else {
            return Err(Error::NoDeliveries);
        };

        let mut truth = Truth::new(&self.model, &known, trace, RngStream::new(self.seed, STREAM_FILL));
        let mut bins = vec![(0.0f64, 0.0f64, 0u64); self.n_bins];
        let (mut g_sum, mut n) = (0.0f64, 0u64);
        let mut ci = 0;
        let mut t = start;
        while t <= trace.horizon {
            while ci + 1 < changes.len() && changes[ci + 1].0 <= t {
                ci += 1;
            }
            let (_, anchor, held) = changes[ci];
            let x = truth.at(t);
            let g: f64 = known[held].1.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            g_sum += g;
            n += 1;
            let age = t - anchor;
            let bin = (age.as_nanos() / self.bin_width.as_nanos()) as usize;
            if let Some(b) = bins.get_mut(bin) {
                b.0 += age.as_secs_f64();
                b.1 += g;
                b.2 += 1;
            }
            t += self.grid;
        }
        let curve = bins
            .iter()
            .enumerate()
            .map(|(k, &(age, g, c))| AgeBin {
                age_lo_s: (self.bin_width.as_secs_f64()) * k as f64,
                mean_age_s: if c > 0 { age / c as f64 } else { 0.0 },
                mean_g: if c > 0 { g / c as f64 } else { 0.0 },
                count: c,
            })
            .collect();
        Ok(EstimationReport { time_avg_g: g_sum / n as f64, samples: n, curve })
    }
}

/// The true process at increasing query instants.
#[allow(clippy::large_enum_variant)]
enum Truth<'a> {
    Wiener {
        sigma: f64,
        known: &'a [(Instant, &'a [f64])],
        next: usize,
        last_t: Instant,
        last_x: Vec<f64>,
        rng: RngStream,
    },
    TwoState(TwoStatePath, Vec<f64>),
    Constant(Vec<f64>),
}

impl<'a> Truth<'a> {
    fn new(model: &ProcessModel, known: &'a [(Instant, &'a [f64])], trace: &DeliveryTrace, rng: RngStream) -> Self {
        match model {
            ProcessModel::Wiener { sigma, .. } => Truth::Wiener {
                sigma: *sigma,
                known,
                next: 0,
                last_t: Instant::ORIGIN,
                last_x: model.initial_state(),
                rng,
            },
            ProcessModel::TwoStateMarkov { initial, .. } => Truth::TwoState(
                TwoStatePath { initial: *initial, flips: trace.process_flips.clone().unwrap_or_default() },
                vec![0.0],
            ),
            ProcessModel::Constant { .. } => Truth::Constant(model.initial_state()),
        }
    }

    fn at(&mut self, t: Instant) -> &[f64] {
        match self {
            Truth::Wiener { sigma, known, next, last_t, last_x, rng } => {
                while *next < known.len() && known[*next].0 <= t {
                    *last_t = known[*next].0;
                    last_x.clear();
                    last_x.extend_from_slice(known[*next].1);
                    *next += 1;
                }
                if *last_t < t {
                    let dt = (t - *last_t).as_secs_f64();
                    match known.get(*next) {
                        Some(&(tn, xn)) => {
                            // Brownian bridge towards the next recorded sample
                            let span = (tn - *last_t).as_secs_f64();
                            let frac = dt / span;
                            let sd = *sigma * (dt * (span - dt) / span).sqrt();
                            for (x, target) in last_x.iter_mut().zip(xn) {
                                *x += frac * (target - *x) + sd * rng.standard_normal();
                            }
                        }
                        None => {
                            let sd = *sigma * dt.sqrt();
                            for x in last_x.iter_mut() {
                                *x += sd * rng.standard_normal();
                            }
                        }
                    }
                    *last_t = t;
                }
                last_x
            }
            Truth::TwoState(path, buf) => {
                buf[0] = path.value_at(t) as f64;
                buf
            }
            Truth::Constant(v) => v,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::Channel;
    use crate::protocols::{run_one_way, OneWayConfig};
    use crate::rng::Dist;
    use crate::sources::{Discipline, QueueSpec, SourceSpec};

    fn wiener_cfg(source: SourceSpec, delay: Dist) -> OneWayConfig {
        let mut cfg = OneWayConfig::new(
            source,
            QueueSpec::new(Discipline::LcfsPreempt),
            Channel::Sampled(crate::channels::SampledChannel::new(delay, 1.0)),
        );
        cfg.process = Some(ProcessModel::Wiener { sigma: 1.0, dim: 1 });
        cfg
    }

    #[test]
    fn constant_process_has_no_error() {
        let mut cfg = wiener_cfg(SourceSpec::periodic(Span::from_millis(100)), Dist::deterministic(0.01));
        cfg.process = Some(ProcessModel::Constant { value: 3.0 });
        let trace = run_one_way(&cfg, 1, Instant::from_secs_f64(10.0), false).unwrap();
        let tracker = EstimationTracker::new(cfg.process.clone().unwrap(), Span::from_millis(1), Span::from_millis(10), 20);
        let r = tracker.evaluate(&trace).unwrap();
        assert_eq!(r.time_avg_g, 0.0);
    }

    #[test]
    fn bridge_hits_recorded_samples() {
        let known_a = [0.0];
        let known_b = [5.0];
        let known = [(Instant::from_secs_f64(1.0), &known_a[..]), (Instant::from_secs_f64(2.0), &known_b[..])];
        let trace = DeliveryTrace::from_pairs(&[], Instant::ORIGIN);
        let model = ProcessModel::Wiener { sigma: 1.0, dim: 1 };
        let mut truth = Truth::new(&model, &known, &trace, RngStream::new(1, 1));
        truth.at(Instant::from_secs_f64(1.5));
        assert_eq!(truth.at(Instant::from_secs_f64(2.0)), &[5.0]);
    }

    #[test]
    fn bridge_variance() {
        // midpoint of a bridge over one second has variance 1/4
        let known_a = [0.0];
        let known_b = [0.0];
        let known = [(Instant::ORIGIN, &known_a[..]), (Instant::from_secs_f64(1.0), &known_b[..])];
        let trace = DeliveryTrace::from_pairs(&[], Instant::ORIGIN);
        let model = ProcessModel::Wiener { sigma: 1.0, dim: 1 };
        let n = 100_000;
        let mut sum_sq = 0.0;
        for s in 0..n {
            let mut truth = Truth::new(&model, &known, &trace, RngStream::new(s, 1));
            sum_sq += truth.at(Instant::from_secs_f64(0.5))[0].powi(2);
        }
        let var = sum_sq / n as f64;
        assert!((var - 0.25).abs() < 0.01, "{var}");
    }

    #[test]
    fn error_grows_linearly_with_age() {
        let cfg = wiener_cfg(SourceSpec::poisson(1.0), Dist::exponential(5.0));
        let trace = run_one_way(&cfg, 3, Instant::from_secs_f64(20_000.0), false).unwrap();
        let tracker = EstimationTracker::new(cfg.process.clone().unwrap(), Span::from_millis(50), Span::from_millis(250), 12);
        let r = tracker.evaluate(&trace).unwrap();
        let slope = r.fit_slope().unwrap();
        assert!((slope - 1.0).abs() < 0.05, "{slope}");
    }

    #[test]
    fn single_packet_then_silence() {
        let window = 10.0;
        let runs = 20_000;
        let mut total = 0.0;
        for seed in 0..runs {
            let pairs = [(Instant::ORIGIN, Some(Instant::ORIGIN))];
            let mut trace = DeliveryTrace::from_pairs(&pairs, Instant::from_secs_f64(window));
            trace.records[0].sample = Some(vec![0.0]);
            let tracker = EstimationTracker::new(ProcessModel::Wiener { sigma: 1.0, dim: 1 }, Span::from_millis(10), Span::from_secs(1), 10)
                .with_seed(seed);
            total += tracker.evaluate(&trace).unwrap().time_avg_g;
        }
        let mean = total / runs as f64;
        assert!((mean - window / 2.0).abs() / (window / 2.0) < 0.03, "{mean}");
    }

    #[test]
    fn needs_samples() {
        let trace = DeliveryTrace::from_pairs(&[(Instant::ORIGIN, Some(Instant::ORIGIN))], Instant(10));
        let tracker = EstimationTracker::new(ProcessModel::Wiener { sigma: 1.0, dim: 1 }, Span(1), Span(1), 1);
        assert!(tracker.evaluate(&trace).is_err());
    }
}
