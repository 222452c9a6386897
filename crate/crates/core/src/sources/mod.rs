//! Update generation, observed processes and transmit queues.

mod process;
mod queue;

pub use process::{ProcessModel, ProcessTrack, TwoStatePath};
pub use queue::{Discipline, Overflow, QueueEffect, QueueSpec, TransmitQueue};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::time::{Instant, Span};

/// One status update. `generated_at` is the timing anchor.
#[derive(Clone, Debug, PartialEq)]
pub struct Packet {
    pub seq: u64,
    pub generated_at: Instant,
    pub size_bits: u64,
    pub sample: Option<Vec<f64>>,
}

impl Packet {
    pub fn new(seq: u64, generated_at: Instant, size_bits: u64) -> Self {
        Self { seq, generated_at, size_bits, sample: None }
    }

    pub fn with_sample(mut self, sample: Vec<f64>) -> Self {
        self.sample = Some(sample);
        self
    }
}

fn default_tick() -> f64 {
    1e-3
}

/// When a source produces updates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SourceSpec {
    Periodic {
        period_s: f64,
        #[serde(default)]
        offset_s: f64,
    },
    Poisson {
        rate_per_s: f64,
    },
    /// Fires when the observed process has moved by at least `delta`
    /// (Euclidean norm) from the last sampled value, checked every tick.
    EventThreshold {
        delta: f64,
        #[serde(default = "default_tick")]
        tick_s: f64,
    },
}

impl SourceSpec {
    pub fn periodic(period: Span) -> Self {
        SourceSpec::Periodic { period_s: period.as_secs_f64(), offset_s: 0.0 }
    }

    pub fn poisson(rate_per_s: f64) -> Self {
        SourceSpec::Poisson { rate_per_s }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SourceSpec::Periodic { period_s, offset_s } => {
                if !(*period_s > 0.0) || Span::from_secs_f64(*period_s).is_zero() {
                    return Err(Error::validation("period_s", "must be positive"));
                }
                if !(*offset_s >= 0.0) {
                    return Err(Error::validation("offset_s", "must be non-negative"));
                }
            }
            SourceSpec::Poisson { rate_per_s } => {
                if !(*rate_per_s > 0.0 && rate_per_s.is_finite()) {
                    return Err(Error::validation("rate_per_s", "must be positive"));
                }
            }
            SourceSpec::EventThreshold { delta, tick_s } => {
                if !(*delta > 0.0) {
                    return Err(Error::validation("delta", "must be positive"));
                }
                if !(*tick_s > 0.0) || Span::from_secs_f64(*tick_s).is_zero() {
                    return Err(Error::validation("tick_s", "must be positive"));
                }
            }
        }
        Ok(())
    }

    pub fn needs_process(&self) -> bool {
        matches!(self, SourceSpec::EventThreshold { .. })
    }

    /// Instant of the first generation.
    pub fn first_generation(&self, rng: &mut RngStream) -> Instant {
        match self {
            SourceSpec::Periodic { offset_s, .. } => Instant::from_secs_f64(*offset_s),
            SourceSpec::Poisson { rate_per_s } => Instant::from_secs_f64(rng.exponential(*rate_per_s)),
            // the first sample establishes the threshold baseline
            SourceSpec::EventThreshold { .. } => Instant::ORIGIN,
        }
    }

    /// Next generation strictly after `now`, or `None` if there is none at
    /// or before `limit`.
    ///
    /// Event-threshold sources advance `process` tick by tick and compare
    /// against `last_sample`.
    pub fn next_generation(
        &self,
        now: Instant,
        rng: &mut RngStream,
        process: Option<&mut ProcessTrack>,
        last_sample: Option<&[f64]>,
        limit: Instant,
    ) -> Option<Instant> {
        let next = match self {
            SourceSpec::Periodic { period_s, .. } => now + Span::from_secs_f64(*period_s),
            SourceSpec::Poisson { rate_per_s } => {
                // zero-length gaps would break the "strictly after" contract
                let gap = Span::from_secs_f64(rng.exponential(*rate_per_s)).max(Span(1));
                now.saturating_add(gap)
            }
            SourceSpec::EventThreshold { delta, tick_s } => {
                let process = process?;
                if process.model().is_static() {
                    return None;
                }
                let tick = Span::from_secs_f64(*tick_s);
                let baseline: Vec<f64> = match last_sample {
                    Some(s) => s.to_vec(),
                    None => process.state().to_vec(),
                };
                let mut t = now;
                loop {
                    t = t.saturating_add(tick);
                    if t > limit {
                        return None;
                    }
                    let x = process.advance_to(t);
                    let dist2: f64 = x.iter().zip(&baseline).map(|(a, b)| (a - b) * (a - b)).sum();
                    if dist2 >= delta * delta {
                        break t;
                    }
                }
            }
        };
        (next <= limit).then_some(next)
    }
}
