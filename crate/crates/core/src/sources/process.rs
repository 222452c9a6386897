//! Physical processes observed by a source.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::time::{Instant, Span};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProcessModel {
    /// Independent Brownian motion per coordinate; increments over `s`
    /// seconds have variance `sigma^2 * s`.
    Wiener {
        #[serde(rename = "sigma_per_sqrt_s")]
        sigma: f64,
        #[serde(default = "one_dim")]
        dim: usize,
    },
    /// Symmetric two-state chain on {0, 1}; flips form a Poisson process.
    TwoStateMarkov {
        #[serde(rename = "flip_rate_per_s")]
        flip_rate: f64,
        #[serde(default)]
        initial: u8,
    },
    Constant {
        value: f64,
    },
}

fn one_dim() -> usize {
    1
}

impl ProcessModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            ProcessModel::Wiener { sigma, dim } => {
                if !(*sigma >= 0.0 && sigma.is_finite()) {
                    return Err(Error::validation("sigma_per_sqrt_s", "must be non-negative"));
                }
                if *dim == 0 {
                    return Err(Error::validation("dim", "must be at least 1"));
                }
            }
            ProcessModel::TwoStateMarkov { flip_rate, initial } => {
                if !(*flip_rate >= 0.0 && flip_rate.is_finite()) {
                    return Err(Error::validation("flip_rate_per_s", "must be non-negative"));
                }
                if *initial > 1 {
                    return Err(Error::validation("initial", "two-state process starts in 0 or 1"));
                }
            }
            ProcessModel::Constant { value } if !value.is_finite() => {
                return Err(Error::validation("value", "must be finite"));
            }
            ProcessModel::Constant { .. } => {}
        }
        Ok(())
    }

    pub fn initial_state(&self) -> Vec<f64> {
        match self {
            ProcessModel::Wiener { dim, .. } => vec![0.0; *dim],
            ProcessModel::TwoStateMarkov { initial, .. } => vec![*initial as f64],
            ProcessModel::Constant { value } => vec![*value],
        }
    }

    /// True when the process can never move.
    pub fn is_static(&self) -> bool {
        match self {
            ProcessModel::Constant { .. } => true,
            ProcessModel::Wiener { sigma, .. } => *sigma == 0.0,
            ProcessModel::TwoStateMarkov { flip_rate, .. } => *flip_rate == 0.0,
        }
    }

    /// Advances `state` by `span` under the model's law. Zero span is the identity.
    pub fn evolve(&self, state: &mut [f64], span: Span, rng: &mut RngStream) {
        self.evolve_recording(state, Instant::ORIGIN, span, rng, None);
    }

    /// Like [`evolve`](Self::evolve), starting at `from`, and appending the
    /// instants of two-state flips to `flips` when given.
    pub fn evolve_recording(
        &self,
        state: &mut [f64],
        from: Instant,
        span: Span,
        rng: &mut RngStream,
        flips: Option<&mut Vec<Instant>>,
    ) {
        if span.is_zero() {
            return;
        }
        match self {
            ProcessModel::Wiener { sigma, .. } => {
                let scale = sigma * span.as_secs_f64().sqrt();
                for x in state.iter_mut() {
                    *x += scale * rng.standard_normal();
                }
            }
            ProcessModel::TwoStateMarkov { flip_rate, .. } => {
                if *flip_rate == 0.0 {
                    return;
                }
                // memoryless: restart the exponential clock at `from`
                let mut recorder = flips;
                let end = from + span;
                let mut t = from;
                loop {
                    let gap = Span::from_secs_f64(rng.exponential(*flip_rate));
                    t = t.saturating_add(gap);
                    if t > end {
                        break;
                    }
                    state[0] = 1.0 - state[0];
                    if let Some(rec) = recorder.as_deref_mut() {
                        rec.push(t);
                    }
                }
            }
            ProcessModel::Constant { .. } => {}
        }
    }
}

/// A process realization advanced lazily along the simulation clock.
#[derive(Clone, Debug)]
pub struct ProcessTrack {
    model: ProcessModel,
    state: Vec<f64>,
    at: Instant,
    rng: RngStream,
    flips: Option<Vec<Instant>>,
}

impl ProcessTrack {
    pub fn new(model: ProcessModel, rng: RngStream) -> Self {
        let state = model.initial_state();
        Self { model, state, at: Instant::ORIGIN, rng, flips: None }
    }

    /// Also remember every flip of a two-state process.
    pub fn recording_flips(mut self) -> Self {
        self.flips = Some(Vec::new());
        self
    }

    pub fn model(&self) -> &ProcessModel {
        &self.model
    }

    pub fn now(&self) -> Instant {
        self.at
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    /// Advances to `t`; earlier instants are ignored.
    pub fn advance_to(&mut self, t: Instant) -> &[f64] {
        if t > self.at {
            let span = t - self.at;
            self.model.evolve_recording(&mut self.state, self.at, span, &mut self.rng, self.flips.as_mut());
            self.at = t;
        }
        &self.state
    }

    pub fn flips(&self) -> Option<&[Instant]> {
        self.flips.as_deref()
    }

    pub fn into_flips(self) -> Vec<Instant> {
        self.flips.unwrap_or_default()
    }
}

/// A fully realized two-state path: initial value and flip instants.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoStatePath {
    pub initial: u8,
    pub flips: Vec<Instant>,
}

impl TwoStatePath {
    pub fn simulate(flip_rate: f64, initial: u8, horizon: Instant, rng: &mut RngStream) -> Self {
        let model = ProcessModel::TwoStateMarkov { flip_rate, initial };
        let mut state = vec![initial as f64];
        let mut flips = Vec::new();
        model.evolve_recording(&mut state, Instant::ORIGIN, horizon.since_origin(), rng, Some(&mut flips));
        Self { initial, flips }
    }

    /// State at `t` (right-continuous).
    pub fn value_at(&self, t: Instant) -> u8 {
        let n = self.flips.partition_point(|f| *f <= t);
        self.initial ^ (n as u8 & 1)
    }
}
