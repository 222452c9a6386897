//! Reproducible per-entity random streams and the distribution vocabulary
//! used by every stochastic component.
//!
//! A stream is a ChaCha8 generator keyed by the run seed and selected by a
//! 64-bit stream id, so adding a new entity never perturbs the draws of an
//! existing one.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Geometric, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::time::Span;

/// SplitMix64 finalizer, used to derive child stream ids.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self { seed, stream_id, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// An independent stream for a sub-entity, keyed by `tag`.
    ///
    /// Derivation depends only on `(seed, stream_id, tag)`, never on how many
    /// draws the parent has made.
    pub fn derive(&self, tag: u64) -> RngStream {
        RngStream::new(self.seed, mix64(self.stream_id ^ mix64(tag)))
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        if p >= 1.0 {
            // consume a draw anyway so that p never changes stream alignment
            let _ = self.rng.next_u64();
            return true;
        }
        self.uniform() < p
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn normal(&mut self, mean: f64, std: f64) -> f64 {
        match Normal::new(mean, std) {
            Ok(n) => n.sample(&mut self.rng),
            Err(_) => mean,
        }
    }

    pub fn exponential(&mut self, rate: f64) -> f64 {
        Exp::new(rate).map(|e| e.sample(&mut self.rng)).unwrap_or(f64::INFINITY)
    }

    pub fn poisson(&mut self, mean: f64) -> u64 {
        if mean <= 0.0 {
            return 0;
        }
        Poisson::new(mean).map(|p| p.sample(&mut self.rng) as u64).unwrap_or(0)
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        use rand::seq::SliceRandom;
        items.shuffle(&mut self.rng);
    }

    pub fn draw(&mut self, dist: &Dist) -> f64 {
        dist.sample(self)
    }

    /// Draws from `dist`, interpreting the value as seconds.
    pub fn draw_span(&mut self, dist: &Dist) -> Span {
        Span::from_secs_f64(dist.sample(self))
    }
}

/// A real-valued distribution. When used for delays, values are seconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Dist {
    Deterministic {
        #[serde(rename = "value_s")]
        value: f64,
    },
    Exponential {
        #[serde(rename = "rate_per_s")]
        rate: f64,
    },
    Uniform {
        #[serde(rename = "low_s")]
        low: f64,
        #[serde(rename = "high_s")]
        high: f64,
    },
    /// Number of Bernoulli trials up to and including the first success.
    GeometricTrials {
        #[serde(rename = "success_prob")]
        p: f64,
    },
    Empirical {
        #[serde(rename = "samples_s")]
        samples: Vec<f64>,
    },
}

impl Dist {
    pub fn deterministic(value: f64) -> Self {
        Dist::Deterministic { value }
    }

    pub fn exponential(rate: f64) -> Self {
        Dist::Exponential { rate }
    }

    pub fn uniform(low: f64, high: f64) -> Self {
        Dist::Uniform { low, high }
    }

    pub fn geometric_trials(p: f64) -> Self {
        Dist::GeometricTrials { p }
    }

    pub fn empirical(samples: Vec<f64>) -> Self {
        Dist::Empirical { samples }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidDistribution(msg));
        match self {
            Dist::Deterministic { value } if !value.is_finite() => {
                bad(format!("deterministic value {value} is not finite"))
            }
            Dist::Exponential { rate } if !(*rate > 0.0 && rate.is_finite()) => {
                bad(format!("exponential rate must be positive, got {rate}"))
            }
            Dist::Uniform { low, high } if !(low <= high) || !low.is_finite() || !high.is_finite() => {
                bad(format!("uniform bounds need a <= b, got ({low}, {high})"))
            }
            Dist::GeometricTrials { p } if !(*p > 0.0 && *p <= 1.0) => {
                bad(format!("geometric success probability must lie in (0,1], got {p}"))
            }
            Dist::Empirical { samples } if samples.is_empty() => bad("empirical samples are empty".into()),
            Dist::Empirical { samples } if samples.iter().any(|s| !s.is_finite()) => {
                bad("empirical samples must be finite".into())
            }
            _ => Ok(()),
        }
    }

    /// Draws one value. Callers are expected to have validated `self`.
    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        match self {
            Dist::Deterministic { value } => *value,
            Dist::Exponential { rate } => rng.exponential(*rate),
            Dist::Uniform { low, high } => low + (high - low) * rng.uniform(),
            Dist::GeometricTrials { p } => {
                if *p >= 1.0 {
                    1.0
                } else {
                    // rand_distr counts failures before the first success
                    let g = Geometric::new(*p).expect("validated geometric");
                    (g.sample(&mut rng.rng) + 1) as f64
                }
            }
            Dist::Empirical { samples } => samples[rng.index(samples.len())],
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Dist::Deterministic { value } => *value,
            Dist::Exponential { rate } => 1.0 / rate,
            Dist::Uniform { low, high } => 0.5 * (low + high),
            Dist::GeometricTrials { p } => 1.0 / p,
            Dist::Empirical { samples } => samples.iter().sum::<f64>() / samples.len() as f64,
        }
    }

    /// Closed support `[min, max]`; `max` may be infinite.
    pub fn support(&self) -> (f64, f64) {
        match self {
            Dist::Deterministic { value } => (*value, *value),
            Dist::Exponential { .. } => (0.0, f64::INFINITY),
            Dist::Uniform { low, high } => (*low, *high),
            Dist::GeometricTrials { p } if *p >= 1.0 => (1.0, 1.0),
            Dist::GeometricTrials { .. } => (1.0, f64::INFINITY),
            Dist::Empirical { samples } => samples
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| (lo.min(s), hi.max(s))),
        }
    }

    pub fn as_deterministic(&self) -> Option<f64> {
        match self {
            Dist::Deterministic { value } => Some(*value),
            _ => None,
        }
    }
}
