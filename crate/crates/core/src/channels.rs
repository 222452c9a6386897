//! Channel models characterized by their latency-reliability behavior.
//!
//! A channel answers two questions: how long does one delivery attempt of a
//! `D`-bit packet take and did it succeed (`sample_attempt`), and what is
//! `Pr(latency <= tau | D)` (`latency_reliability`). The analytic curve is
//! available where a closed form exists; otherwise the empirical estimator
//! over sampled attempts applies.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{Dist, RngStream};
use crate::time::{Instant, Span};

/// Deterministic-timing channel: `n = ceil(D/r)` channel uses last `n/(2B)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShannonChannel {
    pub bandwidth_hz: f64,
    /// Per-attempt block error probability.
    #[serde(rename = "block_error_prob")]
    pub block_error: f64,
    #[serde(default = "one")]
    pub bits_per_channel_use: f64,
}

fn one() -> f64 {
    1.0
}

impl ShannonChannel {
    pub fn new(bandwidth_hz: f64, block_error: f64, bits_per_channel_use: f64) -> Self {
        Self { bandwidth_hz, block_error, bits_per_channel_use }
    }

    pub fn channel_uses(&self, size_bits: u64) -> u64 {
        (size_bits as f64 / self.bits_per_channel_use).ceil() as u64
    }

    /// Time for `n` channel uses under Nyquist-rate signalling.
    pub fn uses_duration(&self, n: f64) -> Span {
        Span::from_secs_f64(n / (2.0 * self.bandwidth_hz))
    }

    /// `T_n` for a `size_bits` packet.
    pub fn tx_time(&self, size_bits: u64) -> Span {
        self.uses_duration(self.channel_uses(size_bits) as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_hz > 0.0 && self.bandwidth_hz.is_finite()) {
            return Err(Error::validation("bandwidth_hz", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.block_error) {
            return Err(Error::validation("block_error_prob", "must lie in [0,1]"));
        }
        if !(self.bits_per_channel_use > 0.0 && self.bits_per_channel_use.is_finite()) {
            return Err(Error::validation("bits_per_channel_use", "must be positive"));
        }
        Ok(())
    }
}

/// Channel with a stochastic per-attempt delay and independent success.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampledChannel {
    pub delay: Dist,
    #[serde(default = "one")]
    pub success_prob: f64,
}

impl SampledChannel {
    pub fn new(delay: Dist, success_prob: f64) -> Self {
        Self { delay, success_prob }
    }

    pub fn validate(&self) -> Result<()> {
        self.delay.validate().map_err(|e| e.context("delay"))?;
        if !(0.0..=1.0).contains(&self.success_prob) {
            return Err(Error::validation("success_prob", "must lie in [0,1]"));
        }
        if self.delay.support().0 < 0.0 {
            return Err(Error::validation("delay", "delays cannot be negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Channel {
    Shannon(ShannonChannel),
    Sampled(SampledChannel),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Attempt {
    pub duration: Span,
    pub success: bool,
}

impl From<ShannonChannel> for Channel {
    fn from(c: ShannonChannel) -> Self {
        Channel::Shannon(c)
    }
}

impl From<SampledChannel> for Channel {
    fn from(c: SampledChannel) -> Self {
        Channel::Sampled(c)
    }
}

impl Channel {
    /// A lossless channel with a fixed per-attempt delay.
    pub fn fixed(delay: Span) -> Self {
        Channel::Sampled(SampledChannel::new(Dist::deterministic(delay.as_secs_f64()), 1.0))
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Channel::Shannon(c) => c.validate(),
            Channel::Sampled(c) => c.validate(),
        }
    }

    /// Per-attempt success probability.
    pub fn success_prob(&self) -> f64 {
        match self {
            Channel::Shannon(c) => 1.0 - c.block_error,
            Channel::Sampled(c) => c.success_prob,
        }
    }

    /// One delivery attempt. A failed attempt still consumes its duration.
    pub fn sample_attempt(&self, size_bits: u64, rng: &mut RngStream) -> Attempt {
        match self {
            Channel::Shannon(c) => {
                let success = rng.bernoulli(1.0 - c.block_error);
                Attempt { duration: c.tx_time(size_bits), success }
            }
            Channel::Sampled(c) => {
                let success = rng.bernoulli(c.success_prob);
                let duration = rng.draw_span(&c.delay);
                Attempt { duration, success }
            }
        }
    }

    /// Attempts until the first success, summing durations.
    ///
    /// Returns the delivery span and the number of attempts, or `None` when
    /// the channel never succeeds or `budget` elapses first.
    pub fn deliver_persistently(
        &self,
        size_bits: u64,
        rng: &mut RngStream,
        budget: Span,
    ) -> Option<(Span, u32)> {
        if self.success_prob() <= 0.0 {
            return None;
        }
        let mut total = Span::ZERO;
        let mut attempts = 0u32;
        loop {
            let a = self.sample_attempt(size_bits, rng);
            attempts += 1;
            total = total.saturating_add(a.duration);
            if total > budget {
                return None;
            }
            if a.success {
                return Some((total, attempts));
            }
        }
    }

    /// Analytic `Pr(latency <= tau | D)`.
    ///
    /// Without retransmission the curve is a single step to the per-attempt
    /// success probability at the attempt duration `T`. With persistent
    /// retransmission it is `1 - (1-p)^floor(tau/T)`.
    pub fn latency_reliability(&self, size_bits: u64, tau: Span, retransmit: bool) -> Result<f64> {
        let (attempt, p) = match self {
            Channel::Shannon(c) => (c.tx_time(size_bits), 1.0 - c.block_error),
            Channel::Sampled(SampledChannel { delay: Dist::Deterministic { value }, success_prob }) => {
                (Span::from_secs_f64(*value), *success_prob)
            }
            Channel::Sampled(_) => {
                return Err(Error::Unsupported("sampled channel with random delay".into()))
            }
        };
        if tau.is_zero() {
            return Ok(0.0);
        }
        let completed = if attempt.is_zero() { u64::MAX } else { tau.as_nanos() / attempt.as_nanos() };
        if completed == 0 {
            return Ok(0.0);
        }
        if !retransmit {
            return Ok(p);
        }
        if p >= 1.0 {
            return Ok(1.0);
        }
        let k = completed.min(i32::MAX as u64) as i32;
        Ok(1.0 - (1.0 - p).powi(k))
    }
}

/// Right-continuous empirical latency-reliability step curve.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalCurve {
    /// Sorted durations of successful samples.
    successes: Vec<Span>,
    total: usize,
}

/// Builds the empirical `F_D(tau)` from `(duration, success)` samples.
pub fn empirical_latency_reliability(samples: &[(Span, bool)]) -> Result<EmpiricalCurve> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut successes: Vec<Span> = samples.iter().filter(|(_, ok)| *ok).map(|(d, _)| *d).collect();
    successes.sort_unstable();
    Ok(EmpiricalCurve { successes, total: samples.len() })
}

impl EmpiricalCurve {
    pub fn eval(&self, tau: Span) -> f64 {
        let count = self.successes.partition_point(|d| *d <= tau);
        count as f64 / self.total as f64
    }

    /// Left limit `F(tau-)`.
    pub fn eval_left(&self, tau: Span) -> f64 {
        let count = self.successes.partition_point(|d| *d < tau);
        count as f64 / self.total as f64
    }

    /// Value the curve plateaus at.
    pub fn plateau(&self) -> f64 {
        self.successes.len() as f64 / self.total as f64
    }

    pub fn sample_count(&self) -> usize {
        self.total
    }

    /// Distinct jump locations, ascending.
    pub fn breakpoints(&self) -> Vec<Span> {
        let mut pts = self.successes.clone();
        pts.dedup();
        pts
    }

    /// Sup-norm distance to a right-continuous step function `reference`
    /// whose jumps all lie in `reference_jumps`.
    ///
    /// Both curves are piecewise constant, so checking the value and left
    /// limit at every jump of either curve is exact.
    pub fn sup_distance<F: Fn(Span) -> f64>(&self, reference: F, reference_jumps: &[Span]) -> f64 {
        let mut pts = self.breakpoints();
        pts.extend_from_slice(reference_jumps);
        pts.push(Span::ZERO);
        pts.sort_unstable();
        pts.dedup();
        pts.iter()
            .flat_map(|&t| {
                let at = (self.eval(t) - reference(t)).abs();
                let before = if t.is_zero() {
                    0.0
                } else {
                    (self.eval_left(t) - reference(t.saturating_sub(Span(1)))).abs()
                };
                [at, before]
            })
            .fold(0.0, f64::max)
    }
}

/// Monotone completion predicate over a set of per-item delivery instants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CompletionPredicate {
    /// At least `k` of the `m` receivers hold the packet.
    KOfM { k: usize, m: usize },
    /// The first `l` packets of a batch have all arrived.
    OrderedPrefix { l: usize },
}

/// Conditioning context for a contextual latency-reliability curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelContext {
    pub label: String,
    pub predicate: CompletionPredicate,
}

impl ChannelContext {
    pub fn new(label: impl Into<String>, predicate: CompletionPredicate) -> Self {
        Self { label: label.into(), predicate }
    }

    /// The earliest instant at which the predicate holds, if ever.
    pub fn completion_instant(&self, deliveries: &[Option<Instant>]) -> Result<Option<Instant>> {
        match self.predicate {
            CompletionPredicate::KOfM { k, m } => {
                if k == 0 || k > m || deliveries.len() != m {
                    return Err(Error::InvalidK { k, m });
                }
                let mut done: Vec<Instant> = deliveries.iter().flatten().copied().collect();
                if done.len() < k {
                    return Ok(None);
                }
                done.sort_unstable();
                Ok(Some(done[k - 1]))
            }
            CompletionPredicate::OrderedPrefix { l } => {
                if l == 0 || l > deliveries.len() {
                    return Err(Error::InvalidK { k: l, m: deliveries.len() });
                }
                let prefix = &deliveries[..l];
                if prefix.iter().any(Option::is_none) {
                    return Ok(None);
                }
                Ok(prefix.iter().flatten().copied().max())
            }
        }
    }

    /// Empirical contextual curve `F_C(tau)` from `(anchor, deliveries)` sets.
    pub fn contextual_reliability(
        &self,
        cases: &[(Instant, Vec<Option<Instant>>)],
    ) -> Result<EmpiricalCurve> {
        let samples = cases
            .iter()
            .map(|(anchor, deliveries)| {
                Ok(match self.completion_instant(deliveries)? {
                    Some(done) => (done.saturating_since(*anchor), true),
                    None => (Span::ZERO, false),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        empirical_latency_reliability(&samples)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shannon(eps: f64) -> Channel {
        ShannonChannel::new(1e6, eps, 1.0).into()
    }

    #[test]
    fn shannon_attempt_duration() {
        let mut rng = RngStream::new(1, 1);
        let a = shannon(0.0).sample_attempt(1000, &mut rng);
        assert_eq!(a, Attempt { duration: Span::from_micros(500), success: true });
    }

    #[test]
    fn shannon_uses_round_up() {
        let c = ShannonChannel::new(1e6, 0.0, 3.0);
        assert_eq!(c.channel_uses(10), 4);
        assert_eq!(c.tx_time(10), Span::from_nanos(2000));
    }

    #[test]
    fn certain_sampled_channel() {
        let mut rng = RngStream::new(1, 1);
        let ch = Channel::fixed(Span::from_millis(2));
        for size in [1, 100, 10_000] {
            let a = ch.sample_attempt(size, &mut rng);
            assert_eq!(a, Attempt { duration: Span::from_millis(2), success: true });
        }
    }

    #[test]
    fn shannon_success_fraction() {
        let mut rng = RngStream::new(9, 2);
        let ch = shannon(0.5);
        let n = 1_000_000;
        let ok = (0..n).filter(|_| ch.sample_attempt(100, &mut rng).success).count();
        let frac = ok as f64 / n as f64;
        assert!((frac - 0.5).abs() / 0.5 < 0.002, "{frac}");
    }

    #[test]
    fn analytic_curve_values() {
        let ch = shannon(0.1);
        let t = ShannonChannel::new(1e6, 0.1, 1.0).tx_time(1000);
        assert_eq!(ch.latency_reliability(1000, t, false).unwrap(), 0.9);
        assert_eq!(ch.latency_reliability(1000, Span::ZERO, true).unwrap(), 0.0);
        let r = ch.latency_reliability(1000, Span(3 * t.as_nanos()), true).unwrap();
        assert!((r - 0.999).abs() < 1e-12);
        assert_eq!(ch.latency_reliability(1000, t - Span(1), true).unwrap(), 0.0);
    }

    #[test]
    fn plateau_semantics() {
        let ch = shannon(0.3);
        let far = Span::from_secs(1000);
        assert!((ch.latency_reliability(64, far, false).unwrap() - 0.7).abs() < 1e-12);
        assert!((ch.latency_reliability(64, far, true).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lossless_shannon_is_unit_step() {
        let c = ShannonChannel::new(2e6, 0.0, 2.0);
        let ch: Channel = c.clone().into();
        let t = c.tx_time(999);
        assert_eq!(t, Span::from_secs_f64(500.0 / 4e6));
        assert_eq!(ch.latency_reliability(999, t - Span(1), false).unwrap(), 0.0);
        assert_eq!(ch.latency_reliability(999, t, false).unwrap(), 1.0);
    }

    #[test]
    fn random_delay_has_no_closed_form() {
        let ch: Channel = SampledChannel::new(Dist::exponential(1.0), 1.0).into();
        assert!(matches!(ch.latency_reliability(1, Span(5), false), Err(Error::Unsupported(_))));
    }

    #[test]
    fn empirical_direct_count() {
        let curve = empirical_latency_reliability(&[
            (Span::from_millis(1), true),
            (Span::from_millis(2), true),
        ])
        .unwrap();
        assert_eq!(curve.eval(Span::from_micros(1500)), 0.5);
        assert_eq!(curve.eval(Span::from_millis(2)), 1.0);
    }

    #[test]
    fn empirical_all_failures() {
        let curve = empirical_latency_reliability(&[(Span(5), false), (Span(9), false)]).unwrap();
        for t in [0, 5, 9, 1_000_000] {
            assert_eq!(curve.eval(Span(t)), 0.0);
        }
        assert_eq!(curve.plateau(), 0.0);
    }

    #[test]
    fn empirical_rejects_empty() {
        assert_eq!(empirical_latency_reliability(&[]), Err(Error::EmptySample));
    }

    #[test]
    fn k_of_m_context() {
        let ctx = ChannelContext::new("mc", CompletionPredicate::KOfM { k: 2, m: 3 });
        let d = [Some(Instant(1)), None, Some(Instant(9))];
        assert_eq!(ctx.completion_instant(&d).unwrap(), Some(Instant(9)));
        let d = [Some(Instant(1)), None, None];
        assert_eq!(ctx.completion_instant(&d).unwrap(), None);
    }

    #[test]
    fn ordered_prefix_context() {
        let ctx = ChannelContext::new("batch", CompletionPredicate::OrderedPrefix { l: 2 });
        let d = [Some(Instant(4)), Some(Instant(2)), None];
        assert_eq!(ctx.completion_instant(&d).unwrap(), Some(Instant(4)));
        let d = [None, Some(Instant(2)), Some(Instant(3))];
        assert_eq!(ctx.completion_instant(&d).unwrap(), None);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn curve_monotone_in_tau_and_size(
                eps in 0.0f64..0.99,
                bw in 1e3f64..1e7,
                size in 1u64..10_000,
                extra in 0u64..5_000,
                retransmit: bool,
                t1 in 0u64..50_000_000,
                dt in 0u64..50_000_000,
            ) {
                let ch: Channel = ShannonChannel::new(bw, eps, 1.0).into();
                let a = ch.latency_reliability(size, Span(t1), retransmit).unwrap();
                let b = ch.latency_reliability(size, Span(t1 + dt), retransmit).unwrap();
                prop_assert!(a <= b);
                prop_assert!((0.0..=1.0).contains(&a));
                let bigger = ch.latency_reliability(size + extra, Span(t1), retransmit).unwrap();
                prop_assert!(bigger <= a);
            }
        }
    }
}
