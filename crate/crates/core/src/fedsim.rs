//! Federated-learning round timing and a quadratic toy trainer.
//!
//! A round lasts as long as its slowest participating device takes to
//! compute and upload; the learning latency is the sum of round maxima.
//! The trainer runs gradient descent on `L(w) = ½‖w − w*‖²` with noisy
//! local gradients so convergence can be checked by hand.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{par_map_range, Parallelism};
use crate::rng::{mix64, Dist, RngStream};
use crate::time::Span;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceProfile {
    pub compute: Dist,
    pub upload: Dist,
    /// Local batch size; local gradient noise shrinks with its square root.
    #[serde(default = "one")]
    pub batch: u32,
}

fn one() -> u32 {
    1
}

impl DeviceProfile {
    pub fn new(compute: Dist, upload: Dist) -> Self {
        Self { compute, upload, batch: 1 }
    }

    /// Deterministic device taking `secs` in total.
    pub fn fixed(secs: f64) -> Self {
        Self::new(Dist::deterministic(secs), Dist::deterministic(0.0))
    }

    pub fn validate(&self) -> Result<()> {
        self.compute.validate().map_err(|e| e.context("compute"))?;
        self.upload.validate().map_err(|e| e.context("upload"))?;
        if self.batch == 0 {
            return Err(Error::validation("batch", "must be at least 1"));
        }
        Ok(())
    }

    pub fn draw(&self, rng: &mut RngStream) -> Span {
        rng.draw_span(&self.compute) + rng.draw_span(&self.upload)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StragglerPolicy {
    #[default]
    None,
    /// Skip devices whose local gradient norm is below the threshold.
    Lazy { gradient_norm_threshold: f64 },
    /// Listed devices upload only in rounds divisible by `upload_every_m_rounds`
    /// (rounds count from 1).
    ReducedFrequency { straggler_ids: Vec<usize>, upload_every_m_rounds: u32 },
}

impl StragglerPolicy {
    pub fn validate(&self, n_devices: usize) -> Result<()> {
        match self {
            StragglerPolicy::None => Ok(()),
            StragglerPolicy::Lazy { gradient_norm_threshold } if !(*gradient_norm_threshold >= 0.0) => {
                Err(Error::validation("gradient_norm_threshold", "must be non-negative"))
            }
            StragglerPolicy::Lazy { .. } => Ok(()),
            StragglerPolicy::ReducedFrequency { straggler_ids, upload_every_m_rounds } => {
                if *upload_every_m_rounds == 0 {
                    return Err(Error::validation("upload_every_m_rounds", "must be at least 1"));
                }
                match straggler_ids.iter().find(|&&d| d >= n_devices) {
                    Some(d) => Err(Error::validation("straggler_ids", format!("device {d} does not exist"))),
                    None => Ok(()),
                }
            }
        }
    }

    /// Whether `device` takes part in `round`. `local_norm` is only
    /// consulted by the lazy policy.
    pub fn participates(&self, device: usize, round: u32, local_norm: Option<f64>) -> bool {
        match self {
            StragglerPolicy::None => true,
            StragglerPolicy::Lazy { gradient_norm_threshold } => {
                local_norm.is_none_or(|n| n >= *gradient_norm_threshold)
            }
            StragglerPolicy::ReducedFrequency { straggler_ids, upload_every_m_rounds } => {
                !straggler_ids.contains(&device) || round.is_multiple_of(*upload_every_m_rounds)
            }
        }
    }
}

/// Maximum latency over participating devices.
pub fn round_latency(latencies: &[Span], participating: &[bool], round: u32) -> Result<Span> {
    latencies
        .iter()
        .zip(participating)
        .filter(|(_, p)| **p)
        .map(|(l, _)| *l)
        .max()
        .ok_or(Error::NoParticipants { round })
}

/// Sum of per-round maxima.
pub fn learning_latency(per_round: &[Span]) -> Span {
    per_round.iter().copied().sum()
}

const STREAM_LATENCY: u64 = 61;
const STREAM_NOISE: u64 = 62;

fn device_streams(seed: u64, base: u64, k: usize) -> Vec<RngStream> {
    let root = RngStream::new(seed, base);
    (0..k).map(|d| root.derive(d as u64)).collect()
}

/// Per-round latencies of a timing-only run. Every device draws its latency
/// every round, participating or not, so runs with the same seed see the
/// same draws under any policy.
pub fn simulate_latencies(devices: &[DeviceProfile], policy: &StragglerPolicy, rounds: u32, seed: u64) -> Result<Vec<Span>> {
    if devices.is_empty() {
        return Err(Error::validation("devices", "need at least one device"));
    }
    for d in devices {
        d.validate()?;
    }
    policy.validate(devices.len())?;
    if matches!(policy, StragglerPolicy::Lazy { .. }) {
        return Err(Error::Unsupported("the lazy policy needs gradients; use train_quadratic".into()));
    }
    let mut rngs = device_streams(seed, STREAM_LATENCY, devices.len());
    (1..=rounds)
        .map(|n| {
            let lat: Vec<Span> = devices.iter().zip(rngs.iter_mut()).map(|(d, r)| d.draw(r)).collect();
            let part: Vec<bool> = (0..devices.len()).map(|k| policy.participates(k, n, None)).collect();
            round_latency(&lat, &part, n)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticTask {
    pub w_star: Vec<f64>,
    pub w0: Vec<f64>,
    /// Per-device gradient offsets; they must average to zero over devices.
    #[serde(default)]
    pub offsets: Vec<Vec<f64>>,
    pub noise_scale: f64,
    #[serde(rename = "step")]
    pub mu: f64,
    pub delta: f64,
    /// Each device updates only the coordinates `i` with `i % K == k`.
    #[serde(default)]
    pub split_blocks: bool,
}

impl QuadraticTask {
    pub fn new(w_star: Vec<f64>, w0: Vec<f64>, noise_scale: f64, mu: f64, delta: f64) -> Self {
        Self { w_star, w0, offsets: Vec::new(), noise_scale, mu, delta, split_blocks: false }
    }

    pub fn dim(&self) -> usize {
        self.w_star.len()
    }

    pub fn validate(&self, n_devices: usize) -> Result<()> {
        if !(self.mu > 0.0) || !self.mu.is_finite() {
            return Err(Error::InvalidStep(self.mu));
        }
        if self.w_star.is_empty() || self.w0.len() != self.w_star.len() {
            return Err(Error::validation("w0", "must match the dimension of w_star"));
        }
        if !(self.noise_scale >= 0.0) {
            return Err(Error::validation("noise_scale", "must be non-negative"));
        }
        if !(self.delta > 0.0) {
            return Err(Error::validation("delta", "must be positive"));
        }
        if !self.offsets.is_empty() {
            if self.offsets.len() != n_devices || self.offsets.iter().any(|o| o.len() != self.dim()) {
                return Err(Error::validation("offsets", "need one offset vector of dimension d per device"));
            }
            for i in 0..self.dim() {
                let mean = self.offsets.iter().map(|o| o[i]).sum::<f64>() / n_devices as f64;
                if mean.abs() > 1e-9 {
                    return Err(Error::validation("offsets", "must average to zero over devices"));
                }
            }
        }
        Ok(())
    }

    /// Ground-truth gradient norm `‖w − w*‖`.
    pub fn gradient_norm(&self, w: &[f64]) -> f64 {
        w.iter().zip(&self.w_star).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }

    /// Device `k`'s noisy gradient estimate at `w`.
    pub fn local_gradient(&self, k: usize, batch: u32, w: &[f64], rng: &mut RngStream) -> Vec<f64> {
        let sd = self.noise_scale / (batch as f64).sqrt();
        (0..self.dim())
            .map(|i| {
                let offset = self.offsets.get(k).map_or(0.0, |o| o[i]);
                w[i] - self.w_star[i] + offset + sd * rng.standard_normal()
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainTrace {
    /// `w⁽ⁿ⁾` for `n = 0..=N`.
    pub models: Vec<Vec<f64>>,
    /// `‖∇L(w⁽ⁿ⁾)‖` for `n = 0..=N`.
    pub gradient_norms: Vec<f64>,
    /// Latency of rounds `1..=N`.
    pub latencies: Vec<Span>,
    pub participants: Vec<usize>,
}

impl TrainTrace {
    pub fn learning_latency(&self) -> Span {
        learning_latency(&self.latencies)
    }

    /// First round whose model meets `‖g‖ ≤ delta`.
    pub fn converged_at(&self, delta: f64) -> Option<u32> {
        self.gradient_norms.iter().position(|g| *g <= delta).map(|n| n as u32)
    }
}

/// Runs `rounds` rounds of federated gradient descent.
///
/// Devices compute against the global model they last downloaded, which is
/// the model after their last participating round, so reduced-frequency
/// stragglers send stale gradients. Lazy rounds in which nobody qualifies
/// leave the model unchanged and take no time.
pub fn train_quadratic(
    task: &QuadraticTask,
    devices: &[DeviceProfile],
    policy: &StragglerPolicy,
    rounds: u32,
    seed: u64,
) -> Result<TrainTrace> {
    let k = devices.len();
    if k == 0 {
        return Err(Error::validation("devices", "need at least one device"));
    }
    task.validate(k)?;
    for d in devices {
        d.validate()?;
    }
    policy.validate(k)?;
    let d = task.dim();
    let mut lat_rngs = device_streams(seed, STREAM_LATENCY, k);
    let mut noise_rngs = device_streams(seed, STREAM_NOISE, k);
    let mut w = task.w0.clone();
    let mut local_models = vec![task.w0.clone(); k];
    let mut trace = TrainTrace {
        models: vec![w.clone()],
        gradient_norms: vec![task.gradient_norm(&w)],
        latencies: Vec::with_capacity(rounds as usize),
        participants: Vec::with_capacity(rounds as usize),
    };
    let lazy = matches!(policy, StragglerPolicy::Lazy { .. });
    for n in 1..=rounds {
        let lat: Vec<Span> = devices.iter().zip(lat_rngs.iter_mut()).map(|(dev, r)| dev.draw(r)).collect();
        let grads: Vec<Vec<f64>> = (0..k)
            .map(|j| task.local_gradient(j, devices[j].batch, &local_models[j], &mut noise_rngs[j]))
            .collect();
        let part: Vec<bool> = (0..k)
            .map(|j| {
                let norm = grads[j].iter().map(|x| x * x).sum::<f64>().sqrt();
                policy.participates(j, n, Some(norm))
            })
            .collect();
        let latency = match round_latency(&lat, &part, n) {
            Ok(l) => l,
            Err(Error::NoParticipants { .. }) if lazy => Span::ZERO,
            Err(e) => return Err(e),
        };
        let mut sum = vec![0.0; d];
        let mut cover = vec![0u32; d];
        for j in (0..k).filter(|&j| part[j]) {
            for i in 0..d {
                if !task.split_blocks || i % k == j {
                    sum[i] += grads[j][i];
                    cover[i] += 1;
                }
            }
        }
        for i in 0..d {
            if cover[i] > 0 {
                w[i] -= task.mu * sum[i] / cover[i] as f64;
            }
        }
        for j in (0..k).filter(|&j| part[j] || !matches!(policy, StragglerPolicy::ReducedFrequency { .. })) {
            local_models[j].clone_from(&w);
        }
        trace.latencies.push(latency);
        trace.participants.push(part.iter().filter(|p| **p).count());
        trace.gradient_norms.push(task.gradient_norm(&w));
        trace.models.push(w.clone());
    }
    Ok(trace)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReliabilityCurve {
    /// `(N, F_C(N))` in grid order.
    pub points: Vec<(u32, f64)>,
    pub target: Option<f64>,
    /// Smallest grid `N` with `F_C(N) ≥ target`.
    pub n_star: Option<u32>,
}

/// Fraction of trials that have converged within `N` rounds, for each `N`
/// in `grid`. A trial counts as converged from the first round its gradient
/// norm drops to `delta`. Trial `t` uses seed `mix(seed, t)` and one
/// trajectory serves every grid point.
#[allow(clippy::too_many_arguments)]
pub fn round_reliability(
    task: &QuadraticTask,
    devices: &[DeviceProfile],
    policy: &StragglerPolicy,
    grid: &[u32],
    trials: u32,
    target: Option<f64>,
    seed: u64,
    mode: Parallelism,
) -> Result<ReliabilityCurve> {
    if trials == 0 {
        return Err(Error::validation("trials", "must be at least 1"));
    }
    let max_n = grid.iter().copied().max().unwrap_or(0);
    let hits: Vec<Result<Option<u32>>> = par_map_range(trials as u64, mode, |t| {
        train_quadratic(task, devices, policy, max_n, mix64(seed ^ mix64(t))).map(|tr| tr.converged_at(task.delta))
    });
    let hits: Vec<Option<u32>> = hits.into_iter().collect::<Result<_>>()?;
    let points: Vec<(u32, f64)> = grid
        .iter()
        .map(|&n| (n, hits.iter().filter(|h| h.is_some_and(|c| c <= n)).count() as f64 / trials as f64))
        .collect();
    let n_star = target.and_then(|p0| {
        let mut sorted = points.clone();
        sorted.sort_by_key(|p| p.0);
        sorted.into_iter().find(|p| p.1 >= p0).map(|p| p.0)
    });
    Ok(ReliabilityCurve { points, target, n_star })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceCheck {
    /// `(N, E[(1/N) Σ_{n<N} ‖g(w⁽ⁿ⁾)‖])`.
    pub points: Vec<(u32, f64)>,
    /// Least-squares slope of the log average against log N.
    pub slope: f64,
    /// Envelope constant: the averages are compared with `c / √N`.
    pub envelope_c: f64,
    pub consistent: bool,
}

/// Largest slope accepted as a `1/√N` decay.
pub const SLOPE_TOLERANCE: f64 = -0.5 + 0.1;

/// Fits the decay exponent of the average gradient norm and checks it
/// against a `c/√N` bound. The envelope is anchored at the smallest `N` and
/// sized so a sequence decaying at exactly the tolerance slope touches it at
/// the largest `N`.
pub fn convergence_rate_check(points: &[(u32, f64)]) -> Result<ConvergenceCheck> {
    let usable: Vec<(u32, f64)> = points.iter().copied().filter(|(n, v)| *n > 0 && *v > 0.0).collect();
    if usable.len() < 4 {
        return Err(Error::InsufficientGrid { needed: 4, got: usable.len() });
    }
    let xs: Vec<f64> = usable.iter().map(|(n, _)| (*n as f64).ln()).collect();
    let ys: Vec<f64> = usable.iter().map(|(_, v)| v.ln()).collect();
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let (n0, v0) = *usable.iter().min_by_key(|p| p.0).expect("non-empty");
    let n_max = usable.iter().map(|p| p.0).max().expect("non-empty");
    let envelope_c = v0 * (n0 as f64).sqrt() * (n_max as f64 / n0 as f64).powf(0.5 + SLOPE_TOLERANCE);
    let under = usable.iter().all(|(n, v)| *v <= envelope_c / (*n as f64).sqrt() * (1.0 + 1e-12));
    Ok(ConvergenceCheck { points: points.to_vec(), slope, envelope_c, consistent: slope <= SLOPE_TOLERANCE && under })
}

/// Average gradient norm over the first `N` models, averaged over trials,
/// with step `c3/√N` at each grid point.
#[allow(clippy::too_many_arguments)]
pub fn convergence_ensemble(
    task: &QuadraticTask,
    devices: &[DeviceProfile],
    policy: &StragglerPolicy,
    grid: &[u32],
    trials: u32,
    c3: f64,
    seed: u64,
    mode: Parallelism,
) -> Result<Vec<(u32, f64)>> {
    grid.iter()
        .map(|&n| {
            let mut t = task.clone();
            t.mu = c3 / (n as f64).sqrt();
            let avgs: Vec<Result<f64>> = par_map_range(trials as u64, mode, |trial| {
                let tr = train_quadratic(&t, devices, policy, n, mix64(seed ^ mix64(trial)))?;
                Ok(tr.gradient_norms[..n as usize].iter().sum::<f64>() / n as f64)
            });
            let avgs: Vec<f64> = avgs.into_iter().collect::<Result<_>>()?;
            Ok((n, avgs.iter().sum::<f64>() / trials as f64))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixed(lat: &[f64]) -> Vec<DeviceProfile> {
        lat.iter().map(|&s| DeviceProfile::fixed(s)).collect()
    }

    fn secs(v: f64) -> Span {
        Span::from_secs_f64(v)
    }

    #[test]
    fn round_max() {
        let lat = [secs(2.0), secs(5.0), secs(3.0)];
        assert_eq!(round_latency(&lat, &[true; 3], 1).unwrap(), secs(5.0));
        assert_eq!(round_latency(&lat, &[true, false, true], 1).unwrap(), secs(3.0));
        assert_eq!(round_latency(&lat[..1], &[true], 1).unwrap(), secs(2.0));
        assert_eq!(round_latency(&lat, &[false; 3], 4), Err(Error::NoParticipants { round: 4 }));
    }

    #[test]
    fn sum_of_maxima() {
        assert_eq!(learning_latency(&[secs(5.0), secs(6.0)]), secs(11.0));
        let devs = fixed(&[2.0, 5.0, 3.0]);
        let none = simulate_latencies(&devs, &StragglerPolicy::None, 10, 1).unwrap();
        assert_eq!(learning_latency(&none), secs(50.0));
        let policy = StragglerPolicy::ReducedFrequency { straggler_ids: vec![1], upload_every_m_rounds: 2 };
        let reduced = simulate_latencies(&devs, &policy, 10, 1).unwrap();
        assert_eq!(learning_latency(&reduced), secs(40.0));
    }

    #[test]
    fn one_step_convergence() {
        let task = QuadraticTask::new(vec![1.0, -2.0, 3.0], vec![0.0; 3], 0.0, 1.0, 1e-9);
        let tr = train_quadratic(&task, &fixed(&[1.0]), &StragglerPolicy::None, 1, 0).unwrap();
        assert_eq!(tr.models[1], task.w_star);
    }

    #[test]
    fn half_step_halves_distance() {
        let task = QuadraticTask::new(vec![4.0], vec![0.0], 0.0, 0.5, 1e-9);
        let tr = train_quadratic(&task, &fixed(&[1.0]), &StragglerPolicy::None, 10, 0).unwrap();
        for w in tr.gradient_norms.windows(2) {
            assert!((w[1] - w[0] / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_step() {
        let task = QuadraticTask::new(vec![1.0], vec![0.0], 0.0, 0.0, 0.1);
        assert_eq!(train_quadratic(&task, &fixed(&[1.0]), &StragglerPolicy::None, 1, 0), Err(Error::InvalidStep(0.0)));
    }

    #[test]
    fn aggregation_reduces_noise_variance() {
        let task = QuadraticTask::new(vec![0.0], vec![0.0], 1.0, 1.0, 0.1);
        let var_of = |k: usize| {
            let mut rngs = device_streams(7, STREAM_NOISE, k);
            let rounds = 1000;
            let mut sum_sq = 0.0;
            for _ in 0..rounds {
                let g: f64 = (0..k).map(|j| task.local_gradient(j, 1, &[0.0], &mut rngs[j])[0]).sum::<f64>() / k as f64;
                sum_sq += g * g;
            }
            sum_sq / rounds as f64
        };
        let ratio = var_of(100) / var_of(1);
        assert!((ratio - 0.01).abs() < 0.002, "{ratio}");
    }

    #[test]
    fn aggregate_is_unbiased() {
        let task = QuadraticTask::new(vec![1.0], vec![0.0], 2.0, 1.0, 0.1);
        let mut rngs = device_streams(3, STREAM_NOISE, 4);
        let n = 10_000;
        let samples: Vec<f64> = (0..n)
            .map(|_| (0..4).map(|j| task.local_gradient(j, 1, &[3.0], &mut rngs[j])[0]).sum::<f64>() / 4.0)
            .collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let se = (samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64 / n as f64).sqrt();
        assert!((mean - 2.0).abs() < 3.0 * se);
    }

    #[test]
    fn lazy_skips_converged_devices() {
        let task = QuadraticTask::new(vec![0.0], vec![1e-6], 0.0, 0.5, 1e-9);
        let policy = StragglerPolicy::Lazy { gradient_norm_threshold: 1.0 };
        let tr = train_quadratic(&task, &fixed(&[1.0, 2.0]), &policy, 5, 0).unwrap();
        assert_eq!(tr.learning_latency(), Span::ZERO);
        assert!(tr.participants.iter().all(|p| *p == 0));
    }

    #[test]
    fn reliability_step_function() {
        let task = QuadraticTask::new(vec![1.0], vec![0.0], 0.0, 1.0, 1e-6);
        let curve =
            round_reliability(&task, &fixed(&[1.0]), &StragglerPolicy::None, &[1, 2, 5], 10, Some(0.9), 0, Parallelism::Parallel)
                .unwrap();
        assert!(curve.points.iter().all(|p| p.1 == 1.0));
        assert_eq!(curve.n_star, Some(1));
    }

    #[test]
    fn already_converged() {
        let task = QuadraticTask::new(vec![1.0], vec![0.9], 5.0, 0.1, 1.0);
        let curve =
            round_reliability(&task, &fixed(&[1.0]), &StragglerPolicy::None, &[1], 50, None, 2, Parallelism::Sequential)
                .unwrap();
        assert_eq!(curve.points, vec![(1, 1.0)]);
    }

    #[test]
    fn rate_check_controls() {
        let constant: Vec<(u32, f64)> = [16, 64, 256, 1024].iter().map(|&n| (n, 1.0)).collect();
        let c = convergence_rate_check(&constant).unwrap();
        assert!(!c.consistent);
        assert!(c.slope.abs() < 1e-12);
        assert!(matches!(convergence_rate_check(&constant[..3]), Err(Error::InsufficientGrid { needed: 4, got: 3 })));

        let task = QuadraticTask::new(vec![1.0; 4], vec![0.0; 4], 0.0, 1.0, 1e-3);
        let pts = convergence_ensemble(&task, &fixed(&[1.0]), &StragglerPolicy::None, &[16, 64, 256, 1024], 1, 2.0, 0, Parallelism::Sequential)
            .unwrap();
        assert!(convergence_rate_check(&pts).unwrap().consistent);
    }

    #[test]
    fn reduced_frequency_never_slower() {
        let devs = vec![
            DeviceProfile::new(Dist::exponential(1.0), Dist::exponential(2.0)),
            DeviceProfile::new(Dist::exponential(0.2), Dist::exponential(0.5)),
            DeviceProfile::new(Dist::uniform(0.5, 1.5), Dist::deterministic(0.1)),
        ];
        let policy = StragglerPolicy::ReducedFrequency { straggler_ids: vec![1], upload_every_m_rounds: 3 };
        for seed in 0..100 {
            let a = learning_latency(&simulate_latencies(&devs, &StragglerPolicy::None, 20, seed).unwrap());
            let b = learning_latency(&simulate_latencies(&devs, &policy, 20, seed).unwrap());
            assert!(b <= a);
        }
    }
}
