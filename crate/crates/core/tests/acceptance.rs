//! Acceptance suite: one PASS/FAIL line per criterion, each with its
//! runtime budget. Exits nonzero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant as Clock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Exp};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use timing_core::channels::{empirical_latency_reliability, Channel, SampledChannel, ShannonChannel};
use timing_core::consensus::{run_many, ConsensusConfig, ContactGraph, InitialOpinions, Opinion};
use timing_core::fedsim::{
    convergence_ensemble, convergence_rate_check, learning_latency, round_latency, round_reliability,
    simulate_latencies, train_quadratic, DeviceProfile, QuadraticTask, StragglerPolicy,
};
use timing_core::metrics::{query_instants, AgeOrigin, AgeSawtooth, EstimationTracker};
use timing_core::par::{par_map, Parallelism};
use timing_core::pipeline::{compose_independent, compose_merged, MergedStage, SizeMap, StageMode, StageSpec};
use timing_core::protocols::{run_one_way, run_two_way, DeliveryTrace, OneWayConfig, TwoWayConfig, TwoWayMode};
use timing_core::rng::{Dist, RngStream};
use timing_core::scenario::{builtin, builtins, run, RunOptions, SlotQuery};
use timing_core::sources::{Discipline, ProcessModel, QueueSpec, SourceSpec};
use timing_core::{Instant, Span};

type Verdict = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel_err(x: f64, reference: f64) -> f64 {
    (x - reference).abs() / reference.abs()
}

fn conserved(trace: &DeliveryTrace) -> Result<(), String> {
    let c = trace.conservation();
    ensure(c.reconciles(), || format!("conservation counters do not reconcile: {c:?}"))
}

fn mm1(rate: f64, discipline: Discipline, packets: u64) -> OneWayConfig {
    let channel = Channel::Sampled(SampledChannel::new(Dist::exponential(1.0), 1.0));
    let mut cfg = OneWayConfig::new(SourceSpec::Poisson { rate_per_s: rate }, QueueSpec::new(discipline), channel);
    cfg.max_packets = Some(packets);
    cfg
}

/// Mean AoI over `[first reception, last reception]` of a packet-limited run.
fn aoi_to_last_delivery(trace: &DeliveryTrace) -> Result<f64, String> {
    let rx = trace.receptions();
    let last = rx.iter().map(|r| r.1).max().ok_or("no deliveries")?;
    let saw = AgeSawtooth::new(&rx, last, AgeOrigin::FirstReception).map_err(|e| e.to_string())?;
    Ok(saw.mean_ns() / 1e9)
}

/// Far enough out that every packet is served.
const LONG: Instant = Instant(u64::MAX / 4);

// 1
fn deterministic_sawtooth() -> Verdict {
    let cfg = OneWayConfig::new(
        SourceSpec::Periodic { period_s: 0.1, offset_s: 0.0 },
        QueueSpec::new(Discipline::Fcfs),
        Channel::fixed(Span::from_millis(10)),
    );
    // 1000 whole periods after the first reception at 10 ms
    let trace = run_one_way(&cfg, 1, Instant::from_secs_f64(100.01), false).map_err(|e| e.to_string())?;
    conserved(&trace)?;
    let saw = AgeSawtooth::from_trace(&trace, AgeOrigin::FirstReception).map_err(|e| e.to_string())?;
    // hand integration: (P²/2 + dP) / P = P/2 + d
    let expected_ns = 100e6 / 2.0 + 10e6;
    let mean = saw.mean_ns();
    ensure((mean - expected_ns).abs() <= 1.0, || format!("mean AoI {mean} ns, expected {expected_ns}"))?;
    let peaks: Vec<Span> = saw.peaks().collect();
    ensure(!peaks.is_empty() && peaks.iter().all(|p| *p == Span::from_millis(110)), || {
        format!("peak AoI not uniformly 110 ms: {:?}", peaks.iter().max())
    })?;
    Ok(format!("mean AoI {mean} ns, {} peaks of 110 ms", peaks.len()))
}

/// Lindley recursion with its own generator; returns (mean latency, mean AoI).
fn mm1_oracle(lambda: f64, mu: f64, packets: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (ia, sv) = (Exp::new(lambda).unwrap(), Exp::new(mu).unwrap());
    let (mut a, mut d) = (0.0f64, 0.0f64);
    let mut lat_sum = 0.0;
    let mut area = 0.0;
    let mut first_d = None;
    let mut prev: Option<(f64, f64)> = None; // (departure, generation)
    for _ in 0..packets {
        a += ia.sample(&mut rng);
        d = d.max(a) + sv.sample(&mut rng);
        lat_sum += d - a;
        if let Some((pd, pa)) = prev {
            let w = d - pd;
            area += w * (pd - pa) + w * w / 2.0;
        } else {
            first_d = Some(d);
        }
        prev = Some((d, a));
    }
    (lat_sum / packets as f64, area / (d - first_d.unwrap()))
}

// 2
fn mm1_cross_check() -> Verdict {
    let (lambda, mu, n) = (0.5, 1.0, 1_000_000u64);
    let trace = run_one_way(&mm1(lambda, Discipline::Fcfs, n), 2, LONG, false).map_err(|e| e.to_string())?;
    conserved(&trace)?;
    ensure(trace.conservation().delivered == n, || "not every packet was delivered".into())?;
    let lat: f64 = trace.latencies().map(|s| s.as_secs_f64()).sum::<f64>() / n as f64;
    let aoi = aoi_to_last_delivery(&trace)?;
    let (oracle_lat, oracle_aoi) = mm1_oracle(lambda, mu, n as usize, 0xACCE97);
    let rho = lambda / mu;
    let closed_lat = 1.0 / (mu - lambda);
    let closed_aoi = (1.0 + 1.0 / rho + rho * rho / (1.0 - rho)) / mu;
    ensure(rel_err(lat, closed_lat) <= 0.02, || format!("latency {lat:.4} vs {closed_lat}"))?;
    ensure(rel_err(aoi, oracle_aoi) <= 0.02, || format!("AoI {aoi:.4} vs oracle {oracle_aoi:.4}"))?;
    ensure(rel_err(aoi, closed_aoi) <= 0.02, || format!("AoI {aoi:.4} vs closed form {closed_aoi}"))?;
    ensure(rel_err(oracle_lat, closed_lat) <= 0.02, || format!("oracle latency {oracle_lat:.4} off"))?;
    Ok(format!(
        "latency {lat:.4} s (1/(mu-lambda) = {closed_lat}), AoI {aoi:.4} s (oracle {oracle_aoi:.4}, closed form {closed_aoi})"
    ))
}

// 3
fn latency_reliability() -> Verdict {
    let ch = Channel::Shannon(ShannonChannel::new(1e6, 0.2, 1.0));
    let bits = 1000;
    let mut rng = RngStream::new(3, 0);
    let samples: Vec<(Span, bool)> = (0..100_000)
        .map(|_| ch.deliver_persistently(bits, &mut rng, Span::MAX).map_or((Span::MAX, false), |(d, _)| (d, true)))
        .collect();
    let curve = empirical_latency_reliability(&samples).map_err(|e| e.to_string())?;
    // 1000 channel uses at 2B = 2e6 uses per second
    let t_n = Span::from_micros(500);
    let analytic = |tau: Span| 1.0 - 0.2f64.powi((tau.as_nanos() / t_n.as_nanos()) as i32);
    let jumps: Vec<Span> = (1..=40).map(|k| Span::from_micros(500 * k)).collect();
    let sup = curve.sup_distance(analytic, &jumps);
    ensure(sup <= 0.01, || format!("sup-norm distance {sup}"))?;
    let bps = curve.breakpoints();
    let mut last = 0.0;
    for &b in &bps {
        let (left, at) = (curve.eval_left(b), curve.eval(b));
        ensure(left >= last && at >= left, || format!("not monotone at {b}"))?;
        last = at;
    }
    Ok(format!("sup-norm {sup:.4} over {} breakpoints", bps.len()))
}

// 4
fn two_way_geometric() -> Verdict {
    let cfg = TwoWayConfig {
        data_bits: 800,
        ack_bits: 64,
        request_bits: 0,
        split: 0.8,
        round_channel_uses: 1000,
        channel: ShannonChannel::new(1e6, 0.1, 1.0),
        data_success_prob: Some(0.8),
        ack_success_prob: Some(0.9),
        request_success_prob: None,
    };
    let n = 100_000;
    let recs = run_two_way(&cfg, TwoWayMode::PushAck, 4, LONG, Some(n)).map_err(|e| e.to_string())?;
    ensure(recs.len() == n, || format!("{} transfers", recs.len()))?;
    // one round is 1000 channel uses at 2B = 2e6 uses per second
    let rtt = 0.5e-3;
    let q = 0.8 * 0.9;
    let mean = recs.iter().map(|r| r.latency().as_secs_f64()).sum::<f64>() / n as f64;
    ensure(rel_err(mean, rtt / q) <= 0.01, || format!("mean completion {mean} vs {}", rtt / q))?;

    // chi-square against Geometric(q), tail pooled where expected counts get small
    let max_k = (1..).find(|k| n as f64 * (1.0 - q).powi(*k) * q < 5.0).unwrap() as u32;
    let mut observed = vec![0u64; max_k as usize + 1];
    for r in &recs {
        observed[(r.rounds.min(max_k + 1) - 1) as usize] += 1;
    }
    let mut stat = 0.0;
    for (i, o) in observed.iter().enumerate() {
        let k = i as i32 + 1;
        let p = if i as u32 == max_k { (1.0 - q).powi(k - 1) } else { (1.0 - q).powi(k - 1) * q };
        let e = p * n as f64;
        stat += (*o as f64 - e).powi(2) / e;
    }
    let dof = observed.len() as f64 - 1.0;
    let p_value = 1.0 - ChiSquared::new(dof).unwrap().cdf(stat);
    ensure(p_value > 0.001, || format!("chi-square {stat:.2} on {dof} dof, p = {p_value:.2e}"))?;
    Ok(format!("mean {:.5} ms vs {:.5} ms; chi-square {stat:.2} on {dof} dof (p = {p_value:.3})", mean * 1e3, rtt / q * 1e3))
}

fn random_mode(rng: &mut ChaCha20Rng) -> StageMode {
    let latency = match rng.random_range(0..3) {
        0 => Dist::deterministic(rng.random_range(1e-4..1e-2)),
        1 => {
            let lo = rng.random_range(1e-4..1e-2);
            Dist::uniform(lo, lo + rng.random_range(0.0..1e-2))
        }
        _ => Dist::empirical((0..5).map(|_| rng.random_range(1e-4..1e-2)).collect()),
    };
    StageMode { latency, per_bit_s: if rng.random_bool(0.5) { rng.random_range(0.0..1e-8) } else { 0.0 } }
}

fn random_stage(rng: &mut ChaCha20Rng, i: usize) -> StageSpec {
    let output = match rng.random_range(0..3) {
        0 => SizeMap::Identity,
        1 => SizeMap::Scale { factor: rng.random_range(0.1..2.0) },
        _ => SizeMap::Fixed { bits: rng.random_range(1..100_000) },
    };
    StageSpec { name: format!("s{i}"), mode: random_mode(rng), output, priority: None }
}

// 5
fn cascade_identities() -> Verdict {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    for c in 0..10_000u64 {
        let stages: Vec<StageSpec> = (0..rng.random_range(1..8)).map(|i| random_stage(&mut rng, i)).collect();
        let bits = rng.random_range(1..1_000_000);
        let comp = compose_independent(&stages, bits, &RngStream::new(c, 70)).map_err(|e| e.to_string())?;
        let sum: Span = comp.per_stage.iter().map(|s| s.span).sum();
        ensure(comp.total == sum, || format!("config {c}: total {} != sum {}", comp.total, sum))?;
        // sizes propagate stage to stage
        let mut size = bits;
        for (stage, sample) in stages.iter().zip(&comp.per_stage) {
            ensure(sample.input_bits == size, || format!("config {c}: size not propagated"))?;
            size = match stage.output {
                SizeMap::Identity => size,
                SizeMap::Scale { factor } => (size as f64 * factor).round() as u64,
                SizeMap::Fixed { bits } => bits,
            };
        }
    }

    let (mut accepted, mut violations, mut paired) = (0, 0, 0u64);
    for c in 0..10_000u64 {
        let bits = rng.random_range(1..100_000);
        let first = random_stage(&mut rng, 0);
        let mut second = random_stage(&mut rng, 1);
        second.output = SizeMap::Identity;
        let mid = first.output.apply(bits);
        let mut joint = random_stage(&mut rng, 9);
        joint.output = SizeMap::Fixed { bits: mid };
        let merged = MergedStage { joint, first, second };
        if merged.validate(bits).is_err() {
            continue;
        }
        accepted += 1;
        let rest: Vec<StageSpec> = (2..rng.random_range(2..5)).map(|i| random_stage(&mut rng, i)).collect();
        let split: Vec<StageSpec> =
            [merged.first.clone(), merged.second.clone()].into_iter().chain(rest.iter().cloned()).collect();
        for r in 0..20 {
            let stream = RngStream::new(c * 100 + r, 70);
            let m = compose_merged(&merged, &rest, bits, &stream).map_err(|e| e.to_string())?;
            let s = compose_independent(&split, bits, &stream).map_err(|e| e.to_string())?;
            paired += 1;
            if m.total > s.total {
                violations += 1;
            }
        }
    }
    ensure(accepted > 100, || format!("only {accepted} merged configurations accepted"))?;
    ensure(violations == 0, || format!("{violations} dominance violations"))?;
    Ok(format!("10000 sums exact; {accepted} merged configs, {paired} paired runs, 0 violations"))
}

// 6
fn freshness_ordering() -> Verdict {
    let loads = [0.3, 0.5, 0.8];
    let jobs: Vec<(f64, Discipline)> =
        loads.iter().flat_map(|&r| [(r, Discipline::Fcfs), (r, Discipline::LcfsPreempt)]).collect();
    let results = par_map(&jobs, Parallelism::Parallel, |&(rho, d)| -> Result<f64, String> {
        let trace = run_one_way(&mm1(rho, d, 1_000_000), 6, LONG, false).map_err(|e| e.to_string())?;
        conserved(&trace)?;
        aoi_to_last_delivery(&trace)
    });
    let aoi: Vec<f64> = results.into_iter().collect::<Result<_, _>>()?;
    let mut parts = Vec::new();
    for (i, rho) in loads.iter().enumerate() {
        let (fcfs, lcfs) = (aoi[2 * i], aoi[2 * i + 1]);
        ensure(lcfs <= fcfs, || format!("rho {rho}: lcfs-preempt {lcfs:.4} > fcfs {fcfs:.4}"))?;
        parts.push(format!("rho {rho}: {lcfs:.3} <= {fcfs:.3}"));
    }
    Ok(parts.join("; "))
}

// 7
fn qaoi_sandwich() -> Verdict {
    let channel = Channel::Sampled(SampledChannel::new(Dist::uniform(0.05, 0.5), 0.9));
    let cfg = OneWayConfig::new(SourceSpec::Poisson { rate_per_s: 1.0 }, QueueSpec::new(Discipline::Fcfs), channel);
    let trace = run_one_way(&cfg, 7, Instant::from_secs_f64(100_000.0), false).map_err(|e| e.to_string())?;
    conserved(&trace)?;
    let saw = AgeSawtooth::from_trace(&trace, AgeOrigin::FirstReception).map_err(|e| e.to_string())?;
    let lo = saw.troughs().min().unwrap();
    let hi = saw.peaks().max().unwrap();
    // queries up to the last refresh, where every age is bounded by a peak
    let from = saw.window().0;
    let to = saw.breakpoints().last().unwrap().t;
    let queries = query_instants(&SourceSpec::Poisson { rate_per_s: 100.0 }, &mut RngStream::new(7, 91), from, to)
        .map_err(|e| e.to_string())?;
    let mut sum = 0u128;
    for &q in &queries {
        let a = saw.age_at(q).ok_or("query outside window")?;
        ensure(lo <= a && a <= hi, || format!("QAoI {a} outside [{lo}, {hi}]"))?;
        sum += a.as_nanos() as u128;
    }
    let qaoi = sum as f64 / queries.len() as f64 / 1e9;
    let aoi = saw.mean_ns() / 1e9;
    ensure(rel_err(qaoi, aoi) <= 0.01, || format!("QAoI mean {qaoi:.4} vs AoI {aoi:.4}"))?;
    Ok(format!("{} queries in [{lo}, {hi}]; QAoI {qaoi:.4} s vs AoI {aoi:.4} s", queries.len()))
}

// 8
fn estimation_law() -> Verdict {
    let sigma = 1.3;
    let process = ProcessModel::Wiener { sigma, dim: 1 };
    let channel = Channel::Sampled(SampledChannel::new(Dist::uniform(0.05, 0.3), 0.9));
    let mut cfg = OneWayConfig::new(SourceSpec::Poisson { rate_per_s: 1.0 }, QueueSpec::new(Discipline::Fcfs), channel);
    cfg.process = Some(process.clone());
    let trace = run_one_way(&cfg, 8, Instant::from_secs_f64(1e6), false).map_err(|e| e.to_string())?;
    conserved(&trace)?;
    let tracker = EstimationTracker::new(process, Span::from_millis(50), Span::from_millis(250), 16).with_seed(8);
    let report = tracker.evaluate(&trace).map_err(|e| e.to_string())?;
    let slope = report.fit_slope().ok_or("no slope")?;
    let expected = sigma * sigma;
    ensure(rel_err(slope, expected) <= 0.02, || format!("slope {slope:.4} vs sigma^2 {expected}"))?;
    Ok(format!("slope {slope:.4} vs sigma^2 = {expected:.2} over {} grid samples", report.samples))
}

// 9
fn consensus_ordering() -> Verdict {
    let cfg = ConsensusConfig {
        n_nodes: 6,
        contact_budget: 2,
        graph: ContactGraph::Complete,
        initial: InitialOpinions::RandomSplit { count_a: 3 },
        initiator: 0,
        stubborn: vec![],
        max_rounds: 1000,
    };
    let seeds: Vec<u64> = (0..10_000).collect();
    let verdicts = run_many(&cfg, &seeds, Parallelism::Parallel).map_err(|e| e.to_string())?;
    let converged: Vec<_> = verdicts.iter().filter(|v| v.birdseye_round.is_some()).collect();
    for v in &converged {
        let b = v.birdseye_round.unwrap();
        ensure(v.initiator_round.is_none_or(|r| b <= r) && v.full_round.is_none_or(|r| b <= r), || {
            format!("ordering violated: {v:?}")
        })?;
    }
    let unanimous = ConsensusConfig { initial: InitialOpinions::Explicit { opinions: vec![Opinion::A; 6] }, ..cfg };
    let (v, _) = unanimous.run(1).map_err(|e| e.to_string())?;
    ensure(v.birdseye_round == Some(0), || format!("unanimous start gave {:?}", v.birdseye_round))?;
    Ok(format!("{} of 10000 runs converged, all ordered; unanimous start at round 0", converged.len()))
}

// 10
fn fl_latency() -> Verdict {
    let mut rng = ChaCha20Rng::seed_from_u64(10);
    for t in 0..1000 {
        let (rounds, k) = (rng.random_range(1..30), rng.random_range(1..10));
        let lat: Vec<Vec<u64>> =
            (0..rounds).map(|_| (0..k).map(|_| rng.random_range(1..1_000_000_000u64)).collect()).collect();
        let part: Vec<Vec<bool>> = (0..rounds)
            .map(|_| {
                let mut p: Vec<bool> = (0..k).map(|_| rng.random_bool(0.6)).collect();
                p[rng.random_range(0..k)] = true;
                p
            })
            .collect();
        let per_round: Vec<Span> = (0..rounds)
            .map(|n| {
                let spans: Vec<Span> = lat[n].iter().map(|&x| Span(x)).collect();
                round_latency(&spans, &part[n], n as u32 + 1).unwrap()
            })
            .collect();
        let oracle: u64 = (0..rounds)
            .map(|n| (0..k).filter(|&j| part[n][j]).map(|j| lat[n][j]).max().unwrap())
            .sum();
        ensure(learning_latency(&per_round) == Span(oracle), || format!("trace {t}: max-sum mismatch"))?;
    }

    let devices = vec![
        DeviceProfile::new(Dist::uniform(0.01, 0.02), Dist::exponential(100.0)),
        DeviceProfile::new(Dist::uniform(0.01, 0.03), Dist::exponential(80.0)),
        DeviceProfile::new(Dist::uniform(0.05, 0.2), Dist::exponential(10.0)),
        DeviceProfile::new(Dist::uniform(0.08, 0.3), Dist::exponential(5.0)),
    ];
    let reduced = StragglerPolicy::ReducedFrequency { straggler_ids: vec![2, 3], upload_every_m_rounds: 3 };
    let mut saved = Span::ZERO;
    for seed in 0..1000 {
        let base = learning_latency(&simulate_latencies(&devices, &StragglerPolicy::None, 50, seed).map_err(|e| e.to_string())?);
        let red = learning_latency(&simulate_latencies(&devices, &reduced, 50, seed).map_err(|e| e.to_string())?);
        ensure(red <= base, || format!("seed {seed}: reduced {red} > none {base}"))?;
        saved += base - red;
    }
    Ok(format!("1000 random traces exact; reduced-frequency never slower in 1000 paired runs (saved {saved} total)"))
}

// 11
fn fl_convergence() -> Verdict {
    let w_star = vec![1.0, -2.0, 0.5, 3.0];
    let noiseless = QuadraticTask::new(w_star.clone(), vec![0.0; 4], 0.0, 1.0, 1e-9);
    let tr = train_quadratic(&noiseless, &[DeviceProfile::fixed(0.01)], &StragglerPolicy::None, 1, 1)
        .map_err(|e| e.to_string())?;
    ensure(tr.models[1] == w_star, || format!("one step gave {:?}", tr.models[1]))?;

    let devices = vec![DeviceProfile::fixed(0.01); 4];
    let noisy = QuadraticTask::new(w_star, vec![0.0; 4], 0.05, 0.1, 0.2);
    let grid = [16, 64, 256, 1024];
    let points = convergence_ensemble(&noisy, &devices, &StragglerPolicy::None, &grid, 100, 1.0, 11, Parallelism::Parallel)
        .map_err(|e| e.to_string())?;
    let check = convergence_rate_check(&points).map_err(|e| e.to_string())?;
    ensure(check.slope <= -0.4, || format!("fitted slope {:.3}", check.slope))?;

    let curve = round_reliability(&noisy, &devices, &StragglerPolicy::None, &grid, 100, None, 11, Parallelism::Parallel)
        .map_err(|e| e.to_string())?;
    let fc: Vec<f64> = curve.points.iter().map(|p| p.1).collect();
    ensure(fc.windows(2).all(|w| w[0] <= w[1]), || format!("F_C not monotone: {fc:?}"))?;
    Ok(format!("one-step exact; slope {:.3}; F_C {fc:?}", check.slope))
}

// 12
fn determinism_and_conservation() -> Verdict {
    let mut n = 0;
    for mut sc in builtins() {
        if let Some(c) = sc.consensus.as_mut() {
            c.runs = 100;
        }
        if let Some(p) = sc.pipeline.as_mut() {
            p.runs = 1000;
        }
        let opts = RunOptions { horizon: Some(sc.horizon.min(Span::from_secs(200))), trace: true, sawtooth: true, ..Default::default() };
        let a = run(&sc, &opts).map_err(|e| format!("{}: {e}", sc.name))?;
        let b = run(&sc, &RunOptions { parallelism: Parallelism::Sequential, ..opts.clone() })
            .map_err(|e| format!("{}: {e}", sc.name))?;
        ensure(a.to_json() == b.to_json() && a.to_csv() == b.to_csv(), || format!("{}: reports differ", sc.name))?;
        ensure(a.trace_csv() == b.trace_csv() && a.sawtooth_csv() == b.sawtooth_csv(), || {
            format!("{}: traces differ", sc.name)
        })?;
        if let Some(c) = a.report.conservation {
            ensure(c.reconciles(), || format!("{}: {c:?}", sc.name))?;
        }
        n += 1;
    }
    Ok(format!("{n} built-in scenarios byte-identical across runs and thread modes; counters reconcile"))
}

// 13
fn fig1_claim() -> Verdict {
    let mut sc = builtin("fig1").map_err(|e| e.to_string())?;
    let get = |r: &timing_core::scenario::RunReport, m: &str| r.report.get(m).map(|s| (s.mean, s.max, s.count));

    let fig = sc.fig1.as_mut().unwrap();
    fig.update_prob = 0.0;
    fig.query = SlotQuery::None;
    let idle = run(&sc, &RunOptions { trace: true, ..Default::default() }).map_err(|e| e.to_string())?;
    let res = get(&idle, "reservation_goodput").ok_or("missing row")?.0;
    let pull = get(&idle, "pull_goodput").ok_or("missing row")?.0;
    ensure(res == 0.75 && pull == 1.0, || format!("goodput {res} / {pull}"))?;
    // hand count of the slot layout: three high-rate slots, then the reserved one
    let layout: Vec<&str> = idle.trace.iter().filter(|r| r.entity == "reservation").take(8).map(|r| r.event).collect();
    let expected = ["high-rate", "high-rate", "high-rate", "reserved-idle"].repeat(2);
    ensure(layout == expected, || format!("slot layout {layout:?}"))?;

    sc.fig1.as_mut().unwrap().update_prob = 1.0;
    let busy = run(&sc, &RunOptions::default()).map_err(|e| e.to_string())?;
    let (mean, worst, count) = get(&busy, "reservation_update_latency_slots").ok_or("missing row")?;
    ensure(count > 0 && worst <= 4.0, || format!("worst latency {worst} slots"))?;
    Ok(format!("goodput 3/4 vs 1; worst reservation latency {worst} slots (mean {mean:.2})"))
}

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    check: fn() -> Verdict,
}

const fn crit(id: u32, name: &'static str, budget_s: u64, check: fn() -> Verdict) -> Criterion {
    Criterion { id, name, budget: Duration::from_secs(budget_s), check }
}

fn main() {
    let criteria = [
        crit(1, "deterministic sawtooth", 1, deterministic_sawtooth),
        crit(2, "M/M/1 latency and AoI", 30, mm1_cross_check),
        crit(3, "latency-reliability curve", 10, latency_reliability),
        crit(4, "two-way geometric law", 10, two_way_geometric),
        crit(5, "cascade identities", 5, cascade_identities),
        crit(6, "freshness policy ordering", 60, freshness_ordering),
        crit(7, "QAoI sandwich and refinement", 20, qaoi_sandwich),
        crit(8, "estimation error law", 30, estimation_law),
        crit(9, "consensus ordering", 10, consensus_ordering),
        crit(10, "FL latency identity and dominance", 5, fl_latency),
        crit(11, "FL convergence shape", 120, fl_convergence),
        crit(12, "determinism and conservation", 60, determinism_and_conservation),
        crit(13, "reservation vs pull uplink", 1, fig1_claim),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for c in criteria.iter().filter(|c| filter.is_empty() || filter.iter().any(|f| c.name.contains(f.as_str()))) {
        let start = Clock::now();
        let verdict = catch_unwind(AssertUnwindSafe(c.check)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let elapsed = start.elapsed();
        let (ok, detail) = match verdict {
            Ok(d) if elapsed <= c.budget => (true, d),
            Ok(d) => (false, format!("{d}; over the {:?} budget", c.budget)),
            Err(e) => (false, e),
        };
        failed += usize::from(!ok);
        println!(
            "[{}] {:>2} {} ({:.2} s / {} s): {}",
            if ok { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            elapsed.as_secs_f64(),
            c.budget.as_secs(),
            detail
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
