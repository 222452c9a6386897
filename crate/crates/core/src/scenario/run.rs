//! Runs a parsed scenario and collects its metrics into a report.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::Serialize;

use crate::consensus::run_many;
use crate::engine::TraceRow;
use crate::error::{Error, Result};
use crate::fedsim::{convergence_ensemble, convergence_rate_check, round_reliability, train_quadratic};
use crate::metrics::{
    aoii, deadline_metrics, loop_age, peak_summary, query_aoi_at, query_instants, summarize, summarize_spans, AgeSawtooth,
    EstimationTracker, MetricRow, SampleSummary, TimingReport,
};
use crate::par::{par_map, par_map_range, Parallelism};
use crate::pipeline::{compose_coupled, compose_independent, compose_merged, StageSpec};
use crate::protocols::{run_loop, run_one_way, run_two_way, DeliveryTrace, OneWayConfig, TwoWayMode};
use crate::rng::{mix64, RngStream};
use crate::time::{Instant, Span};

use super::config::{Experiment, MetricsSpec, PipelineBlock, Scenario};
use super::fig1::{scenario_fig1, Fig1Config};

/// Per-run overrides of the scenario file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub horizon: Option<Span>,
    /// Keep the event log.
    pub trace: bool,
    /// Keep the AoI sawtooth breakpoints.
    pub sawtooth: bool,
    pub parallelism: Parallelism,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub kind: &'static str,
    pub seed: u64,
    pub horizon_s: f64,
    #[serde(flatten)]
    pub report: TimingReport,
    #[serde(skip)]
    pub runtime: Duration,
    #[serde(skip)]
    pub trace: Vec<TraceRow>,
    /// `(t, age)` at every sawtooth breakpoint, when requested.
    #[serde(skip)]
    pub sawtooth: Option<Vec<(Instant, Span)>>,
}

/// A metric that could not be computed on this run.
fn empty(metric: &str) -> MetricRow {
    MetricRow::new(metric, SampleSummary { mean: 0.0, p50: 0.0, p95: 0.0, p99: 0.0, max: 0.0, min: 0.0, count: 0 })
}

fn row_or_empty(metric: &str, values: &[f64]) -> MetricRow {
    summarize(values).map_or_else(|| empty(metric), |s| MetricRow::new(metric, s))
}

fn spans_or_empty(metric: &str, spans: impl IntoIterator<Item = Span>) -> MetricRow {
    summarize_spans(spans).map_or_else(|| empty(metric), |s| MetricRow::new(metric, s))
}

fn counted(metric: &str, value: f64, count: u64) -> MetricRow {
    let mut r = MetricRow::scalar(metric, value);
    r.summary.count = count;
    r
}

/// Errors meaning "nothing to measure" become count-0 rows; others propagate.
fn soft<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(
            Error::NoDeliveries
            | Error::InsufficientDeliveries { .. }
            | Error::NoQueriesInWindow
            | Error::NoClosedLoops
            | Error::EmptySample,
        ) => Ok(None),
        Err(e) => Err(e),
    }
}

const STREAM_QUERY: u64 = 91;
const STREAM_PIPELINE: u64 = 70;

/// Runs the scenario once.
pub fn run(sc: &Scenario, opts: &RunOptions) -> Result<RunReport> {
    let started = std::time::Instant::now();
    let exp = sc.experiment()?;
    let seed = opts.seed.unwrap_or(sc.seed);
    let horizon = opts.horizon.unwrap_or(sc.horizon);
    let end = Instant::ORIGIN + horizon;
    let mut out = RunReport {
        scenario: sc.name.clone(),
        kind: exp.kind(),
        seed,
        horizon_s: horizon.as_secs_f64(),
        report: TimingReport::default(),
        runtime: Duration::ZERO,
        trace: Vec::new(),
        sawtooth: None,
    };
    match &exp {
        Experiment::OneWay(cfg) => one_way(cfg, &sc.metrics, seed, end, opts, &mut out)?,
        Experiment::TwoWay(cfg, mode, max) => {
            let records = run_two_way(cfg, *mode, seed, end, *max)?;
            let lat = records.iter().map(|r| r.latency());
            let rounds: Vec<f64> = records.iter().map(|r| r.rounds as f64).collect();
            out.report.push(spans_or_empty("completion_latency_s", lat));
            out.report.push(row_or_empty("rounds", &rounds));
            if *mode == TwoWayMode::Pull {
                let req: Vec<f64> = records.iter().map(|r| r.request_attempts as f64).collect();
                out.report.push(row_or_empty("request_attempts", &req));
            }
            out.report.push(MetricRow::scalar("round_trip_s", cfg.round_trip().as_secs_f64()));
            if opts.trace {
                for r in &records {
                    out.trace.push(TraceRow {
                        t_ns: r.anchor_instant.as_nanos(),
                        entity: "transfer",
                        event: "start",
                        detail: format!("seq={}", r.packet_seq),
                    });
                    out.trace.push(TraceRow {
                        t_ns: r.completion_instant.as_nanos(),
                        entity: "transfer",
                        event: "complete",
                        detail: format!("seq={} rounds={} requests={}", r.packet_seq, r.rounds, r.request_attempts),
                    });
                }
            }
        }
        Experiment::ControlLoop(cfg, src) => {
            let trace = run_loop(cfg, src, seed, end)?;
            match soft(loop_age(&trace))? {
                Some((s, open)) => {
                    out.report.push(MetricRow::new("loop_age_s", s));
                    out.report.push(MetricRow::scalar("open_loops", open as f64));
                }
                None => {
                    out.report.push(empty("loop_age_s"));
                    out.report.push(MetricRow::scalar("open_loops", trace.open_count() as f64));
                }
            }
            if opts.trace {
                for c in &trace.cycles {
                    out.trace.push(TraceRow {
                        t_ns: c.sent_at.as_nanos(),
                        entity: "loop",
                        event: "sense",
                        detail: format!("cycle={}", c.cycle),
                    });
                    if let Some(t) = c.closed_at {
                        out.trace.push(TraceRow {
                            t_ns: t.as_nanos(),
                            entity: "loop",
                            event: "actuate",
                            detail: format!("cycle={}", c.cycle),
                        });
                    }
                }
                out.trace.sort_by_key(|r| r.t_ns);
            }
        }
        Experiment::Pipeline(b) => pipeline(b, seed, opts.parallelism, &mut out)?,
        Experiment::Consensus(b) => {
            let cfg = b.config();
            let seeds: Vec<u64> = (0..b.runs as u64).map(|r| mix64(seed ^ mix64(r))).collect();
            let verdicts = run_many(&cfg, &seeds, opts.parallelism)?;
            let col = |f: fn(&crate::consensus::ConsensusVerdict) -> Option<u32>| -> Vec<f64> {
                verdicts.iter().filter_map(|v| f(v).map(f64::from)).collect()
            };
            out.report.push(row_or_empty("birdseye_round", &col(|v| v.birdseye_round)));
            out.report.push(row_or_empty("initiator_round", &col(|v| v.initiator_round)));
            out.report.push(row_or_empty("full_round", &col(|v| v.full_round)));
            let n = verdicts.len() as u64;
            let converged = verdicts.iter().filter(|v| v.birdseye_round.is_some()).count();
            let violations = verdicts.iter().filter(|v| !v.is_ordered()).count();
            out.report.push(counted("converged_fraction", converged as f64 / n as f64, n));
            out.report.push(counted("ordering_violations", violations as f64, n));
            if opts.trace {
                // rounds of the first run; t_ns holds the round index
                let (_, rounds) = cfg.run(seeds[0])?;
                for r in rounds {
                    let contacts: Vec<String> = r.contacts.iter().map(|(a, b)| format!("{a}-{b}")).collect();
                    out.trace.push(TraceRow {
                        t_ns: r.round as u64,
                        entity: "consensus",
                        event: "round",
                        detail: format!("contacts={} opinions={:016x}", contacts.join(" "), r.opinion_hash),
                    });
                }
            }
        }
        Experiment::Fedsim(b) => {
            let tr = train_quadratic(&b.task, &b.devices, &b.policy, b.rounds, seed)?;
            out.report.push(spans_or_empty("round_latency_s", tr.latencies.iter().copied()));
            out.report.push(MetricRow::scalar("learning_latency_s", tr.learning_latency().as_secs_f64()));
            let parts: Vec<f64> = tr.participants.iter().map(|&p| p as f64).collect();
            out.report.push(row_or_empty("participants", &parts));
            if let Some(&g) = tr.gradient_norms.last() {
                out.report.push(MetricRow::scalar("final_gradient_norm", g));
            }
            match tr.converged_at(b.task.delta) {
                Some(n) => out.report.push(MetricRow::scalar("converged_round", n as f64)),
                None => out.report.push(empty("converged_round")),
            }
            if let Some(r) = &b.reliability {
                let curve =
                    round_reliability(&b.task, &b.devices, &b.policy, &r.grid, r.trials, r.target, seed, opts.parallelism)?;
                for (n, p) in &curve.points {
                    out.report.push(counted(&format!("fc_n{n}"), *p, r.trials as u64));
                }
                if r.target.is_some() {
                    match curve.n_star {
                        Some(n) => out.report.push(MetricRow::scalar("n_star", n as f64)),
                        None => out.report.push(empty("n_star")),
                    }
                }
            }
            if let Some(c) = &b.convergence {
                let points =
                    convergence_ensemble(&b.task, &b.devices, &b.policy, &c.grid, c.trials, c.c3, seed, opts.parallelism)?;
                for (n, v) in &points {
                    out.report.push(counted(&format!("avg_sq_grad_n{n}"), *v, c.trials as u64));
                }
                let check = convergence_rate_check(&points)?;
                out.report.push(MetricRow::scalar("convergence_slope", check.slope));
                out.report.push(MetricRow::scalar("convergence_consistent", if check.consistent { 1.0 } else { 0.0 }));
            }
            if opts.trace {
                let mut t = Instant::ORIGIN;
                for (i, (l, p)) in tr.latencies.iter().zip(&tr.participants).enumerate() {
                    t += *l;
                    out.trace.push(TraceRow {
                        t_ns: t.as_nanos(),
                        entity: "server",
                        event: "aggregate",
                        detail: format!("round={} participants={p} grad_norm={}", i + 1, tr.gradient_norms[i + 1]),
                    });
                }
            }
        }
        Experiment::Fig1(cfg) => fig1(cfg, seed, horizon, opts.trace, &mut out)?,
    }
    out.runtime = started.elapsed();
    Ok(out)
}

fn one_way(
    cfg: &OneWayConfig,
    m: &MetricsSpec,
    seed: u64,
    end: Instant,
    opts: &RunOptions,
    out: &mut RunReport,
) -> Result<()> {
    let trace: DeliveryTrace = run_one_way(cfg, seed, end, opts.trace)?;
    out.report.conservation = Some(trace.conservation());
    if m.latency {
        out.report.push(spans_or_empty("latency_s", trace.latencies()));
    }
    let saw = soft(AgeSawtooth::from_trace(&trace, m.aoi_origin))?;
    if m.aoi {
        out.report.push(saw.as_ref().map_or_else(|| empty("aoi_s"), |s| MetricRow::new("aoi_s", s.time_summary())));
    }
    if m.peak_aoi {
        let peaks = match &saw {
            Some(s) => soft(peak_summary(s))?,
            None => None,
        };
        out.report.push(peaks.map_or_else(|| empty("peak_aoi_s"), |p| MetricRow::new("peak_aoi_s", p)));
    }
    if let Some(q) = &m.query {
        let row = match &saw {
            Some(s) => {
                let (from, to) = s.window();
                let instants = query_instants(q, &mut RngStream::new(seed, STREAM_QUERY), from, to)?;
                soft(query_aoi_at(s, &instants))?
            }
            None => None,
        };
        out.report.push(row.map_or_else(|| empty("qaoi_s"), |r| MetricRow::new("qaoi_s", r)));
    }
    if m.aoii {
        let process = cfg.process.as_ref().expect("validated");
        let a = soft(aoii(&trace, process))?;
        out.report.push(a.map_or_else(|| empty("aoii_s"), |a| MetricRow::new("aoii_s", a.time_summary())));
    }
    if let Some(d) = m.deadline_s {
        let r = deadline_metrics(&trace, Span::from_secs_f64(d), m.earliness_window_s.map(Span::from_secs_f64))?;
        out.report.push(counted("deadline_violation_prob", r.violation_prob, r.eligible));
        out.report.push(counted("timely_throughput_bps", r.timely_throughput_bps, r.eligible));
        if let Some(f) = r.on_time_fraction {
            out.report.push(counted("on_time_fraction", f, r.eligible));
        }
        out.report.deadline = Some(r);
    }
    if let Some(e) = &m.estimation {
        let model = cfg.process.clone().expect("validated");
        let tracker = EstimationTracker::new(
            model,
            Span::from_secs_f64(e.grid_s),
            Span::from_secs_f64(e.bin_width_s),
            e.n_bins,
        )
        .with_seed(seed);
        match soft(tracker.evaluate(&trace))? {
            Some(r) => {
                out.report.push(counted("estimation_error", r.time_avg_g, r.samples));
                match r.fit_slope() {
                    Some(k) => out.report.push(counted("estimation_slope", k, r.samples)),
                    None => out.report.push(empty("estimation_slope")),
                }
                out.report.estimation_curve = Some(r.curve);
            }
            None => {
                out.report.push(empty("estimation_error"));
                out.report.push(empty("estimation_slope"));
            }
        }
    }
    if opts.sawtooth {
        out.sawtooth = saw.as_ref().map(AgeSawtooth::dump);
    }
    out.trace = trace.events;
    Ok(())
}

fn pipeline(b: &PipelineBlock, seed: u64, mode: Parallelism, out: &mut RunReport) -> Result<()> {
    let base = RngStream::new(seed, STREAM_PIPELINE);
    let runs = par_map_range(b.runs as u64, mode, |i| -> Result<_> {
        let stream = base.derive(i);
        let main = match (&b.merged, &b.coupling) {
            (Some(m), _) => compose_merged(m, &b.stages, b.input_bits, &stream)?,
            (None, Some(c)) => compose_coupled(&b.stages, c, b.input_bits, &stream)?,
            (None, None) => compose_independent(&b.stages, b.input_bits, &stream)?,
        };
        // the split pair under the same draws, for comparison
        let split = match &b.merged {
            Some(m) => {
                let stages: Vec<StageSpec> =
                    [m.first.clone(), m.second.clone()].into_iter().chain(b.stages.iter().cloned()).collect();
                Some(compose_independent(&stages, b.input_bits, &stream)?.total)
            }
            None => None,
        };
        Ok((main, split))
    });
    let runs: Vec<_> = runs.into_iter().collect::<Result<_>>()?;
    out.report.push(spans_or_empty("pipeline_total_s", runs.iter().map(|(c, _)| c.total)));
    let mut per_stage: BTreeMap<usize, (String, Vec<Span>)> = BTreeMap::new();
    for (c, _) in &runs {
        for (i, s) in c.per_stage.iter().enumerate() {
            per_stage.entry(i).or_insert_with(|| (s.name.clone(), Vec::new())).1.push(s.span);
        }
    }
    for (name, v) in per_stage.into_values() {
        out.report.push(spans_or_empty(&format!("stage_{name}_s"), v));
    }
    if b.coupling.is_some() {
        let fired = runs.iter().filter(|(c, _)| !c.metadata.is_zero()).count();
        out.report.push(counted("metadata_fired_fraction", fired as f64 / runs.len() as f64, runs.len() as u64));
    }
    if b.merged.is_some() {
        out.report.push(spans_or_empty("split_total_s", runs.iter().filter_map(|(_, s)| *s)));
        let slower = runs.iter().filter(|(c, s)| s.is_some_and(|s| c.total > s)).count();
        out.report.push(counted("merged_slower_runs", slower as f64, runs.len() as u64));
    }
    Ok(())
}

fn fig1(cfg: &Fig1Config, seed: u64, horizon: Span, record: bool, out: &mut RunReport) -> Result<()> {
    let slot_ns = (cfg.slot_s * 1e9).round() as u64;
    let slots = horizon.as_nanos() / slot_ns.max(1);
    for o in scenario_fig1(cfg, slots, seed, record)? {
        let s = o.scheme.label();
        out.report.push(counted(&format!("{s}_goodput"), o.goodput(), o.slots));
        let lat: Vec<f64> = o.update_latencies.iter().map(|&l| l as f64).collect();
        out.report.push(row_or_empty(&format!("{s}_update_latency_slots"), &lat));
        let q: Vec<f64> = o.qaoi.iter().map(|&a| a as f64).collect();
        out.report.push(row_or_empty(&format!("{s}_qaoi_slots"), &q));
        out.report.push(MetricRow::scalar(format!("{s}_idle_intermittent_slots"), o.idle_intermittent_slots as f64));
        out.report.push(MetricRow::scalar(format!("{s}_updates_pending"), o.pending as f64));
        out.trace.extend(o.trace);
    }
    Ok(())
}

/// One metric merged across seeds: mean of the per-seed means.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MergedMetric {
    pub metric: String,
    pub mean: f64,
    /// Standard error of the mean across seeds; zero with one seed.
    pub std_error: f64,
    /// Seeds on which the metric had at least one sample.
    pub n_seeds: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepReport {
    pub scenario: String,
    pub per_seed: Vec<RunReport>,
    pub merged: Vec<MergedMetric>,
}

/// Runs the scenario once per seed. Results are ordered by seed and merged
/// in that order, so they do not depend on scheduling.
pub fn sweep(sc: &Scenario, seeds: &[u64], opts: &RunOptions) -> Result<SweepReport> {
    let mut sorted = seeds.to_vec();
    sorted.sort_unstable();
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::DuplicateSeeds(w[0]));
    }
    if sorted.is_empty() {
        return Err(Error::validation("seeds", "need at least one seed"));
    }
    sc.validate()?;
    // seeds run in parallel; each run is sequential inside
    let inner = RunOptions { parallelism: Parallelism::Sequential, ..opts.clone() };
    let per_seed = par_map(&sorted, opts.parallelism, |&s| run(sc, &RunOptions { seed: Some(s), ..inner.clone() }));
    let per_seed: Vec<RunReport> = per_seed.into_iter().collect::<Result<_>>()?;

    let mut order: Vec<String> = Vec::new();
    let mut values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in &per_seed {
        for row in &r.report.rows {
            if !values.contains_key(&row.metric) {
                order.push(row.metric.clone());
                values.insert(row.metric.clone(), Vec::new());
            }
            if row.summary.count > 0 {
                values.get_mut(&row.metric).expect("inserted").push(row.summary.mean);
            }
        }
    }
    let merged = order
        .into_iter()
        .map(|metric| {
            let v = &values[&metric];
            let n = v.len();
            let mean = if n == 0 { 0.0 } else { v.iter().sum::<f64>() / n as f64 };
            let std_error = if n < 2 {
                0.0
            } else {
                let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                (var / n as f64).sqrt()
            };
            MergedMetric { metric, mean, std_error, n_seeds: n }
        })
        .collect();
    Ok(SweepReport { scenario: sc.name.clone(), per_seed, merged })
}
