use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channels::{Channel, ShannonChannel};
use crate::consensus::{ConsensusConfig, ContactGraph, InitialOpinions};
use crate::error::{Error, Result};
use crate::fedsim::{DeviceProfile, QuadraticTask, StragglerPolicy};
use crate::metrics::AgeOrigin;
use crate::pipeline::{CouplingSpec, MergedStage, StageSpec};
use crate::protocols::{secs, LoopConfig, OneWayConfig, TwoWayConfig, TwoWayMode};
use crate::sources::{Discipline, ProcessModel, QueueSpec, SourceSpec};
use crate::time::Span;

use super::fig1::Fig1Config;

fn default_seed() -> u64 {
    1
}

fn yes() -> bool {
    true
}

/// A runnable experiment: shared settings, named channels and exactly one
/// experiment block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// Timing reference and purpose, e.g. `anchor/estimation`.
    #[serde(default)]
    pub taxonomy: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(rename = "horizon_s", with = "secs")]
    pub horizon: Span,
    #[serde(default)]
    pub channels: BTreeMap<String, Channel>,
    #[serde(default)]
    pub metrics: MetricsSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub one_way: Option<OneWayBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub two_way: Option<TwoWayBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control_loop: Option<LoopBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pipeline: Option<PipelineBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consensus: Option<ConsensusBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fedsim: Option<FedsimBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fig1: Option<Fig1Config>,
}

/// Metrics computed for one-way experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSpec {
    #[serde(default = "yes")]
    pub latency: bool,
    #[serde(default = "yes")]
    pub aoi: bool,
    #[serde(default = "yes")]
    pub peak_aoi: bool,
    #[serde(default)]
    pub aoi_origin: AgeOrigin,
    /// Query process for query AoI.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<SourceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deadline_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub earliness_window_s: Option<f64>,
    #[serde(default)]
    pub aoii: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimation: Option<EstimationSpec>,
}

impl Default for MetricsSpec {
    fn default() -> Self {
        Self {
            latency: true,
            aoi: true,
            peak_aoi: true,
            aoi_origin: AgeOrigin::FirstReception,
            query: None,
            deadline_s: None,
            earliness_window_s: None,
            aoii: false,
            estimation: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationSpec {
    pub grid_s: f64,
    pub bin_width_s: f64,
    pub n_bins: usize,
}

fn default_size() -> u64 {
    1000
}

fn default_queue() -> QueueSpec {
    QueueSpec::new(Discipline::Fcfs)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OneWayBlock {
    pub source: SourceSpec,
    #[serde(default = "default_size")]
    pub size_bits: u64,
    #[serde(default = "default_queue")]
    pub queue: QueueSpec,
    /// Name of an entry in `[channels]`.
    pub channel: String,
    #[serde(default)]
    pub retransmit: bool,
    #[serde(default)]
    pub resample_on_failure: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub process: Option<ProcessModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_packets: Option<u64>,
}

fn default_mode() -> TwoWayMode {
    TwoWayMode::PushAck
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoWayBlock {
    pub data_bits: u64,
    pub ack_bits: u64,
    #[serde(default)]
    pub request_bits: u64,
    pub split: f64,
    pub round_channel_uses: u64,
    /// Name of a shannon entry in `[channels]`.
    pub channel: String,
    #[serde(default = "default_mode")]
    pub mode: TwoWayMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_success_prob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ack_success_prob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_success_prob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_transfers: Option<usize>,
}

fn default_bits() -> u64 {
    256
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopBlock {
    pub source: SourceSpec,
    pub uplink: String,
    pub downlink: String,
    #[serde(rename = "controller_compute_s", with = "secs")]
    pub controller_compute: Span,
    #[serde(default = "default_bits")]
    pub state_bits: u64,
    #[serde(default = "default_bits")]
    pub command_bits: u64,
    #[serde(default)]
    pub retransmit: bool,
}

fn default_runs() -> u32 {
    10_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineBlock {
    #[serde(default = "default_size")]
    pub input_bits: u64,
    #[serde(default = "default_runs")]
    pub runs: u32,
    /// Stages in order; with `merged` set these are the stages after the
    /// merged pair.
    #[serde(default)]
    pub stages: Vec<StageSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<CouplingSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub merged: Option<MergedStage>,
}

fn default_consensus_runs() -> u32 {
    1000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsensusBlock {
    pub n_nodes: usize,
    pub contact_budget: usize,
    #[serde(default)]
    pub graph: ContactGraph,
    pub initial: InitialOpinions,
    #[serde(default)]
    pub initiator: usize,
    #[serde(default)]
    pub stubborn: Vec<usize>,
    pub max_rounds: u32,
    #[serde(default = "default_consensus_runs")]
    pub runs: u32,
}

impl ConsensusBlock {
    pub fn config(&self) -> ConsensusConfig {
        ConsensusConfig {
            n_nodes: self.n_nodes,
            contact_budget: self.contact_budget,
            graph: self.graph.clone(),
            initial: self.initial.clone(),
            initiator: self.initiator,
            stubborn: self.stubborn.clone(),
            max_rounds: self.max_rounds,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReliabilitySpec {
    pub grid: Vec<u32>,
    pub trials: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSpec {
    pub grid: Vec<u32>,
    pub trials: u32,
    pub c3: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FedsimBlock {
    pub rounds: u32,
    #[serde(default)]
    pub policy: StragglerPolicy,
    pub task: QuadraticTask,
    pub devices: Vec<DeviceProfile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reliability: Option<ReliabilitySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceSpec>,
}

/// The experiment a scenario runs, with channel references resolved.
#[derive(Clone, Debug, PartialEq)]
pub enum Experiment {
    OneWay(OneWayConfig),
    TwoWay(TwoWayConfig, TwoWayMode, Option<usize>),
    ControlLoop(LoopConfig, SourceSpec),
    Pipeline(PipelineBlock),
    Consensus(ConsensusBlock),
    Fedsim(FedsimBlock),
    Fig1(Fig1Config),
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::OneWay(..) => "one_way",
            Experiment::TwoWay(..) => "two_way",
            Experiment::ControlLoop(..) => "control_loop",
            Experiment::Pipeline(..) => "pipeline",
            Experiment::Consensus(..) => "consensus",
            Experiment::Fedsim(..) => "fedsim",
            Experiment::Fig1(..) => "fig1",
        }
    }
}

/// Re-labels any error raised while validating `field` as a validation
/// error on that field.
fn as_validation(e: Error, field: &str) -> Error {
    match e {
        Error::Validation { field: inner, reason } => Error::Validation { field: format!("{field}.{inner}"), reason },
        Error::Context { context, source } => as_validation(*source, &format!("{field}.{context}")),
        other => Error::Validation { field: field.to_string(), reason: other.to_string() },
    }
}

impl Scenario {
    fn channel(&self, field: &str, name: &str) -> Result<Channel> {
        self.channels
            .get(name)
            .cloned()
            .ok_or_else(|| Error::validation(field, format!("unknown channel '{name}'")))
    }

    /// Resolves references and validates the single experiment block.
    pub fn experiment(&self) -> Result<Experiment> {
        let present = [
            self.one_way.is_some(),
            self.two_way.is_some(),
            self.control_loop.is_some(),
            self.pipeline.is_some(),
            self.consensus.is_some(),
            self.fedsim.is_some(),
            self.fig1.is_some(),
        ];
        let n = present.iter().filter(|p| **p).count();
        if n != 1 {
            return Err(Error::validation(
                "experiment",
                format!("need exactly one of one_way, two_way, control_loop, pipeline, consensus, fedsim, fig1; found {n}"),
            ));
        }
        for (name, ch) in &self.channels {
            ch.validate().map_err(|e| as_validation(e, &format!("channels.{name}")))?;
        }
        let exp = if let Some(b) = &self.one_way {
            let mut cfg = OneWayConfig::new(b.source.clone(), b.queue.clone(), self.channel("one_way.channel", &b.channel)?);
            cfg.size_bits = b.size_bits;
            cfg.retransmit = b.retransmit;
            cfg.resample_on_failure = b.resample_on_failure;
            cfg.process = b.process.clone();
            cfg.max_packets = b.max_packets;
            cfg.validate().map_err(|e| as_validation(e, "one_way"))?;
            self.validate_metrics(&cfg)?;
            Experiment::OneWay(cfg)
        } else if let Some(b) = &self.two_way {
            let channel = match self.channel("two_way.channel", &b.channel)? {
                Channel::Shannon(c) => c,
                Channel::Sampled(_) => {
                    return Err(Error::validation("two_way.channel", format!("channel '{}' must be of kind shannon", b.channel)))
                }
            };
            let cfg = TwoWayConfig {
                data_bits: b.data_bits,
                ack_bits: b.ack_bits,
                request_bits: b.request_bits,
                split: b.split,
                round_channel_uses: b.round_channel_uses,
                channel,
                data_success_prob: b.data_success_prob,
                ack_success_prob: b.ack_success_prob,
                request_success_prob: b.request_success_prob,
            };
            cfg.validate().map_err(|e| as_validation(e, "two_way"))?;
            Experiment::TwoWay(cfg, b.mode, b.max_transfers)
        } else if let Some(b) = &self.control_loop {
            let cfg = LoopConfig {
                uplink: self.channel("control_loop.uplink", &b.uplink)?,
                downlink: self.channel("control_loop.downlink", &b.downlink)?,
                controller_compute: b.controller_compute,
                state_bits: b.state_bits,
                command_bits: b.command_bits,
                retransmit: b.retransmit,
            };
            b.source.validate().map_err(|e| as_validation(e, "control_loop.source"))?;
            if b.source.needs_process() {
                return Err(Error::validation("control_loop.source", "must be periodic or poisson"));
            }
            Experiment::ControlLoop(cfg, b.source.clone())
        } else if let Some(b) = &self.pipeline {
            if b.runs == 0 {
                return Err(Error::validation("pipeline.runs", "must be positive"));
            }
            for (i, s) in b.stages.iter().enumerate() {
                s.validate().map_err(|e| as_validation(e, &format!("pipeline.stages[{i}]")))?;
            }
            if let Some(c) = &b.coupling {
                c.validate(&b.stages).map_err(|e| as_validation(e, "pipeline.coupling"))?;
            }
            match &b.merged {
                Some(m) => m.validate(b.input_bits).map_err(|e| as_validation(e, "pipeline.merged"))?,
                None if b.stages.is_empty() => return Err(Error::validation("pipeline.stages", "need at least one stage")),
                None => {}
            }
            if b.merged.is_some() && b.coupling.is_some() {
                return Err(Error::validation("pipeline", "merged and coupling cannot be combined"));
            }
            Experiment::Pipeline(b.clone())
        } else if let Some(b) = &self.consensus {
            b.config().validate().map_err(|e| as_validation(e, "consensus"))?;
            b.config().build(0).map_err(|e| as_validation(e, "consensus"))?;
            if b.runs == 0 {
                return Err(Error::validation("consensus.runs", "must be positive"));
            }
            Experiment::Consensus(b.clone())
        } else if let Some(b) = &self.fedsim {
            if b.devices.is_empty() {
                return Err(Error::validation("fedsim.devices", "need at least one device"));
            }
            for (i, d) in b.devices.iter().enumerate() {
                d.validate().map_err(|e| as_validation(e, &format!("fedsim.devices[{i}]")))?;
            }
            b.task.validate(b.devices.len()).map_err(|e| as_validation(e, "fedsim.task"))?;
            b.policy.validate(b.devices.len()).map_err(|e| as_validation(e, "fedsim.policy"))?;
            if let Some(r) = &b.reliability {
                if r.trials == 0 || r.grid.is_empty() {
                    return Err(Error::validation("fedsim.reliability", "need trials and a non-empty grid"));
                }
            }
            if let Some(c) = &b.convergence {
                if c.grid.len() < 4 {
                    return Err(as_validation(Error::InsufficientGrid { needed: 4, got: c.grid.len() }, "fedsim.convergence.grid"));
                }
                if !(c.c3 > 0.0) || c.trials == 0 || c.grid.contains(&0) {
                    return Err(Error::validation("fedsim.convergence", "need c3 > 0, trials >= 1 and positive N"));
                }
            }
            Experiment::Fedsim(b.clone())
        } else {
            let f = self.fig1.as_ref().expect("one block is present");
            f.validate().map_err(|e| as_validation(e, "fig1"))?;
            Experiment::Fig1(f.clone())
        };
        Ok(exp)
    }

    fn validate_metrics(&self, cfg: &OneWayConfig) -> Result<()> {
        let m = &self.metrics;
        if let Some(q) = &m.query {
            if q.needs_process() {
                return Err(Error::validation("metrics.query", "query processes must be periodic or poisson"));
            }
            q.validate().map_err(|e| as_validation(e, "metrics.query"))?;
        }
        if let Some(d) = m.deadline_s {
            if !(d > 0.0) || Span::from_secs_f64(d).is_zero() {
                return Err(Error::validation("metrics.deadline_s", "must be positive"));
            }
            if m.earliness_window_s.is_some_and(|w| !(w >= 0.0) || w > d) {
                return Err(Error::validation("metrics.earliness_window_s", "must lie in [0, deadline_s]"));
            }
        } else if m.earliness_window_s.is_some() {
            return Err(Error::validation("metrics.earliness_window_s", "needs deadline_s"));
        }
        if m.aoii && !matches!(cfg.process, Some(ProcessModel::TwoStateMarkov { .. })) {
            return Err(Error::validation("metrics.aoii", "needs a two-state-markov process on the source"));
        }
        if let Some(e) = &m.estimation {
            if cfg.process.is_none() {
                return Err(Error::validation("metrics.estimation", "needs a process on the source"));
            }
            if !(e.grid_s > 0.0) || !(e.bin_width_s > 0.0) || e.n_bins == 0 {
                return Err(Error::validation("metrics.estimation", "grid_s, bin_width_s and n_bins must be positive"));
            }
        }
        Ok(())
    }

    /// Checks the whole scenario.
    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::validation("name", "must not be empty"));
        }
        self.experiment().map(|_| ())
    }

    /// The scenario with every default filled in, in the config format.
    pub fn effective_config(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }
}

/// 1-based line and column of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

/// Parses and validates a scenario from config text.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let sc: Scenario = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
        Error::Parse { line, column, message: e.message().to_string() }
    })?;
    sc.validate()?;
    Ok(sc)
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_scenario(&text)
}

/// A shannon channel for examples and tests.
pub fn shannon(bandwidth_hz: f64, block_error_prob: f64) -> Channel {
    Channel::Shannon(ShannonChannel::new(bandwidth_hz, block_error_prob, 1.0))
}
