//! Timing budget of a cascade of processing modules.
//!
//! Three variants are supported: independent stages whose spans add up,
//! stages coupled through a metadata exchange that can switch some of them
//! into a faster mode, and a pair of stages merged into one joint stage.
//! Every stage draws from its own child stream keyed by its position, so
//! variants evaluated on the same stream see the same realizations for the
//! stages they share.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{Dist, RngStream};
use crate::time::Span;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SizeMap {
    #[default]
    Identity,
    Scale { factor: f64 },
    Fixed { bits: u64 },
}

impl SizeMap {
    pub fn apply(&self, input_bits: u64) -> u64 {
        match self {
            SizeMap::Identity => input_bits,
            SizeMap::Scale { factor } => (input_bits as f64 * factor).round() as u64,
            SizeMap::Fixed { bits } => *bits,
        }
    }
}

/// Latency law of a stage in one operating mode: a base draw plus a
/// per-bit term on the stage's input size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageMode {
    pub latency: Dist,
    #[serde(default)]
    pub per_bit_s: f64,
}

impl StageMode {
    pub fn fixed(secs: f64) -> Self {
        Self { latency: Dist::deterministic(secs), per_bit_s: 0.0 }
    }

    fn sample(&self, input_bits: u64, rng: &mut RngStream) -> Span {
        let v = rng.draw(&self.latency) + self.per_bit_s * input_bits as f64;
        Span::from_secs_f64(v)
    }

    fn bounds(&self, input_bits: u64) -> (Span, Option<Span>) {
        let (lo, hi) = self.latency.support();
        let extra = self.per_bit_s * input_bits as f64;
        let hi = hi.is_finite().then(|| Span::from_secs_f64(hi + extra));
        (Span::from_secs_f64(lo + extra), hi)
    }

    fn validate(&self, field: &str) -> Result<()> {
        self.latency.validate().map_err(|e| e.context(field.to_string()))?;
        let (lo, _) = self.latency.support();
        if lo < 0.0 || self.per_bit_s < 0.0 {
            return Err(Error::validation(field, "stage latency cannot be negative"));
        }
        if lo == 0.0 && self.per_bit_s == 0.0 {
            return Err(Error::validation(field, "stage latency must be strictly positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSpec {
    pub name: String,
    #[serde(flatten)]
    pub mode: StageMode,
    #[serde(default)]
    pub output: SizeMap,
    /// Faster mode a coupling exchange can switch this stage into.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub priority: Option<StageMode>,
}

impl StageSpec {
    pub fn fixed(name: impl Into<String>, secs: f64) -> Self {
        Self { name: name.into(), mode: StageMode::fixed(secs), output: SizeMap::Identity, priority: None }
    }

    pub fn with_output(mut self, output: SizeMap) -> Self {
        self.output = output;
        self
    }

    pub fn with_priority(mut self, mode: StageMode) -> Self {
        self.priority = Some(mode);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.mode.validate(&self.name)?;
        if let Some(p) = &self.priority {
            p.validate(&format!("{}.priority", self.name))?;
        }
        Ok(())
    }
}

/// Metadata exchange that, when it fires, switches listed stages into their
/// priority mode at an additive latency cost.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSpec {
    #[serde(rename = "metadata_latency_s", with = "crate::protocols::secs")]
    pub metadata_latency: Span,
    /// Probability that an input carries the priority flag.
    pub trigger_prob: f64,
    /// Indices of stages switched to their priority mode.
    pub switches: Vec<usize>,
}

/// Two consecutive stages replaced by a joint implementation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MergedStage {
    pub joint: StageSpec,
    pub first: StageSpec,
    pub second: StageSpec,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StageSample {
    pub name: String,
    pub span: Span,
    pub input_bits: u64,
    pub output_bits: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Composition {
    pub total: Span,
    pub per_stage: Vec<StageSample>,
    /// Metadata cost included in `total`, if an exchange fired.
    pub metadata: Span,
}

const COUPLING_TAG: u64 = 0xC0_0915;
const MERGED_TAG: u64 = 0x3E_96ED;

fn run_stage(stage: &StageSpec, mode: &StageMode, input_bits: u64, rng: &mut RngStream) -> StageSample {
    StageSample {
        name: stage.name.clone(),
        span: mode.sample(input_bits, rng),
        input_bits,
        output_bits: stage.output.apply(input_bits),
    }
}

fn finish(per_stage: Vec<StageSample>, metadata: Span) -> Composition {
    let total = per_stage.iter().map(|s| s.span).sum::<Span>() + metadata;
    Composition { total, per_stage, metadata }
}

/// Independent cascade: the total is the sum of the stage spans.
pub fn compose_independent(stages: &[StageSpec], input_bits: u64, stream: &RngStream) -> Result<Composition> {
    compose_with_modes(stages, &vec![false; stages.len()], input_bits, stream, Span::ZERO)
}

fn compose_with_modes(
    stages: &[StageSpec],
    priority: &[bool],
    input_bits: u64,
    stream: &RngStream,
    metadata: Span,
) -> Result<Composition> {
    if stages.is_empty() {
        return Err(Error::validation("stages", "need at least one stage"));
    }
    let mut size = input_bits;
    let mut per_stage = Vec::with_capacity(stages.len());
    for (i, (stage, fast)) in stages.iter().zip(priority).enumerate() {
        let mode = match (fast, &stage.priority) {
            (true, Some(p)) => p,
            _ => &stage.mode,
        };
        let sample = run_stage(stage, mode, size, &mut stream.derive(i as u64));
        size = sample.output_bits;
        per_stage.push(sample);
    }
    Ok(finish(per_stage, metadata))
}

impl CouplingSpec {
    pub fn validate(&self, stages: &[StageSpec]) -> Result<()> {
        if !(0.0..=1.0).contains(&self.trigger_prob) {
            return Err(Error::validation("trigger_prob", "must lie in [0,1]"));
        }
        for &i in &self.switches {
            let stage = stages
                .get(i)
                .ok_or_else(|| Error::validation("switches", format!("stage index {i} does not exist")))?;
            if stage.priority.is_none() {
                return Err(Error::validation("switches", format!("stage `{}` has no priority mode", stage.name)));
            }
        }
        Ok(())
    }
}

/// Coupled cascade. When the priority flag is set the metadata exchange
/// fires, its latency joins the budget, and the listed stages run in their
/// priority mode. Otherwise the result equals [`compose_independent`].
pub fn compose_coupled(
    stages: &[StageSpec],
    coupling: &CouplingSpec,
    input_bits: u64,
    stream: &RngStream,
) -> Result<Composition> {
    coupling.validate(stages)?;
    let fires = stream.derive(COUPLING_TAG).bernoulli(coupling.trigger_prob) && coupling.trigger_prob > 0.0;
    if !fires {
        return compose_independent(stages, input_bits, stream);
    }
    let mut priority = vec![false; stages.len()];
    for &i in &coupling.switches {
        priority[i] = true;
    }
    compose_with_modes(stages, &priority, input_bits, stream, coupling.metadata_latency)
}

impl MergedStage {
    /// Rejects joint stages that could ever be slower than the split pair
    /// or that change what downstream stages receive.
    pub fn validate(&self, input_bits: u64) -> Result<()> {
        self.joint.validate()?;
        self.first.validate()?;
        self.second.validate()?;
        let mid = self.first.output.apply(input_bits);
        let split_out = self.second.output.apply(mid);
        if self.joint.output.apply(input_bits) != split_out {
            return Err(Error::validation(
                "joint.output",
                format!("joint stage must emit the split pair's {split_out} bits"),
            ));
        }
        let (first_min, _) = self.first.mode.bounds(input_bits);
        let (second_min, _) = self.second.mode.bounds(mid);
        let split_min = first_min + second_min;
        match self.joint.mode.bounds(input_bits).1 {
            Some(max) if max <= split_min => Ok(()),
            max => Err(Error::MergedNotDominant {
                merged_max_ns: max.map_or(u64::MAX, Span::as_nanos),
                split_min_ns: split_min.as_nanos(),
            }),
        }
    }
}

/// Merged cascade: the joint span of the merged pair plus the remaining
/// stages, which reuse the streams they would have had as stages `2..`.
pub fn compose_merged(
    merged: &MergedStage,
    remaining: &[StageSpec],
    input_bits: u64,
    stream: &RngStream,
) -> Result<Composition> {
    merged.validate(input_bits)?;
    let joint = run_stage(&merged.joint, &merged.joint.mode, input_bits, &mut stream.derive(MERGED_TAG));
    let mut size = joint.output_bits;
    let mut per_stage = vec![joint];
    for (i, stage) in remaining.iter().enumerate() {
        let sample = run_stage(stage, &stage.mode, size, &mut stream.derive(i as u64 + 2));
        size = sample.output_bits;
        per_stage.push(sample);
    }
    Ok(finish(per_stage, Span::ZERO))
}
