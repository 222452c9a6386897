use serde::{Deserialize, Serialize};

use crate::channels::Channel;
use crate::error::Result;
use crate::rng::RngStream;
use crate::sources::SourceSpec;
use crate::time::{Instant, Span};

/// Sensor-to-controller-to-actuator loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopConfig {
    /// State report, sensor to controller.
    pub uplink: Channel,
    /// Command, controller to actuator.
    pub downlink: Channel,
    #[serde(rename = "controller_compute_s", with = "secs")]
    pub controller_compute: Span,
    #[serde(default = "default_bits")]
    pub state_bits: u64,
    #[serde(default = "default_bits")]
    pub command_bits: u64,
    #[serde(default)]
    pub retransmit: bool,
}

fn default_bits() -> u64 {
    256
}

pub(crate) mod secs {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::time::Span;

    pub fn serialize<S: Serializer>(span: &Span, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(span.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Span, D::Error> {
        let v = f64::deserialize(d)?;
        if v < 0.0 || !v.is_finite() {
            return Err(serde::de::Error::custom("duration must be a non-negative number of seconds"));
        }
        Ok(Span::from_secs_f64(v))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct LoopRecord {
    pub cycle: u64,
    pub sent_at: Instant,
    pub closed_at: Option<Instant>,
}

impl LoopRecord {
    pub fn loop_time(&self) -> Option<Span> {
        self.closed_at.map(|c| c - self.sent_at)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoopTrace {
    pub cycles: Vec<LoopRecord>,
    pub horizon: Instant,
}

impl LoopTrace {
    pub fn closed(&self) -> impl Iterator<Item = Span> + '_ {
        self.cycles.iter().filter_map(LoopRecord::loop_time)
    }

    pub fn open_count(&self) -> usize {
        self.cycles.iter().filter(|c| c.closed_at.is_none()).count()
    }
}

const STREAM_CYCLES: u64 = 31;
const STREAM_UPLINK: u64 = 32;
const STREAM_DOWNLINK: u64 = 33;

fn leg(ch: &Channel, bits: u64, retransmit: bool, rng: &mut RngStream, budget: Span) -> Option<Span> {
    if retransmit {
        ch.deliver_persistently(bits, rng, budget).map(|(d, _)| d)
    } else {
        let a = ch.sample_attempt(bits, rng);
        (a.success && a.duration <= budget).then_some(a.duration)
    }
}

/// Runs one loop per source generation; each closes after uplink delivery,
/// controller compute and downlink delivery. Cycles do not contend for the
/// channel. Loops that do not close by `horizon` stay open.
pub fn run_loop(cfg: &LoopConfig, src: &SourceSpec, seed: u64, horizon: Instant) -> Result<LoopTrace> {
    cfg.uplink.validate()?;
    cfg.downlink.validate()?;
    src.validate()?;
    let mut cycle_rng = RngStream::new(seed, STREAM_CYCLES);
    let mut up_rng = RngStream::new(seed, STREAM_UPLINK);
    let mut down_rng = RngStream::new(seed, STREAM_DOWNLINK);
    let mut cycles = Vec::new();
    let mut next = Some(src.first_generation(&mut cycle_rng)).filter(|t| *t <= horizon);
    while let Some(sent_at) = next {
        let budget = horizon - sent_at;
        let closed_at = leg(&cfg.uplink, cfg.state_bits, cfg.retransmit, &mut up_rng, budget)
            .map(|up| up + cfg.controller_compute)
            .filter(|elapsed| *elapsed <= budget)
            .and_then(|elapsed| {
                leg(&cfg.downlink, cfg.command_bits, cfg.retransmit, &mut down_rng, budget - elapsed)
                    .map(|down| elapsed + down)
            })
            .map(|total| sent_at + total);
        cycles.push(LoopRecord { cycle: cycles.len() as u64, sent_at, closed_at });
        next = src.next_generation(sent_at, &mut cycle_rng, None, None, horizon);
    }
    Ok(LoopTrace { cycles, horizon })
}
