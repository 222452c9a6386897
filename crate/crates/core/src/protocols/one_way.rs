use serde::{Deserialize, Serialize};

use crate::channels::Channel;
use crate::engine::{Engine, EntityId, TraceRow};
use crate::error::Result;
use crate::rng::RngStream;
use crate::sources::{Packet, ProcessModel, ProcessTrack, QueueSpec, SourceSpec, TransmitQueue};
use crate::time::Instant;

const SOURCE: EntityId = EntityId(1);
const LINK: EntityId = EntityId(2);

const STREAM_SOURCE: u64 = 1;
const STREAM_CHANNEL: u64 = 2;
const STREAM_PROCESS: u64 = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneWayConfig {
    pub source: SourceSpec,
    pub size_bits: u64,
    pub queue: QueueSpec,
    pub channel: Channel,
    #[serde(default)]
    pub retransmit: bool,
    /// On a failed attempt, discard the packet and send a fresh sample instead.
    #[serde(default)]
    pub resample_on_failure: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub process: Option<ProcessModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_packets: Option<u64>,
}

impl OneWayConfig {
    pub fn new(source: SourceSpec, queue: QueueSpec, channel: Channel) -> Self {
        Self {
            source,
            size_bits: 1000,
            queue,
            channel,
            retransmit: false,
            resample_on_failure: false,
            process: None,
            max_packets: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        use crate::error::Error;
        self.source.validate().map_err(|e| e.context("source"))?;
        self.channel.validate().map_err(|e| e.context("channel"))?;
        if self.size_bits == 0 {
            return Err(Error::validation("size_bits", "must be positive"));
        }
        if let Some(p) = &self.process {
            p.validate().map_err(|e| e.context("process"))?;
        }
        if self.source.needs_process() && self.process.is_none() {
            return Err(Error::validation("process", "event-threshold sources need an observed process"));
        }
        if self.queue.capacity == Some(0) {
            return Err(Error::validation("capacity", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropReason {
    QueueFull,
    Purged,
    ChannelLoss,
    Resampled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Delivered(Instant),
    Dropped(DropReason),
    Preempted,
    InFlight,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeliveryRecord {
    pub seq: u64,
    pub generated_at: Instant,
    pub size_bits: u64,
    pub attempts: u32,
    pub outcome: Outcome,
    pub sample: Option<Vec<f64>>,
}

impl DeliveryRecord {
    pub fn delivered_at(&self) -> Option<Instant> {
        match self.outcome {
            Outcome::Delivered(t) => Some(t),
            _ => None,
        }
    }
}

/// Packet fate counters; every generated packet lands in exactly one bucket.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conservation {
    pub generated: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub preempted: u64,
    pub in_flight: u64,
}

impl Conservation {
    pub fn reconciles(&self) -> bool {
        self.generated == self.delivered + self.dropped + self.preempted + self.in_flight
    }

    pub fn merge(&self, other: &Conservation) -> Conservation {
        Conservation {
            generated: self.generated + other.generated,
            delivered: self.delivered + other.delivered,
            dropped: self.dropped + other.dropped,
            preempted: self.preempted + other.preempted,
            in_flight: self.in_flight + other.in_flight,
        }
    }
}

/// Per-packet outcomes of a one-way run, indexed by sequence number.
#[derive(Clone, Debug, PartialEq)]
pub struct DeliveryTrace {
    pub records: Vec<DeliveryRecord>,
    pub horizon: Instant,
    /// Flip instants of a two-state observed process, when one was attached.
    pub process_flips: Option<Vec<Instant>>,
    pub events: Vec<TraceRow>,
}

impl DeliveryTrace {
    /// Builds a trace from `(generated_at, delivered_at)` pairs, for feeding
    /// externally produced deliveries to the metrics.
    pub fn from_pairs(pairs: &[(Instant, Option<Instant>)], horizon: Instant) -> Self {
        let records = pairs
            .iter()
            .enumerate()
            .map(|(i, &(g, d))| DeliveryRecord {
                seq: i as u64,
                generated_at: g,
                size_bits: 1,
                attempts: 1,
                outcome: match d {
                    Some(t) if t <= horizon => Outcome::Delivered(t),
                    Some(_) => Outcome::InFlight,
                    None => Outcome::Dropped(DropReason::ChannelLoss),
                },
                sample: None,
            })
            .collect();
        Self { records, horizon, process_flips: None, events: Vec::new() }
    }

    pub fn conservation(&self) -> Conservation {
        let mut c = Conservation { generated: self.records.len() as u64, ..Default::default() };
        for r in &self.records {
            match r.outcome {
                Outcome::Delivered(_) => c.delivered += 1,
                Outcome::Dropped(_) => c.dropped += 1,
                Outcome::Preempted => c.preempted += 1,
                Outcome::InFlight => c.in_flight += 1,
            }
        }
        c
    }

    /// `(generated_at, delivered_at)` for delivered packets, in reception order.
    pub fn receptions(&self) -> Vec<(Instant, Instant)> {
        let mut rx: Vec<(Instant, Instant, u64)> = self
            .records
            .iter()
            .filter_map(|r| r.delivered_at().map(|d| (d, r.generated_at, r.seq)))
            .collect();
        rx.sort_unstable();
        rx.into_iter().map(|(d, g, _)| (g, d)).collect()
    }

    pub fn latencies(&self) -> impl Iterator<Item = crate::time::Span> + '_ {
        self.records.iter().filter_map(|r| r.delivered_at().map(|d| d - r.generated_at))
    }
}

#[derive(Clone, Copy, Debug)]
enum Ev {
    Generate,
    ServiceEnd { epoch: u64, success: bool },
}

struct OneWayState<'a> {
    cfg: &'a OneWayConfig,
    horizon: Instant,
    queue: TransmitQueue,
    records: Vec<DeliveryRecord>,
    src_rng: RngStream,
    ch_rng: RngStream,
    process: Option<ProcessTrack>,
    last_sample: Option<Vec<f64>>,
    epoch: u64,
    stalled: bool,
    trace: Option<Vec<TraceRow>>,
}

impl OneWayState<'_> {
    fn log(&mut self, t: Instant, entity: &'static str, event: &'static str, detail: impl FnOnce() -> String) {
        if let Some(rows) = self.trace.as_mut() {
            rows.push(TraceRow { t_ns: t.as_nanos(), entity, event, detail: detail() });
        }
    }

    fn generate(&mut self, now: Instant) -> Packet {
        let seq = self.records.len() as u64;
        let sample = self.process.as_mut().map(|p| p.advance_to(now).to_vec());
        self.records.push(DeliveryRecord {
            seq,
            generated_at: now,
            size_bits: self.cfg.size_bits,
            attempts: 0,
            outcome: Outcome::InFlight,
            sample: sample.clone(),
        });
        self.last_sample.clone_from(&sample);
        self.log(now, "source", "generate", || format!("seq={seq}"));
        Packet { seq, generated_at: now, size_bits: self.cfg.size_bits, sample }
    }

    fn start_service(&mut self, eng: &mut Engine<Ev>) {
        let Some(p) = self.queue.in_service() else { return };
        let (seq, size) = (p.seq, p.size_bits);
        let attempt = self.cfg.channel.sample_attempt(size, &mut self.ch_rng);
        self.records[seq as usize].attempts += 1;
        self.epoch += 1;
        self.stalled = false;
        eng.schedule_in(attempt.duration, LINK, Ev::ServiceEnd { epoch: self.epoch, success: attempt.success });
        let now = eng.now();
        self.log(now, "link", "attempt", || format!("seq={seq} success={}", attempt.success));
    }

    fn on_generate(&mut self, eng: &mut Engine<Ev>) {
        let now = eng.now();
        let p = self.generate(now);
        let effect = self.queue.offer(p);
        for seq in &effect.dropped {
            let reason = match self.cfg.queue.discipline {
                crate::sources::Discipline::Fcfs => DropReason::QueueFull,
                _ => DropReason::Purged,
            };
            self.records[*seq as usize].outcome = Outcome::Dropped(reason);
            self.log(now, "queue", "drop", || format!("seq={seq}"));
        }
        if let Some(seq) = effect.preempted {
            self.records[seq as usize].outcome = Outcome::Preempted;
            self.log(now, "queue", "preempt", || format!("seq={seq}"));
        }
        if effect.started.is_some() {
            self.start_service(eng);
        }
        if self.cfg.max_packets.is_some_and(|m| self.records.len() as u64 >= m) {
            return;
        }
        let last = self.last_sample.clone();
        let next = self.cfg.source.next_generation(
            now,
            &mut self.src_rng,
            self.process.as_mut(),
            last.as_deref(),
            self.horizon,
        );
        if let Some(t) = next {
            eng.schedule(t, SOURCE, Ev::Generate).expect("source moves forward");
        }
    }

    fn on_service_end(&mut self, eng: &mut Engine<Ev>, epoch: u64, success: bool) {
        if epoch != self.epoch || self.stalled {
            return; // the attempt was preempted
        }
        let now = eng.now();
        if success {
            let p = self.queue.finish_service().expect("a packet was in service");
            self.records[p.seq as usize].outcome = Outcome::Delivered(now);
            self.log(now, "link", "deliver", || format!("seq={}", p.seq));
        } else if self.cfg.retransmit {
            if self.cfg.channel.success_prob() <= 0.0 {
                // retrying a dead channel never completes; hold the packet
                self.stalled = true;
                return;
            }
            if self.cfg.resample_on_failure {
                let old = self.queue.in_service().expect("in service").seq;
                self.records[old as usize].outcome = Outcome::Dropped(DropReason::Resampled);
                let fresh = self.generate(now);
                *self.queue.in_service_mut().expect("in service") = fresh;
            }
        } else {
            let p = self.queue.finish_service().expect("a packet was in service");
            self.records[p.seq as usize].outcome = Outcome::Dropped(DropReason::ChannelLoss);
            self.log(now, "link", "lost", || format!("seq={}", p.seq));
        }
        self.start_service(eng);
    }
}

/// Simulates a source feeding a transmit queue over one channel.
pub fn run_one_way(cfg: &OneWayConfig, seed: u64, horizon: Instant, record_events: bool) -> Result<DeliveryTrace> {
    cfg.validate()?;
    let process = cfg.process.clone().map(|m| {
        let track = ProcessTrack::new(m.clone(), RngStream::new(seed, STREAM_PROCESS));
        if matches!(m, ProcessModel::TwoStateMarkov { .. }) {
            track.recording_flips()
        } else {
            track
        }
    });
    let mut state = OneWayState {
        cfg,
        horizon,
        queue: TransmitQueue::new(cfg.queue.clone()),
        records: Vec::new(),
        src_rng: RngStream::new(seed, STREAM_SOURCE),
        ch_rng: RngStream::new(seed, STREAM_CHANNEL),
        process,
        last_sample: None,
        epoch: 0,
        stalled: false,
        trace: record_events.then(Vec::new),
    };
    let mut eng = Engine::new();
    let first = cfg.source.first_generation(&mut state.src_rng);
    if first <= horizon && cfg.max_packets != Some(0) {
        eng.schedule(first, SOURCE, Ev::Generate)?;
    }
    eng.run_until(horizon, |eng, ev| match ev.kind {
        Ev::Generate => state.on_generate(eng),
        Ev::ServiceEnd { epoch, success } => state.on_service_end(eng, epoch, success),
    });
    // whatever is still queued stays in flight
    state.queue.drain();
    let process_flips = match state.process {
        Some(track) if matches!(track.model(), ProcessModel::TwoStateMarkov { .. }) => {
            let mut track = track;
            track.advance_to(horizon);
            Some(track.into_flips())
        }
        _ => None,
    };
    Ok(DeliveryTrace {
        records: state.records,
        horizon,
        process_flips,
        events: state.trace.unwrap_or_default(),
    })
}
