//! Slotted uplink shared by a saturated high-rate user and an intermittent
//! user, served either by periodic reservations or by base-station pulls.
//!
//! Time is counted in unit slots. An update generated at the start of slot
//! `g` and carried by a transmission in slot `s >= g` reaches the base
//! station at the end of `s`, so its latency is `s + 1 - g` slots. Only the
//! freshest pending update is kept.

use serde::{Deserialize, Serialize};

use crate::engine::TraceRow;
use crate::error::{Error, Result};
use crate::rng::RngStream;

fn four() -> u32 {
    4
}

fn default_slot() -> f64 {
    1e-3
}

/// When the base station wants the intermittent user's information.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SlotQuery {
    #[default]
    None,
    Periodic {
        period_slots: u32,
        #[serde(default)]
        offset_slots: u32,
    },
    /// Each slot is a query slot independently with this probability.
    Random { prob_per_slot: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fig1Config {
    /// Every this-many-th slot is reserved for the intermittent user.
    #[serde(default = "four")]
    pub reservation_period_slots: u32,
    /// Slot duration, used only to convert the horizon and trace times.
    #[serde(default = "default_slot")]
    pub slot_s: f64,
    /// Probability that the intermittent user produces an update at the
    /// start of a slot.
    pub update_prob: f64,
    #[serde(default)]
    pub query: SlotQuery,
}

impl Fig1Config {
    pub fn validate(&self) -> Result<()> {
        if self.reservation_period_slots == 0 {
            return Err(Error::validation("reservation_period_slots", "must be at least 1"));
        }
        if !(self.slot_s > 0.0) {
            return Err(Error::validation("slot_s", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.update_prob) {
            return Err(Error::validation("update_prob", "must lie in [0, 1]"));
        }
        match self.query {
            SlotQuery::Periodic { period_slots: 0, .. } => Err(Error::validation("query.period_slots", "must be at least 1")),
            SlotQuery::Random { prob_per_slot } if !(0.0..=1.0).contains(&prob_per_slot) => {
                Err(Error::validation("query.prob_per_slot", "must lie in [0, 1]"))
            }
            _ => Ok(()),
        }
    }

    fn is_reserved(&self, slot: u64) -> bool {
        let p = self.reservation_period_slots as u64;
        slot % p == p - 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Reservation,
    Pull,
}

impl Scheme {
    pub fn label(self) -> &'static str {
        match self {
            Scheme::Reservation => "reservation",
            Scheme::Pull => "pull",
        }
    }
}

/// Per-scheme outcome, all times in slots.
#[derive(Clone, Debug, PartialEq)]
pub struct SchemeOutcome {
    pub scheme: Scheme,
    pub slots: u64,
    pub high_rate_slots: u64,
    /// Slots given to the intermittent user that carried nothing new.
    pub idle_intermittent_slots: u64,
    /// For every conveyed update, slots until information at least as
    /// fresh reached the base station.
    pub update_latencies: Vec<u64>,
    pub generated: u64,
    /// Updates still waiting for a transmission at the horizon.
    pub pending: u64,
    /// Age seen at the end of each query slot.
    pub qaoi: Vec<u64>,
    pub trace: Vec<TraceRow>,
}

impl SchemeOutcome {
    pub fn goodput(&self) -> f64 {
        if self.slots == 0 {
            0.0
        } else {
            self.high_rate_slots as f64 / self.slots as f64
        }
    }

    pub fn worst_latency(&self) -> Option<u64> {
        self.update_latencies.iter().copied().max()
    }

    /// Every generated update is either conveyed or pending.
    pub fn reconciles(&self) -> bool {
        self.generated == self.update_latencies.len() as u64 + self.pending
    }
}

const STREAM_UPDATES: u64 = 81;
const STREAM_QUERIES: u64 = 82;

/// Update and query slots, shared by both schemes.
fn draw_activity(cfg: &Fig1Config, slots: u64, seed: u64) -> (Vec<bool>, Vec<bool>) {
    let mut up = RngStream::new(seed, STREAM_UPDATES);
    let mut qr = RngStream::new(seed, STREAM_QUERIES);
    let updates = (0..slots).map(|_| up.bernoulli(cfg.update_prob)).collect();
    let queries = (0..slots)
        .map(|s| match cfg.query {
            SlotQuery::None => false,
            SlotQuery::Periodic { period_slots, offset_slots } => {
                s >= offset_slots as u64 && (s - offset_slots as u64).is_multiple_of(period_slots as u64)
            }
            SlotQuery::Random { prob_per_slot } => qr.bernoulli(prob_per_slot),
        })
        .collect();
    (updates, queries)
}

/// Runs one scheme over `slots` slots.
pub fn simulate_scheme(cfg: &Fig1Config, scheme: Scheme, slots: u64, seed: u64, record: bool) -> Result<SchemeOutcome> {
    cfg.validate()?;
    let (updates, queries) = draw_activity(cfg, slots, seed);
    let slot_ns = (cfg.slot_s * 1e9).round() as u64;
    let mut out = SchemeOutcome {
        scheme,
        slots,
        high_rate_slots: 0,
        idle_intermittent_slots: 0,
        update_latencies: Vec::new(),
        generated: 0,
        pending: 0,
        qaoi: Vec::new(),
        trace: Vec::new(),
    };
    // generation slots of updates not yet conveyed
    let mut waiting: Vec<u64> = Vec::new();
    // generation slot of the freshest information at the base station
    let mut freshest: Option<u64> = None;
    for s in 0..slots {
        if updates[s as usize] {
            waiting.push(s);
            out.generated += 1;
        }
        let intermittent_slot = match scheme {
            Scheme::Reservation => cfg.is_reserved(s),
            Scheme::Pull => queries[s as usize],
        };
        let event = if intermittent_slot {
            // a pulled response samples the current state; a reserved slot
            // carries the freshest pending update
            let carries = match scheme {
                Scheme::Pull => Some(s),
                Scheme::Reservation => waiting.last().copied(),
            };
            if waiting.is_empty() {
                out.idle_intermittent_slots += 1;
            }
            for g in waiting.drain(..) {
                out.update_latencies.push(s + 1 - g);
            }
            if let Some(g) = carries {
                freshest = Some(freshest.map_or(g, |f| f.max(g)));
            }
            match (scheme, carries) {
                (Scheme::Pull, _) => "pull",
                (Scheme::Reservation, Some(_)) => "reserved-update",
                (Scheme::Reservation, None) => "reserved-idle",
            }
        } else {
            out.high_rate_slots += 1;
            "high-rate"
        };
        if queries[s as usize] {
            if let Some(f) = freshest {
                out.qaoi.push(s + 1 - f);
            }
        }
        if record {
            out.trace.push(TraceRow {
                t_ns: s * slot_ns,
                entity: scheme.label(),
                event,
                detail: format!("slot={s}"),
            });
        }
    }
    out.pending = waiting.len() as u64;
    Ok(out)
}

/// Both schemes under the same update and query realization.
pub fn scenario_fig1(cfg: &Fig1Config, slots: u64, seed: u64, record: bool) -> Result<[SchemeOutcome; 2]> {
    Ok([
        simulate_scheme(cfg, Scheme::Reservation, slots, seed, record)?,
        simulate_scheme(cfg, Scheme::Pull, slots, seed, record)?,
    ])
}
