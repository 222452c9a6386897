use serde::{Deserialize, Serialize};

use crate::channels::ShannonChannel;
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::time::{Instant, Span};

/// Acknowledged transfer over a time-division duplex round of `L` channel
/// uses, a fraction `k` of which carries data and the rest the ack.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoWayConfig {
    pub data_bits: u64,
    pub ack_bits: u64,
    #[serde(default)]
    pub request_bits: u64,
    pub split: f64,
    pub round_channel_uses: u64,
    pub channel: ShannonChannel,
    /// Per-leg success overrides; default to `1 - block_error_prob`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_success_prob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ack_success_prob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_success_prob: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TwoWayMode {
    PushAck,
    Pull,
}

/// One acknowledged data unit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct RoundRecord {
    pub packet_seq: u64,
    pub rounds: u32,
    pub request_attempts: u32,
    pub anchor_instant: Instant,
    pub completion_instant: Instant,
}

impl RoundRecord {
    pub fn latency(&self) -> Span {
        self.completion_instant - self.anchor_instant
    }
}

impl TwoWayConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(Error::InvalidSplit(self.split));
        }
        self.channel.validate()?;
        if self.round_channel_uses == 0 {
            return Err(Error::validation("round_channel_uses", "must be positive"));
        }
        for (name, p) in [
            ("data_success_prob", self.data_success_prob),
            ("ack_success_prob", self.ack_success_prob),
            ("request_success_prob", self.request_success_prob),
        ] {
            if let Some(p) = p {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::validation(name, "must lie in [0,1]"));
                }
            }
        }
        Ok(())
    }

    /// `t_RTT = L / (2B)`.
    pub fn round_trip(&self) -> Span {
        self.channel.uses_duration(self.round_channel_uses as f64)
    }

    /// Data leg, `kL / (2B)`.
    pub fn forward_leg(&self) -> Span {
        self.channel.uses_duration(self.split * self.round_channel_uses as f64).min(self.round_trip())
    }

    /// Ack leg; forward plus reverse equals `t_RTT` to the nanosecond.
    pub fn reverse_leg(&self) -> Span {
        self.round_trip() - self.forward_leg()
    }

    /// Request leg of the pull variant.
    pub fn request_leg(&self) -> Span {
        self.channel.tx_time(self.request_bits.max(1))
    }

    /// Data rate in bits per channel use, `D_1 / (kL)`.
    pub fn data_rate(&self) -> f64 {
        self.data_bits as f64 / (self.split * self.round_channel_uses as f64)
    }

    /// Ack rate in bits per channel use, `D_a / ((1-k)L)`.
    pub fn ack_rate(&self) -> f64 {
        self.ack_bits as f64 / ((1.0 - self.split) * self.round_channel_uses as f64)
    }

    fn default_success(&self) -> f64 {
        1.0 - self.channel.block_error
    }

    pub fn data_success(&self) -> f64 {
        self.data_success_prob.unwrap_or_else(|| self.default_success())
    }

    pub fn ack_success(&self) -> f64 {
        self.ack_success_prob.unwrap_or_else(|| self.default_success())
    }

    pub fn request_success(&self) -> f64 {
        self.request_success_prob.unwrap_or_else(|| self.default_success())
    }
}

const STREAM_ROUNDS: u64 = 21;
const STREAM_REQUEST: u64 = 22;

/// Runs back-to-back acknowledged transfers until `horizon` or `max_transfers`.
///
/// Each round transmits the data and, if it arrives, the ack; the transfer
/// completes after the first round in which both succeed, so it lasts a
/// whole number of `t_RTT`. In pull mode the recipient first sends a
/// request; a lost request is retried after one `t_RTT` timeout, and latency
/// is measured from the first request emission.
pub fn run_two_way(
    cfg: &TwoWayConfig,
    mode: TwoWayMode,
    seed: u64,
    horizon: Instant,
    max_transfers: Option<usize>,
) -> Result<Vec<RoundRecord>> {
    cfg.validate()?;
    let (q_data, q_ack, q_req) = (cfg.data_success(), cfg.ack_success(), cfg.request_success());
    let rtt = cfg.round_trip();
    let mut rounds_rng = RngStream::new(seed, STREAM_ROUNDS);
    let mut request_rng = RngStream::new(seed, STREAM_REQUEST);
    let mut out = Vec::new();
    let mut t = Instant::ORIGIN;
    // a transfer that cannot succeed would never terminate
    let hopeless = q_data * q_ack <= 0.0 || (mode == TwoWayMode::Pull && q_req <= 0.0);
    while max_transfers.is_none_or(|m| out.len() < m) && !hopeless {
        let anchor = t;
        let mut request_attempts = 0;
        if mode == TwoWayMode::Pull {
            loop {
                request_attempts += 1;
                if request_rng.bernoulli(q_req) {
                    t = t.saturating_add(cfg.request_leg());
                    break;
                }
                t = t.saturating_add(rtt);
                if t > horizon {
                    return Ok(out);
                }
            }
        }
        let mut rounds = 0u32;
        loop {
            rounds += 1;
            t = t.saturating_add(rtt);
            let data_ok = rounds_rng.bernoulli(q_data);
            let ack_ok = data_ok && rounds_rng.bernoulli(q_ack);
            if ack_ok || t > horizon {
                break;
            }
        }
        if t > horizon {
            break;
        }
        out.push(RoundRecord {
            packet_seq: out.len() as u64,
            rounds,
            request_attempts,
            anchor_instant: anchor,
            completion_instant: t,
        });
    }
    Ok(out)
}
