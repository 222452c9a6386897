//! End-to-end interaction patterns over channels.

mod control_loop;
mod one_way;
mod two_way;

pub use control_loop::{run_loop, LoopConfig, LoopRecord, LoopTrace};
pub(crate) use control_loop::secs;
pub use one_way::{
    run_one_way, Conservation, DeliveryRecord, DeliveryTrace, DropReason, OneWayConfig, Outcome,
};
pub use two_way::{run_two_way, RoundRecord, TwoWayConfig, TwoWayMode};

use crate::channels::{ChannelContext, CompletionPredicate};
use crate::error::{Error, Result};
use crate::time::Instant;

/// Per-packet instant of the `k`-th successful delivery among `m` receivers.
///
/// `traces[r][p]` is receiver `r`'s delivery instant for packet `p`.
pub fn multicast_completion(
    m: usize,
    k: usize,
    traces: &[Vec<Option<Instant>>],
) -> Result<Vec<Option<Instant>>> {
    if k == 0 || k > m || traces.len() != m {
        return Err(Error::InvalidK { k, m });
    }
    let packets = traces.iter().map(Vec::len).max().unwrap_or(0);
    let ctx = ChannelContext::new("multicast", CompletionPredicate::KOfM { k, m });
    (0..packets)
        .map(|p| {
            let per_rx: Vec<Option<Instant>> = traces.iter().map(|t| t.get(p).copied().flatten()).collect();
            ctx.completion_instant(&per_rx)
        })
        .collect()
}
