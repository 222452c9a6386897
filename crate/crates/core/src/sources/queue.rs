//! Transmit-queue disciplines.
//!
//! A queue owns at most one packet in service plus a waiting set. `offer`
//! applies the admission rule and reports what it displaced; the caller
//! drives service completion with [`TransmitQueue::finish_service`].

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::Packet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Discipline {
    Fcfs,
    /// A new arrival preempts and discards the packet in service.
    LcfsPreempt,
    /// Keep only the freshest waiting packet.
    PurgeReplace,
    /// Never drop; serve the freshest waiting packet first, backlog after.
    QueueAndReorder,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Overflow {
    #[default]
    DropNewest,
    DropOldest,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueueSpec {
    pub discipline: Discipline,
    /// Packets in the system (in service plus waiting). Only FCFS honors it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity: Option<usize>,
    #[serde(default)]
    pub overflow: Overflow,
}

impl QueueSpec {
    pub fn new(discipline: Discipline) -> Self {
        Self { discipline, capacity: None, overflow: Overflow::DropNewest }
    }

    pub fn with_capacity(mut self, capacity: usize) -> Self {
        self.capacity = Some(capacity);
        self
    }
}

/// What an offer did besides admitting (or refusing) the packet.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct QueueEffect {
    /// Sequence number of the packet that entered service, if the server
    /// was idle or a preemption happened.
    pub started: Option<u64>,
    pub dropped: Vec<u64>,
    pub preempted: Option<u64>,
}

#[derive(Clone, Debug)]
pub struct TransmitQueue {
    spec: QueueSpec,
    in_service: Option<Packet>,
    waiting: VecDeque<Packet>,
    max_waiting_seen: usize,
}

impl TransmitQueue {
    pub fn new(spec: QueueSpec) -> Self {
        Self { spec, in_service: None, waiting: VecDeque::new(), max_waiting_seen: 0 }
    }

    pub fn spec(&self) -> &QueueSpec {
        &self.spec
    }

    pub fn in_service(&self) -> Option<&Packet> {
        self.in_service.as_ref()
    }

    pub fn in_service_mut(&mut self) -> Option<&mut Packet> {
        self.in_service.as_mut()
    }

    pub fn waiting(&self) -> impl Iterator<Item = &Packet> {
        self.waiting.iter()
    }

    pub fn waiting_len(&self) -> usize {
        self.waiting.len()
    }

    /// Largest waiting-set size observed so far.
    pub fn max_waiting_seen(&self) -> usize {
        self.max_waiting_seen
    }

    pub fn len(&self) -> usize {
        self.waiting.len() + usize::from(self.in_service.is_some())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn offer(&mut self, p: Packet) -> QueueEffect {
        let mut effect = QueueEffect::default();
        if self.in_service.is_none() && self.waiting.is_empty() {
            effect.started = Some(p.seq);
            self.in_service = Some(p);
            return effect;
        }
        match self.spec.discipline {
            Discipline::Fcfs => {
                let full = self.spec.capacity.is_some_and(|c| self.len() >= c);
                if !full {
                    self.waiting.push_back(p);
                } else {
                    match self.spec.overflow {
                        Overflow::DropNewest => effect.dropped.push(p.seq),
                        Overflow::DropOldest => match self.waiting.pop_front() {
                            Some(old) => {
                                effect.dropped.push(old.seq);
                                self.waiting.push_back(p);
                            }
                            None => effect.dropped.push(p.seq),
                        },
                    }
                }
            }
            Discipline::LcfsPreempt => {
                effect.preempted = self.in_service.take().map(|old| old.seq);
                effect.dropped.extend(self.waiting.drain(..).map(|old| old.seq));
                effect.started = Some(p.seq);
                self.in_service = Some(p);
            }
            Discipline::PurgeReplace => {
                effect.dropped.extend(self.waiting.drain(..).map(|old| old.seq));
                self.waiting.push_back(p);
            }
            Discipline::QueueAndReorder => self.waiting.push_back(p),
        }
        self.max_waiting_seen = self.max_waiting_seen.max(self.waiting.len());
        effect
    }

    /// Removes the packet in service and promotes the next waiting one.
    pub fn finish_service(&mut self) -> Option<Packet> {
        let done = self.in_service.take();
        self.in_service = match self.spec.discipline {
            // arrivals are in anchor order, so the back is the freshest
            Discipline::QueueAndReorder => self.waiting.pop_back(),
            _ => self.waiting.pop_front(),
        };
        done
    }

    /// Drops everything still queued, returning it (used at the horizon).
    pub fn drain(&mut self) -> Vec<Packet> {
        let mut out: Vec<Packet> = self.in_service.take().into_iter().collect();
        out.extend(self.waiting.drain(..));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::Instant;

    fn pkt(seq: u64) -> Packet {
        Packet::new(seq, Instant(seq * 10), 100)
    }

    #[test]
    fn purge_replace_keeps_freshest() {
        let mut q = TransmitQueue::new(QueueSpec::new(Discipline::PurgeReplace));
        q.offer(pkt(3));
        q.offer(pkt(4));
        let eff = q.offer(pkt(5));
        assert_eq!(eff.dropped, vec![4]);
        assert_eq!(q.waiting().map(|p| p.seq).collect::<Vec<_>>(), vec![5]);
        assert_eq!(q.in_service().unwrap().seq, 3);
    }

    #[test]
    fn fcfs_full_drops_newest() {
        let mut q = TransmitQueue::new(QueueSpec::new(Discipline::Fcfs).with_capacity(2));
        q.offer(pkt(1));
        q.offer(pkt(2));
        let eff = q.offer(pkt(3));
        assert_eq!(eff.dropped, vec![3]);
        assert_eq!(q.len(), 2);
    }

    #[test]
    fn fcfs_drop_oldest() {
        let mut spec = QueueSpec::new(Discipline::Fcfs).with_capacity(3);
        spec.overflow = Overflow::DropOldest;
        let mut q = TransmitQueue::new(spec);
        for s in 1..=3 {
            q.offer(pkt(s));
        }
        let eff = q.offer(pkt(4));
        assert_eq!(eff.dropped, vec![2]);
        assert_eq!(q.waiting().map(|p| p.seq).collect::<Vec<_>>(), vec![3, 4]);
    }

    #[test]
    fn lcfs_empty_starts_immediately() {
        let mut q = TransmitQueue::new(QueueSpec::new(Discipline::LcfsPreempt));
        let eff = q.offer(pkt(1));
        assert_eq!(eff.started, Some(1));
        assert_eq!(eff.preempted, None);
    }

    #[test]
    fn lcfs_preempts_in_service() {
        let mut q = TransmitQueue::new(QueueSpec::new(Discipline::LcfsPreempt));
        q.offer(pkt(1));
        let eff = q.offer(pkt(2));
        assert_eq!(eff.preempted, Some(1));
        assert_eq!(eff.started, Some(2));
        assert_eq!(q.len(), 1);
    }

    #[test]
    fn reorder_serves_freshest_then_backlog() {
        let mut q = TransmitQueue::new(QueueSpec::new(Discipline::QueueAndReorder));
        for s in 1..=4 {
            assert!(q.offer(pkt(s)).dropped.is_empty());
        }
        let mut order = vec![];
        while let Some(p) = q.finish_service() {
            order.push(p.seq);
        }
        assert_eq!(order, vec![1, 4, 3, 2]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn purge_replace_never_holds_two_waiting(ops in proptest::collection::vec(any::<bool>(), 1..200)) {
                let mut q = TransmitQueue::new(QueueSpec::new(Discipline::PurgeReplace));
                let mut seq = 0;
                for offer in ops {
                    if offer {
                        seq += 1;
                        q.offer(pkt(seq));
                    } else {
                        q.finish_service();
                    }
                    prop_assert!(q.waiting_len() <= 1);
                }
            }

            #[test]
            fn offers_conserve_packets(
                discipline in prop_oneof![
                    Just(Discipline::Fcfs),
                    Just(Discipline::LcfsPreempt),
                    Just(Discipline::PurgeReplace),
                    Just(Discipline::QueueAndReorder),
                ],
                cap in proptest::option::of(1usize..5),
                ops in proptest::collection::vec(any::<bool>(), 1..200),
            ) {
                let mut spec = QueueSpec::new(discipline);
                spec.capacity = cap;
                let mut q = TransmitQueue::new(spec);
                let (mut offered, mut gone, mut served) = (0usize, 0usize, 0usize);
                for offer in ops {
                    if offer {
                        offered += 1;
                        let eff = q.offer(pkt(offered as u64));
                        gone += eff.dropped.len() + usize::from(eff.preempted.is_some());
                    } else if q.finish_service().is_some() {
                        served += 1;
                    }
                }
                prop_assert_eq!(offered, gone + served + q.len());
            }
        }
    }
}
