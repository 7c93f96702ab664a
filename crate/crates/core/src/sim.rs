// SPDX-License-Identifier: Apache-2.0

//! Deterministic message transport with a logical clock.
//!
//! Messages are delivered in `(deliver_at, send sequence)` order. Delays and
//! drops come from a seeded RNG, so a given seed always produces the same
//! schedule. Offline actors and partitioned links lose messages silently;
//! nothing is ever fabricated or altered in transit.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::wire::Envelope;

pub type ActorId = u32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub from: ActorId,
    pub to: ActorId,
    pub sent_at: u64,
    pub envelope: Envelope,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Pending {
    deliver_at: u64,
    seq: u64,
    from: ActorId,
    to: ActorId,
    sent_at: u64,
    kind: u16,
    payload: Vec<u8>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NetStats {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
}

#[derive(Debug, Clone)]
pub struct SimNetwork {
    now: u64,
    seq: u64,
    rng: ChaCha20Rng,
    queue: BinaryHeap<Reverse<Pending>>,
    mailboxes: BTreeMap<ActorId, VecDeque<Message>>,
    offline: BTreeSet<ActorId>,
    partitions: BTreeSet<(ActorId, ActorId)>,
    max_delay: u64,
    drop_per_mille: u32,
    stats: NetStats,
}

impl SimNetwork {
    pub fn new(seed: u64) -> Self {
        Self {
            now: 0,
            seq: 0,
            rng: ChaCha20Rng::seed_from_u64(seed),
            queue: BinaryHeap::new(),
            mailboxes: BTreeMap::new(),
            offline: BTreeSet::new(),
            partitions: BTreeSet::new(),
            max_delay: 0,
            drop_per_mille: 0,
            stats: NetStats::default(),
        }
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    /// Moves the clock forward without delivering anything.
    pub fn advance(&mut self, ticks: u64) {
        self.now += ticks;
    }

    pub fn stats(&self) -> NetStats {
        self.stats
    }

    /// Each message takes `1 + uniform(0..=max_delay)` ticks.
    pub fn set_max_delay(&mut self, ticks: u64) {
        self.max_delay = ticks;
    }

    /// Probability, in thousandths, that a sent message is lost.
    pub fn set_drop_rate(&mut self, per_mille: u32) {
        self.drop_per_mille = per_mille.min(1000);
    }

    pub fn set_online(&mut self, actor: ActorId, online: bool) {
        if online {
            self.offline.remove(&actor);
        } else {
            self.offline.insert(actor);
            self.mailboxes.remove(&actor);
        }
    }

    pub fn is_online(&self, actor: ActorId) -> bool {
        !self.offline.contains(&actor)
    }

    fn link(a: ActorId, b: ActorId) -> (ActorId, ActorId) {
        (a.min(b), a.max(b))
    }

    pub fn partition(&mut self, a: ActorId, b: ActorId) {
        self.partitions.insert(Self::link(a, b));
    }

    pub fn heal(&mut self, a: ActorId, b: ActorId) {
        self.partitions.remove(&Self::link(a, b));
    }

    pub fn heal_all(&mut self) {
        self.partitions.clear();
    }

    fn reachable(&self, from: ActorId, to: ActorId) -> bool {
        self.is_online(from) && self.is_online(to) && !self.partitions.contains(&Self::link(from, to))
    }

    pub fn send(&mut self, from: ActorId, to: ActorId, envelope: Envelope) {
        self.stats.sent += 1;
        let delay = 1 + if self.max_delay > 0 { self.rng.gen_range(0..=self.max_delay) } else { 0 };
        let lost = self.drop_per_mille > 0 && self.rng.gen_range(0..1000) < self.drop_per_mille;
        if lost || !self.reachable(from, to) {
            self.stats.dropped += 1;
            return;
        }
        self.seq += 1;
        self.queue.push(Reverse(Pending {
            deliver_at: self.now + delay,
            seq: self.seq,
            from,
            to,
            sent_at: self.now,
            kind: envelope.kind,
            payload: envelope.payload,
        }));
    }

    /// Delivers the next message into its mailbox, advancing the clock.
    /// Returns false when nothing is in flight.
    pub fn step(&mut self) -> bool {
        let Some(Reverse(p)) = self.queue.pop() else {
            return false;
        };
        self.now = self.now.max(p.deliver_at);
        if self.reachable(p.from, p.to) {
            self.stats.delivered += 1;
            self.mailboxes.entry(p.to).or_default().push_back(Message {
                from: p.from,
                to: p.to,
                sent_at: p.sent_at,
                envelope: Envelope::new(p.kind, p.payload),
            });
        } else {
            self.stats.dropped += 1;
        }
        true
    }

    pub fn run_until_idle(&mut self) {
        while self.step() {}
    }

    pub fn recv(&mut self, actor: ActorId) -> Option<Message> {
        self.mailboxes.get_mut(&actor)?.pop_front()
    }

    pub fn drain(&mut self, actor: ActorId) -> Vec<Message> {
        self.mailboxes.remove(&actor).map(Vec::from).unwrap_or_default()
    }

    pub fn in_flight(&self) -> usize {
        self.queue.len()
    }
}
