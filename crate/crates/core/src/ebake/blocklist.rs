use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::BLOCK_THRESHOLD;
use crate::id::Timestamp;

/// Whom a failure is held against.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Peer {
    /// The trusted authority, as seen by a device.
    Ta,
    /// A transport client, as seen by the TA.
    Client(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockState {
    Counting(u8),
    Blocked { until: Timestamp },
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
struct Entry {
    failures: u8,
    blocked_until: Option<Timestamp>,
}

/// Consecutive-failure counters with time-limited blocking.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockList {
    block_ms: u64,
    entries: BTreeMap<Peer, Entry>,
}

impl BlockList {
    pub fn new(block_ms: u64) -> Self {
        BlockList {
            block_ms,
            entries: BTreeMap::new(),
        }
    }

    pub fn check_blocked(&self, peer: &Peer, now: Timestamp) -> bool {
        matches!(
            self.entries.get(peer).and_then(|e| e.blocked_until),
            Some(until) if now < until
        )
    }

    pub fn record_failure(&mut self, peer: &Peer, now: Timestamp) -> BlockState {
        let block_ms = self.block_ms;
        let e = self.entries.entry(peer.clone()).or_default();
        match e.blocked_until {
            Some(until) if now < until => return BlockState::Blocked { until },
            Some(_) => *e = Entry::default(),
            None => {}
        }
        e.failures += 1;
        if e.failures >= BLOCK_THRESHOLD {
            let until = now.saturating_add(block_ms);
            e.failures = BLOCK_THRESHOLD;
            e.blocked_until = Some(until);
            BlockState::Blocked { until }
        } else {
            BlockState::Counting(e.failures)
        }
    }

    pub fn record_success(&mut self, peer: &Peer) {
        self.entries.remove(peer);
    }

    pub fn failures(&self, peer: &Peer, now: Timestamp) -> u8 {
        match self.entries.get(peer) {
            Some(Entry {
                blocked_until: Some(until),
                ..
            }) if now >= *until => 0,
            Some(e) => e.failures,
            None => 0,
        }
    }

    pub fn blocked_until(&self, peer: &Peer) -> Option<Timestamp> {
        self.entries.get(peer).and_then(|e| e.blocked_until)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DAY: u64 = 86_400_000;

    fn peer() -> Peer {
        Peer::Client("dev".into())
    }

    #[test]
    fn two_failures_do_not_block() {
        let mut bl = BlockList::new(DAY);
        assert_eq!(bl.record_failure(&peer(), 0), BlockState::Counting(1));
        assert_eq!(bl.record_failure(&peer(), 1), BlockState::Counting(2));
        assert!(!bl.check_blocked(&peer(), 2));
    }

    #[test]
    fn three_failures_block_for_a_day() {
        let mut bl = BlockList::new(DAY);
        for t in 0..2 {
            bl.record_failure(&peer(), t);
        }
        assert_eq!(bl.record_failure(&peer(), 10), BlockState::Blocked { until: 10 + DAY });
        assert!(bl.check_blocked(&peer(), 10));
        assert!(bl.check_blocked(&peer(), 10 + DAY - 1));
        assert!(!bl.check_blocked(&peer(), 10 + DAY + 1));
        assert_eq!(bl.failures(&peer(), 10 + DAY + 1), 0);
        // Counting restarts from zero after expiry.
        assert_eq!(bl.record_failure(&peer(), 20 + DAY), BlockState::Counting(1));
    }

    #[test]
    fn success_resets_count() {
        let mut bl = BlockList::new(DAY);
        bl.record_failure(&peer(), 0);
        bl.record_success(&peer());
        bl.record_failure(&peer(), 1);
        assert_eq!(bl.record_failure(&peer(), 2), BlockState::Counting(2));
        assert!(!bl.check_blocked(&peer(), 3));
    }

    #[test]
    fn failures_while_blocked_do_not_extend() {
        let mut bl = BlockList::new(DAY);
        for t in 0..3 {
            bl.record_failure(&peer(), t);
        }
        assert_eq!(bl.record_failure(&peer(), 100), BlockState::Blocked { until: 2 + DAY });
    }

    #[test]
    fn peers_are_independent() {
        let mut bl = BlockList::new(DAY);
        for t in 0..3 {
            bl.record_failure(&Peer::Ta, t);
        }
        assert!(bl.check_blocked(&Peer::Ta, 5));
        assert!(!bl.check_blocked(&peer(), 5));
    }
}
