//! In-process publish/subscribe broker with MQTT-style topics.
//!
//! Messages are delivered in simulated time driven by a [`ManualClock`].
//! Every publish passes through a [`ChannelTap`], which is where the
//! adversary sits.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::clock::{Clock, ManualClock};
use crate::id::Timestamp;
use crate::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DeliveryMode {
    /// Every message delivered once, in publish order, after a fixed latency.
    Reliable { latency_ms: u64 },
    /// Bernoulli loss plus uniform delay in `[min_delay_ms, max_delay_ms]`.
    Lossy {
        loss: f64,
        min_delay_ms: u64,
        max_delay_ms: u64,
    },
}

impl Default for DeliveryMode {
    fn default() -> Self {
        DeliveryMode::Reliable { latency_ms: 1 }
    }
}

impl DeliveryMode {
    pub fn lossy(loss: f64) -> DeliveryMode {
        DeliveryMode::Lossy {
            loss,
            min_delay_ms: 5,
            max_delay_ms: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    #[error("empty topic")]
    EmptyTopic,
    #[error("invalid topic filter {0:?}")]
    BadFilter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SubscriptionId(pub u32);

/// A message as it crosses the channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Published {
    pub topic: String,
    pub payload: Vec<u8>,
    pub at: Timestamp,
}

/// What the tap wants done with a published message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TapAction {
    Forward,
    Drop,
    Replace(Vec<u8>),
}

pub trait ChannelTap {
    fn on_publish(&mut self, msg: &Published) -> TapAction;

    /// Called for messages that bypass [`ChannelTap::on_publish`].
    fn on_inject(&mut self, _msg: &Published) {}
}

#[derive(Debug, Default, Clone, Copy)]
pub struct PassThrough;

impl ChannelTap for PassThrough {
    fn on_publish(&mut self, _msg: &Published) -> TapAction {
        TapAction::Forward
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery {
    pub subscription: SubscriptionId,
    pub topic: String,
    pub payload: Vec<u8>,
    pub sent_at: Timestamp,
    pub delivered_at: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Receipt {
    /// Copies queued for delivery.
    pub queued: usize,
    /// Copies dropped by the loss model or the tap.
    pub lost: usize,
}

/// Counters are per (message, matching subscriber) pair.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub published: u64,
    pub delivered: u64,
    pub lost: u64,
    /// Publishes that matched no subscriber.
    pub unrouted: u64,
    pub first_publish_at: Option<Timestamp>,
    pub last_delivery_at: Option<Timestamp>,
    pub rtts_ms: Vec<u64>,
}

impl Metrics {
    pub fn pdr(&self) -> f64 {
        if self.published == 0 {
            1.0
        } else {
            self.delivered as f64 / self.published as f64
        }
    }

    /// Delivered messages per simulated minute.
    pub fn throughput_per_min(&self) -> f64 {
        match (self.first_publish_at, self.last_delivery_at) {
            (Some(a), Some(b)) if b > a => self.delivered as f64 * 60_000.0 / (b - a) as f64,
            _ => 0.0,
        }
    }

    pub fn record_rtt(&mut self, ms: u64) {
        self.rtts_ms.push(ms);
    }

    pub fn rtt_summary(&self) -> Option<RttSummary> {
        let min = *self.rtts_ms.iter().min()?;
        let max = *self.rtts_ms.iter().max()?;
        let mean = self.rtts_ms.iter().sum::<u64>() as f64 / self.rtts_ms.len() as f64;
        Some(RttSummary { min, max, mean })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RttSummary {
    pub min: u64,
    pub max: u64,
    pub mean: f64,
}

/// MQTT filter match: `+` is one level, a trailing `#` is any remainder.
pub fn topic_matches(filter: &str, topic: &str) -> bool {
    let mut f = filter.split('/');
    let mut t = topic.split('/');
    loop {
        match (f.next(), t.next()) {
            (Some("#"), _) => return true,
            (Some("+"), Some(_)) => {}
            (Some(a), Some(b)) if a == b => {}
            (None, None) => return true,
            _ => return false,
        }
    }
}

fn valid_filter(filter: &str) -> bool {
    let levels: Vec<&str> = filter.split('/').collect();
    !filter.is_empty()
        && levels.iter().enumerate().all(|(i, l)| match *l {
            "#" => i == levels.len() - 1,
            "+" => true,
            l => !l.contains('+') && !l.contains('#'),
        })
}

#[derive(Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Queued {
    at: Timestamp,
    seq: u64,
}

pub struct Broker<T: ChannelTap = PassThrough> {
    mode: DeliveryMode,
    clock: ManualClock,
    rng: SeededRng,
    tap: T,
    subs: Vec<(SubscriptionId, String)>,
    queue: BinaryHeap<Reverse<Queued>>,
    in_flight: HashMap<u64, Delivery>,
    last_at: HashMap<(SubscriptionId, String), Timestamp>,
    seq: u64,
    metrics: Metrics,
}

impl Broker<PassThrough> {
    pub fn new(mode: DeliveryMode, clock: ManualClock, seed: u64) -> Self {
        Broker::with_tap(mode, clock, seed, PassThrough)
    }
}

impl<T: ChannelTap> Broker<T> {
    pub fn with_tap(mode: DeliveryMode, clock: ManualClock, seed: u64, tap: T) -> Self {
        Broker {
            mode,
            clock,
            rng: SeededRng::seed_from_u64(seed),
            tap,
            subs: Vec::new(),
            queue: BinaryHeap::new(),
            in_flight: HashMap::new(),
            last_at: HashMap::new(),
            seq: 0,
            metrics: Metrics::default(),
        }
    }

    pub fn clock(&self) -> &ManualClock {
        &self.clock
    }

    pub fn mode(&self) -> DeliveryMode {
        self.mode
    }

    pub fn tap(&self) -> &T {
        &self.tap
    }

    pub fn tap_mut(&mut self) -> &mut T {
        &mut self.tap
    }

    pub fn metrics(&self) -> &Metrics {
        &self.metrics
    }

    pub fn metrics_mut(&mut self) -> &mut Metrics {
        &mut self.metrics
    }

    pub fn subscribe(&mut self, filter: &str) -> Result<SubscriptionId, TransportError> {
        if !valid_filter(filter) {
            return Err(TransportError::BadFilter(filter.to_owned()));
        }
        let id = SubscriptionId(self.subs.len() as u32);
        self.subs.push((id, filter.to_owned()));
        Ok(id)
    }

    pub fn publish(&mut self, topic: &str, payload: Vec<u8>) -> Result<Receipt, TransportError> {
        if topic.is_empty() {
            return Err(TransportError::EmptyTopic);
        }
        let msg = Published {
            topic: topic.to_owned(),
            payload,
            at: self.clock.now_ms(),
        };
        match self.tap.on_publish(&msg) {
            TapAction::Forward => Ok(self.enqueue(msg)),
            TapAction::Replace(payload) => Ok(self.enqueue(Published { payload, ..msg })),
            TapAction::Drop => {
                let n = self.matching(&msg.topic).len();
                self.metrics.published += n as u64;
                self.metrics.lost += n as u64;
                Ok(Receipt { queued: 0, lost: n })
            }
        }
    }

    /// Put a message on the wire without passing the tap's filter.
    pub fn inject(&mut self, topic: &str, payload: Vec<u8>) -> Result<Receipt, TransportError> {
        if topic.is_empty() {
            return Err(TransportError::EmptyTopic);
        }
        let msg = Published {
            topic: topic.to_owned(),
            payload,
            at: self.clock.now_ms(),
        };
        self.tap.on_inject(&msg);
        Ok(self.enqueue(msg))
    }

    fn matching(&self, topic: &str) -> Vec<SubscriptionId> {
        self.subs
            .iter()
            .filter(|(_, f)| topic_matches(f, topic))
            .map(|(id, _)| *id)
            .collect()
    }

    fn enqueue(&mut self, msg: Published) -> Receipt {
        let subs = self.matching(&msg.topic);
        if subs.is_empty() {
            self.metrics.unrouted += 1;
        }
        self.metrics.first_publish_at.get_or_insert(msg.at);
        let mut r = Receipt::default();
        for sub in subs {
            self.metrics.published += 1;
            let delay = match self.mode {
                DeliveryMode::Reliable { latency_ms } => Some(latency_ms),
                DeliveryMode::Lossy {
                    loss,
                    min_delay_ms,
                    max_delay_ms,
                } => {
                    if self.rng.gen_bool(loss.clamp(0.0, 1.0)) {
                        None
                    } else {
                        Some(self.rng.gen_range(min_delay_ms..=max_delay_ms.max(min_delay_ms)))
                    }
                }
            };
            let Some(delay) = delay else {
                self.metrics.lost += 1;
                r.lost += 1;
                continue;
            };
            // Never overtake an earlier message on the same topic.
            let key = (sub, msg.topic.clone());
            let at = (msg.at + delay).max(self.last_at.get(&key).copied().unwrap_or(0));
            self.last_at.insert(key, at);
            self.seq += 1;
            self.queue.push(Reverse(Queued { at, seq: self.seq }));
            self.in_flight.insert(
                self.seq,
                Delivery {
                    subscription: sub,
                    topic: msg.topic.clone(),
                    payload: msg.payload.clone(),
                    sent_at: msg.at,
                    delivered_at: at,
                },
            );
            r.queued += 1;
        }
        r
    }

    pub fn in_flight(&self) -> usize {
        self.queue.len()
    }

    pub fn next_delivery_at(&self) -> Option<Timestamp> {
        self.queue.peek().map(|Reverse(q)| q.at)
    }

    /// Deliver the earliest queued message, advancing the clock to its
    /// delivery time.
    pub fn step(&mut self) -> Option<Delivery> {
        let Reverse(q) = self.queue.pop()?;
        let d = self.in_flight.remove(&q.seq).expect("queued message present");
        if self.clock.now_ms() < d.delivered_at {
            self.clock.set(d.delivered_at);
        }
        self.metrics.delivered += 1;
        self.metrics.last_delivery_at = Some(self.clock.now_ms());
        Some(d)
    }
}
