//! Seeded in-memory transport with latency, jitter and loss.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelConfig {
    pub base_latency_ms: f64,
    /// Half-width of the uniform jitter added to the latency.
    pub jitter_ms: f64,
    pub loss_prob: f64,
    pub seed: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            base_latency_ms: 50.0,
            jitter_ms: 20.0,
            loss_prob: 0.0,
            seed: 0,
        }
    }
}

impl ChannelConfig {
    pub fn ideal() -> Self {
        Self {
            base_latency_ms: 0.0,
            jitter_ms: 0.0,
            loss_prob: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.base_latency_ms >= 0.0 && self.base_latency_ms.is_finite()) {
            return Err("base_latency_ms must be >= 0".into());
        }
        if !(self.jitter_ms >= 0.0 && self.jitter_ms.is_finite()) {
            return Err("jitter_ms must be >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.loss_prob) {
            return Err("loss_prob must lie in [0, 1]".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ChannelStats {
    pub sent: u64,
    pub dropped: u64,
    pub delivered: u64,
}

impl ChannelStats {
    pub fn in_flight(&self) -> u64 {
        self.sent - self.dropped - self.delivered
    }
}

#[derive(Debug)]
struct InFlight<T> {
    deliver_at_ms: f64,
    seq: u64,
    msg: T,
}

impl<T> PartialEq for InFlight<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<T> Eq for InFlight<T> {}
impl<T> PartialOrd for InFlight<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T> Ord for InFlight<T> {
    // reversed so the max-heap pops the earliest delivery first
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .deliver_at_ms
            .total_cmp(&self.deliver_at_ms)
            .then(other.seq.cmp(&self.seq))
    }
}

#[derive(Debug)]
pub struct SimChannel<T> {
    cfg: ChannelConfig,
    rng: ChaCha8Rng,
    queue: BinaryHeap<InFlight<T>>,
    seq: u64,
    stats: ChannelStats,
}

impl<T> SimChannel<T> {
    pub fn new(cfg: ChannelConfig) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Self {
            cfg,
            rng,
            queue: BinaryHeap::new(),
            seq: 0,
            stats: ChannelStats::default(),
        }
    }

    pub fn stats(&self) -> ChannelStats {
        self.stats
    }

    pub fn is_idle(&self) -> bool {
        self.queue.is_empty()
    }

    /// Earliest pending delivery time, if any.
    pub fn next_delivery_ms(&self) -> Option<f64> {
        self.queue.peek().map(|f| f.deliver_at_ms)
    }

    /// Send at `now_ms`; returns the scheduled delivery time, or `None` if lost.
    pub fn send(&mut self, msg: T, now_ms: f64) -> Option<f64> {
        // both draws happen for every message so the stream stays aligned
        let loss: f64 = self.rng.gen();
        let jitter = if self.cfg.jitter_ms > 0.0 {
            self.rng.gen_range(-self.cfg.jitter_ms..=self.cfg.jitter_ms)
        } else {
            let _: f64 = self.rng.gen();
            0.0
        };
        self.stats.sent += 1;
        if loss < self.cfg.loss_prob {
            self.stats.dropped += 1;
            return None;
        }
        let deliver_at_ms = (now_ms + self.cfg.base_latency_ms + jitter).max(now_ms);
        self.queue.push(InFlight {
            deliver_at_ms,
            seq: self.seq,
            msg,
        });
        self.seq += 1;
        Some(deliver_at_ms)
    }

    /// All messages due by `now_ms`, in delivery order with ties by send order.
    pub fn poll(&mut self, now_ms: f64) -> Vec<(f64, T)> {
        let mut out = Vec::new();
        while self.queue.peek().is_some_and(|f| f.deliver_at_ms <= now_ms) {
            let f = self.queue.pop().unwrap();
            out.push((f.deliver_at_ms, f.msg));
        }
        self.stats.delivered += out.len() as u64;
        out
    }

    /// Everything still in flight, regardless of time.
    pub fn drain(&mut self) -> Vec<(f64, T)> {
        self.poll(f64::INFINITY)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ideal_channel_delivers_now() {
        let mut ch = SimChannel::new(ChannelConfig::ideal());
        assert_eq!(ch.send("a", 12.5), Some(12.5));
        assert_eq!(ch.poll(12.5), vec![(12.5, "a")]);
        assert!(ch.poll(100.0).is_empty());
    }

    #[test]
    fn total_loss() {
        let mut ch = SimChannel::new(ChannelConfig {
            loss_prob: 1.0,
            ..ChannelConfig::ideal()
        });
        for i in 0..50 {
            assert_eq!(ch.send(i, i as f64), None);
        }
        assert!(ch.drain().is_empty());
        assert_eq!(ch.stats().dropped, 50);
    }

    #[test]
    fn poll_orders_by_delivery_time() {
        // latency chosen per message by sending at different times
        let mut ch = SimChannel::new(ChannelConfig {
            base_latency_ms: 0.0,
            ..ChannelConfig::ideal()
        });
        ch.send("late", 5.0);
        ch.send("early", 3.0);
        assert_eq!(ch.poll(4.0), vec![(3.0, "early")]);
        assert_eq!(ch.poll(10.0), vec![(5.0, "late")]);
    }

    #[test]
    fn ties_keep_send_order() {
        let mut ch = SimChannel::new(ChannelConfig::ideal());
        for i in 0..10 {
            ch.send(i, 0.0);
        }
        let got: Vec<i32> = ch.poll(0.0).into_iter().map(|(_, m)| m).collect();
        assert_eq!(got, (0..10).collect::<Vec<_>>());
    }

    fn schedule(seed: u64) -> Vec<Option<f64>> {
        let mut ch = SimChannel::new(ChannelConfig {
            base_latency_ms: 40.0,
            jitter_ms: 30.0,
            loss_prob: 0.2,
            seed,
        });
        (0..100).map(|i| ch.send(i, i as f64 * 10.0)).collect()
    }

    #[test]
    fn same_seed_same_schedule() {
        assert_eq!(schedule(7), schedule(7));
        assert_ne!(schedule(7), schedule(8));
    }

    proptest! {
        #[test]
        fn conservation_and_bounds(
            seed in any::<u64>(),
            latency in 0.0..100.0f64,
            jitter in 0.0..100.0f64,
            loss in 0.0..1.0f64,
            n in 0usize..200,
        ) {
            let mut ch = SimChannel::new(ChannelConfig { base_latency_ms: latency, jitter_ms: jitter, loss_prob: loss, seed });
            let mut got = Vec::new();
            for i in 0..n {
                let now = i as f64 * 7.0;
                if let Some(at) = ch.send(i, now) {
                    prop_assert!(at >= now && at >= now + latency - jitter - 1e-9);
                    prop_assert!(at <= now + latency + jitter + 1e-9);
                }
                got.extend(ch.poll(now).into_iter().map(|(_, m)| m));
            }
            got.extend(ch.drain().into_iter().map(|(_, m)| m));
            let s = ch.stats();
            prop_assert_eq!(s.delivered + s.dropped, s.sent);
            prop_assert_eq!(s.sent, n as u64);
            let mut sorted = got.clone();
            sorted.sort();
            sorted.dedup();
            prop_assert_eq!(sorted.len(), got.len());
        }
    }
}
