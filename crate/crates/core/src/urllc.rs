//! URLLC traffic: Bernoulli arrivals into an unbounded FIFO with a hard
//! per-packet latency budget.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UrllcPacket {
    /// Minislot of arrival. Packets seeded at episode start carry
    /// non-positive synthetic arrival times.
    pub arrival_minislot: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UrllcQueue {
    packets: VecDeque<UrllcPacket>,
    arrival_prob: f64,
    latency_budget: u32,
}

impl UrllcQueue {
    pub fn new(arrival_prob: f64, latency_budget: u32) -> Result<Self> {
        if !(0.0..=1.0).contains(&arrival_prob) {
            return Err(Error::Config(format!("arrival probability {arrival_prob} outside [0,1]")));
        }
        if latency_budget == 0 {
            return Err(Error::Config("latency budget must be at least one minislot".into()));
        }
        Ok(Self {
            packets: VecDeque::new(),
            arrival_prob,
            latency_budget,
        })
    }

    pub fn arrival_prob(&self) -> f64 {
        self.arrival_prob
    }

    pub fn latency_budget(&self) -> u32 {
        self.latency_budget
    }

    pub fn len(&self) -> usize {
        self.packets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }

    pub fn head(&self) -> Option<&UrllcPacket> {
        self.packets.front()
    }

    pub fn iter(&self) -> impl Iterator<Item = &UrllcPacket> {
        self.packets.iter()
    }

    /// Draws the arrival of minislot `t`.
    pub fn maybe_arrive<R: Rng + ?Sized>(&mut self, t: i64, rng: &mut R) -> bool {
        let arrived = rng.gen_bool(self.arrival_prob);
        if arrived {
            self.push(t);
        }
        arrived
    }

    fn push(&mut self, t: i64) {
        debug_assert!(self.packets.back().is_none_or(|p| p.arrival_minislot <= t));
        self.packets.push_back(UrllcPacket {
            arrival_minislot: t,
        });
    }

    /// `Delta_t = l_max - (t - head arrival)`, or `l_max` for an empty queue.
    pub fn head_slack(&self, t: i64) -> i64 {
        match self.packets.front() {
            Some(head) => self.latency_budget as i64 - (t - head.arrival_minislot),
            None => self.latency_budget as i64,
        }
    }

    pub fn pop_head(&mut self) -> Result<UrllcPacket> {
        self.packets
            .pop_front()
            .ok_or_else(|| Error::Usage("pop from an empty URLLC queue".into()))
    }

    /// Seeds `k ~ U{0, .., l_max - 1}` packets with consecutive synthetic
    /// arrivals `-(k-1), .., 0`. Returns `k`.
    pub fn seed_initial<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<usize> {
        let k = rng.gen_range(0..self.latency_budget as usize);
        self.seed_with(k)?;
        Ok(k)
    }

    pub fn seed_with(&mut self, k: usize) -> Result<()> {
        if !self.packets.is_empty() {
            return Err(Error::Usage("initial packets can only be seeded into an empty queue".into()));
        }
        if k >= self.latency_budget as usize {
            return Err(Error::Usage(format!(
                "{k} initial packets would start past the latency budget {}",
                self.latency_budget
            )));
        }
        for i in 0..k {
            self.push(i as i64 + 1 - k as i64);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn arrival_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut never = UrllcQueue::new(0.0, 7).unwrap();
        let mut always = UrllcQueue::new(1.0, 7).unwrap();
        for t in 0..100 {
            assert!(!never.maybe_arrive(t, &mut rng));
            assert!(always.maybe_arrive(t, &mut rng));
        }
        assert!(never.is_empty());
        assert_eq!(always.len(), 100);
    }

    #[test]
    fn arrival_rate_matches_probability() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut q = UrllcQueue::new(0.3, 7).unwrap();
        let n = 100_000;
        let hits = (0..n).filter(|&t| q.maybe_arrive(t, &mut rng)).count();
        let rate = hits as f64 / n as f64;
        assert!((rate - 0.3).abs() < 0.01, "{rate}");
    }

    #[test]
    fn head_slack_cases() {
        let mut q = UrllcQueue::new(0.5, 7).unwrap();
        assert_eq!(q.head_slack(3), 7);
        q.push(10);
        assert_eq!(q.head_slack(10), 7);
        assert_eq!(q.head_slack(18), -1);
        // one minislot of waiting costs one unit of slack
        for t in 10..18 {
            assert_eq!(q.head_slack(t) - q.head_slack(t + 1), 1);
        }
    }

    #[test]
    fn fifo_pop() {
        let mut q = UrllcQueue::new(0.5, 7).unwrap();
        q.push(3);
        q.push(5);
        assert_eq!(q.pop_head().unwrap().arrival_minislot, 3);
        assert_eq!(q.len(), 1);
        assert_eq!(q.pop_head().unwrap().arrival_minislot, 5);
        assert!(q.is_empty());
        assert!(matches!(q.pop_head(), Err(Error::Usage(_))));
    }

    #[test]
    fn seeding_staggers_arrivals() {
        for k in 0..7 {
            let mut q = UrllcQueue::new(0.5, 7).unwrap();
            q.seed_with(k).unwrap();
            assert_eq!(q.len(), k);
            let arrivals: Vec<i64> = q.iter().map(|p| p.arrival_minislot).collect();
            let expected: Vec<i64> = (0..k as i64).map(|i| i + 1 - k as i64).collect();
            assert_eq!(arrivals, expected);
            let slack = q.head_slack(0);
            if k >= 1 {
                assert!(slack >= 2);
            }
            assert_eq!(slack, if k == 0 { 7 } else { 8 - k as i64 });
        }
        let mut q = UrllcQueue::new(0.5, 7).unwrap();
        q.seed_with(6).unwrap();
        assert_eq!(q.head_slack(0), 2);
        assert!(q.seed_with(1).is_err());
        assert!(UrllcQueue::new(0.5, 7).unwrap().seed_with(7).is_err());
    }

    #[test]
    fn seed_initial_stays_below_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut seen = [false; 7];
        for _ in 0..500 {
            let mut q = UrllcQueue::new(0.2, 7).unwrap();
            let k = q.seed_initial(&mut rng).unwrap();
            assert!(k < 7);
            seen[k] = true;
            assert!(q.head_slack(0) > 0);
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(UrllcQueue::new(1.5, 7).is_err());
        assert!(UrllcQueue::new(0.5, 0).is_err());
    }
}
