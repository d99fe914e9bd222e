//! Byte accounting: every frame counted exactly once per send, keyed by
//! direction and protocol phase. MB figures use the 10^6 convention.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Preprocessing,
    Training,
    Testing,
}

pub const PHASES: [Phase; 3] = [Phase::Preprocessing, Phase::Training, Phase::Testing];

impl Phase {
    pub fn index(self) -> usize {
        match self {
            Phase::Preprocessing => 0,
            Phase::Training => 1,
            Phase::Testing => 2,
        }
    }
}

/// Monotone per-channel counters: `sent[phase]` / `received[phase]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ByteMeter {
    pub sent: [u64; 3],
    pub received: [u64; 3],
}

impl ByteMeter {
    pub fn record_sent(&mut self, phase: Phase, bytes: u64) {
        self.sent[phase.index()] += bytes;
    }

    pub fn record_received(&mut self, phase: Phase, bytes: u64) {
        self.received[phase.index()] += bytes;
    }

    pub fn sent_total(&self) -> u64 {
        self.sent.iter().sum()
    }

    pub fn received_total(&self) -> u64 {
        self.received.iter().sum()
    }

    pub fn merge(&mut self, other: &ByteMeter) {
        for i in 0..3 {
            self.sent[i] += other.sent[i];
            self.received[i] += other.received[i];
        }
    }
}

pub fn bytes_to_mb(bytes: u64) -> f64 {
    bytes as f64 / 1e6
}
