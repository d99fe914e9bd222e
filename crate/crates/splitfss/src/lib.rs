//! Split learning with function secret sharing over a power-of-two ring.
//!
//! A client trains the convolutional front of a small CNN in plaintext,
//! masks the activation map at the split layer, and two non-colluding
//! servers privately run the fully-connected tail: ReLU layers through
//! distributed comparison functions, linear layers through Beaver triples.
//! A trusted dealer ships all correlated material ahead of the online
//! phase, and every byte on every channel is metered per party, direction
//! and phase.
//!
//! Module map:
//! - [`fixed`] / [`tensor`]: fixed-point encoding and wrapping ring tensors
//! - [`nn`]: plaintext CNN layers, backprop and SGD for the client and the
//!   public baselines, plus an independent `f64` reference twin
//! - [`fss`]: PRG expansion, DPF (equality) and DCF (comparison) keys
//! - [`mpc`]: additive sharing, dealer material, Beaver products, the
//!   secure ReLU and max-pool gadgets, local truncation
//! - [`transport`]: length-prefixed framed channels (TCP and loopback)
//!   with byte meters
//! - [`protocol`]: the client / server / dealer state machines and the
//!   four training variants
//! - [`mnist`]: IDX ingestion, batching, one-hot labels
//! - [`metrics`], [`viia`], [`selftest`]: experiment records, the
//!   activation-leakage analysis harness, and the FSS self-test suites

pub mod error;
pub mod fixed;
pub mod fss;
pub mod metrics;
pub mod mnist;
pub mod mpc;
pub mod nn;
pub mod protocol;
pub mod selftest;
pub mod stats;
pub mod tensor;
pub mod transport;
pub mod viia;

pub use error::{Error, Result};
pub use fixed::FixedPointConfig;
pub use tensor::RingTensor;
