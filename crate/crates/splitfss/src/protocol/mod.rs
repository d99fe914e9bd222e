//! The client / two-server / dealer training state machines for the four
//! variants: public or private computation of the tail, with or without
//! the split.

pub mod client;
pub mod dealer;
pub mod material;
pub mod server;
pub mod train;

pub use material::{BatchBundle, DealerTapeReader, DealerTapeWriter, MaterialRecord};
pub use train::{run_local_sim, LocalRunOptions, RunOutcome};

use crate::error::{Error, Result};
use crate::fixed::FixedPointConfig;
use crate::mpc::share;
use crate::nn::ModelArchitecture;
use crate::tensor::RingTensor;
use crate::transport::{Channel, MsgType};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    PublicLocal,
    PublicVanilla,
    PrivateLocal,
    PrivateVanilla,
}

impl Variant {
    pub fn is_private(self) -> bool {
        matches!(self, Variant::PrivateLocal | Variant::PrivateVanilla)
    }

    pub fn is_split(self) -> bool {
        matches!(self, Variant::PublicVanilla | Variant::PrivateVanilla)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::PublicLocal => "public-local",
            Variant::PublicVanilla => "public-vanilla",
            Variant::PrivateLocal => "private-local",
            Variant::PrivateVanilla => "private-vanilla",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "public-local" => Variant::PublicLocal,
            "public-vanilla" => Variant::PublicVanilla,
            "private-local" => Variant::PrivateLocal,
            "private-vanilla" => Variant::PrivateVanilla,
            other => return Err(Error::Config(format!("unknown variant {other:?}"))),
        })
    }
}

/// Everything the parties must agree on before the first batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub eta: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Desk-scale cap on batches per epoch; `None` runs the full epoch.
    pub max_batches_per_epoch: Option<usize>,
    /// Desk-scale cap on test samples evaluated per epoch.
    pub test_samples: Option<usize>,
    pub seed: u64,
    pub fixed: FixedPointConfig,
    pub arch: ModelArchitecture,
    pub reveal_loss: bool,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            eta: 0.002,
            momentum: 0.9,
            batch_size: 128,
            epochs: 10,
            max_batches_per_epoch: None,
            test_samples: None,
            seed: 1,
            fixed: FixedPointConfig::default(),
            arch: ModelArchitecture::default(),
            reveal_loss: false,
        }
    }
}

impl Hyperparams {
    pub fn eta_enc(&self) -> u64 {
        self.fixed.encode(self.eta).expect("eta in range")
    }

    pub fn momentum_enc(&self) -> u64 {
        self.fixed.encode(self.momentum).expect("momentum in range")
    }

    /// FNV-1a over the canonical JSON encoding; all parties must agree
    /// byte-for-byte.
    pub fn digest(&self) -> u64 {
        let json = serde_json::to_vec(self).expect("hyperparams serialize");
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in json {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h | 1 // session ids must be nonzero
    }

    pub fn batches_for(&self, dataset_count: usize) -> usize {
        let full = dataset_count / self.batch_size;
        match self.max_batches_per_epoch {
            Some(cap) => full.min(cap),
            None => full,
        }
    }
}

/// Initiator side of session setup: propose digest + session id, await
/// the echo.
pub fn sync_initiate(chan: &mut dyn Channel, hp: &Hyperparams) -> Result<u64> {
    let digest = hp.digest();
    let mut payload = [0u8; 16];
    payload[..8].copy_from_slice(&digest.to_le_bytes());
    payload[8..].copy_from_slice(&digest.to_le_bytes());
    chan.send(MsgType::Sync, &payload)?;
    let reply = chan.recv_expect(MsgType::Sync)?;
    let theirs = u64::from_le_bytes(reply[..8].try_into().unwrap());
    if theirs != digest {
        return Err(Error::SyncDigest {
            ours: digest,
            theirs,
        });
    }
    chan.bind_session(digest);
    Ok(digest)
}

/// Responder side: verify the proposed digest against local config.
pub fn sync_respond(chan: &mut dyn Channel, hp: &Hyperparams) -> Result<u64> {
    let digest = hp.digest();
    let proposal = chan.recv_expect(MsgType::Sync)?;
    if proposal.len() != 16 {
        return Err(Error::Protocol("malformed sync payload".into()));
    }
    let theirs = u64::from_le_bytes(proposal[..8].try_into().unwrap());
    if theirs != digest {
        // reply with our digest so the peer can log both sides
        let mut payload = [0u8; 16];
        payload[..8].copy_from_slice(&digest.to_le_bytes());
        payload[8..].copy_from_slice(&digest.to_le_bytes());
        let _ = chan.send(MsgType::Sync, &payload);
        return Err(Error::SyncDigest {
            ours: digest,
            theirs,
        });
    }
    let mut payload = [0u8; 16];
    payload[..8].copy_from_slice(&digest.to_le_bytes());
    payload[8..].copy_from_slice(&digest.to_le_bytes());
    chan.send(MsgType::Sync, &payload)?;
    chan.bind_session(digest);
    Ok(digest)
}

/// dJ/dŷ = 2(ŷ − y)/classes, share-local (plaintext form; the share form
/// replaces exact truncation with local truncation).
pub fn mse_grad(
    yhat: &RingTensor,
    y: &RingTensor,
    classes: usize,
    cfg: &FixedPointConfig,
) -> Result<RingTensor> {
    let scale = cfg.encode(2.0 / classes as f64)?;
    Ok(yhat.sub(y, cfg)?.scale(scale, cfg).trunc(cfg))
}

/// Mean reduction over the batch: g · (1/n), plaintext truncation.
/// Applied to the accumulated parameter gradients right before the
/// update — deferring it keeps the backward intermediates well above
/// the fixed-point quantum.
pub fn scale_mean(g: &RingTensor, n: usize, cfg: &FixedPointConfig) -> Result<RingTensor> {
    let scale = cfg.encode(1.0 / n as f64)?;
    Ok(g.scale(scale, cfg).trunc(cfg))
}

/// Share-local form of [`scale_mean`].
pub fn scale_mean_share(
    party: u8,
    g: &RingTensor,
    n: usize,
    cfg: &FixedPointConfig,
) -> Result<RingTensor> {
    use crate::mpc::truncate_local;
    let scale = cfg.encode(1.0 / n as f64)?;
    Ok(truncate_local(party, &g.scale(scale, cfg), cfg))
}

/// Revealed MSE loss value for logging: mean over batch and classes of
/// the squared error.
pub fn mse_loss(yhat: &RingTensor, y: &RingTensor, cfg: &FixedPointConfig) -> f64 {
    let n = yhat.len() as f64;
    yhat.decode(cfg)
        .iter()
        .zip(y.decode(cfg).iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n
}

/// Split one-hot labels into two additive shares for the servers.
pub fn share_labels<R: Rng>(
    y: &RingTensor,
    cfg: &FixedPointConfig,
    rng: &mut R,
) -> (RingTensor, RingTensor) {
    share(y, cfg, rng)
}

/// SGD with momentum on one share: public constants, local truncation.
pub fn sgd_momentum_step_share(
    party: u8,
    param: &mut RingTensor,
    grad: &RingTensor,
    velocity: &mut RingTensor,
    eta: u64,
    momentum: u64,
    cfg: &FixedPointConfig,
) {
    use crate::mpc::truncate_local;
    let v = truncate_local(party, &velocity.scale(momentum, cfg), cfg)
        .add(grad, cfg)
        .expect("sgd shapes");
    let step = truncate_local(party, &v.scale(eta, cfg), cfg);
    *param = param.sub(&step, cfg).expect("sgd shapes");
    *velocity = v;
}

/// Batch-mean every client-half parameter gradient.
pub fn scale_client_grads(
    g: &crate::nn::ClientGrads,
    n: usize,
    cfg: &FixedPointConfig,
) -> Result<crate::nn::ClientGrads> {
    Ok(crate::nn::ClientGrads {
        conv1_w: scale_mean(&g.conv1_w, n, cfg)?,
        conv1_b: scale_mean(&g.conv1_b, n, cfg)?,
        conv2_w: scale_mean(&g.conv2_w, n, cfg)?,
        conv2_b: scale_mean(&g.conv2_b, n, cfg)?,
    })
}

/// Batch-mean every server-half parameter gradient.
pub fn scale_server_grads(
    g: &crate::nn::ServerGrads,
    n: usize,
    cfg: &FixedPointConfig,
) -> Result<crate::nn::ServerGrads> {
    Ok(crate::nn::ServerGrads {
        fc1_w: scale_mean(&g.fc1_w, n, cfg)?,
        fc1_b: scale_mean(&g.fc1_b, n, cfg)?,
        fc2_w: scale_mean(&g.fc2_w, n, cfg)?,
        fc2_b: scale_mean(&g.fc2_b, n, cfg)?,
    })
}

/// Deterministic per-role RNG streams derived from the session seed.
pub fn role_rng(seed: u64, role: &str) -> rand_chacha::ChaCha12Rng {
    use rand::SeedableRng;
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in role.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    rand_chacha::ChaCha12Rng::seed_from_u64(seed ^ h)
}
