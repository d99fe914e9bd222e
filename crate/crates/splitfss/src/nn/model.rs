//! The fixed two-conv / two-FC stack, its split into client and server
//! halves, seeded initialization, and SGD with momentum.

use super::layers;
use crate::error::{Error, Result};
use crate::fixed::FixedPointConfig;
use crate::tensor::RingTensor;
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    Conv2d,
    Maxpool2,
    Relu,
    Fc,
}

/// The network: conv → pool → relu → conv → pool → relu ‖ fc → relu →
/// fc → relu, split after the sixth layer. Channel and unit counts are
/// configurable; the layer sequence is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelArchitecture {
    pub input_hw: usize,
    pub conv1_channels: usize,
    pub conv2_channels: usize,
    pub kernel: usize,
    pub fc_hidden: usize,
    pub classes: usize,
    pub split_index: usize,
}

impl Default for ModelArchitecture {
    fn default() -> Self {
        Self {
            input_hw: 28,
            conv1_channels: 16,
            conv2_channels: 16,
            kernel: 5,
            fc_hidden: 100,
            classes: 10,
            split_index: 6,
        }
    }
}

impl ModelArchitecture {
    pub fn layers(&self) -> [LayerKind; 10] {
        use LayerKind::*;
        [
            Conv2d, Maxpool2, Relu, Conv2d, Maxpool2, Relu, Fc, Relu, Fc, Relu,
        ]
    }

    /// Spatial sizes after conv1, pool1, conv2, pool2.
    pub fn spatial_chain(&self) -> Result<[usize; 4]> {
        let a = self
            .input_hw
            .checked_sub(self.kernel - 1)
            .ok_or_else(|| Error::Config("kernel larger than input".into()))?;
        if a % 2 != 0 {
            return Err(Error::Config(format!("conv1 output {a} is odd")));
        }
        let b = a / 2;
        let c = b
            .checked_sub(self.kernel - 1)
            .ok_or_else(|| Error::Config("kernel larger than pooled map".into()))?;
        if c % 2 != 0 {
            return Err(Error::Config(format!("conv2 output {c} is odd")));
        }
        Ok([a, b, c, c / 2])
    }

    /// Length of the flattened activation map at the split.
    pub fn split_len(&self) -> usize {
        let chain = self.spatial_chain().expect("valid architecture");
        self.conv2_channels * chain[3] * chain[3]
    }

    pub fn validate(&self) -> Result<()> {
        if self.split_index != 6 {
            return Err(Error::Config(
                "the split sits after the client's second ReLU (index 6)".into(),
            ));
        }
        self.spatial_chain()?;
        Ok(())
    }
}

/// v ← p·v + grad; param ← param − η·v, all fixed point.
pub fn sgd_momentum_step(
    param: &mut RingTensor,
    grad: &RingTensor,
    velocity: &mut RingTensor,
    eta: u64,
    momentum: u64,
    cfg: &FixedPointConfig,
) {
    let v = velocity
        .scale(momentum, cfg)
        .trunc(cfg)
        .add(grad, cfg)
        .expect("sgd shapes");
    let step = v.scale(eta, cfg).trunc(cfg);
    *param = param.sub(&step, cfg).expect("sgd shapes");
    *velocity = v;
}

fn init_uniform<R: Rng>(
    shape: &[usize],
    fan_in: usize,
    cfg: &FixedPointConfig,
    rng: &mut R,
) -> RingTensor {
    let bound = (1.0 / fan_in as f64).sqrt();
    let len: usize = shape.iter().product();
    let vals: Vec<f64> = (0..len)
        .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * bound)
        .collect();
    RingTensor::from_f64s(shape, &vals, cfg).expect("init in range")
}

// ---------------------------------------------------------------------
// client half

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientModel {
    pub arch: ModelArchitecture,
    pub conv1_w: RingTensor,
    pub conv1_b: RingTensor,
    pub conv2_w: RingTensor,
    pub conv2_b: RingTensor,
    vel_c1w: RingTensor,
    vel_c1b: RingTensor,
    vel_c2w: RingTensor,
    vel_c2b: RingTensor,
}

/// Forward state kept for the batch in flight.
pub struct ClientCache {
    input: RingTensor,
    idx1: Vec<u8>,
    pool1_shape: Vec<usize>,
    relu1_bits: RingTensor,
    a1: RingTensor,
    conv2_shape: Vec<usize>,
    idx2: Vec<u8>,
    relu2_bits: RingTensor,
}

pub struct ClientGrads {
    pub conv1_w: RingTensor,
    pub conv1_b: RingTensor,
    pub conv2_w: RingTensor,
    pub conv2_b: RingTensor,
}

impl ClientModel {
    pub fn init<R: Rng>(arch: &ModelArchitecture, cfg: &FixedPointConfig, rng: &mut R) -> Self {
        let k = arch.kernel;
        let fan1 = k * k;
        let fan2 = arch.conv1_channels * k * k;
        let conv1_w = init_uniform(&[arch.conv1_channels, 1, k, k], fan1, cfg, rng);
        let conv1_b = init_uniform(&[arch.conv1_channels], fan1, cfg, rng);
        let conv2_w = init_uniform(
            &[arch.conv2_channels, arch.conv1_channels, k, k],
            fan2,
            cfg,
            rng,
        );
        let conv2_b = init_uniform(&[arch.conv2_channels], fan2, cfg, rng);
        Self {
            arch: *arch,
            vel_c1w: RingTensor::zeros(conv1_w.shape()),
            vel_c1b: RingTensor::zeros(conv1_b.shape()),
            vel_c2w: RingTensor::zeros(conv2_w.shape()),
            vel_c2b: RingTensor::zeros(conv2_b.shape()),
            conv1_w,
            conv1_b,
            conv2_w,
            conv2_b,
        }
    }

    /// conv1 → pool → relu → conv2 → pool → relu, flattened to \[N, split\].
    pub fn forward(
        &self,
        x: &RingTensor,
        cfg: &FixedPointConfig,
    ) -> Result<(RingTensor, ClientCache)> {
        let n = x.shape()[0];
        let z1 = layers::conv2d_batch(x, &self.conv1_w, &self.conv1_b, cfg)?;
        let (p1, idx1) = layers::maxpool2_batch(&z1, cfg)?;
        let (a1, relu1_bits) = layers::relu(&p1, cfg);
        let z2 = layers::conv2d_batch(&a1, &self.conv2_w, &self.conv2_b, cfg)?;
        let (p2, idx2) = layers::maxpool2_batch(&z2, cfg)?;
        let (a2, relu2_bits) = layers::relu(&p2, cfg);
        let flat = a2.clone().reshape(&[n, self.arch.split_len()])?;
        Ok((
            flat,
            ClientCache {
                input: x.clone(),
                idx1,
                pool1_shape: p1.shape().to_vec(),
                relu1_bits,
                a1,
                conv2_shape: z2.shape().to_vec(),
                idx2,
                relu2_bits,
            },
        ))
    }

    pub fn forward_no_cache(&self, x: &RingTensor, cfg: &FixedPointConfig) -> Result<RingTensor> {
        Ok(self.forward(x, cfg)?.0)
    }

    /// Hand-derived backward through the client stack; `upstream` is
    /// dJ/d(split activation), shape \[N, split\].
    pub fn backward(
        &self,
        cache: &ClientCache,
        upstream: &RingTensor,
        cfg: &FixedPointConfig,
    ) -> Result<ClientGrads> {
        let n = upstream.shape()[0];
        let chain = self.arch.spatial_chain()?;
        let g = upstream
            .clone()
            .reshape(&[n, self.arch.conv2_channels, chain[3], chain[3]])?;
        // relu2 mask, pool2 unroute, conv2 grads
        let g = g.hadamard(&cache.relu2_bits, cfg)?;
        let g = layers::maxpool2_backward(&g, &cache.idx2, &cache.conv2_shape)?;
        let (dk2, db2, da1) =
            layers::conv2d_backward_batch(&cache.a1, &self.conv2_w, &g, true, cfg)?;
        // relu1 mask, pool1 unroute, conv1 grads
        let g = da1.unwrap().hadamard(&cache.relu1_bits, cfg)?;
        let pre_pool1 = [n, self.arch.conv1_channels, chain[0], chain[0]];
        let g = layers::maxpool2_backward(&g, &cache.idx1, &pre_pool1)?;
        debug_assert_eq!(cache.pool1_shape[2] * 2, pre_pool1[2]);
        let (dk1, db1, _) =
            layers::conv2d_backward_batch(&cache.input, &self.conv1_w, &g, false, cfg)?;
        Ok(ClientGrads {
            conv1_w: dk1,
            conv1_b: db1,
            conv2_w: dk2,
            conv2_b: db2,
        })
    }

    pub fn apply_grads(
        &mut self,
        grads: &ClientGrads,
        eta: u64,
        momentum: u64,
        cfg: &FixedPointConfig,
    ) {
        sgd_momentum_step(
            &mut self.conv1_w,
            &grads.conv1_w,
            &mut self.vel_c1w,
            eta,
            momentum,
            cfg,
        );
        sgd_momentum_step(
            &mut self.conv1_b,
            &grads.conv1_b,
            &mut self.vel_c1b,
            eta,
            momentum,
            cfg,
        );
        sgd_momentum_step(
            &mut self.conv2_w,
            &grads.conv2_w,
            &mut self.vel_c2w,
            eta,
            momentum,
            cfg,
        );
        sgd_momentum_step(
            &mut self.conv2_b,
            &grads.conv2_b,
            &mut self.vel_c2b,
            eta,
            momentum,
            cfg,
        );
    }
}

// ---------------------------------------------------------------------
// server half

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServerModel {
    pub arch: ModelArchitecture,
    pub fc1_w: RingTensor,
    pub fc1_b: RingTensor,
    pub fc2_w: RingTensor,
    pub fc2_b: RingTensor,
    vel_f1w: RingTensor,
    vel_f1b: RingTensor,
    vel_f2w: RingTensor,
    vel_f2b: RingTensor,
}

pub struct ServerCache {
    x: RingTensor,
    relu1_bits: RingTensor,
    a1: RingTensor,
    relu2_bits: RingTensor,
}

pub struct ServerGrads {
    pub fc1_w: RingTensor,
    pub fc1_b: RingTensor,
    pub fc2_w: RingTensor,
    pub fc2_b: RingTensor,
}

impl ServerModel {
    /// Assemble a model from raw parameters (e.g. reconstructed shares);
    /// momentum buffers start at zero.
    pub fn from_params(
        arch: &ModelArchitecture,
        fc1_w: RingTensor,
        fc1_b: RingTensor,
        fc2_w: RingTensor,
        fc2_b: RingTensor,
    ) -> Self {
        Self {
            arch: *arch,
            vel_f1w: RingTensor::zeros(fc1_w.shape()),
            vel_f1b: RingTensor::zeros(fc1_b.shape()),
            vel_f2w: RingTensor::zeros(fc2_w.shape()),
            vel_f2b: RingTensor::zeros(fc2_b.shape()),
            fc1_w,
            fc1_b,
            fc2_w,
            fc2_b,
        }
    }

    pub fn init<R: Rng>(arch: &ModelArchitecture, cfg: &FixedPointConfig, rng: &mut R) -> Self {
        let n_in = arch.split_len();
        let fc1_w = init_uniform(&[arch.fc_hidden, n_in], n_in, cfg, rng);
        let fc1_b = init_uniform(&[arch.fc_hidden], n_in, cfg, rng);
        let fc2_w = init_uniform(&[arch.classes, arch.fc_hidden], arch.fc_hidden, cfg, rng);
        let fc2_b = init_uniform(&[arch.classes], arch.fc_hidden, cfg, rng);
        Self {
            arch: *arch,
            vel_f1w: RingTensor::zeros(fc1_w.shape()),
            vel_f1b: RingTensor::zeros(fc1_b.shape()),
            vel_f2w: RingTensor::zeros(fc2_w.shape()),
            vel_f2b: RingTensor::zeros(fc2_b.shape()),
            fc1_w,
            fc1_b,
            fc2_w,
            fc2_b,
        }
    }

    /// fc1 → relu → fc2 → relu on a \[N, split\] batch.
    pub fn forward(
        &self,
        x: &RingTensor,
        cfg: &FixedPointConfig,
    ) -> Result<(RingTensor, ServerCache)> {
        let z1 = layers::fc_batch(x, &self.fc1_w, &self.fc1_b, cfg)?;
        let (a1, relu1_bits) = layers::relu(&z1, cfg);
        let z2 = layers::fc_batch(&a1, &self.fc2_w, &self.fc2_b, cfg)?;
        let (yhat, relu2_bits) = layers::relu(&z2, cfg);
        Ok((
            yhat,
            ServerCache {
                x: x.clone(),
                relu1_bits,
                a1,
                relu2_bits,
            },
        ))
    }

    pub fn forward_no_cache(&self, x: &RingTensor, cfg: &FixedPointConfig) -> Result<RingTensor> {
        Ok(self.forward(x, cfg)?.0)
    }

    /// Backward from dJ/dŷ; returns parameter grads and dJ/dx for the
    /// client.
    pub fn backward(
        &self,
        cache: &ServerCache,
        loss_grad: &RingTensor,
        cfg: &FixedPointConfig,
    ) -> Result<(ServerGrads, RingTensor)> {
        let g2 = loss_grad.hadamard(&cache.relu2_bits, cfg)?;
        let dw2 = g2.transpose()?.matmul(&cache.a1, cfg)?.trunc(cfg);
        let db2 = column_sum(&g2, cfg)?;
        let da1 = g2.matmul(&self.fc2_w, cfg)?.trunc(cfg);
        let g1 = da1.hadamard(&cache.relu1_bits, cfg)?;
        let dw1 = g1.transpose()?.matmul(&cache.x, cfg)?.trunc(cfg);
        let db1 = column_sum(&g1, cfg)?;
        let dx = g1.matmul(&self.fc1_w, cfg)?.trunc(cfg);
        Ok((
            ServerGrads {
                fc1_w: dw1,
                fc1_b: db1,
                fc2_w: dw2,
                fc2_b: db2,
            },
            dx,
        ))
    }

    pub fn apply_grads(
        &mut self,
        grads: &ServerGrads,
        eta: u64,
        momentum: u64,
        cfg: &FixedPointConfig,
    ) {
        sgd_momentum_step(
            &mut self.fc1_w,
            &grads.fc1_w,
            &mut self.vel_f1w,
            eta,
            momentum,
            cfg,
        );
        sgd_momentum_step(
            &mut self.fc1_b,
            &grads.fc1_b,
            &mut self.vel_f1b,
            eta,
            momentum,
            cfg,
        );
        sgd_momentum_step(
            &mut self.fc2_w,
            &grads.fc2_w,
            &mut self.vel_f2w,
            eta,
            momentum,
            cfg,
        );
        sgd_momentum_step(
            &mut self.fc2_b,
            &grads.fc2_b,
            &mut self.vel_f2b,
            eta,
            momentum,
            cfg,
        );
    }
}

/// Column sums of a \[N, d\] tensor → \[d\].
pub fn column_sum(t: &RingTensor, cfg: &FixedPointConfig) -> Result<RingTensor> {
    let s = t.shape();
    if s.len() != 2 {
        return Err(Error::Shape(format!("column_sum: {s:?}")));
    }
    let (n, d) = (s[0], s[1]);
    let mut out = vec![0u64; d];
    for i in 0..n {
        for j in 0..d {
            out[j] = out[j].wrapping_add(t.data()[i * d + j]);
        }
    }
    RingTensor::from_vec(&[d], out.into_iter().map(|v| cfg.wrap(v)).collect())
}

/// Deterministic Φ initialization of both halves from one seed.
pub fn init_models(
    arch: &ModelArchitecture,
    cfg: &FixedPointConfig,
    seed: u64,
) -> (ClientModel, ServerModel) {
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x5eed_1017);
    let client = ClientModel::init(arch, cfg, &mut rng);
    let server = ServerModel::init(arch, cfg, &mut rng);
    (client, server)
}

/// Class predictions: argmax over each row of \[N, classes\].
pub fn argmax_rows(yhat: &RingTensor, cfg: &FixedPointConfig) -> Vec<usize> {
    let s = yhat.shape();
    let (n, d) = (s[0], s[1]);
    (0..n)
        .map(|i| {
            let row = &yhat.data()[i * d..(i + 1) * d];
            let mut best = 0usize;
            for j in 1..d {
                if cfg.to_signed(row[j]) > cfg.to_signed(row[best]) {
                    best = j;
                }
            }
            best
        })
        .collect()
}
