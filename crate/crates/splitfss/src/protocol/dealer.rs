//! The trusted dealer: generates every batch's correlated material ahead
//! of the online phase and ships it to the parties (or onto tape files).
//! Generation order is fixed so that the online consumption script, the
//! tape format, and the single-process simulator all agree byte for byte.

use super::material::{BatchBundle, MaterialRecord};
use super::{role_rng, Hyperparams, Variant};
use crate::error::Result;
use crate::fixed::FixedPointConfig;
use crate::mpc;
use crate::nn::{init_models, ModelArchitecture};
use crate::tensor::RingTensor;
use crate::transport::{ByteMeter, Channel, MsgType, Phase};
use rand_chacha::ChaCha12Rng;

/// Initial parameter shares for the private variants: the Φ-initialized
/// model halves split additively, in a fixed record order.
pub fn init_share_bundles(
    variant: Variant,
    hp: &Hyperparams,
    rng: &mut ChaCha12Rng,
) -> (BatchBundle, BatchBundle) {
    let cfg = &hp.fixed;
    let (client_model, server_model) = init_models(&hp.arch, cfg, hp.seed);
    let mut rec0 = Vec::new();
    let mut rec1 = Vec::new();
    let push = |t: &RingTensor, rng: &mut ChaCha12Rng, r0: &mut Vec<_>, r1: &mut Vec<_>| {
        let (s0, s1) = mpc::share(t, cfg, rng);
        r0.push(MaterialRecord::MaskShare(s0));
        r1.push(MaterialRecord::MaskShare(s1));
    };
    if variant == Variant::PrivateLocal {
        push(&client_model.conv1_w, rng, &mut rec0, &mut rec1);
        push(&client_model.conv1_b, rng, &mut rec0, &mut rec1);
        push(&client_model.conv2_w, rng, &mut rec0, &mut rec1);
        push(&client_model.conv2_b, rng, &mut rec0, &mut rec1);
    }
    push(&server_model.fc1_w, rng, &mut rec0, &mut rec1);
    push(&server_model.fc1_b, rng, &mut rec0, &mut rec1);
    push(&server_model.fc2_w, rng, &mut rec0, &mut rec1);
    push(&server_model.fc2_b, rng, &mut rec0, &mut rec1);
    (BatchBundle::new(rec0), BatchBundle::new(rec1))
}

struct BundlePair {
    rec0: Vec<MaterialRecord>,
    rec1: Vec<MaterialRecord>,
}

impl BundlePair {
    fn new() -> Self {
        Self {
            rec0: Vec::new(),
            rec1: Vec::new(),
        }
    }

    fn matrix(
        &mut self,
        sa: &[usize],
        sb: &[usize],
        cfg: &FixedPointConfig,
        rng: &mut ChaCha12Rng,
    ) -> Result<()> {
        let (t0, t1) = mpc::make_matrix_triple(sa, sb, cfg, rng)?;
        self.rec0.push(MaterialRecord::MatrixTriple(t0));
        self.rec1.push(MaterialRecord::MatrixTriple(t1));
        Ok(())
    }

    fn elem(
        &mut self,
        shape: &[usize],
        cfg: &FixedPointConfig,
        rng: &mut ChaCha12Rng,
    ) -> Result<()> {
        let (t0, t1) = mpc::make_elem_triple(shape, cfg, rng)?;
        self.rec0.push(MaterialRecord::ElemTriple(t0));
        self.rec1.push(MaterialRecord::ElemTriple(t1));
        Ok(())
    }

    fn relu(
        &mut self,
        shape: &[usize],
        cfg: &FixedPointConfig,
        rng: &mut ChaCha12Rng,
    ) -> Result<()> {
        let (_alpha, m0, m1) = mpc::make_relu_material(shape, cfg, rng)?;
        self.rec0.push(MaterialRecord::Relu(m0));
        self.rec1.push(MaterialRecord::Relu(m1));
        Ok(())
    }

    fn maxpool(
        &mut self,
        window_shape: &[usize],
        cfg: &FixedPointConfig,
        rng: &mut ChaCha12Rng,
    ) -> Result<()> {
        let (_alphas, m0, m1) = mpc::make_maxpool_material(window_shape, cfg, rng)?;
        self.rec0.push(MaterialRecord::Maxpool(Box::new(m0)));
        self.rec1.push(MaterialRecord::Maxpool(Box::new(m1)));
        Ok(())
    }
}

/// Shapes of the fully-connected tail products for batch size `n`.
fn tail_forward(
    pair: &mut BundlePair,
    arch: &ModelArchitecture,
    n: usize,
    cfg: &FixedPointConfig,
    rng: &mut ChaCha12Rng,
) -> Result<()> {
    let split = arch.split_len();
    pair.matrix(&[n, split], &[split, arch.fc_hidden], cfg, rng)?;
    pair.relu(&[n, arch.fc_hidden], cfg, rng)?;
    pair.matrix(
        &[n, arch.fc_hidden],
        &[arch.fc_hidden, arch.classes],
        cfg,
        rng,
    )?;
    pair.relu(&[n, arch.classes], cfg, rng)?;
    Ok(())
}

fn tail_backward(
    pair: &mut BundlePair,
    arch: &ModelArchitecture,
    n: usize,
    cfg: &FixedPointConfig,
    rng: &mut ChaCha12Rng,
    reveal_loss: bool,
) -> Result<()> {
    let split = arch.split_len();
    let (h, c) = (arch.fc_hidden, arch.classes);
    if reveal_loss {
        pair.elem(&[n, c], cfg, rng)?; // squared-error reveal
    }
    pair.elem(&[n, c], cfg, rng)?; // relu2 backward
    pair.matrix(&[c, n], &[n, h], cfg, rng)?; // fc2 dW
    pair.matrix(&[n, c], &[c, h], cfg, rng)?; // fc2 dx
    pair.elem(&[n, h], cfg, rng)?; // relu1 backward
    pair.matrix(&[h, n], &[n, split], cfg, rng)?; // fc1 dW
    pair.matrix(&[n, h], &[h, split], cfg, rng)?; // fc1 dx
    Ok(())
}

/// Material for one private-vanilla training batch. Returns the client's
/// split mask and the two server bundles.
pub fn vanilla_train_bundle(
    hp: &Hyperparams,
    n: usize,
    rng: &mut ChaCha12Rng,
) -> Result<(RingTensor, BatchBundle, BatchBundle)> {
    let cfg = &hp.fixed;
    let arch = &hp.arch;
    let split = arch.split_len();
    let alpha = RingTensor::random(&[n, split], cfg, rng);
    let (a0, a1) = mpc::share(&alpha, cfg, rng);
    let mut pair = BundlePair::new();
    pair.rec0.push(MaterialRecord::MaskShare(a0));
    pair.rec1.push(MaterialRecord::MaskShare(a1));
    tail_forward(&mut pair, arch, n, cfg, rng)?;
    tail_backward(&mut pair, arch, n, cfg, rng, hp.reveal_loss)?;
    Ok((
        alpha,
        BatchBundle::new(pair.rec0),
        BatchBundle::new(pair.rec1),
    ))
}

/// Forward-only material for one private-vanilla test batch.
pub fn vanilla_test_bundle(
    hp: &Hyperparams,
    n: usize,
    rng: &mut ChaCha12Rng,
) -> Result<(RingTensor, BatchBundle, BatchBundle)> {
    let cfg = &hp.fixed;
    let arch = &hp.arch;
    let split = arch.split_len();
    let alpha = RingTensor::random(&[n, split], cfg, rng);
    let (a0, a1) = mpc::share(&alpha, cfg, rng);
    let mut pair = BundlePair::new();
    pair.rec0.push(MaterialRecord::MaskShare(a0));
    pair.rec1.push(MaterialRecord::MaskShare(a1));
    tail_forward(&mut pair, arch, n, cfg, rng)?;
    Ok((
        alpha,
        BatchBundle::new(pair.rec0),
        BatchBundle::new(pair.rec1),
    ))
}

/// Convolution-as-matmul shapes for the fully-private model.
struct ConvShapes {
    rows1: usize, // n·oh1·ow1
    cols1: usize, // k²
    rows2: usize, // n·oh2·ow2
    cols2: usize, // c1·k²
    pool1_window: [usize; 4],
    relu1: [usize; 4],
    pool2_window: [usize; 4],
    relu2: [usize; 4],
}

fn conv_shapes(arch: &ModelArchitecture, n: usize) -> Result<ConvShapes> {
    let chain = arch.spatial_chain()?;
    let k2 = arch.kernel * arch.kernel;
    Ok(ConvShapes {
        rows1: n * chain[0] * chain[0],
        cols1: k2,
        rows2: n * chain[2] * chain[2],
        cols2: arch.conv1_channels * k2,
        pool1_window: [n, arch.conv1_channels, chain[1], chain[1]],
        relu1: [n, arch.conv1_channels, chain[1], chain[1]],
        pool2_window: [n, arch.conv2_channels, chain[3], chain[3]],
        relu2: [n, arch.conv2_channels, chain[3], chain[3]],
    })
}

/// Material for one fully-private (no-split) training batch: both conv
/// layers as Beaver matmuls, both poolings as comparison tournaments,
/// four ReLU gadgets, and the full backward chain.
pub fn local_train_bundle(
    hp: &Hyperparams,
    n: usize,
    rng: &mut ChaCha12Rng,
) -> Result<(BatchBundle, BatchBundle)> {
    let cfg = &hp.fixed;
    let arch = &hp.arch;
    let s = conv_shapes(arch, n)?;
    let (c1, c2) = (arch.conv1_channels, arch.conv2_channels);
    let mut pair = BundlePair::new();
    // forward
    pair.matrix(&[s.rows1, s.cols1], &[s.cols1, c1], cfg, rng)?; // conv1
    pair.maxpool(&s.pool1_window, cfg, rng)?;
    pair.relu(&s.relu1, cfg, rng)?;
    pair.matrix(&[s.rows2, s.cols2], &[s.cols2, c2], cfg, rng)?; // conv2
    pair.maxpool(&s.pool2_window, cfg, rng)?;
    pair.relu(&s.relu2, cfg, rng)?;
    tail_forward(&mut pair, arch, n, cfg, rng)?;
    // backward
    tail_backward(&mut pair, arch, n, cfg, rng, hp.reveal_loss)?;
    pair.elem(&s.relu2.to_vec(), cfg, rng)?; // relu2 backward
    pair.matrix(&[c2, s.rows2], &[s.rows2, s.cols2], cfg, rng)?; // conv2 dW
    pair.matrix(&[s.rows2, c2], &[c2, s.cols2], cfg, rng)?; // conv2 dx
    pair.elem(&s.relu1.to_vec(), cfg, rng)?; // relu1 backward
    pair.matrix(&[c1, s.rows1], &[s.rows1, s.cols1], cfg, rng)?; // conv1 dW
    Ok((BatchBundle::new(pair.rec0), BatchBundle::new(pair.rec1)))
}

/// Forward-only material for one fully-private test batch.
pub fn local_test_bundle(
    hp: &Hyperparams,
    n: usize,
    rng: &mut ChaCha12Rng,
) -> Result<(BatchBundle, BatchBundle)> {
    let cfg = &hp.fixed;
    let arch = &hp.arch;
    let s = conv_shapes(arch, n)?;
    let (c1, c2) = (arch.conv1_channels, arch.conv2_channels);
    let mut pair = BundlePair::new();
    pair.matrix(&[s.rows1, s.cols1], &[s.cols1, c1], cfg, rng)?;
    pair.maxpool(&s.pool1_window, cfg, rng)?;
    pair.relu(&s.relu1, cfg, rng)?;
    pair.matrix(&[s.rows2, s.cols2], &[s.cols2, c2], cfg, rng)?;
    pair.maxpool(&s.pool2_window, cfg, rng)?;
    pair.relu(&s.relu2, cfg, rng)?;
    tail_forward(&mut pair, arch, n, cfg, rng)?;
    Ok((BatchBundle::new(pair.rec0), BatchBundle::new(pair.rec1)))
}

/// Per-run counts the client announces after sync: the dealer and the
/// servers pace themselves off this script.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunScript {
    pub train_batches: usize,
    pub test_batches: usize,
    pub batch_size: usize,
}

impl RunScript {
    pub fn to_bytes(self) -> [u8; 24] {
        let mut out = [0u8; 24];
        out[..8].copy_from_slice(&(self.train_batches as u64).to_le_bytes());
        out[8..16].copy_from_slice(&(self.test_batches as u64).to_le_bytes());
        out[16..].copy_from_slice(&(self.batch_size as u64).to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != 24 {
            return Err(crate::error::Error::Protocol("malformed run script".into()));
        }
        Ok(Self {
            train_batches: u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize,
            test_batches: u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize,
            batch_size: u64::from_le_bytes(bytes[16..].try_into().unwrap()) as usize,
        })
    }
}

pub struct DealerChannels {
    pub client: Box<dyn Channel>,
    pub server0: Box<dyn Channel>,
    pub server1: Box<dyn Channel>,
}

/// The dealer role: sync, initial parameter shares, then one bundle per
/// train batch per epoch (preprocessing phase) and one per test batch
/// (testing phase).
pub fn run_dealer(
    variant: Variant,
    hp: &Hyperparams,
    mut chans: DealerChannels,
) -> Result<DealerOutcome> {
    assert!(variant.is_private(), "public variants have no dealer");
    super::sync_respond(chans.client.as_mut(), hp)?;
    let script = RunScript::from_bytes(&chans.client.recv_expect(MsgType::Sync)?)?;
    let session = chans.client.session_id();
    chans.server0.bind_session(session);
    chans.server1.bind_session(session);

    chans.client.set_phase(Phase::Preprocessing);
    chans.server0.set_phase(Phase::Preprocessing);
    chans.server1.set_phase(Phase::Preprocessing);

    let mut rng = role_rng(hp.seed, "dealer");
    let (init0, init1) = init_share_bundles(variant, hp, &mut rng);
    chans.server0.send(MsgType::KeyBlob, &init0.to_bytes())?;
    chans.server1.send(MsgType::KeyBlob, &init1.to_bytes())?;

    let n = script.batch_size;
    let mut preprocessing_train_bytes = 0u64;
    for _epoch in 0..hp.epochs {
        for _b in 0..script.train_batches {
            let before = chans.server0.meter().sent[Phase::Preprocessing.index()]
                + chans.server1.meter().sent[Phase::Preprocessing.index()]
                + chans.client.meter().sent[Phase::Preprocessing.index()];
            match variant {
                Variant::PrivateVanilla => {
                    let (alpha, b0, b1) = vanilla_train_bundle(hp, n, &mut rng)?;
                    let mask = BatchBundle::new(vec![MaterialRecord::Mask(alpha)]);
                    chans.client.send(MsgType::TripleBlob, &mask.to_bytes())?;
                    chans.server0.send(MsgType::KeyBlob, &b0.to_bytes())?;
                    chans.server1.send(MsgType::KeyBlob, &b1.to_bytes())?;
                }
                Variant::PrivateLocal => {
                    let (b0, b1) = local_train_bundle(hp, n, &mut rng)?;
                    chans.server0.send(MsgType::KeyBlob, &b0.to_bytes())?;
                    chans.server1.send(MsgType::KeyBlob, &b1.to_bytes())?;
                }
                _ => unreachable!(),
            }
            let after = chans.server0.meter().sent[Phase::Preprocessing.index()]
                + chans.server1.meter().sent[Phase::Preprocessing.index()]
                + chans.client.meter().sent[Phase::Preprocessing.index()];
            preprocessing_train_bytes += after - before;
        }
        // test material is part of the testing cost
        chans.client.set_phase(Phase::Testing);
        chans.server0.set_phase(Phase::Testing);
        chans.server1.set_phase(Phase::Testing);
        for _tb in 0..script.test_batches {
            match variant {
                Variant::PrivateVanilla => {
                    let (alpha, b0, b1) = vanilla_test_bundle(hp, n, &mut rng)?;
                    let mask = BatchBundle::new(vec![MaterialRecord::Mask(alpha)]);
                    chans.client.send(MsgType::TripleBlob, &mask.to_bytes())?;
                    chans.server0.send(MsgType::KeyBlob, &b0.to_bytes())?;
                    chans.server1.send(MsgType::KeyBlob, &b1.to_bytes())?;
                }
                Variant::PrivateLocal => {
                    let (b0, b1) = local_test_bundle(hp, n, &mut rng)?;
                    chans.server0.send(MsgType::KeyBlob, &b0.to_bytes())?;
                    chans.server1.send(MsgType::KeyBlob, &b1.to_bytes())?;
                }
                _ => unreachable!(),
            }
        }
        chans.client.set_phase(Phase::Preprocessing);
        chans.server0.set_phase(Phase::Preprocessing);
        chans.server1.set_phase(Phase::Preprocessing);
    }
    let mut meter = ByteMeter::default();
    meter.merge(&chans.client.meter());
    meter.merge(&chans.server0.meter());
    meter.merge(&chans.server1.meter());
    let total_train_batches = (hp.epochs * script.train_batches) as u64;
    Ok(DealerOutcome {
        meter,
        preprocessing_bytes_per_batch: preprocessing_train_bytes
            .checked_div(total_train_batches)
            .unwrap_or(0),
    })
}

pub struct DealerOutcome {
    pub meter: ByteMeter,
    pub preprocessing_bytes_per_batch: u64,
}
