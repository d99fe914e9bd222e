//! Server-side state machines. The public variants run the plaintext
//! model halves; the private variants run the same layer schedule on
//! additive shares, with Beaver products for every linear layer and the
//! comparison-key gadget for every ReLU and pooling max.

use super::material::BatchBundle;
use super::{sgd_momentum_step_share, Hyperparams, Variant};
use crate::error::{Error, Result};
use crate::fixed::FixedPointConfig;
use crate::mpc::{
    beaver_mul, open_masked, secure_maxpool2, secure_maxpool2_backward, secure_relu,
    secure_relu_backward, truncate_local,
};
use crate::nn::layers;
use crate::nn::{ClientModel, ServerModel};
use crate::tensor::RingTensor;
use crate::transport::{tensor_from_bytes, tensor_to_bytes, Channel, MsgType};

fn triple_check(cond: bool, what: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Protocol(format!("server desync: {what}")))
    }
}

// ---------------------------------------------------------------------
// shared secret tail: fc1 → relu → fc2 → relu on shares

/// One party's shares of the fully-connected tail parameters.
pub struct SharedTail {
    pub party: u8,
    pub fc1_w: RingTensor,
    pub fc1_b: RingTensor,
    pub fc2_w: RingTensor,
    pub fc2_b: RingTensor,
    vel_f1w: RingTensor,
    vel_f1b: RingTensor,
    vel_f2w: RingTensor,
    vel_f2b: RingTensor,
}

pub struct TailCache {
    x: RingTensor,
    sign1: RingTensor,
    a1: RingTensor,
    sign2: RingTensor,
    yhat: RingTensor,
}

impl SharedTail {
    pub fn from_bundle(party: u8, bundle: &mut BatchBundle) -> Result<Self> {
        let fc1_w = bundle.next_mask_share()?;
        let fc1_b = bundle.next_mask_share()?;
        let fc2_w = bundle.next_mask_share()?;
        let fc2_b = bundle.next_mask_share()?;
        Ok(Self {
            party,
            vel_f1w: RingTensor::zeros(fc1_w.shape()),
            vel_f1b: RingTensor::zeros(fc1_b.shape()),
            vel_f2w: RingTensor::zeros(fc2_w.shape()),
            vel_f2b: RingTensor::zeros(fc2_b.shape()),
            fc1_w,
            fc1_b,
            fc2_w,
            fc2_b,
        })
    }

    /// Secure forward through the tail; consumes the forward records of
    /// `bundle` and talks to the peer server for openings.
    pub fn forward(
        &self,
        x_sh: &RingTensor,
        bundle: &mut BatchBundle,
        peer: &mut dyn Channel,
        cfg: &FixedPointConfig,
    ) -> Result<TailCache> {
        let party = self.party;
        // fc1
        let mut t1 = bundle.next_matrix_triple()?;
        let w1t = self.fc1_w.transpose()?;
        let mut z1 = truncate_local(party, &beaver_mul(x_sh, &w1t, &mut t1, peer, cfg)?, cfg);
        layers::add_bias_rows(&mut z1, &self.fc1_b, cfg);
        // relu1
        let mut r1 = bundle.next_relu()?;
        let z1_pub = open_masked(party, &z1, &r1.mask_share.clone(), peer, cfg)?;
        let (a1, sign1) = secure_relu(&z1_pub, &mut r1, peer, cfg)?;
        // fc2
        let mut t2 = bundle.next_matrix_triple()?;
        let w2t = self.fc2_w.transpose()?;
        let mut z2 = truncate_local(party, &beaver_mul(&a1, &w2t, &mut t2, peer, cfg)?, cfg);
        layers::add_bias_rows(&mut z2, &self.fc2_b, cfg);
        // relu2
        let mut r2 = bundle.next_relu()?;
        let z2_pub = open_masked(party, &z2, &r2.mask_share.clone(), peer, cfg)?;
        let (yhat, sign2) = secure_relu(&z2_pub, &mut r2, peer, cfg)?;
        Ok(TailCache {
            x: x_sh.clone(),
            sign1,
            a1,
            sign2,
            yhat,
        })
    }

    /// Secure backward from the loss gradient share; updates parameter
    /// shares in place and returns the (batch-summed) gradient share
    /// w.r.t. the tail input. `n` is the batch size for the mean.
    #[allow(clippy::too_many_arguments)]
    pub fn backward_update(
        &mut self,
        cache: &TailCache,
        loss_grad_sh: &RingTensor,
        n: usize,
        bundle: &mut BatchBundle,
        peer: &mut dyn Channel,
        hp: &Hyperparams,
        cfg: &FixedPointConfig,
    ) -> Result<RingTensor> {
        let party = self.party;
        let (eta, p) = (hp.eta_enc(), hp.momentum_enc());
        // relu2 backward
        let mut tb2 = bundle.next_elem_triple()?;
        let g2 = secure_relu_backward(loss_grad_sh, &cache.sign2, &mut tb2, peer, cfg)?;
        // fc2 gradients
        let mut tw2 = bundle.next_matrix_triple()?;
        let dw2 = truncate_local(
            party,
            &beaver_mul(&g2.transpose()?, &cache.a1, &mut tw2, peer, cfg)?,
            cfg,
        );
        let db2 = crate::nn::column_sum(&g2, cfg)?;
        let mut tx2 = bundle.next_matrix_triple()?;
        let da1 = truncate_local(
            party,
            &beaver_mul(&g2, &self.fc2_w, &mut tx2, peer, cfg)?,
            cfg,
        );
        // relu1 backward
        let mut tb1 = bundle.next_elem_triple()?;
        let g1 = secure_relu_backward(&da1, &cache.sign1, &mut tb1, peer, cfg)?;
        // fc1 gradients
        let mut tw1 = bundle.next_matrix_triple()?;
        let dw1 = truncate_local(
            party,
            &beaver_mul(&g1.transpose()?, &cache.x, &mut tw1, peer, cfg)?,
            cfg,
        );
        let db1 = crate::nn::column_sum(&g1, cfg)?;
        let mut tx1 = bundle.next_matrix_triple()?;
        let dx = truncate_local(
            party,
            &beaver_mul(&g1, &self.fc1_w, &mut tx1, peer, cfg)?,
            cfg,
        );
        // batch mean, then share-local parameter updates
        let dw2 = super::scale_mean_share(party, &dw2, n, cfg)?;
        let db2 = super::scale_mean_share(party, &db2, n, cfg)?;
        let dw1 = super::scale_mean_share(party, &dw1, n, cfg)?;
        let db1 = super::scale_mean_share(party, &db1, n, cfg)?;
        sgd_momentum_step_share(party, &mut self.fc2_w, &dw2, &mut self.vel_f2w, eta, p, cfg);
        sgd_momentum_step_share(party, &mut self.fc2_b, &db2, &mut self.vel_f2b, eta, p, cfg);
        sgd_momentum_step_share(party, &mut self.fc1_w, &dw1, &mut self.vel_f1w, eta, p, cfg);
        sgd_momentum_step_share(party, &mut self.fc1_b, &db1, &mut self.vel_f1b, eta, p, cfg);
        Ok(dx)
    }
}

/// Loss gradient on shares: 2(ŷ_j − y_j)/classes with local truncation.
/// The 1/n batch mean is deferred to the parameter-gradient scaling.
pub fn mse_grad_share(
    party: u8,
    yhat_sh: &RingTensor,
    y_sh: &RingTensor,
    classes: usize,
    cfg: &FixedPointConfig,
) -> Result<RingTensor> {
    let s1 = cfg.encode(2.0 / classes as f64)?;
    Ok(truncate_local(
        party,
        &yhat_sh.sub(y_sh, cfg)?.scale(s1, cfg),
        cfg,
    ))
}

/// Optional revealed loss: each server computes its share of
/// Σ(ŷ−y)²/(n·classes) with one Beaver square and sends it to the client.
pub fn loss_share(
    party: u8,
    yhat_sh: &RingTensor,
    y_sh: &RingTensor,
    bundle: &mut BatchBundle,
    peer: &mut dyn Channel,
    cfg: &FixedPointConfig,
) -> Result<RingTensor> {
    let diff = yhat_sh.sub(y_sh, cfg)?;
    let mut t = bundle.next_elem_triple()?;
    let sq = truncate_local(party, &beaver_mul(&diff, &diff, &mut t, peer, cfg)?, cfg);
    let total = sq.data().iter().fold(0u64, |a, &v| a.wrapping_add(v));
    let scale = cfg.encode(1.0 / sq.len() as f64)?;
    Ok(truncate_local(
        party,
        &RingTensor::scalar(cfg.wrap(total)).scale(scale, cfg),
        cfg,
    ))
}

// ---------------------------------------------------------------------
// private-vanilla server

pub struct VanillaServer {
    pub party: u8,
    pub tail: SharedTail,
    hp: Hyperparams,
}

impl VanillaServer {
    pub fn new(party: u8, hp: Hyperparams, init: &mut BatchBundle) -> Result<Self> {
        Ok(Self {
            party,
            tail: SharedTail::from_bundle(party, init)?,
            hp,
        })
    }

    /// One training batch: derive input shares from the broadcast masked
    /// map, run the tail, send the client its gradient share.
    pub fn train_batch(
        &mut self,
        x_pub: &RingTensor,
        y_sh: &RingTensor,
        bundle: &mut BatchBundle,
        peer: &mut dyn Channel,
    ) -> Result<(RingTensor, Option<RingTensor>)> {
        let cfg = self.hp.fixed;
        let n = x_pub.shape()[0];
        triple_check(y_sh.shape()[0] == n, "batch size mismatch")?;
        let mask_sh = bundle.next_mask_share()?;
        let x_sh = derive_input_share(self.party, x_pub, &mask_sh, &cfg)?;
        let cache = self.tail.forward(&x_sh, bundle, peer, &cfg)?;
        let loss = if self.hp.reveal_loss {
            Some(loss_share(
                self.party,
                &cache.yhat,
                y_sh,
                bundle,
                peer,
                &cfg,
            )?)
        } else {
            None
        };
        let g = mse_grad_share(self.party, &cache.yhat, y_sh, self.hp.arch.classes, &cfg)?;
        let dx = self
            .tail
            .backward_update(&cache, &g, n, bundle, peer, &self.hp, &cfg)?;
        triple_check(bundle.is_empty(), "unconsumed batch material")?;
        Ok((dx, loss))
    }

    /// Secure inference for one test batch; returns the output share.
    pub fn forward_only(
        &mut self,
        x_pub: &RingTensor,
        bundle: &mut BatchBundle,
        peer: &mut dyn Channel,
    ) -> Result<RingTensor> {
        let cfg = self.hp.fixed;
        let mask_sh = bundle.next_mask_share()?;
        let x_sh = derive_input_share(self.party, x_pub, &mask_sh, &cfg)?;
        let cache = self.tail.forward(&x_sh, bundle, peer, &cfg)?;
        triple_check(bundle.is_empty(), "unconsumed test material")?;
        Ok(cache.yhat)
    }
}

/// x_j = j·x_pub − α_j: shares of the true activation from the broadcast
/// masked value and the dealer's mask shares.
pub fn derive_input_share(
    party: u8,
    x_pub: &RingTensor,
    mask_share: &RingTensor,
    cfg: &FixedPointConfig,
) -> Result<RingTensor> {
    if party == 1 {
        x_pub.sub(mask_share, cfg)
    } else {
        Ok(mask_share.neg(cfg))
    }
}

// ---------------------------------------------------------------------
// private-local server: the whole network on shares

pub struct LocalServer {
    pub party: u8,
    pub conv1_w: RingTensor,
    pub conv1_b: RingTensor,
    pub conv2_w: RingTensor,
    pub conv2_b: RingTensor,
    pub tail: SharedTail,
    vel_c1w: RingTensor,
    vel_c1b: RingTensor,
    vel_c2w: RingTensor,
    vel_c2b: RingTensor,
    hp: Hyperparams,
}

struct LocalCache {
    x_cols1: RingTensor,
    mp1: crate::mpc::MaxpoolMaterial,
    pool1_signs: crate::mpc::MaxpoolSigns,
    sign1: RingTensor,
    a1: RingTensor,
    a1_cols: RingTensor,
    mp2: crate::mpc::MaxpoolMaterial,
    pool2_signs: crate::mpc::MaxpoolSigns,
    sign2: RingTensor,
    tail: TailCache,
}

impl LocalServer {
    pub fn new(party: u8, hp: Hyperparams, init: &mut BatchBundle) -> Result<Self> {
        let conv1_w = init.next_mask_share()?;
        let conv1_b = init.next_mask_share()?;
        let conv2_w = init.next_mask_share()?;
        let conv2_b = init.next_mask_share()?;
        let tail = SharedTail::from_bundle(party, init)?;
        Ok(Self {
            party,
            vel_c1w: RingTensor::zeros(conv1_w.shape()),
            vel_c1b: RingTensor::zeros(conv1_b.shape()),
            vel_c2w: RingTensor::zeros(conv2_w.shape()),
            vel_c2b: RingTensor::zeros(conv2_b.shape()),
            conv1_w,
            conv1_b,
            conv2_w,
            conv2_b,
            tail,
            hp,
        })
    }

    /// Secure conv as unfold · kernel-cols, bias row added share-local.
    fn conv_forward(
        &self,
        x_sh: &RingTensor,
        weight: &RingTensor,
        bias: &RingTensor,
        bundle: &mut BatchBundle,
        peer: &mut dyn Channel,
        cfg: &FixedPointConfig,
    ) -> Result<(RingTensor, RingTensor)> {
        let k = weight.shape()[2];
        let s = x_sh.shape();
        let (n, oh, ow) = (s[0], s[2] - k + 1, s[3] - k + 1);
        let cols = layers::unfold(x_sh, k)?;
        let wcol = layers::kernels_to_cols(weight)?;
        let mut t = bundle.next_matrix_triple()?;
        let mut z = truncate_local(
            self.party,
            &beaver_mul(&cols, &wcol, &mut t, peer, cfg)?,
            cfg,
        );
        layers::add_bias_rows(&mut z, bias, cfg);
        let maps = layers::cols_to_maps(&z, n, oh, ow)?;
        Ok((maps, cols))
    }

    fn forward_inner(
        &self,
        x_sh: &RingTensor,
        bundle: &mut BatchBundle,
        peer: &mut dyn Channel,
    ) -> Result<LocalCache> {
        let cfg = self.hp.fixed;
        let party = self.party;
        let n = x_sh.shape()[0];
        // conv1 → pool → relu
        let (z1, x_cols1) =
            self.conv_forward(x_sh, &self.conv1_w, &self.conv1_b, bundle, peer, &cfg)?;
        let mut mp1 = bundle.next_maxpool()?;
        let (p1, pool1_signs) = secure_maxpool2(&z1, &mut mp1, peer, &cfg)?;
        let mut r1 = bundle.next_relu()?;
        let p1_pub = open_masked(party, &p1, &r1.mask_share.clone(), peer, &cfg)?;
        let (a1, sign1) = secure_relu(&p1_pub, &mut r1, peer, &cfg)?;
        // conv2 → pool → relu
        let (z2, a1_cols) =
            self.conv_forward(&a1, &self.conv2_w, &self.conv2_b, bundle, peer, &cfg)?;
        let mut mp2 = bundle.next_maxpool()?;
        let (p2, pool2_signs) = secure_maxpool2(&z2, &mut mp2, peer, &cfg)?;
        let mut r2 = bundle.next_relu()?;
        let p2_pub = open_masked(party, &p2, &r2.mask_share.clone(), peer, &cfg)?;
        let (a2, sign2) = secure_relu(&p2_pub, &mut r2, peer, &cfg)?;
        // flatten and run the tail
        let flat = a2.reshape(&[n, self.hp.arch.split_len()])?;
        let tail = self.tail.forward(&flat, bundle, peer, &cfg)?;
        Ok(LocalCache {
            x_cols1,
            mp1,
            pool1_signs,
            sign1,
            a1,
            a1_cols,
            mp2,
            pool2_signs,
            sign2,
            tail,
        })
    }

    pub fn train_batch(
        &mut self,
        x_sh: &RingTensor,
        y_sh: &RingTensor,
        bundle: &mut BatchBundle,
        peer: &mut dyn Channel,
    ) -> Result<Option<RingTensor>> {
        let hp = self.hp.clone();
        let cfg = hp.fixed;
        let party = self.party;
        let (eta, p) = (hp.eta_enc(), hp.momentum_enc());
        let n = x_sh.shape()[0];
        let mut cache = self.forward_inner(x_sh, bundle, peer)?;

        let loss = if hp.reveal_loss {
            Some(loss_share(
                party,
                &cache.tail.yhat,
                y_sh,
                bundle,
                peer,
                &cfg,
            )?)
        } else {
            None
        };
        let g = mse_grad_share(party, &cache.tail.yhat, y_sh, hp.arch.classes, &cfg)?;
        let dflat = self
            .tail
            .backward_update(&cache.tail, &g, n, bundle, peer, &hp, &cfg)?;

        // back through relu2 / pool2 / conv2
        let chain = hp.arch.spatial_chain()?;
        let g = dflat.reshape(&[n, hp.arch.conv2_channels, chain[3], chain[3]])?;
        let mut tb = bundle.next_elem_triple()?;
        let g = secure_relu_backward(&g, &cache.sign2, &mut tb, peer, &cfg)?;
        let g = secure_maxpool2_backward(&g, &cache.pool2_signs, &mut cache.mp2, peer, &cfg)?;
        let g_cols = layers::maps_to_cols(&g)?;
        let mut tw = bundle.next_matrix_triple()?;
        let dw2_cols = truncate_local(
            party,
            &beaver_mul(&g_cols.transpose()?, &cache.a1_cols, &mut tw, peer, &cfg)?,
            &cfg,
        );
        let ks = self.conv2_w.shape().to_vec();
        let dw2 = dw2_cols.reshape(&ks)?;
        let db2 = crate::nn::column_sum(&g_cols, &cfg)?;
        let mut tx = bundle.next_matrix_triple()?;
        let wcol2t = layers::kernels_to_cols(&self.conv2_w)?.transpose()?;
        let da1_cols = truncate_local(
            party,
            &beaver_mul(&g_cols, &wcol2t, &mut tx, peer, &cfg)?,
            &cfg,
        );
        let da1 = layers::fold(&da1_cols, cache.a1.shape(), hp.arch.kernel, &cfg)?;

        // back through relu1 / pool1 / conv1
        let mut tb = bundle.next_elem_triple()?;
        let g = secure_relu_backward(&da1, &cache.sign1, &mut tb, peer, &cfg)?;
        let g = secure_maxpool2_backward(&g, &cache.pool1_signs, &mut cache.mp1, peer, &cfg)?;
        let g_cols = layers::maps_to_cols(&g)?;
        let mut tw = bundle.next_matrix_triple()?;
        let dw1_cols = truncate_local(
            party,
            &beaver_mul(&g_cols.transpose()?, &cache.x_cols1, &mut tw, peer, &cfg)?,
            &cfg,
        );
        let ks = self.conv1_w.shape().to_vec();
        let dw1 = dw1_cols.reshape(&ks)?;
        let db1 = crate::nn::column_sum(&g_cols, &cfg)?;

        let dw2 = super::scale_mean_share(party, &dw2, n, &cfg)?;
        let db2 = super::scale_mean_share(party, &db2, n, &cfg)?;
        let dw1 = super::scale_mean_share(party, &dw1, n, &cfg)?;
        let db1 = super::scale_mean_share(party, &db1, n, &cfg)?;
        sgd_momentum_step_share(
            party,
            &mut self.conv2_w,
            &dw2,
            &mut self.vel_c2w,
            eta,
            p,
            &cfg,
        );
        sgd_momentum_step_share(
            party,
            &mut self.conv2_b,
            &db2,
            &mut self.vel_c2b,
            eta,
            p,
            &cfg,
        );
        sgd_momentum_step_share(
            party,
            &mut self.conv1_w,
            &dw1,
            &mut self.vel_c1w,
            eta,
            p,
            &cfg,
        );
        sgd_momentum_step_share(
            party,
            &mut self.conv1_b,
            &db1,
            &mut self.vel_c1b,
            eta,
            p,
            &cfg,
        );
        triple_check(bundle.is_empty(), "unconsumed batch material")?;
        Ok(loss)
    }

    pub fn forward_only(
        &mut self,
        x_sh: &RingTensor,
        bundle: &mut BatchBundle,
        peer: &mut dyn Channel,
    ) -> Result<RingTensor> {
        let cache = self.forward_inner(x_sh, bundle, peer)?;
        triple_check(bundle.is_empty(), "unconsumed test material")?;
        Ok(cache.tail.yhat)
    }
}

// ---------------------------------------------------------------------
// public server: plaintext halves

pub struct PublicServer {
    pub variant: Variant,
    pub hp: Hyperparams,
    /// Full-model variants also own the front half.
    pub client_half: Option<ClientModel>,
    pub server_half: ServerModel,
}

impl PublicServer {
    pub fn new(variant: Variant, hp: Hyperparams) -> Self {
        let (client_half, server_half) = crate::nn::init_models(&hp.arch, &hp.fixed, hp.seed);
        PublicServer {
            variant,
            client_half: (variant == Variant::PublicLocal).then_some(client_half),
            server_half,
            hp,
        }
    }

    /// One plaintext training batch. For the no-split variant `x` is the
    /// raw image batch; for vanilla it is the activation map. Returns
    /// dJ/dATm for the split variant.
    pub fn train_batch(&mut self, x: &RingTensor, y: &RingTensor) -> Result<Option<RingTensor>> {
        let cfg = self.hp.fixed;
        let n = x.shape()[0];
        let (eta, p) = (self.hp.eta_enc(), self.hp.momentum_enc());
        let (atm, client_cache) = match &self.client_half {
            Some(front) => {
                let (atm, cache) = front.forward(x, &cfg)?;
                (atm, Some(cache))
            }
            None => (x.clone(), None),
        };
        let (yhat, cache) = self.server_half.forward(&atm, &cfg)?;
        let g = super::mse_grad(&yhat, y, self.hp.arch.classes, &cfg)?;
        let (grads, dx) = self.server_half.backward(&cache, &g, &cfg)?;
        let grads = super::scale_server_grads(&grads, n, &cfg)?;
        self.server_half.apply_grads(&grads, eta, p, &cfg);
        match (&mut self.client_half, client_cache) {
            (Some(front), Some(ccache)) => {
                let cgrads = front.backward(&ccache, &dx, &cfg)?;
                let cgrads = super::scale_client_grads(&cgrads, n, &cfg)?;
                front.apply_grads(&cgrads, eta, p, &cfg);
                Ok(None)
            }
            _ => Ok(Some(dx)),
        }
    }

    pub fn forward_only(&self, x: &RingTensor) -> Result<RingTensor> {
        let cfg = self.hp.fixed;
        let atm = match &self.client_half {
            Some(front) => front.forward_no_cache(x, &cfg)?,
            None => x.clone(),
        };
        self.server_half.forward_no_cache(&atm, &cfg)
    }
}

// ---------------------------------------------------------------------
// the long-running server role

pub struct ServerChannels {
    pub client: Box<dyn Channel>,
    /// Peer server link (private variants only).
    pub peer: Option<Box<dyn Channel>>,
    /// Dealer link (private variants only).
    pub dealer: Option<Box<dyn Channel>>,
}

/// Run a server role to completion: sync, receive the run script, then
/// follow the per-epoch train/test schedule until the final epoch.
pub fn run_server(
    variant: Variant,
    party: u8,
    hp: &Hyperparams,
    mut chans: ServerChannels,
) -> Result<ServerOutcome> {
    use crate::transport::Phase;
    super::sync_respond(chans.client.as_mut(), hp)?;
    let script = super::dealer::RunScript::from_bytes(&chans.client.recv_expect(MsgType::Sync)?)?;
    let session = chans.client.session_id();
    if let Some(peer) = chans.peer.as_mut() {
        peer.bind_session(session);
    }
    if let Some(dealer) = chans.dealer.as_mut() {
        dealer.bind_session(session);
        dealer.set_phase(Phase::Preprocessing);
    }

    if variant.is_private() {
        run_private_server(variant, party, hp, &mut chans, script)
    } else {
        run_public_server(variant, hp, &mut chans, script)
    }
}

pub struct ServerOutcome {
    pub client_meter: crate::transport::ByteMeter,
    pub peer_meter: crate::transport::ByteMeter,
    pub dealer_meter: crate::transport::ByteMeter,
    /// Final parameter shares (private) or plaintext tail (public),
    /// for reconstruction checks by the harness.
    pub final_tail: Option<FinalParams>,
}

pub enum FinalParams {
    Public(Box<ServerModel>),
    Shares {
        fc1_w: RingTensor,
        fc1_b: RingTensor,
        fc2_w: RingTensor,
        fc2_b: RingTensor,
    },
}

fn recv_bundle(dealer: &mut dyn Channel) -> Result<BatchBundle> {
    BatchBundle::from_bytes(&dealer.recv_expect(MsgType::KeyBlob)?)
}

fn run_private_server(
    variant: Variant,
    party: u8,
    hp: &Hyperparams,
    chans: &mut ServerChannels,
    script: super::dealer::RunScript,
) -> Result<ServerOutcome> {
    use crate::transport::Phase;
    let dealer = chans
        .dealer
        .as_mut()
        .ok_or_else(|| Error::Protocol("private variant requires a dealer".into()))?
        .as_mut();
    let peer = chans
        .peer
        .as_mut()
        .ok_or_else(|| Error::Protocol("private variant requires a peer server".into()))?
        .as_mut();
    let client = chans.client.as_mut();
    let mut init = recv_bundle(dealer)?;

    enum Machine {
        Vanilla(VanillaServer),
        Local(LocalServer),
    }
    let mut machine = match variant {
        Variant::PrivateVanilla => {
            Machine::Vanilla(VanillaServer::new(party, hp.clone(), &mut init)?)
        }
        Variant::PrivateLocal => Machine::Local(LocalServer::new(party, hp.clone(), &mut init)?),
        _ => unreachable!(),
    };

    for _epoch in 0..hp.epochs {
        client.set_phase(Phase::Training);
        peer.set_phase(Phase::Training);
        dealer.set_phase(Phase::Preprocessing);
        for _b in 0..script.train_batches {
            let mut bundle = recv_bundle(dealer)?;
            let y_sh = tensor_from_bytes(&client.recv_expect(MsgType::LabelShare)?)?;
            let x = tensor_from_bytes(&client.recv_expect(MsgType::XPub)?)?;
            match &mut machine {
                Machine::Vanilla(s) => {
                    let (dx, loss) = s.train_batch(&x, &y_sh, &mut bundle, peer)?;
                    client.send(MsgType::GradShare, &tensor_to_bytes(&dx))?;
                    if let Some(l) = loss {
                        client.send(MsgType::LossShare, &tensor_to_bytes(&l))?;
                    }
                }
                Machine::Local(s) => {
                    let loss = s.train_batch(&x, &y_sh, &mut bundle, peer)?;
                    if let Some(l) = loss {
                        client.send(MsgType::LossShare, &tensor_to_bytes(&l))?;
                    }
                }
            }
        }
        client.set_phase(Phase::Testing);
        peer.set_phase(Phase::Testing);
        dealer.set_phase(Phase::Testing);
        for _tb in 0..script.test_batches {
            let mut bundle = recv_bundle(dealer)?;
            let x = tensor_from_bytes(&client.recv_expect(MsgType::XPub)?)?;
            let yhat_sh = match &mut machine {
                Machine::Vanilla(s) => s.forward_only(&x, &mut bundle, peer)?,
                Machine::Local(s) => s.forward_only(&x, &mut bundle, peer)?,
            };
            client.send(MsgType::LossShare, &tensor_to_bytes(&yhat_sh))?;
        }
    }
    client.recv_expect(MsgType::Close)?;

    let tail = match machine {
        Machine::Vanilla(s) => s.tail,
        Machine::Local(s) => s.tail,
    };
    Ok(ServerOutcome {
        client_meter: chans.client.meter(),
        peer_meter: chans.peer.as_ref().map(|c| c.meter()).unwrap_or_default(),
        dealer_meter: chans.dealer.as_ref().map(|c| c.meter()).unwrap_or_default(),
        final_tail: Some(FinalParams::Shares {
            fc1_w: tail.fc1_w,
            fc1_b: tail.fc1_b,
            fc2_w: tail.fc2_w,
            fc2_b: tail.fc2_b,
        }),
    })
}

fn run_public_server(
    variant: Variant,
    hp: &Hyperparams,
    chans: &mut ServerChannels,
    script: super::dealer::RunScript,
) -> Result<ServerOutcome> {
    use crate::transport::Phase;
    let client = chans.client.as_mut();
    let mut server = PublicServer::new(variant, hp.clone());
    for _epoch in 0..hp.epochs {
        client.set_phase(Phase::Training);
        for _b in 0..script.train_batches {
            let y = tensor_from_bytes(&client.recv_expect(MsgType::LabelShare)?)?;
            let x = tensor_from_bytes(&client.recv_expect(MsgType::XPub)?)?;
            if let Some(dx) = server.train_batch(&x, &y)? {
                client.send(MsgType::GradShare, &tensor_to_bytes(&dx))?;
            }
        }
        client.set_phase(Phase::Testing);
        for _tb in 0..script.test_batches {
            let x = tensor_from_bytes(&client.recv_expect(MsgType::XPub)?)?;
            let yhat = server.forward_only(&x)?;
            client.send(MsgType::LossShare, &tensor_to_bytes(&yhat))?;
        }
    }
    client.recv_expect(MsgType::Close)?;
    Ok(ServerOutcome {
        client_meter: chans.client.meter(),
        peer_meter: Default::default(),
        dealer_meter: Default::default(),
        final_tail: Some(FinalParams::Public(Box::new(server.server_half))),
    })
}
