//! The client role: owns the data, runs the convolutional front in
//! plaintext (split variants), masks or shares what leaves the machine,
//! reconstructs the returned gradient shares, and keeps the accuracy
//! bookkeeping.

use super::dealer::RunScript;
use super::material::BatchBundle;
use super::{role_rng, share_labels, Hyperparams, Variant};
use crate::error::{Error, Result};
use crate::mnist::{batches, Dataset, IMAGE_HW};
use crate::mpc::share;
use crate::nn::{argmax_rows, ClientModel};
use crate::tensor::RingTensor;
use crate::transport::{tensor_from_bytes, tensor_to_bytes, Channel, MsgType, Phase};

pub struct ClientChannels {
    pub server0: Box<dyn Channel>,
    pub server1: Option<Box<dyn Channel>>,
    pub dealer: Option<Box<dyn Channel>>,
}

pub struct ClientOutcome {
    pub epoch_accuracy: Vec<f64>,
    pub revealed_losses: Vec<f64>,
    pub model: Option<ClientModel>,
    pub server0_meter: crate::transport::ByteMeter,
    pub server1_meter: crate::transport::ByteMeter,
    pub dealer_meter: crate::transport::ByteMeter,
    pub script: RunScript,
}

fn sequential_test_batch(
    test: &Dataset,
    tb: usize,
    n: usize,
    cfg: &crate::fixed::FixedPointConfig,
) -> (RingTensor, Vec<u8>) {
    let hw = IMAGE_HW * IMAGE_HW;
    let mut x = Vec::with_capacity(n * hw);
    let mut labels = Vec::with_capacity(n);
    for i in tb * n..(tb + 1) * n {
        let px = &test.images[i * hw..(i + 1) * hw];
        x.extend(px.iter().map(|&p| cfg.encode(p as f64 / 255.0).unwrap()));
        labels.push(test.labels[i]);
    }
    (
        RingTensor::from_vec(&[n, 1, IMAGE_HW, IMAGE_HW], x).unwrap(),
        labels,
    )
}

fn recv_mask(dealer: &mut dyn Channel) -> Result<RingTensor> {
    let mut bundle = BatchBundle::from_bytes(&dealer.recv_expect(MsgType::TripleBlob)?)?;
    bundle.next_mask()
}

/// Run the client to completion over its channels.
pub fn run_client(
    variant: Variant,
    hp: &Hyperparams,
    train: &Dataset,
    test: &Dataset,
    mut chans: ClientChannels,
) -> Result<ClientOutcome> {
    let cfg = hp.fixed;
    let n = hp.batch_size;
    let train_batches = hp.batches_for(train.count);
    let test_count = hp.test_samples.unwrap_or(test.count).min(test.count);
    let test_batches = test_count / n;
    let script = RunScript {
        train_batches,
        test_batches,
        batch_size: n,
    };

    // synchronize hyperparameters, then announce the schedule
    super::sync_initiate(chans.server0.as_mut(), hp)?;
    let session = chans.server0.session_id();
    chans.server0.send(MsgType::Sync, &script.to_bytes())?;
    if let Some(s1) = chans.server1.as_mut() {
        super::sync_initiate(s1.as_mut(), hp)?;
        s1.send(MsgType::Sync, &script.to_bytes())?;
    }
    if let Some(d) = chans.dealer.as_mut() {
        super::sync_initiate(d.as_mut(), hp)?;
        d.send(MsgType::Sync, &script.to_bytes())?;
        d.bind_session(session);
        d.set_phase(Phase::Preprocessing);
    }

    let mut model = variant
        .is_split()
        .then(|| crate::nn::init_models(&hp.arch, &cfg, hp.seed).0);
    let mut share_rng = role_rng(hp.seed, "client-share");
    let mut epoch_accuracy = Vec::with_capacity(hp.epochs);
    let mut revealed_losses = Vec::new();

    for epoch in 0..hp.epochs {
        chans.server0.set_phase(Phase::Training);
        if let Some(s1) = chans.server1.as_mut() {
            s1.set_phase(Phase::Training);
        }
        if let Some(d) = chans.dealer.as_mut() {
            d.set_phase(Phase::Preprocessing);
        }
        let iter = batches(train, n, hp.seed, epoch);
        for b in 0..train_batches {
            let batch = iter.make_batch(b, &cfg);
            match variant {
                Variant::PublicLocal => {
                    let s0 = chans.server0.as_mut();
                    s0.send(MsgType::LabelShare, &tensor_to_bytes(&batch.y))?;
                    s0.send(MsgType::XPub, &tensor_to_bytes(&batch.x))?;
                }
                Variant::PublicVanilla => {
                    let front = model.as_mut().expect("split variant has a client model");
                    let (atm, cache) = front.forward(&batch.x, &cfg)?;
                    let s0 = chans.server0.as_mut();
                    s0.send(MsgType::LabelShare, &tensor_to_bytes(&batch.y))?;
                    s0.send(MsgType::XPub, &tensor_to_bytes(&atm))?;
                    let dx = tensor_from_bytes(&s0.recv_expect(MsgType::GradShare)?)?;
                    let grads = front.backward(&cache, &dx, &cfg)?;
                    let grads = super::scale_client_grads(&grads, n, &cfg)?;
                    front.apply_grads(&grads, hp.eta_enc(), hp.momentum_enc(), &cfg);
                }
                Variant::PrivateVanilla => {
                    let alpha = recv_mask(chans.dealer.as_mut().unwrap().as_mut())?;
                    let front = model.as_mut().expect("split variant has a client model");
                    let (atm, cache) = front.forward(&batch.x, &cfg)?;
                    let x_pub = atm.add(&alpha, &cfg)?;
                    let (y0, y1) = share_labels(&batch.y, &cfg, &mut share_rng);
                    let s1 = chans
                        .server1
                        .as_mut()
                        .ok_or_else(|| Error::Protocol("missing server1".into()))?
                        .as_mut();
                    let s0 = chans.server0.as_mut();
                    s0.send(MsgType::LabelShare, &tensor_to_bytes(&y0))?;
                    s1.send(MsgType::LabelShare, &tensor_to_bytes(&y1))?;
                    s0.send(MsgType::XPub, &tensor_to_bytes(&x_pub))?;
                    s1.send(MsgType::XPub, &tensor_to_bytes(&x_pub))?;
                    let dx0 = tensor_from_bytes(&s0.recv_expect(MsgType::GradShare)?)?;
                    let dx1 = tensor_from_bytes(&s1.recv_expect(MsgType::GradShare)?)?;
                    if hp.reveal_loss {
                        let l0 = tensor_from_bytes(&s0.recv_expect(MsgType::LossShare)?)?;
                        let l1 = tensor_from_bytes(&s1.recv_expect(MsgType::LossShare)?)?;
                        let loss = cfg.decode(cfg.add(l0.data()[0], l1.data()[0]));
                        revealed_losses.push(loss);
                    }
                    // gradients are additive shares; the data owner sums them
                    let dx = dx0.add(&dx1, &cfg)?;
                    let grads = front.backward(&cache, &dx, &cfg)?;
                    let grads = super::scale_client_grads(&grads, n, &cfg)?;
                    front.apply_grads(&grads, hp.eta_enc(), hp.momentum_enc(), &cfg);
                }
                Variant::PrivateLocal => {
                    let (x0, x1) = share(&batch.x, &cfg, &mut share_rng);
                    let (y0, y1) = share_labels(&batch.y, &cfg, &mut share_rng);
                    let s1 = chans
                        .server1
                        .as_mut()
                        .ok_or_else(|| Error::Protocol("missing server1".into()))?
                        .as_mut();
                    let s0 = chans.server0.as_mut();
                    s0.send(MsgType::LabelShare, &tensor_to_bytes(&y0))?;
                    s1.send(MsgType::LabelShare, &tensor_to_bytes(&y1))?;
                    s0.send(MsgType::XPub, &tensor_to_bytes(&x0))?;
                    s1.send(MsgType::XPub, &tensor_to_bytes(&x1))?;
                    if hp.reveal_loss {
                        let l0 = tensor_from_bytes(&s0.recv_expect(MsgType::LossShare)?)?;
                        let l1 = tensor_from_bytes(&s1.recv_expect(MsgType::LossShare)?)?;
                        revealed_losses.push(cfg.decode(cfg.add(l0.data()[0], l1.data()[0])));
                    }
                }
            }
        }

        // epoch test pass
        chans.server0.set_phase(Phase::Testing);
        if let Some(s1) = chans.server1.as_mut() {
            s1.set_phase(Phase::Testing);
        }
        if let Some(d) = chans.dealer.as_mut() {
            d.set_phase(Phase::Testing);
        }
        let mut correct = 0usize;
        let mut seen = 0usize;
        for tb in 0..test_batches {
            let (x, labels) = sequential_test_batch(test, tb, n, &cfg);
            let yhat = match variant {
                Variant::PublicLocal => {
                    let s0 = chans.server0.as_mut();
                    s0.send(MsgType::XPub, &tensor_to_bytes(&x))?;
                    tensor_from_bytes(&s0.recv_expect(MsgType::LossShare)?)?
                }
                Variant::PublicVanilla => {
                    let atm = model.as_ref().unwrap().forward_no_cache(&x, &cfg)?;
                    let s0 = chans.server0.as_mut();
                    s0.send(MsgType::XPub, &tensor_to_bytes(&atm))?;
                    tensor_from_bytes(&s0.recv_expect(MsgType::LossShare)?)?
                }
                Variant::PrivateVanilla => {
                    let alpha = recv_mask(chans.dealer.as_mut().unwrap().as_mut())?;
                    let atm = model.as_ref().unwrap().forward_no_cache(&x, &cfg)?;
                    let x_pub = atm.add(&alpha, &cfg)?;
                    let s1 = chans.server1.as_mut().unwrap().as_mut();
                    let s0 = chans.server0.as_mut();
                    s0.send(MsgType::XPub, &tensor_to_bytes(&x_pub))?;
                    s1.send(MsgType::XPub, &tensor_to_bytes(&x_pub))?;
                    let y0 = tensor_from_bytes(&s0.recv_expect(MsgType::LossShare)?)?;
                    let y1 = tensor_from_bytes(&s1.recv_expect(MsgType::LossShare)?)?;
                    y0.add(&y1, &cfg)?
                }
                Variant::PrivateLocal => {
                    let (x0, x1) = share(&x, &cfg, &mut share_rng);
                    let s1 = chans.server1.as_mut().unwrap().as_mut();
                    let s0 = chans.server0.as_mut();
                    s0.send(MsgType::XPub, &tensor_to_bytes(&x0))?;
                    s1.send(MsgType::XPub, &tensor_to_bytes(&x1))?;
                    let y0 = tensor_from_bytes(&s0.recv_expect(MsgType::LossShare)?)?;
                    let y1 = tensor_from_bytes(&s1.recv_expect(MsgType::LossShare)?)?;
                    y0.add(&y1, &cfg)?
                }
            };
            for (row, pred) in argmax_rows(&yhat, &cfg).into_iter().enumerate() {
                if pred == labels[row] as usize {
                    correct += 1;
                }
            }
            seen += labels.len();
        }
        let acc = if seen > 0 {
            correct as f64 / seen as f64
        } else {
            f64::NAN
        };
        epoch_accuracy.push(acc);
        let _ = epoch;
    }

    chans.server0.send(MsgType::Close, &[])?;
    if let Some(s1) = chans.server1.as_mut() {
        s1.send(MsgType::Close, &[])?;
    }

    Ok(ClientOutcome {
        epoch_accuracy,
        revealed_losses,
        model,
        server0_meter: chans.server0.meter(),
        server1_meter: chans
            .server1
            .as_ref()
            .map(|c| c.meter())
            .unwrap_or_default(),
        dealer_meter: chans.dealer.as_ref().map(|c| c.meter()).unwrap_or_default(),
        script,
    })
}
