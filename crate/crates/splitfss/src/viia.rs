//! Activation-map leakage analysis: how much of the raw image survives
//! into the first convolution's maps, and how completely a uniform mask
//! erases it. Emits portable graymaps and mean absolute Pearson
//! correlations.

use crate::error::Result;
use crate::fixed::FixedPointConfig;
use crate::mnist::{Dataset, IMAGE_HW};
use crate::nn::{layers, ClientModel};
use crate::stats::{byte_frequency_p, pearson};
use crate::tensor::RingTensor;
use rand::Rng;
use serde::Serialize;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskMode {
    Plaintext,
    Masked,
    /// Masking path with α = 0 (must reproduce plaintext exactly).
    MaskedZero,
}

#[derive(Debug, Clone, Serialize)]
pub struct ViiaReport {
    pub images: usize,
    pub channels: usize,
    pub mode: String,
    /// Mean |ρ| between each center-cropped raw image and each channel.
    pub mean_abs_correlation: f64,
    /// Chi-square p-value of the emitted maps' low bytes.
    pub byte_frequency_p: f64,
}

/// Central crop of a 28×28 image to the 24×24 grid a valid 5×5
/// convolution aligns with.
pub fn crop_to_conv1(image: &[u8]) -> Vec<f64> {
    let out_hw = IMAGE_HW - 4;
    let mut out = Vec::with_capacity(out_hw * out_hw);
    for y in 0..out_hw {
        for x in 0..out_hw {
            out.push(image[(y + 2) * IMAGE_HW + x + 2] as f64 / 255.0);
        }
    }
    out
}

/// P5 binary graymap with a linear rescale of the data to 0..255.
pub fn pgm_bytes(width: usize, height: usize, data: &[f64]) -> Vec<u8> {
    assert_eq!(data.len(), width * height);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in data {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(
        data.iter()
            .map(|&v| ((v - lo) / span * 255.0).round() as u8),
    );
    out
}

/// First-convolution activation maps for one image, optionally masked.
pub fn conv1_maps<R: Rng>(
    model: &ClientModel,
    image: &RingTensor,
    mode: MaskMode,
    cfg: &FixedPointConfig,
    rng: &mut R,
) -> Result<RingTensor> {
    let atm = layers::conv2d(image, &model.conv1_w, &model.conv1_b, cfg)?;
    Ok(match mode {
        MaskMode::Plaintext => atm,
        MaskMode::MaskedZero => {
            let zero = RingTensor::zeros(atm.shape());
            atm.add(&zero, cfg)?
        }
        MaskMode::Masked => {
            let alpha = RingTensor::random(atm.shape(), cfg, rng);
            atm.add(&alpha, cfg)?
        }
    })
}

pub struct ViiaOptions<'a> {
    pub image_count: usize,
    pub mode: MaskMode,
    /// Directory for PGM dumps; `None` skips the file output.
    pub dump_dir: Option<&'a Path>,
}

/// Correlate raw images against their (possibly masked) activation maps.
pub fn analyze<R: Rng>(
    model: &ClientModel,
    dataset: &Dataset,
    opts: &ViiaOptions,
    cfg: &FixedPointConfig,
    rng: &mut R,
) -> Result<ViiaReport> {
    let count = opts.image_count.min(dataset.count);
    let mut corr_sum = 0.0;
    let mut corr_n = 0usize;
    let mut all_elems: Vec<u64> = Vec::new();
    let mut channels = 0;
    for i in 0..count {
        let image = dataset.image_tensor(i, cfg);
        let maps = conv1_maps(model, &image, opts.mode, cfg, rng)?;
        let shape = maps.shape().to_vec();
        channels = shape[0];
        let hw = shape[1] * shape[2];
        let raw =
            crop_to_conv1(&dataset.images[i * IMAGE_HW * IMAGE_HW..(i + 1) * IMAGE_HW * IMAGE_HW]);
        let decoded = maps.decode(cfg);
        for c in 0..channels {
            let channel = &decoded[c * hw..(c + 1) * hw];
            corr_sum += pearson(&raw, channel).abs();
            corr_n += 1;
        }
        all_elems.extend_from_slice(maps.data());
        if let Some(dir) = opts.dump_dir {
            std::fs::create_dir_all(dir)?;
            // raw image plus the first few channels per sample
            let raw_pgm = pgm_bytes(24, 24, &raw);
            std::fs::write(dir.join(format!("img{i:03}_raw.pgm")), raw_pgm)?;
            for c in 0..channels.min(4) {
                let pgm = pgm_bytes(shape[2], shape[1], &decoded[c * hw..(c + 1) * hw]);
                std::fs::write(dir.join(format!("img{i:03}_ch{c:02}.pgm")), pgm)?;
            }
        }
    }
    Ok(ViiaReport {
        images: count,
        channels,
        mode: format!("{:?}", opts.mode),
        mean_abs_correlation: corr_sum / corr_n.max(1) as f64,
        byte_frequency_p: byte_frequency_p(&all_elems),
    })
}
