//! MNIST IDX ingestion: header validation, gzip handling, normalization
//! to \[0,1\] fixed point, seeded batching with the incomplete final batch
//! dropped, and one-hot label encoding.

use crate::error::{Error, IdxError, Result};
use crate::fixed::FixedPointConfig;
use crate::tensor::RingTensor;
use flate2::read::GzDecoder;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::io::Read;
use std::path::Path;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const IMAGE_HW: usize = 28;

/// (file name, canonical gzipped byte size) for the four standard files.
pub const CANONICAL_FILES: [(&str, u64); 4] = [
    ("train-images-idx3-ubyte.gz", 9_912_422),
    ("train-labels-idx1-ubyte.gz", 28_881),
    ("t10k-images-idx3-ubyte.gz", 1_648_877),
    ("t10k-labels-idx1-ubyte.gz", 4_542),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub images: Vec<u8>,
    pub labels: Vec<u8>,
    pub count: usize,
    pub split: Split,
}

fn read_u32_be(bytes: &[u8], off: usize) -> Result<u32> {
    bytes
        .get(off..off + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| {
            IdxError::Truncated {
                got: bytes.len(),
                need: off + 4,
            }
            .into()
        })
}

/// Parse an IDX image file: magic, dims, then count·rows·cols pixels.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<u8>)> {
    let magic = read_u32_be(bytes, 0)?;
    if magic != IMAGE_MAGIC {
        return Err(IdxError::BadMagic(magic).into());
    }
    let count = read_u32_be(bytes, 4)? as usize;
    let rows = read_u32_be(bytes, 8)? as usize;
    let cols = read_u32_be(bytes, 12)? as usize;
    if rows != IMAGE_HW || cols != IMAGE_HW {
        return Err(IdxError::Dims(format!("expected 28×28 images, got {rows}×{cols}")).into());
    }
    let need = 16usize
        .checked_add(
            count
                .checked_mul(rows * cols)
                .ok_or(IdxError::Dims("image count overflows".into()))?,
        )
        .ok_or(IdxError::Dims("image count overflows".into()))?;
    if bytes.len() != need {
        return Err(IdxError::Truncated {
            got: bytes.len(),
            need,
        }
        .into());
    }
    Ok((count, rows, cols, bytes[16..].to_vec()))
}

/// Parse an IDX label file; labels must be digits 0..=9.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = read_u32_be(bytes, 0)?;
    if magic != LABEL_MAGIC {
        return Err(IdxError::BadMagic(magic).into());
    }
    let count = read_u32_be(bytes, 4)? as usize;
    let need = 8usize
        .checked_add(count)
        .ok_or(IdxError::Dims("label count overflows".into()))?;
    if bytes.len() != need {
        return Err(IdxError::Truncated {
            got: bytes.len(),
            need,
        }
        .into());
    }
    let labels = bytes[8..].to_vec();
    for &l in &labels {
        if l > 9 {
            return Err(IdxError::BadLabel(l).into());
        }
    }
    Ok(labels)
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path)?;
    if path.extension().is_some_and(|e| e == "gz") {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        if let Some((_, expected)) = CANONICAL_FILES.iter().find(|(f, _)| *f == name) {
            if raw.len() as u64 != *expected {
                return Err(IdxError::Checksum {
                    name,
                    got: raw.len() as u64,
                    expected: *expected,
                }
                .into());
            }
        }
        let mut out = Vec::new();
        GzDecoder::new(&raw[..]).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn find_file(dir: &Path, stem: &str) -> Result<std::path::PathBuf> {
    for cand in [format!("{stem}.gz"), stem.to_string()] {
        let p = dir.join(&cand);
        if p.exists() {
            return Ok(p);
        }
    }
    Err(Error::Dataset(format!(
        "{stem}[.gz] not found under {}",
        dir.display()
    )))
}

fn load_split(dir: &Path, split: Split) -> Result<Dataset> {
    let prefix = match split {
        Split::Train => "train",
        Split::Test => "t10k",
    };
    let img_bytes = read_maybe_gz(&find_file(dir, &format!("{prefix}-images-idx3-ubyte"))?)?;
    let lbl_bytes = read_maybe_gz(&find_file(dir, &format!("{prefix}-labels-idx1-ubyte"))?)?;
    let (count, _, _, images) = parse_idx_images(&img_bytes)?;
    let labels = parse_idx_labels(&lbl_bytes)?;
    if labels.len() != count {
        return Err(IdxError::Dims(format!("{count} images but {} labels", labels.len())).into());
    }
    let expected = match split {
        Split::Train => 60_000,
        Split::Test => 10_000,
    };
    if count != expected {
        return Err(IdxError::Dims(format!(
            "{prefix} split has {count} samples, expected {expected}"
        ))
        .into());
    }
    Ok(Dataset {
        images,
        labels,
        count,
        split,
    })
}

/// Load the train and test splits from a directory of IDX files
/// (gzipped or raw).
pub fn load_dir(dir: &Path) -> Result<(Dataset, Dataset)> {
    Ok((
        load_split(dir, Split::Train)?,
        load_split(dir, Split::Test)?,
    ))
}

impl Dataset {
    /// Take the first `count` samples (desk-scale truncation).
    pub fn truncate(mut self, count: usize) -> Self {
        let count = count.min(self.count);
        self.images.truncate(count * IMAGE_HW * IMAGE_HW);
        self.labels.truncate(count);
        self.count = count;
        self
    }

    /// Pixels of sample `i` encoded to \[0,1\] fixed point, shape \[1,28,28\].
    pub fn image_tensor(&self, i: usize, cfg: &FixedPointConfig) -> RingTensor {
        let px = &self.images[i * IMAGE_HW * IMAGE_HW..(i + 1) * IMAGE_HW * IMAGE_HW];
        let data: Vec<u64> = px
            .iter()
            .map(|&p| cfg.encode(p as f64 / 255.0).unwrap())
            .collect();
        RingTensor::from_vec(&[1, IMAGE_HW, IMAGE_HW], data).unwrap()
    }
}

/// One training batch: inputs \[n,1,28,28\] and one-hot labels \[n,10\].
pub struct Batch {
    pub x: RingTensor,
    pub y: RingTensor,
    pub labels: Vec<u8>,
}

/// Seeded epoch batching: shuffle all indices, emit ⌊count/n⌋ batches,
/// drop the incomplete tail.
pub fn batches(dataset: &Dataset, n: usize, seed: u64, epoch: usize) -> BatchIter<'_> {
    let mut order: Vec<usize> = (0..dataset.count).collect();
    let mut rng =
        ChaCha12Rng::seed_from_u64(seed ^ (epoch as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    // Fisher–Yates
    for i in (1..order.len()).rev() {
        use rand::Rng;
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        order.swap(i, j);
    }
    BatchIter {
        dataset,
        order,
        batch_size: n,
        next: 0,
    }
}

pub struct BatchIter<'a> {
    dataset: &'a Dataset,
    order: Vec<usize>,
    batch_size: usize,
    next: usize,
}

impl BatchIter<'_> {
    pub fn num_batches(&self) -> usize {
        self.order.len() / self.batch_size
    }

    pub fn make_batch(&self, batch_idx: usize, cfg: &FixedPointConfig) -> Batch {
        let n = self.batch_size;
        let hw = IMAGE_HW * IMAGE_HW;
        let mut x = Vec::with_capacity(n * hw);
        let mut y = vec![0u64; n * 10];
        let mut labels = Vec::with_capacity(n);
        let one = cfg.one();
        for (row, &sample) in self.order[batch_idx * n..(batch_idx + 1) * n]
            .iter()
            .enumerate()
        {
            let px = &self.dataset.images[sample * hw..(sample + 1) * hw];
            x.extend(px.iter().map(|&p| cfg.encode(p as f64 / 255.0).unwrap()));
            let label = self.dataset.labels[sample];
            y[row * 10 + label as usize] = one;
            labels.push(label);
        }
        Batch {
            x: RingTensor::from_vec(&[n, 1, IMAGE_HW, IMAGE_HW], x).unwrap(),
            y: RingTensor::from_vec(&[n, 10], y).unwrap(),
            labels,
        }
    }
}

impl Iterator for BatchIter<'_> {
    type Item = (usize, Vec<usize>);

    fn next(&mut self) -> Option<Self::Item> {
        if (self.next + 1) * self.batch_size > self.order.len() {
            return None;
        }
        let idx = self.next;
        self.next += 1;
        Some((
            idx,
            self.order[idx * self.batch_size..(idx + 1) * self.batch_size].to_vec(),
        ))
    }
}

// ---------------------------------------------------------------------
// synthetic fallback

const SEGMENTS: [[bool; 7]; 10] = [
    // top, top-left, top-right, middle, bottom-left, bottom-right, bottom
    [true, true, true, false, true, true, true],     // 0
    [false, false, true, false, false, true, false], // 1
    [true, false, true, true, true, false, true],    // 2
    [true, false, true, true, false, true, true],    // 3
    [false, true, true, true, false, true, false],   // 4
    [true, true, false, true, false, true, true],    // 5
    [true, true, false, true, true, true, true],     // 6
    [true, false, true, false, false, true, false],  // 7
    [true, true, true, true, true, true, true],      // 8
    [true, true, true, true, false, true, true],     // 9
];

/// Deterministic digit-shaped images (seven-segment renderings with
/// jitter and noise). Used when the real dataset is not on disk: the
/// pipeline and learnability can be exercised, but accuracy figures are
/// not comparable to MNIST results.
pub fn synthetic_dataset(count: usize, seed: u64, split: Split) -> Dataset {
    use rand::{Rng, RngExt};
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ if split == Split::Test { 0xdead } else { 0 });
    let hw = IMAGE_HW;
    let mut images = vec![0u8; count * hw * hw];
    let mut labels = vec![0u8; count];
    for i in 0..count {
        let digit = (rng.next_u64() % 10) as u8;
        labels[i] = digit;
        let dx = (rng.next_u64() % 7) as i32 - 3;
        let dy = (rng.next_u64() % 7) as i32 - 3;
        let intensity = 160 + (rng.next_u64() % 96) as i32;
        let img = &mut images[i * hw * hw..(i + 1) * hw * hw];
        let seg = SEGMENTS[digit as usize];
        // segment endpoints in a 12×18 box at (9, 5)
        let (x0, x1) = (9 + dx, 19 + dx);
        let (y0, y1, y2) = (5 + dy, 14 + dy, 23 + dy);
        let mut fill = |xa: i32, xb: i32, ya: i32, yb: i32| {
            for y in ya..=yb {
                for x in xa..=xb {
                    if (0..hw as i32).contains(&x) && (0..hw as i32).contains(&y) {
                        img[(y as usize) * hw + x as usize] = intensity as u8;
                    }
                }
            }
        };
        if seg[0] {
            fill(x0, x1, y0, y0 + 1);
        }
        if seg[1] {
            fill(x0, x0 + 1, y0, y1);
        }
        if seg[2] {
            fill(x1 - 1, x1, y0, y1);
        }
        if seg[3] {
            fill(x0, x1, y1 - 1, y1);
        }
        if seg[4] {
            fill(x0, x0 + 1, y1, y2);
        }
        if seg[5] {
            fill(x1 - 1, x1, y1, y2);
        }
        if seg[6] {
            fill(x0, x1, y2 - 1, y2);
        }
        // speckle noise
        for _ in 0..20 {
            let p = (rng.next_u64() % (hw * hw) as u64) as usize;
            img[p] = img[p].saturating_add(rng.random::<u8>() / 4);
        }
    }
    Dataset {
        images,
        labels,
        count,
        split,
    }
}
