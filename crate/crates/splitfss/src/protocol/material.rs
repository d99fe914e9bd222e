//! Dealer material records: the typed stream each party consumes in
//! lockstep, its wire encoding, and the tape file format (versioned
//! header, then length-prefixed records in consumption order).

use crate::error::{Error, FrameError, Result};
use crate::fss::{deserialize_key, serialize_key, DcfKey};
use crate::mpc::{MaxpoolMaterial, ReluMaterial, TripleHalf};
use crate::tensor::RingTensor;
use crate::transport::{tensor_from_bytes, tensor_to_bytes};
use std::io::{Read, Write};

pub const TAPE_MAGIC: [u8; 8] = *b"SFSSTAPE";
pub const TAPE_VERSION: u8 = 1;

#[derive(Debug, Clone)]
pub enum MaterialRecord {
    /// Elementwise mask in the clear (client side of the split mask).
    Mask(RingTensor),
    /// One party's additive share of a mask.
    MaskShare(RingTensor),
    MatrixTriple(TripleHalf),
    ElemTriple(TripleHalf),
    Relu(ReluMaterial),
    Maxpool(Box<MaxpoolMaterial>),
}

impl MaterialRecord {
    pub fn kind(&self) -> &'static str {
        match self {
            MaterialRecord::Mask(_) => "mask",
            MaterialRecord::MaskShare(_) => "tensor share",
            MaterialRecord::MatrixTriple(_) => "matrix triple",
            MaterialRecord::ElemTriple(_) => "elementwise triple",
            MaterialRecord::Relu(_) => "relu material",
            MaterialRecord::Maxpool(_) => "maxpool material",
        }
    }
}

const TAG_MASK: u8 = 1;
const TAG_MASK_SHARE: u8 = 2;
const TAG_MATRIX: u8 = 3;
const TAG_ELEM: u8 = 4;
const TAG_RELU: u8 = 5;
const TAG_MAXPOOL: u8 = 6;

fn put_chunk(out: &mut Vec<u8>, chunk: &[u8]) {
    out.extend_from_slice(&(chunk.len() as u64).to_le_bytes());
    out.extend_from_slice(chunk);
}

struct Cursor<'a> {
    bytes: &'a [u8],
    off: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, off: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .off
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(FrameError::Truncated {
                got: self.bytes.len(),
                need: self.off.saturating_add(n),
            })?;
        let s = &self.bytes[self.off..end];
        self.off = end;
        Ok(s)
    }

    fn chunk(&mut self) -> Result<&'a [u8]> {
        let len = u64::from_le_bytes(self.take(8)?.try_into().unwrap()) as usize;
        self.take(len)
    }

    fn tensor(&mut self) -> Result<RingTensor> {
        tensor_from_bytes(self.chunk()?)
    }

    fn byte(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
}

fn triple_to_bytes(t: &TripleHalf) -> Vec<u8> {
    let mut out = vec![t.party, t.matrix as u8];
    put_chunk(&mut out, &tensor_to_bytes(&t.a));
    put_chunk(&mut out, &tensor_to_bytes(&t.b));
    put_chunk(&mut out, &tensor_to_bytes(&t.c));
    out
}

fn triple_from_bytes(bytes: &[u8]) -> Result<TripleHalf> {
    let mut cur = Cursor::new(bytes);
    let party = cur.byte()?;
    let matrix = cur.byte()? == 1;
    let a = cur.tensor()?;
    let b = cur.tensor()?;
    let c = cur.tensor()?;
    Ok(TripleHalf::new(party, matrix, a, b, c))
}

fn relu_to_bytes(m: &ReluMaterial) -> Vec<u8> {
    let mut out = vec![m.party];
    put_chunk(&mut out, &tensor_to_bytes(&m.mask_share));
    put_chunk(&mut out, &tensor_to_bytes(&m.const_share));
    out.extend_from_slice(&(m.keys.len() as u64).to_le_bytes());
    for k in &m.keys {
        put_chunk(&mut out, &serialize_key(&k.0));
    }
    put_chunk(&mut out, &triple_to_bytes(&m.select));
    out
}

fn relu_from_bytes(bytes: &[u8]) -> Result<ReluMaterial> {
    let mut cur = Cursor::new(bytes);
    let party = cur.byte()?;
    let mask_share = cur.tensor()?;
    let const_share = cur.tensor()?;
    let n = u64::from_le_bytes(cur.take(8)?.try_into().unwrap()) as usize;
    if n != mask_share.len() {
        return Err(Error::Material(format!(
            "relu material carries {n} keys for {} elements",
            mask_share.len()
        )));
    }
    let mut keys = Vec::with_capacity(n);
    for _ in 0..n {
        keys.push(DcfKey(deserialize_key(cur.chunk()?)?));
    }
    let select = triple_from_bytes(cur.chunk()?)?;
    Ok(ReluMaterial::new(
        party,
        mask_share,
        keys,
        const_share,
        select,
    ))
}

fn maxpool_to_bytes(m: &MaxpoolMaterial) -> Vec<u8> {
    let mut out = Vec::new();
    put_chunk(&mut out, &relu_to_bytes(&m.m1));
    put_chunk(&mut out, &relu_to_bytes(&m.m2));
    put_chunk(&mut out, &relu_to_bytes(&m.m3));
    out.push(m.backward.len() as u8);
    for t in &m.backward {
        put_chunk(&mut out, &triple_to_bytes(t));
    }
    out
}

fn maxpool_from_bytes(bytes: &[u8]) -> Result<MaxpoolMaterial> {
    let mut cur = Cursor::new(bytes);
    let m1 = relu_from_bytes(cur.chunk()?)?;
    let m2 = relu_from_bytes(cur.chunk()?)?;
    let m3 = relu_from_bytes(cur.chunk()?)?;
    let n = cur.byte()? as usize;
    let mut backward = Vec::with_capacity(n);
    for _ in 0..n {
        backward.push(triple_from_bytes(cur.chunk()?)?);
    }
    Ok(MaxpoolMaterial {
        m1,
        m2,
        m3,
        backward,
    })
}

pub fn record_to_bytes(r: &MaterialRecord) -> Vec<u8> {
    let (tag, body) = match r {
        MaterialRecord::Mask(t) => (TAG_MASK, tensor_to_bytes(t)),
        MaterialRecord::MaskShare(t) => (TAG_MASK_SHARE, tensor_to_bytes(t)),
        MaterialRecord::MatrixTriple(t) => (TAG_MATRIX, triple_to_bytes(t)),
        MaterialRecord::ElemTriple(t) => (TAG_ELEM, triple_to_bytes(t)),
        MaterialRecord::Relu(m) => (TAG_RELU, relu_to_bytes(m)),
        MaterialRecord::Maxpool(m) => (TAG_MAXPOOL, maxpool_to_bytes(m)),
    };
    let mut out = Vec::with_capacity(9 + body.len());
    out.push(tag);
    out.extend_from_slice(&(body.len() as u64).to_le_bytes());
    out.extend_from_slice(&body);
    out
}

pub fn record_from_bytes(bytes: &[u8]) -> Result<(MaterialRecord, usize)> {
    if bytes.len() < 9 {
        return Err(FrameError::Truncated {
            got: bytes.len(),
            need: 9,
        }
        .into());
    }
    let tag = bytes[0];
    let len = u64::from_le_bytes(bytes[1..9].try_into().unwrap()) as usize;
    if len > crate::transport::MAX_PAYLOAD as usize || bytes.len() < 9 + len {
        return Err(FrameError::Truncated {
            got: bytes.len(),
            need: 9usize.saturating_add(len),
        }
        .into());
    }
    let body = &bytes[9..9 + len];
    let rec = match tag {
        TAG_MASK => MaterialRecord::Mask(tensor_from_bytes(body)?),
        TAG_MASK_SHARE => MaterialRecord::MaskShare(tensor_from_bytes(body)?),
        TAG_MATRIX => MaterialRecord::MatrixTriple(triple_from_bytes(body)?),
        TAG_ELEM => MaterialRecord::ElemTriple(triple_from_bytes(body)?),
        TAG_RELU => MaterialRecord::Relu(relu_from_bytes(body)?),
        TAG_MAXPOOL => MaterialRecord::Maxpool(Box::new(maxpool_from_bytes(body)?)),
        other => return Err(Error::Material(format!("unknown record tag {other}"))),
    };
    Ok((rec, 9 + len))
}

/// One batch's material for one party, consumed front to back.
#[derive(Debug, Default)]
pub struct BatchBundle {
    records: std::collections::VecDeque<MaterialRecord>,
}

impl BatchBundle {
    pub fn new(records: Vec<MaterialRecord>) -> Self {
        Self {
            records: records.into(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&(self.records.len() as u32).to_le_bytes());
        for r in &self.records {
            out.extend_from_slice(&record_to_bytes(r));
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(FrameError::Truncated {
                got: bytes.len(),
                need: 4,
            }
            .into());
        }
        let count = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
        let mut off = 4;
        // sized by what actually parses, not by the untrusted count
        let mut records = Vec::new();
        for _ in 0..count {
            let (rec, used) = record_from_bytes(&bytes[off..])?;
            records.push(rec);
            off += used;
        }
        if off != bytes.len() {
            return Err(Error::Material(format!(
                "{} trailing bytes after {count} records",
                bytes.len() - off
            )));
        }
        Ok(Self::new(records))
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn pop(&mut self, what: &str) -> Result<MaterialRecord> {
        self.records
            .pop_front()
            .ok_or_else(|| Error::Material(format!("dealer tape exhausted: wanted {what}")))
    }

    pub fn next_mask(&mut self) -> Result<RingTensor> {
        match self.pop("mask")? {
            MaterialRecord::Mask(t) => Ok(t),
            other => Err(Error::Material(format!(
                "expected mask, got {}",
                other.kind()
            ))),
        }
    }

    pub fn next_mask_share(&mut self) -> Result<RingTensor> {
        match self.pop("mask share")? {
            MaterialRecord::MaskShare(t) => Ok(t),
            other => Err(Error::Material(format!(
                "expected tensor share, got {}",
                other.kind()
            ))),
        }
    }

    pub fn next_matrix_triple(&mut self) -> Result<TripleHalf> {
        match self.pop("matrix triple")? {
            MaterialRecord::MatrixTriple(t) => Ok(t),
            other => Err(Error::Material(format!(
                "expected matrix triple, got {}",
                other.kind()
            ))),
        }
    }

    pub fn next_elem_triple(&mut self) -> Result<TripleHalf> {
        match self.pop("elementwise triple")? {
            MaterialRecord::ElemTriple(t) => Ok(t),
            other => Err(Error::Material(format!(
                "expected elementwise triple, got {}",
                other.kind()
            ))),
        }
    }

    pub fn next_relu(&mut self) -> Result<ReluMaterial> {
        match self.pop("relu material")? {
            MaterialRecord::Relu(m) => Ok(m),
            other => Err(Error::Material(format!(
                "expected relu material, got {}",
                other.kind()
            ))),
        }
    }

    pub fn next_maxpool(&mut self) -> Result<MaxpoolMaterial> {
        match self.pop("maxpool material")? {
            MaterialRecord::Maxpool(m) => Ok(*m),
            other => Err(Error::Material(format!(
                "expected maxpool material, got {}",
                other.kind()
            ))),
        }
    }
}

/// Tape file writer: `\[8B magic\]\[1B version\]\[1B party\]` then bundles as
/// length-prefixed record groups.
pub struct DealerTapeWriter<W: Write> {
    out: W,
}

impl<W: Write> DealerTapeWriter<W> {
    pub fn new(mut out: W, party: u8) -> Result<Self> {
        out.write_all(&TAPE_MAGIC)?;
        out.write_all(&[TAPE_VERSION, party])?;
        Ok(Self { out })
    }

    pub fn write_bundle(&mut self, bundle: &BatchBundle) -> Result<()> {
        let bytes = bundle.to_bytes();
        self.out.write_all(&(bytes.len() as u64).to_le_bytes())?;
        self.out.write_all(&bytes)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

pub struct DealerTapeReader<R: Read> {
    input: R,
    pub party: u8,
}

impl<R: Read> DealerTapeReader<R> {
    pub fn new(mut input: R) -> Result<Self> {
        let mut header = [0u8; 10];
        input.read_exact(&mut header)?;
        if header[..8] != TAPE_MAGIC {
            return Err(Error::Material("bad tape magic".into()));
        }
        if header[8] != TAPE_VERSION {
            return Err(Error::Material(format!(
                "unsupported tape version {}",
                header[8]
            )));
        }
        let party = header[9];
        if party > 2 {
            return Err(Error::Material(format!("bad tape party {party}")));
        }
        Ok(Self { input, party })
    }

    /// Next bundle, or `None` at a clean end of tape. A tape ending in
    /// the middle of a length prefix or bundle body is an error.
    pub fn next_bundle(&mut self) -> Result<Option<BatchBundle>> {
        let mut len = [0u8; 8];
        let mut filled = 0;
        while filled < 8 {
            let n = self.input.read(&mut len[filled..])?;
            if n == 0 {
                if filled == 0 {
                    return Ok(None);
                }
                return Err(Error::Material(
                    "tape truncated inside a bundle length prefix".into(),
                ));
            }
            filled += n;
        }
        let len = u64::from_le_bytes(len);
        if len > crate::transport::MAX_PAYLOAD {
            return Err(Error::Material(format!(
                "tape bundle length {len} too large"
            )));
        }
        // grow with the data actually present rather than trusting len
        let mut bytes = Vec::new();
        self.input.by_ref().take(len).read_to_end(&mut bytes)?;
        if bytes.len() as u64 != len {
            return Err(Error::Material(format!(
                "tape truncated: bundle claims {len} bytes, {} present",
                bytes.len()
            )));
        }
        Ok(Some(BatchBundle::from_bytes(&bytes)?))
    }
}

/// Parse a whole in-memory tape (fuzz entry point).
pub fn parse_tape(bytes: &[u8]) -> Result<Vec<BatchBundle>> {
    let mut reader = DealerTapeReader::new(bytes)?;
    let mut out = Vec::new();
    while let Some(b) = reader.next_bundle()? {
        out.push(b);
    }
    Ok(out)
}
