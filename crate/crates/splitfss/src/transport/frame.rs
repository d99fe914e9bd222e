//! Wire frame layout, normative and bit-exact (see `docs/wire.md`):
//!
//! ```text
//! \[4B magic "SFSS"\]\[1B version\]\[1B msg_type\]\[8B session_id LE\]\[8B payload_len LE\][payload]
//! ```

use crate::error::FrameError;

pub const MAGIC: [u8; 4] = *b"SFSS";
pub const VERSION: u8 = 1;
pub const HEADER_BYTES: usize = 4 + 1 + 1 + 8 + 8;
pub const MAX_PAYLOAD: u64 = 1 << 30;

/// Every send and receive in the training algorithms maps to one of
/// these types.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum MsgType {
    Sync = 1,
    XPub = 2,
    LabelShare = 3,
    GradShare = 4,
    LossShare = 5,
    KeyBlob = 6,
    TripleBlob = 7,
    Metric = 8,
    Close = 9,
}

impl MsgType {
    pub fn from_byte(b: u8) -> Result<Self, FrameError> {
        Ok(match b {
            1 => MsgType::Sync,
            2 => MsgType::XPub,
            3 => MsgType::LabelShare,
            4 => MsgType::GradShare,
            5 => MsgType::LossShare,
            6 => MsgType::KeyBlob,
            7 => MsgType::TripleBlob,
            8 => MsgType::Metric,
            9 => MsgType::Close,
            other => return Err(FrameError::UnknownType(other)),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub msg_type: MsgType,
    pub session_id: u64,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn wire_len(&self) -> usize {
        HEADER_BYTES + self.payload.len()
    }
}

pub fn encode_frame(frame: &Frame) -> Vec<u8> {
    let mut out = Vec::with_capacity(frame.wire_len());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(frame.msg_type as u8);
    out.extend_from_slice(&frame.session_id.to_le_bytes());
    out.extend_from_slice(&(frame.payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&frame.payload);
    out
}

/// Decode a header; returns (msg_type, session_id, payload_len).
pub fn decode_header(bytes: &[u8; HEADER_BYTES]) -> Result<(MsgType, u64, u64), FrameError> {
    if bytes[..4] != MAGIC {
        return Err(FrameError::BadMagic(bytes[..4].try_into().unwrap()));
    }
    if bytes[4] != VERSION {
        return Err(FrameError::Version {
            got: bytes[4],
            expected: VERSION,
        });
    }
    let msg_type = MsgType::from_byte(bytes[5])?;
    let session_id = u64::from_le_bytes(bytes[6..14].try_into().unwrap());
    let payload_len = u64::from_le_bytes(bytes[14..22].try_into().unwrap());
    if payload_len > MAX_PAYLOAD {
        return Err(FrameError::Oversize(payload_len));
    }
    Ok((msg_type, session_id, payload_len))
}

/// Decode one complete frame from a byte buffer (loopback path and fuzz
/// entry point).
pub fn decode_frame(bytes: &[u8]) -> Result<Frame, FrameError> {
    if bytes.len() < HEADER_BYTES {
        return Err(FrameError::Truncated {
            got: bytes.len(),
            need: HEADER_BYTES,
        });
    }
    let header: [u8; HEADER_BYTES] = bytes[..HEADER_BYTES].try_into().unwrap();
    let (msg_type, session_id, payload_len) = decode_header(&header)?;
    let total = HEADER_BYTES + payload_len as usize;
    if bytes.len() != total {
        return Err(FrameError::Truncated {
            got: bytes.len(),
            need: total,
        });
    }
    Ok(Frame {
        msg_type,
        session_id,
        payload: bytes[HEADER_BYTES..].to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_payload_is_22_bytes() {
        let f = Frame {
            msg_type: MsgType::Sync,
            session_id: 7,
            payload: vec![],
        };
        assert_eq!(encode_frame(&f).len(), 22);
    }

    #[test]
    fn bad_magic_and_version() {
        let mut bytes = encode_frame(&Frame {
            msg_type: MsgType::Close,
            session_id: 0,
            payload: vec![],
        });
        bytes[0] = b'X';
        assert!(matches!(decode_frame(&bytes), Err(FrameError::BadMagic(_))));
        bytes[0] = b'S';
        bytes[4] = 9;
        assert!(matches!(
            decode_frame(&bytes),
            Err(FrameError::Version { got: 9, .. })
        ));
    }

    #[test]
    fn unknown_type_rejected() {
        let mut bytes = encode_frame(&Frame {
            msg_type: MsgType::Metric,
            session_id: 0,
            payload: vec![1, 2],
        });
        bytes[5] = 200;
        assert_eq!(
            decode_frame(&bytes).unwrap_err(),
            FrameError::UnknownType(200)
        );
    }

    #[test]
    fn oversize_rejected() {
        let mut bytes = encode_frame(&Frame {
            msg_type: MsgType::XPub,
            session_id: 0,
            payload: vec![],
        });
        bytes[14..22].copy_from_slice(&(MAX_PAYLOAD + 1).to_le_bytes());
        assert_eq!(
            decode_frame(&bytes).unwrap_err(),
            FrameError::Oversize(MAX_PAYLOAD + 1)
        );
    }

    proptest! {
        #[test]
        fn round_trip(ty in 1u8..=9, session: u64, payload in proptest::collection::vec(any::<u8>(), 0..4096)) {
            let f = Frame {
                msg_type: MsgType::from_byte(ty).unwrap(),
                session_id: session,
                payload,
            };
            prop_assert_eq!(decode_frame(&encode_frame(&f)).unwrap(), f);
        }

        #[test]
        fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
            let _ = decode_frame(&bytes);
        }
    }
}
