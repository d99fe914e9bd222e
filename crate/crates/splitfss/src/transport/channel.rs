//! Framed duplex channels: TCP between processes, an in-process loopback
//! for the single-process simulator. Both move identical frame bytes, so
//! meters agree across modes. I/O is blocking and lockstep; a channel is
//! owned by one state machine.

use super::frame::{self, decode_frame, encode_frame, Frame, MsgType, HEADER_BYTES};
use super::meter::{ByteMeter, Phase};
use crate::error::{Error, FrameError, Result};
use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{Receiver, Sender};
use std::sync::{Arc, Mutex};

pub trait Channel: Send {
    fn send(&mut self, msg_type: MsgType, payload: &[u8]) -> Result<()>;
    fn recv(&mut self) -> Result<(MsgType, Vec<u8>)>;
    fn set_phase(&mut self, phase: Phase);
    fn meter(&self) -> ByteMeter;
    /// Bind all subsequent traffic to one session id; frames carrying a
    /// different id are rejected on receive.
    fn bind_session(&mut self, session_id: u64);
    fn session_id(&self) -> u64;

    fn recv_expect(&mut self, expected: MsgType) -> Result<Vec<u8>> {
        let (ty, payload) = self.recv()?;
        if ty != expected {
            return Err(FrameError::UnexpectedType {
                expected: format!("{expected:?}"),
                got: format!("{ty:?}"),
            }
            .into());
        }
        Ok(payload)
    }
}

/// Two parties open masked values at each other: the lower party id sends
/// first, the higher receives first, so simultaneous large sends cannot
/// wedge either transport.
pub fn exchange(
    chan: &mut dyn Channel,
    party: u8,
    msg_type: MsgType,
    payload: &[u8],
) -> Result<Vec<u8>> {
    if party == 0 {
        chan.send(msg_type, payload)?;
        chan.recv_expect(msg_type)
    } else {
        let peer = chan.recv_expect(msg_type)?;
        chan.send(msg_type, payload)?;
        Ok(peer)
    }
}

fn check_session(bound: u64, got: u64) -> Result<()> {
    if bound != 0 && got != bound {
        return Err(FrameError::SessionMismatch { got, bound }.into());
    }
    Ok(())
}

// ---------------------------------------------------------------------
// loopback

pub struct LoopbackChannel {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
    meter: ByteMeter,
    phase: Phase,
    session: u64,
    /// When present, every outbound (type, payload) is recorded; used by
    /// transcript-inspection tests.
    pub sent_transcript: Option<Arc<Mutex<Vec<(MsgType, Vec<u8>)>>>>,
}

/// A connected pair of in-process channels.
pub fn loopback_pair() -> (LoopbackChannel, LoopbackChannel) {
    let (tx_a, rx_b) = std::sync::mpsc::channel();
    let (tx_b, rx_a) = std::sync::mpsc::channel();
    let mk = |tx, rx| LoopbackChannel {
        tx,
        rx,
        meter: ByteMeter::default(),
        phase: Phase::Training,
        session: 0,
        sent_transcript: None,
    };
    (mk(tx_a, rx_a), mk(tx_b, rx_b))
}

impl Channel for LoopbackChannel {
    fn send(&mut self, msg_type: MsgType, payload: &[u8]) -> Result<()> {
        let frame = Frame {
            msg_type,
            session_id: self.session,
            payload: payload.to_vec(),
        };
        let bytes = encode_frame(&frame);
        self.meter.record_sent(self.phase, bytes.len() as u64);
        if let Some(log) = &self.sent_transcript {
            log.lock().unwrap().push((msg_type, payload.to_vec()));
        }
        self.tx
            .send(bytes)
            .map_err(|_| Error::Protocol("loopback peer hung up".into()))
    }

    fn recv(&mut self) -> Result<(MsgType, Vec<u8>)> {
        let bytes = self
            .rx
            .recv()
            .map_err(|_| Error::Protocol("loopback peer hung up".into()))?;
        self.meter.record_received(self.phase, bytes.len() as u64);
        let frame = decode_frame(&bytes).map_err(Error::Frame)?;
        check_session(self.session, frame.session_id)?;
        Ok((frame.msg_type, frame.payload))
    }

    fn set_phase(&mut self, phase: Phase) {
        self.phase = phase;
    }

    fn meter(&self) -> ByteMeter {
        self.meter
    }

    fn bind_session(&mut self, session_id: u64) {
        self.session = session_id;
    }

    fn session_id(&self) -> u64 {
        self.session
    }
}

// ---------------------------------------------------------------------
// tcp

const HELLO_LEN: usize = 6;

fn hello_bytes(role: u8) -> [u8; HELLO_LEN] {
    let mut h = [0u8; HELLO_LEN];
    h[..4].copy_from_slice(&frame::MAGIC);
    h[4] = frame::VERSION;
    h[5] = role;
    h
}

fn check_hello(h: &[u8; HELLO_LEN]) -> Result<u8> {
    if h[..4] != frame::MAGIC {
        return Err(FrameError::BadMagic(h[..4].try_into().unwrap()).into());
    }
    if h[4] != frame::VERSION {
        return Err(FrameError::Version {
            got: h[4],
            expected: frame::VERSION,
        }
        .into());
    }
    Ok(h[5])
}

pub struct TcpChannel {
    stream: TcpStream,
    /// Role byte announced by the peer during the handshake.
    pub peer_role: u8,
    meter: ByteMeter,
    phase: Phase,
    session: u64,
}

impl TcpChannel {
    /// Dial a listening peer and run the magic + version handshake.
    pub fn connect<A: ToSocketAddrs>(addr: A, role: u8) -> Result<Self> {
        let stream = TcpStream::connect(addr)?;
        Self::handshake(stream, role)
    }

    /// Accept one peer on `listener` and run the handshake.
    pub fn accept(listener: &TcpListener, role: u8) -> Result<Self> {
        let (stream, _) = listener.accept()?;
        Self::handshake(stream, role)
    }

    fn handshake(stream: TcpStream, role: u8) -> Result<Self> {
        stream.set_nodelay(true)?;
        let mut stream = stream;
        stream.write_all(&hello_bytes(role))?;
        stream.flush()?;
        let mut peer = [0u8; HELLO_LEN];
        stream.read_exact(&mut peer)?;
        let peer_role = check_hello(&peer)?;
        Ok(Self {
            stream,
            peer_role,
            meter: ByteMeter::default(),
            phase: Phase::Training,
            session: 0,
        })
    }
}

impl Channel for TcpChannel {
    fn send(&mut self, msg_type: MsgType, payload: &[u8]) -> Result<()> {
        let frame = Frame {
            msg_type,
            session_id: self.session,
            payload: payload.to_vec(),
        };
        let bytes = encode_frame(&frame);
        self.meter.record_sent(self.phase, bytes.len() as u64);
        self.stream.write_all(&bytes)?;
        self.stream.flush()?;
        Ok(())
    }

    fn recv(&mut self) -> Result<(MsgType, Vec<u8>)> {
        let mut header = [0u8; HEADER_BYTES];
        self.stream.read_exact(&mut header)?;
        let (msg_type, session_id, payload_len) =
            frame::decode_header(&header).map_err(Error::Frame)?;
        let mut payload = vec![0u8; payload_len as usize];
        self.stream.read_exact(&mut payload)?;
        self.meter
            .record_received(self.phase, (HEADER_BYTES + payload.len()) as u64);
        check_session(self.session, session_id)?;
        Ok((msg_type, payload))
    }

    fn set_phase(&mut self, phase: Phase) {
        self.phase = phase;
    }

    fn meter(&self) -> ByteMeter {
        self.meter
    }

    fn bind_session(&mut self, session_id: u64) {
        self.session = session_id;
    }

    fn session_id(&self) -> u64 {
        self.session
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::thread;

    #[test]
    fn loopback_round_trip_and_meters() {
        let (mut a, mut b) = loopback_pair();
        a.send(MsgType::XPub, &[1, 2, 3]).unwrap();
        let (ty, payload) = b.recv().unwrap();
        assert_eq!(ty, MsgType::XPub);
        assert_eq!(payload, vec![1, 2, 3]);
        // conservation: a's sent equals b's received
        assert_eq!(a.meter().sent_total(), 25);
        assert_eq!(b.meter().received_total(), 25);
    }

    #[test]
    fn session_binding_rejects_stale_ids() {
        let (mut a, mut b) = loopback_pair();
        a.bind_session(42);
        b.bind_session(42);
        a.send(MsgType::GradShare, &[]).unwrap();
        b.recv().unwrap();
        // a replayed frame from a previous session carries the wrong id
        a.bind_session(41);
        a.send(MsgType::GradShare, &[]).unwrap();
        let err = b.recv().unwrap_err();
        assert!(matches!(
            err,
            Error::Frame(FrameError::SessionMismatch { got: 41, bound: 42 })
        ));
    }

    #[test]
    fn recv_expect_flags_wrong_type() {
        let (mut a, mut b) = loopback_pair();
        a.send(MsgType::LossShare, &[9]).unwrap();
        let err = b.recv_expect(MsgType::GradShare).unwrap_err();
        assert!(matches!(
            err,
            Error::Frame(FrameError::UnexpectedType { .. })
        ));
    }

    #[test]
    fn distinct_sessions_multiplex_independently() {
        let (mut a1, mut b1) = loopback_pair();
        let (mut a2, mut b2) = loopback_pair();
        a1.bind_session(1);
        b1.bind_session(1);
        a2.bind_session(2);
        b2.bind_session(2);
        a1.send(MsgType::XPub, b"one").unwrap();
        a2.send(MsgType::XPub, b"two").unwrap();
        assert_eq!(b2.recv().unwrap().1, b"two");
        assert_eq!(b1.recv().unwrap().1, b"one");
    }

    #[test]
    fn tcp_handshake_and_transfer() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = thread::spawn(move || {
            let mut chan = TcpChannel::accept(&listener, 1).unwrap();
            let (ty, payload) = chan.recv().unwrap();
            assert_eq!(ty, MsgType::KeyBlob);
            chan.send(MsgType::Metric, &payload).unwrap();
            chan.meter()
        });
        let mut client = TcpChannel::connect(addr, 0).unwrap();
        assert_eq!(client.peer_role, 1);
        let blob: Vec<u8> = (0..100_000).map(|i| (i % 251) as u8).collect();
        client.send(MsgType::KeyBlob, &blob).unwrap();
        let echoed = client.recv_expect(MsgType::Metric).unwrap();
        assert_eq!(echoed, blob);
        let server_meter = server.join().unwrap();
        assert_eq!(client.meter().sent_total(), server_meter.received_total());
        assert_eq!(client.meter().received_total(), server_meter.sent_total());
    }

    #[test]
    fn large_payload_survives_bit_exactly() {
        // 64 MiB, patterned so corruption anywhere is visible
        let payload: Vec<u8> = (0..64usize << 20)
            .map(|i| (i as u64).wrapping_mul(0x9e37_79b9).to_le_bytes()[0])
            .collect();
        let (mut a, mut b) = loopback_pair();
        a.send(MsgType::KeyBlob, &payload).unwrap();
        let (_, got) = b.recv().unwrap();
        assert_eq!(got, payload);
    }

    #[test]
    fn exchange_is_deadlock_free_both_directions() {
        let (mut a, mut b) = loopback_pair();
        let big = vec![7u8; 1 << 20];
        let big2 = big.clone();
        let t = thread::spawn(move || exchange(&mut b, 1, MsgType::XPub, &big2).unwrap());
        let from_b = exchange(&mut a, 0, MsgType::XPub, &big).unwrap();
        let from_a = t.join().unwrap();
        assert_eq!(from_a.len(), 1 << 20);
        assert_eq!(from_b.len(), 1 << 20);
    }
}
