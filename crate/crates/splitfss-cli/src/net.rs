//! Multi-process wiring: who listens, who dials, and how the accepted
//! connections are told apart (by the role byte in the transport
//! handshake).

use splitfss::transport::TcpChannel;
use splitfss::{Error, Result};
use std::collections::HashMap;
use std::net::TcpListener;
use std::time::{Duration, Instant};

pub const ROLE_CLIENT: u8 = 0;
pub const ROLE_SERVER0: u8 = 1;
pub const ROLE_SERVER1: u8 = 2;
pub const ROLE_DEALER: u8 = 3;

/// Dial with retries so role startup order does not matter.
pub fn connect_retry(addr: &str, own_role: u8) -> Result<TcpChannel> {
    let deadline = Instant::now() + Duration::from_secs(30);
    loop {
        match TcpChannel::connect(addr, own_role) {
            Ok(c) => return Ok(c),
            Err(_) if Instant::now() < deadline => {
                std::thread::sleep(Duration::from_millis(200));
            }
            Err(e) => {
                return Err(Error::Protocol(format!("cannot reach {addr}: {e}")));
            }
        }
    }
}

/// Accept `expected` peers and index them by announced role.
pub fn accept_roles(
    listener: &TcpListener,
    own_role: u8,
    expected: &[u8],
) -> Result<HashMap<u8, TcpChannel>> {
    let mut out = HashMap::new();
    while out.len() < expected.len() {
        let chan = TcpChannel::accept(listener, own_role)?;
        let role = chan.peer_role;
        if !expected.contains(&role) || out.contains_key(&role) {
            return Err(Error::Protocol(format!(
                "unexpected connection from role {role}"
            )));
        }
        out.insert(role, chan);
    }
    Ok(out)
}
