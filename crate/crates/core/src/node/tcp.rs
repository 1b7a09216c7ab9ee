//! TCP transport for [`PeerNode`]: a blocking accept loop plus outbound
//! helpers for announcing blocks and anti-entropy chain sync.
//!
//! The serve loop handles one connection at a time, so all chain updates on
//! a node happen on a single thread and never race. Outbound exchanges are
//! symmetric within one connection: a node that pulls a peer's chain and
//! finds its own better pushes the better chain straight back, so either
//! side of any exchange ends on the fork-rule winner without needing to
//! dial anyone back.

use std::io;
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use crate::ledger::{save_chain, Block};

use super::sim::DeliveryOutcome;
use super::{read_message, write_message, Message, NodeError, Payload, PeerNode};

pub const CONNECT_TIMEOUT: Duration = Duration::from_secs(1);
pub const IO_TIMEOUT: Duration = Duration::from_secs(5);
/// Connection attempts per peer before reporting it unreachable.
pub const SYNC_ATTEMPTS: u32 = 3;
const RETRY_DELAY: Duration = Duration::from_millis(200);
const ACCEPT_POLL: Duration = Duration::from_millis(25);

pub fn wall_clock_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .expect("clock after epoch")
        .as_millis() as u64
}

fn connect(address: &str) -> Result<TcpStream, NodeError> {
    let mut last = None;
    let addrs = address
        .to_socket_addrs()
        .map_err(|e| NodeError::Unreachable(format!("{address}: {e}")))?;
    for addr in addrs {
        match TcpStream::connect_timeout(&addr, CONNECT_TIMEOUT) {
            Ok(stream) => {
                stream.set_read_timeout(Some(IO_TIMEOUT))?;
                stream.set_write_timeout(Some(IO_TIMEOUT))?;
                return Ok(stream);
            }
            Err(e) => last = Some(e),
        }
    }
    Err(NodeError::Unreachable(format!(
        "{address}: {}",
        last.map_or_else(|| "no addresses resolved".to_string(), |e| e.to_string())
    )))
}

fn connect_with_retries(address: &str) -> Result<TcpStream, NodeError> {
    let mut last = None;
    for attempt in 0..SYNC_ATTEMPTS {
        match connect(address) {
            Ok(stream) => return Ok(stream),
            Err(e) => {
                last = Some(e);
                if attempt + 1 < SYNC_ATTEMPTS {
                    thread::sleep(RETRY_DELAY);
                }
            }
        }
    }
    Err(last.expect("at least one attempt"))
}

/// Pull the peer's chain and converge the pair: adopt theirs if the fork
/// rule prefers it, otherwise push ours back when the chains differ.
/// Returns whether the local chain changed.
pub fn sync_with(node: &Arc<Mutex<PeerNode>>, address: &str) -> Result<bool, NodeError> {
    let mut stream = connect_with_retries(address)?;
    let node_id = node.lock().expect("node lock").config.node_id.clone();
    write_message(&mut stream, &Message::new(&node_id, Payload::RequestChain))?;
    let reply = read_message(&mut stream)?
        .ok_or_else(|| NodeError::Protocol("peer closed before replying".into()))?;
    let remote = match reply.payload {
        Payload::ChainResponse(chain) => chain,
        Payload::Reject { reason } => return Err(NodeError::Protocol(reason)),
        other => {
            return Err(NodeError::Protocol(format!(
                "expected chain response, got {other:?}"
            )))
        }
    };
    let mut guard = node.lock().expect("node lock");
    let adopted = guard.adopt_if_better(&remote)?;
    if !adopted && guard.chain != remote {
        let push = Message::new(&node_id, Payload::ChainResponse(guard.chain.clone()));
        drop(guard);
        write_message(&mut stream, &push)?;
    }
    Ok(adopted)
}

/// Announce one block to a peer. A rejection (gap or fork) is repaired on
/// the same connection: push our chain, pull theirs, adopt the winner.
pub fn announce_block(
    node: &Arc<Mutex<PeerNode>>,
    address: &str,
    block: &Block,
) -> Result<DeliveryOutcome, NodeError> {
    let mut stream = match connect_with_retries(address) {
        Ok(stream) => stream,
        Err(NodeError::Unreachable(_)) => return Ok(DeliveryOutcome::Unreachable),
        Err(e) => return Err(e),
    };
    let node_id = node.lock().expect("node lock").config.node_id.clone();
    write_message(
        &mut stream,
        &Message::new(&node_id, Payload::Announce(block.clone())),
    )?;
    let reply = read_message(&mut stream)?
        .ok_or_else(|| NodeError::Protocol("peer closed before replying".into()))?;
    match reply.payload {
        Payload::Ack { tip_index } => Ok(DeliveryOutcome::Ack { tip_index }),
        Payload::Reject { reason } => {
            if reason != "unauthorized" {
                let chain = node.lock().expect("node lock").chain.clone();
                write_message(&mut stream, &Message::new(&node_id, Payload::ChainResponse(chain)))?;
                drop(stream);
                let _ = sync_with(node, address);
            }
            Ok(DeliveryOutcome::Rejected { reason })
        }
        other => Err(NodeError::Protocol(format!(
            "unexpected announce reply {other:?}"
        ))),
    }
}

/// Announce a block to every configured peer, one outcome per address.
pub fn broadcast_block(
    node: &Arc<Mutex<PeerNode>>,
    block: &Block,
) -> Vec<(String, DeliveryOutcome)> {
    let addresses = node.lock().expect("node lock").config.peer_addresses.clone();
    addresses
        .into_iter()
        .map(|address| {
            let outcome = announce_block(node, &address, block)
                .unwrap_or_else(|e| DeliveryOutcome::Rejected {
                    reason: e.to_string(),
                });
            (address, outcome)
        })
        .collect()
}

/// Persist the chain if a path is configured; errors are returned so the
/// caller can surface them.
fn persist(node: &Arc<Mutex<PeerNode>>, chain_path: &Option<PathBuf>) -> Result<(), NodeError> {
    if let Some(path) = chain_path {
        let guard = node.lock().expect("node lock");
        save_chain(&guard.chain, path)?;
    }
    Ok(())
}

fn handle_connection(
    node: &Arc<Mutex<PeerNode>>,
    mut stream: TcpStream,
    chain_path: &Option<PathBuf>,
) -> Result<(), NodeError> {
    stream.set_read_timeout(Some(IO_TIMEOUT))?;
    stream.set_write_timeout(Some(IO_TIMEOUT))?;
    while let Some(message) = read_message(&mut stream)? {
        let result = {
            let mut guard = node.lock().expect("node lock");
            guard.handle_message(&message)
        };
        if let Some(reply) = &result.reply {
            write_message(&mut stream, reply)?;
        }
        if result.chain_changed {
            persist(node, chain_path)?;
        }
        // A reorg may have orphaned local payloads: mine them back in and
        // tell the peers.
        let mined = {
            let mut guard = node.lock().expect("node lock");
            if guard.pending_count() > 0 {
                guard.mine_pending(wall_clock_ms())?
            } else {
                Vec::new()
            }
        };
        if !mined.is_empty() {
            persist(node, chain_path)?;
            for block in &mined {
                for (_, _outcome) in broadcast_block(node, block) {}
            }
        }
    }
    Ok(())
}

/// Accept loop: serves until `running` goes false. Connections are handled
/// serially so chain updates stay single-threaded.
pub fn serve(
    node: Arc<Mutex<PeerNode>>,
    listener: TcpListener,
    running: Arc<AtomicBool>,
    chain_path: Option<PathBuf>,
) -> Result<(), NodeError> {
    listener.set_nonblocking(true)?;
    while running.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                stream.set_nonblocking(false)?;
                if let Err(e) = handle_connection(&node, stream, &chain_path) {
                    eprintln!("connection error: {e}");
                }
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(ACCEPT_POLL),
            Err(e) => return Err(e.into()),
        }
    }
    persist(&node, &chain_path)?;
    Ok(())
}

/// Startup reconciliation: sync with every configured peer, tolerating the
/// unreachable ones. Returns (synced, unreachable) address lists.
pub fn sync_all(node: &Arc<Mutex<PeerNode>>) -> (Vec<String>, Vec<String>) {
    let addresses = node.lock().expect("node lock").config.peer_addresses.clone();
    let mut synced = Vec::new();
    let mut unreachable = Vec::new();
    for address in addresses {
        match sync_with(node, &address) {
            Ok(_) => synced.push(address),
            Err(NodeError::Unreachable(_)) => unreachable.push(address),
            Err(e) => {
                eprintln!("sync with {address} failed: {e}");
                unreachable.push(address);
            }
        }
    }
    (synced, unreachable)
}
