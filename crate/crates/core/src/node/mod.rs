//! Peer replication of the ledger.
//!
//! Nodes gossip freshly mined blocks, and any disagreement falls back to a
//! full-chain exchange resolved by one deterministic rule: the longer valid
//! chain wins, with the lexicographically smaller tip hash breaking length
//! ties. Orphaned payloads from an abandoned branch are re-queued and mined
//! again on the adopted chain, so no event is lost in a reorg.
//!
//! Messages are length-prefixed JSON: a 4-byte big-endian frame length
//! followed by one UTF-8 JSON object. Only senders on the static authorized
//! node list are honored; everyone else gets a rejection and no state
//! change, which is what keeps the chain private.
//!
//! Two interchangeable backends drive the same [`PeerNode`] logic: an
//! in-process [`sim::SimNetwork`] with seeded delivery order, scripted
//! drops, and partitions, and a [`tcp`] backend over `std::net` threads.

pub mod sim;
pub mod tcp;

use std::collections::{BTreeSet, VecDeque};
use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::{self, mine_block, Block, Chain, LedgerError};

/// Wire protocol version; peers reject anything else.
pub const PROTOCOL_VERSION: u32 = 1;
/// Upper bound on a single frame, to keep a bad length prefix from
/// allocating the moon.
pub const MAX_FRAME_BYTES: u32 = 64 * 1024 * 1024;

#[derive(Debug, Error)]
pub enum NodeError {
    #[error("config error: {0}")]
    Config(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("unauthorized sender {0}")]
    Unauthorized(String),
    #[error("remote chain invalid at index {index}: {reason}")]
    InvalidRemote { index: u64, reason: String },
    #[error("frame too large: {0} bytes")]
    FrameTooLarge(u32),
    #[error("peer unreachable: {0}")]
    Unreachable(String),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

/// Static identity and peer book for one node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeerConfig {
    pub node_id: String,
    pub listen_address: String,
    #[serde(default)]
    pub peer_addresses: Vec<String>,
    pub authorized_nodes: BTreeSet<String>,
}

impl PeerConfig {
    pub fn load(path: &Path) -> Result<PeerConfig, NodeError> {
        let text = fs::read_to_string(path)?;
        let config: PeerConfig =
            serde_json::from_str(&text).map_err(|e| NodeError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), NodeError> {
        if self.node_id.is_empty() {
            return Err(NodeError::Config("node_id must be non-empty".into()));
        }
        if !self.authorized_nodes.contains(&self.node_id) {
            return Err(NodeError::Config(format!(
                "node_id {} missing from authorized_nodes",
                self.node_id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "body", rename_all = "snake_case")]
pub enum Payload {
    /// A freshly mined block for peers to append.
    Announce(Block),
    /// Ask the peer for its full chain.
    RequestChain,
    /// Full chain, sent in reply to `RequestChain`.
    ChainResponse(Chain),
    /// The sender accepted an announced block at this tip.
    Ack { tip_index: u64 },
    /// The sender refused a message.
    Reject { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Message {
    pub version: u32,
    pub sender: String,
    #[serde(flatten)]
    pub payload: Payload,
}

impl Message {
    pub fn new(sender: &str, payload: Payload) -> Message {
        Message {
            version: PROTOCOL_VERSION,
            sender: sender.to_string(),
            payload,
        }
    }
}

/// Frame a message: 4-byte big-endian length, then the JSON bytes.
pub fn encode_message(message: &Message) -> Result<Vec<u8>, NodeError> {
    let body = serde_json::to_vec(message).map_err(|e| NodeError::Protocol(e.to_string()))?;
    let len = u32::try_from(body.len())
        .map_err(|_| NodeError::FrameTooLarge(u32::MAX))?;
    if len > MAX_FRAME_BYTES {
        return Err(NodeError::FrameTooLarge(len));
    }
    let mut out = Vec::with_capacity(4 + body.len());
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(&body);
    Ok(out)
}

pub fn write_message<W: Write>(writer: &mut W, message: &Message) -> Result<(), NodeError> {
    let bytes = encode_message(message)?;
    writer.write_all(&bytes)?;
    writer.flush()?;
    Ok(())
}

/// Read one framed message; `Ok(None)` on clean EOF before a frame starts.
pub fn read_message<R: Read>(reader: &mut R) -> Result<Option<Message>, NodeError> {
    let mut len_buf = [0u8; 4];
    match reader.read_exact(&mut len_buf) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_be_bytes(len_buf);
    if len > MAX_FRAME_BYTES {
        return Err(NodeError::FrameTooLarge(len));
    }
    let mut body = vec![0u8; len as usize];
    reader.read_exact(&mut body)?;
    let message: Message =
        serde_json::from_slice(&body).map_err(|e| NodeError::Protocol(e.to_string()))?;
    if message.version != PROTOCOL_VERSION {
        return Err(NodeError::Protocol(format!(
            "unsupported protocol version {}",
            message.version
        )));
    }
    Ok(Some(message))
}

/// Which side a fork resolution kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForkChoice {
    KeepLocal,
    AdoptRemote,
}

/// Deterministic fork rule over two independently valid chains sharing a
/// genesis, difficulty, and salt: longer wins; equal length goes to the
/// lexicographically smaller tip hash; identical tips keep local. Symmetric
/// by construction: both sides of a fork pick the same winner.
pub fn resolve_fork(local: &Chain, remote: &Chain) -> Result<ForkChoice, NodeError> {
    let local_report = local.validate()?;
    if let (Some(index), Some(reason)) = (local_report.first_bad_index, local_report.reason) {
        return Err(NodeError::Protocol(format!(
            "local chain invalid at index {index}: {reason}"
        )));
    }
    let remote_report = remote.validate()?;
    if let (Some(index), Some(reason)) = (remote_report.first_bad_index, remote_report.reason) {
        return Err(NodeError::InvalidRemote {
            index,
            reason: reason.to_string(),
        });
    }
    if local.difficulty != remote.difficulty
        || local.chain_salt != remote.chain_salt
        || local.blocks[0] != remote.blocks[0]
    {
        return Err(NodeError::Protocol(
            "remote chain has a different genesis identity".into(),
        ));
    }
    if remote.len() > local.len() {
        return Ok(ForkChoice::AdoptRemote);
    }
    if remote.len() < local.len() {
        return Ok(ForkChoice::KeepLocal);
    }
    if remote.tip().hash < local.tip().hash {
        return Ok(ForkChoice::AdoptRemote);
    }
    Ok(ForkChoice::KeepLocal)
}

/// What `handle_message` wants the transport to do next.
#[derive(Debug, Default)]
pub struct HandleResult {
    /// Reply to send back to the sender, if any.
    pub reply: Option<Message>,
    /// The handler wants the sender's full chain (gap or conflict seen).
    pub request_chain: bool,
    /// A remote chain was adopted during this call.
    pub adopted: bool,
    /// The local chain changed (append or adoption): persist and/or gossip.
    pub chain_changed: bool,
}

/// Node logic shared by the simulated and TCP transports: owns the chain,
/// the authorization check, and the queue of payloads awaiting (re)mining.
#[derive(Debug, Clone)]
pub struct PeerNode {
    pub config: PeerConfig,
    pub chain: Chain,
    /// Event payloads not yet on the chain, oldest first. Fed by
    /// `enqueue_event` and by reorgs orphaning local blocks.
    pending: VecDeque<Vec<u8>>,
}

impl PeerNode {
    pub fn new(config: PeerConfig, chain: Chain) -> PeerNode {
        PeerNode {
            config,
            chain,
            pending: VecDeque::new(),
        }
    }

    pub fn authorized(&self, sender: &str) -> bool {
        self.config.authorized_nodes.contains(sender)
    }

    pub fn pending_count(&self) -> usize {
        self.pending.len()
    }

    /// Queue a locally originated event payload for mining.
    pub fn enqueue_event(&mut self, payload: Vec<u8>) {
        self.pending.push_back(payload);
    }

    /// Mine every queued payload onto the current tip, returning the new
    /// blocks for the transport to announce. Payloads the chain already
    /// carries are dropped, not re-mined: a queued event can land via a
    /// peer's block between enqueue and mine.
    pub fn mine_pending(&mut self, now: u64) -> Result<Vec<Block>, NodeError> {
        let mut mined = Vec::new();
        let mut on_chain: BTreeSet<Vec<u8>> = self.chain.blocks[1..]
            .iter()
            .map(|b| b.payload.clone())
            .collect();
        while let Some(payload) = self.pending.pop_front() {
            if on_chain.contains(&payload) {
                continue;
            }
            let (block, _) = mine_block(self.chain.tip(), payload, self.chain.difficulty, now)?;
            on_chain.insert(block.payload.clone());
            self.chain.append(block.clone())?;
            mined.push(block);
        }
        Ok(mined)
    }

    fn reject(&self, reason: &str) -> Message {
        Message::new(
            &self.config.node_id,
            Payload::Reject {
                reason: reason.to_string(),
            },
        )
    }

    /// Dispatch one inbound message. Unauthorized senders are rejected
    /// before any payload inspection and never change state.
    pub fn handle_message(&mut self, message: &Message) -> HandleResult {
        if !self.authorized(&message.sender) {
            return HandleResult {
                reply: Some(self.reject("unauthorized")),
                ..HandleResult::default()
            };
        }
        match &message.payload {
            Payload::Announce(block) => self.handle_announce(block),
            Payload::RequestChain => HandleResult {
                reply: Some(Message::new(
                    &self.config.node_id,
                    Payload::ChainResponse(self.chain.clone()),
                )),
                ..HandleResult::default()
            },
            Payload::ChainResponse(remote) => self.handle_chain_response(remote),
            Payload::Ack { .. } | Payload::Reject { .. } => HandleResult::default(),
        }
    }

    /// An announced block either extends the tip (append, ack), repeats a
    /// block already on the chain (ack, idempotent gossip), or signals a
    /// fork or gap (reject and ask for the sender's chain).
    pub fn handle_announce(&mut self, block: &Block) -> HandleResult {
        let tip_index = self.chain.tip().index;
        if block.index == tip_index + 1 {
            match self.chain.append(block.clone()) {
                Ok(()) => HandleResult {
                    reply: Some(Message::new(
                        &self.config.node_id,
                        Payload::Ack {
                            tip_index: self.chain.tip().index,
                        },
                    )),
                    chain_changed: true,
                    ..HandleResult::default()
                },
                Err(e) => HandleResult {
                    reply: Some(self.reject(&e.to_string())),
                    request_chain: true,
                    ..HandleResult::default()
                },
            }
        } else if block.index > tip_index + 1 {
            HandleResult {
                reply: Some(self.reject(&format!(
                    "gap: announced index {} but tip is {tip_index}",
                    block.index
                ))),
                request_chain: true,
                ..HandleResult::default()
            }
        } else if self
            .chain
            .blocks
            .get(block.index as usize)
            .is_some_and(|known| known == block)
        {
            HandleResult {
                reply: Some(Message::new(
                    &self.config.node_id,
                    Payload::Ack { tip_index },
                )),
                ..HandleResult::default()
            }
        } else {
            HandleResult {
                reply: Some(self.reject(&format!(
                    "conflicting block at index {}",
                    block.index
                ))),
                request_chain: true,
                ..HandleResult::default()
            }
        }
    }

    /// Run the fork rule against a received chain; on adoption, orphaned
    /// local payloads go back on the mining queue.
    pub fn handle_chain_response(&mut self, remote: &Chain) -> HandleResult {
        match self.adopt_if_better(remote) {
            Ok(true) => HandleResult {
                adopted: true,
                chain_changed: true,
                ..HandleResult::default()
            },
            Ok(false) => HandleResult::default(),
            Err(_) => HandleResult::default(),
        }
    }

    /// Apply `resolve_fork`; returns whether the remote chain was adopted.
    pub fn adopt_if_better(&mut self, remote: &Chain) -> Result<bool, NodeError> {
        match resolve_fork(&self.chain, remote)? {
            ForkChoice::KeepLocal => Ok(false),
            ForkChoice::AdoptRemote => {
                let adopted_payloads: BTreeSet<&[u8]> = remote.blocks[1..]
                    .iter()
                    .map(|b| b.payload.as_slice())
                    .collect();
                let orphaned: Vec<Vec<u8>> = self.chain.blocks[1..]
                    .iter()
                    .map(|b| &b.payload)
                    .filter(|p| !adopted_payloads.contains(p.as_slice()))
                    .cloned()
                    .collect();
                self.pending
                    .retain(|p| !adopted_payloads.contains(p.as_slice()));
                for payload in orphaned.into_iter().rev() {
                    if !self.pending.contains(&payload) {
                        self.pending.push_front(payload);
                    }
                }
                self.chain = remote.clone();
                Ok(true)
            }
        }
    }

    /// Serialized chain bytes, used to compare replicas for byte identity.
    pub fn chain_bytes(&self) -> Result<Vec<u8>, NodeError> {
        Ok(ledger::chain_to_bytes(&self.chain)?)
    }
}
