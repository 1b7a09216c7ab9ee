//! Deterministic in-process network: every peer is a [`PeerNode`] in one
//! map, messages sit in a queue, and a seeded RNG picks delivery order.
//! The same seed always produces the same interleaving, so distributed
//! scenarios (races, drops, partitions, reorgs) replay exactly.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ledger::Block;

use super::{Message, NodeError, Payload, PeerNode};

/// Result of delivering one announce to one peer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DeliveryOutcome {
    Ack { tip_index: u64 },
    Rejected { reason: String },
    Unreachable,
}

#[derive(Debug, Clone)]
struct Envelope {
    to: String,
    message: Message,
}

/// Simulated transport owning all nodes.
pub struct SimNetwork {
    nodes: BTreeMap<String, PeerNode>,
    in_flight: Vec<Envelope>,
    rng: ChaCha8Rng,
    partitions: BTreeSet<(String, String)>,
    /// Directed links that silently eat their next N messages.
    drop_budget: BTreeMap<(String, String), u32>,
    pub delivered: u64,
    pub dropped: u64,
}

impl SimNetwork {
    pub fn new(seed: u64) -> SimNetwork {
        SimNetwork {
            nodes: BTreeMap::new(),
            in_flight: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            partitions: BTreeSet::new(),
            drop_budget: BTreeMap::new(),
            delivered: 0,
            dropped: 0,
        }
    }

    pub fn add_node(&mut self, node: PeerNode) {
        self.nodes.insert(node.config.node_id.clone(), node);
    }

    pub fn node(&self, id: &str) -> &PeerNode {
        &self.nodes[id]
    }

    pub fn node_mut(&mut self, id: &str) -> &mut PeerNode {
        self.nodes.get_mut(id).expect("known node id")
    }

    pub fn node_ids(&self) -> Vec<String> {
        self.nodes.keys().cloned().collect()
    }

    fn pair(a: &str, b: &str) -> (String, String) {
        if a <= b {
            (a.to_string(), b.to_string())
        } else {
            (b.to_string(), a.to_string())
        }
    }

    /// Cut both directions between two nodes until healed. Queued messages
    /// crossing the cut are dropped at delivery time.
    pub fn partition(&mut self, a: &str, b: &str) {
        self.partitions.insert(Self::pair(a, b));
    }

    pub fn heal(&mut self, a: &str, b: &str) {
        self.partitions.remove(&Self::pair(a, b));
    }

    /// Silently drop the next `count` messages sent from `from` to `to`.
    pub fn drop_next(&mut self, from: &str, to: &str, count: u32) {
        *self
            .drop_budget
            .entry((from.to_string(), to.to_string()))
            .or_insert(0) += count;
    }

    fn link_open(&mut self, from: &str, to: &str) -> bool {
        if self.partitions.contains(&Self::pair(from, to)) {
            return false;
        }
        if let Some(budget) = self
            .drop_budget
            .get_mut(&(from.to_string(), to.to_string()))
        {
            if *budget > 0 {
                *budget -= 1;
                return false;
            }
        }
        true
    }

    /// Queue an announce of `payload` from `origin` to every other node.
    pub fn broadcast_from(&mut self, origin: &str, payload: Payload) {
        let targets: Vec<String> = self
            .nodes
            .keys()
            .filter(|id| id.as_str() != origin)
            .cloned()
            .collect();
        for to in targets {
            self.in_flight.push(Envelope {
                to,
                message: Message::new(origin, payload.clone()),
            });
        }
    }

    /// Inject one event at a node: queue it, mine it, announce the blocks.
    pub fn originate(
        &mut self,
        node_id: &str,
        payload: Vec<u8>,
        now: u64,
    ) -> Result<(), NodeError> {
        let node = self
            .nodes
            .get_mut(node_id)
            .ok_or_else(|| NodeError::Config(format!("unknown node {node_id}")))?;
        node.enqueue_event(payload);
        let blocks = node.mine_pending(now)?;
        for block in blocks {
            self.broadcast_from(node_id, Payload::Announce(block));
        }
        Ok(())
    }

    /// Deliver one random queued message. Returns false when none remain.
    pub fn deliver_one(&mut self) -> Result<bool, NodeError> {
        if self.in_flight.is_empty() {
            return Ok(false);
        }
        let index = self.rng.random_range(0..self.in_flight.len());
        let envelope = self.in_flight.swap_remove(index);
        let from = envelope.message.sender.clone();
        let to = envelope.to.clone();
        if !self.link_open(&from, &to) {
            self.dropped += 1;
            return Ok(true);
        }
        let Some(node) = self.nodes.get_mut(&to) else {
            return Ok(true);
        };
        let result = node.handle_message(&envelope.message);
        self.delivered += 1;
        if let Some(reply) = result.reply {
            if self.nodes.contains_key(&from) {
                self.in_flight.push(Envelope {
                    to: from.clone(),
                    message: reply,
                });
            }
        }
        if result.request_chain {
            self.in_flight.push(Envelope {
                to: from,
                message: Message::new(&to, Payload::RequestChain),
            });
        }
        if result.adopted {
            // An adoption can leave this node ahead of peers that missed
            // the same gossip; re-announce the new tip.
            let tip = self.nodes[&to].chain.tip().clone();
            self.broadcast_from(&to, Payload::Announce(tip));
        }
        Ok(true)
    }

    /// Deliver until the queue drains, then let nodes re-mine whatever a
    /// reorg orphaned and announce it, repeating until nothing is queued or
    /// pending anywhere. `max_steps` caps total deliveries.
    pub fn run_to_quiescence(&mut self, now: u64, max_steps: u64) -> Result<u64, NodeError> {
        let mut steps = 0u64;
        loop {
            while self.deliver_one()? {
                steps += 1;
                if steps > max_steps {
                    return Err(NodeError::Protocol(format!(
                        "no quiescence within {max_steps} deliveries"
                    )));
                }
            }
            let ids = self.node_ids();
            let mut mined_any = false;
            for id in ids {
                let blocks = self.nodes.get_mut(&id).unwrap().mine_pending(now)?;
                for block in blocks {
                    mined_any = true;
                    self.broadcast_from(&id, Payload::Announce(block));
                }
            }
            if !mined_any && self.in_flight.is_empty() {
                return Ok(steps);
            }
        }
    }

    /// Exchange chains between two nodes and let each apply the fork rule;
    /// afterwards both hold the winner. Ignores cut links.
    pub fn sync_pair(&mut self, a: &str, b: &str) -> Result<bool, NodeError> {
        if self.partitions.contains(&Self::pair(a, b)) {
            return Ok(false);
        }
        let chain_a = self.nodes[a].chain.clone();
        let chain_b = self.nodes[b].chain.clone();
        let adopted_a = self
            .nodes
            .get_mut(a)
            .unwrap()
            .adopt_if_better(&chain_b)
            .unwrap_or(false);
        let adopted_b = self
            .nodes
            .get_mut(b)
            .unwrap()
            .adopt_if_better(&chain_a)
            .unwrap_or(false);
        Ok(adopted_a || adopted_b)
    }

    /// Pairwise anti-entropy passes until no node adopts and no payload is
    /// pending. This is the strong form of convergence used after healing
    /// partitions.
    pub fn converge(&mut self, now: u64, max_passes: u32) -> Result<(), NodeError> {
        let ids = self.node_ids();
        for _ in 0..max_passes {
            let mut changed = false;
            for i in 0..ids.len() {
                for j in (i + 1)..ids.len() {
                    changed |= self.sync_pair(&ids[i], &ids[j])?;
                }
            }
            for id in &ids {
                let blocks = self.nodes.get_mut(id).unwrap().mine_pending(now)?;
                changed |= !blocks.is_empty();
            }
            if !changed {
                return Ok(());
            }
        }
        Err(NodeError::Protocol(format!(
            "no convergence within {max_passes} anti-entropy passes"
        )))
    }

    /// Synchronously announce a block to every peer of `origin`, collecting
    /// one outcome per peer in node-id order. Peers that see a fork or gap
    /// immediately run the chain exchange against the origin.
    pub fn broadcast_block_sync(
        &mut self,
        origin: &str,
        block: &Block,
    ) -> Result<Vec<(String, DeliveryOutcome)>, NodeError> {
        let peers: Vec<String> = self
            .nodes
            .keys()
            .filter(|id| id.as_str() != origin)
            .cloned()
            .collect();
        let mut outcomes = Vec::new();
        for peer in peers {
            if self.partitions.contains(&Self::pair(origin, &peer)) {
                outcomes.push((peer, DeliveryOutcome::Unreachable));
                continue;
            }
            let announce = Message::new(origin, Payload::Announce(block.clone()));
            let result = self.nodes.get_mut(&peer).unwrap().handle_message(&announce);
            let outcome = match result.reply.map(|m| m.payload) {
                Some(Payload::Ack { tip_index }) => DeliveryOutcome::Ack { tip_index },
                Some(Payload::Reject { reason }) => DeliveryOutcome::Rejected { reason },
                _ => DeliveryOutcome::Rejected {
                    reason: "no reply".into(),
                },
            };
            if result.request_chain {
                self.sync_pair(origin, &peer)?;
            }
            outcomes.push((peer, outcome));
        }
        Ok(outcomes)
    }

    /// True when every node holds byte-identical chain serialization.
    pub fn chains_identical(&self) -> Result<bool, NodeError> {
        let mut bytes: Option<Vec<u8>> = None;
        for node in self.nodes.values() {
            let current = node.chain_bytes()?;
            match &bytes {
                None => bytes = Some(current),
                Some(first) if *first != current => return Ok(false),
                Some(_) => {}
            }
        }
        Ok(true)
    }
}
