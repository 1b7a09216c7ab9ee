//! Append-only proof-of-work ledger.
//!
//! A block commits to its position, timestamp, parent hash, payload digest,
//! and nonce through a SHA-256 over a canonical preimage:
//!
//! ```text
//! {index}|{timestamp}|{prev_hash}|{payload_digest}|{nonce}
//! ```
//!
//! with integers in decimal and hashes as 64 lowercase hex characters. A
//! block is mined by scanning nonces from zero until the hash starts with
//! `difficulty` hex zeros, so each extra unit of difficulty multiplies the
//! expected work by 16.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::time::Instant;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Hex characters in a rendered SHA-256 hash.
pub const HASH_HEX_LEN: usize = 64;

/// Hardest allowed difficulty: a full 64-char prefix cannot be exceeded,
/// and anything past 16 is unreachable in practice anyway.
pub const MAX_DIFFICULTY: u8 = 16;

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("input error: {0}")]
    InvalidHex(String),
    #[error("difficulty {0} out of range 0..={MAX_DIFFICULTY}")]
    DifficultyOutOfRange(u8),
    #[error("mining failure: nonce space exhausted")]
    NonceExhausted,
    #[error("structural error: chain has no blocks")]
    EmptyChain,
    #[error("rejected block {index}: {reason}")]
    Rejected { index: u64, reason: FailureReason },
    #[error("integrity error at block {index}: {reason}")]
    Integrity { index: u64, reason: FailureReason },
    #[error("load error at line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("bench budget exceeded: projected {projected_secs:.1}s over budget {budget_secs}s")]
    BudgetExceeded { projected_secs: f64, budget_secs: u64 },
    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

/// Why a block or chain failed verification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    GenesisMismatch,
    IndexDiscontinuity,
    DuplicateIndex,
    LinkageBreak,
    TimestampRegression,
    HashMismatch,
    InsufficientDifficulty,
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let text = match self {
            FailureReason::GenesisMismatch => "genesis mismatch",
            FailureReason::IndexDiscontinuity => "index discontinuity",
            FailureReason::DuplicateIndex => "duplicate index",
            FailureReason::LinkageBreak => "linkage break",
            FailureReason::TimestampRegression => "timestamp regression",
            FailureReason::HashMismatch => "hash mismatch",
            FailureReason::InsufficientDifficulty => "insufficient difficulty",
        };
        f.write_str(text)
    }
}

/// SHA-256 digest rendered as 64 lowercase hex characters on the wire.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Hash256([u8; 32]);

impl Hash256 {
    pub const ZERO: Hash256 = Hash256([0; 32]);

    pub fn digest(bytes: &[u8]) -> Hash256 {
        Hash256(Sha256::digest(bytes).into())
    }

    pub fn from_bytes(bytes: [u8; 32]) -> Hash256 {
        Hash256(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(self) -> String {
        hex::encode(self.0)
    }

    /// Strict parse: exactly 64 chars of `[0-9a-f]`, uppercase rejected.
    pub fn parse(s: &str) -> Result<Hash256, LedgerError> {
        if s.len() != HASH_HEX_LEN || !s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)) {
            return Err(LedgerError::InvalidHex(format!(
                "expected {HASH_HEX_LEN} lowercase hex chars, got {s:?}"
            )));
        }
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out)
            .map_err(|e| LedgerError::InvalidHex(e.to_string()))?;
        Ok(Hash256(out))
    }

    /// Leading zero hex characters (nibbles) of the rendered hash.
    pub fn leading_zeros(&self) -> u32 {
        let mut count = 0;
        for byte in self.0 {
            if byte == 0 {
                count += 2;
            } else if byte < 0x10 {
                count += 1;
                break;
            } else {
                break;
            }
        }
        count
    }

    pub fn meets(&self, difficulty: Difficulty) -> bool {
        self.leading_zeros() >= u32::from(difficulty.prefix())
    }
}

impl fmt::Display for Hash256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Hash256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Hash256({})", self.to_hex())
    }
}

impl std::str::FromStr for Hash256 {
    type Err = LedgerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Hash256::parse(s)
    }
}

impl Serialize for Hash256 {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Hash256 {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Hash256::parse(&s).map_err(D::Error::custom)
    }
}

/// Required count of leading zero hex characters, capped at 16.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Difficulty(u8);

impl Difficulty {
    pub fn new(prefix: u8) -> Result<Difficulty, LedgerError> {
        if prefix > MAX_DIFFICULTY {
            return Err(LedgerError::DifficultyOutOfRange(prefix));
        }
        Ok(Difficulty(prefix))
    }

    pub fn prefix(self) -> u8 {
        self.0
    }
}

impl TryFrom<u8> for Difficulty {
    type Error = String;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        Difficulty::new(value).map_err(|e| e.to_string())
    }
}

impl From<Difficulty> for u8 {
    fn from(d: Difficulty) -> u8 {
        d.0
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

mod b64_bytes {
    use super::*;

    pub fn serialize<S: Serializer>(bytes: &[u8], serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&BASE64.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(deserializer)?;
        BASE64.decode(s.as_bytes()).map_err(D::Error::custom)
    }
}

mod b64_salt {
    use super::*;

    pub fn serialize<S: Serializer>(salt: &[u8; 32], serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&BASE64.encode(salt))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<[u8; 32], D::Error> {
        let s = String::deserialize(deserializer)?;
        let raw = BASE64.decode(s.as_bytes()).map_err(D::Error::custom)?;
        <[u8; 32]>::try_from(raw.as_slice())
            .map_err(|_| D::Error::custom("chain_salt must decode to 32 bytes"))
    }
}

/// One ledger entry. `payload` is an opaque byte sequence; the header binds
/// it through `payload_digest`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Block {
    pub index: u64,
    pub timestamp: u64,
    pub prev_hash: Hash256,
    pub payload_digest: Hash256,
    #[serde(with = "b64_bytes")]
    pub payload: Vec<u8>,
    pub nonce: u64,
    pub hash: Hash256,
}

/// Hash over the canonical preimage; deterministic for equal inputs.
pub fn compute_hash(
    index: u64,
    timestamp: u64,
    prev_hash: &Hash256,
    payload_digest: &Hash256,
    nonce: u64,
) -> Hash256 {
    let preimage = format!("{index}|{timestamp}|{prev_hash}|{payload_digest}|{nonce}");
    Hash256::digest(preimage.as_bytes())
}

/// The fixed first block: index 0, timestamp 0, zero parent, empty payload,
/// nonce 0. Exempt from the difficulty rule.
pub fn genesis() -> Block {
    let payload_digest = Hash256::digest(&[]);
    let hash = compute_hash(0, 0, &Hash256::ZERO, &payload_digest, 0);
    Block {
        index: 0,
        timestamp: 0,
        prev_hash: Hash256::ZERO,
        payload_digest,
        payload: Vec::new(),
        nonce: 0,
        hash,
    }
}

/// Scan nonces from 0 upward until the block hash meets `difficulty`.
/// Returns the block and the number of hash attempts. The timestamp is
/// `now`, clamped up to the tip's timestamp so the chain never regresses.
pub fn mine_block(
    tip: &Block,
    payload: Vec<u8>,
    difficulty: Difficulty,
    now: u64,
) -> Result<(Block, u64), LedgerError> {
    let index = tip.index + 1;
    let timestamp = now.max(tip.timestamp);
    let payload_digest = Hash256::digest(&payload);
    let mut nonce: u64 = 0;
    let mut tries: u64 = 0;
    loop {
        let hash = compute_hash(index, timestamp, &tip.hash, &payload_digest, nonce);
        tries += 1;
        if hash.meets(difficulty) {
            let block = Block {
                index,
                timestamp,
                prev_hash: tip.hash,
                payload_digest,
                payload,
                nonce,
                hash,
            };
            return Ok((block, tries));
        }
        nonce = nonce.checked_add(1).ok_or(LedgerError::NonceExhausted)?;
    }
}

/// A difficulty, a pseudonym salt, and the block sequence starting at genesis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chain {
    pub difficulty: Difficulty,
    #[serde(with = "b64_salt")]
    pub chain_salt: [u8; 32],
    pub blocks: Vec<Block>,
}

impl Chain {
    pub fn new(difficulty: Difficulty, chain_salt: [u8; 32]) -> Chain {
        Chain {
            difficulty,
            chain_salt,
            blocks: vec![genesis()],
        }
    }

    pub fn tip(&self) -> &Block {
        self.blocks.last().expect("chain holds at least genesis")
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Mine a payload on the current tip and append it.
    pub fn mine_and_append(&mut self, payload: Vec<u8>, now: u64) -> Result<u64, LedgerError> {
        let (block, tries) = mine_block(self.tip(), payload, self.difficulty, now)?;
        self.append(block)?;
        Ok(tries)
    }

    pub fn append(&mut self, block: Block) -> Result<(), LedgerError> {
        append_block(self, block)
    }

    pub fn validate(&self) -> Result<ValidationReport, LedgerError> {
        validate_chain(self)
    }
}

/// Outcome of a full-chain verification walk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValidationReport {
    pub valid: bool,
    pub first_bad_index: Option<u64>,
    pub reason: Option<FailureReason>,
}

impl ValidationReport {
    fn ok() -> ValidationReport {
        ValidationReport {
            valid: true,
            first_bad_index: None,
            reason: None,
        }
    }

    fn invalid(index: u64, reason: FailureReason) -> ValidationReport {
        ValidationReport {
            valid: false,
            first_bad_index: Some(index),
            reason: Some(reason),
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.first_bad_index, self.reason) {
            (Some(i), Some(r)) => write!(f, "invalid at block {i}: {r}"),
            _ => f.write_str("valid"),
        }
    }
}

fn verify_block(block: &Block, prev: &Block, difficulty: Difficulty) -> Option<FailureReason> {
    if block.index != prev.index + 1 {
        return Some(FailureReason::IndexDiscontinuity);
    }
    if block.prev_hash != prev.hash {
        return Some(FailureReason::LinkageBreak);
    }
    if Hash256::digest(&block.payload) != block.payload_digest {
        return Some(FailureReason::HashMismatch);
    }
    let expected = compute_hash(
        block.index,
        block.timestamp,
        &block.prev_hash,
        &block.payload_digest,
        block.nonce,
    );
    if expected != block.hash {
        return Some(FailureReason::HashMismatch);
    }
    if !block.hash.meets(difficulty) {
        return Some(FailureReason::InsufficientDifficulty);
    }
    if block.timestamp < prev.timestamp {
        return Some(FailureReason::TimestampRegression);
    }
    None
}

/// Walk the whole chain and report the first offense, if any. An empty
/// chain is a structural error, not an invalid report.
pub fn validate_chain(chain: &Chain) -> Result<ValidationReport, LedgerError> {
    if chain.blocks.is_empty() {
        return Err(LedgerError::EmptyChain);
    }
    if chain.blocks[0] != genesis() {
        return Ok(ValidationReport::invalid(0, FailureReason::GenesisMismatch));
    }
    for i in 1..chain.blocks.len() {
        if let Some(reason) = verify_block(&chain.blocks[i], &chain.blocks[i - 1], chain.difficulty)
        {
            return Ok(ValidationReport::invalid(chain.blocks[i].index, reason));
        }
    }
    Ok(ValidationReport::ok())
}

/// Verify a candidate block against the tip and append it.
pub fn append_block(chain: &mut Chain, block: Block) -> Result<(), LedgerError> {
    let tip = chain.tip();
    if block.index <= tip.index {
        return Err(LedgerError::Rejected {
            index: block.index,
            reason: FailureReason::DuplicateIndex,
        });
    }
    if let Some(reason) = verify_block(&block, tip, chain.difficulty) {
        return Err(LedgerError::Rejected {
            index: block.index,
            reason,
        });
    }
    chain.blocks.push(block);
    Ok(())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainHeader {
    difficulty: Difficulty,
    chain_salt: String,
    checksum: String,
}

fn header_checksum(difficulty: Difficulty, salt_b64: &str) -> String {
    Hash256::digest(format!("{}|{salt_b64}", difficulty.prefix()).as_bytes()).to_hex()
}

/// Serialize a chain in the line-delimited file format: one header line
/// (difficulty, salt, header checksum) followed by one JSON object per block.
pub fn write_chain<W: Write>(chain: &Chain, mut w: W) -> Result<(), LedgerError> {
    let salt_b64 = BASE64.encode(chain.chain_salt);
    let header = ChainHeader {
        difficulty: chain.difficulty,
        checksum: header_checksum(chain.difficulty, &salt_b64),
        chain_salt: salt_b64,
    };
    serde_json::to_writer(&mut w, &header).map_err(io_from_json)?;
    w.write_all(b"\n")?;
    for block in &chain.blocks {
        serde_json::to_writer(&mut w, block).map_err(io_from_json)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// The exact bytes `save_chain` would write.
pub fn chain_to_bytes(chain: &Chain) -> Result<Vec<u8>, LedgerError> {
    let mut buf = Vec::new();
    write_chain(chain, &mut buf)?;
    Ok(buf)
}

fn io_from_json(e: serde_json::Error) -> LedgerError {
    LedgerError::Io(io::Error::new(io::ErrorKind::InvalidData, e))
}

/// Validate, then atomically write the chain file (temp file + rename).
pub fn save_chain(chain: &Chain, path: &Path) -> Result<(), LedgerError> {
    let report = validate_chain(chain)?;
    if let (Some(index), Some(reason)) = (report.first_bad_index, report.reason) {
        return Err(LedgerError::Integrity { index, reason });
    }
    let tmp = path.with_extension("tmp");
    {
        let mut file = fs::File::create(&tmp)?;
        write_chain(chain, &mut file)?;
        file.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Read a chain file, rejecting malformed lines, header corruption, and any
/// chain that fails validation.
pub fn load_chain(path: &Path) -> Result<Chain, LedgerError> {
    load_chain_bytes(&fs::read(path)?)
}

/// Parse and fully validate a serialized chain.
///
/// Framing is strict: one compact JSON record per line, a newline as the
/// final byte, no blank lines, no stray whitespace. Strictness keeps the
/// corruption surface dense; any single-byte edit of a chain file fails
/// parsing, the header checksum, or block validation.
pub fn load_chain_bytes(bytes: &[u8]) -> Result<Chain, LedgerError> {
    if bytes.is_empty() {
        return Err(LedgerError::Malformed {
            line: 1,
            message: "empty chain file".into(),
        });
    }
    if !bytes.ends_with(b"\n") {
        return Err(LedgerError::Malformed {
            line: 1,
            message: "missing trailing newline".into(),
        });
    }
    let text = std::str::from_utf8(bytes).map_err(|e| LedgerError::Malformed {
        line: 1,
        message: format!("not UTF-8: {e}"),
    })?;
    let mut lines = text[..text.len() - 1].split('\n').enumerate();

    let header_line = match lines.next() {
        Some((_, line)) => check_line(1, line)?,
        None => {
            return Err(LedgerError::Malformed {
                line: 1,
                message: "empty chain file".into(),
            })
        }
    };
    let header: ChainHeader =
        serde_json::from_str(header_line).map_err(|e| LedgerError::Malformed {
            line: 1,
            message: e.to_string(),
        })?;
    if header.checksum != header_checksum(header.difficulty, &header.chain_salt) {
        return Err(LedgerError::Malformed {
            line: 1,
            message: "header checksum mismatch".into(),
        });
    }
    let salt_raw = BASE64
        .decode(header.chain_salt.as_bytes())
        .map_err(|e| LedgerError::Malformed {
            line: 1,
            message: format!("bad chain_salt: {e}"),
        })?;
    let chain_salt =
        <[u8; 32]>::try_from(salt_raw.as_slice()).map_err(|_| LedgerError::Malformed {
            line: 1,
            message: "chain_salt must decode to 32 bytes".into(),
        })?;

    let mut blocks = Vec::new();
    for (offset, line) in lines {
        let line_no = offset + 1;
        let line = check_line(line_no, line)?;
        let block: Block = serde_json::from_str(line).map_err(|e| LedgerError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        blocks.push(block);
    }
    if blocks.is_empty() {
        return Err(LedgerError::Malformed {
            line: 2,
            message: "chain file holds no blocks".into(),
        });
    }

    let chain = Chain {
        difficulty: header.difficulty,
        chain_salt,
        blocks,
    };
    let report = validate_chain(&chain)?;
    if let (Some(index), Some(reason)) = (report.first_bad_index, report.reason) {
        return Err(LedgerError::Integrity { index, reason });
    }
    Ok(chain)
}

fn check_line(line_no: usize, line: &str) -> Result<&str, LedgerError> {
    if line.is_empty() || line != line.trim() {
        return Err(LedgerError::Malformed {
            line: line_no,
            message: "blank line or stray whitespace".into(),
        });
    }
    Ok(line)
}

/// One mining measurement.
#[derive(Debug, Clone, Copy)]
pub struct TrialSample {
    pub tries: u64,
    pub elapsed_ns: u64,
}

/// Aggregated mining statistics for one difficulty prefix.
#[derive(Debug, Clone, Serialize)]
pub struct MiningStats {
    pub prefix: u8,
    pub trials: u32,
    pub mean_time_ms: f64,
    pub mean_tries: f64,
    pub peak_rss_bytes: Option<u64>,
}

/// Mine `trials` blocks at `prefix`, each over a distinct seeded payload,
/// so the tries column is reproducible for a given seed.
pub fn run_trials(
    prefix: Difficulty,
    trials: u32,
    seed: u64,
) -> Result<Vec<TrialSample>, LedgerError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ u64::from(prefix.prefix()) << 32);
    let tip = genesis();
    let mut samples = Vec::with_capacity(trials as usize);
    for _ in 0..trials {
        let mut payload = vec![0u8; 16];
        rng.fill_bytes(&mut payload);
        let start = Instant::now();
        let (_, tries) = mine_block(&tip, payload, prefix, 0)?;
        samples.push(TrialSample {
            tries,
            elapsed_ns: start.elapsed().as_nanos() as u64,
        });
    }
    Ok(samples)
}

/// Peak resident set size of this process, read from /proc (Linux only).
pub fn peak_rss_bytes() -> Option<u64> {
    let status = fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

/// Time a burst of hash computations and return seconds per hash.
pub fn measure_hash_rate() -> f64 {
    let digest = Hash256::digest(b"calibration");
    let rounds: u64 = 50_000;
    let start = Instant::now();
    let mut nonce = 0u64;
    for i in 0..rounds {
        let h = compute_hash(1, 0, &digest, &digest, i);
        nonce = nonce.wrapping_add(u64::from(h.as_bytes()[0]));
    }
    std::hint::black_box(nonce);
    start.elapsed().as_secs_f64() / rounds as f64
}

/// Expected wall seconds for a bench sweep, from the measured hash rate and
/// the 16^prefix expected tries per block.
pub fn estimate_runtime_secs(prefix_min: u8, prefix_max: u8, trials: u32) -> f64 {
    let per_hash = measure_hash_rate();
    let mut total = 0.0;
    for p in prefix_min..=prefix_max {
        total += f64::from(trials) * 16f64.powi(i32::from(p)) * per_hash;
    }
    total
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub prefix_min: u8,
    pub prefix_max: u8,
    pub trials: u32,
    pub seed: u64,
    /// Refuse to start if the projected runtime exceeds this many seconds.
    pub budget_secs: Option<u64>,
}

/// Mining benchmark across a difficulty range. Refuses to run when the
/// projected runtime blows the budget, reporting the estimate instead.
pub fn bench_mine(config: &BenchConfig) -> Result<Vec<MiningStats>, LedgerError> {
    if config.prefix_max > MAX_DIFFICULTY || config.prefix_min > config.prefix_max {
        return Err(LedgerError::DifficultyOutOfRange(config.prefix_max));
    }
    if let Some(budget) = config.budget_secs {
        let projected = estimate_runtime_secs(config.prefix_min, config.prefix_max, config.trials);
        if projected > budget as f64 {
            return Err(LedgerError::BudgetExceeded {
                projected_secs: projected,
                budget_secs: budget,
            });
        }
    }
    let mut rows = Vec::new();
    for p in config.prefix_min..=config.prefix_max {
        let prefix = Difficulty::new(p)?;
        let samples = run_trials(prefix, config.trials, config.seed)?;
        let n = samples.len() as f64;
        let mean_tries = samples.iter().map(|s| s.tries as f64).sum::<f64>() / n;
        let mean_time_ms =
            samples.iter().map(|s| s.elapsed_ns as f64).sum::<f64>() / n / 1_000_000.0;
        rows.push(MiningStats {
            prefix: p,
            trials: config.trials,
            mean_time_ms,
            mean_tries,
            peak_rss_bytes: peak_rss_bytes(),
        });
    }
    Ok(rows)
}
