//! Command-line front end: one state directory, one subcommand per
//! workflow action, every state change mined into the chain.
//!
//! Exit codes: 0 success, 1 domain or data error (unknown ids, conflicts,
//! deadline violations, corrupt state, exceeded budgets), 2 usage or
//! configuration error (bad flags, missing state dir, held lock).

use std::fmt;
use std::fs;
use std::net::TcpListener;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, OnceLock};

use clap::{Parser, Subcommand, ValueEnum};

use revchain_core::engine::{Engine, EngineConfig};
use revchain_core::ledger::{load_chain, save_chain, BenchConfig, Difficulty, LedgerError};
use revchain_core::node::tcp::{self, wall_clock_ms};
use revchain_core::node::{NodeError, PeerConfig, PeerNode};
use revchain_core::store::{StateDir, StoreError};
use revchain_core::workflow::{
    CaseState, InvitationAnswer, InvitationState, Recommendation, ScreenDecision, Verdict,
    WorkflowError, MAX_ACCEPTED_REVIEWS, MIN_ACCEPTED_REVIEWS,
};

#[derive(Parser)]
#[command(
    name = "revchain",
    version,
    about = "Pseudonymous peer-review workflow on a proof-of-work ledger"
)]
struct Cli {
    /// State directory (created by `init`).
    #[arg(short, long, global = true, default_value = "state")]
    state_dir: PathBuf,
    /// Stamp events with system time instead of the simulated clock.
    #[arg(long, global = true, conflicts_with = "at")]
    wall_clock: bool,
    /// Stamp events with this time (ms); advances the simulated clock.
    #[arg(long, global = true)]
    at: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create a state directory with a fresh genesis chain.
    Init {
        /// Required leading zero hex digits per block hash.
        #[arg(long, default_value_t = 2)]
        difficulty: u8,
        /// Pseudonym salt, 64 hex chars. Peers sharing a chain must share
        /// it; defaults to OS randomness.
        #[arg(long)]
        salt: Option<String>,
    },
    /// Load persons and articles from a corpus JSON file.
    Ingest { corpus: PathBuf },
    /// Open a review case for an ingested article.
    Submit { article_id: String },
    /// Screen a submitted case; `proceed` sends the invitation batch.
    Screen {
        article_id: String,
        #[arg(value_enum)]
        decision: ScreenArg,
        /// Invitations to send on proceed.
        #[arg(long, default_value_t = 6)]
        reviewers: u32,
    },
    /// Record a reviewer's answer to an invitation.
    Respond {
        invitation_id: String,
        #[arg(value_enum)]
        answer: AnswerArg,
    },
    /// File a review report for an accepted invitation.
    Report {
        invitation_id: String,
        #[arg(long, value_enum)]
        recommendation: RecommendationArg,
    },
    /// Record the editorial verdict on a case with enough reports.
    Decide {
        article_id: String,
        #[arg(long, value_enum)]
        verdict: VerdictArg,
    },
    /// Advance the clock and expire lapsed invitations and reports.
    Tick {
        /// Milliseconds to advance the simulated clock.
        #[arg(long, default_value_t = 0)]
        advance: u64,
    },
    /// Show the clock, the chain tip, and open cases.
    Status { article_id: Option<String> },
    /// Re-check every block and replay the chain.
    Validate,
    /// Measure mining cost per difficulty prefix and emit CSV.
    Bench {
        #[arg(long, default_value_t = 1)]
        prefix_min: u8,
        #[arg(long, default_value_t = 3)]
        prefix_max: u8,
        #[arg(long, default_value_t = 25)]
        trials: u32,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Write CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Permit prefixes of 5+ hex digits (a trial averages over a
        /// million hashes at 5 and grows 16x per digit).
        #[arg(long)]
        allow_long: bool,
        /// Refuse the run if the projected total exceeds this many seconds.
        #[arg(long)]
        budget_secs: Option<u64>,
    },
    /// Serve the chain to peers over TCP and sync on startup.
    Node {
        /// Peer config JSON (node_id, listen_address, peers, allowlist).
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Copy, Clone, ValueEnum)]
enum ScreenArg {
    Proceed,
    DeskReject,
}

#[derive(Copy, Clone, ValueEnum)]
enum AnswerArg {
    Accept,
    Decline,
}

#[derive(Copy, Clone, ValueEnum)]
enum RecommendationArg {
    Accept,
    MinorRevise,
    MajorRevise,
    Reject,
}

#[derive(Copy, Clone, ValueEnum)]
enum VerdictArg {
    Accept,
    Revise,
    Reject,
}

impl From<ScreenArg> for ScreenDecision {
    fn from(a: ScreenArg) -> ScreenDecision {
        match a {
            ScreenArg::Proceed => ScreenDecision::Proceed,
            ScreenArg::DeskReject => ScreenDecision::DeskReject,
        }
    }
}

impl From<AnswerArg> for InvitationAnswer {
    fn from(a: AnswerArg) -> InvitationAnswer {
        match a {
            AnswerArg::Accept => InvitationAnswer::Accept,
            AnswerArg::Decline => InvitationAnswer::Decline,
        }
    }
}

impl From<RecommendationArg> for Recommendation {
    fn from(a: RecommendationArg) -> Recommendation {
        match a {
            RecommendationArg::Accept => Recommendation::Accept,
            RecommendationArg::MinorRevise => Recommendation::MinorRevise,
            RecommendationArg::MajorRevise => Recommendation::MajorRevise,
            RecommendationArg::Reject => Recommendation::Reject,
        }
    }
}

impl From<VerdictArg> for Verdict {
    fn from(a: VerdictArg) -> Verdict {
        match a {
            VerdictArg::Accept => Verdict::Accept,
            VerdictArg::Revise => Verdict::Revise,
            VerdictArg::Reject => Verdict::Reject,
        }
    }
}

enum CliError {
    /// Exit 2: the invocation or configuration is wrong.
    Usage(String),
    /// Exit 1: the data or the domain said no.
    Domain(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Domain(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Domain(m) => f.write_str(m),
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> CliError {
        match e {
            StoreError::AlreadyInitialized(_)
            | StoreError::NotInitialized(_)
            | StoreError::Locked { .. }
            | StoreError::Config(_) => CliError::Usage(e.to_string()),
            other => CliError::Domain(other.to_string()),
        }
    }
}

impl From<WorkflowError> for CliError {
    fn from(e: WorkflowError) -> CliError {
        CliError::Domain(e.to_string())
    }
}

impl From<LedgerError> for CliError {
    fn from(e: LedgerError) -> CliError {
        CliError::Domain(e.to_string())
    }
}

impl From<NodeError> for CliError {
    fn from(e: NodeError) -> CliError {
        match e {
            NodeError::Config(_) => CliError::Usage(e.to_string()),
            other => CliError::Domain(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> CliError {
        CliError::Domain(format!("io error: {e}"))
    }
}

/// Global flags that survive the subcommand destructuring.
struct Ctx {
    state_dir: PathBuf,
    wall_clock: bool,
    at: Option<u64>,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.code());
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let command = cli.command;
    let ctx = Ctx {
        state_dir: cli.state_dir,
        wall_clock: cli.wall_clock,
        at: cli.at,
    };
    match command {
        Command::Init { difficulty, salt } => {
            let difficulty = Difficulty::new(difficulty)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let salt = salt.map(parse_salt).transpose()?;
            let dir = StateDir::init(&ctx.state_dir, difficulty, salt)?;
            let chain = load_chain(&dir.chain_path())?;
            println!(
                "initialized {}: difficulty {}, salt {}",
                dir.root().display(),
                chain.difficulty,
                hex::encode(chain.chain_salt)
            );
            Ok(())
        }
        Command::Ingest { corpus } => {
            let dir = StateDir::open(&ctx.state_dir)?;
            let _lock = dir.lock()?;
            let mut engine = dir.load_engine(EngineConfig::default())?;
            let report = engine.ingest_corpus(&corpus)?;
            dir.persist(&engine)?;
            println!(
                "ingested {} persons, {} articles, {} rejects",
                report.persons_added,
                report.articles_added,
                report.rejects.len()
            );
            for reject in &report.rejects {
                println!("reject {}: {}", reject.record_id, reject.reason);
            }
            Ok(())
        }
        Command::Submit { article_id } => {
            with_engine(&ctx, EngineConfig::default(), |engine, now| {
                engine.submit_manuscript(&article_id, now)?;
                println!("submitted {article_id} at {now}");
                print_case(engine.case(&article_id)?, false);
                Ok(())
            })
        }
        Command::Screen {
            article_id,
            decision,
            reviewers,
        } => {
            let (min, max) = (MIN_ACCEPTED_REVIEWS as u32, MAX_ACCEPTED_REVIEWS as u32);
            if !(min..=max).contains(&reviewers) {
                return Err(CliError::Usage(format!(
                    "--reviewers must be between {min} and {max}, got {reviewers}"
                )));
            }
            let config = EngineConfig {
                initial_invitations: reviewers,
                ..EngineConfig::default()
            };
            with_engine(&ctx, config, |engine, now| {
                let sent = engine.screen(&article_id, decision.into(), now)?;
                match ScreenDecision::from(decision) {
                    ScreenDecision::Proceed => {
                        println!("screened {article_id}: proceed, {} invitations", sent.len())
                    }
                    ScreenDecision::DeskReject => {
                        println!("screened {article_id}: desk reject")
                    }
                }
                let case = engine.case(&article_id)?;
                for invitation_id in &sent {
                    let inv = case.invitation(invitation_id).expect("just sent");
                    println!(
                        "sent {} to {} (respond by {})",
                        inv.invitation_id, inv.reviewer_pseudonym, inv.respond_by
                    );
                }
                print_case(case, false);
                Ok(())
            })
        }
        Command::Respond {
            invitation_id,
            answer,
        } => with_engine(&ctx, EngineConfig::default(), |engine, now| {
            engine.respond(&invitation_id, answer.into(), now)?;
            let name = match answer {
                AnswerArg::Accept => "accept",
                AnswerArg::Decline => "decline",
            };
            println!("invitation {invitation_id}: {name} recorded");
            print_case(case_of_invitation(engine, &invitation_id)?, false);
            Ok(())
        }),
        Command::Report {
            invitation_id,
            recommendation,
        } => with_engine(&ctx, EngineConfig::default(), |engine, now| {
            engine.submit_report(&invitation_id, recommendation.into(), now)?;
            println!("report recorded for {invitation_id}");
            print_case(case_of_invitation(engine, &invitation_id)?, false);
            Ok(())
        }),
        Command::Decide {
            article_id,
            verdict,
        } => with_engine(&ctx, EngineConfig::default(), |engine, now| {
            engine.decide(&article_id, verdict.into(), now)?;
            println!("decision recorded for {article_id}");
            print_case(engine.case(&article_id)?, false);
            Ok(())
        }),
        Command::Tick { advance } => {
            let dir = StateDir::open(&ctx.state_dir)?;
            let _lock = dir.lock()?;
            let now = if ctx.wall_clock {
                wall_clock_ms()
            } else if let Some(at) = ctx.at {
                at
            } else {
                dir.read_clock()?.saturating_add(advance)
            };
            let mut engine = dir.load_engine(EngineConfig::default())?;
            let summary = engine.tick(now)?;
            dir.persist(&engine)?;
            dir.write_clock(now)?;
            println!("{} invitations expired", summary.invitations_expired);
            println!("{} reports overdue", summary.reports_overdue);
            println!("{} replacement invitations sent", summary.replacements_sent);
            println!("clock: {now}");
            Ok(())
        }
        Command::Status { article_id } => {
            let dir = StateDir::open(&ctx.state_dir)?;
            let engine = dir.load_engine(EngineConfig::default())?;
            println!("clock: {}", dir.read_clock()?);
            println!(
                "chain: {} blocks, difficulty {}, tip {}",
                engine.chain.len(),
                engine.chain.difficulty,
                engine.chain.tip().hash
            );
            match article_id {
                Some(article_id) => {
                    let case = engine.case(&article_id)?;
                    print_case(case, true);
                    if let Some(queue) = engine.queue(&article_id) {
                        println!("queue: {} candidates remaining", queue.len());
                    }
                }
                None => {
                    for case in engine.cases().values() {
                        print_case(case, false);
                    }
                }
            }
            Ok(())
        }
        Command::Validate => {
            let dir = StateDir::open(&ctx.state_dir)?;
            let chain = match load_chain(&dir.chain_path()) {
                Ok(chain) => chain,
                Err(e) => return Err(CliError::Domain(format!("chain INVALID: {e}"))),
            };
            let report = chain.validate()?;
            if !report.valid {
                let index = report.first_bad_index.unwrap_or_default();
                let reason = report
                    .reason
                    .map_or_else(|| "unknown".to_string(), |r| r.to_string());
                return Err(CliError::Domain(format!(
                    "chain INVALID at block {index}: {reason}"
                )));
            }
            let engine = dir.load_engine(EngineConfig::default())?;
            println!(
                "chain valid: {} blocks, difficulty {}, tip {}",
                engine.chain.len(),
                engine.chain.difficulty,
                engine.chain.tip().hash
            );
            println!("replay ok: {} cases reconstructed", engine.cases().len());
            Ok(())
        }
        Command::Bench {
            prefix_min,
            prefix_max,
            trials,
            seed,
            out,
            allow_long,
            budget_secs,
        } => {
            if prefix_min > prefix_max {
                return Err(CliError::Usage(format!(
                    "--prefix-min {prefix_min} exceeds --prefix-max {prefix_max}"
                )));
            }
            if trials == 0 {
                return Err(CliError::Usage("--trials must be positive".into()));
            }
            if prefix_max >= 5 && !allow_long {
                return Err(CliError::Usage(format!(
                    "prefix {prefix_max} averages ~16^{prefix_max} hashes per trial; \
                     pass --allow-long to confirm"
                )));
            }
            let config = BenchConfig {
                prefix_min,
                prefix_max,
                trials,
                seed,
                budget_secs,
            };
            let stats = revchain_core::ledger::bench_mine(&config)?;
            let mut csv = String::from("prefix,trials,mean_time_ms,mean_tries,peak_rss_bytes\n");
            for row in &stats {
                let rss = row
                    .peak_rss_bytes
                    .map_or_else(String::new, |b| b.to_string());
                csv.push_str(&format!(
                    "{},{},{:.3},{:.1},{}\n",
                    row.prefix, row.trials, row.mean_time_ms, row.mean_tries, rss
                ));
            }
            match out {
                Some(path) => {
                    fs::write(&path, csv)?;
                    println!("wrote {}", path.display());
                }
                None => print!("{csv}"),
            }
            Ok(())
        }
        Command::Node { config } => run_node(&ctx.state_dir, &config),
    }
}

fn parse_salt(text: String) -> Result<[u8; 32], CliError> {
    let bytes = hex::decode(text.trim())
        .map_err(|e| CliError::Usage(format!("bad --salt: {e}")))?;
    <[u8; 32]>::try_from(bytes)
        .map_err(|b| CliError::Usage(format!("bad --salt: need 32 bytes, got {}", b.len())))
}

/// Open, lock, time-stamp, run one mutating action, persist, advance clock.
fn with_engine<F>(ctx: &Ctx, config: EngineConfig, action: F) -> Result<(), CliError>
where
    F: FnOnce(&mut Engine, u64) -> Result<(), CliError>,
{
    let dir = StateDir::open(&ctx.state_dir)?;
    let _lock = dir.lock()?;
    let stored = dir.read_clock()?;
    let now = if ctx.wall_clock {
        wall_clock_ms()
    } else {
        ctx.at.unwrap_or(stored)
    };
    let mut engine = dir.load_engine(config)?;
    action(&mut engine, now)?;
    dir.persist(&engine)?;
    dir.write_clock(stored.max(now))?;
    Ok(())
}

fn case_of_invitation<'e>(
    engine: &'e Engine,
    invitation_id: &str,
) -> Result<&'e CaseState, CliError> {
    engine
        .cases()
        .values()
        .find(|case| case.invitation(invitation_id).is_some())
        .ok_or_else(|| CliError::Domain(format!("lookup error: unknown invitation {invitation_id}")))
}

fn print_case(case: &CaseState, detailed: bool) {
    println!(
        "case {}: {} (round {}, pending {}, accepted {}, reported {})",
        case.article_id,
        case.status,
        case.round,
        case.pending_count(),
        case.accepted_count(),
        case.reported_this_round()
    );
    if !detailed {
        return;
    }
    for inv in &case.invitations {
        let state = match inv.state {
            InvitationState::Pending => "pending",
            InvitationState::Accepted => "accepted",
            InvitationState::Declined => "declined",
            InvitationState::Expired => "expired",
        };
        let due = inv
            .report_due
            .map_or_else(String::new, |d| format!(", report due {d}"));
        println!(
            "  {} {} sent {} respond by {}{}{}",
            inv.invitation_id,
            state,
            inv.sent_at,
            inv.respond_by,
            due,
            if inv.reported { ", reported" } else { "" }
        );
    }
}

static RUNNING: OnceLock<Arc<AtomicBool>> = OnceLock::new();

extern "C" fn on_sigint(_signal: libc::c_int) {
    if let Some(flag) = RUNNING.get() {
        flag.store(false, Ordering::SeqCst);
    }
}

fn run_node(state_dir: &PathBuf, config_path: &PathBuf) -> Result<(), CliError> {
    let dir = StateDir::open(state_dir)?;
    let _lock = dir.lock()?;
    let peer_config = PeerConfig::load(config_path)?;
    let chain = load_chain(&dir.chain_path())?;
    let listener = TcpListener::bind(&peer_config.listen_address).map_err(|e| {
        CliError::Usage(format!("cannot bind {}: {e}", peer_config.listen_address))
    })?;
    let node_id = peer_config.node_id.clone();
    let has_peers = !peer_config.peer_addresses.is_empty();
    let node = Arc::new(Mutex::new(PeerNode::new(peer_config, chain)));
    println!(
        "node {node_id} listening on {}",
        listener.local_addr().map_err(CliError::from)?
    );
    if has_peers {
        let (synced, unreachable) = tcp::sync_all(&node);
        for address in synced {
            println!("synced with {address}");
        }
        for address in unreachable {
            println!("unreachable: {address}");
        }
        let guard = node.lock().expect("node lock");
        save_chain(&guard.chain, &dir.chain_path())?;
    }
    let running = Arc::new(AtomicBool::new(true));
    let _ = RUNNING.set(Arc::clone(&running));
    unsafe {
        libc::signal(libc::SIGINT, on_sigint as extern "C" fn(libc::c_int) as usize);
        libc::signal(libc::SIGTERM, on_sigint as extern "C" fn(libc::c_int) as usize);
    }
    tcp::serve(node, listener, running, Some(dir.chain_path()))?;
    println!("node stopped, chain persisted");
    Ok(())
}
