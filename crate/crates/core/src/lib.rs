//! Tamper-evident editorial workflow on a proof-of-work hash chain.
//!
//! Every state change in a manuscript's review (submission, screening,
//! invitations, responses, reports, decisions) is serialized as a canonical
//! JSON event and mined into an append-only block chain. Replaying the chain
//! reconstructs the full workflow state, so the chain is the single source of
//! truth and any retroactive edit is detectable.
//!
//! Module map:
//!
//! * [`ledger`]: blocks, nonce search, chain validation, persistence.
//! * [`registry`]: people, articles, keyword index, co-authorship graph,
//!   salted pseudonyms.
//! * [`selection`]: reviewer scoring, conflict-of-interest filtering,
//!   priority classes, reviewer history.
//! * [`workflow`]: workflow events, per-case state machine, replay.
//! * [`engine`]: ties registry + chain together; mines one block per
//!   transition and derives all mutable state from the chain.
//! * [`node`]: peer replication (longest-valid-chain fork rule) over an
//!   in-process simulated network or TCP.
//! * [`store`]: on-disk state directory used by the CLI and FFI layers.

pub mod engine;
pub mod ledger;
pub mod node;
pub mod registry;
pub mod selection;
pub mod store;
pub mod workflow;

pub use engine::{Engine, EngineConfig, TickSummary};
pub use ledger::{Block, Chain, Difficulty, Hash256, LedgerError};
pub use registry::{Article, ArticleStatus, CodeName, Person, Registry, RegistryError, Role};
pub use selection::{CandidateList, ReviewerHistory, SelectedReviewers, SelectionError};
pub use store::{StateDir, StoreError};
pub use workflow::{CaseState, WorkflowError, WorkflowEvent};
