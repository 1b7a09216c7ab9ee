//! Workflow events and the per-case review state machine.
//!
//! Every transition in a manuscript's life is one event, serialized as
//! canonical JSON (sorted keys, integers only, no floats) and mined into
//! exactly one block. [`CaseState::apply`] is the single interpreter for
//! those events: the engine uses it when acting live and [`replay_chain`]
//! uses it to rebuild all case state from the ledger alone.
//!
//! Timing rules, all in integer milliseconds:
//! * an invitation must be answered within 7 days of being sent;
//! * an accepted review is due 28 days after acceptance;
//! * responses and reports landing exactly on the deadline still count,
//!   one millisecond later is too late;
//! * an unanswered invitation counts as declined once the window passes.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::{Chain, LedgerError};
use crate::registry::{ArticleStatus, RegistryError};
use crate::selection::SelectionError;

/// 7 days for a reviewer to accept or decline an invitation.
pub const RESPONSE_WINDOW_MS: u64 = 7 * 24 * 60 * 60 * 1000;
/// 28 days from acceptance to the review report.
pub const REPORT_WINDOW_MS: u64 = 28 * 24 * 60 * 60 * 1000;
/// Invitations dispatched when screening passes.
pub const INITIAL_INVITATIONS: usize = 6;
/// Reports required before an editorial decision.
pub const MIN_ACCEPTED_REVIEWS: usize = 3;
/// Cap on simultaneously accepted reviewers.
pub const MAX_ACCEPTED_REVIEWS: usize = 6;
/// Actor recorded on events not attributable to a reviewer.
pub const SYSTEM_ACTOR: &str = "system";

#[derive(Debug, Error)]
pub enum WorkflowError {
    #[error("conflict: case already exists for article {0}")]
    DuplicateCase(String),
    #[error("conflict: report already submitted for invitation {0} this round")]
    DuplicateReport(String),
    #[error("lookup error: unknown case for article {0}")]
    UnknownCase(String),
    #[error("lookup error: unknown invitation {0}")]
    UnknownInvitation(String),
    #[error("late response: window for invitation {0} closed")]
    LateResponse(String),
    #[error("overdue report: window for invitation {0} closed")]
    ReportOverdue(String),
    #[error("state error: {0}")]
    InvalidState(String),
    #[error("event decode error: {0}")]
    BadEvent(String),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventType {
    Submitted,
    Screened,
    InvitationSent,
    InvitationAnswered,
    InvitationExpired,
    ReportSubmitted,
    Decision,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScreenDecision {
    Proceed,
    DeskReject,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvitationAnswer {
    Accept,
    Decline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recommendation {
    Accept,
    MinorRevise,
    MajorRevise,
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accept,
    Revise,
    Reject,
}

/// Why an invitation expired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpiryReason {
    ResponseTimeout,
    ReportTimeout,
}

/// Detail values stay integers or strings so canonical payload bytes never
/// depend on float formatting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DetailValue {
    Int(u64),
    Text(String),
}

impl fmt::Display for DetailValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DetailValue::Int(n) => write!(f, "{n}"),
            DetailValue::Text(s) => f.write_str(s),
        }
    }
}

/// One workflow transition as mined into a block payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkflowEvent {
    pub event_type: EventType,
    pub article_id: String,
    /// Reviewer code name, or `system` for editorial/timer actions.
    pub actor_pseudonym: String,
    pub details: BTreeMap<String, DetailValue>,
    /// Workflow-logical time in ms; deadline-driven events carry the
    /// deadline itself, not the wall time of the tick that noticed it.
    pub at: u64,
}

fn detail(key: &str, value: impl Into<DetailValue>) -> (String, DetailValue) {
    (key.to_string(), value.into())
}

impl From<u64> for DetailValue {
    fn from(n: u64) -> DetailValue {
        DetailValue::Int(n)
    }
}

impl From<&str> for DetailValue {
    fn from(s: &str) -> DetailValue {
        DetailValue::Text(s.to_string())
    }
}

impl From<String> for DetailValue {
    fn from(s: String) -> DetailValue {
        DetailValue::Text(s)
    }
}

fn enum_text<T: Serialize>(value: &T) -> String {
    match serde_json::to_value(value).expect("enum serializes") {
        serde_json::Value::String(s) => s,
        other => panic!("expected string-serialized enum, got {other}"),
    }
}

fn parse_enum<T: serde::de::DeserializeOwned>(key: &str, text: &str) -> Result<T, WorkflowError> {
    serde_json::from_value(serde_json::Value::String(text.to_string()))
        .map_err(|_| WorkflowError::BadEvent(format!("bad {key} value {text:?}")))
}

impl WorkflowEvent {
    pub fn submitted(article_id: &str, at: u64) -> WorkflowEvent {
        WorkflowEvent {
            event_type: EventType::Submitted,
            article_id: article_id.to_string(),
            actor_pseudonym: SYSTEM_ACTOR.to_string(),
            details: BTreeMap::new(),
            at,
        }
    }

    pub fn screened(article_id: &str, decision: ScreenDecision, at: u64) -> WorkflowEvent {
        WorkflowEvent {
            event_type: EventType::Screened,
            article_id: article_id.to_string(),
            actor_pseudonym: SYSTEM_ACTOR.to_string(),
            details: BTreeMap::from([detail("decision", enum_text(&decision))]),
            at,
        }
    }

    pub fn invitation_sent(
        article_id: &str,
        invitation_id: &str,
        reviewer_pseudonym: &str,
        sent_at: u64,
    ) -> WorkflowEvent {
        WorkflowEvent {
            event_type: EventType::InvitationSent,
            article_id: article_id.to_string(),
            actor_pseudonym: SYSTEM_ACTOR.to_string(),
            details: BTreeMap::from([
                detail("invitation_id", invitation_id),
                detail("reviewer", reviewer_pseudonym),
                detail("respond_by", sent_at + RESPONSE_WINDOW_MS),
            ]),
            at: sent_at,
        }
    }

    pub fn invitation_answered(
        article_id: &str,
        invitation_id: &str,
        reviewer_pseudonym: &str,
        answer: InvitationAnswer,
        at: u64,
    ) -> WorkflowEvent {
        WorkflowEvent {
            event_type: EventType::InvitationAnswered,
            article_id: article_id.to_string(),
            actor_pseudonym: reviewer_pseudonym.to_string(),
            details: BTreeMap::from([
                detail("invitation_id", invitation_id),
                detail("answer", enum_text(&answer)),
            ]),
            at,
        }
    }

    pub fn invitation_expired(
        article_id: &str,
        invitation_id: &str,
        reason: ExpiryReason,
        at: u64,
    ) -> WorkflowEvent {
        WorkflowEvent {
            event_type: EventType::InvitationExpired,
            article_id: article_id.to_string(),
            actor_pseudonym: SYSTEM_ACTOR.to_string(),
            details: BTreeMap::from([
                detail("invitation_id", invitation_id),
                detail("reason", enum_text(&reason)),
            ]),
            at,
        }
    }

    pub fn report_submitted(
        article_id: &str,
        invitation_id: &str,
        reviewer_pseudonym: &str,
        recommendation: Recommendation,
        at: u64,
    ) -> WorkflowEvent {
        WorkflowEvent {
            event_type: EventType::ReportSubmitted,
            article_id: article_id.to_string(),
            actor_pseudonym: reviewer_pseudonym.to_string(),
            details: BTreeMap::from([
                detail("invitation_id", invitation_id),
                detail("recommendation", enum_text(&recommendation)),
            ]),
            at,
        }
    }

    pub fn decision(article_id: &str, verdict: Verdict, at: u64) -> WorkflowEvent {
        WorkflowEvent {
            event_type: EventType::Decision,
            article_id: article_id.to_string(),
            actor_pseudonym: SYSTEM_ACTOR.to_string(),
            details: BTreeMap::from([detail("verdict", enum_text(&verdict))]),
            at,
        }
    }

    /// Canonical payload bytes: round-tripping through `serde_json::Value`
    /// sorts object keys at every level, and emission adds no insignificant
    /// whitespace, so equal events always yield equal bytes.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let value = serde_json::to_value(self).expect("workflow events always serialize");
        serde_json::to_vec(&value).expect("json value always serializes")
    }

    pub fn from_payload(payload: &[u8]) -> Result<WorkflowEvent, WorkflowError> {
        serde_json::from_slice(payload).map_err(|e| WorkflowError::BadEvent(e.to_string()))
    }

    pub fn detail_text(&self, key: &str) -> Result<&str, WorkflowError> {
        match self.details.get(key) {
            Some(DetailValue::Text(s)) => Ok(s),
            _ => Err(WorkflowError::BadEvent(format!(
                "missing text detail {key:?} on {:?} event",
                self.event_type
            ))),
        }
    }

    pub fn detail_int(&self, key: &str) -> Result<u64, WorkflowError> {
        match self.details.get(key) {
            Some(DetailValue::Int(n)) => Ok(*n),
            _ => Err(WorkflowError::BadEvent(format!(
                "missing int detail {key:?} on {:?} event",
                self.event_type
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InvitationState {
    Pending,
    Accepted,
    Declined,
    Expired,
}

/// One review invitation and, if accepted, its report obligations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Invitation {
    pub invitation_id: String,
    pub article_id: String,
    pub reviewer_pseudonym: String,
    pub sent_at: u64,
    pub respond_by: u64,
    pub state: InvitationState,
    pub report_due: Option<u64>,
    /// Whether a report landed in the current review round.
    pub reported: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub invitation_id: String,
    pub reviewer_pseudonym: String,
    pub recommendation: Recommendation,
    pub round: u32,
    pub submitted_at: u64,
}

/// Replayable state of one manuscript's review, derived purely from events.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseState {
    pub article_id: String,
    pub status: ArticleStatus,
    pub invitations: Vec<Invitation>,
    pub reports: Vec<Report>,
    /// Review round, starting at 0 and bumped by each Revise verdict.
    pub round: u32,
    /// Invitations issued so far; the next id is `inv-{article}-{seq+1}`.
    pub invitation_seq: u32,
}

impl CaseState {
    pub fn new(article_id: &str) -> CaseState {
        CaseState {
            article_id: article_id.to_string(),
            status: ArticleStatus::Submitted,
            invitations: Vec::new(),
            reports: Vec::new(),
            round: 0,
            invitation_seq: 0,
        }
    }

    pub fn next_invitation_id(&self) -> String {
        format!("inv-{}-{}", self.article_id, self.invitation_seq + 1)
    }

    pub fn invitation(&self, invitation_id: &str) -> Option<&Invitation> {
        self.invitations
            .iter()
            .find(|i| i.invitation_id == invitation_id)
    }

    fn invitation_mut(&mut self, invitation_id: &str) -> Result<&mut Invitation, WorkflowError> {
        self.invitations
            .iter_mut()
            .find(|i| i.invitation_id == invitation_id)
            .ok_or_else(|| WorkflowError::UnknownInvitation(invitation_id.to_string()))
    }

    pub fn pending_count(&self) -> usize {
        self.invitations
            .iter()
            .filter(|i| i.state == InvitationState::Pending)
            .count()
    }

    pub fn accepted_count(&self) -> usize {
        self.invitations
            .iter()
            .filter(|i| i.state == InvitationState::Accepted)
            .count()
    }

    /// Accepted invitations still owing a report this round.
    pub fn awaiting_report_count(&self) -> usize {
        self.invitations
            .iter()
            .filter(|i| i.state == InvitationState::Accepted && !i.reported)
            .count()
    }

    pub fn reported_this_round(&self) -> usize {
        self.invitations.iter().filter(|i| i.reported).count()
    }

    /// Pending plus accepted: the invitations currently "out".
    pub fn outstanding_count(&self) -> usize {
        self.invitations
            .iter()
            .filter(|i| {
                matches!(
                    i.state,
                    InvitationState::Pending | InvitationState::Accepted
                )
            })
            .count()
    }

    fn check_decision_ready(&mut self) {
        let in_review = matches!(
            self.status,
            ArticleStatus::InReview | ArticleStatus::Revise
        );
        if in_review
            && self.reported_this_round() >= MIN_ACCEPTED_REVIEWS
            && self.pending_count() == 0
            && self.awaiting_report_count() == 0
        {
            self.status = ArticleStatus::DecisionPending;
        }
    }

    /// Fold one event into the case. This is the only interpreter of
    /// workflow events; live operation and chain replay both run through it.
    pub fn apply(&mut self, event: &WorkflowEvent) -> Result<(), WorkflowError> {
        if event.article_id != self.article_id {
            return Err(WorkflowError::BadEvent(format!(
                "event for article {} applied to case {}",
                event.article_id, self.article_id
            )));
        }
        match event.event_type {
            EventType::Submitted => {
                self.status = ArticleStatus::Submitted;
            }
            EventType::Screened => {
                let decision: ScreenDecision =
                    parse_enum("decision", event.detail_text("decision")?)?;
                self.status = match decision {
                    ScreenDecision::Proceed => ArticleStatus::Screening,
                    ScreenDecision::DeskReject => ArticleStatus::DeskRejected,
                };
            }
            EventType::InvitationSent => {
                let invitation_id = event.detail_text("invitation_id")?.to_string();
                if self.invitation(&invitation_id).is_some() {
                    return Err(WorkflowError::BadEvent(format!(
                        "duplicate invitation id {invitation_id}"
                    )));
                }
                let respond_by = event.detail_int("respond_by")?;
                self.invitations.push(Invitation {
                    invitation_id,
                    article_id: self.article_id.clone(),
                    reviewer_pseudonym: event.detail_text("reviewer")?.to_string(),
                    sent_at: event.at,
                    respond_by,
                    state: InvitationState::Pending,
                    report_due: None,
                    reported: false,
                });
                self.invitation_seq += 1;
                if self.status == ArticleStatus::Screening {
                    self.status = ArticleStatus::InvitationsOut;
                }
            }
            EventType::InvitationAnswered => {
                let invitation_id = event.detail_text("invitation_id")?;
                let answer: InvitationAnswer = parse_enum("answer", event.detail_text("answer")?)?;
                let at = event.at;
                let invitation = self.invitation_mut(invitation_id)?;
                match answer {
                    InvitationAnswer::Accept => {
                        invitation.state = InvitationState::Accepted;
                        invitation.report_due = Some(at + REPORT_WINDOW_MS);
                        invitation.reported = false;
                        if self.status == ArticleStatus::InvitationsOut
                            && self.accepted_count() >= MIN_ACCEPTED_REVIEWS
                        {
                            self.status = ArticleStatus::InReview;
                        }
                    }
                    InvitationAnswer::Decline => {
                        invitation.state = InvitationState::Declined;
                        self.check_decision_ready();
                    }
                }
            }
            EventType::InvitationExpired => {
                let invitation_id = event.detail_text("invitation_id")?;
                let invitation = self.invitation_mut(invitation_id)?;
                invitation.state = InvitationState::Expired;
                invitation.report_due = None;
                if self.status == ArticleStatus::InReview
                    && self.accepted_count() < MIN_ACCEPTED_REVIEWS
                {
                    self.status = ArticleStatus::InvitationsOut;
                }
                self.check_decision_ready();
            }
            EventType::ReportSubmitted => {
                let invitation_id = event.detail_text("invitation_id")?.to_string();
                let recommendation: Recommendation =
                    parse_enum("recommendation", event.detail_text("recommendation")?)?;
                let round = self.round;
                let at = event.at;
                let invitation = self.invitation_mut(&invitation_id)?;
                invitation.reported = true;
                let reviewer_pseudonym = invitation.reviewer_pseudonym.clone();
                self.reports.push(Report {
                    invitation_id,
                    reviewer_pseudonym,
                    recommendation,
                    round,
                    submitted_at: at,
                });
                self.check_decision_ready();
            }
            EventType::Decision => {
                let verdict: Verdict = parse_enum("verdict", event.detail_text("verdict")?)?;
                match verdict {
                    Verdict::Accept => self.status = ArticleStatus::Accepted,
                    Verdict::Reject => self.status = ArticleStatus::Rejected,
                    Verdict::Revise => {
                        self.status = ArticleStatus::Revise;
                        self.round += 1;
                        let at = event.at;
                        for invitation in &mut self.invitations {
                            if invitation.state == InvitationState::Accepted {
                                invitation.reported = false;
                                invitation.report_due = Some(at + REPORT_WINDOW_MS);
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Interpret a flat event sequence from scratch: one case per article,
/// Submitted events open cases, everything else folds into an existing one.
pub fn replay_events<'a, I>(events: I) -> Result<BTreeMap<String, CaseState>, WorkflowError>
where
    I: IntoIterator<Item = &'a WorkflowEvent>,
{
    let mut cases: BTreeMap<String, CaseState> = BTreeMap::new();
    for event in events {
        match event.event_type {
            EventType::Submitted => {
                if cases.contains_key(&event.article_id) {
                    return Err(WorkflowError::DuplicateCase(event.article_id.clone()));
                }
                let mut case = CaseState::new(&event.article_id);
                case.apply(event)?;
                cases.insert(event.article_id.clone(), case);
            }
            _ => {
                let case = cases
                    .get_mut(&event.article_id)
                    .ok_or_else(|| WorkflowError::UnknownCase(event.article_id.clone()))?;
                case.apply(event)?;
            }
        }
    }
    Ok(cases)
}

/// Decode every block payload after genesis and replay the events.
pub fn replay_chain(chain: &Chain) -> Result<BTreeMap<String, CaseState>, WorkflowError> {
    let events = chain.blocks[1..]
        .iter()
        .map(|b| WorkflowEvent::from_payload(&b.payload))
        .collect::<Result<Vec<_>, _>>()?;
    replay_events(events.iter())
}
