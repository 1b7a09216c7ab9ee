//! The editorial engine: one instance owns a registry, a reviewer history,
//! and the chain, and turns every operation into exactly one mined block
//! per workflow transition.
//!
//! All mutable workflow state (cases, candidate queues, reviewer history,
//! article statuses) is a pure function of the chain plus the registry:
//! [`Engine::replay`] rebuilds everything by folding block payloads through
//! the same `integrate` path live operations use. The only side effect
//! replay skips is writing outbox notifications.
//!
//! Deadline handling is anchored to the deadlines themselves: when a tick
//! notices an invitation lapsed, the expiry event carries the deadline as
//! its logical time and any replacement invitation is dated from it. Two
//! small ticks therefore mine the same blocks as one big tick, no matter
//! when the clock was advanced.

use std::collections::{BTreeMap, VecDeque};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::ledger::{mine_block, Chain};
use crate::registry::{ArticleStatus, Registry};
use crate::selection::{
    eligible_candidates, filter_reviewers, ReviewOutcome, ReviewerHistory, DEFAULT_MIN_SCORE,
    MAX_REVIEWERS, MIN_REVIEWERS,
};
use crate::workflow::{
    CaseState, ExpiryReason, InvitationAnswer, InvitationState, Recommendation, ScreenDecision,
    Verdict, WorkflowError, WorkflowEvent, EventType, INITIAL_INVITATIONS, MIN_ACCEPTED_REVIEWS,
};

#[derive(Debug, Clone)]
pub struct EngineConfig {
    /// Keyword score a candidate must strictly exceed.
    pub min_score: f64,
    /// Invitations sent when screening passes.
    pub initial_invitations: u32,
}

impl Default for EngineConfig {
    fn default() -> EngineConfig {
        EngineConfig {
            min_score: DEFAULT_MIN_SCORE,
            initial_invitations: INITIAL_INVITATIONS as u32,
        }
    }
}

/// What one clock advance did.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct TickSummary {
    pub invitations_expired: usize,
    pub reports_overdue: usize,
    pub replacements_sent: usize,
}

/// A queued outbound notification; holds pseudonyms only.
#[derive(Debug, Clone, Serialize)]
pub struct OutboxMessage {
    pub invitation_id: String,
    pub article_id: String,
    pub reviewer_pseudonym: String,
    pub sent_at: u64,
    pub respond_by: u64,
}

pub struct Engine {
    pub registry: Registry,
    pub chain: Chain,
    history: ReviewerHistory,
    cases: BTreeMap<String, CaseState>,
    /// Remaining eligible reviewers per article, in candidate order,
    /// recomputed at each Screened(Proceed) event.
    queues: BTreeMap<String, VecDeque<String>>,
    /// Code name (hex) to person id, derived from registry and chain salt.
    pseudonym_index: BTreeMap<String, String>,
    invitation_index: BTreeMap<String, String>,
    outbox_dir: Option<PathBuf>,
    config: EngineConfig,
    replaying: bool,
}

impl Engine {
    /// Build an engine over an existing registry and chain, replaying the
    /// chain so cases, queues, and history match the ledger exactly.
    pub fn new(
        registry: Registry,
        chain: Chain,
        outbox_dir: Option<PathBuf>,
        config: EngineConfig,
    ) -> Result<Engine, WorkflowError> {
        let mut engine = Engine {
            registry,
            chain,
            history: ReviewerHistory::new(),
            cases: BTreeMap::new(),
            queues: BTreeMap::new(),
            pseudonym_index: BTreeMap::new(),
            invitation_index: BTreeMap::new(),
            outbox_dir,
            config,
            replaying: false,
        };
        engine.rebuild_pseudonym_index();
        engine.replay()?;
        Ok(engine)
    }

    pub fn history(&self) -> &ReviewerHistory {
        &self.history
    }

    pub fn case(&self, article_id: &str) -> Result<&CaseState, WorkflowError> {
        self.cases
            .get(article_id)
            .ok_or_else(|| WorkflowError::UnknownCase(article_id.to_string()))
    }

    pub fn cases(&self) -> &BTreeMap<String, CaseState> {
        &self.cases
    }

    pub fn queue(&self, article_id: &str) -> Option<&VecDeque<String>> {
        self.queues.get(article_id)
    }

    pub fn pseudonym_of(&self, person_id: &str) -> Result<String, WorkflowError> {
        Ok(self
            .registry
            .pseudonym(person_id, &self.chain.chain_salt)?
            .to_string())
    }

    pub fn person_of_pseudonym(&self, pseudonym: &str) -> Option<&str> {
        self.pseudonym_index.get(pseudonym).map(String::as_str)
    }

    /// Refresh the code-name index; needed after ingesting new people.
    pub fn rebuild_pseudonym_index(&mut self) {
        let salt = self.chain.chain_salt;
        self.pseudonym_index = self
            .registry
            .persons()
            .map(|p| {
                (
                    crate::registry::CodeName::derive(&p.person_id, &salt).to_string(),
                    p.person_id.clone(),
                )
            })
            .collect();
    }

    /// Ingest a corpus file and refresh the pseudonym index.
    pub fn ingest_corpus(
        &mut self,
        path: &Path,
    ) -> Result<crate::registry::IngestReport, WorkflowError> {
        let report = self.registry.ingest_corpus(path)?;
        self.rebuild_pseudonym_index();
        // Statuses of articles with open cases are chain-derived.
        let statuses: Vec<(String, ArticleStatus)> = self
            .cases
            .values()
            .map(|c| (c.article_id.clone(), c.status))
            .collect();
        for (article_id, status) in statuses {
            self.registry.set_article_status(&article_id, status)?;
        }
        Ok(report)
    }

    /// Rebuild every derived structure from the chain alone.
    pub fn replay(&mut self) -> Result<(), WorkflowError> {
        self.cases.clear();
        self.queues.clear();
        self.invitation_index.clear();
        self.history = ReviewerHistory::new();
        self.replaying = true;
        let payloads: Vec<Vec<u8>> = self.chain.blocks[1..]
            .iter()
            .map(|b| b.payload.clone())
            .collect();
        let result = (|| {
            for payload in &payloads {
                let event = WorkflowEvent::from_payload(payload)?;
                self.integrate(&event)?;
            }
            Ok(())
        })();
        self.replaying = false;
        result
    }

    /// Mine one event into the chain, then fold it into derived state.
    fn commit(&mut self, event: WorkflowEvent, now: u64) -> Result<(), WorkflowError> {
        let payload = event.canonical_bytes();
        let (block, _tries) = mine_block(self.chain.tip(), payload, self.chain.difficulty, now)?;
        self.chain.append(block)?;
        self.integrate(&event)
    }

    /// The single interpreter for events, shared by live commits and replay.
    fn integrate(&mut self, event: &WorkflowEvent) -> Result<(), WorkflowError> {
        match event.event_type {
            EventType::Submitted => {
                if self.cases.contains_key(&event.article_id) {
                    return Err(WorkflowError::DuplicateCase(event.article_id.clone()));
                }
                let mut case = CaseState::new(&event.article_id);
                case.apply(event)?;
                self.cases.insert(event.article_id.clone(), case);
            }
            _ => {
                let case = self
                    .cases
                    .get_mut(&event.article_id)
                    .ok_or_else(|| WorkflowError::UnknownCase(event.article_id.clone()))?;
                case.apply(event)?;
            }
        }

        match event.event_type {
            EventType::Screened => {
                let decision: ScreenDecision = serde_json::from_value(serde_json::Value::String(
                    event.detail_text("decision")?.to_string(),
                ))
                .map_err(|e| WorkflowError::BadEvent(e.to_string()))?;
                if decision == ScreenDecision::Proceed {
                    let candidates = filter_reviewers(
                        &event.article_id,
                        &self.registry,
                        &self.history,
                        self.config.min_score,
                    )?;
                    let article = self.registry.article(&event.article_id)?;
                    let eligible = eligible_candidates(article, &candidates, &self.registry);
                    self.queues
                        .insert(event.article_id.clone(), eligible.into());
                }
            }
            EventType::InvitationSent => {
                let invitation_id = event.detail_text("invitation_id")?.to_string();
                let reviewer = event.detail_text("reviewer")?.to_string();
                self.invitation_index
                    .insert(invitation_id.clone(), event.article_id.clone());
                if let Some(person) = self.pseudonym_index.get(&reviewer).cloned() {
                    if let Some(queue) = self.queues.get_mut(&event.article_id) {
                        queue.retain(|p| *p != person);
                    }
                }
                if !self.replaying {
                    self.write_outbox(&OutboxMessage {
                        invitation_id,
                        article_id: event.article_id.clone(),
                        reviewer_pseudonym: reviewer,
                        sent_at: event.at,
                        respond_by: event.detail_int("respond_by")?,
                    })?;
                }
            }
            EventType::InvitationAnswered => {
                let answer: InvitationAnswer = serde_json::from_value(
                    serde_json::Value::String(event.detail_text("answer")?.to_string()),
                )
                .map_err(|e| WorkflowError::BadEvent(e.to_string()))?;
                if answer == InvitationAnswer::Decline {
                    self.record_outcome_for(
                        &event.actor_pseudonym,
                        &event.article_id,
                        ReviewOutcome::Declined,
                    )?;
                }
            }
            EventType::InvitationExpired => {
                let invitation_id = event.detail_text("invitation_id")?;
                let case = self.case(&event.article_id)?;
                let reviewer = case
                    .invitation(invitation_id)
                    .ok_or_else(|| WorkflowError::UnknownInvitation(invitation_id.to_string()))?
                    .reviewer_pseudonym
                    .clone();
                self.record_outcome_for(&reviewer, &event.article_id, ReviewOutcome::Expired)?;
            }
            EventType::ReportSubmitted => {
                let recommendation: Recommendation = serde_json::from_value(
                    serde_json::Value::String(event.detail_text("recommendation")?.to_string()),
                )
                .map_err(|e| WorkflowError::BadEvent(e.to_string()))?;
                if recommendation == Recommendation::Reject {
                    self.record_outcome_for(
                        &event.actor_pseudonym,
                        &event.article_id,
                        ReviewOutcome::ReportedReject,
                    )?;
                }
            }
            EventType::Submitted | EventType::Decision => {}
        }

        let status = self.case(&event.article_id)?.status;
        self.registry.set_article_status(&event.article_id, status)?;
        Ok(())
    }

    fn record_outcome_for(
        &mut self,
        pseudonym: &str,
        article_id: &str,
        outcome: ReviewOutcome,
    ) -> Result<(), WorkflowError> {
        let person = self
            .pseudonym_index
            .get(pseudonym)
            .ok_or_else(|| {
                WorkflowError::BadEvent(format!("pseudonym {pseudonym} matches no registered person"))
            })?
            .clone();
        self.history
            .record_outcome(&self.registry, &person, article_id, outcome)?;
        Ok(())
    }

    fn write_outbox(&self, message: &OutboxMessage) -> Result<(), WorkflowError> {
        let Some(dir) = &self.outbox_dir else {
            return Ok(());
        };
        fs::create_dir_all(dir)?;
        let path = dir.join(format!("{}.json", message.invitation_id));
        let mut bytes = serde_json::to_vec_pretty(message)
            .map_err(|e| WorkflowError::BadEvent(e.to_string()))?;
        bytes.push(b'\n');
        fs::write(path, bytes)?;
        Ok(())
    }

    /// Open a review case for a registered article. One block.
    pub fn submit_manuscript(
        &mut self,
        article_id: &str,
        now: u64,
    ) -> Result<&CaseState, WorkflowError> {
        self.registry.article(article_id)?;
        if self.cases.contains_key(article_id) {
            return Err(WorkflowError::DuplicateCase(article_id.to_string()));
        }
        self.commit(WorkflowEvent::submitted(article_id, now), now)?;
        self.case(article_id)
    }

    /// Screen a submitted case. DeskReject ends it; Proceed computes the
    /// candidate queue and dispatches the initial invitation batch. The
    /// Screened block lands first, so an insufficient reviewer pool leaves
    /// the case durably in Screening.
    pub fn screen(
        &mut self,
        article_id: &str,
        decision: ScreenDecision,
        now: u64,
    ) -> Result<Vec<String>, WorkflowError> {
        let case = self.case(article_id)?;
        if !matches!(
            case.status,
            ArticleStatus::Submitted | ArticleStatus::Screening
        ) {
            return Err(WorkflowError::InvalidState(format!(
                "cannot screen case in status {}",
                case.status
            )));
        }
        self.commit(WorkflowEvent::screened(article_id, decision, now), now)?;
        if decision == ScreenDecision::DeskReject {
            return Ok(Vec::new());
        }
        let y = self.config.initial_invitations;
        debug_assert!((MIN_REVIEWERS..=MAX_REVIEWERS).contains(&y));
        let available = self.queues.get(article_id).map_or(0, VecDeque::len) as u32;
        if available < y {
            return Err(WorkflowError::Selection(
                crate::selection::SelectionError::InsufficientReviewers {
                    needed: y,
                    found: available,
                },
            ));
        }
        let mut sent = Vec::new();
        for _ in 0..y {
            sent.push(self.dispatch_invitation(article_id, now)?);
        }
        Ok(sent)
    }

    /// Mine one invitation to the head of the article's candidate queue.
    fn dispatch_invitation(&mut self, article_id: &str, at: u64) -> Result<String, WorkflowError> {
        let person = self
            .queues
            .get(article_id)
            .and_then(|q| q.front())
            .ok_or_else(|| {
                WorkflowError::InvalidState(format!(
                    "no remaining eligible reviewers for article {article_id}"
                ))
            })?
            .clone();
        let pseudonym = self.pseudonym_of(&person)?;
        let invitation_id = self.case(article_id)?.next_invitation_id();
        self.commit(
            WorkflowEvent::invitation_sent(article_id, &invitation_id, &pseudonym, at),
            at,
        )?;
        Ok(invitation_id)
    }

    fn find_invitation_case(&self, invitation_id: &str) -> Result<&CaseState, WorkflowError> {
        let article_id = self
            .invitation_index
            .get(invitation_id)
            .ok_or_else(|| WorkflowError::UnknownInvitation(invitation_id.to_string()))?;
        self.case(article_id)
    }

    /// Record a reviewer's answer to a pending invitation. Answers landing
    /// exactly on the deadline count; later ones are rejected. A decline
    /// triggers a replacement invitation while the case still needs
    /// reviewers and candidates remain.
    pub fn respond(
        &mut self,
        invitation_id: &str,
        answer: InvitationAnswer,
        now: u64,
    ) -> Result<(), WorkflowError> {
        let case = self.find_invitation_case(invitation_id)?;
        let article_id = case.article_id.clone();
        let invitation = case
            .invitation(invitation_id)
            .expect("indexed invitation exists");
        match invitation.state {
            InvitationState::Pending => {}
            InvitationState::Expired => {
                return Err(WorkflowError::LateResponse(invitation_id.to_string()))
            }
            InvitationState::Accepted | InvitationState::Declined => {
                return Err(WorkflowError::InvalidState(format!(
                    "invitation {invitation_id} already answered"
                )))
            }
        }
        if now > invitation.respond_by {
            return Err(WorkflowError::LateResponse(invitation_id.to_string()));
        }
        let pseudonym = invitation.reviewer_pseudonym.clone();
        self.commit(
            WorkflowEvent::invitation_answered(&article_id, invitation_id, &pseudonym, answer, now),
            now,
        )?;
        if answer == InvitationAnswer::Decline {
            self.maybe_replace(&article_id, now)?;
        }
        Ok(())
    }

    /// File a review report for an accepted invitation, at most once per
    /// round, no later than its due time.
    pub fn submit_report(
        &mut self,
        invitation_id: &str,
        recommendation: Recommendation,
        now: u64,
    ) -> Result<(), WorkflowError> {
        let case = self.find_invitation_case(invitation_id)?;
        let article_id = case.article_id.clone();
        let invitation = case
            .invitation(invitation_id)
            .expect("indexed invitation exists");
        match invitation.state {
            InvitationState::Accepted => {}
            InvitationState::Expired => {
                return Err(WorkflowError::ReportOverdue(invitation_id.to_string()))
            }
            InvitationState::Pending | InvitationState::Declined => {
                return Err(WorkflowError::InvalidState(format!(
                    "invitation {invitation_id} was never accepted"
                )))
            }
        }
        if invitation.reported {
            return Err(WorkflowError::DuplicateReport(invitation_id.to_string()));
        }
        let due = invitation
            .report_due
            .expect("accepted invitations carry a due time");
        if now > due {
            return Err(WorkflowError::ReportOverdue(invitation_id.to_string()));
        }
        let pseudonym = invitation.reviewer_pseudonym.clone();
        self.commit(
            WorkflowEvent::report_submitted(
                &article_id,
                invitation_id,
                &pseudonym,
                recommendation,
                now,
            ),
            now,
        )?;
        Ok(())
    }

    /// Record the editorial verdict on a case awaiting one.
    pub fn decide(
        &mut self,
        article_id: &str,
        verdict: Verdict,
        now: u64,
    ) -> Result<(), WorkflowError> {
        let case = self.case(article_id)?;
        if case.status != ArticleStatus::DecisionPending {
            return Err(WorkflowError::InvalidState(format!(
                "cannot decide case in status {}",
                case.status
            )));
        }
        self.commit(WorkflowEvent::decision(article_id, verdict, now), now)?;
        Ok(())
    }

    /// Send one replacement invitation if the case is still short of the
    /// review quorum and eligible candidates remain. Dated at the moment
    /// that freed the slot.
    fn maybe_replace(&mut self, article_id: &str, at: u64) -> Result<bool, WorkflowError> {
        let case = self.case(article_id)?;
        if case.status.is_terminal()
            || case.accepted_count() >= MIN_ACCEPTED_REVIEWS
            || self.queues.get(article_id).is_none_or(VecDeque::is_empty)
        {
            return Ok(false);
        }
        self.dispatch_invitation(article_id, at)?;
        Ok(true)
    }

    /// Advance workflow time to `now`: expire every lapsed invitation and
    /// report obligation in deterministic deadline order, sending
    /// replacements as slots free up. Events are dated at their deadlines,
    /// so `tick(t1); tick(t2)` mines exactly the blocks `tick(t2)` would.
    pub fn tick(&mut self, now: u64) -> Result<TickSummary, WorkflowError> {
        let mut summary = TickSummary::default();
        loop {
            let Some((deadline, article_id, invitation_id, reason)) = self.next_lapse(now) else {
                break;
            };
            self.commit(
                WorkflowEvent::invitation_expired(&article_id, &invitation_id, reason, deadline),
                deadline,
            )?;
            match reason {
                ExpiryReason::ResponseTimeout => summary.invitations_expired += 1,
                ExpiryReason::ReportTimeout => summary.reports_overdue += 1,
            }
            if self.maybe_replace(&article_id, deadline)? {
                summary.replacements_sent += 1;
            }
        }
        Ok(summary)
    }

    /// Earliest lapsed deadline strictly before `now`, tie-broken by
    /// article then invitation id so cascade order never depends on map
    /// iteration or wall time.
    fn next_lapse(&self, now: u64) -> Option<(u64, String, String, ExpiryReason)> {
        let mut best: Option<(u64, String, String, ExpiryReason)> = None;
        for case in self.cases.values() {
            if case.status.is_terminal() {
                continue;
            }
            for invitation in &case.invitations {
                let candidate = match invitation.state {
                    InvitationState::Pending if invitation.respond_by < now => Some((
                        invitation.respond_by,
                        ExpiryReason::ResponseTimeout,
                    )),
                    InvitationState::Accepted if !invitation.reported => match invitation
                        .report_due
                    {
                        Some(due) if due < now => Some((due, ExpiryReason::ReportTimeout)),
                        _ => None,
                    },
                    _ => None,
                };
                if let Some((deadline, reason)) = candidate {
                    let key = (
                        deadline,
                        case.article_id.clone(),
                        invitation.invitation_id.clone(),
                        reason,
                    );
                    if best.as_ref().is_none_or(|b| {
                        (key.0, &key.1, &key.2) < (b.0, &b.1, &b.2)
                    }) {
                        best = Some(key);
                    }
                }
            }
        }
        best
    }
}
