//! Reviewer selection: keyword scoring, priority classes, conflict-of-
//! interest filtering, and per-reviewer outcome history.
//!
//! Candidates are every registered reviewer whose keyword score strictly
//! exceeds the threshold, ordered Normal before Low priority, then score
//! descending, then person id ascending. Selection walks that order,
//! skipping the article's authors and anyone who has co-authored with one,
//! and takes the first `y` names.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::registry::{jaccard, Article, Registry, RegistryError};

/// Invitations per article: at least 3 reports are required for a decision
/// and 6 invitations go out initially, so the target sits in this window.
pub const MIN_REVIEWERS: u32 = 3;
pub const MAX_REVIEWERS: u32 = 6;
/// Score threshold: with the default of zero, any keyword overlap
/// qualifies and disjoint keyword sets never do.
pub const DEFAULT_MIN_SCORE: f64 = 0.0;

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("parameter error: reviewer target {0} outside {MIN_REVIEWERS}..={MAX_REVIEWERS}")]
    TargetOutOfRange(u32),
    #[error(
        "insufficient reviewers: needed {needed}, found {found} eligible (short by {})",
        needed - found
    )]
    InsufficientReviewers { needed: u32, found: u32 },
    #[error(transparent)]
    Registry(#[from] RegistryError),
}

/// Reviewers with a prior decline, expiry, or negative review of the
/// article at hand sort after everyone else.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PriorityClass {
    Normal,
    Low,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub person_id: String,
    pub score: f64,
    pub priority_class: PriorityClass,
}

/// Scored reviewers in selection order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CandidateList(Vec<Candidate>);

impl CandidateList {
    pub fn as_slice(&self) -> &[Candidate] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = &Candidate> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// The chosen reviewer ids, in candidate order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectedReviewers {
    pub reviewers: Vec<String>,
    pub target_count: u32,
}

/// What a reviewer did with an invitation, as far as future selection cares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReviewOutcome {
    Accepted,
    Declined,
    Expired,
    ReportedReject,
    ReportedOther,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonHistory {
    /// Invitations this person declined or let expire.
    pub declined_count: u32,
    /// Articles this person recommended rejecting.
    pub negative_reviewed: BTreeSet<String>,
}

/// Per-reviewer outcome history feeding the priority demotion rule.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewerHistory {
    entries: BTreeMap<String, PersonHistory>,
}

impl ReviewerHistory {
    pub fn new() -> ReviewerHistory {
        ReviewerHistory::default()
    }

    pub fn get(&self, person_id: &str) -> Option<&PersonHistory> {
        self.entries.get(person_id)
    }

    pub fn is_low_priority(&self, person_id: &str, article_id: &str) -> bool {
        self.entries.get(person_id).is_some_and(|h| {
            h.declined_count > 0 || h.negative_reviewed.contains(article_id)
        })
    }

    /// Fold one invitation outcome into the history. The person must be
    /// registered; accepting an invitation or filing a non-negative report
    /// leaves the record unchanged.
    pub fn record_outcome(
        &mut self,
        registry: &Registry,
        person_id: &str,
        article_id: &str,
        outcome: ReviewOutcome,
    ) -> Result<(), SelectionError> {
        registry.person(person_id)?;
        registry.article(article_id)?;
        let entry = self.entries.entry(person_id.to_string()).or_default();
        match outcome {
            ReviewOutcome::Declined | ReviewOutcome::Expired => entry.declined_count += 1,
            ReviewOutcome::ReportedReject => {
                entry.negative_reviewed.insert(article_id.to_string());
            }
            ReviewOutcome::Accepted | ReviewOutcome::ReportedOther => {}
        }
        Ok(())
    }
}

/// Score every registered reviewer against the article and return those
/// strictly above `min_score`, sorted into selection order.
pub fn filter_reviewers(
    article_id: &str,
    registry: &Registry,
    history: &ReviewerHistory,
    min_score: f64,
) -> Result<CandidateList, SelectionError> {
    let article = registry.article(article_id)?;
    let mut candidates: Vec<Candidate> = registry
        .reviewers()
        .filter_map(|person| {
            let score = jaccard(&person.keywords, &article.keywords);
            if score <= min_score {
                return None;
            }
            let priority_class = if history.is_low_priority(&person.person_id, article_id) {
                PriorityClass::Low
            } else {
                PriorityClass::Normal
            };
            Some(Candidate {
                person_id: person.person_id.clone(),
                score,
                priority_class,
            })
        })
        .collect();
    candidates.sort_by(|a, b| {
        a.priority_class
            .cmp(&b.priority_class)
            .then_with(|| b.score.total_cmp(&a.score))
            .then_with(|| a.person_id.cmp(&b.person_id))
    });
    Ok(CandidateList(candidates))
}

/// Candidate ids that survive the conflict-of-interest walk: authors of the
/// article and direct co-authors of any author are skipped, order preserved.
pub fn eligible_candidates(
    article: &Article,
    candidates: &CandidateList,
    registry: &Registry,
) -> Vec<String> {
    let authors: BTreeSet<&str> = article.author_ids.iter().map(String::as_str).collect();
    let graph = registry.coauthors();
    candidates
        .iter()
        .filter(|c| {
            let id = c.person_id.as_str();
            if authors.contains(id) {
                return false;
            }
            !authors.iter().any(|author| graph.are_coauthors(author, id))
        })
        .map(|c| c.person_id.clone())
        .collect()
}

/// Take the first `y` eligible candidates. `y` must lie in 3..=6; a short
/// eligible list is an error naming the shortfall.
pub fn select_reviewers(
    article: &Article,
    y: u32,
    candidates: &CandidateList,
    registry: &Registry,
) -> Result<SelectedReviewers, SelectionError> {
    if !(MIN_REVIEWERS..=MAX_REVIEWERS).contains(&y) {
        return Err(SelectionError::TargetOutOfRange(y));
    }
    let eligible = eligible_candidates(article, candidates, registry);
    if (eligible.len() as u32) < y {
        return Err(SelectionError::InsufficientReviewers {
            needed: y,
            found: eligible.len() as u32,
        });
    }
    Ok(SelectedReviewers {
        reviewers: eligible.into_iter().take(y as usize).collect(),
        target_count: y,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::Role;
    use proptest::prelude::*;
    use std::fs;
    use std::path::PathBuf;

    struct CorpusBuilder {
        persons: Vec<serde_json::Value>,
        articles: Vec<serde_json::Value>,
    }

    impl CorpusBuilder {
        fn new() -> CorpusBuilder {
            CorpusBuilder {
                persons: Vec::new(),
                articles: Vec::new(),
            }
        }

        fn person(mut self, id: &str, roles: &[Role], kws: &[&str]) -> Self {
            self.persons.push(serde_json::json!({
                "person_id": id,
                "display_name": format!("Name {id}"),
                "roles": roles,
                "keywords": kws,
            }));
            self
        }

        fn reviewer(self, id: &str, kws: &[&str]) -> Self {
            self.person(id, &[Role::Reviewer], kws)
        }

        fn article(mut self, id: &str, kws: &[&str], authors: &[&str]) -> Self {
            self.articles.push(serde_json::json!({
                "article_id": id,
                "title": format!("Title {id}"),
                "abstract": "text",
                "keywords": kws,
                "author_ids": authors,
                "submitted_at": 10,
            }));
            self
        }

        fn build(self, dir: &tempfile::TempDir) -> Registry {
            let corpus = serde_json::json!({
                "version": 1,
                "persons": self.persons,
                "articles": self.articles,
            });
            let path: PathBuf = dir.path().join("corpus.json");
            fs::write(&path, serde_json::to_vec(&corpus).unwrap()).unwrap();
            let mut registry = Registry::new();
            let report = registry.ingest_corpus(&path).unwrap();
            assert!(report.rejects.is_empty(), "rejects: {:?}", report.rejects);
            registry
        }
    }

    fn ids(list: &CandidateList) -> Vec<&str> {
        list.iter().map(|c| c.person_id.as_str()).collect()
    }

    #[test]
    fn no_reviewer_roles_means_empty_list() {
        let dir = tempfile::tempdir().unwrap();
        let registry = CorpusBuilder::new()
            .person("auth1", &[Role::Author], &["graphs"])
            .person("auth2", &[Role::Author], &["graphs"])
            .article("a1", &["graphs"], &["auth1"])
            .build(&dir);
        let list =
            filter_reviewers("a1", &registry, &ReviewerHistory::new(), 0.0).unwrap();
        assert!(list.is_empty());
    }

    #[test]
    fn zero_score_excluded_under_default_threshold() {
        let dir = tempfile::tempdir().unwrap();
        let registry = CorpusBuilder::new()
            .person("auth", &[Role::Author], &[])
            .reviewer("rmatch", &["graphs"])
            .reviewer("rdisjoint", &["pottery"])
            .article("a1", &["graphs"], &["auth"])
            .build(&dir);
        let list =
            filter_reviewers("a1", &registry, &ReviewerHistory::new(), DEFAULT_MIN_SCORE)
                .unwrap();
        assert_eq!(ids(&list), vec!["rmatch"]);
    }

    #[test]
    fn equal_scores_tie_break_on_person_id() {
        let dir = tempfile::tempdir().unwrap();
        let registry = CorpusBuilder::new()
            .person("auth", &[Role::Author], &[])
            .reviewer("p2", &["graphs"])
            .reviewer("p1", &["graphs"])
            .article("a1", &["graphs"], &["auth"])
            .build(&dir);
        let list =
            filter_reviewers("a1", &registry, &ReviewerHistory::new(), 0.0).unwrap();
        assert_eq!(ids(&list), vec!["p1", "p2"]);
        assert_eq!(list.as_slice()[0].score, 1.0);
    }

    #[test]
    fn low_priority_sorts_after_normal_regardless_of_score() {
        let dir = tempfile::tempdir().unwrap();
        let registry = CorpusBuilder::new()
            .person("auth", &[Role::Author], &[])
            .reviewer("rstrong", &["graphs", "consensus"])
            .reviewer("rweak", &["graphs", "pottery"])
            .article("a1", &["graphs", "consensus"], &["auth"])
            .build(&dir);
        let mut history = ReviewerHistory::new();
        history
            .record_outcome(&registry, "rstrong", "a1", ReviewOutcome::Declined)
            .unwrap();
        let list = filter_reviewers("a1", &registry, &history, 0.0).unwrap();
        assert_eq!(ids(&list), vec!["rweak", "rstrong"]);
        assert_eq!(list.as_slice()[0].priority_class, PriorityClass::Normal);
        assert_eq!(list.as_slice()[1].priority_class, PriorityClass::Low);
        assert!(list.as_slice()[1].score > list.as_slice()[0].score);
    }

    #[test]
    fn negative_review_demotes_only_for_that_article() {
        let dir = tempfile::tempdir().unwrap();
        let registry = CorpusBuilder::new()
            .person("auth", &[Role::Author], &[])
            .reviewer("r1", &["graphs"])
            .reviewer("r2", &["graphs"])
            .article("a1", &["graphs"], &["auth"])
            .article("a2", &["graphs"], &["auth"])
            .build(&dir);
        let mut history = ReviewerHistory::new();
        history
            .record_outcome(&registry, "r1", "a1", ReviewOutcome::ReportedReject)
            .unwrap();
        let on_a1 = filter_reviewers("a1", &registry, &history, 0.0).unwrap();
        assert_eq!(ids(&on_a1), vec!["r2", "r1"]);
        let on_a2 = filter_reviewers("a2", &registry, &history, 0.0).unwrap();
        assert_eq!(ids(&on_a2), vec!["r1", "r2"]);
    }

    #[test]
    fn history_counts_expiries_like_declines() {
        let dir = tempfile::tempdir().unwrap();
        let registry = CorpusBuilder::new()
            .person("auth", &[Role::Author], &[])
            .reviewer("r1", &["graphs"])
            .article("a1", &["graphs"], &["auth"])
            .build(&dir);
        let mut history = ReviewerHistory::new();
        history
            .record_outcome(&registry, "r1", "a1", ReviewOutcome::Expired)
            .unwrap();
        history
            .record_outcome(&registry, "r1", "a1", ReviewOutcome::Expired)
            .unwrap();
        history
            .record_outcome(&registry, "r1", "a1", ReviewOutcome::Accepted)
            .unwrap();
        assert_eq!(history.get("r1").unwrap().declined_count, 2);
        assert!(history.get("r1").unwrap().negative_reviewed.is_empty());
        assert!(matches!(
            history.record_outcome(&registry, "ghost", "a1", ReviewOutcome::Declined),
            Err(SelectionError::Registry(RegistryError::UnknownPerson(_)))
        ));
    }

    #[test]
    fn authors_and_their_coauthors_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        // "buddy" co-authored x0 with author "auth"; both must be skipped.
        let registry = CorpusBuilder::new()
            .person("auth", &[Role::Author, Role::Reviewer], &["graphs"])
            .person("buddy", &[Role::Reviewer, Role::Author], &["graphs"])
            .reviewer("clean1", &["graphs"])
            .reviewer("clean2", &["graphs"])
            .reviewer("clean3", &["graphs"])
            .article("x0", &["hashing"], &["auth", "buddy"])
            .article("a1", &["graphs"], &["auth"])
            .build(&dir);
        let history = ReviewerHistory::new();
        let list = filter_reviewers("a1", &registry, &history, 0.0).unwrap();
        assert_eq!(ids(&list), vec!["auth", "buddy", "clean1", "clean2", "clean3"]);
        let article = registry.article("a1").unwrap();
        let eligible = eligible_candidates(article, &list, &registry);
        assert_eq!(eligible, vec!["clean1", "clean2", "clean3"]);
        let selected = select_reviewers(article, 3, &list, &registry).unwrap();
        assert_eq!(selected.reviewers, vec!["clean1", "clean2", "clean3"]);
    }

    #[test]
    fn target_outside_window_is_parameter_error() {
        let dir = tempfile::tempdir().unwrap();
        let registry = CorpusBuilder::new()
            .person("auth", &[Role::Author], &[])
            .reviewer("r1", &["graphs"])
            .article("a1", &["graphs"], &["auth"])
            .build(&dir);
        let list = filter_reviewers("a1", &registry, &ReviewerHistory::new(), 0.0).unwrap();
        let article = registry.article("a1").unwrap();
        assert!(matches!(
            select_reviewers(article, 2, &list, &registry),
            Err(SelectionError::TargetOutOfRange(2))
        ));
        assert!(matches!(
            select_reviewers(article, 7, &list, &registry),
            Err(SelectionError::TargetOutOfRange(7))
        ));
    }

    #[test]
    fn shortfall_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let registry = CorpusBuilder::new()
            .person("auth", &[Role::Author], &[])
            .reviewer("r1", &["graphs"])
            .reviewer("r2", &["graphs"])
            .article("a1", &["graphs"], &["auth"])
            .build(&dir);
        let list = filter_reviewers("a1", &registry, &ReviewerHistory::new(), 0.0).unwrap();
        let article = registry.article("a1").unwrap();
        let err = select_reviewers(article, 4, &list, &registry).unwrap_err();
        match &err {
            SelectionError::InsufficientReviewers { needed, found } => {
                assert_eq!((*needed, *found), (4, 2));
            }
            other => panic!("unexpected error {other:?}"),
        }
        assert!(err.to_string().contains("short by 2"), "{err}");
    }

    #[test]
    fn ten_reviewer_pool_selects_top_six() {
        let dir = tempfile::tempdir().unwrap();
        // Article keywords: {k1, k2, k3}. Reviewer rN has overlap padding to
        // tune scores; r10/r09 share all three, r01 shares one of four.
        let mut builder = CorpusBuilder::new().person("auth", &[Role::Author], &[]);
        let pool: &[(&str, &[&str])] = &[
            ("r01", &["k1", "z1", "z2", "z3"]),
            ("r02", &["k1", "z1", "z2"]),
            ("r03", &["k1", "z1"]),
            ("r04", &["k1"]),
            ("r05", &["k1", "k2", "z1", "z2"]),
            ("r06", &["k1", "k2", "z1"]),
            ("r07", &["k1", "k2"]),
            ("r08", &["k1", "k2", "k3", "z1"]),
            ("r09", &["k1", "k2", "k3"]),
            ("r10", &["k1", "k2", "k3"]),
        ];
        for (id, kws) in pool {
            builder = builder.reviewer(id, kws);
        }
        let registry = builder.article("a1", &["k1", "k2", "k3"], &["auth"]).build(&dir);
        let list = filter_reviewers("a1", &registry, &ReviewerHistory::new(), 0.0).unwrap();
        // Scores: r09, r10 = 1.0; r08 = 3/4; r07 = 2/3; r06 = 0.5; r05 = 0.4;
        // r04 = 1/3; r03 = 0.25; r02 = 0.2; r01 = 1/6.
        assert_eq!(
            ids(&list),
            vec!["r09", "r10", "r08", "r07", "r06", "r05", "r04", "r03", "r02", "r01"]
        );
        let article = registry.article("a1").unwrap();
        let selected = select_reviewers(article, 6, &list, &registry).unwrap();
        assert_eq!(
            selected.reviewers,
            vec!["r09", "r10", "r08", "r07", "r06", "r05"]
        );
    }

    proptest! {
        #[test]
        fn selection_never_includes_conflicted_people(
            reviewer_count in 3usize..9,
            coauthor_mask in any::<u16>(),
        ) {
            let dir = tempfile::tempdir().unwrap();
            let mut builder = CorpusBuilder::new()
                .person("auth", &[Role::Author, Role::Reviewer], &["k"]);
            let mut conflicted = Vec::new();
            let mut coauthor_group = vec!["auth".to_string()];
            for i in 0..reviewer_count {
                let id = format!("r{i:02}");
                builder = builder.reviewer(&id, &["k"]);
                if coauthor_mask & (1 << i) != 0 {
                    conflicted.push(id.clone());
                    coauthor_group.push(id);
                }
            }
            let group_refs: Vec<&str> =
                coauthor_group.iter().map(String::as_str).collect();
            builder = builder.article("prior", &["other"], &group_refs);
            builder = builder.article("a1", &["k"], &["auth"]);
            let registry = builder.build(&dir);
            let list =
                filter_reviewers("a1", &registry, &ReviewerHistory::new(), 0.0).unwrap();
            let article = registry.article("a1").unwrap();
            match select_reviewers(article, 3, &list, &registry) {
                Ok(selected) => {
                    prop_assert!(!selected.reviewers.contains(&"auth".to_string()));
                    for id in &conflicted {
                        prop_assert!(!selected.reviewers.contains(id));
                    }
                    prop_assert_eq!(selected.reviewers.len(), 3);
                }
                Err(SelectionError::InsufficientReviewers { needed, found }) => {
                    prop_assert_eq!(needed, 3);
                    prop_assert!(found < 3);
                }
                Err(other) => return Err(TestCaseError::fail(format!("{other}"))),
            }
        }
    }
}
