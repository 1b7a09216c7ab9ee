//! Entity store: people, articles, the keyword index, the co-authorship
//! graph, and salted pseudonyms.
//!
//! A pseudonym (code name) is `sha256(chain_salt || person_id)` rendered as
//! lowercase hex, so reviewer identities never appear on the ledger or in
//! any outbound notification.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ledger::Hash256;

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("unsupported corpus schema version {0}")]
    UnknownSchemaVersion(u64),
    #[error("corpus parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("lookup error: unknown person {0}")]
    UnknownPerson(String),
    #[error("lookup error: unknown article {0}")]
    UnknownArticle(String),
    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Author,
    Reviewer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Person {
    pub person_id: String,
    pub display_name: String,
    pub roles: BTreeSet<Role>,
    pub keywords: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orcid_like_id: Option<String>,
}

impl Person {
    pub fn is_reviewer(&self) -> bool {
        self.roles.contains(&Role::Reviewer)
    }
}

/// Where a manuscript sits in its editorial lifecycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArticleStatus {
    Submitted,
    Screening,
    DeskRejected,
    InvitationsOut,
    InReview,
    DecisionPending,
    Revise,
    Accepted,
    Rejected,
}

impl ArticleStatus {
    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            ArticleStatus::DeskRejected | ArticleStatus::Accepted | ArticleStatus::Rejected
        )
    }
}

impl std::fmt::Display for ArticleStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let text = match self {
            ArticleStatus::Submitted => "Submitted",
            ArticleStatus::Screening => "Screening",
            ArticleStatus::DeskRejected => "DeskRejected",
            ArticleStatus::InvitationsOut => "InvitationsOut",
            ArticleStatus::InReview => "InReview",
            ArticleStatus::DecisionPending => "DecisionPending",
            ArticleStatus::Revise => "Revise",
            ArticleStatus::Accepted => "Accepted",
            ArticleStatus::Rejected => "Rejected",
        };
        f.write_str(text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Article {
    pub article_id: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub keywords: BTreeSet<String>,
    pub author_ids: Vec<String>,
    pub status: ArticleStatus,
    pub submitted_at: u64,
}

/// Salted reviewer pseudonym: 64 lowercase hex chars.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CodeName(Hash256);

impl CodeName {
    /// `sha256(chain_salt || utf8(person_id))`.
    pub fn derive(person_id: &str, chain_salt: &[u8; 32]) -> CodeName {
        let mut hasher = Sha256::new();
        hasher.update(chain_salt);
        hasher.update(person_id.as_bytes());
        CodeName(Hash256::from_bytes(hasher.finalize().into()))
    }

    pub fn as_hash(&self) -> &Hash256 {
        &self.0
    }
}

impl std::fmt::Display for CodeName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

/// Symmetric co-authorship adjacency derived from article author lists.
/// Only direct collaborators are connected: shared co-authors do not chain
/// into transitive edges.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CoauthorshipGraph {
    edges: BTreeMap<String, BTreeSet<String>>,
}

impl CoauthorshipGraph {
    pub fn add_author_group(&mut self, author_ids: &[String]) {
        for a in author_ids {
            for b in author_ids {
                if a != b {
                    self.edges.entry(a.clone()).or_default().insert(b.clone());
                }
            }
        }
    }

    pub fn are_coauthors(&self, a: &str, b: &str) -> bool {
        self.edges.get(a).is_some_and(|set| set.contains(b))
    }

    pub fn coauthors_of(&self, person_id: &str) -> impl Iterator<Item = &str> {
        self.edges
            .get(person_id)
            .into_iter()
            .flat_map(|set| set.iter().map(String::as_str))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.values().map(BTreeSet::len).sum::<usize>() / 2
    }
}

/// A record the ingester could not accept, with the offending id and reason.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RecordReject {
    pub record_id: String,
    pub reason: String,
}

/// Counts and per-record rejects from one corpus ingestion.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub persons_added: usize,
    pub articles_added: usize,
    pub rejects: Vec<RecordReject>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Registry {
    persons: BTreeMap<String, Person>,
    articles: BTreeMap<String, Article>,
    #[serde(skip)]
    coauthors: CoauthorshipGraph,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusFile {
    version: u64,
    #[serde(default)]
    persons: Vec<Value>,
    #[serde(default)]
    articles: Vec<Value>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PersonRecord {
    person_id: String,
    display_name: String,
    roles: Vec<Role>,
    #[serde(default)]
    keywords: Vec<String>,
    #[serde(default)]
    orcid_like_id: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ArticleRecord {
    article_id: String,
    title: String,
    #[serde(rename = "abstract")]
    abstract_text: String,
    #[serde(default)]
    keywords: Vec<String>,
    author_ids: Vec<String>,
    submitted_at: u64,
}

/// Lowercase, trim, drop empties, dedup.
pub fn normalize_keywords<I, S>(raw: I) -> BTreeSet<String>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    raw.into_iter()
        .map(|k| k.as_ref().trim().to_lowercase())
        .filter(|k| !k.is_empty())
        .collect()
}

/// |A ∩ B| / |A ∪ B|; zero when both sets are empty.
pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    let intersection = a.intersection(b).count();
    let union = a.len() + b.len() - intersection;
    intersection as f64 / union as f64
}

fn value_id(value: &Value, key: &str) -> String {
    value
        .get(key)
        .and_then(Value::as_str)
        .unwrap_or("<missing id>")
        .to_string()
}

impl Registry {
    pub fn new() -> Registry {
        Registry::default()
    }

    pub fn person(&self, person_id: &str) -> Result<&Person, RegistryError> {
        self.persons
            .get(person_id)
            .ok_or_else(|| RegistryError::UnknownPerson(person_id.to_string()))
    }

    pub fn article(&self, article_id: &str) -> Result<&Article, RegistryError> {
        self.articles
            .get(article_id)
            .ok_or_else(|| RegistryError::UnknownArticle(article_id.to_string()))
    }

    pub fn persons(&self) -> impl Iterator<Item = &Person> {
        self.persons.values()
    }

    pub fn articles(&self) -> impl Iterator<Item = &Article> {
        self.articles.values()
    }

    pub fn reviewers(&self) -> impl Iterator<Item = &Person> {
        self.persons.values().filter(|p| p.is_reviewer())
    }

    pub fn coauthors(&self) -> &CoauthorshipGraph {
        &self.coauthors
    }

    pub fn set_article_status(
        &mut self,
        article_id: &str,
        status: ArticleStatus,
    ) -> Result<(), RegistryError> {
        let article = self
            .articles
            .get_mut(article_id)
            .ok_or_else(|| RegistryError::UnknownArticle(article_id.to_string()))?;
        article.status = status;
        Ok(())
    }

    /// Jaccard similarity between a person's keywords and an article's.
    pub fn keyword_score(&self, person_id: &str, article_id: &str) -> Result<f64, RegistryError> {
        let person = self.person(person_id)?;
        let article = self.article(article_id)?;
        Ok(jaccard(&person.keywords, &article.keywords))
    }

    /// Stable salted pseudonym for a registered person.
    pub fn pseudonym(
        &self,
        person_id: &str,
        chain_salt: &[u8; 32],
    ) -> Result<CodeName, RegistryError> {
        self.person(person_id)?;
        Ok(CodeName::derive(person_id, chain_salt))
    }

    /// Ingest a versioned corpus file. Persons load before articles so an
    /// article can cite authors from its own file. Records that conflict
    /// with already-stored ones (same id, different content) are rejected
    /// individually; byte-identical re-ingestion is a no-op.
    pub fn ingest_corpus(&mut self, path: &Path) -> Result<IngestReport, RegistryError> {
        let text = fs::read_to_string(path)?;
        let corpus: CorpusFile = serde_json::from_str(&text)?;
        if corpus.version != 1 {
            return Err(RegistryError::UnknownSchemaVersion(corpus.version));
        }

        let mut report = IngestReport::default();

        for raw in &corpus.persons {
            let record_id = value_id(raw, "person_id");
            match serde_json::from_value::<PersonRecord>(raw.clone()) {
                Ok(record) => {
                    if let Err(reason) = self.ingest_person(record, &mut report) {
                        report.rejects.push(RecordReject { record_id, reason });
                    }
                }
                Err(e) => report.rejects.push(RecordReject {
                    record_id,
                    reason: format!("malformed person record: {e}"),
                }),
            }
        }

        for raw in &corpus.articles {
            let record_id = value_id(raw, "article_id");
            match serde_json::from_value::<ArticleRecord>(raw.clone()) {
                Ok(record) => {
                    if let Err(reason) = self.ingest_article(record, &mut report) {
                        report.rejects.push(RecordReject { record_id, reason });
                    }
                }
                Err(e) => report.rejects.push(RecordReject {
                    record_id,
                    reason: format!("malformed article record: {e}"),
                }),
            }
        }

        self.rebuild_coauthors();
        Ok(report)
    }

    fn ingest_person(
        &mut self,
        record: PersonRecord,
        report: &mut IngestReport,
    ) -> Result<(), String> {
        if record.person_id.trim().is_empty() {
            return Err("person_id must be non-empty".into());
        }
        if record.roles.is_empty() {
            return Err("roles must be non-empty".into());
        }
        let person = Person {
            person_id: record.person_id,
            display_name: record.display_name,
            roles: record.roles.into_iter().collect(),
            keywords: normalize_keywords(record.keywords),
            orcid_like_id: record.orcid_like_id,
        };
        match self.persons.get(&person.person_id) {
            Some(existing) if *existing == person => Ok(()),
            Some(_) => Err("conflicting duplicate person_id".into()),
            None => {
                self.persons.insert(person.person_id.clone(), person);
                report.persons_added += 1;
                Ok(())
            }
        }
    }

    fn ingest_article(
        &mut self,
        record: ArticleRecord,
        report: &mut IngestReport,
    ) -> Result<(), String> {
        if record.article_id.trim().is_empty() {
            return Err("article_id must be non-empty".into());
        }
        if record.author_ids.is_empty() {
            return Err("author_ids must be non-empty".into());
        }
        for author in &record.author_ids {
            if !self.persons.contains_key(author) {
                return Err(format!("unresolvable author_id {author}"));
            }
        }
        let article = Article {
            article_id: record.article_id,
            title: record.title,
            abstract_text: record.abstract_text,
            keywords: normalize_keywords(record.keywords),
            author_ids: record.author_ids,
            status: ArticleStatus::Submitted,
            submitted_at: record.submitted_at,
        };
        match self.articles.get(&article.article_id) {
            // Workflow may have advanced the stored status, so identity
            // ignores it: re-ingesting the original corpus stays a no-op.
            Some(existing) if same_article_content(existing, &article) => Ok(()),
            Some(_) => Err("conflicting duplicate article_id".into()),
            None => {
                self.articles.insert(article.article_id.clone(), article);
                report.articles_added += 1;
                Ok(())
            }
        }
    }

    pub fn rebuild_coauthors(&mut self) {
        let mut graph = CoauthorshipGraph::default();
        for article in self.articles.values() {
            graph.add_author_group(&article.author_ids);
        }
        self.coauthors = graph;
    }

    pub fn load(path: &Path) -> Result<Registry, RegistryError> {
        let text = fs::read_to_string(path)?;
        let mut registry: Registry = serde_json::from_str(&text)?;
        registry.rebuild_coauthors();
        Ok(registry)
    }

    pub fn save(&self, path: &Path) -> Result<(), RegistryError> {
        let tmp = path.with_extension("tmp");
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        fs::write(&tmp, &bytes)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }
}

fn same_article_content(a: &Article, b: &Article) -> bool {
    a.article_id == b.article_id
        && a.title == b.title
        && a.abstract_text == b.abstract_text
        && a.keywords == b.keywords
        && a.author_ids == b.author_ids
        && a.submitted_at == b.submitted_at
}
