//! Acceptance suite: the nine externally visible guarantees this workspace
//! makes, one test per guarantee, each printing a single PASS/FAIL line
//! (visible with `cargo test --test acceptance -- --nocapture`).

use std::collections::BTreeSet;
use std::path::PathBuf;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use revchain_core::engine::{Engine, EngineConfig};
use revchain_core::ledger::{
    chain_to_bytes, load_chain, load_chain_bytes, run_trials, save_chain, Chain, Difficulty,
    Hash256,
};
use revchain_core::node::sim::SimNetwork;
use revchain_core::node::{resolve_fork, ForkChoice, PeerConfig, PeerNode};
use revchain_core::registry::{ArticleStatus, Registry};
use revchain_core::selection::{
    filter_reviewers, select_reviewers, ReviewOutcome, ReviewerHistory, SelectionError,
};
use revchain_core::workflow::{
    replay_chain, InvitationAnswer, InvitationState, Recommendation, ScreenDecision, Verdict,
    WorkflowEvent, INITIAL_INVITATIONS, MIN_ACCEPTED_REVIEWS, REPORT_WINDOW_MS,
    RESPONSE_WINDOW_MS,
};

fn report(number: u8, label: &str, failures: &[String]) {
    let verdict = if failures.is_empty() { "PASS" } else { "FAIL" };
    println!("ACCEPTANCE {number} {label}: {verdict}");
    assert!(
        failures.is_empty(),
        "acceptance {number} ({label}) violations:\n{}",
        failures.join("\n")
    );
}

fn d(prefix: u8) -> Difficulty {
    Difficulty::new(prefix).unwrap()
}

fn salt(tag: u64) -> [u8; 32] {
    let mut salt = [0u8; 32];
    salt[..8].copy_from_slice(&tag.to_be_bytes());
    salt
}

// 1. Mean tries to mine a block follows the 16^p geometric law.
#[test]
fn acceptance_1_geometric_mining_cost() {
    let mut failures = Vec::new();
    for (prefix, expected) in [(1u8, 16.0f64), (2, 256.0), (3, 4096.0)] {
        let samples = run_trials(d(prefix), 300, 0xA11CE).unwrap();
        let mean =
            samples.iter().map(|s| s.tries as f64).sum::<f64>() / samples.len() as f64;
        let deviation = (mean - expected).abs() / expected;
        if deviation > 0.20 {
            failures.push(format!(
                "prefix {prefix}: mean tries {mean:.1} deviates {:.1}% from {expected}",
                deviation * 100.0
            ));
        }
    }
    report(1, "mean mining tries track 16^prefix within 20%", &failures);
}

// 2. Raising the prefix by one multiplies the median mining time ~16x.
#[test]
fn acceptance_2_mining_time_grows_16x_per_prefix() {
    let mut failures = Vec::new();
    // Interleave the two prefixes so concurrent load on the machine biases
    // both measurement sets equally and cancels out of the ratio.
    let mut p2_times = Vec::with_capacity(250);
    let mut p3_times = Vec::with_capacity(250);
    for i in 0..250u64 {
        p2_times.push(run_trials(d(2), 1, 0xBEE5 ^ (i * 2)).unwrap()[0].elapsed_ns);
        p3_times.push(run_trials(d(3), 1, 0xBEE5 ^ (i * 2 + 1)).unwrap()[0].elapsed_ns);
    }
    let median_ns = |times: &mut Vec<u64>| -> f64 {
        times.sort_unstable();
        let mid = times.len() / 2;
        (times[mid - 1] + times[mid]) as f64 / 2.0
    };
    let p2 = median_ns(&mut p2_times);
    let p3 = median_ns(&mut p3_times);
    let ratio = p3 / p2;
    if !(8.0..=32.0).contains(&ratio) {
        failures.push(format!(
            "median time ratio prefix3/prefix2 = {ratio:.2} (p2 {p2:.0} ns, p3 {p3:.0} ns), \
             expected within [8, 32]"
        ));
    }
    report(2, "median mining time ratio p3/p2 in [8, 32]", &failures);
}

// 3. Every single-field mutation of any block invalidates the chain.
#[test]
fn acceptance_3_single_field_tamper_detection() {
    let mut chain = Chain::new(d(1), salt(3));
    for payload in [&b"first entry"[..], b"second", b"third one", b"fourth"] {
        chain.mine_and_append(payload.to_vec(), 1_000).unwrap();
    }
    assert_eq!(chain.len(), 5);

    let detected = |mutant: &Chain| -> bool {
        match mutant.validate() {
            Ok(report) => !report.valid,
            Err(_) => true,
        }
    };

    let mut failures = Vec::new();
    let mut mutations = 0u32;
    for block_index in 0..chain.len() {
        // Payload byte flips, every position.
        for byte in 0..chain.blocks[block_index].payload.len() {
            let mut mutant = chain.clone();
            mutant.blocks[block_index].payload[byte] ^= 0xFF;
            mutations += 1;
            if !detected(&mutant) {
                failures.push(format!(
                    "payload flip at block {block_index} byte {byte} went undetected"
                ));
            }
        }
        // Nonce, timestamp: bump by one.
        let mut mutant = chain.clone();
        mutant.blocks[block_index].nonce = mutant.blocks[block_index].nonce.wrapping_add(1);
        mutations += 1;
        if !detected(&mutant) {
            failures.push(format!("nonce change at block {block_index} went undetected"));
        }
        let mut mutant = chain.clone();
        mutant.blocks[block_index].timestamp =
            mutant.blocks[block_index].timestamp.wrapping_add(1);
        mutations += 1;
        if !detected(&mutant) {
            failures.push(format!(
                "timestamp change at block {block_index} went undetected"
            ));
        }
        // prev_hash: flip each byte position.
        for byte in 0..32 {
            let mut raw = *chain.blocks[block_index].prev_hash.as_bytes();
            raw[byte] ^= 0x01;
            let mut mutant = chain.clone();
            mutant.blocks[block_index].prev_hash = Hash256::from_bytes(raw);
            mutations += 1;
            if !detected(&mutant) {
                failures.push(format!(
                    "prev_hash flip at block {block_index} byte {byte} went undetected"
                ));
            }
        }
    }
    assert!(mutations > 190, "mutation sweep smaller than expected");
    report(
        3,
        "all single-field block mutations detected by validation",
        &failures,
    );
}

fn sim_peer(id: &str, all_ids: &[&str], chain: Chain) -> PeerNode {
    let config = PeerConfig {
        node_id: id.to_string(),
        listen_address: String::new(),
        peer_addresses: Vec::new(),
        authorized_nodes: all_ids.iter().map(|s| s.to_string()).collect(),
    };
    PeerNode::new(config, chain)
}

// 4. Gossip plus anti-entropy drives replicas to byte-identical chains, and
//    equal-length forks resolve the same way from both sides.
#[test]
fn acceptance_4_replication_convergence() {
    let mut failures = Vec::new();
    let ids = ["n0", "n1", "n2", "n3", "n4"];

    for seed in 0..50u64 {
        let mut net = SimNetwork::new(seed);
        for id in ids {
            net.add_node(sim_peer(id, &ids, Chain::new(d(1), salt(4))));
        }
        let mut stir = ChaCha8Rng::seed_from_u64(seed ^ 0x51AB);
        let mut payloads = BTreeSet::new();
        for event in 0..50u64 {
            let origin = ids[(event % 5) as usize];
            let payload =
                WorkflowEvent::submitted(&format!("doc-{seed}-{event}"), event * 7 + 1)
                    .canonical_bytes();
            payloads.insert(payload.clone());
            net.originate(origin, payload, event * 7 + 1).unwrap();
            for _ in 0..stir.random_range(0..6u32) {
                if !net.deliver_one().unwrap() {
                    break;
                }
            }
        }
        net.run_to_quiescence(1_000, 500_000).unwrap();
        net.converge(1_000, 40).unwrap();

        if !net.chains_identical().unwrap() {
            failures.push(format!("seed {seed}: nodes ended on different chains"));
            continue;
        }
        let chain = &net.node("n0").chain;
        let valid = chain.validate().map(|r| r.valid).unwrap_or(false);
        if !valid {
            failures.push(format!("seed {seed}: converged chain fails validation"));
        }
        if chain.len() != 51 {
            failures.push(format!(
                "seed {seed}: expected 51 blocks, found {}",
                chain.len()
            ));
        }
        let mined: BTreeSet<Vec<u8>> =
            chain.blocks[1..].iter().map(|b| b.payload.clone()).collect();
        if mined != payloads {
            failures.push(format!("seed {seed}: payload sets differ after convergence"));
        }
    }

    // Scripted equal-length forks: both sides must pick the same winner.
    for seed in 0..10u64 {
        let mut net = SimNetwork::new(seed ^ 0xF0F0);
        let pair = ["a", "b"];
        for id in pair {
            net.add_node(sim_peer(id, &pair, Chain::new(d(1), salt(4))));
        }
        net.partition("a", "b");
        net.originate("a", format!("fork-a-{seed}").into_bytes(), 5).unwrap();
        net.originate("b", format!("fork-b-{seed}").into_bytes(), 5).unwrap();
        let tip_a = net.node("a").chain.tip().hash;
        let tip_b = net.node("b").chain.tip().hash;
        let winner = tip_a.to_hex().min(tip_b.to_hex());

        let a_view = resolve_fork(&net.node("a").chain, &net.node("b").chain).unwrap();
        let b_view = resolve_fork(&net.node("b").chain, &net.node("a").chain).unwrap();
        let adoptions = [a_view, b_view]
            .iter()
            .filter(|c| matches!(c, ForkChoice::AdoptRemote))
            .count();
        if adoptions != 1 {
            failures.push(format!(
                "seed {seed}: equal-length fork produced {adoptions} adoptions, expected 1"
            ));
        }

        net.heal("a", "b");
        net.run_to_quiescence(10, 10_000).unwrap();
        net.converge(10, 8).unwrap();
        if !net.chains_identical().unwrap() {
            failures.push(format!("seed {seed}: fork pair did not converge"));
            continue;
        }
        // The smaller tip hash keeps its slot; the losing event is re-mined
        // on top, so neither payload is lost.
        let merged = &net.node("a").chain;
        if merged.blocks[1].hash.to_hex() != winner {
            failures.push(format!(
                "seed {seed}: the larger tip hash won the fork"
            ));
        }
        let kept: BTreeSet<Vec<u8>> =
            merged.blocks[1..].iter().map(|b| b.payload.clone()).collect();
        let expected: BTreeSet<Vec<u8>> = [
            format!("fork-a-{seed}").into_bytes(),
            format!("fork-b-{seed}").into_bytes(),
        ]
        .into();
        if merged.len() != 3 || kept != expected {
            failures.push(format!(
                "seed {seed}: merged chain lost or duplicated a fork payload"
            ));
        }
    }

    report(
        4,
        "replicas converge to one byte-identical valid chain",
        &failures,
    );
}

fn registry_from_value(value: serde_json::Value) -> Registry {
    let mut registry: Registry = serde_json::from_value(value).unwrap();
    registry.rebuild_coauthors();
    registry
}

// Independent reference model for the selection guarantee: re-derives
// scoring, priority, ordering, and conflicts from the raw generated data
// without touching the selection module.
mod oracle {
    use std::collections::{BTreeMap, BTreeSet};

    #[derive(Debug, PartialEq)]
    pub enum Outcome {
        Selected(Vec<String>),
        TargetOutOfRange(u32),
        Short { needed: u32, found: u32 },
    }

    pub struct Input {
        /// person_id -> keyword set, reviewers only.
        pub reviewer_keywords: BTreeMap<String, BTreeSet<String>>,
        /// person_id -> total declined/expired count.
        pub declines: BTreeMap<String, u32>,
        /// (person_id, article_id) pairs with a past reject recommendation.
        pub negative: BTreeSet<(String, String)>,
        /// every article's author list, target included.
        pub all_author_groups: Vec<Vec<String>>,
        pub target_article: String,
        pub target_keywords: BTreeSet<String>,
        pub target_authors: Vec<String>,
    }

    fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
        let union = a.union(b).count();
        if union == 0 {
            return 0.0;
        }
        a.intersection(b).count() as f64 / union as f64
    }

    pub fn select(input: &Input, y: u32) -> Outcome {
        if !(3..=6).contains(&y) {
            return Outcome::TargetOutOfRange(y);
        }
        // Score and classify.
        let mut scored: Vec<(u8, f64, String)> = input
            .reviewer_keywords
            .iter()
            .filter_map(|(id, keywords)| {
                let score = jaccard(keywords, &input.target_keywords);
                if score <= 0.0 {
                    return None;
                }
                let low = input.declines.get(id).copied().unwrap_or(0) > 0
                    || input
                        .negative
                        .contains(&(id.clone(), input.target_article.clone()));
                Some((u8::from(low), score, id.clone()))
            })
            .collect();
        scored.sort_by(|a, b| {
            a.0.cmp(&b.0)
                .then_with(|| b.1.total_cmp(&a.1))
                .then_with(|| a.2.cmp(&b.2))
        });
        // Conflicts: authors and anyone who shares an author group with one.
        let authors: BTreeSet<&String> = input.target_authors.iter().collect();
        let mut conflicted: BTreeSet<String> =
            input.target_authors.iter().cloned().collect();
        for group in &input.all_author_groups {
            if group.iter().any(|id| authors.contains(id)) {
                conflicted.extend(group.iter().cloned());
            }
        }
        let eligible: Vec<String> = scored
            .into_iter()
            .map(|(_, _, id)| id)
            .filter(|id| !conflicted.contains(id))
            .collect();
        if (eligible.len() as u32) < y {
            return Outcome::Short {
                needed: y,
                found: eligible.len() as u32,
            };
        }
        Outcome::Selected(eligible.into_iter().take(y as usize).collect())
    }
}

// 5. Reviewer selection equals a brute-force reference on randomized
//    registries, error cases included.
#[test]
fn acceptance_5_selection_matches_reference_model() {
    let keyword_pool = [
        "alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(0x5E1EC7);
    let mut failures = Vec::new();
    let cases = 1_200u32;

    for case in 0..cases {
        let person_count = rng.random_range(1..=12usize);
        let article_count = rng.random_range(1..=5usize);

        let mut persons = serde_json::Map::new();
        let mut reviewer_keywords = std::collections::BTreeMap::new();
        let mut person_ids = Vec::new();
        for i in 0..person_count {
            let id = format!("p{i:02}");
            let is_reviewer = rng.random_bool(0.8);
            let is_author = rng.random_bool(0.4) || !is_reviewer;
            let mut roles = Vec::new();
            if is_author {
                roles.push("author");
            }
            if is_reviewer {
                roles.push("reviewer");
            }
            let mut keywords = BTreeSet::new();
            for _ in 0..rng.random_range(0..=4usize) {
                keywords.insert(
                    keyword_pool[rng.random_range(0..keyword_pool.len())].to_string(),
                );
            }
            if is_reviewer {
                reviewer_keywords.insert(id.clone(), keywords.clone());
            }
            persons.insert(
                id.clone(),
                serde_json::json!({
                    "person_id": id,
                    "display_name": format!("Person {i}"),
                    "roles": roles,
                    "keywords": keywords,
                }),
            );
            person_ids.push(id);
        }

        let mut articles = serde_json::Map::new();
        let mut author_groups = Vec::new();
        let mut article_records = Vec::new();
        for j in 0..article_count {
            let id = format!("a{j}");
            let author_count = rng.random_range(1..=3usize.min(person_count));
            let mut authors = BTreeSet::new();
            while authors.len() < author_count {
                authors.insert(person_ids[rng.random_range(0..person_ids.len())].clone());
            }
            let authors: Vec<String> = authors.into_iter().collect();
            let mut keywords = BTreeSet::new();
            for _ in 0..rng.random_range(0..=4usize) {
                keywords.insert(
                    keyword_pool[rng.random_range(0..keyword_pool.len())].to_string(),
                );
            }
            articles.insert(
                id.clone(),
                serde_json::json!({
                    "article_id": id,
                    "title": format!("Article {j}"),
                    "abstract": "text",
                    "keywords": keywords,
                    "author_ids": authors,
                    "status": "Submitted",
                    "submitted_at": 0,
                }),
            );
            author_groups.push(authors.clone());
            article_records.push((id, keywords, authors));
        }

        let registry = registry_from_value(serde_json::json!({
            "persons": persons,
            "articles": articles,
        }));

        // Random reviewer history, mirrored into the reference model.
        let mut history = ReviewerHistory::new();
        let mut declines = std::collections::BTreeMap::new();
        let mut negative = BTreeSet::new();
        let reviewer_ids: Vec<String> = reviewer_keywords.keys().cloned().collect();
        for _ in 0..rng.random_range(0..=6u32) {
            if reviewer_ids.is_empty() {
                break;
            }
            let person = reviewer_ids[rng.random_range(0..reviewer_ids.len())].clone();
            let (article, _, _) =
                &article_records[rng.random_range(0..article_records.len())];
            let outcome = match rng.random_range(0..5u8) {
                0 => ReviewOutcome::Accepted,
                1 => ReviewOutcome::Declined,
                2 => ReviewOutcome::Expired,
                3 => ReviewOutcome::ReportedReject,
                _ => ReviewOutcome::ReportedOther,
            };
            history
                .record_outcome(&registry, &person, article, outcome)
                .unwrap();
            match outcome {
                ReviewOutcome::Declined | ReviewOutcome::Expired => {
                    *declines.entry(person.clone()).or_insert(0u32) += 1;
                }
                ReviewOutcome::ReportedReject => {
                    negative.insert((person.clone(), article.clone()));
                }
                _ => {}
            }
        }

        let (target_id, target_keywords, target_authors) =
            article_records[rng.random_range(0..article_records.len())].clone();
        let y = rng.random_range(2..=7u32);

        let reference = oracle::select(
            &oracle::Input {
                reviewer_keywords: reviewer_keywords.clone(),
                declines,
                negative,
                all_author_groups: author_groups.clone(),
                target_article: target_id.clone(),
                target_keywords,
                target_authors,
            },
            y,
        );

        let candidates = filter_reviewers(&target_id, &registry, &history, 0.0).unwrap();
        let article = registry.article(&target_id).unwrap();
        let actual = select_reviewers(article, y, &candidates, &registry);

        let matches = match (&actual, &reference) {
            (Ok(selected), oracle::Outcome::Selected(expected)) => {
                &selected.reviewers == expected
            }
            (
                Err(SelectionError::TargetOutOfRange(got)),
                oracle::Outcome::TargetOutOfRange(want),
            ) => got == want,
            (
                Err(SelectionError::InsufficientReviewers { needed, found }),
                oracle::Outcome::Short {
                    needed: want_needed,
                    found: want_found,
                },
            ) => needed == want_needed && found == want_found,
            _ => false,
        };
        if !matches {
            failures.push(format!(
                "case {case}: selection {actual:?} disagrees with reference {reference:?}"
            ));
            if failures.len() > 5 {
                break;
            }
        }
    }

    report(
        5,
        "selection equals brute-force reference over randomized registries",
        &failures,
    );
}

fn lifecycle_registry(
    rng: &mut ChaCha8Rng,
    reviewer_count: usize,
    article_count: usize,
) -> (Registry, Vec<String>) {
    let keyword_pool = ["ledgers", "consensus", "review", "automation"];
    let mut persons = serde_json::Map::new();
    let mut identities = Vec::new();
    for a in 1..=2 {
        let id = format!("zqauthor{a}");
        let name = format!("ZQ Author Number {a}");
        identities.push(id.clone());
        identities.push(name.clone());
        persons.insert(
            id.clone(),
            serde_json::json!({
                "person_id": id,
                "display_name": name,
                "roles": ["author"],
                "keywords": ["core"],
            }),
        );
    }
    for r in 1..=reviewer_count {
        let id = format!("zqreviewer{r:02}");
        let name = format!("ZQ Reviewer Name {r:02}");
        identities.push(id.clone());
        identities.push(name.clone());
        let mut keywords = vec!["core".to_string()];
        for _ in 0..rng.random_range(0..=2usize) {
            keywords.push(keyword_pool[rng.random_range(0..keyword_pool.len())].to_string());
        }
        persons.insert(
            id.clone(),
            serde_json::json!({
                "person_id": id,
                "display_name": name,
                "roles": ["reviewer"],
                "keywords": keywords,
            }),
        );
    }
    let mut articles = serde_json::Map::new();
    for k in 1..=article_count {
        let id = format!("art{k}");
        let authors: Vec<String> = (1..=rng.random_range(1..=2usize))
            .map(|a| format!("zqauthor{a}"))
            .collect();
        articles.insert(
            id.clone(),
            serde_json::json!({
                "article_id": id,
                "title": format!("Manuscript {k}"),
                "abstract": "A study of append-only review records.",
                "keywords": ["core", keyword_pool[rng.random_range(0..keyword_pool.len())]],
                "author_ids": authors,
                "status": "Submitted",
                "submitted_at": 0,
            }),
        );
    }
    (
        registry_from_value(serde_json::json!({
            "persons": persons,
            "articles": articles,
        })),
        identities,
    )
}

/// Drives one randomized but legal scenario to (near-)completion.
fn run_random_lifecycle(seed: u64, outbox: Option<PathBuf>) -> (Engine, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let reviewer_count = rng.random_range(8..=12usize);
    let article_count = rng.random_range(1..=3usize);
    let (registry, identities) = lifecycle_registry(&mut rng, reviewer_count, article_count);
    let chain = Chain::new(d(0), salt(seed));
    let mut engine = Engine::new(registry, chain, outbox, EngineConfig::default()).unwrap();

    let mut clock: u64 = 1_000;
    let article_ids: Vec<String> = (1..=article_count).map(|k| format!("art{k}")).collect();
    for id in &article_ids {
        clock += rng.random_range(1..=5_000u64);
        engine.submit_manuscript(id, clock).unwrap();
        clock += rng.random_range(1..=5_000u64);
        if rng.random_bool(0.1) {
            engine.screen(id, ScreenDecision::DeskReject, clock).unwrap();
        } else {
            engine.screen(id, ScreenDecision::Proceed, clock).unwrap();
        }
    }

    let mut revise_budget = 1u32;
    for _ in 0..60 {
        let snapshot: Vec<(String, ArticleStatus)> = engine
            .cases()
            .values()
            .map(|c| (c.article_id.clone(), c.status))
            .collect();
        if snapshot.iter().all(|(_, s)| s.is_terminal()) {
            break;
        }
        for (article_id, status) in snapshot {
            match status {
                ArticleStatus::InvitationsOut
                | ArticleStatus::InReview
                | ArticleStatus::Revise => {
                    let pending: Vec<(String, u64)> = engine
                        .case(&article_id)
                        .unwrap()
                        .invitations
                        .iter()
                        .filter(|i| i.state == InvitationState::Pending)
                        .map(|i| (i.invitation_id.clone(), i.respond_by))
                        .collect();
                    for (invitation_id, respond_by) in pending {
                        if clock > respond_by {
                            continue;
                        }
                        match rng.random_range(0..10u8) {
                            0..=3 => engine
                                .respond(&invitation_id, InvitationAnswer::Accept, clock)
                                .unwrap(),
                            4..=6 => engine
                                .respond(&invitation_id, InvitationAnswer::Decline, clock)
                                .unwrap(),
                            _ => {}
                        }
                    }
                    let awaiting: Vec<(String, u64)> = engine
                        .case(&article_id)
                        .unwrap()
                        .invitations
                        .iter()
                        .filter(|i| i.state == InvitationState::Accepted && !i.reported)
                        .filter_map(|i| {
                            i.report_due.map(|due| (i.invitation_id.clone(), due))
                        })
                        .collect();
                    for (invitation_id, due) in awaiting {
                        if clock > due || !rng.random_bool(0.7) {
                            continue;
                        }
                        let recommendation = match rng.random_range(0..4u8) {
                            0 => Recommendation::Accept,
                            1 => Recommendation::MinorRevise,
                            2 => Recommendation::MajorRevise,
                            _ => Recommendation::Reject,
                        };
                        engine
                            .submit_report(&invitation_id, recommendation, clock)
                            .unwrap();
                    }
                }
                ArticleStatus::DecisionPending => {
                    let verdict = match rng.random_range(0..3u8) {
                        0 => Verdict::Accept,
                        1 if revise_budget > 0 => {
                            revise_budget -= 1;
                            Verdict::Revise
                        }
                        _ => Verdict::Reject,
                    };
                    engine.decide(&article_id, verdict, clock).unwrap();
                }
                _ => {}
            }
        }
        clock += if rng.random_bool(0.5) {
            rng.random_range(1_000..=600_000u64)
        } else {
            rng.random_range(RESPONSE_WINDOW_MS / 2..=REPORT_WINDOW_MS / 2)
        };
        engine.tick(clock).unwrap();
    }
    (engine, identities)
}

// 6. The timing and quorum constants hold over randomized schedules:
//    batches of exactly 6, a 7-day response window, a 28-day report window,
//    review starting at the 3rd acceptance, lapsed invitations expiring.
#[test]
fn acceptance_6_workflow_timing_constants() {
    let mut failures = Vec::new();
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xC0115);
        let (registry, _) = lifecycle_registry(&mut rng, 10, 1);
        let mut engine = Engine::new(
            registry,
            Chain::new(d(0), salt(seed)),
            None,
            EngineConfig::default(),
        )
        .unwrap();

        let t_submit = rng.random_range(1..=1_000_000u64);
        engine.submit_manuscript("art1", t_submit).unwrap();
        let t_screen = t_submit + rng.random_range(1..=1_000_000u64);
        let sent = engine
            .screen("art1", ScreenDecision::Proceed, t_screen)
            .unwrap();
        if sent.len() != INITIAL_INVITATIONS {
            failures.push(format!(
                "seed {seed}: initial batch was {} invitations, expected {}",
                sent.len(),
                INITIAL_INVITATIONS
            ));
        }

        // Random responses at random offsets within the window.
        let mut plan: Vec<(String, u64, bool)> = Vec::new();
        for invitation_id in &sent {
            let offset = rng.random_range(0..=RESPONSE_WINDOW_MS);
            match rng.random_range(0..10u8) {
                0..=3 => plan.push((invitation_id.clone(), t_screen + offset, true)),
                4..=6 => plan.push((invitation_id.clone(), t_screen + offset, false)),
                _ => {}
            }
        }
        plan.sort_by_key(|(_, at, _)| *at);
        let mut accepted = 0u32;
        let mut accept_times = Vec::new();
        for (invitation_id, at, accept) in &plan {
            let answer = if *accept {
                InvitationAnswer::Accept
            } else {
                InvitationAnswer::Decline
            };
            engine.respond(invitation_id, answer, *at).unwrap();
            if *accept {
                accepted += 1;
                accept_times.push((invitation_id.clone(), *at));
            }
            let status = engine.case("art1").unwrap().status;
            let expected = if accepted >= MIN_ACCEPTED_REVIEWS as u32 {
                ArticleStatus::InReview
            } else {
                ArticleStatus::InvitationsOut
            };
            if status != expected {
                failures.push(format!(
                    "seed {seed}: after {accepted} acceptances status was {status}, \
                     expected {expected}"
                ));
            }
        }

        // Everything still pending lapses at the deadline.
        let lapse_at = t_screen + 2 * RESPONSE_WINDOW_MS + 7;
        let still_pending: Vec<String> = engine
            .case("art1")
            .unwrap()
            .invitations
            .iter()
            .filter(|i| i.state == InvitationState::Pending && i.respond_by < lapse_at)
            .map(|i| i.invitation_id.clone())
            .collect();
        engine.tick(lapse_at).unwrap();
        let case = engine.case("art1").unwrap();
        for invitation_id in &still_pending {
            let state = case.invitation(invitation_id).unwrap().state;
            if state != InvitationState::Expired {
                failures.push(format!(
                    "seed {seed}: unanswered invitation {invitation_id} is {state:?} \
                     after its deadline, expected Expired"
                ));
            }
        }

        // Window arithmetic is exact on every invitation ever sent.
        for invitation in &case.invitations {
            if invitation.respond_by - invitation.sent_at != RESPONSE_WINDOW_MS {
                failures.push(format!(
                    "seed {seed}: invitation {} response window is {} ms",
                    invitation.invitation_id,
                    invitation.respond_by - invitation.sent_at
                ));
            }
        }
        for (invitation_id, accepted_at) in &accept_times {
            let invitation = case.invitation(invitation_id).unwrap();
            if invitation.state != InvitationState::Accepted {
                continue;
            }
            let due = invitation.report_due.unwrap_or(0);
            if due != accepted_at + REPORT_WINDOW_MS {
                failures.push(format!(
                    "seed {seed}: invitation {invitation_id} report window is {} ms",
                    due.saturating_sub(*accepted_at)
                ));
            }
        }
        if failures.len() > 8 {
            break;
        }
    }
    report(
        6,
        "invitation batch, quorum, and window constants hold under random schedules",
        &failures,
    );
}

// 7. No display name or raw person id ever reaches a chain payload or an
//    outbox file.
#[test]
fn acceptance_7_identities_never_reach_chain_or_outbox() {
    let outbox = tempfile::tempdir().unwrap();
    let (engine, identities) = run_random_lifecycle(0x1DE47, Some(outbox.path().into()));
    assert!(
        engine.chain.len() > 10,
        "scenario too small to be meaningful"
    );

    let mut failures = Vec::new();
    let mut haystacks: Vec<(String, String)> = engine.chain.blocks[1..]
        .iter()
        .map(|b| {
            (
                format!("block {}", b.index),
                String::from_utf8_lossy(&b.payload).into_owned(),
            )
        })
        .collect();
    let mut outbox_files = 0;
    for entry in std::fs::read_dir(outbox.path()).unwrap() {
        let path = entry.unwrap().path();
        haystacks.push((
            format!("outbox file {}", path.display()),
            std::fs::read_to_string(&path).unwrap(),
        ));
        outbox_files += 1;
    }
    assert!(outbox_files >= 6, "scenario sent fewer outbox messages than a batch");

    for (place, text) in &haystacks {
        for identity in &identities {
            if text.contains(identity) {
                failures.push(format!("{place} leaks {identity:?}"));
            }
        }
    }
    report(
        7,
        "chain payloads and outbox hold pseudonyms only",
        &failures,
    );
}

// 8. Replaying a finished chain through a fresh interpreter reproduces
//    every case state exactly.
#[test]
fn acceptance_8_replay_reproduces_case_states() {
    let mut failures = Vec::new();
    for seed in 0..100u64 {
        let (engine, _) = run_random_lifecycle(seed, None);
        let replayed = match replay_chain(&engine.chain) {
            Ok(states) => states,
            Err(e) => {
                failures.push(format!("seed {seed}: replay failed: {e}"));
                continue;
            }
        };
        if &replayed != engine.cases() {
            failures.push(format!("seed {seed}: replayed case states differ"));
        }
        // A rebuilt engine must agree on everything derived.
        let rebuilt = Engine::new(
            engine.registry.clone(),
            engine.chain.clone(),
            None,
            EngineConfig::default(),
        )
        .unwrap();
        if rebuilt.cases() != engine.cases() || rebuilt.history() != engine.history() {
            failures.push(format!("seed {seed}: rebuilt engine state differs"));
        }
        if failures.len() > 5 {
            break;
        }
    }
    report(
        8,
        "chain replay reproduces identical case states",
        &failures,
    );
}

// 9. Serialization round-trips exactly, and no single-byte file corruption
//    survives loading.
#[test]
fn acceptance_9_persistence_roundtrip_and_corruption_rejection() {
    let mut failures = Vec::new();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("chain.jsonl");
    let mut rng = ChaCha8Rng::seed_from_u64(0x9E57);

    for round in 0..1_000u32 {
        let prefix = rng.random_range(0..=1u8);
        let mut chain = Chain::new(d(prefix), rng.random());
        for _ in 0..rng.random_range(0..=3u8) {
            let len = rng.random_range(0..=24usize);
            let payload: Vec<u8> = (0..len).map(|_| rng.random()).collect();
            chain
                .mine_and_append(payload, rng.random_range(0..=1_000_000))
                .unwrap();
        }
        save_chain(&chain, &path).unwrap();
        let reloaded = load_chain(&path).unwrap();
        if reloaded != chain {
            failures.push(format!("round {round}: file round trip not identity"));
            break;
        }
        let bytes = chain_to_bytes(&chain).unwrap();
        if load_chain_bytes(&bytes).unwrap() != chain {
            failures.push(format!("round {round}: byte round trip not identity"));
            break;
        }
    }

    // Exhaustive single-byte corruption of one representative file.
    let mut chain = Chain::new(d(1), salt(9));
    chain.mine_and_append(b"alpha payload".to_vec(), 50).unwrap();
    chain.mine_and_append(b"Z".to_vec(), 60).unwrap();
    let bytes = chain_to_bytes(&chain).unwrap();
    let mut undetected = 0u64;
    for position in 0..bytes.len() {
        for value in 0..=255u8 {
            if value == bytes[position] {
                continue;
            }
            let mut corrupted = bytes.clone();
            corrupted[position] = value;
            if load_chain_bytes(&corrupted).is_ok() {
                undetected += 1;
                if failures.len() < 5 {
                    failures.push(format!(
                        "byte {position} set to {value:#04x} loaded successfully"
                    ));
                }
            }
        }
    }
    if undetected > 0 {
        failures.push(format!("{undetected} corruptions went undetected in total"));
    }

    report(
        9,
        "save/load is the identity and every single-byte corruption is rejected",
        &failures,
    );
}
