//! Cascade record format: parsing, validation and serialization.
//!
//! A cascade file is UTF-8, LF-terminated, one JSON object per line. The
//! first non-blank line is a header `{"dataset": "<name>"}`; every other
//! line is a participant record:
//!
//! ```text
//! {"dataset":"demo"}
//! {"user_id":"S","followers":1000,"friends_count":3,"posts":40,"time":0,"seed":true,"friends":[]}
//! {"user_id":"A","followers":10,"friends_count":7,"posts":2,"time":100,"seed":false,"friends":["S"]}
//! ```
//!
//! `friends` lists only friends that also took part in the cascade.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("missing dataset header line")]
    MissingHeader,
    #[error("duplicate user_id: {0}")]
    DuplicateUser(String),
    #[error("no seed record")]
    NoSeed,
    #[error("multiple seeds: {0}")]
    MultipleSeeds(String),
    #[error("unknown friend reference: {0}")]
    UnknownFriend(String),
    #[error("seed {0} must not list friends")]
    SeedHasFriends(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One participant's snapshot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CascadeRecord {
    pub user_id: String,
    pub followers_count: u64,
    pub friends_count: u64,
    pub posts_count: u64,
    /// Tweet (seed) or retweet instant, epoch seconds.
    pub event_time: i64,
    pub is_seed: bool,
}

impl CascadeRecord {
    pub fn new(
        user_id: impl Into<String>,
        followers: u64,
        friends: u64,
        posts: u64,
        time: i64,
    ) -> Self {
        CascadeRecord {
            user_id: user_id.into(),
            followers_count: followers,
            friends_count: friends,
            posts_count: posts,
            event_time: time,
            is_seed: false,
        }
    }

    pub fn seed(mut self) -> Self {
        self.is_seed = true;
        self
    }
}

/// All records of one cascade plus the within-cascade friendship map.
///
/// Records are kept sorted by `user_id`; the friends map holds entries only
/// for users with at least one in-cascade friend. Construction does not
/// check invariants, see [`validate`] and [`parse_cascade`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CascadeDataset {
    name: String,
    records: Vec<CascadeRecord>,
    friends: BTreeMap<String, BTreeSet<String>>,
}

impl CascadeDataset {
    pub fn new(
        name: impl Into<String>,
        mut records: Vec<CascadeRecord>,
        friends: BTreeMap<String, BTreeSet<String>>,
    ) -> Self {
        records.sort_by(|a, b| a.user_id.cmp(&b.user_id));
        let friends = friends
            .into_iter()
            .filter(|(_, set)| !set.is_empty())
            .collect();
        CascadeDataset {
            name: name.into(),
            records,
            friends,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn records(&self) -> &[CascadeRecord] {
        &self.records
    }

    pub fn friends_map(&self) -> &BTreeMap<String, BTreeSet<String>> {
        &self.friends
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn record(&self, user_id: &str) -> Option<&CascadeRecord> {
        self.records
            .binary_search_by(|r| r.user_id.as_str().cmp(user_id))
            .ok()
            .map(|i| &self.records[i])
    }

    pub fn friends_of(&self, user_id: &str) -> impl Iterator<Item = &str> {
        self.friends
            .get(user_id)
            .into_iter()
            .flatten()
            .map(String::as_str)
    }

    /// The unique seed record, if the dataset has exactly one.
    pub fn seed(&self) -> Option<&CascadeRecord> {
        let mut seeds = self.records.iter().filter(|r| r.is_seed);
        match (seeds.next(), seeds.next()) {
            (Some(s), None) => Some(s),
            _ => None,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderLine {
    dataset: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    user_id: String,
    followers: u64,
    friends_count: u64,
    posts: u64,
    time: i64,
    seed: bool,
    friends: Vec<String>,
}

/// Parses a cascade stream without enforcing dataset invariants; only
/// syntax errors are reported. Used by `validate`-style tooling that must
/// describe broken datasets instead of refusing them.
pub fn read_dataset<R: BufRead>(reader: R) -> Result<CascadeDataset, IngestError> {
    let mut name = None;
    let mut records = Vec::new();
    let mut friends: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();

    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |e: serde_json::Error| IngestError::Malformed {
            line: lineno,
            message: e.to_string(),
        };
        if name.is_none() {
            let header: HeaderLine =
                serde_json::from_str(&line).map_err(|e| match e.classify() {
                    serde_json::error::Category::Data => IngestError::MissingHeader,
                    _ => malformed(e),
                })?;
            name = Some(header.dataset);
            continue;
        }
        let rec: RecordLine = serde_json::from_str(&line).map_err(malformed)?;
        if rec.user_id.is_empty() {
            return Err(IngestError::Malformed {
                line: lineno,
                message: "empty user_id".into(),
            });
        }
        if !rec.friends.is_empty() {
            friends
                .entry(rec.user_id.clone())
                .or_default()
                .extend(rec.friends.iter().cloned());
        }
        records.push(CascadeRecord {
            user_id: rec.user_id,
            followers_count: rec.followers,
            friends_count: rec.friends_count,
            posts_count: rec.posts,
            event_time: rec.time,
            is_seed: rec.seed,
        });
    }

    let name = name.ok_or(IngestError::MissingHeader)?;
    Ok(CascadeDataset::new(name, records, friends))
}

/// Parses a cascade stream and enforces the structural invariants the rest
/// of the pipeline relies on: unique ids, exactly one seed, seed without
/// friends and no dangling friend references.
pub fn parse_cascade<R: BufRead>(reader: R) -> Result<CascadeDataset, IngestError> {
    let dataset = read_dataset(reader)?;

    for pair in dataset.records.windows(2) {
        if pair[0].user_id == pair[1].user_id {
            return Err(IngestError::DuplicateUser(pair[0].user_id.clone()));
        }
    }
    let seeds: Vec<&str> = dataset
        .records
        .iter()
        .filter(|r| r.is_seed)
        .map(|r| r.user_id.as_str())
        .collect();
    match seeds.len() {
        0 => return Err(IngestError::NoSeed),
        1 => {}
        _ => return Err(IngestError::MultipleSeeds(seeds.join(","))),
    }
    if dataset.friends.contains_key(seeds[0]) {
        return Err(IngestError::SeedHasFriends(seeds[0].to_string()));
    }
    for set in dataset.friends.values() {
        if let Some(unknown) = set.iter().find(|f| dataset.record(f).is_none()) {
            return Err(IngestError::UnknownFriend(unknown.clone()));
        }
    }
    Ok(dataset)
}

pub fn parse_cascade_str(text: &str) -> Result<CascadeDataset, IngestError> {
    parse_cascade(text.as_bytes())
}

/// Writes the dataset in canonical form: header, then records ordered by
/// `user_id` with sorted friend lists.
pub fn write_dataset<W: Write>(dataset: &CascadeDataset, mut out: W) -> std::io::Result<()> {
    let header = HeaderLine {
        dataset: dataset.name.clone(),
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for r in &dataset.records {
        let line = RecordLine {
            user_id: r.user_id.clone(),
            followers: r.followers_count,
            friends_count: r.friends_count,
            posts: r.posts_count,
            time: r.event_time,
            seed: r.is_seed,
            friends: dataset.friends_of(&r.user_id).map(str::to_string).collect(),
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn serialize_dataset(dataset: &CascadeDataset) -> String {
    let mut buf = Vec::new();
    write_dataset(dataset, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub severity: Severity,
    pub code: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub user_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn errors(&self) -> impl Iterator<Item = &ValidationIssue> {
        self.issues.iter().filter(|i| i.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &ValidationIssue> {
        self.issues
            .iter()
            .filter(|i| i.severity == Severity::Warning)
    }

    pub fn has_code(&self, code: &str) -> bool {
        self.issues.iter().any(|i| i.code == code)
    }
}

struct IssueSink(Vec<ValidationIssue>);

impl IssueSink {
    fn push(&mut self, severity: Severity, code: &str, message: String, user: Option<&str>) {
        self.0.push(ValidationIssue {
            severity,
            code: code.to_string(),
            message,
            user_id: user.map(str::to_string),
        });
    }
}

/// Checks every dataset invariant. Problems are reported, never thrown.
///
/// Errors: `empty user_id`, `duplicate user`, `missing seed`,
/// `multiple seeds`, `seed has friends`, `seed not earliest`,
/// `unknown friend`, `self friend`.
/// Warnings: `zero followers`, `event tie`, `friendless user`.
pub fn validate(dataset: &CascadeDataset) -> ValidationReport {
    use Severity::{Error, Warning};
    let mut sink = IssueSink(Vec::new());
    let records = &dataset.records;

    for r in records.iter().filter(|r| r.user_id.is_empty()) {
        sink.push(
            Error,
            "empty user_id",
            "record with empty user_id".into(),
            Some(&r.user_id),
        );
    }
    for pair in records.windows(2) {
        if pair[0].user_id == pair[1].user_id {
            sink.push(
                Error,
                "duplicate user",
                format!("duplicate user_id: {}", pair[0].user_id),
                Some(&pair[0].user_id),
            );
        }
    }

    let seeds: Vec<&CascadeRecord> = records.iter().filter(|r| r.is_seed).collect();
    match seeds.len() {
        0 => sink.push(
            Error,
            "missing seed",
            "no record has seed = true".into(),
            None,
        ),
        1 => {
            let seed = seeds[0];
            if dataset.friends.contains_key(&seed.user_id) {
                sink.push(
                    Error,
                    "seed has friends",
                    format!("seed {} must not list friends", seed.user_id),
                    Some(&seed.user_id),
                );
            }
            for r in records.iter().filter(|r| r.event_time < seed.event_time) {
                sink.push(
                    Error,
                    "seed not earliest",
                    format!(
                        "user {} at t={} precedes the seed at t={}",
                        r.user_id, r.event_time, seed.event_time
                    ),
                    Some(&r.user_id),
                );
            }
        }
        n => {
            let ids: Vec<&str> = seeds.iter().map(|r| r.user_id.as_str()).collect();
            sink.push(
                Error,
                "multiple seeds",
                format!("{n} records have seed = true: {}", ids.join(", ")),
                None,
            );
        }
    }

    for (user, set) in &dataset.friends {
        if dataset.record(user).is_none() {
            sink.push(
                Error,
                "unknown friend",
                format!("friend list for unknown user: {user}"),
                Some(user),
            );
        }
        for friend in set {
            if friend == user {
                sink.push(
                    Error,
                    "self friend",
                    format!("user {user} lists itself as friend"),
                    Some(user),
                );
            } else if dataset.record(friend).is_none() {
                sink.push(
                    Error,
                    "unknown friend",
                    format!("unknown friend reference: {friend}"),
                    Some(user),
                );
            }
        }
    }

    for r in records {
        if r.followers_count == 0 {
            sink.push(
                Warning,
                "zero followers",
                format!("user {} has no followers", r.user_id),
                Some(&r.user_id),
            );
        }
        if !r.is_seed && !dataset.friends.contains_key(&r.user_id) {
            sink.push(
                Warning,
                "friendless user",
                format!(
                    "user {} has no in-cascade friends; it will attach to the seed",
                    r.user_id
                ),
                Some(&r.user_id),
            );
        }
    }

    let mut by_time: BTreeMap<i64, Vec<&str>> = BTreeMap::new();
    for r in records {
        by_time.entry(r.event_time).or_default().push(&r.user_id);
    }
    for (t, users) in by_time.iter().filter(|(_, u)| u.len() > 1) {
        sink.push(
            Warning,
            "event tie",
            format!(
                "{} users share event time {t}: {}",
                users.len(),
                users.join(", ")
            ),
            Some(users[0]),
        );
    }

    let ok = !sink.0.iter().any(|i| i.severity == Error);
    ValidationReport { ok, issues: sink.0 }
}
