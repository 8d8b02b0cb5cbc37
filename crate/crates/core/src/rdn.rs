//! Retweet diffusion network reconstruction.
//!
//! Each non-seed participant is attached to one earlier-retweeting friend
//! chosen by an [`AttachmentRule`]:
//!
//! * `R1`: the friend who retweeted last before the user.
//! * `R2`: among friends who retweeted within the time frame, the one with
//!   the most followers.
//! * `R3`: same window, the one with the fewest followers.
//!
//! Users are processed in ascending `(event_time, user_id)` order, so every
//! eligible parent is already placed when a user is attached.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graphcore::{DiffusionTree, GraphError, Provenance};
use crate::ingest::{validate, CascadeDataset, CascadeRecord, ValidationReport};

#[derive(Debug, Error)]
pub enum RdnError {
    #[error("dataset failed validation with {} error(s)", .0.errors().count())]
    InvalidDataset(ValidationReport),
    #[error("no candidate parents for {0}")]
    NoCandidates(String),
    #[error("unknown user {0}")]
    UnknownUser(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid rule label {label:?}: {reason}")]
pub struct RuleParseError {
    label: String,
    reason: &'static str,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RuleKind {
    /// Latest prior retweet.
    R1,
    /// Most followers within the time frame.
    R2,
    /// Fewest followers within the time frame.
    R3,
}

/// Attachment rule with its time frame. R1 has none; R2 and R3 always do.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AttachmentRule {
    kind: RuleKind,
    threshold: Option<u32>,
}

impl AttachmentRule {
    pub const R1: AttachmentRule = AttachmentRule {
        kind: RuleKind::R1,
        threshold: None,
    };

    pub fn most_followed(threshold_seconds: u32) -> Self {
        assert!(threshold_seconds > 0, "time frame must be positive");
        AttachmentRule {
            kind: RuleKind::R2,
            threshold: Some(threshold_seconds),
        }
    }

    pub fn least_followed(threshold_seconds: u32) -> Self {
        assert!(threshold_seconds > 0, "time frame must be positive");
        AttachmentRule {
            kind: RuleKind::R3,
            threshold: Some(threshold_seconds),
        }
    }

    pub fn kind(&self) -> RuleKind {
        self.kind
    }

    pub fn threshold_seconds(&self) -> Option<u32> {
        self.threshold
    }

    /// The seven labelled rules: R1, R2_15, R2_30, R2_60, R3_15, R3_30, R3_60.
    pub fn labelled() -> Vec<AttachmentRule> {
        let mut rules = vec![AttachmentRule::R1];
        for m in [15, 30, 60] {
            rules.push(AttachmentRule::most_followed(m * 60));
        }
        for m in [15, 30, 60] {
            rules.push(AttachmentRule::least_followed(m * 60));
        }
        rules
    }
}

impl Default for AttachmentRule {
    fn default() -> Self {
        AttachmentRule::least_followed(3600)
    }
}

impl fmt::Display for AttachmentRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = match self.kind {
            RuleKind::R1 => return f.write_str("R1"),
            RuleKind::R2 => "R2",
            RuleKind::R3 => "R3",
        };
        let thr = self.threshold.expect("windowed rule has a threshold");
        if thr.is_multiple_of(60) {
            write!(f, "{prefix}_{}", thr / 60)
        } else {
            write!(f, "{prefix}:{thr}")
        }
    }
}

impl FromStr for AttachmentRule {
    type Err = RuleParseError;

    /// Accepts `R1`, `R2_<minutes>`, `R3_<minutes>`, `R2:<seconds>` and
    /// `R3:<seconds>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |reason| RuleParseError {
            label: s.to_string(),
            reason,
        };
        if s == "R1" {
            return Ok(AttachmentRule::R1);
        }
        let (kind, rest) = match s.get(..2) {
            Some("R2") => (RuleKind::R2, &s[2..]),
            Some("R3") => (RuleKind::R3, &s[2..]),
            _ => return Err(err("expected R1, R2 or R3")),
        };
        let seconds = if let Some(m) = rest.strip_prefix('_') {
            m.parse::<u32>()
                .ok()
                .and_then(|m| m.checked_mul(60))
                .ok_or_else(|| err("minutes must be a positive integer"))?
        } else if let Some(sec) = rest.strip_prefix(':') {
            sec.parse::<u32>()
                .map_err(|_| err("seconds must be a positive integer"))?
        } else {
            return Err(err("R2/R3 need a time frame, e.g. R3_60 or R3:3600"));
        };
        if seconds == 0 {
            return Err(err("time frame must be positive"));
        }
        Ok(AttachmentRule {
            kind,
            threshold: Some(seconds),
        })
    }
}

impl Serialize for AttachmentRule {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AttachmentRule {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Friends of `node` that can have passed the message on: friends who
/// retweeted strictly earlier, plus the seed whenever it is followed.
/// Ordered by `(event_time, user_id)`.
pub fn eligible_parents<'a>(
    node: &CascadeRecord,
    dataset: &'a CascadeDataset,
) -> Vec<&'a CascadeRecord> {
    let mut out: Vec<&CascadeRecord> = dataset
        .friends_of(&node.user_id)
        .filter_map(|f| dataset.record(f))
        .filter(|f| f.is_seed || f.event_time < node.event_time)
        .collect();
    out.sort_by(|a, b| time_order(a, b));
    out
}

fn time_order(a: &CascadeRecord, b: &CascadeRecord) -> Ordering {
    a.event_time
        .cmp(&b.event_time)
        .then_with(|| a.user_id.cmp(&b.user_id))
}

/// Outcome of a single attachment decision.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Choice<'a> {
    pub parent: &'a CascadeRecord,
    pub provenance: Provenance,
    /// More than one candidate shared the winning key.
    pub tie_broken: bool,
}

/// Picks the best candidate under `key`, breaking ties by smallest id.
fn pick_by<'a, K: Ord>(
    candidates: impl Iterator<Item = &'a CascadeRecord>,
    key: impl Fn(&CascadeRecord) -> K,
) -> Option<(&'a CascadeRecord, bool)> {
    let mut best: Option<(&CascadeRecord, K, bool)> = None;
    for c in candidates {
        let k = key(c);
        best = match best {
            None => Some((c, k, false)),
            Some((b, bk, tied)) => match k.cmp(&bk) {
                Ordering::Greater => Some((c, k, false)),
                Ordering::Less => Some((b, bk, tied)),
                Ordering::Equal if c.user_id < b.user_id => Some((c, k, true)),
                Ordering::Equal => Some((b, bk, true)),
            },
        };
    }
    best.map(|(c, _, tied)| (c, tied))
}

/// Applies `rule` to a nonempty candidate list for `node`.
pub fn choose_parent<'a>(
    node: &CascadeRecord,
    candidates: &[&'a CascadeRecord],
    rule: AttachmentRule,
) -> Result<Choice<'a>, RdnError> {
    if candidates.is_empty() {
        return Err(RdnError::NoCandidates(node.user_id.clone()));
    }
    let latest =
        || pick_by(candidates.iter().copied(), |c| c.event_time).expect("nonempty candidates");
    let (parent, tie_broken, provenance) = match (rule.kind, rule.threshold) {
        (RuleKind::R1, _) => {
            let (p, t) = latest();
            (p, t, Provenance::RuleChoice)
        }
        (kind, thr) => {
            let thr = i64::from(thr.expect("windowed rule has a threshold"));
            let window = candidates
                .iter()
                .copied()
                .filter(|c| node.event_time - c.event_time <= thr);
            let picked = if kind == RuleKind::R2 {
                pick_by(window, |c| c.followers_count)
            } else {
                pick_by(window, |c| std::cmp::Reverse(c.followers_count))
            };
            match picked {
                Some((p, t)) => (p, t, Provenance::RuleChoice),
                None => {
                    let (p, t) = latest();
                    (p, t, Provenance::FallbackRule1)
                }
            }
        }
    };
    Ok(Choice {
        parent,
        provenance,
        tie_broken,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BuildEntry {
    pub user_id: String,
    pub parent: String,
    pub candidates: usize,
    pub provenance: Provenance,
}

/// Per-node record of how the tree was determined.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct BuildLog {
    pub entries: Vec<BuildEntry>,
    pub fallback_seed: usize,
    pub fallback_rule1: usize,
    pub tie_breaks: usize,
}

/// Reconstructs the diffusion tree of a valid dataset under `rule`.
pub fn build_rdn(
    dataset: &CascadeDataset,
    rule: AttachmentRule,
) -> Result<(DiffusionTree, BuildLog), RdnError> {
    let report = validate(dataset);
    if !report.ok {
        return Err(RdnError::InvalidDataset(report));
    }
    let seed = dataset.seed().expect("validated dataset has one seed");

    let mut order: Vec<&CascadeRecord> = dataset.records().iter().filter(|r| !r.is_seed).collect();
    order.sort_by(|a, b| time_order(a, b));

    let mut tree = DiffusionTree::new(seed.clone());
    let mut log = BuildLog::default();
    for node in order {
        let candidates = eligible_parents(node, dataset);
        let (parent, provenance) = if candidates.is_empty() {
            log.fallback_seed += 1;
            (seed, Provenance::FallbackSeed)
        } else {
            let choice = choose_parent(node, &candidates, rule)?;
            if choice.provenance == Provenance::FallbackRule1 {
                log.fallback_rule1 += 1;
            }
            if choice.tie_broken {
                log.tie_breaks += 1;
            }
            (choice.parent, choice.provenance)
        };
        tree.attach(node.clone(), &parent.user_id, provenance)?;
        log.entries.push(BuildEntry {
            user_id: node.user_id.clone(),
            parent: parent.user_id.clone(),
            candidates: candidates.len(),
            provenance,
        });
    }
    Ok((tree, log))
}


#[cfg(test)]
mod tests {
    use super::fixtures::four_users;
    use super::*;

    fn ids(v: &[&CascadeRecord]) -> Vec<String> {
        v.iter().map(|r| r.user_id.clone()).collect()
    }

    fn edges(tree: &DiffusionTree) -> Vec<(String, String)> {
        tree.edges()
            .map(|(c, p, _)| (c.to_string(), p.to_string()))
            .collect()
    }

    #[test]
    fn rule_labels() {
        let labels: Vec<String> = AttachmentRule::labelled()
            .iter()
            .map(|r| r.to_string())
            .collect();
        assert_eq!(
            labels,
            ["R1", "R2_15", "R2_30", "R2_60", "R3_15", "R3_30", "R3_60"]
        );
        for l in &labels {
            assert_eq!(&l.parse::<AttachmentRule>().unwrap().to_string(), l);
        }
        let r: AttachmentRule = "R3_60".parse().unwrap();
        assert_eq!(
            (r.kind(), r.threshold_seconds()),
            (RuleKind::R3, Some(3600))
        );
        let r: AttachmentRule = "R2:90".parse().unwrap();
        assert_eq!((r.kind(), r.threshold_seconds()), (RuleKind::R2, Some(90)));
        assert_eq!(r.to_string(), "R2:90");
        assert_eq!(
            "R3:3600".parse::<AttachmentRule>().unwrap().to_string(),
            "R3_60"
        );
        for bad in [
            "", "R4", "R2", "R3_", "R2_0", "R3:0", "R3:-5", "r1", "R1_15",
        ] {
            assert!(bad.parse::<AttachmentRule>().is_err(), "{bad}");
        }
        assert_eq!(AttachmentRule::default().to_string(), "R3_60");
    }

    #[test]
    fn eligibility() {
        let ds = four_users();
        let a = ds.record("A").unwrap();
        assert_eq!(ids(&eligible_parents(a, &ds)), ["S"]);
        let c = ds.record("C").unwrap();
        assert_eq!(ids(&eligible_parents(c, &ds)), ["A", "B"]);

        // friend that retweeted later is not eligible
        let mut early = c.clone();
        early.event_time = 150;
        assert_eq!(ids(&eligible_parents(&early, &ds)), ["A"]);
        early.event_time = 50;
        assert!(eligible_parents(&early, &ds).is_empty());
    }

    #[test]
    fn hand_traced_choices() {
        let ds = four_users();
        let b = ds.record("B").unwrap();
        let c = ds.record("C").unwrap();
        let cand_b = eligible_parents(b, &ds);
        let cand_c = eligible_parents(c, &ds);
        let pick = |n, cands: &[&CascadeRecord], r| {
            choose_parent(n, cands, r).unwrap().parent.user_id.clone()
        };
        assert_eq!(pick(b, &cand_b, AttachmentRule::R1), "A");
        assert_eq!(pick(b, &cand_b, AttachmentRule::most_followed(3600)), "S");
        assert_eq!(pick(c, &cand_c, AttachmentRule::least_followed(3600)), "A");
    }

    #[test]
    fn empty_window_falls_back_to_latest() {
        let ds = four_users();
        let c = ds.record("C").unwrap();
        let cands = eligible_parents(c, &ds);
        let choice = choose_parent(c, &cands, AttachmentRule::least_followed(50)).unwrap();
        assert_eq!(choice.parent.user_id, "B");
        assert_eq!(choice.provenance, Provenance::FallbackRule1);
        assert!(matches!(
            choose_parent(c, &[], AttachmentRule::R1),
            Err(RdnError::NoCandidates(_))
        ));
    }

    #[test]
    fn ties_break_on_smallest_id() {
        let node = CascadeRecord::new("z", 1, 1, 1, 100);
        let x = CascadeRecord::new("x", 5, 1, 1, 50);
        let y = CascadeRecord::new("y", 5, 1, 1, 50);
        for rule in AttachmentRule::labelled() {
            let choice = choose_parent(&node, &[&y, &x], rule).unwrap();
            assert_eq!(choice.parent.user_id, "x");
            assert!(choice.tie_broken);
        }
    }

    #[test]
    fn builds_hand_traced_trees() {
        let ds = four_users();
        let pairs = |v: &[(&str, &str)]| {
            v.iter()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect::<Vec<_>>()
        };
        let (t1, log) = build_rdn(&ds, AttachmentRule::R1).unwrap();
        assert_eq!(edges(&t1), pairs(&[("A", "S"), ("B", "A"), ("C", "B")]));
        assert_eq!(log.entries.len(), 3);
        assert_eq!(
            (log.fallback_seed, log.fallback_rule1, log.tie_breaks),
            (0, 0, 0)
        );
        let (t2, _) = build_rdn(&ds, AttachmentRule::most_followed(3600)).unwrap();
        assert_eq!(edges(&t2), pairs(&[("A", "S"), ("B", "S"), ("C", "B")]));
        let (t3, _) = build_rdn(&ds, AttachmentRule::least_followed(3600)).unwrap();
        assert_eq!(edges(&t3), pairs(&[("A", "S"), ("B", "A"), ("C", "A")]));
        for t in [t1, t2, t3] {
            t.check().unwrap();
        }
    }

    #[test]
    fn friendless_users_attach_to_seed() {
        let ds = CascadeDataset::new(
            "lonely",
            vec![
                CascadeRecord::new("S", 5, 1, 1, 0).seed(),
                CascadeRecord::new("L", 3, 1, 1, 9),
            ],
            Default::default(),
        );
        let (tree, log) = build_rdn(&ds, AttachmentRule::R1).unwrap();
        assert_eq!(tree.parent_of("L"), Some("S"));
        assert_eq!(tree.provenance_of("L"), Some(Provenance::FallbackSeed));
        assert_eq!(log.fallback_seed, 1);
    }

    #[test]
    fn seed_is_eligible_on_same_second() {
        let mut friends = std::collections::BTreeMap::new();
        friends.insert("A".to_string(), ["S".to_string()].into());
        let ds = CascadeDataset::new(
            "tie",
            vec![
                CascadeRecord::new("S", 5, 1, 1, 0).seed(),
                CascadeRecord::new("A", 3, 1, 1, 0),
            ],
            friends,
        );
        let (tree, log) = build_rdn(&ds, AttachmentRule::R1).unwrap();
        assert_eq!(tree.provenance_of("A"), Some(Provenance::RuleChoice));
        assert_eq!(log.fallback_seed, 0);
    }

    #[test]
    fn refuses_invalid_dataset() {
        let ds = CascadeDataset::new(
            "bad",
            vec![
                CascadeRecord::new("S", 5, 1, 1, 0).seed(),
                CascadeRecord::new("T", 5, 1, 1, 1).seed(),
            ],
            Default::default(),
        );
        match build_rdn(&ds, AttachmentRule::R1) {
            Err(RdnError::InvalidDataset(report)) => assert!(report.has_code("multiple seeds")),
            other => panic!("expected refusal, got {other:?}"),
        }
    }
}
