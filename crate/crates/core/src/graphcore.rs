//! Rooted diffusion trees and the metrics computed over them.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::CascadeRecord;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("node {0} already in tree")]
    DuplicateNode(String),
    #[error("unknown parent {parent} for node {child}")]
    UnknownParent { child: String, parent: String },
    #[error("insufficient support: need at least 2 histogram points with degree >= 1, got {0}")]
    InsufficientSupport(usize),
    #[error("undefined for trivial tree")]
    TrivialTree,
    #[error("damping must lie in (0, 1), got {0}")]
    InvalidDamping(f64),
    #[error("invalid tree: {0}")]
    Invalid(String),
}

/// How an edge of a reconstructed tree was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Picked by the attachment rule among eligible friends.
    RuleChoice,
    /// No eligible friend; attached directly to the seed.
    FallbackSeed,
    /// Time-frame filter was empty; latest prior friend used instead.
    FallbackRule1,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::RuleChoice => "rule_choice",
            Provenance::FallbackSeed => "fallback_seed",
            Provenance::FallbackRule1 => "fallback_rule1",
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Provenance {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rule_choice" => Ok(Provenance::RuleChoice),
            "fallback_seed" => Ok(Provenance::FallbackSeed),
            "fallback_rule1" => Ok(Provenance::FallbackRule1),
            other => Err(format!("unknown provenance: {other}")),
        }
    }
}

/// A rooted retweet tree. Edges point child -> parent ("retweeted from").
///
/// Nodes can only be attached under a node already present, so a tree
/// built through [`DiffusionTree::attach`] is connected and acyclic by
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionTree {
    root: String,
    parent: BTreeMap<String, String>,
    children: BTreeMap<String, Vec<String>>,
    provenance: BTreeMap<String, Provenance>,
    payload: BTreeMap<String, CascadeRecord>,
}

impl DiffusionTree {
    pub fn new(root: CascadeRecord) -> Self {
        let id = root.user_id.clone();
        let mut payload = BTreeMap::new();
        payload.insert(id.clone(), root);
        let mut children = BTreeMap::new();
        children.insert(id.clone(), Vec::new());
        DiffusionTree {
            root: id,
            parent: BTreeMap::new(),
            children,
            provenance: BTreeMap::new(),
            payload,
        }
    }

    pub fn attach(
        &mut self,
        child: CascadeRecord,
        parent: &str,
        provenance: Provenance,
    ) -> Result<(), GraphError> {
        let id = child.user_id.clone();
        if self.payload.contains_key(&id) {
            return Err(GraphError::DuplicateNode(id));
        }
        let Some(siblings) = self.children.get_mut(parent) else {
            return Err(GraphError::UnknownParent {
                child: id,
                parent: parent.to_string(),
            });
        };
        siblings.push(id.clone());
        self.children.insert(id.clone(), Vec::new());
        self.parent.insert(id.clone(), parent.to_string());
        self.provenance.insert(id.clone(), provenance);
        self.payload.insert(id, child);
        Ok(())
    }

    pub fn root(&self) -> &str {
        &self.root
    }

    pub fn node_count(&self) -> usize {
        self.payload.len()
    }

    pub fn edge_count(&self) -> usize {
        self.parent.len()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.payload.contains_key(id)
    }

    pub fn parent_of(&self, id: &str) -> Option<&str> {
        self.parent.get(id).map(String::as_str)
    }

    pub fn children_of(&self, id: &str) -> &[String] {
        self.children.get(id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn provenance_of(&self, id: &str) -> Option<Provenance> {
        self.provenance.get(id).copied()
    }

    pub fn payload(&self, id: &str) -> Option<&CascadeRecord> {
        self.payload.get(id)
    }

    /// Node ids in ascending order.
    pub fn node_ids(&self) -> impl Iterator<Item = &str> {
        self.payload.keys().map(String::as_str)
    }

    /// `(child, parent, provenance)` triples ordered by child id.
    pub fn edges(&self) -> impl Iterator<Item = (&str, &str, Provenance)> {
        self.parent
            .iter()
            .map(|(c, p)| (c.as_str(), p.as_str(), self.provenance[c]))
    }

    /// Re-checks every structural invariant from scratch: a single root,
    /// one parent per non-root node, parent links reaching the root, time
    /// order on non-fallback edges and consistent derived maps.
    pub fn check(&self) -> Result<(), GraphError> {
        let n = self.node_count();
        if self.parent.len() + 1 != n {
            return Err(GraphError::Invalid(format!(
                "{} parent entries for {n} nodes",
                self.parent.len()
            )));
        }
        if self.parent.contains_key(&self.root) {
            return Err(GraphError::Invalid("root has a parent".into()));
        }
        for (child, parent) in &self.parent {
            if !self.payload.contains_key(parent) {
                return Err(GraphError::Invalid(format!("dangling parent {parent}")));
            }
            if !self.children[parent].contains(child) {
                return Err(GraphError::Invalid(format!("children map misses {child}")));
            }
            let prov = self.provenance.get(child).copied();
            let (pt, ct) = (
                self.payload[parent].event_time,
                self.payload[child].event_time,
            );
            if pt > ct && prov != Some(Provenance::FallbackSeed) {
                return Err(GraphError::Invalid(format!(
                    "edge {child}->{parent} goes backwards in time"
                )));
            }
        }
        for id in self.payload.keys() {
            let mut cur = id.as_str();
            let mut steps = 0;
            while let Some(p) = self.parent.get(cur) {
                cur = p;
                steps += 1;
                if steps >= n {
                    return Err(GraphError::Invalid(format!("cycle through {id}")));
                }
            }
            if cur != self.root {
                return Err(GraphError::Invalid(format!("{id} does not reach the root")));
            }
        }
        Ok(())
    }

    /// Distance from the root for every node, in breadth-first order.
    pub fn depths(&self) -> Vec<(&str, usize)> {
        let mut out = Vec::with_capacity(self.node_count());
        let mut queue = VecDeque::from([(self.root.as_str(), 0usize)]);
        while let Some((id, d)) = queue.pop_front() {
            out.push((id, d));
            for c in self.children_of(id) {
                queue.push_back((c.as_str(), d + 1));
            }
        }
        out
    }
}

/// Number of nodes per out-degree (children count).
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DegreeHistogram {
    pub bins: BTreeMap<usize, usize>,
}

impl DegreeHistogram {
    pub fn from_bins(bins: impl IntoIterator<Item = (usize, usize)>) -> Self {
        DegreeHistogram {
            bins: bins.into_iter().collect(),
        }
    }

    pub fn total(&self) -> usize {
        self.bins.values().sum()
    }
}

pub fn degree_histogram(tree: &DiffusionTree) -> DegreeHistogram {
    let mut bins = BTreeMap::new();
    for id in tree.node_ids() {
        *bins.entry(tree.children_of(id).len()).or_insert(0) += 1;
    }
    DegreeHistogram { bins }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub slope: f64,
    pub intercept: f64,
    pub points: usize,
}

/// Least-squares line through `(ln d, ln count)` for every bin with
/// `d >= 1` and `count >= 1`.
pub fn powerlaw_slope(hist: &DegreeHistogram) -> Result<PowerLawFit, GraphError> {
    let pts: Vec<(f64, f64)> = hist
        .bins
        .iter()
        .filter(|(&d, &c)| d >= 1 && c >= 1)
        .map(|(&d, &c)| ((d as f64).ln(), (c as f64).ln()))
        .collect();
    if pts.len() < 2 {
        return Err(GraphError::InsufficientSupport(pts.len()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Ok(PowerLawFit {
        slope,
        intercept: my - slope * mx,
        points: pts.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PageRankConfig {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PageRankConfig {
    fn default() -> Self {
        PageRankConfig {
            damping: 0.85,
            tol: 1e-10,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PageRank {
    pub scores: BTreeMap<String, f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Power-iteration PageRank over the child -> parent edges. The root is
/// the only dangling node; its mass is spread uniformly over all nodes.
/// Stops once the L1 change drops below `tol`, or after `max_iter`
/// sweeps with `converged = false`.
pub fn pagerank(tree: &DiffusionTree, config: PageRankConfig) -> Result<PageRank, GraphError> {
    let d = config.damping;
    if !(d > 0.0 && d < 1.0) {
        return Err(GraphError::InvalidDamping(d));
    }
    let ids: Vec<&str> = tree.node_ids().collect();
    let n = ids.len();
    let index: BTreeMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    // out-degree is 1 for every non-root node
    let parent: Vec<Option<usize>> = ids
        .iter()
        .map(|id| tree.parent_of(id).map(|p| index[p]))
        .collect();

    let nf = n as f64;
    let mut rank = vec![1.0 / nf; n];
    let mut next = vec![0.0; n];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iter {
        iterations += 1;
        let dangling: f64 = parent
            .iter()
            .zip(&rank)
            .filter(|(p, _)| p.is_none())
            .map(|(_, r)| r)
            .sum();
        let base = (1.0 - d) / nf + d * dangling / nf;
        next.iter_mut().for_each(|x| *x = base);
        for (i, p) in parent.iter().enumerate() {
            if let Some(p) = p {
                next[*p] += d * rank[i];
            }
        }
        let delta: f64 = next.iter().zip(&rank).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut rank, &mut next);
        if delta < config.tol {
            converged = true;
            break;
        }
    }

    Ok(PageRank {
        scores: ids.iter().map(|id| id.to_string()).zip(rank).collect(),
        iterations,
        converged,
    })
}

/// Maximum root-to-node edge count.
pub fn depth(tree: &DiffusionTree) -> usize {
    tree.depths().into_iter().map(|(_, d)| d).max().unwrap_or(0)
}

/// Mean root-to-node distance over all non-root nodes.
pub fn avg_path_length(tree: &DiffusionTree) -> Result<f64, GraphError> {
    if tree.node_count() < 2 {
        return Err(GraphError::TrivialTree);
    }
    let total: usize = tree.depths().into_iter().map(|(_, d)| d).sum();
    Ok(total as f64 / tree.edge_count() as f64)
}

/// Flat metrics object exported next to every reconstructed tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeMetrics {
    pub nodes: usize,
    pub edges: usize,
    pub depth: usize,
    pub avg_path_length: Option<f64>,
    pub seed_pagerank: f64,
    pub powerlaw_slope: Option<f64>,
}

pub fn tree_metrics(
    tree: &DiffusionTree,
    config: PageRankConfig,
) -> Result<TreeMetrics, GraphError> {
    let pr = pagerank(tree, config)?;
    Ok(TreeMetrics {
        nodes: tree.node_count(),
        edges: tree.edge_count(),
        depth: depth(tree),
        avg_path_length: avg_path_length(tree).ok(),
        seed_pagerank: pr.scores[tree.root()],
        powerlaw_slope: powerlaw_slope(&degree_histogram(tree))
            .ok()
            .map(|f| f.slope),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeRow {
    pub child_id: String,
    pub parent_id: String,
    pub provenance: Provenance,
}

/// Writes `child_id,parent_id,provenance` rows ordered by child id.
pub fn write_edge_list<W: Write>(tree: &DiffusionTree, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["child_id", "parent_id", "provenance"])?;
    for (c, p, prov) in tree.edges() {
        w.write_record([c, p, prov.as_str()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_edge_list<R: Read>(input: R) -> Result<Vec<EdgeRow>, csv::Error> {
    csv::Reader::from_reader(input).deserialize().collect()
}

/// Writes `degree,count` rows.
pub fn write_degree_histogram<W: Write>(hist: &DegreeHistogram, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["degree", "count"])?;
    for (d, c) in &hist.bins {
        w.write_record([d.to_string(), c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
