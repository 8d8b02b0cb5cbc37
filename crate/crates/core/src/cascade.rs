//! SI diffusion driven by a fitted spreading-rate model, and synthetic
//! cascades generated from a planted law.
//!
//! Every infected user `i` passes the message to `nRT = beta(i) * F(i)` of
//! its followers. In expected mode that count is rounded half away from
//! zero, so a node with `beta * F < 0.5` ends its branch; in stochastic mode
//! it is drawn from `Binomial(F, beta)`.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Exp, LogNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graphcore::{self, DiffusionTree, GraphError, Provenance};
use crate::ingest::{CascadeDataset, CascadeRecord};
use crate::rdn::{choose_parent, AttachmentRule};
use crate::regress::{Feature, FeatureValues, RegressError, SpreadModel};

#[derive(Debug, Error)]
pub enum CascadeError {
    #[error("invalid sampler: {0}")]
    Sampler(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Regress(#[from] RegressError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Truncated power law over the integers `min..=max`, sampled as the floor
/// of a continuous Pareto variate on `[min, max + 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLaw {
    pub alpha: f64,
    pub min: u64,
    pub max: u64,
}

impl PowerLaw {
    pub fn new(alpha: f64, min: u64, max: u64) -> Result<Self, CascadeError> {
        let law = PowerLaw { alpha, min, max };
        law.check()?;
        Ok(law)
    }

    pub fn constant(value: u64) -> Self {
        PowerLaw {
            alpha: 2.0,
            min: value,
            max: value,
        }
    }

    fn check(&self) -> Result<(), CascadeError> {
        if !(self.alpha > 1.0 && self.alpha.is_finite()) {
            return Err(CascadeError::Sampler(format!(
                "alpha must exceed 1, got {}",
                self.alpha
            )));
        }
        if self.min < 1 || self.min > self.max {
            return Err(CascadeError::Sampler(format!(
                "support must satisfy 1 <= min <= max, got [{}, {}]",
                self.min, self.max
            )));
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u: f64 = rng.random();
        if self.min == self.max {
            return self.min;
        }
        let e = 1.0 - self.alpha;
        let lo = (self.min as f64).powf(e);
        let hi = (self.max as f64 + 1.0).powf(e);
        let x = (lo - u * (lo - hi)).powf(1.0 / e);
        (x.floor() as u64).clamp(self.min, self.max)
    }
}

/// Attribute distributions for users created by the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttributeSampler {
    pub followers: PowerLaw,
    pub friends: PowerLaw,
    pub posts: PowerLaw,
}

impl Default for AttributeSampler {
    fn default() -> Self {
        AttributeSampler {
            followers: PowerLaw {
                alpha: 2.0,
                min: 50,
                max: 1_000_000,
            },
            friends: PowerLaw {
                alpha: 2.0,
                min: 10,
                max: 100_000,
            },
            posts: PowerLaw {
                alpha: 1.8,
                min: 10,
                max: 500_000,
            },
        }
    }
}

impl AttributeSampler {
    pub fn constant(followers: u64, friends: u64, posts: u64) -> Self {
        AttributeSampler {
            followers: PowerLaw::constant(followers),
            friends: PowerLaw::constant(friends),
            posts: PowerLaw::constant(posts),
        }
    }

    pub fn check(&self) -> Result<(), CascadeError> {
        self.followers.check()?;
        self.friends.check()?;
        self.posts.check()
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (u64, u64, u64) {
        (
            self.followers.sample(rng),
            self.friends.sample(rng),
            self.posts.sample(rng),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimulationMode {
    Expected,
    Stochastic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CascadeConfig {
    pub max_depth: usize,
    pub max_nodes: usize,
    pub mode: SimulationMode,
    pub rng_seed: u64,
    /// Mean of the exponential delay between a retweet and its source.
    pub mean_delay_seconds: f64,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        CascadeConfig {
            max_depth: 20,
            max_nodes: 10_000,
            mode: SimulationMode::Expected,
            rng_seed: 0,
            mean_delay_seconds: 300.0,
        }
    }
}

impl CascadeConfig {
    fn check(&self) -> Result<(), CascadeError> {
        if !(self.mean_delay_seconds > 0.0 && self.mean_delay_seconds.is_finite()) {
            return Err(CascadeError::Config(format!(
                "mean delay must be positive, got {}",
                self.mean_delay_seconds
            )));
        }
        Ok(())
    }
}

/// Random stream for trial `trial` of a run seeded with `base`. Trial 0 is
/// the stream a single simulation uses.
pub fn trial_rng(base: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(trial);
    rng
}

fn delay<R: Rng + ?Sized>(dist: &Exp<f64>, rng: &mut R) -> i64 {
    (dist.sample(rng).round() as i64).max(1)
}

/// `round(beta * F)`, half away from zero, within `[0, F]`.
pub fn expected_children(
    model: &SpreadModel,
    record: &CascadeRecord,
    elapsed: i64,
) -> Result<u64, RegressError> {
    let beta = model.predict_values(&FeatureValues::of(record, elapsed))?;
    Ok(round_children(beta, record.followers_count))
}

fn round_children(beta: f64, followers: u64) -> u64 {
    let k = (beta * followers as f64).round();
    if k.is_nan() || k <= 0.0 {
        0
    } else {
        (k as u64).min(followers)
    }
}

fn spawn_count<R: Rng + ?Sized>(
    mode: SimulationMode,
    beta: f64,
    followers: u64,
    rng: &mut R,
) -> u64 {
    match mode {
        SimulationMode::Expected => round_children(beta, followers),
        SimulationMode::Stochastic => {
            let p = beta.clamp(0.0, 1.0);
            Binomial::new(followers, p)
                .expect("p clamped to [0, 1]")
                .sample(rng)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HaltReason {
    /// No node left that spawns children.
    Extinct,
    MaxDepth,
    MaxNodes,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub tree: DiffusionTree,
    pub halted: HaltReason,
    /// A zero cap forced a single-node tree.
    pub degenerate: bool,
}

/// Breadth-first SI process from `seed_record`. The node whose batch
/// crosses `max_nodes` keeps its whole batch, so the tree can exceed the
/// cap by at most one batch.
pub fn simulate(
    model: &SpreadModel,
    seed_record: &CascadeRecord,
    sampler: &AttributeSampler,
    config: &CascadeConfig,
) -> Result<Simulation, CascadeError> {
    simulate_with(
        model,
        seed_record,
        sampler,
        config,
        &mut trial_rng(config.rng_seed, 0),
    )
}

fn simulate_with<R: Rng + ?Sized>(
    model: &SpreadModel,
    seed_record: &CascadeRecord,
    sampler: &AttributeSampler,
    config: &CascadeConfig,
    rng: &mut R,
) -> Result<Simulation, CascadeError> {
    sampler.check()?;
    config.check()?;
    let mut root = seed_record.clone();
    root.is_seed = true;
    let seed_time = root.event_time;
    model.predict_values(&FeatureValues::of(&root, 0))?;
    let mut tree = DiffusionTree::new(root.clone());
    if config.max_depth == 0 || config.max_nodes == 0 {
        return Ok(Simulation {
            tree,
            halted: if config.max_depth == 0 {
                HaltReason::MaxDepth
            } else {
                HaltReason::MaxNodes
            },
            degenerate: true,
        });
    }

    let delays = Exp::new(1.0 / config.mean_delay_seconds).expect("positive rate");
    let mut queue = VecDeque::from([(root, 0usize)]);
    let mut next_id = 1u64;
    let mut halted = HaltReason::Extinct;
    while let Some((node, depth)) = queue.pop_front() {
        if tree.node_count() >= config.max_nodes {
            halted = HaltReason::MaxNodes;
            break;
        }
        if depth >= config.max_depth {
            halted = HaltReason::MaxDepth;
            continue;
        }
        let beta = model.predict_values(&FeatureValues::of(&node, node.event_time - seed_time))?;
        let k = spawn_count(config.mode, beta, node.followers_count, rng);
        for _ in 0..k {
            let (followers, friends, posts) = sampler.draw(rng);
            let t = node.event_time + delay(&delays, rng);
            let child = CascadeRecord::new(
                format!("{}.{next_id}", seed_record.user_id),
                followers,
                friends,
                posts,
                t,
            );
            next_id += 1;
            tree.attach(child.clone(), &node.user_id, Provenance::RuleChoice)?;
            queue.push_back((child, depth + 1));
        }
    }
    Ok(Simulation {
        tree,
        halted,
        degenerate: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    pub mode: SimulationMode,
    pub trials: usize,
    pub mean_size: f64,
    pub std_size: f64,
    pub mean_depth: f64,
    /// Tree depth -> number of trials.
    pub depth_histogram: BTreeMap<usize, usize>,
    pub config: CascadeConfig,
    pub sampler: AttributeSampler,
    #[serde(skip)]
    pub sizes: Vec<usize>,
}

impl CoverageReport {
    pub fn standard_error(&self) -> f64 {
        self.std_size / (self.trials as f64).sqrt()
    }
}

/// Repeats [`simulate`] `trials` times. Trial `t` draws from
/// `trial_rng(config.rng_seed, t)`, so results do not depend on scheduling
/// and a longer run extends a shorter one.
pub fn monte_carlo_coverage(
    model: &SpreadModel,
    seed_record: &CascadeRecord,
    sampler: &AttributeSampler,
    config: &CascadeConfig,
    trials: usize,
) -> Result<CoverageReport, CascadeError> {
    if trials == 0 {
        return Err(CascadeError::Config("trials must be at least 1".into()));
    }
    let runs: Vec<(usize, usize)> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let sim = simulate_with(
                model,
                seed_record,
                sampler,
                config,
                &mut trial_rng(config.rng_seed, t),
            )?;
            Ok((sim.tree.node_count(), graphcore::depth(&sim.tree)))
        })
        .collect::<Result<_, CascadeError>>()?;

    let n = trials as f64;
    let sizes: Vec<usize> = runs.iter().map(|r| r.0).collect();
    let mean = sizes.iter().sum::<usize>() as f64 / n;
    let std = if trials > 1 {
        (sizes
            .iter()
            .map(|&s| (s as f64 - mean).powi(2))
            .sum::<f64>()
            / (n - 1.0))
            .sqrt()
    } else {
        0.0
    };
    let mut depth_histogram = BTreeMap::new();
    for (_, d) in &runs {
        *depth_histogram.entry(*d).or_insert(0) += 1;
    }
    Ok(CoverageReport {
        mode: config.mode,
        trials,
        mean_size: mean,
        std_size: std,
        mean_depth: runs.iter().map(|r| r.1 as f64).sum::<f64>() / n,
        depth_histogram,
        config: *config,
        sampler: *sampler,
        sizes,
    })
}

/// Options of the planted-law cascade generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub name: String,
    pub n_users: usize,
    pub cascade: CascadeConfig,
    /// Probability per slot of giving a user an extra, non-parent friend
    /// who retweeted earlier.
    pub decoy_rate: f64,
    /// Decoy slots per user.
    pub max_decoys: u64,
    /// Sigma of the multiplicative lognormal noise on recorded counts.
    pub noise_sigma: f64,
    /// Only keep decoys that leave this rule's choice on the true parent.
    pub consistent_with: Option<AttachmentRule>,
    /// Seed tweet time, epoch seconds.
    pub start_time: i64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            name: "synthetic".into(),
            n_users: 1000,
            cascade: CascadeConfig::default(),
            decoy_rate: 0.3,
            max_decoys: 3,
            noise_sigma: 0.0,
            consistent_with: None,
            start_time: 1_430_000_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCascade {
    pub dataset: CascadeDataset,
    /// Ground-truth tree with the recorded (possibly noisy) payloads.
    pub truth: DiffusionTree,
    /// The seed spawned nobody.
    pub extinct: bool,
}

struct Node {
    id: String,
    parent: Option<usize>,
    followers: u64,
    friends: u64,
    posts: u64,
    time: i64,
}

impl Node {
    fn values(&self, seed_time: i64) -> FeatureValues {
        FeatureValues {
            followers: self.followers,
            friends: self.friends,
            posts: self.posts,
            elapsed: (self.time - seed_time).max(1),
        }
    }
}

const CALIBRATION_WINDOW: i64 = 256;
/// Residual (in ln beta) above which the search leaves the sampled neighbourhood.
const CALIBRATION_TOLERANCE: f64 = 1e-7;

/// Adjusts the follower count (and, when the law uses one, the friends or
/// posts count) of a user with `k` children so that `k / F` matches the
/// planted law as closely as integer counts allow.
///
/// With a partner feature the search stays near the sampled follower count
/// and inside the sampler's support; among equally good candidates the one
/// closest to the sampled count wins.
fn calibrate(
    law: &SpreadModel,
    sampler: &AttributeSampler,
    node: &mut Node,
    k: u64,
    seed_time: i64,
) {
    let w_f = law.weight(Feature::Followers).unwrap_or(0.0);
    let slope = 1.0 + w_f;
    let partner = [Feature::Friends, Feature::Posts]
        .into_iter()
        .find(|f| law.weight(*f).is_some_and(|w| w.abs() > 1e-12));
    let ln_k = (k as f64).ln();

    let residual = |node: &Node, f: u64, p: Option<u64>| -> f64 {
        let mut v = node.values(seed_time);
        v.followers = f;
        match (partner, p) {
            (Some(Feature::Friends), Some(p)) => v.friends = p,
            (Some(Feature::Posts), Some(p)) => v.posts = p,
            _ => {}
        }
        let beta = law.predict_values(&v).map(f64::ln).unwrap_or(f64::INFINITY);
        ln_k - (f as f64).ln() - beta
    };
    let (original_partner, partner_support) = match partner {
        Some(Feature::Friends) => (node.friends, sampler.friends),
        Some(Feature::Posts) => (node.posts, sampler.posts),
        _ => (0, sampler.friends),
    };
    // best (|residual|, followers, partner) over followers in lo..=hi
    let search = |node: &Node,
                  lo: i64,
                  hi: i64,
                  prefer: u64,
                  bounded: bool|
     -> Option<(f64, u64, Option<u64>)> {
        let mut best: Option<(f64, u64, Option<u64>)> = None;
        for f in lo..=hi {
            let f = f as u64;
            let p = match partner {
                None => None,
                Some(feat) => {
                    // ln beta is linear in ln x_p: solve for the partner value
                    let r0 = residual(node, f, Some(original_partner));
                    let target = (original_partner as f64).ln()
                        + r0 / law.weight(feat).expect("partner has a weight");
                    if !target.is_finite() || target > 34.0 {
                        continue;
                    }
                    let p = (target.exp().round() as u64).max(1);
                    if bounded && !(partner_support.min..=partner_support.max).contains(&p) {
                        continue;
                    }
                    Some(p)
                }
            };
            let r = residual(node, f, p).abs();
            let better = match best {
                None => true,
                Some((br, bf, _)) => {
                    r < br - 1e-12 || (r <= br + 1e-12 && f.abs_diff(prefer) < bf.abs_diff(prefer))
                }
            };
            if better {
                best = Some((r, f, p));
            }
        }
        best
    };

    let floor = k.max(1) as i64;
    let mut best = None;
    if partner.is_some() {
        let f0 = node.followers as i64;
        let lo = (f0 - CALIBRATION_WINDOW)
            .max(floor)
            .max(sampler.followers.min as i64);
        let hi = (f0 + CALIBRATION_WINDOW).min(sampler.followers.max as i64);
        if lo <= hi {
            best = search(node, lo, hi, node.followers, true);
        }
    }
    if best.is_none_or(|(r, _, _)| r > CALIBRATION_TOLERANCE) {
        let mut unit = node.values(seed_time);
        unit.followers = 1;
        let Ok(base) = law.predict_values(&unit).map(f64::ln) else {
            return;
        };
        if slope.abs() < 1e-12 && partner.is_none() {
            return;
        }
        let centre = if slope.abs() < 1e-12 {
            node.followers as f64
        } else {
            ((ln_k - base) / slope).exp()
        };
        if !centre.is_finite() || centre > 1e15 {
            return;
        }
        let lo = (centre.round() as i64 - CALIBRATION_WINDOW).max(floor);
        let hi = (centre.round() as i64 + CALIBRATION_WINDOW).max(lo);
        let wide = search(node, lo, hi, centre.round() as u64, false);
        best = match (best, wide) {
            (Some(b), Some(w)) if w.0 < b.0 => Some(w),
            (None, w) => w,
            (b, _) => b,
        };
    }
    if let Some((_, f, p)) = best {
        node.followers = f;
        match (partner, p) {
            (Some(Feature::Friends), Some(p)) => node.friends = p,
            (Some(Feature::Posts), Some(p)) => node.posts = p,
            _ => {}
        }
    }
}

/// Simulates one cascade under the planted law `law` and records it in the
/// cascade file model, with the true tree alongside.
///
/// In expected mode each spreader's follower count is calibrated so that
/// its measured rate sits on the planted law; lognormal noise with
/// `noise_sigma` is then applied to the recorded counts. Decoy friendships
/// point at earlier retweeters whose time gap is drawn like a real delay.
pub fn generate_synthetic_dataset(
    law: &SpreadModel,
    sampler: &AttributeSampler,
    config: &SynthConfig,
) -> Result<SyntheticCascade, CascadeError> {
    sampler.check()?;
    config.cascade.check()?;
    if config.n_users < 2 {
        return Err(CascadeError::Config(format!(
            "n_users must be at least 2, got {}",
            config.n_users
        )));
    }
    if !(0.0..=1.0).contains(&config.decoy_rate) {
        return Err(CascadeError::Config(format!(
            "decoy rate must lie in [0, 1], got {}",
            config.decoy_rate
        )));
    }
    if !(config.noise_sigma >= 0.0 && config.noise_sigma.is_finite()) {
        return Err(CascadeError::Config(format!(
            "noise sigma must be >= 0, got {}",
            config.noise_sigma
        )));
    }
    let cap = config.n_users.min(config.cascade.max_nodes.max(1));
    let mut rng = trial_rng(config.cascade.rng_seed, 0);
    let delays = Exp::new(1.0 / config.cascade.mean_delay_seconds).expect("positive rate");
    let seed_time = config.start_time;

    let (followers, friends, posts) = sampler.draw(&mut rng);
    let mut nodes = vec![Node {
        id: format!("u{:06}", 0),
        parent: None,
        followers,
        friends,
        posts,
        time: seed_time,
    }];
    let mut queue = VecDeque::from([(0usize, 0usize)]);
    while let Some((idx, depth)) = queue.pop_front() {
        if nodes.len() >= cap {
            break;
        }
        if depth >= config.cascade.max_depth {
            continue;
        }
        let beta = law.predict_values(&nodes[idx].values(seed_time))?;
        let k = spawn_count(config.cascade.mode, beta, nodes[idx].followers, &mut rng);
        if k == 0 {
            continue;
        }
        if config.cascade.mode == SimulationMode::Expected {
            calibrate(law, sampler, &mut nodes[idx], k, seed_time);
        }
        for _ in 0..k {
            let (followers, friends, posts) = sampler.draw(&mut rng);
            let time = nodes[idx].time + delay(&delays, &mut rng);
            let id = format!("u{:06}", nodes.len());
            nodes.push(Node {
                id,
                parent: Some(idx),
                followers,
                friends,
                posts,
                time,
            });
            queue.push_back((nodes.len() - 1, depth + 1));
        }
    }

    if config.noise_sigma > 0.0 {
        let noise = LogNormal::new(0.0, config.noise_sigma).expect("finite sigma");
        let jitter =
            |x: u64, rng: &mut ChaCha8Rng| ((x as f64 * noise.sample(rng)).round() as u64).max(1);
        for n in nodes.iter_mut() {
            n.followers = jitter(n.followers, &mut rng);
            n.friends = jitter(n.friends, &mut rng);
            n.posts = jitter(n.posts, &mut rng);
        }
    }

    let records: Vec<CascadeRecord> = nodes
        .iter()
        .map(|n| CascadeRecord {
            user_id: n.id.clone(),
            followers_count: n.followers,
            friends_count: n.friends,
            posts_count: n.posts,
            event_time: n.time,
            is_seed: n.parent.is_none(),
        })
        .collect();

    let mut friends: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for n in nodes.iter().skip(1) {
        let parent = n.parent.expect("non-seed has a parent");
        friends
            .entry(n.id.clone())
            .or_default()
            .insert(nodes[parent].id.clone());
    }
    add_decoys(&nodes, &records, &mut friends, config, &delays, &mut rng);

    let mut truth = DiffusionTree::new(records[0].clone());
    for (i, n) in nodes.iter().enumerate().skip(1) {
        let parent = n.parent.expect("non-seed has a parent");
        truth.attach(
            records[i].clone(),
            &nodes[parent].id,
            Provenance::RuleChoice,
        )?;
    }
    let extinct = nodes.len() == 1;
    Ok(SyntheticCascade {
        dataset: CascadeDataset::new(config.name.clone(), records, friends),
        truth,
        extinct,
    })
}

fn add_decoys(
    nodes: &[Node],
    records: &[CascadeRecord],
    friends: &mut BTreeMap<String, BTreeSet<String>>,
    config: &SynthConfig,
    delays: &Exp<f64>,
    rng: &mut ChaCha8Rng,
) {
    if config.decoy_rate <= 0.0 || config.max_decoys == 0 {
        return;
    }
    let slots = Binomial::new(config.max_decoys, config.decoy_rate).expect("rate checked");
    let mut by_time: Vec<usize> = (0..nodes.len()).collect();
    by_time.sort_by_key(|&i| (nodes[i].time, i));
    let times: Vec<i64> = by_time.iter().map(|&i| nodes[i].time).collect();
    let index: BTreeMap<&str, usize> = nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.id.as_str(), i))
        .collect();

    for (i, node) in nodes.iter().enumerate().skip(1) {
        let parent = node.parent.expect("non-seed has a parent");
        let wanted = slots.sample(rng);
        for _ in 0..wanted {
            let target = node.time - delay(delays, rng);
            // earlier retweeters, nearest to the target time first
            let earlier = times.partition_point(|&t| t < node.time);
            let split = times[..earlier].partition_point(|&t| t < target);
            let (mut left, mut right) = (split, split);
            let mut tried = 0;
            while tried < 16 && (left > 0 || right < earlier) {
                let take_right = match (left > 0, right < earlier) {
                    (true, true) => (times[right] - target) < (target - times[left - 1]),
                    (false, true) => true,
                    _ => false,
                };
                let j = if take_right {
                    right += 1;
                    by_time[right - 1]
                } else {
                    left -= 1;
                    by_time[left]
                };
                let set = friends
                    .get(&node.id)
                    .expect("every non-seed has its parent");
                if j == i || j == parent || set.contains(&nodes[j].id) {
                    continue;
                }
                tried += 1;
                if decoy_keeps_parent(i, j, parent, records, &index, set, config.consistent_with) {
                    friends
                        .get_mut(&node.id)
                        .expect("present")
                        .insert(nodes[j].id.clone());
                    break;
                }
            }
        }
    }
}

fn decoy_keeps_parent(
    node: usize,
    decoy: usize,
    parent: usize,
    records: &[CascadeRecord],
    index: &BTreeMap<&str, usize>,
    current: &BTreeSet<String>,
    rule: Option<AttachmentRule>,
) -> bool {
    let Some(rule) = rule else {
        return true;
    };
    let mut cands: Vec<&CascadeRecord> = current
        .iter()
        .map(|id| &records[index[id.as_str()]])
        .collect();
    cands.push(&records[decoy]);
    let me = &records[node];
    cands.retain(|c| c.is_seed || c.event_time < me.event_time);
    match choose_parent(me, &cands, rule) {
        Ok(choice) => choice.parent.user_id == records[parent].user_id,
        Err(_) => false,
    }
}
