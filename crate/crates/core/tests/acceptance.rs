//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rdnet::cascade::{
    generate_synthetic_dataset, monte_carlo_coverage, simulate, AttributeSampler, CascadeConfig,
    SimulationMode, SynthConfig,
};
use rdnet::graphcore::{self, DegreeHistogram, DiffusionTree, PageRankConfig, Provenance};
use rdnet::ingest::{CascadeDataset, CascadeRecord};
use rdnet::rdn::{build_rdn, AttachmentRule, RuleKind};
use rdnet::regress::{
    fit, measure_beta, score_predictions, sweep_features, sweep_rules, Feature, FeatureSet,
    FitOptions, SpreadModel,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn parents(tree: &DiffusionTree) -> BTreeMap<String, String> {
    tree.edges()
        .map(|(c, p, _)| (c.to_string(), p.to_string()))
        .collect()
}

fn edges(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
    pairs
        .iter()
        .map(|(c, p)| (c.to_string(), p.to_string()))
        .collect()
}

fn four_users() -> CascadeDataset {
    let records = vec![
        CascadeRecord::new("S", 1000, 50, 100, 0).seed(),
        CascadeRecord::new("A", 10, 5, 10, 100),
        CascadeRecord::new("B", 500, 20, 40, 200),
        CascadeRecord::new("C", 70, 7, 9, 300),
    ];
    let mut friends = BTreeMap::new();
    friends.insert("A".to_string(), BTreeSet::from(["S".to_string()]));
    friends.insert(
        "B".to_string(),
        BTreeSet::from(["S".to_string(), "A".to_string()]),
    );
    friends.insert(
        "C".to_string(),
        BTreeSet::from(["A".to_string(), "B".to_string()]),
    );
    CascadeDataset::new("four", records, friends)
}

fn criterion_1() -> Outcome {
    let ds = four_users();
    let cases = [
        ("R1", vec![("A", "S"), ("B", "A"), ("C", "B")]),
        ("R2:3600", vec![("A", "S"), ("B", "S"), ("C", "B")]),
        ("R3:3600", vec![("A", "S"), ("B", "A"), ("C", "A")]),
    ];
    let mut slowest = Duration::ZERO;
    for (label, want) in cases {
        let rule: AttachmentRule = label.parse().map_err(|e| format!("{e}"))?;
        let start = Instant::now();
        let (tree, _) = build_rdn(&ds, rule).map_err(|e| e.to_string())?;
        slowest = slowest.max(start.elapsed());
        check(
            parents(&tree) == edges(&want),
            format!("{label}: got {:?}", parents(&tree)),
        )?;
    }
    check(
        slowest < Duration::from_millis(1),
        format!("slowest build took {slowest:?}"),
    )?;
    Ok(format!("3 rules match, slowest build {slowest:?}"))
}

fn random_dataset(rng: &mut ChaCha8Rng, idx: usize) -> CascadeDataset {
    let n = rng.random_range(1..=8usize);
    let ids: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
    let mut records =
        vec![CascadeRecord::new(&ids[0], rng.random_range(0..4) * 100, 1, 1, 0).seed()];
    for id in &ids[1..] {
        // coarse grid so ties and window boundaries are common
        let t = rng.random_range(0..=16i64) * 450;
        records.push(CascadeRecord::new(
            id,
            rng.random_range(0..4) * 100,
            1,
            1,
            t,
        ));
    }
    let mut friends = BTreeMap::new();
    for id in &ids[1..] {
        let set: BTreeSet<String> = ids
            .iter()
            .filter(|o| *o != id && rng.random_bool(0.5))
            .cloned()
            .collect();
        friends.insert(id.clone(), set);
    }
    CascadeDataset::new(format!("random{idx}"), records, friends)
}

/// Parent of `u` straight from the rule definitions.
fn oracle_parent(ds: &CascadeDataset, u: &CascadeRecord, label: &str) -> String {
    let seed = ds.records().iter().find(|r| r.is_seed).unwrap();
    let cand: Vec<&CascadeRecord> = ds
        .records()
        .iter()
        .filter(|v| {
            ds.friends_map()
                .get(&u.user_id)
                .is_some_and(|f| f.contains(&v.user_id))
        })
        .filter(|v| v.is_seed || v.event_time < u.event_time)
        .collect();
    if cand.is_empty() {
        return seed.user_id.clone();
    }
    let latest = || {
        let mut c = cand.clone();
        c.sort_by(|a, b| {
            b.event_time
                .cmp(&a.event_time)
                .then(a.user_id.cmp(&b.user_id))
        });
        c[0].user_id.clone()
    };
    if label == "R1" {
        return latest();
    }
    let minutes: i64 = label[3..].parse().unwrap();
    let mut window: Vec<&CascadeRecord> = cand
        .iter()
        .copied()
        .filter(|v| u.event_time - v.event_time <= minutes * 60)
        .collect();
    if window.is_empty() {
        return latest();
    }
    if label.starts_with("R2") {
        window.sort_by(|a, b| {
            b.followers_count
                .cmp(&a.followers_count)
                .then(a.user_id.cmp(&b.user_id))
        });
    } else {
        window.sort_by(|a, b| {
            a.followers_count
                .cmp(&b.followers_count)
                .then(a.user_id.cmp(&b.user_id))
        });
    }
    window[0].user_id.clone()
}

fn criterion_2() -> Outcome {
    let labels = ["R1", "R2_15", "R2_30", "R2_60", "R3_15", "R3_30", "R3_60"];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut decisions = 0;
    for i in 0..200 {
        let ds = random_dataset(&mut rng, i);
        for label in labels {
            let rule: AttachmentRule = label.parse().map_err(|e| format!("{e}"))?;
            let (tree, _) =
                build_rdn(&ds, rule).map_err(|e| format!("dataset {i} {label}: {e}"))?;
            for u in ds.records().iter().filter(|r| !r.is_seed) {
                let want = oracle_parent(&ds, u, label);
                let got = tree.parent_of(&u.user_id).unwrap_or("<none>");
                check(
                    got == want,
                    format!(
                        "dataset {i} {label} user {}: got {got}, want {want}",
                        u.user_id
                    ),
                )?;
                decisions += 1;
            }
        }
    }
    Ok(format!(
        "200 datasets x 7 rules, {decisions} attachments agree"
    ))
}

fn planted(noise: f64, seed: u64) -> Result<(SpreadModel, f64, usize), String> {
    let law = SpreadModel::parse_law("followers=-0.77,friends=-0.12").map_err(|e| e.to_string())?;
    let config = SynthConfig {
        n_users: 4000,
        decoy_rate: 0.0,
        noise_sigma: noise,
        cascade: CascadeConfig {
            rng_seed: seed,
            ..CascadeConfig::default()
        },
        ..SynthConfig::default()
    };
    let synth = generate_synthetic_dataset(&law, &AttributeSampler::default(), &config)
        .map_err(|e| e.to_string())?;
    check(
        synth.dataset.len() >= 3000,
        format!("only {} users", synth.dataset.len()),
    )?;
    let (tree, _) =
        build_rdn(&synth.dataset, AttachmentRule::default()).map_err(|e| e.to_string())?;
    let m = measure_beta(&tree);
    let features: FeatureSet = "friends,followers".parse().map_err(|e| format!("{e}"))?;
    let out =
        fit(&m.samples, &features, FitOptions::default(), "planted").map_err(|e| e.to_string())?;
    Ok((
        out.model,
        out.r2_log.unwrap_or(f64::NAN),
        synth.dataset.len(),
    ))
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let (clean, _, users) = planted(0.0, 3)?;
    let wf = clean.weight(Feature::Followers).unwrap();
    let wr = clean.weight(Feature::Friends).unwrap();
    check(
        (wf + 0.77).abs() <= 1e-6 && (wr + 0.12).abs() <= 1e-6,
        format!("noiseless weights followers={wf} friends={wr}"),
    )?;
    let (noisy, r2_log, _) = planted(0.1, 3)?;
    let nf = noisy.weight(Feature::Followers).unwrap();
    let nr = noisy.weight(Feature::Friends).unwrap();
    check(
        (nf + 0.77).abs() <= 0.02 && (nr + 0.12).abs() <= 0.02,
        format!("noisy weights followers={nf} friends={nr}"),
    )?;
    check(r2_log >= 0.95, format!("noisy log-space R2 {r2_log}"))?;
    let elapsed = start.elapsed();
    check(
        elapsed < Duration::from_secs(5),
        format!("took {elapsed:?}"),
    )?;
    Ok(format!(
        "{users} users; clean ({wf:.9}, {wr:.9}); noisy ({nf:.4}, {nr:.4}) R2_log={r2_log:.4}; {elapsed:?}"
    ))
}

fn synth_set(
    law: &str,
    n: usize,
    decoy_rate: f64,
    consistent: Option<AttachmentRule>,
    noise: f64,
) -> Vec<CascadeDataset> {
    let law = SpreadModel::parse_law(law).unwrap();
    (0..n as u64)
        .map(|i| {
            let config = SynthConfig {
                name: format!("set{i}"),
                n_users: 2000,
                decoy_rate,
                noise_sigma: noise,
                consistent_with: consistent,
                cascade: CascadeConfig {
                    rng_seed: 100 + i,
                    ..CascadeConfig::default()
                },
                ..SynthConfig::default()
            };
            generate_synthetic_dataset(&law, &AttributeSampler::default(), &config)
                .unwrap()
                .dataset
        })
        .collect()
}

fn criterion_4() -> Outcome {
    let sets = synth_set(
        "followers=-0.77",
        3,
        0.3,
        Some(AttachmentRule::default()),
        0.1,
    );
    let rows = sweep_features(&sets[0], &sets[1..], AttachmentRule::default())
        .map_err(|e| e.to_string())?;
    check(rows.len() == 15, format!("{} rows", rows.len()))?;
    let score = |label: &str| rows.iter().find(|r| r.label == label).and_then(|r| r.r2);
    let (with, without): (Vec<_>, Vec<_>) =
        rows.iter().partition(|r| r.label.contains("followers"));
    let worst_with = with
        .iter()
        .map(|r| r.r2.unwrap_or(f64::NEG_INFINITY))
        .fold(f64::INFINITY, f64::min);
    let best_without = without
        .iter()
        .map(|r| r.r2.unwrap_or(f64::NEG_INFINITY))
        .fold(f64::NEG_INFINITY, f64::max);
    check(
        worst_with > best_without,
        format!("worst with followers {worst_with}, best without {best_without}"),
    )?;
    Ok(format!(
        "min R2 with followers {worst_with:.4} > max without {best_without:.4}; (friends,followers) {:.4}",
        score("(friends,followers)").unwrap_or(f64::NAN)
    ))
}

fn criterion_5() -> Outcome {
    let sets = synth_set(
        "followers=-0.77,friends=-0.12",
        3,
        0.3,
        Some(AttachmentRule::default()),
        0.0,
    );
    let rules = AttachmentRule::labelled();
    let features: FeatureSet = "friends,followers".parse().map_err(|e| format!("{e}"))?;
    let rows = sweep_rules(&sets, &rules, &features).map_err(|e| e.to_string())?;
    let r2_of = |kind: RuleKind| -> Vec<f64> {
        rows.iter()
            .zip(&rules)
            .filter(|(_, r)| r.kind() == kind)
            .map(|(row, _)| row.r2.unwrap_or(f64::NEG_INFINITY))
            .collect()
    };
    let r3 = r2_of(RuleKind::R3);
    let r2 = r2_of(RuleKind::R2);
    let min_r3 = r3.iter().copied().fold(f64::INFINITY, f64::min);
    let max_r2 = r2.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    check(min_r3 > max_r2, format!("R3 rows {r3:?} vs R2 rows {r2:?}"))?;
    Ok(format!("min R3 R2={min_r3:.4} > max R2 R2={max_r2:.4}"))
}

/// Followers-only model with `beta * followers == k` at the given count.
fn constant_rate(k: f64, followers: u64) -> SpreadModel {
    let f = followers as f64;
    let w = (k / f).ln() / f.ln();
    SpreadModel::with_weights(FeatureSet::new([Feature::Followers]).unwrap(), vec![w]).unwrap()
}

fn criterion_6() -> Outcome {
    let model = constant_rate(2.0, 10);
    let sampler = AttributeSampler::constant(10, 10, 10);
    let seed = CascadeRecord::new("s", 10, 10, 10, 0).seed();
    let mut config = CascadeConfig {
        max_depth: 3,
        ..CascadeConfig::default()
    };
    let sim = simulate(&model, &seed, &sampler, &config).map_err(|e| e.to_string())?;
    check(
        sim.tree.node_count() == 15,
        format!("expected mode gave {} nodes", sim.tree.node_count()),
    )?;

    config.mode = SimulationMode::Stochastic;
    config.rng_seed = 6;
    let a = monte_carlo_coverage(&model, &seed, &sampler, &config, 10_000)
        .map_err(|e| e.to_string())?;
    let se = a.standard_error();
    check(
        (a.mean_size - 15.0).abs() <= 3.0 * se,
        format!("mean {} se {se}", a.mean_size),
    )?;
    let b = monte_carlo_coverage(&model, &seed, &sampler, &config, 10_000)
        .map_err(|e| e.to_string())?;
    check(
        a.sizes == b.sizes && a.mean_size.to_bits() == b.mean_size.to_bits(),
        "reruns differ",
    )?;
    Ok(format!(
        "15 nodes; stochastic mean {:.3} (se {se:.3}); reproducible",
        a.mean_size
    ))
}

fn rec(id: &str, t: i64) -> CascadeRecord {
    CascadeRecord::new(id, 1, 1, 1, t)
}

fn criterion_7() -> Outcome {
    let mut chain = DiffusionTree::new(rec("c0", 0).seed());
    for i in 1..6 {
        chain
            .attach(
                rec(&format!("c{i}"), i),
                &format!("c{}", i - 1),
                Provenance::RuleChoice,
            )
            .map_err(|e| e.to_string())?;
    }
    let mut star = DiffusionTree::new(rec("hub", 0).seed());
    for i in 0..7 {
        star.attach(rec(&format!("l{i}"), 1), "hub", Provenance::RuleChoice)
            .map_err(|e| e.to_string())?;
    }
    check(graphcore::depth(&chain) == 5, "chain depth")?;
    check(
        graphcore::avg_path_length(&chain).map_err(|e| e.to_string())? == 3.0,
        "chain avg path",
    )?;
    check(graphcore::depth(&star) == 1, "star depth")?;
    check(
        graphcore::avg_path_length(&star).map_err(|e| e.to_string())? == 1.0,
        "star avg path",
    )?;

    for tree in [&chain, &star] {
        let pr = graphcore::pagerank(tree, PageRankConfig::default()).map_err(|e| e.to_string())?;
        let sum: f64 = pr.scores.values().sum();
        check((sum - 1.0).abs() <= 1e-9, format!("pagerank sum {sum}"))?;
    }
    let mut pair = DiffusionTree::new(rec("r", 0).seed());
    pair.attach(rec("c", 1), "r", Provenance::RuleChoice)
        .map_err(|e| e.to_string())?;
    let pr = graphcore::pagerank(&pair, PageRankConfig::default()).map_err(|e| e.to_string())?;
    let (c, r) = (pr.scores["c"], pr.scores["r"]);
    check(
        (c - 0.350877).abs() <= 1e-6 && (r - 0.649123).abs() <= 1e-6,
        format!("two-node pagerank c={c} r={r}"),
    )?;

    let hist =
        DegreeHistogram::from_bins([(1, 4096), (2, 1024), (4, 256), (8, 64), (16, 16), (32, 4)]);
    let slope = graphcore::powerlaw_slope(&hist)
        .map_err(|e| e.to_string())?
        .slope;
    check((slope + 2.0).abs() <= 1e-12, format!("slope {slope}"))?;
    Ok(format!("pagerank pair ({c:.6}, {r:.6}); slope {slope}"))
}

fn criterion_8() -> Outcome {
    let truth = [0.1, 0.4, 0.2, 0.7, 0.05];
    let perfect = score_predictions(&truth, &truth).map_err(|e| e.to_string())?;
    check(
        perfect.r2 == Some(1.0) && perfect.mae == 0.0 && perfect.mse == 0.0,
        format!("perfect {perfect:?}"),
    )?;
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let flat = score_predictions(&[mean; 5], &truth).map_err(|e| e.to_string())?;
    let r2_mean = flat.r2.unwrap_or(f64::NAN);
    check(
        r2_mean.abs() <= 1e-12,
        format!("mean predictor R2 {r2_mean}"),
    )?;
    let bad = score_predictions(&[0.7, 0.05, 0.6, 0.0, 0.9], &truth).map_err(|e| e.to_string())?;
    let r2_bad = bad.r2.unwrap_or(f64::NAN);
    check(r2_bad < 0.0, format!("bad predictor R2 {r2_bad}"))?;
    Ok(format!("perfect 1, mean {r2_mean:.1e}, bad {r2_bad:.3}"))
}

fn rdnet(out: &Path, args: &[&str]) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_rdnet"))
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .env_remove("RDNET_OUT_DIR")
        .output()
        .map_err(|e| e.to_string())?;
    check(
        status.status.code() == Some(0),
        format!(
            "{args:?} exited {:?}: {}",
            status.status.code(),
            String::from_utf8_lossy(&status.stderr)
        ),
    )
}

const DECLARED: [&str; 9] = [
    "synthetic.jsonl",
    "synthetic.truth.csv",
    "synthetic.edges.csv",
    "synthetic.degree.csv",
    "synthetic.metrics.json",
    "synthetic.model.json",
    "eval.csv",
    "predictions.csv",
    "manifest.jsonl",
];

fn pipeline(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let p = |f: &str| dir.join(f).display().to_string();
    rdnet(
        dir,
        &[
            "synth",
            "--n-users",
            "800",
            "--seed",
            "9",
            "--weights",
            "followers=-0.77,friends=-0.12",
        ],
    )?;
    rdnet(dir, &["build", &p("synthetic.jsonl")])?;
    rdnet(dir, &["fit", &p("synthetic.jsonl")])?;
    rdnet(
        dir,
        &["eval", &p("synthetic.model.json"), &p("synthetic.jsonl")],
    )?;
    let mut files = BTreeMap::new();
    for f in DECLARED {
        let bytes = std::fs::read(dir.join(f)).map_err(|e| format!("{f}: {e}"))?;
        files.insert(f.to_string(), bytes);
    }
    Ok(files)
}

fn criterion_9() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let a = pipeline(&tmp.path().join("a"))?;
    let b = pipeline(&tmp.path().join("b"))?;
    for (name, bytes) in &a {
        if name == "manifest.jsonl" {
            let lines = String::from_utf8_lossy(bytes).lines().count();
            check(lines == 4, format!("manifest has {lines} lines"))?;
            continue;
        }
        check(
            Some(bytes) == b.get(name),
            format!("{name} differs between runs"),
        )?;
    }
    Ok(format!("{} files emitted, outputs byte-identical", a.len()))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("rdn hand traces", criterion_1),
        ("brute-force rule equivalence", criterion_2),
        ("planted exponent recovery", criterion_3),
        ("feature sweep discrimination", criterion_4),
        ("rule sweep discrimination", criterion_5),
        ("branching process", criterion_6),
        ("metrics oracles", criterion_7),
        ("R2 conventions", criterion_8),
        ("end-to-end CLI", criterion_9),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS {} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name}: {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
    println!("all {} criteria passed", criteria.len());
}
