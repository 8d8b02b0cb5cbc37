//! Command-line surface: validate, build, fit, eval, sweep, simulate,
//! synth and report.
//!
//! Exit codes: 0 success, 1 domain error, 2 usage or I/O error. Every run
//! appends one line to `<out-dir>/manifest.jsonl`.

use std::ffi::OsString;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cascade::{
    generate_synthetic_dataset, monte_carlo_coverage, AttributeSampler, CascadeConfig,
    CascadeError, SimulationMode, SynthConfig,
};
use crate::graphcore::{self, PageRankConfig};
use crate::ingest::{self, CascadeDataset, CascadeRecord, IngestError};
use crate::rdn::{build_rdn, AttachmentRule, RdnError, RuleKind};
use crate::regress::{
    self, evaluate, fit, measure_dataset, predictions, sweep_features, sweep_rules, sweep_training,
    FeatureSet, FitOptions, RegressError, SpreadModel, SweepRow,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{context}: {source}")]
    Io { context: String, source: io::Error },
    #[error("{path}: {source}")]
    Parse { path: String, source: IngestError },
    #[error("{0}")]
    Domain(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Domain(_) => 1,
            CliError::Parse { source, .. } => match source {
                IngestError::Io(_) | IngestError::Malformed { .. } | IngestError::MissingHeader => {
                    2
                }
                _ => 1,
            },
            CliError::Usage(_) | CliError::Io { .. } => 2,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Io { .. } => "io",
            CliError::Parse { .. } => "parse",
            CliError::Domain(_) => "domain",
        }
    }
}

macro_rules! domain_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Domain(e.to_string())
            }
        }
    )*};
}
domain_from!(RdnError, RegressError, CascadeError, graphcore::GraphError);

fn io_err(context: impl Into<String>) -> impl FnOnce(io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> CliError + '_ {
    move |e| CliError::Io {
        context: path.display().to_string(),
        source: io::Error::other(e.to_string()),
    }
}

#[derive(Debug, Parser)]
#[command(name = "rdnet", version, about = "Retweet diffusion network toolkit")]
pub struct Cli {
    /// Output directory.
    #[arg(
        long,
        global = true,
        env = "RDNET_OUT_DIR",
        default_value = "rdnet-out"
    )]
    pub out_dir: PathBuf,
    /// Format of tabular outputs.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args, Clone)]
pub struct RuleArgs {
    /// Attachment rule: R1, R2_15, R2_30, R2_60, R3_15, R3_30, R3_60,
    /// R2:<seconds>, R3:<seconds>, or R2/R3 together with --threshold.
    #[arg(long, default_value = "R3_60")]
    pub rule: String,
    /// Time frame in seconds for R2/R3, overriding the label's.
    #[arg(long)]
    pub threshold: Option<u32>,
}

impl RuleArgs {
    fn resolve(&self) -> Result<AttachmentRule, CliError> {
        resolve_rule(&self.rule, self.threshold)
    }
}

fn resolve_rule(label: &str, threshold: Option<u32>) -> Result<AttachmentRule, CliError> {
    let kind = match (label, threshold) {
        ("R2", Some(_)) => Some(RuleKind::R2),
        ("R3", Some(_)) => Some(RuleKind::R3),
        _ => None,
    };
    let rule = match kind {
        Some(kind) => format!(
            "{}:{}",
            if kind == RuleKind::R2 { "R2" } else { "R3" },
            threshold.unwrap_or(0)
        ),
        None => label.to_string(),
    };
    let mut parsed: AttachmentRule = rule.parse().map_err(|e| CliError::Usage(format!("{e}")))?;
    if let Some(t) = threshold {
        parsed = match parsed.kind() {
            RuleKind::R1 => return Err(CliError::Usage("--threshold does not apply to R1".into())),
            RuleKind::R2 if t > 0 => AttachmentRule::most_followed(t),
            RuleKind::R3 if t > 0 => AttachmentRule::least_followed(t),
            _ => return Err(CliError::Usage("--threshold must be positive".into())),
        };
    }
    Ok(parsed)
}

fn parse_features(s: &str) -> Result<FeatureSet, CliError> {
    s.parse()
        .map_err(|e: RegressError| CliError::Usage(e.to_string()))
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a cascade file and print a JSON validation report.
    Validate { path: PathBuf },
    /// Reconstruct the diffusion tree and export edges, degrees and metrics.
    Build {
        path: PathBuf,
        #[command(flatten)]
        rule: RuleArgs,
    },
    /// Fit the spreading-rate model on one cascade.
    Fit {
        train: PathBuf,
        #[command(flatten)]
        rule: RuleArgs,
        #[arg(long, default_value = "friends,followers")]
        features: String,
        /// Add a constant term (diagnostics only).
        #[arg(long)]
        intercept: bool,
    },
    /// Score a fitted model on one or more cascades.
    Eval {
        model: PathBuf,
        #[arg(required = true)]
        tests: Vec<PathBuf>,
        #[command(flatten)]
        rule: RuleArgs,
    },
    /// Averaged train/test tables over rules, feature subsets or training sets.
    #[command(subcommand)]
    Sweep(SweepCommand),
    /// Monte Carlo coverage of a fitted model.
    Simulate {
        model: PathBuf,
        /// JSON run configuration (cascade, sampler, seed_user sections).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Generate a synthetic cascade from a planted law.
    Synth {
        /// Planted exponents, e.g. followers=-0.77,friends=-0.12.
        #[arg(long, default_value = "followers=-0.77,friends=-0.12")]
        weights: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        n_users: Option<usize>,
        #[arg(long)]
        decoy_rate: Option<f64>,
        #[arg(long)]
        noise: Option<f64>,
        /// Keep only decoys that leave this rule's choice on the true parent.
        #[arg(long)]
        consistent_with: Option<String>,
        #[arg(long)]
        name: Option<String>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Per-cascade structure table: size, depth, path length, seed pagerank.
    Report {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        #[command(flatten)]
        rule: RuleArgs,
    },
}

#[derive(Debug, Subcommand)]
pub enum SweepCommand {
    /// One row per attachment rule.
    Rules {
        #[arg(required = true, num_args = 2..)]
        paths: Vec<PathBuf>,
        #[arg(long, default_value = "R1,R2_15,R2_30,R2_60,R3_15,R3_30,R3_60")]
        rules: String,
        #[arg(long, default_value = "friends,followers")]
        features: String,
    },
    /// One row per nonempty feature subset.
    Features {
        #[arg(long)]
        train: PathBuf,
        #[arg(required = true)]
        tests: Vec<PathBuf>,
        #[command(flatten)]
        rule: RuleArgs,
    },
    /// One row per training cascade.
    Training {
        #[arg(required = true, num_args = 2..)]
        paths: Vec<PathBuf>,
        #[command(flatten)]
        rule: RuleArgs,
        #[arg(long, default_value = "friends,followers")]
        features: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Expected,
    Stochastic,
}

impl From<ModeArg> for SimulationMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Expected => SimulationMode::Expected,
            ModeArg::Stochastic => SimulationMode::Stochastic,
        }
    }
}

/// Attribute snapshot of the user a simulation starts from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedUser {
    pub followers: u64,
    pub friends: u64,
    pub posts: u64,
}

impl Default for SeedUser {
    fn default() -> Self {
        SeedUser {
            followers: 10_000,
            friends: 500,
            posts: 5_000,
        }
    }
}

/// JSON configuration shared by `simulate` and `synth`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub cascade: CascadeConfig,
    pub sampler: AttributeSampler,
    pub seed_user: SeedUser,
    pub synth: SynthConfig,
}

/// One line of `manifest.jsonl`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub inputs: Vec<String>,
    pub rule: Option<String>,
    pub features: Option<String>,
    pub model: Option<String>,
    pub outputs: Vec<String>,
    pub rng_seed: Option<u64>,
    pub tool_version: String,
    pub started_at: u64,
    pub wall_time_seconds: f64,
}

impl RunManifest {
    fn new(command: &str) -> Self {
        RunManifest {
            command: command.to_string(),
            inputs: Vec::new(),
            rule: None,
            features: None,
            model: None,
            outputs: Vec::new(),
            rng_seed: None,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_at: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            wall_time_seconds: 0.0,
        }
    }

    fn input(&mut self, p: &Path) {
        self.inputs.push(p.display().to_string());
    }
}

struct Ctx {
    out_dir: PathBuf,
    format: Format,
    manifest: RunManifest,
}

impl Ctx {
    fn out_path(&mut self, file: &str) -> Result<PathBuf, CliError> {
        fs::create_dir_all(&self.out_dir).map_err(io_err(self.out_dir.display().to_string()))?;
        let p = self.out_dir.join(file);
        self.manifest.outputs.push(p.display().to_string());
        Ok(p)
    }

    fn create(&mut self, file: &str) -> Result<(PathBuf, BufWriter<File>), CliError> {
        let p = self.out_path(file)?;
        let f = File::create(&p).map_err(io_err(p.display().to_string()))?;
        Ok((p, BufWriter::new(f)))
    }

    fn write_json<T: Serialize>(&mut self, file: &str, value: &T) -> Result<PathBuf, CliError> {
        let (p, mut w) = self.create(file)?;
        serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Io {
            context: p.display().to_string(),
            source: io::Error::other(e),
        })?;
        w.write_all(b"\n")
            .and_then(|_| w.flush())
            .map_err(io_err(p.display().to_string()))?;
        Ok(p)
    }

    fn table_ext(&self) -> &'static str {
        match self.format {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }

    fn write_sweep(&mut self, stem: &str, rows: &[SweepRow]) -> Result<PathBuf, CliError> {
        let file = format!("{stem}.{}", self.table_ext());
        match self.format {
            Format::Json => self.write_json(&file, &rows),
            Format::Csv => {
                let (p, w) = self.create(&file)?;
                regress::write_sweep_csv(rows, w).map_err(csv_err(&p))?;
                Ok(p)
            }
        }
    }

    fn append_manifest(&mut self, started: Instant) -> Result<(), CliError> {
        self.manifest.wall_time_seconds = started.elapsed().as_secs_f64();
        fs::create_dir_all(&self.out_dir).map_err(io_err(self.out_dir.display().to_string()))?;
        let p = self.out_dir.join("manifest.jsonl");
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&p)
            .map_err(io_err(p.display().to_string()))?;
        let line = serde_json::to_string(&self.manifest).expect("manifest serializes");
        writeln!(f, "{line}").map_err(io_err(p.display().to_string()))
    }
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| CliError::Parse {
            path: path.display().to_string(),
            source: IngestError::Io(source),
        })
}

fn load_dataset(path: &Path) -> Result<CascadeDataset, CliError> {
    ingest::parse_cascade(open(path)?).map_err(|source| CliError::Parse {
        path: path.display().to_string(),
        source,
    })
}

fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let r = File::open(path).map_err(io_err(path.display().to_string()))?;
    serde_json::from_reader(BufReader::new(r)).map_err(|e| CliError::Io {
        context: path.display().to_string(),
        source: io::Error::new(io::ErrorKind::InvalidData, e),
    })
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into())
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli, &mut io::stdout().lock()) {
        Ok(code) => code,
        Err(e) => {
            let err = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{err}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command. Returns the exit code for outcomes that are not
/// errors as such (a failed validation still prints its report).
pub fn run(cli: Cli, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let started = Instant::now();
    let name = command_name(&cli.command);
    let mut ctx = Ctx {
        out_dir: cli.out_dir,
        format: cli.format,
        manifest: RunManifest::new(name),
    };
    let code = match cli.command {
        Command::Validate { path } => cmd_validate(&mut ctx, &path, stdout)?,
        Command::Build { path, rule } => cmd_build(&mut ctx, &path, rule.resolve()?)?,
        Command::Fit {
            train,
            rule,
            features,
            intercept,
        } => cmd_fit(
            &mut ctx,
            &train,
            rule.resolve()?,
            parse_features(&features)?,
            intercept,
        )?,
        Command::Eval { model, tests, rule } => {
            cmd_eval(&mut ctx, &model, &tests, rule.resolve()?)?
        }
        Command::Sweep(sweep) => cmd_sweep(&mut ctx, sweep)?,
        Command::Simulate {
            model,
            config,
            trials,
            mode,
            seed,
        } => cmd_simulate(&mut ctx, &model, config.as_deref(), trials, mode, seed)?,
        Command::Synth {
            weights,
            config,
            n_users,
            decoy_rate,
            noise,
            consistent_with,
            name,
            mode,
            seed,
        } => {
            let mut cfg: RunConfig = match &config {
                Some(p) => {
                    ctx.manifest.input(p);
                    load_json(p)?
                }
                None => RunConfig::default(),
            };
            if let Some(n) = n_users {
                cfg.synth.n_users = n;
            }
            if let Some(r) = decoy_rate {
                cfg.synth.decoy_rate = r;
            }
            if let Some(s) = noise {
                cfg.synth.noise_sigma = s;
            }
            if let Some(r) = consistent_with {
                cfg.synth.consistent_with = Some(resolve_rule(&r, None)?);
            }
            if let Some(n) = name {
                cfg.synth.name = n;
            }
            if let Some(m) = mode {
                cfg.cascade.mode = m.into();
            }
            if let Some(s) = seed {
                cfg.cascade.rng_seed = s;
            }
            let law =
                SpreadModel::parse_law(&weights).map_err(|e| CliError::Usage(e.to_string()))?;
            cmd_synth(&mut ctx, &law, cfg)?
        }
        Command::Report { paths, rule } => cmd_report(&mut ctx, &paths, rule.resolve()?)?,
    };
    for out in &ctx.manifest.outputs {
        writeln!(stdout, "{out}").map_err(io_err("stdout"))?;
    }
    ctx.append_manifest(started)?;
    Ok(code)
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Validate { .. } => "validate",
        Command::Build { .. } => "build",
        Command::Fit { .. } => "fit",
        Command::Eval { .. } => "eval",
        Command::Sweep(SweepCommand::Rules { .. }) => "sweep rules",
        Command::Sweep(SweepCommand::Features { .. }) => "sweep features",
        Command::Sweep(SweepCommand::Training { .. }) => "sweep training",
        Command::Simulate { .. } => "simulate",
        Command::Synth { .. } => "synth",
        Command::Report { .. } => "report",
    }
}

fn cmd_validate(ctx: &mut Ctx, path: &Path, stdout: &mut dyn Write) -> Result<i32, CliError> {
    ctx.manifest.input(path);
    let dataset = ingest::read_dataset(open(path)?).map_err(|source| CliError::Parse {
        path: path.display().to_string(),
        source,
    })?;
    let report = ingest::validate(&dataset);
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    writeln!(stdout, "{json}").map_err(io_err("stdout"))?;
    Ok(if report.ok { 0 } else { 1 })
}

fn cmd_build(ctx: &mut Ctx, path: &Path, rule: AttachmentRule) -> Result<i32, CliError> {
    ctx.manifest.input(path);
    ctx.manifest.rule = Some(rule.to_string());
    let dataset = load_dataset(path)?;
    let (tree, _log) = build_rdn(&dataset, rule)?;
    let metrics = graphcore::tree_metrics(&tree, PageRankConfig::default())?;
    let name = stem(path);

    let (p, w) = ctx.create(&format!("{name}.edges.csv"))?;
    graphcore::write_edge_list(&tree, w).map_err(csv_err(&p))?;
    let (p, w) = ctx.create(&format!("{name}.degree.csv"))?;
    graphcore::write_degree_histogram(&graphcore::degree_histogram(&tree), w)
        .map_err(csv_err(&p))?;
    ctx.write_json(&format!("{name}.metrics.json"), &metrics)?;
    Ok(0)
}

fn cmd_fit(
    ctx: &mut Ctx,
    train: &Path,
    rule: AttachmentRule,
    features: FeatureSet,
    intercept: bool,
) -> Result<i32, CliError> {
    ctx.manifest.input(train);
    ctx.manifest.rule = Some(rule.to_string());
    ctx.manifest.features = Some(features.to_string());
    let dataset = load_dataset(train)?;
    let measured = measure_dataset(&dataset, rule)?;
    let outcome = fit(
        &measured.measurement.samples,
        &features,
        FitOptions { intercept },
        dataset.name(),
    )?;
    let mut model = outcome.model;
    model.fitted_at = Some(measured.latest_event);
    let p = ctx.write_json(&format!("{}.model.json", stem(train)), &model)?;
    ctx.manifest.model = Some(p.display().to_string());
    Ok(0)
}

#[derive(Serialize)]
struct LabelledPrediction<'a> {
    dataset: &'a str,
    user_id: &'a str,
    measured: f64,
    predicted: f64,
}

fn cmd_eval(
    ctx: &mut Ctx,
    model_path: &Path,
    tests: &[PathBuf],
    rule: AttachmentRule,
) -> Result<i32, CliError> {
    ctx.manifest.model = Some(model_path.display().to_string());
    ctx.manifest.rule = Some(rule.to_string());
    let model: SpreadModel = load_json(model_path)?;
    ctx.manifest.features = Some(model.features.to_string());

    let mut rows = Vec::new();
    let mut pairs = Vec::new();
    for path in tests {
        ctx.manifest.input(path);
        let dataset = load_dataset(path)?;
        let measured = measure_dataset(&dataset, rule)?;
        let report = evaluate(&model, &measured.measurement.samples)?;
        rows.push(SweepRow {
            label: dataset.name().to_string(),
            r2: report.r2,
            r2_log: report.r2_log,
            mae: Some(report.mae),
            mse: Some(report.mse),
            n_train: report.n_train,
            n_test: report.n_test,
            n_dropped: report.n_dropped + measured.measurement.n_dropped(),
            cells: 1,
            failures: Vec::new(),
        });
        let (preds, _) = predictions(&model, &measured.measurement.samples);
        pairs.push((dataset.name().to_string(), preds));
    }
    ctx.write_sweep("eval", &rows)?;

    let (p, w) = ctx.create("predictions.csv")?;
    let mut w = csv::Writer::from_writer(w);
    for (name, preds) in &pairs {
        for pr in preds {
            w.serialize(LabelledPrediction {
                dataset: name,
                user_id: &pr.user_id,
                measured: pr.measured,
                predicted: pr.predicted,
            })
            .map_err(csv_err(&p))?;
        }
    }
    w.flush().map_err(io_err(p.display().to_string()))?;
    Ok(0)
}

fn cmd_sweep(ctx: &mut Ctx, sweep: SweepCommand) -> Result<i32, CliError> {
    match sweep {
        SweepCommand::Rules {
            paths,
            rules,
            features,
        } => {
            let rules = rules
                .split(',')
                .map(|r| resolve_rule(r.trim(), None))
                .collect::<Result<Vec<_>, _>>()?;
            let features = parse_features(&features)?;
            ctx.manifest.rule = Some(
                rules
                    .iter()
                    .map(|r| r.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            );
            ctx.manifest.features = Some(features.to_string());
            let datasets = load_all(ctx, &paths)?;
            let rows = sweep_rules(&datasets, &rules, &features)?;
            ctx.write_sweep("sweep_rules", &rows)?;
        }
        SweepCommand::Features { train, tests, rule } => {
            let rule = rule.resolve()?;
            ctx.manifest.rule = Some(rule.to_string());
            let train_ds = load_all(ctx, std::slice::from_ref(&train))?.remove(0);
            let tests = load_all(ctx, &tests)?;
            let rows = sweep_features(&train_ds, &tests, rule)?;
            ctx.write_sweep("sweep_features", &rows)?;
        }
        SweepCommand::Training {
            paths,
            rule,
            features,
        } => {
            let rule = rule.resolve()?;
            let features = parse_features(&features)?;
            ctx.manifest.rule = Some(rule.to_string());
            ctx.manifest.features = Some(features.to_string());
            let datasets = load_all(ctx, &paths)?;
            let rows = sweep_training(&datasets, rule, &features)?;
            ctx.write_sweep("sweep_training", &rows)?;
        }
    }
    Ok(0)
}

fn load_all(ctx: &mut Ctx, paths: &[PathBuf]) -> Result<Vec<CascadeDataset>, CliError> {
    paths
        .iter()
        .map(|p| {
            ctx.manifest.input(p);
            load_dataset(p)
        })
        .collect()
}

fn cmd_simulate(
    ctx: &mut Ctx,
    model_path: &Path,
    config: Option<&Path>,
    trials: usize,
    mode: Option<ModeArg>,
    seed: Option<u64>,
) -> Result<i32, CliError> {
    ctx.manifest.model = Some(model_path.display().to_string());
    let model: SpreadModel = load_json(model_path)?;
    let mut cfg: RunConfig = match config {
        Some(p) => {
            ctx.manifest.input(p);
            load_json(p)?
        }
        None => RunConfig::default(),
    };
    if let Some(m) = mode {
        cfg.cascade.mode = m.into();
    }
    if let Some(s) = seed {
        cfg.cascade.rng_seed = s;
    }
    ctx.manifest.rng_seed = Some(cfg.cascade.rng_seed);
    ctx.manifest.features = Some(model.features.to_string());
    let seed_record = CascadeRecord::new(
        "seed",
        cfg.seed_user.followers,
        cfg.seed_user.friends,
        cfg.seed_user.posts,
        0,
    )
    .seed();
    let report = monte_carlo_coverage(&model, &seed_record, &cfg.sampler, &cfg.cascade, trials)?;
    ctx.write_json("simulation.json", &report)?;
    Ok(0)
}

fn cmd_synth(ctx: &mut Ctx, law: &SpreadModel, cfg: RunConfig) -> Result<i32, CliError> {
    let mut synth = cfg.synth;
    synth.cascade = cfg.cascade;
    ctx.manifest.rng_seed = Some(synth.cascade.rng_seed);
    ctx.manifest.features = Some(law.features.to_string());
    ctx.manifest.rule = synth.consistent_with.map(|r| r.to_string());
    let out = generate_synthetic_dataset(law, &cfg.sampler, &synth)?;
    if out.extinct {
        eprintln!(
            "{}",
            serde_json::json!({ "warning": "planted law went extinct at the seed" })
        );
    }
    let name = synth.name.clone();
    let (p, mut w) = ctx.create(&format!("{name}.jsonl"))?;
    ingest::write_dataset(&out.dataset, &mut w)
        .and_then(|_| w.flush())
        .map_err(io_err(p.display().to_string()))?;
    let (p, w) = ctx.create(&format!("{name}.truth.csv"))?;
    graphcore::write_edge_list(&out.truth, w).map_err(csv_err(&p))?;
    Ok(0)
}

#[derive(Serialize)]
struct ReportRow {
    dataset: String,
    #[serde(flatten)]
    metrics: graphcore::TreeMetrics,
}

fn cmd_report(ctx: &mut Ctx, paths: &[PathBuf], rule: AttachmentRule) -> Result<i32, CliError> {
    ctx.manifest.rule = Some(rule.to_string());
    let datasets = load_all(ctx, paths)?;
    let mut rows = Vec::new();
    for ds in &datasets {
        let (tree, _) = build_rdn(ds, rule)?;
        rows.push(ReportRow {
            dataset: ds.name().to_string(),
            metrics: graphcore::tree_metrics(&tree, PageRankConfig::default())?,
        });
    }
    match ctx.format {
        Format::Json => {
            ctx.write_json("report.json", &rows)?;
        }
        Format::Csv => {
            let (p, w) = ctx.create("report.csv")?;
            let mut w = csv::Writer::from_writer(w);
            w.write_record([
                "dataset",
                "nodes",
                "edges",
                "depth",
                "avg_path_length",
                "seed_pagerank",
                "powerlaw_slope",
            ])
            .map_err(csv_err(&p))?;
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            for r in &rows {
                let m = &r.metrics;
                w.write_record([
                    r.dataset.clone(),
                    m.nodes.to_string(),
                    m.edges.to_string(),
                    m.depth.to_string(),
                    opt(m.avg_path_length),
                    m.seed_pagerank.to_string(),
                    opt(m.powerlaw_slope),
                ])
                .map_err(csv_err(&p))?;
            }
            w.flush().map_err(io_err(p.display().to_string()))?;
        }
    }
    Ok(0)
}
