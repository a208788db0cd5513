//! Command-line surface: corpus generation, ingestion, feature extraction,
//! training, evaluation, what-if reports and loss-weight sweeps.

use std::collections::{BTreeSet, HashMap};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::features::{
    extract_all, read_features, write_diagnostics, write_features, AgentDeps, FeatureError, HttpQualityScorer,
    InstitutionPrestige, PaperFeatureVector, PriorYearCounts, ReputationNorms, VenueRankingTable,
};
use crate::graph::{ingest_papers, read_citations, write_citations, write_records, Citation, GraphError, PaperRecord, SplitName};
use crate::metrics::{EvalReport, MetricsError};
use crate::objectives::{Factor, ObjectiveError};
use crate::synth::{generate, read_truth, GenConfig, SynthError};
use crate::train::{
    evaluate, fit, load_checkpoint, save_checkpoint, write_history, write_loss_ledger, Dataset, TrainConfig, TrainError,
};
use crate::whatif::{whatif, write_rows, write_summary, WhatIfError};

/// Environment variable naming the external text-quality scorer endpoint.
pub const SCORER_URL_ENV: &str = "CITESHIELD_SCORER_URL";
pub const RESOLVED_CONFIG_FILE: &str = "config.toml";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    WhatIf(#[from] WhatIfError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::Io { .. } => "io",
            CliError::Synth(_) => "generator",
            CliError::Graph(_) => "graph",
            CliError::Feature(_) => "features",
            CliError::Train(TrainError::UntrainedCheckpoint(_)) | CliError::WhatIf(WhatIfError::UntrainedCheckpoint(_)) => {
                "untrained_checkpoint"
            }
            CliError::Train(_) => "training",
            CliError::Metrics(_) => "metrics",
            CliError::WhatIf(_) => "whatif",
            CliError::Objective(_) => "objective",
            CliError::Json(_) => "json",
        }
    }

    /// The single structured object printed on failure.
    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": { "kind": self.kind(), "message": self.to_string() } }).to_string()
    }
}

fn io_at(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Parser)]
#[command(name = "citeshield", version, about = "Bias-aware citation prediction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Flat key-value config file (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides `seed` from the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Config override `key=value` (value in TOML syntax; bare words are strings).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus with its ground-truth sidecar.
    Gen {
        #[command(flatten)]
        common: Common,
    },
    /// Validate a JSON-lines record stream and write the accepted records.
    Ingest {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        /// Optional `citing<TAB>cited` file copied next to the records.
        #[arg(long)]
        citations: Option<PathBuf>,
    },
    /// Run the feature agents over a corpus directory.
    Features {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
    },
    /// Train a model on a corpus directory.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
    },
    /// Evaluate a checkpoint on one split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Counterfactual effects of actionable factors.
    Whatif {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// `train`, `val`, `test` or `all`.
        #[arg(long, default_value = "all")]
        split: String,
        #[arg(long, value_delimiter = ',', default_value = "R,Q")]
        factors: Vec<String>,
    },
    /// Train and evaluate over a grid of config values.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// `key=v1,v2,...`; repeat for a multi-dimensional grid.
        #[arg(long = "grid", value_name = "KEY=V1,V2,...", required = true)]
        grid: Vec<String>,
        #[arg(long, default_value = "test")]
        split: String,
        /// Also render each curve as an SVG chart.
        #[arg(long)]
        svg: bool,
    },
}

/// Generator and training settings resolved from defaults, a config file,
/// `--set` overrides and `--seed`, in that order.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub gen: GenConfig,
    pub train: TrainConfig,
}

fn table_of<T: Serialize>(v: &T) -> Result<toml::Table, CliError> {
    toml::Table::try_from(v).map_err(|e| CliError::Config(e.to_string()))
}

/// Parses a `--set` value as TOML, falling back to a bare string.
pub fn parse_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {}", raw)) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

pub fn parse_assignment(s: &str) -> Result<(String, String), CliError> {
    match s.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(CliError::Usage(format!("expected key=value, got {:?}", s))),
    }
}

impl RunConfig {
    /// Resolves a flat table: every key must belong to the generator or the
    /// training config (`seed` feeds both).
    pub fn from_table(table: &toml::Table) -> Result<Self, CliError> {
        let gen_keys: BTreeSet<String> = table_of(&GenConfig::default())?.keys().cloned().collect();
        let train_keys: BTreeSet<String> = table_of(&TrainConfig::default())?.keys().cloned().collect();
        let mut gen = toml::Table::new();
        let mut train = toml::Table::new();
        for (k, v) in table {
            let (in_gen, in_train) = (gen_keys.contains(k), train_keys.contains(k));
            if !in_gen && !in_train {
                return Err(CliError::Config(format!("unknown key {:?}", k)));
            }
            if in_gen {
                gen.insert(k.clone(), v.clone());
            }
            if in_train {
                train.insert(k.clone(), v.clone());
            }
        }
        let gen: GenConfig = toml::Value::Table(gen).try_into().map_err(|e| CliError::Config(e.to_string()))?;
        let train: TrainConfig = toml::Value::Table(train).try_into().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(Self { gen, train })
    }

    pub fn resolve(common: &Common) -> Result<Self, CliError> {
        let mut table = match &common.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(io_at(p))?;
                toml::from_str::<toml::Table>(&text).map_err(|e| CliError::Config(format!("{}: {}", p.display(), e)))?
            }
            None => toml::Table::new(),
        };
        for s in &common.set {
            let (k, v) = parse_assignment(s)?;
            table.insert(k, parse_value(&v));
        }
        if let Some(seed) = common.seed {
            table.insert("seed".into(), toml::Value::Integer(seed as i64));
        }
        let cfg = Self::from_table(&table)?;
        cfg.gen.validate()?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    /// Fully resolved flat table (keys sorted).
    pub fn to_table(&self) -> Result<toml::Table, CliError> {
        let mut t = table_of(&self.gen)?;
        t.extend(table_of(&self.train)?);
        Ok(t)
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let text = toml::to_string(&self.to_table()?).map_err(|e| CliError::Config(e.to_string()))?;
        let path = dir.join(RESOLVED_CONFIG_FILE);
        std::fs::write(&path, text).map_err(io_at(&path))
    }
}

/// Parses arguments and runs; on failure prints one JSON error object to
/// stderr and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{}", e);
                return 0;
            }
            let msg = e.render().to_string();
            eprintln!("{}", CliError::Usage(msg.trim().to_string()).to_json());
            return 2;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            1
        }
    }
}

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Gen { common } => cmd_gen(&common),
        Command::Ingest {
            common,
            input,
            citations,
        } => cmd_ingest(&common, &input, citations.as_deref()),
        Command::Features { common, data } => cmd_features(&common, &data),
        Command::Train { common, data } => cmd_train(&common, &data),
        Command::Eval {
            common,
            data,
            model,
            split,
        } => cmd_eval(&common, &data, &model, &split),
        Command::Whatif {
            common,
            data,
            model,
            split,
            factors,
        } => cmd_whatif(&common, &data, &model, &split, &factors),
        Command::Sweep {
            common,
            data,
            grid,
            split,
            svg,
        } => cmd_sweep(&common, &data, &grid, &split, svg),
    }
}

fn prepare_out(common: &Common) -> Result<RunConfig, CliError> {
    let cfg = RunConfig::resolve(common)?;
    std::fs::create_dir_all(&common.out).map_err(io_at(&common.out))?;
    cfg.write(&common.out)?;
    Ok(cfg)
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>, CliError> {
    Ok(std::io::BufWriter::new(std::fs::File::create(path).map_err(io_at(path))?))
}

fn cmd_gen(common: &Common) -> Result<(), CliError> {
    let cfg = prepare_out(common)?;
    let corpus = generate(&cfg.gen)?;
    corpus.write(&common.out)?;
    let ids: Vec<String> = corpus.records.iter().map(|r| r.id.clone()).collect();
    write_features(&common.out.join("features.tsv"), &ids, &corpus.features)?;
    Ok(())
}

fn cmd_ingest(common: &Common, input: &Path, citations: Option<&Path>) -> Result<(), CliError> {
    prepare_out(common)?;
    let reader = BufReader::new(std::fs::File::open(input).map_err(io_at(input))?);
    let outcome = ingest_papers(reader)?;
    let corpus = common.out.join("corpus.jsonl");
    let mut w = create(&corpus)?;
    write_records(&mut w, &outcome.records).map_err(io_at(&corpus))?;
    w.flush().map_err(io_at(&corpus))?;
    let err_path = common.out.join("ingest_errors.tsv");
    let mut w = create(&err_path)?;
    let mut body = String::from("line\treason\n");
    for e in &outcome.errors {
        body.push_str(&format!("{}\t{}\n", e.line, e.reason.replace(['\t', '\n'], " ")));
    }
    w.write_all(body.as_bytes()).map_err(io_at(&err_path))?;
    w.flush().map_err(io_at(&err_path))?;
    if !outcome.errors.is_empty() {
        log::warn!("{} malformed lines skipped", outcome.errors.len());
    }
    if let Some(c) = citations {
        let cites = read_citations(c)?;
        let path = common.out.join("citations.tsv");
        write_citations(&path, &cites).map_err(io_at(&path))?;
    }
    Ok(())
}

fn read_corpus(data: &Path) -> Result<Vec<PaperRecord>, CliError> {
    let path = data.join("corpus.jsonl");
    let outcome = ingest_papers(BufReader::new(std::fs::File::open(&path).map_err(io_at(&path))?))?;
    if !outcome.errors.is_empty() {
        log::warn!("{}: {} malformed lines skipped", path.display(), outcome.errors.len());
    }
    Ok(outcome.records)
}

/// Agent dependencies from resource files in `data`, where present.
fn load_deps(data: &Path, records: &[PaperRecord]) -> Result<AgentDeps, CliError> {
    let venues = data.join("venues.tsv");
    let inst = data.join("institutions.tsv");
    let counts = data.join("keyword_counts.tsv");
    let scorer = std::env::var(SCORER_URL_ENV)
        .ok()
        .filter(|u| !u.trim().is_empty())
        .map(|u| Box::new(HttpQualityScorer::new(u, Duration::from_secs(30))) as _);
    Ok(AgentDeps {
        venues: if venues.exists() {
            VenueRankingTable::load(&venues)?
        } else {
            VenueRankingTable::default()
        },
        institutions: if inst.exists() {
            InstitutionPrestige::load(&inst)?
        } else {
            InstitutionPrestige::default()
        },
        norms: ReputationNorms::from_records(records),
        prior_counts: if counts.exists() {
            PriorYearCounts::load(&counts)?
        } else {
            PriorYearCounts::from_records(records)
        },
        scorer,
        ..Default::default()
    })
}

fn cmd_features(common: &Common, data: &Path) -> Result<(), CliError> {
    prepare_out(common)?;
    let records = read_corpus(data)?;
    let deps = load_deps(data, &records)?;
    let (feats, diags) = extract_all(&records, &deps);
    let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
    write_features(&common.out.join("features.tsv"), &ids, &feats)?;
    write_diagnostics(&common.out.join("diagnostics.tsv"), &diags)?;
    Ok(())
}

/// Records, aligned features, citations and (if a truth sidecar exists)
/// exposure of a corpus directory. Features come from `features.tsv`, or
/// are extracted when that file is absent.
fn load_dataset(data: &Path, cfg: &TrainConfig) -> Result<Dataset, CliError> {
    let records = read_corpus(data)?;
    let feat_path = data.join("features.tsv");
    let feats: Vec<PaperFeatureVector> = if feat_path.exists() {
        let (ids, feats) = read_features(&feat_path)?;
        let by_id: HashMap<&str, PaperFeatureVector> = ids.iter().map(String::as_str).zip(feats).collect();
        records
            .iter()
            .map(|r| by_id.get(r.id.as_str()).copied().ok_or_else(|| GraphError::MissingFeatures(r.id.clone())))
            .collect::<Result<_, _>>()?
    } else {
        log::info!("{} absent; extracting features", feat_path.display());
        extract_all(&records, &load_deps(data, &records)?).0
    };
    let cite_path = data.join("citations.tsv");
    let citations: Vec<Citation> = if cite_path.exists() {
        read_citations(&cite_path)?
    } else {
        vec![]
    };
    let truth_path = data.join("truth.tsv");
    let exposure: Option<HashMap<String, f64>> = if truth_path.exists() {
        Some(read_truth(&truth_path)?.into_iter().map(|(id, e, _)| (id, e)).collect())
    } else {
        None
    };
    Ok(Dataset::new(&records, &feats, &citations, exposure.as_ref(), cfg)?)
}

fn parse_split(s: &str) -> Result<SplitName, CliError> {
    s.parse::<SplitName>().map_err(CliError::Usage)
}

/// Trains on `data` and writes checkpoint, metadata, history and the
/// per-step loss ledger into `out`.
fn train_into(out: &Path, data: &Dataset, cfg: &TrainConfig) -> Result<crate::train::FitOutcome, CliError> {
    let outcome = fit(data, cfg)?;
    save_checkpoint(out, &outcome.model, &outcome.meta)?;
    let hist = out.join("history.tsv");
    write_history(&hist, &outcome.history).map_err(io_at(&hist))?;
    let ledger = out.join("losses.tsv");
    write_loss_ledger(&ledger, &outcome.losses).map_err(io_at(&ledger))?;
    Ok(outcome)
}

fn cmd_train(common: &Common, data_dir: &Path) -> Result<(), CliError> {
    let cfg = prepare_out(common)?;
    let data = load_dataset(data_dir, &cfg.train)?;
    train_into(&common.out, &data, &cfg.train)?;
    Ok(())
}

fn write_predictions(path: &Path, data: &Dataset, pred: &crate::train::Predictions) -> Result<(), CliError> {
    let mut w = create(path)?;
    let mut body = String::from("id\ty\tu\ty_hat\te_hat\tenv\n");
    for (k, &i) in pred.idx.iter().enumerate() {
        let e = pred.e_hat.as_ref().map_or(f64::NAN, |e| e[k]);
        body.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            data.ids[i],
            data.y[i],
            pred.u[k],
            crate::whatif::citations_of(pred.u[k]),
            e,
            data.env[i].name()
        ));
    }
    w.write_all(body.as_bytes()).map_err(io_at(path))?;
    w.flush().map_err(io_at(path))
}

/// Settings of a checkpoint, with the generator part left at defaults.
fn checkpoint_config(common: &Common, train: TrainConfig) -> Result<RunConfig, CliError> {
    if common.config.is_some() || !common.set.is_empty() || common.seed.is_some() {
        log::warn!("--config/--set/--seed ignored: settings come from the checkpoint");
    }
    std::fs::create_dir_all(&common.out).map_err(io_at(&common.out))?;
    let cfg = RunConfig {
        gen: GenConfig::default(),
        train,
    };
    cfg.write(&common.out)?;
    Ok(cfg)
}

fn cmd_eval(common: &Common, data_dir: &Path, model_dir: &Path, split: &str) -> Result<(), CliError> {
    let which = parse_split(split)?;
    let (model, meta) = load_checkpoint(model_dir)?;
    let cfg = checkpoint_config(common, meta.train.clone())?;
    let data = load_dataset(data_dir, &cfg.train)?;
    let (report, _, pred) = evaluate(&model, &data, which)?;
    report.write_json(&common.out.join("eval_report.json"))?;
    report.write_tsv(&common.out.join("eval_report.tsv"))?;
    write_predictions(&common.out.join("predictions.tsv"), &data, &pred)?;
    Ok(())
}

fn cmd_whatif(common: &Common, data_dir: &Path, model_dir: &Path, split: &str, factors: &[String]) -> Result<(), CliError> {
    let factors: Vec<Factor> = factors.iter().map(|f| Factor::parse(f)).collect::<Result<_, _>>()?;
    let (model, meta) = load_checkpoint(model_dir)?;
    let cfg = checkpoint_config(common, meta.train.clone())?;
    let data = load_dataset(data_dir, &cfg.train)?;
    let idx: Vec<usize> = if split == "all" {
        (0..data.len()).collect()
    } else {
        data.indices(parse_split(split)?)
    };
    let (rows, summary) = whatif(&model, &meta, &data, &idx, &factors)?;
    write_rows(&common.out.join("whatif.tsv"), &rows)?;
    write_summary(&common.out.join("whatif_summary.json"), &summary)?;
    Ok(())
}

/// One grid axis: a config key and its values.
#[derive(Clone, Debug, PartialEq)]
pub struct GridAxis {
    pub key: String,
    pub values: Vec<toml::Value>,
}

pub fn parse_grid(spec: &str) -> Result<GridAxis, CliError> {
    let (key, values) = parse_assignment(spec)?;
    let values: Vec<toml::Value> = values.split(',').map(|v| parse_value(v.trim())).collect();
    if values.is_empty() {
        return Err(CliError::Usage(format!("grid {:?} has no values", spec)));
    }
    Ok(GridAxis { key, values })
}

/// Cartesian product of the axes, first axis varying slowest.
pub fn grid_cells(axes: &[GridAxis]) -> Vec<Vec<toml::Value>> {
    axes.iter().fold(vec![vec![]], |cells, axis| {
        cells
            .iter()
            .flat_map(|c| {
                axis.values.iter().map(move |v| {
                    let mut c = c.clone();
                    c.push(v.clone());
                    c
                })
            })
            .collect()
    })
}

fn value_label(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn value_number(v: &toml::Value) -> Option<f64> {
    match v {
        toml::Value::Float(f) => Some(*f),
        toml::Value::Integer(i) => Some(*i as f64),
        toml::Value::Boolean(b) => Some(f64::from(u8::from(*b))),
        _ => None,
    }
}

/// Directory name of sweep cell `k`; zero-padded so lexical order is grid order.
pub fn cell_dir_name(k: usize, axes: &[GridAxis], values: &[toml::Value]) -> String {
    let mut name = format!("cell_{:03}", k);
    for (a, v) in axes.iter().zip(values) {
        let label: String = value_label(v)
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
            .collect();
        name.push_str(&format!("_{}-{}", a.key, label));
    }
    name
}

struct CellResult {
    dir: String,
    values: Vec<toml::Value>,
    report: EvalReport,
    best_epoch: usize,
}

fn cmd_sweep(common: &Common, data_dir: &Path, grid: &[String], split: &str, svg: bool) -> Result<(), CliError> {
    let base = prepare_out(common)?;
    let which = parse_split(split)?;
    let axes: Vec<GridAxis> = grid.iter().map(|g| parse_grid(g)).collect::<Result<_, _>>()?;
    let base_table = base.to_table()?;
    let cells = grid_cells(&axes);
    let mut cell_cfgs = vec![];
    for (k, values) in cells.iter().enumerate() {
        let mut t = base_table.clone();
        for (a, v) in axes.iter().zip(values) {
            t.insert(a.key.clone(), v.clone());
        }
        let cfg = RunConfig::from_table(&t)?;
        cfg.train.validate()?;
        cell_cfgs.push((cell_dir_name(k, &axes, values), values.clone(), cfg));
    }
    // The dataset depends only on split settings shared by every cell.
    let data = load_dataset(data_dir, &base.train)?;
    for (_, _, cfg) in &cell_cfgs {
        if cfg.train.split() != base.train.split() || cfg.train.tau != base.train.tau {
            return Err(CliError::Config("sweeps over split years or tau are not supported".into()));
        }
    }
    let results: Vec<CellResult> = cell_cfgs
        .par_iter()
        .map(|(dir, values, cfg)| -> Result<CellResult, CliError> {
            let out = common.out.join(dir);
            std::fs::create_dir_all(&out).map_err(io_at(&out))?;
            cfg.write(&out)?;
            let outcome = train_into(&out, &data, &cfg.train)?;
            let (report, _, _) = evaluate(&outcome.model, &data, which)?;
            report.write_json(&out.join("eval_report.json"))?;
            Ok(CellResult {
                dir: dir.clone(),
                values: values.clone(),
                report,
                best_epoch: outcome.meta.best_epoch,
            })
        })
        .collect::<Result<_, _>>()?;
    write_sweep_table(&common.out.join("sweep.tsv"), &axes, &results)?;
    for (j, axis) in axes.iter().enumerate() {
        let mut points: Vec<(f64, String, f64, f64)> = results
            .iter()
            .map(|r| {
                let x = value_number(&r.values[j]).unwrap_or(f64::NAN);
                (x, value_label(&r.values[j]), r.report.male, r.report.rmsle)
            })
            .collect();
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let path = common.out.join(format!("curve_{}.tsv", axis.key));
        let mut body = format!("{}\tmale\trmsle\n", axis.key);
        for p in &points {
            body.push_str(&format!("{}\t{}\t{}\n", p.1, p.2, p.3));
        }
        std::fs::write(&path, body).map_err(io_at(&path))?;
        if svg {
            let numeric: Vec<(f64, f64, f64)> = points.iter().filter(|p| p.0.is_finite()).map(|p| (p.0, p.2, p.3)).collect();
            let path = common.out.join(format!("curve_{}.svg", axis.key));
            std::fs::write(&path, render_curve_svg(&axis.key, &numeric)).map_err(io_at(&path))?;
        }
    }
    Ok(())
}

fn write_sweep_table(path: &Path, axes: &[GridAxis], results: &[CellResult]) -> Result<(), CliError> {
    let mut body = String::from("cell");
    for a in axes {
        body.push('\t');
        body.push_str(&a.key);
    }
    body.push_str("\tmale\trmsle\tndcg10\tndcg20\tworst_group_rmsle\tbest_epoch\n");
    for r in results {
        body.push_str(&r.dir);
        for v in &r.values {
            body.push('\t');
            body.push_str(&value_label(v));
        }
        let nd = |k: usize| r.report.ndcg.get(&k).copied().unwrap_or(f64::NAN);
        body.push_str(&format!(
            "\t{}\t{}\t{}\t{}\t{}\t{}\n",
            r.report.male,
            r.report.rmsle,
            nd(10),
            nd(20),
            r.report.worst_group_rmsle(),
            r.best_epoch
        ));
    }
    std::fs::write(path, body).map_err(io_at(path))
}

/// Two-series line chart (MALE and RMSLE against the swept value).
pub fn render_curve_svg(key: &str, points: &[(f64, f64, f64)]) -> String {
    let (w, h, m) = (480.0, 320.0, 48.0);
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().flat_map(|p| [p.1, p.2]).collect();
    let span = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi - lo < 1e-12 {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo, hi)
        }
    };
    let ((x0, x1), (y0, y1)) = (span(&xs), span(&ys));
    let px = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let py = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    s.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n<line x1=\"{m}\" y1=\"{m}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n",
        b = h - m,
        r = w - m
    ));
    for (series, color, pick) in [("MALE", "#1f77b4", 1usize), ("RMSLE", "#d62728", 2)] {
        let pts: Vec<String> = points
            .iter()
            .map(|p| {
                let y = if pick == 1 { p.1 } else { p.2 };
                format!("{:.2},{:.2}", px(p.0), py(y))
            })
            .collect();
        s.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"2\" points=\"{}\"/>\n",
            color,
            pts.join(" ")
        ));
        let ly = if pick == 1 { m - 20.0 } else { m - 6.0 };
        s.push_str(&format!("<text x=\"{}\" y=\"{}\" fill=\"{}\">{}</text>\n", w - m - 60.0, ly, color, series));
    }
    s.push_str(&format!("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", w / 2.0, h - 12.0, key));
    s.push_str(&format!(
        "<text x=\"{m}\" y=\"{}\">{:.3}</text>\n<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{:.3}</text>\n",
        h - m + 16.0,
        x0,
        w - m,
        h - m + 16.0,
        x1
    ));
    s.push_str(&format!(
        "<text x=\"4\" y=\"{}\">{:.3}</text>\n<text x=\"4\" y=\"{}\">{:.3}</text>\n",
        h - m,
        y0,
        m,
        y1
    ));
    s.push_str("</svg>\n");
    s
}
