//! Command-line front end.
//!
//! Every command reads an optional `key=value` config file (`--config`)
//! and lets flags override individual keys. Relative paths in a config file
//! resolve against the file's directory. Exit codes: 0 success, 2 config
//! error, 3 data error.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use thiserror::Error;

use crate::corpus::{load_corpus, Corpus, CorpusPaths, Split};
use crate::embeddings::{EmbeddingProvider, EmbeddingStore};
use crate::evaluation::{self, error_flow, evaluate, load_pos_table, pos_breakdown, EvalReport};
use crate::pipeline::{
    candidate_index, decide_types, retrieve_all, CandidatePool, PipelineOptions,
};
use crate::report::{self, read_retrieval_dump, write_atomic};
use crate::retrieval::{DgsMode, Engine, InputMode, RetrievalResult, SsParams, WugMode};
use crate::tuning::{grid_search, TuningGrid};
use crate::typing::{SimAggregation, TypeDecision};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Data(_) => EXIT_DATA,
        }
    }
}

fn data_err(err: impl Display) -> CliError {
    CliError::Data(err.to_string())
}

#[derive(Debug, Parser)]
#[command(
    name = "sensemap",
    version,
    about = "Map word uses to sign-dictionary entries and evaluate the mapping"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Retrieve sign candidates for every use of a split and write dumps.
    Retrieve(RunArgs),
    /// Score retrieval dumps against the gold data and write reports.
    Evaluate(RunArgs),
    /// Grid-search tau and top-k on the validation split.
    Tune(RunArgs),
    /// Evaluate every word-use/dictionary input-mode combination.
    Ablate(RunArgs),
    /// Print corpus statistics.
    Stats(RunArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// key=value run configuration file
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// em, ss or both
    #[arg(long)]
    pub engine: Option<String>,
    #[arg(long)]
    pub tau: Option<String>,
    #[arg(long)]
    pub topk: Option<String>,
    /// full_context, word_only or sentence_only
    #[arg(long)]
    pub wug_mode: Option<String>,
    /// base or gt_only
    #[arg(long)]
    pub dgs_mode: Option<String>,
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Embedding store file
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Dimension of the hashing fallback embedder
    #[arg(long)]
    pub fallback_dim: Option<String>,
    #[arg(long)]
    pub uses: Option<PathBuf>,
    #[arg(long)]
    pub signs: Option<PathBuf>,
    #[arg(long)]
    pub gold: Option<PathBuf>,
    #[arg(long)]
    pub gold_types: Option<PathBuf>,
    /// lemma/part-of-speech table
    #[arg(long)]
    pub pos: Option<PathBuf>,
    /// Candidate pool: train or inventory
    #[arg(long)]
    pub pool: Option<String>,
    /// Word similarity statistic: max or mean
    #[arg(long)]
    pub sim_agg: Option<String>,
    /// Comma-separated tau grid for `tune`
    #[arg(long)]
    pub tau_grid: Option<String>,
    /// Comma-separated top-k grid for `tune`
    #[arg(long)]
    pub k_grid: Option<String>,
    /// Second split for the generalization table of `evaluate`
    #[arg(long)]
    pub compare_split: Option<String>,
    /// Directory holding retrieval dumps (defaults to --out)
    #[arg(long)]
    pub dumps: Option<PathBuf>,
}

const KEYS: &[&str] = &[
    "engine",
    "tau",
    "topk",
    "wug_mode",
    "dgs_mode",
    "split",
    "out",
    "embeddings",
    "fallback_dim",
    "uses",
    "signs",
    "gold",
    "gold_types",
    "pos",
    "pool",
    "sim_agg",
    "tau_grid",
    "k_grid",
    "compare_split",
    "dumps",
];

const PATH_KEYS: &[&str] = &[
    "out",
    "embeddings",
    "uses",
    "signs",
    "gold",
    "gold_types",
    "pos",
    "dumps",
];

/// Raw settings before validation; each value remembers the directory its
/// relative paths resolve against.
#[derive(Debug, Default)]
struct Settings {
    values: BTreeMap<&'static str, (String, Option<PathBuf>)>,
}

impl Settings {
    fn from_args(args: &RunArgs) -> Result<Self, CliError> {
        let mut settings = Settings::default();
        if let Some(path) = &args.config {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Config(format!("cannot read config {}: {e}", path.display()))
            })?;
            let base = path.parent().map(Path::to_path_buf);
            settings.parse_file(&text, base, path)?;
        }
        let path_str = |p: &Option<PathBuf>| p.as_ref().map(|p| p.to_string_lossy().into_owned());
        let flags: [(&'static str, Option<String>); 20] = [
            ("engine", args.engine.clone()),
            ("tau", args.tau.clone()),
            ("topk", args.topk.clone()),
            ("wug_mode", args.wug_mode.clone()),
            ("dgs_mode", args.dgs_mode.clone()),
            ("split", args.split.clone()),
            ("out", path_str(&args.out)),
            ("embeddings", path_str(&args.embeddings)),
            ("fallback_dim", args.fallback_dim.clone()),
            ("uses", path_str(&args.uses)),
            ("signs", path_str(&args.signs)),
            ("gold", path_str(&args.gold)),
            ("gold_types", path_str(&args.gold_types)),
            ("pos", path_str(&args.pos)),
            ("pool", args.pool.clone()),
            ("sim_agg", args.sim_agg.clone()),
            ("tau_grid", args.tau_grid.clone()),
            ("k_grid", args.k_grid.clone()),
            ("compare_split", args.compare_split.clone()),
            ("dumps", path_str(&args.dumps)),
        ];
        for (key, value) in flags {
            if let Some(value) = value {
                settings.values.insert(key, (value, None));
            }
        }
        Ok(settings)
    }

    fn parse_file(
        &mut self,
        text: &str,
        base: Option<PathBuf>,
        path: &Path,
    ) -> Result<(), CliError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("{}:{}: expected key=value", path.display(), i + 1))
            })?;
            let key = key.trim();
            let key = KEYS.iter().find(|k| **k == key).ok_or_else(|| {
                CliError::Config(format!("{}:{}: unknown key `{key}`", path.display(), i + 1))
            })?;
            self.values
                .insert(key, (value.trim().to_owned(), base.clone()));
        }
        Ok(())
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|(v, _)| v.as_str())
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| CliError::Config(format!("invalid {key} `{v}`: {e}")))
            })
            .transpose()
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        debug_assert!(PATH_KEYS.contains(&key));
        self.values.get(key).map(|(v, base)| match base {
            Some(base) if Path::new(v).is_relative() => base.join(v),
            _ => PathBuf::from(v),
        })
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, CliError>
    where
        T::Err: Display,
    {
        self.raw(key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        s.parse::<T>().map_err(|e| {
                            CliError::Config(format!("invalid {key} entry `{s}`: {e}"))
                        })
                    })
                    .collect()
            })
            .transpose()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EngineSelection {
    Em,
    Ss,
    Both,
}

impl EngineSelection {
    pub fn engines(self) -> Vec<Engine> {
        match self {
            EngineSelection::Em => vec![Engine::Em],
            EngineSelection::Ss => vec![Engine::Ss],
            EngineSelection::Both => vec![Engine::Em, Engine::Ss],
        }
    }

    fn includes_ss(self) -> bool {
        self != EngineSelection::Em
    }
}

impl FromStr for EngineSelection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "em" => Ok(EngineSelection::Em),
            "ss" => Ok(EngineSelection::Ss),
            "both" => Ok(EngineSelection::Both),
            _ => Err("expected em, ss or both".to_owned()),
        }
    }
}

#[derive(Debug, Clone)]
pub enum ProviderSpec {
    Store(PathBuf),
    Fallback(usize),
}

/// A fully validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub corpus: CorpusPaths,
    pub pos: Option<PathBuf>,
    pub provider: Option<ProviderSpec>,
    pub engine: EngineSelection,
    pub tau: Option<f64>,
    pub k: Option<usize>,
    pub options: PipelineOptions,
    pub split: Split,
    pub out: PathBuf,
    pub dumps: PathBuf,
    pub grid: TuningGrid,
    pub compare_split: Option<Split>,
}

impl RunConfig {
    pub fn from_args(args: &RunArgs) -> Result<Self, CliError> {
        let s = Settings::from_args(args)?;
        let required_path = |key: &str| {
            let path = s
                .path(key)
                .ok_or_else(|| CliError::Config(format!("missing required setting `{key}`")))?;
            ensure_exists(key, &path)?;
            Ok::<_, CliError>(path)
        };
        let optional_path = |key: &str| {
            s.path(key)
                .map(|p| ensure_exists(key, &p).map(|_| p))
                .transpose()
        };
        let corpus = CorpusPaths {
            uses: required_path("uses")?,
            signs: required_path("signs")?,
            gold: required_path("gold")?,
            gold_types: optional_path("gold_types")?,
        };
        let pos = optional_path("pos")?;

        let fallback_dim: Option<usize> = s.parsed("fallback_dim")?;
        let provider = match (optional_path("embeddings")?, fallback_dim) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config(
                    "set either embeddings or fallback_dim, not both".to_owned(),
                ))
            }
            (Some(path), None) => Some(ProviderSpec::Store(path)),
            (None, Some(0)) => {
                return Err(CliError::Config("fallback_dim must be positive".to_owned()))
            }
            (None, Some(dim)) => Some(ProviderSpec::Fallback(dim)),
            (None, None) => None,
        };

        let tau: Option<f64> = s.parsed("tau")?;
        if let Some(tau) = tau {
            if !(tau > 0.0 && tau < 1.0) {
                return Err(CliError::Config(format!(
                    "tau must lie in (0, 1), got {tau}"
                )));
            }
        }
        let k: Option<usize> = s.parsed("topk")?;
        if k == Some(0) {
            return Err(CliError::Config("topk must be at least 1".to_owned()));
        }

        let mode = InputMode {
            wug: s.parsed::<WugMode>("wug_mode")?.unwrap_or_default(),
            dgs: s.parsed::<DgsMode>("dgs_mode")?.unwrap_or_default(),
        };
        let options = PipelineOptions {
            mode,
            pool: s.parsed::<CandidatePool>("pool")?.unwrap_or_default(),
            aggregation: s.parsed::<SimAggregation>("sim_agg")?.unwrap_or_default(),
        };
        let out = s.path("out").unwrap_or_else(|| PathBuf::from("out"));
        let dumps = s.path("dumps").unwrap_or_else(|| out.clone());
        let grid = TuningGrid {
            taus: s
                .list("tau_grid")?
                .unwrap_or_else(|| TuningGrid::default().taus),
            ks: s
                .list("k_grid")?
                .unwrap_or_else(|| TuningGrid::default().ks),
        };

        Ok(RunConfig {
            corpus,
            pos,
            provider,
            engine: s.parsed("engine")?.unwrap_or(EngineSelection::Both),
            tau,
            k,
            options,
            split: s.parsed("split")?.unwrap_or(Split::TestOverlap),
            out,
            dumps,
            grid,
            compare_split: s.parsed("compare_split")?,
        })
    }

    fn ss_params(&self) -> Result<Option<SsParams>, CliError> {
        if !self.engine.includes_ss() {
            return Ok(None);
        }
        match (self.tau, self.k) {
            (Some(tau), Some(k)) => Ok(Some(SsParams { tau, k })),
            _ => Err(CliError::Config(
                "the ss engine requires both tau and topk".to_owned(),
            )),
        }
    }

    fn require_tau(&self) -> Result<(), CliError> {
        if self.engine.includes_ss() && self.tau.is_none() {
            return Err(CliError::Config("the ss engine requires tau".to_owned()));
        }
        Ok(())
    }

    fn provider_spec(&self) -> Result<&ProviderSpec, CliError> {
        self.provider.as_ref().ok_or_else(|| {
            CliError::Config("set embeddings (store file) or fallback_dim".to_owned())
        })
    }
}

fn ensure_exists(key: &str, path: &Path) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "{key}: {} does not exist",
            path.display()
        )))
    }
}

fn load_provider(spec: &ProviderSpec) -> Result<EmbeddingProvider, CliError> {
    match spec {
        ProviderSpec::Store(path) => Ok(EmbeddingProvider::Store(
            EmbeddingStore::load(path).map_err(data_err)?,
        )),
        ProviderSpec::Fallback(dim) => Ok(EmbeddingProvider::Fallback { dim: *dim }),
    }
}

fn write_output(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| data_err(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    write_atomic(&path, contents.as_bytes())
        .map_err(|e| data_err(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn to_json(value: &serde_json::Value) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("JSON values serialize");
    text.push('\n');
    text
}

pub fn dump_name(engine: Engine, split: Split) -> String {
    format!("retrieval_{engine}_{split}.tsv")
}

/// Runs one command; returns the lines to print on success.
pub fn run(command: &Command) -> Result<Vec<String>, CliError> {
    match command {
        Command::Retrieve(args) => cmd_retrieve(&RunConfig::from_args(args)?),
        Command::Evaluate(args) => cmd_evaluate(&RunConfig::from_args(args)?),
        Command::Tune(args) => cmd_tune(&RunConfig::from_args(args)?),
        Command::Ablate(args) => cmd_ablate(&RunConfig::from_args(args)?),
        Command::Stats(args) => cmd_stats(&RunConfig::from_args(args)?),
    }
}

/// Entry point for the binary; returns the process exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(lines) => {
            for line in lines {
                println!("{line}");
            }
            0
        }
        Err(err) => {
            eprintln!("sensemap: {err}");
            err.exit_code()
        }
    }
}

fn load_split(config: &RunConfig) -> Result<(Corpus, Corpus), CliError> {
    let corpus = load_corpus(&config.corpus).map_err(data_err)?;
    let view = corpus.split_view(config.split);
    Ok((corpus, view))
}

pub fn cmd_retrieve(config: &RunConfig) -> Result<Vec<String>, CliError> {
    let ss = config.ss_params()?;
    let provider = load_provider(config.provider_spec()?)?;
    let (corpus, view) = load_split(config)?;
    let index = candidate_index(&corpus, &config.options).map_err(data_err)?;
    let mut lines = Vec::new();
    for engine in config.engine.engines() {
        let results = retrieve_all(&view, &index, &provider, engine, ss, config.options.mode)
            .map_err(data_err)?;
        let path = write_output(
            &config.out,
            &dump_name(engine, config.split),
            &report::retrieval_dump(engine, &results),
        )?;
        lines.push(format!(
            "{engine}: {} uses -> {}",
            results.len(),
            path.display()
        ));
    }
    Ok(lines)
}

fn read_dump_for(
    config: &RunConfig,
    engine: Engine,
    view: &Corpus,
    split: Split,
) -> Result<Vec<RetrievalResult>, CliError> {
    let path = config.dumps.join(dump_name(engine, split));
    if !path.exists() {
        return Err(CliError::Data(format!("missing dump {}", path.display())));
    }
    let (dump_engine, results) = read_retrieval_dump(&path).map_err(data_err)?;
    if dump_engine != engine {
        return Err(CliError::Data(format!(
            "{} holds {dump_engine} results, expected {engine}",
            path.display()
        )));
    }
    if let Some(stray) = results.iter().find(|r| view.word_use(&r.use_id).is_none()) {
        return Err(CliError::Data(format!(
            "{}: use `{}` is not in split {split}",
            path.display(),
            stray.use_id
        )));
    }
    Ok(results)
}

struct EngineEval {
    report: EvalReport,
    results: Vec<RetrievalResult>,
    decisions: Option<Vec<TypeDecision>>,
}

fn evaluate_split(
    config: &RunConfig,
    engine: Engine,
    view: &Corpus,
    split: Split,
) -> Result<EngineEval, CliError> {
    if view.gold_mappings().is_empty() {
        return Err(CliError::Data(format!(
            "split {split} has no gold mappings"
        )));
    }
    let results = read_dump_for(config, engine, view, split)?;
    let decisions = config
        .tau
        .map(|tau| decide_types(view, &results, tau, config.options.aggregation))
        .transpose()
        .map_err(data_err)?;
    let report = evaluate(
        engine,
        &results,
        view,
        &evaluation::DEFAULT_KS,
        decisions.as_deref(),
    )
    .map_err(data_err)?;
    Ok(EngineEval {
        report,
        results,
        decisions,
    })
}

pub fn cmd_evaluate(config: &RunConfig) -> Result<Vec<String>, CliError> {
    config.require_tau()?;
    let (corpus, view) = load_split(config)?;
    let model = match &config.provider {
        Some(spec) => Some(load_provider(spec)?.model_name()),
        None => None,
    };
    let pos_table = config
        .pos
        .as_deref()
        .map(load_pos_table)
        .transpose()
        .map_err(data_err)?;

    let mut evals: BTreeMap<Engine, EngineEval> = BTreeMap::new();
    for engine in config.engine.engines() {
        evals.insert(engine, evaluate_split(config, engine, &view, config.split)?);
    }
    let em = evals.get(&Engine::Em);
    let ss = evals.get(&Engine::Ss);
    let split = config.split;
    let out = &config.out;
    let mut lines = Vec::new();
    let mut json_engines = serde_json::Map::new();

    let flow = match (em, ss) {
        (Some(em), Some(ss)) => {
            Some(error_flow(&em.results, &ss.results, view.gold_mappings()).map_err(data_err)?)
        }
        _ => None,
    };

    for (engine, eval) in &evals {
        lines.push(format!(
            "{engine}: accuracy {} (n={})",
            report::format_percent(eval.report.accuracy.overall.percent()),
            eval.report.n
        ));
        let mut entry = json!({ "report": eval.report });
        if let Some(decisions) = &eval.decisions {
            write_output(
                out,
                &format!("types_{engine}_{split}.tsv"),
                &report::type_decisions_tsv(decisions),
            )?;
            entry["decisions"] = json!(decisions
                .iter()
                .map(|d| json!({
                    "lemma": d.lemma,
                    "predicted_type": d.predicted_type,
                    "V_w": d.evidence.predicted_sign_ids,
                    "sim_stat": d.evidence.sim_stat,
                    "tau": d.tau,
                }))
                .collect::<Vec<_>>());
            if let Some(agreement) = &eval.report.type_agreement {
                write_output(
                    out,
                    &format!("agreement_{engine}.tsv"),
                    &report::agreement_table(agreement),
                )?;
                write_output(
                    out,
                    &format!("confusion_{engine}.tsv"),
                    &report::confusion_table(agreement),
                )?;
            }
            if let Some(table) = &pos_table {
                let breakdown = pos_breakdown(decisions, view.gold_types(), table);
                write_output(
                    out,
                    &format!("pos_{engine}.tsv"),
                    &report::pos_table(&breakdown),
                )?;
                entry["pos"] = json!(breakdown);
            }
        }
        json_engines.insert(engine.label().to_owned(), entry);
    }

    let em_report = em.map(|e| &e.report);
    let ss_report = ss.map(|e| &e.report);
    if let Some(model) = &model {
        write_output(
            out,
            "model.tsv",
            &report::model_table(model, em_report, ss_report),
        )?;
    }
    write_output(
        out,
        "overall.tsv",
        &report::overall_table(em_report, ss_report),
    )?;
    if !view.gold_types().is_empty() {
        write_output(
            out,
            "per_type.tsv",
            &report::per_type_table(em_report, ss_report),
        )?;
    }
    let reports: Vec<&EvalReport> = evals.values().map(|e| &e.report).collect();
    write_output(
        out,
        "precision_at_k.tsv",
        &report::precision_table(&reports),
    )?;
    if let Some(flow) = &flow {
        write_output(out, "error_flow.tsv", &report::error_flow_table(flow))?;
    }

    let mut generalization = serde_json::Map::new();
    if let Some(other) = config.compare_split {
        let other_view = corpus.split_view(other);
        for (engine, eval) in &evals {
            let other_eval = evaluate_split(config, *engine, &other_view, other)?;
            write_output(
                out,
                &format!("generalization_{engine}.tsv"),
                &report::generalization_table((split, &eval.report), (other, &other_eval.report)),
            )?;
            generalization.insert(engine.label().to_owned(), json!(other_eval.report));
        }
    }

    let document = json!({
        "split": split,
        "model": model,
        "mode": config.options.mode,
        "pool": config.options.pool,
        "engines": json_engines,
        "error_flow": flow,
        "compare_split": config.compare_split,
        "generalization": generalization,
    });
    let path = write_output(out, "report.json", &to_json(&document))?;
    lines.push(format!("report -> {}", path.display()));
    Ok(lines)
}

pub fn cmd_tune(config: &RunConfig) -> Result<Vec<String>, CliError> {
    let provider = load_provider(config.provider_spec()?)?;
    let corpus = load_corpus(&config.corpus).map_err(data_err)?;
    let result =
        grid_search(&corpus, &provider, &config.grid, &config.options).map_err(|e| match e {
            crate::tuning::TuneError::EmptyGrid(_)
            | crate::tuning::TuneError::InvalidTau(_)
            | crate::tuning::TuneError::InvalidK => CliError::Config(e.to_string()),
            other => data_err(other),
        })?;
    write_output(&config.out, "tuning.tsv", &report::tuning_table(&result))?;
    let document = json!({
        "model": provider.model_name(),
        "mode": config.options.mode,
        "pool": config.options.pool,
        "result": result,
    });
    write_output(&config.out, "tuning.json", &to_json(&document))?;
    Ok(vec![format!(
        "{} configurations; best tau={:.2} k={} accuracy {}",
        result.per_config.len(),
        result.best.tau,
        result.best.k,
        report::format_percent(result.best.accuracy.percent())
    )])
}

pub fn cmd_ablate(config: &RunConfig) -> Result<Vec<String>, CliError> {
    let ss = config.ss_params()?;
    let provider = load_provider(config.provider_spec()?)?;
    let (corpus, view) = load_split(config)?;
    if view.gold_mappings().is_empty() {
        return Err(CliError::Data(format!(
            "split {} has no gold mappings",
            config.split
        )));
    }
    let mut rows = Vec::new();
    let mut reports = serde_json::Map::new();
    for mode in InputMode::all() {
        let options = PipelineOptions {
            mode,
            ..config.options
        };
        let index = candidate_index(&corpus, &options).map_err(data_err)?;
        let mut per_engine: BTreeMap<Engine, EvalReport> = BTreeMap::new();
        for engine in config.engine.engines() {
            let results =
                retrieve_all(&view, &index, &provider, engine, ss, mode).map_err(data_err)?;
            let decisions = config
                .tau
                .map(|tau| decide_types(&view, &results, tau, options.aggregation))
                .transpose()
                .map_err(data_err)?;
            let report = evaluate(
                engine,
                &results,
                &view,
                &evaluation::DEFAULT_KS,
                decisions.as_deref(),
            )
            .map_err(data_err)?;
            per_engine.insert(engine, report);
        }
        reports.insert(
            format!("{}/{}", mode.wug, mode.dgs),
            json!(per_engine
                .iter()
                .map(|(e, r)| (e.label().to_owned(), json!(r)))
                .collect::<serde_json::Map<_, _>>()),
        );
        rows.push((
            mode,
            per_engine.remove(&Engine::Em),
            per_engine.remove(&Engine::Ss),
        ));
    }
    let table = report::ablation_table(&rows);
    write_output(&config.out, "ablation.tsv", &table)?;
    let document = json!({
        "split": config.split,
        "model": provider.model_name(),
        "pool": config.options.pool,
        "reports": reports,
    });
    write_output(&config.out, "ablation.json", &to_json(&document))?;
    Ok(table.lines().map(str::to_owned).collect())
}

pub fn cmd_stats(config: &RunConfig) -> Result<Vec<String>, CliError> {
    let corpus = load_corpus(&config.corpus).map_err(data_err)?;
    let stats = corpus.stats();
    let table = report::stats_table(&stats);
    write_output(&config.out, "stats.tsv", &table)?;
    let mut lines: Vec<String> = table.lines().map(str::to_owned).collect();
    lines.push(format!(
        "{} mappings, {} words, {} signs",
        stats.total_mappings(),
        corpus.lemmas().len(),
        corpus.inventory().len()
    ));
    Ok(lines)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_and_flag_override() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["uses.tsv", "signs.jsonl", "gold.tsv"] {
            std::fs::write(dir.path().join(name), "").unwrap();
        }
        let config_path = dir.path().join("run.conf");
        std::fs::write(
            &config_path,
            "# comment\nuses = uses.tsv\nsigns=signs.jsonl\ngold=gold.tsv\nengine=ss\ntau=0.7\ntopk=3\nfallback_dim=64\nwug_mode=word_only\n",
        )
        .unwrap();
        let args = RunArgs {
            config: Some(config_path),
            tau: Some("0.75".into()),
            ..RunArgs::default()
        };
        let config = RunConfig::from_args(&args).unwrap();
        assert_eq!(config.tau, Some(0.75));
        assert_eq!(config.k, Some(3));
        assert_eq!(config.engine, EngineSelection::Ss);
        assert_eq!(config.options.mode.wug, WugMode::WordOnly);
        assert_eq!(config.corpus.uses, dir.path().join("uses.tsv"));
        assert!(matches!(config.provider, Some(ProviderSpec::Fallback(64))));
        assert_eq!(config.split, Split::TestOverlap);
    }

    #[test]
    fn config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let config_path = dir.path().join("run.conf");
        std::fs::write(&config_path, "colour=blue\n").unwrap();
        let err = RunConfig::from_args(&RunArgs {
            config: Some(config_path.clone()),
            ..RunArgs::default()
        })
        .unwrap_err();
        assert_eq!(err.exit_code(), EXIT_CONFIG);

        std::fs::write(&config_path, "uses=missing.tsv\n").unwrap();
        let err = RunConfig::from_args(&RunArgs {
            config: Some(config_path),
            ..RunArgs::default()
        })
        .unwrap_err();
        assert!(err.to_string().contains("missing.tsv"));
    }
}
