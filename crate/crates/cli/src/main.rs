//! `hikey`: index a layout-block corpus, query it, pack evidence, evaluate.
//!
//! Exit codes: 0 success, 1 bad input or configuration, 2 internal failure.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hikey_core::config::EngineConfig;
use hikey_core::corpus::{CorpusIndex, MANIFEST_FILE};
use hikey_core::embed::EmbedderSpec;
use hikey_core::engine::Engine;
use hikey_core::eval::{Prediction, QueryRecord};
use hikey_core::hierarchy::LayoutBlock;
use hikey_core::jsonl::read_jsonl;
use hikey_core::packing::{render_prompt, Role};
use hikey_core::retrieval::{FusionMode, RoutingMode};
use hikey_core::{Error, Result};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "hikey", version, about = "Hierarchy-aware retrieval over layout-parsed documents")]
struct Cli {
    /// TOML config file; command-line flags take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build an index from a JSONL file of layout blocks.
    Index(IndexArgs),
    /// Rank documents and sections for one query.
    Query(QueryArgs),
    /// Retrieve, then pack a token-budgeted evidence context.
    Pack(PackArgs),
    /// Score retrieval (and optional answers) against gold labels.
    Eval(EvalArgs),
}

#[derive(Args)]
struct IndexArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// `hash:<dim>` or `file:<dir>`.
    #[arg(long)]
    embedder: Option<EmbedderSpec>,
    #[arg(long)]
    doc_card_max_tokens: Option<usize>,
    #[arg(long)]
    k1: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
}

#[derive(Args)]
struct RetrievalFlags {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    kdoc: Option<usize>,
    #[arg(long)]
    ksec: Option<usize>,
    #[arg(long, value_enum)]
    routing_mode: Option<RoutingArg>,
    #[arg(long, value_enum)]
    fusion_mode: Option<FusionArg>,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    query: String,
    #[command(flatten)]
    retrieval: RetrievalFlags,
}

#[derive(Args)]
struct PackArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    query: String,
    #[arg(long, allow_negative_numbers = true)]
    budget: Option<i64>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    image_cost: Option<usize>,
    #[arg(long)]
    image_cap: Option<usize>,
    /// Wrap the context in the QA prompt template.
    #[arg(long)]
    prompt: bool,
    /// Write the JSON audit here instead of stderr.
    #[arg(long)]
    audit: Option<PathBuf>,
    #[command(flatten)]
    retrieval: RetrievalFlags,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// Also report budgeted recall at this token budget.
    #[arg(long, allow_negative_numbers = true)]
    budget: Option<i64>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(flatten)]
    retrieval: RetrievalFlags,
}

#[derive(Clone, Copy, ValueEnum)]
enum RoutingArg {
    DocOnly,
    SecOnly,
    DocThenSec,
}

#[derive(Clone, Copy, ValueEnum)]
enum FusionArg {
    Bm25Only,
    PlusTextDense,
    FullFusion,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Table,
}

impl From<RoutingArg> for RoutingMode {
    fn from(r: RoutingArg) -> Self {
        match r {
            RoutingArg::DocOnly => RoutingMode::DocOnly,
            RoutingArg::SecOnly => RoutingMode::SecOnly,
            RoutingArg::DocThenSec => RoutingMode::DocThenSec,
        }
    }
}

impl From<FusionArg> for FusionMode {
    fn from(f: FusionArg) -> Self {
        match f {
            FusionArg::Bm25Only => FusionMode::Bm25Only,
            FusionArg::PlusTextDense => FusionMode::PlusTextDense,
            FusionArg::FullFusion => FusionMode::FullFusion,
        }
    }
}

impl RetrievalFlags {
    fn apply(&self, cfg: &mut EngineConfig) {
        set(&mut cfg.alpha, self.alpha);
        set(&mut cfg.beta, self.beta);
        set(&mut cfg.gamma, self.gamma);
        set(&mut cfg.lambda, self.lambda);
        set(&mut cfg.k_doc, self.kdoc);
        set(&mut cfg.k_sec, self.ksec);
        set(&mut cfg.routing_mode, self.routing_mode.map(Into::into));
        set(&mut cfg.fusion_mode, self.fusion_mode.map(Into::into));
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

/// Config file contents plus the keys it set explicitly.
fn file_config(path: Option<&Path>) -> Result<(EngineConfig, BTreeSet<String>)> {
    match path {
        Some(p) => EngineConfig::load_explicit(p),
        None => Ok((EngineConfig::default(), BTreeSet::new())),
    }
}

/// Loads the index and builds an engine whose config is the file config,
/// overridden by `tweak`, with index-time settings taken from the index.
fn open_engine(config: Option<&Path>, index: &Path, tweak: impl FnOnce(&mut EngineConfig)) -> Result<Engine> {
    let (mut cfg, keys) = file_config(config)?;
    let index = CorpusIndex::load(index)?;
    cfg.check_index_keys(&keys, index.config())?;
    tweak(&mut cfg);
    Engine::new(index, cfg)
}

#[derive(Serialize)]
struct Provenance<'a> {
    config_hash: String,
    config: &'a EngineConfig,
}

impl<'a> Provenance<'a> {
    fn of(config: &'a EngineConfig) -> Self {
        Provenance {
            config_hash: config.hash(),
            config,
        }
    }
}

#[derive(Serialize)]
struct Output<'a, T: Serialize> {
    #[serde(flatten)]
    provenance: Provenance<'a>,
    #[serde(flatten)]
    body: T,
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn cmd_index(config: Option<&Path>, args: &IndexArgs) -> Result<()> {
    let (mut cfg, _) = file_config(config)?;
    set(&mut cfg.embedder, args.embedder.clone());
    set(&mut cfg.doc_card_max_tokens, args.doc_card_max_tokens);
    set(&mut cfg.k1, args.k1);
    set(&mut cfg.b, args.b);
    cfg.validate()?;

    let blocks: Vec<LayoutBlock> = read_jsonl(&args.corpus)?;
    if blocks.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let index = CorpusIndex::build(blocks, cfg.index())?;

    // Build beside the target and swap in, so a failure never leaves a
    // half-written index behind.
    let out = &args.out;
    if out.exists() && !out.join(MANIFEST_FILE).exists() && out.read_dir()?.next().is_some() {
        return Err(Error::Config(format!(
            "{} exists and is not an index; refusing to overwrite",
            out.display()
        )));
    }
    let name = out.file_name().and_then(|n| n.to_str()).unwrap_or("index");
    let staging = out.with_file_name(format!(".{name}.partial-{}", std::process::id()));
    if staging.exists() {
        std::fs::remove_dir_all(&staging)?;
    }
    let manifest = match index.save(&staging) {
        Ok(m) => m,
        Err(e) => {
            let _ = std::fs::remove_dir_all(&staging);
            return Err(e);
        }
    };
    if out.exists() {
        std::fs::remove_dir_all(out)?;
    }
    std::fs::rename(&staging, out)?;
    print_json(&manifest)
}

#[derive(Serialize)]
struct AuditEntry<'a> {
    unit_id: &'a str,
    doc_id: &'a str,
    role: Role,
    source_anchor_id: Option<&'a str>,
    with_crop: bool,
    tokens: usize,
    doc_meta_tokens: usize,
}

#[derive(Serialize)]
struct Audit<'a> {
    query: &'a str,
    budget: usize,
    total_tokens: usize,
    documents: Vec<&'a str>,
    members: Vec<AuditEntry<'a>>,
}

fn cmd_query(config: Option<&Path>, args: &QueryArgs) -> Result<()> {
    let engine = open_engine(config, &args.index, |c| args.retrieval.apply(c))?;
    let result = engine.query(&args.query)?;
    print_json(&Output {
        provenance: Provenance::of(engine.config()),
        body: result,
    })
}

fn cmd_pack(config: Option<&Path>, args: &PackArgs) -> Result<()> {
    let engine = open_engine(config, &args.index, |c| {
        args.retrieval.apply(c);
        set(&mut c.budget, args.budget);
        set(&mut c.m, args.m);
        set(&mut c.image_token_cost, args.image_cost);
        set(&mut c.image_cap, args.image_cap);
    })?;
    let result = engine.query(&args.query)?;
    let sub = engine.pack(&result)?;
    let context = sub.serialize();
    let audit = Output {
        provenance: Provenance::of(engine.config()),
        body: Audit {
            query: &args.query,
            budget: sub.budget,
            total_tokens: sub.total_tokens,
            documents: sub.doc_ids(),
            members: sub
                .members
                .iter()
                .map(|m| AuditEntry {
                    unit_id: &m.unit.unit_id,
                    doc_id: &m.unit.doc_id,
                    role: m.role,
                    source_anchor_id: m.source_anchor_id.as_deref(),
                    with_crop: m.with_crop,
                    tokens: m.tokens,
                    doc_meta_tokens: m.doc_meta_tokens,
                })
                .collect(),
        },
    };
    let audit_json = serde_json::to_string_pretty(&audit)? + "\n";
    match &args.audit {
        Some(path) => std::fs::write(path, audit_json)?,
        None => std::io::stderr().lock().write_all(audit_json.as_bytes())?,
    }
    let mut out = std::io::stdout().lock();
    if args.prompt {
        out.write_all(render_prompt(&args.query, &context).as_bytes())?;
    } else {
        out.write_all(context.as_bytes())?;
    }
    Ok(())
}

fn cmd_eval(config: Option<&Path>, args: &EvalArgs) -> Result<()> {
    let engine = open_engine(config, &args.index, |c| args.retrieval.apply(c))?;
    let queries: Vec<QueryRecord> = read_jsonl(&args.queries)?;
    if queries.is_empty() {
        return Err(Error::Config(format!("{} has no queries", args.queries.display())));
    }
    let predictions: Vec<Prediction> = match &args.predictions {
        Some(p) => read_jsonl(p)?,
        None => Vec::new(),
    };
    let report = engine.evaluate(&queries, &predictions, args.budget)?;
    match args.format {
        Format::Json => print_json(&Output {
            provenance: Provenance::of(engine.config()),
            body: report,
        }),
        Format::Table => {
            let mut out = std::io::stdout().lock();
            writeln!(out, "config_hash: {}", engine.config().hash())?;
            out.write_all(report.to_table().as_bytes())?;
            Ok(())
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    let config = cli.config.as_deref();
    match &cli.command {
        Command::Index(a) => cmd_index(config, a),
        Command::Query(a) => cmd_query(config, a),
        Command::Pack(a) => cmd_pack(config, a),
        Command::Eval(a) => cmd_eval(config, a),
    }
}

/// Missing or unreadable input files count as user errors.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io(e) if matches!(e.kind(), std::io::ErrorKind::NotFound | std::io::ErrorKind::PermissionDenied) => 1,
        e if e.is_user_error() => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
