//! Experiment driver: pre-training, zero-shot evaluation, fine-tuning,
//! incremental fine-tuning, synthetic benchmark generation, remote encoding,
//! batch scoring, and report merging.
//!
//! Every command reads one JSON config (see `ExperimentConfig`) plus flag
//! overrides, writes its artifacts under
//! `<output_dir>/<timestamp>-<fingerprint>/`, and stamps the config
//! fingerprint into every report.
//!
//! Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use prerec::checkpoint::Checkpoint;
use prerec::config::{DomainPaths, ExperimentConfig};
use prerec::corpus::load::{load_catalog, load_interactions};
use prerec::corpus::split::{domain_split_seed, split_users};
use prerec::corpus::synthetic::write_synthetic_artifacts;
use prerec::corpus::DomainDataset;
use prerec::embedding::remote::EncoderClient;
use prerec::embedding::{table_from_vectors, EmbeddingTable};
use prerec::error::{Error, Result};
use prerec::evaluation::{
    evaluate, merge_reports, seen_ids, write_reports_csv, write_reports_json, ContentKnnRanker,
    EvalReport, ModelRanker, OracleRanker, PopRanker, RandomRanker, Ranker, SeenIds, TestMode,
};
use prerec::inference::{rank_topk, resolve_history, DomainData, ModelScorer, RankingRequest};
use prerec::model::{ModelConfig, SeqEncoderKind};
use prerec::training::{finetune, incremental_schedule, pretrain, TrainOutcome};

#[derive(Parser)]
#[command(
    name = "prerec",
    version,
    about = "Cross-domain sequential recommender with causal debiasing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pre-train on the configured source domains
    Pretrain(CommonArgs),
    /// Evaluate a ranker zero-shot on the target domain (all + unseen)
    Zeroshot(ZeroshotArgs),
    /// Fine-tune a checkpoint on the target domain (or train from scratch
    /// when no checkpoint is given)
    Finetune(CommonArgs),
    /// Learning curve over increasing target training sizes
    Incremental(IncrementalArgs),
    /// Generate the planted-bias synthetic benchmark
    Synthgen(SynthArgs),
    /// Encode catalog texts through the remote encoder into embedding tables
    Embed(CommonArgs),
    /// Batch-score JSONL ranking requests against the target catalog
    Score(ScoreArgs),
    /// Merge evaluation report JSON files into one CSV/JSON
    Report(ReportArgs),
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Experiment configuration (JSON)
    #[arg(long)]
    config: PathBuf,
    /// Checkpoint path (overrides the config)
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Metric K percentage
    #[arg(long = "k-pct")]
    k_pct: Option<f64>,
    /// Popularity interval length in days
    #[arg(long = "interval-days")]
    interval_days: Option<f64>,
    /// Learning rate
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long = "lambda-d")]
    lambda_d: Option<f64>,
    #[arg(long = "lambda-v")]
    lambda_v: Option<f64>,
    #[arg(long = "lambda-z")]
    lambda_z: Option<f64>,
    #[arg(long = "lambda-u")]
    lambda_u: Option<f64>,
    #[arg(long = "batch-size")]
    batch_size: Option<usize>,
    #[arg(long = "max-epochs")]
    max_epochs: Option<usize>,
    #[arg(long = "embed-dim")]
    embed_dim: Option<usize>,
    #[arg(long)]
    negatives: Option<usize>,
    /// Ranker / model variant: prerec, prerec_n, gru, sasrec_like, random,
    /// pop, content_knn, oracle
    #[arg(long = "model-kind")]
    model_kind: Option<String>,
    #[arg(long = "output-dir")]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
struct IncrementalArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated ascending training sizes, e.g. 0,100,1000
    #[arg(long)]
    sizes: Option<String>,
}

#[derive(Args)]
struct ZeroshotArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Also export the target domain's interval counts as CSV
    #[arg(long = "export-counts")]
    export_counts: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Directory for the generated artifacts (default: the run directory)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// JSONL request file: {"user_id", "history": [...], "time", "k_pct"?}
    #[arg(long)]
    requests: PathBuf,
    /// Output JSONL path (default: run directory / rankings.jsonl)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Scoring path: zero_shot or in_domain
    #[arg(long, default_value = "zero_shot")]
    mode: String,
}

#[derive(Args)]
struct ReportArgs {
    /// Report JSON files to merge
    reports: Vec<PathBuf>,
    /// Output CSV path
    #[arg(long)]
    out: PathBuf,
    /// Scenario label for the CSV rows
    #[arg(long, default_value = "merged")]
    scenario: String,
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Pretrain(args) => cmd_pretrain(args),
        Command::Zeroshot(args) => cmd_zeroshot(args),
        Command::Finetune(args) => cmd_finetune(args),
        Command::Incremental(args) => cmd_incremental(args),
        Command::Synthgen(args) => cmd_synthgen(args),
        Command::Embed(args) => cmd_embed(args),
        Command::Score(args) => cmd_score(args),
        Command::Report(args) => cmd_report(args),
    }
}

/// Loads the config and applies flag overrides (flags > file > defaults).
fn load_config(args: &CommonArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(v) = args.seed {
        cfg.seed = v;
        cfg.model.seed = v;
        cfg.train.seed = v;
    }
    if let Some(v) = args.k_pct {
        cfg.metric.k_pct = v;
        cfg.train.metric.k_pct = v;
    }
    if let Some(v) = args.interval_days {
        cfg.interval_days = v;
    }
    if let Some(v) = args.lr {
        cfg.train.learning_rate = v;
    }
    if let Some(v) = args.lambda_d {
        cfg.model.lambda_d = v;
    }
    if let Some(v) = args.lambda_v {
        cfg.model.lambda_v = v;
    }
    if let Some(v) = args.lambda_z {
        cfg.model.lambda_z = v;
    }
    if let Some(v) = args.lambda_u {
        cfg.model.lambda_u = v;
    }
    if let Some(v) = args.batch_size {
        cfg.train.batch_size = v;
    }
    if let Some(v) = args.max_epochs {
        cfg.train.max_epochs = v;
    }
    if let Some(v) = args.embed_dim {
        cfg.model.embed_dim = v;
    }
    if let Some(v) = args.negatives {
        cfg.model.negatives = v;
    }
    if let Some(v) = &args.model_kind {
        cfg.model_kind = v.clone();
    }
    if let Some(v) = &args.output_dir {
        cfg.output_dir = v.clone();
    }
    if let Some(v) = &args.checkpoint {
        cfg.checkpoint = Some(v.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Creates `<output_dir>/<timestamp>-<fingerprint>/` and drops the resolved
/// config inside it.
fn run_dir(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0);
    let dir = cfg
        .output_dir
        .join(format!("{stamp}-{}", cfg.fingerprint()));
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    cfg.save(&dir.join("config.json"))?;
    Ok(dir)
}

fn load_domain(paths: &DomainPaths, cfg: &ExperimentConfig) -> Result<DomainData> {
    let log = load_interactions(&paths.interactions, paths.format)?;
    let catalog = load_catalog(&paths.catalog)?;
    let table = EmbeddingTable::load(&paths.embeddings)?;
    let dataset = DomainDataset::assemble(&log, &catalog, &table, &paths.domain_id)?;
    if dataset.dropped_short_users > 0 {
        eprintln!(
            "domain {}: dropped {} user(s) with fewer than 2 interactions",
            paths.domain_id, dataset.dropped_short_users
        );
    }
    let domain_log = log.restrict_to_domain(&paths.domain_id);
    let split = split_users(
        &domain_log,
        (
            cfg.split_ratios[0],
            cfg.split_ratios[1],
            cfg.split_ratios[2],
        ),
        domain_split_seed(cfg.seed, &paths.domain_id),
    )?;
    DomainData::new(dataset, split, cfg.interval_secs())
}

fn load_sources(cfg: &ExperimentConfig) -> Result<Vec<DomainData>> {
    if cfg.sources.is_empty() {
        return Err(Error::Config("config lists no source domains".into()));
    }
    cfg.sources.iter().map(|p| load_domain(p, cfg)).collect()
}

fn load_target(cfg: &ExperimentConfig) -> Result<DomainData> {
    let paths = cfg
        .target
        .as_ref()
        .ok_or_else(|| Error::Config("config lists no target domain".into()))?;
    load_domain(paths, cfg)
}

fn require_checkpoint(cfg: &ExperimentConfig) -> Result<Checkpoint> {
    let path = cfg
        .checkpoint
        .as_ref()
        .ok_or_else(|| Error::Config("no checkpoint given (--checkpoint or config)".into()))?;
    Checkpoint::load(path)
}

/// Maps a model kind onto its configuration variant.
fn model_config_for_kind(base: &ModelConfig, kind: &str) -> Result<ModelConfig> {
    let mut cfg = base.clone();
    match kind {
        "prerec" => {}
        "prerec_n" => cfg = cfg.ablated(),
        "gru" => {
            cfg = cfg.ablated();
            cfg.encoder = SeqEncoderKind::Gru;
        }
        "sasrec_like" => {
            cfg = cfg.ablated();
            cfg.encoder = SeqEncoderKind::Transformer;
        }
        other => {
            return Err(Error::Config(format!(
                "model kind {other} is not a trainable variant"
            )))
        }
    }
    Ok(cfg)
}

fn write_train_log(outcome: &TrainOutcome, path: &Path, fingerprint: &str) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for log in &outcome.checkpoint.history {
        let mut record = serde_json::to_value(log).unwrap();
        record["fingerprint"] = serde_json::Value::String(fingerprint.to_string());
        writeln!(f, "{record}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

fn stamp(reports: &mut [EvalReport], fingerprint: &str) {
    for r in reports.iter_mut() {
        r.fingerprint = fingerprint.to_string();
    }
}

fn cmd_pretrain(args: CommonArgs) -> Result<()> {
    let cfg = load_config(&args)?;
    let dir = run_dir(&cfg)?;
    let sources = load_sources(&cfg)?;
    let source_refs: Vec<&DomainData> = sources.iter().collect();
    let model_cfg = model_config_for_kind(&cfg.model, &cfg.model_kind)?;
    let mut outcome = pretrain(&source_refs, model_cfg, &cfg.train)?;
    outcome.checkpoint.fingerprint = cfg.fingerprint();
    let ckpt_path = dir.join("checkpoint.ckpt");
    outcome.checkpoint.save(&ckpt_path)?;
    write_train_log(&outcome, &dir.join("train_log.jsonl"), &cfg.fingerprint())?;
    println!(
        "pretrained {} on {} domain(s): best val r-NDCG@K% {:.5} at epoch {} ({:?})",
        cfg.model_kind,
        sources.len(),
        outcome.checkpoint.best_metric,
        outcome.checkpoint.epoch,
        outcome.stop
    );
    println!("checkpoint: {}", ckpt_path.display());
    Ok(())
}

fn build_ranker<'a>(
    cfg: &ExperimentConfig,
    params: Option<&'a prerec::model::Parameters>,
    target: &'a DomainData,
) -> Result<Box<dyn Ranker + 'a>> {
    Ok(match cfg.model_kind.as_str() {
        "random" => Box::new(RandomRanker::new(cfg.seed)),
        "pop" => Box::new(PopRanker::new(&target.counts)),
        "content_knn" => Box::new(ContentKnnRanker::new(&target.dataset.embeddings)),
        "oracle" => Box::new(OracleRanker),
        kind => {
            let params = params
                .ok_or_else(|| Error::Config(format!("model kind {kind} needs a checkpoint")))?;
            Box::new(ModelRanker::zero_shot(params, target, kind)?)
        }
    })
}

fn cmd_zeroshot(args: ZeroshotArgs) -> Result<()> {
    let export_counts = args.export_counts;
    let args = args.common;
    let cfg = load_config(&args)?;
    let dir = run_dir(&cfg)?;
    let target = load_target(&cfg)?;
    let needs_model = !matches!(
        cfg.model_kind.as_str(),
        "random" | "pop" | "content_knn" | "oracle"
    );
    let checkpoint = if needs_model {
        Some(require_checkpoint(&cfg)?)
    } else {
        None
    };
    let params = checkpoint.as_ref().map(|c| &c.params);

    // Unseen filtering consumes every source log's user/item ids.
    if cfg.sources.is_empty() {
        return Err(Error::Config(
            "zero-shot evaluation needs source domains for the unseen split".into(),
        ));
    }
    let mut source_logs = Vec::new();
    for p in &cfg.sources {
        // Interaction files may hold several domains; only the configured
        // source domain's events count as "seen".
        let log = load_interactions(&p.interactions, p.format)?;
        source_logs.push(log.restrict_to_domain(&p.domain_id));
    }
    let log_refs: Vec<&prerec::corpus::InteractionLog> = source_logs.iter().collect();
    let seen: SeenIds = seen_ids(&log_refs);

    let mut reports = Vec::new();
    {
        let mut ranker = build_ranker(&cfg, params, &target)?;
        reports.push(evaluate(
            ranker.as_mut(),
            &target,
            TestMode::All,
            &cfg.metric,
            None,
        )?);
    }
    {
        let mut ranker = build_ranker(&cfg, params, &target)?;
        match evaluate(
            ranker.as_mut(),
            &target,
            TestMode::Unseen,
            &cfg.metric,
            Some(&seen),
        ) {
            Ok(r) => reports.push(r),
            Err(Error::Data(msg)) => {
                eprintln!("unseen split is empty, skipping: {msg}")
            }
            Err(e) => return Err(e),
        }
    }
    stamp(&mut reports, &cfg.fingerprint());
    write_reports_json(&reports, &dir.join("reports.json"))?;
    write_reports_csv(&reports, "zero-shot", &dir.join("reports.csv"))?;
    if export_counts {
        let target_paths = cfg.target.as_ref().expect("target checked above");
        let log = load_interactions(&target_paths.interactions, target_paths.format)?
            .restrict_to_domain(&target_paths.domain_id);
        let catalog = load_catalog(&target_paths.catalog)?;
        let counts = prerec::popularity::count_intervals(&log, &catalog, cfg.interval_secs())?;
        let counts_path = dir.join("counts.csv");
        prerec::popularity::export_counts_csv(&counts, &catalog, &counts_path)?;
        println!("counts: {}", counts_path.display());
    }
    for r in &reports {
        println!(
            "{} {} [{}]: Recall@K% {:.5}  r-NDCG@K% {:.5}  ({} events)",
            r.model, r.dataset, r.test_type, r.recall, r.r_ndcg, r.events
        );
    }
    println!("reports: {}", dir.join("reports.json").display());
    Ok(())
}

fn cmd_finetune(args: CommonArgs) -> Result<()> {
    let cfg = load_config(&args)?;
    let dir = run_dir(&cfg)?;
    let target = load_target(&cfg)?;
    let mut outcome = if cfg.checkpoint.is_some() {
        let base = require_checkpoint(&cfg)?;
        finetune(&base, &target, &cfg.train)?
    } else {
        // No checkpoint: train the configured variant from scratch on the
        // target domain (the in-domain baselines).
        let model_cfg = model_config_for_kind(&cfg.model, &cfg.model_kind)?;
        pretrain(&[&target], model_cfg, &cfg.train)?
    };
    outcome.checkpoint.fingerprint = cfg.fingerprint();
    let ckpt_path = dir.join("checkpoint.ckpt");
    outcome.checkpoint.save(&ckpt_path)?;
    write_train_log(&outcome, &dir.join("train_log.jsonl"), &cfg.fingerprint())?;
    let label = format!("{}_finetuned", cfg.model_kind);
    let mut ranker = ModelRanker::in_domain(&outcome.checkpoint.params, &target, &label)?;
    let mut reports = vec![evaluate(
        &mut ranker,
        &target,
        TestMode::All,
        &cfg.metric,
        None,
    )?];
    stamp(&mut reports, &cfg.fingerprint());
    write_reports_json(&reports, &dir.join("reports.json"))?;
    write_reports_csv(&reports, "fine-tune", &dir.join("reports.csv"))?;
    println!(
        "fine-tuned {} on {}: test Recall@K% {:.5}  r-NDCG@K% {:.5}",
        cfg.model_kind, target.dataset.domain_id, reports[0].recall, reports[0].r_ndcg
    );
    println!("checkpoint: {}", ckpt_path.display());
    Ok(())
}

fn cmd_incremental(args: IncrementalArgs) -> Result<()> {
    let cfg = load_config(&args.common)?;
    let dir = run_dir(&cfg)?;
    let target = load_target(&cfg)?;
    let base = require_checkpoint(&cfg)?;
    let sizes: Vec<usize> = match &args.sizes {
        Some(s) => s
            .split(',')
            .map(|x| {
                x.trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("bad size {x}")))
            })
            .collect::<Result<_>>()?,
        None if !cfg.incremental_sizes.is_empty() => cfg.incremental_sizes.clone(),
        None => vec![0, 100, 1000],
    };
    let curve = incremental_schedule(&base, &target, &sizes, &cfg.train)?;
    let mut reports: Vec<EvalReport> = curve
        .iter()
        .map(|(size, r)| {
            let mut r = r.clone();
            r.model = format!("{}_n{size}", cfg.model_kind);
            r
        })
        .collect();
    stamp(&mut reports, &cfg.fingerprint());
    write_reports_json(&reports, &dir.join("reports.json"))?;
    write_reports_csv(&reports, "incremental", &dir.join("reports.csv"))?;
    for (size, r) in &curve {
        println!(
            "size {size}: Recall@K% {:.5}  r-NDCG@K% {:.5}",
            r.recall, r.r_ndcg
        );
    }
    println!("reports: {}", dir.join("reports.json").display());
    Ok(())
}

fn cmd_synthgen(args: SynthArgs) -> Result<()> {
    let cfg = load_config(&args.common)?;
    let dir = match &args.out {
        Some(d) => {
            std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
            d.clone()
        }
        None => run_dir(&cfg)?,
    };
    let synth = cfg.synth.clone().unwrap_or_default();
    let artifacts = write_synthetic_artifacts(&dir, &synth, cfg.seed)?;
    // A ready-to-run experiment config: every domain but the last is a
    // source, the last is the zero-shot / fine-tuning target.
    let mut exp = cfg.clone();
    exp.sources.clear();
    for k in 0..synth.domains {
        let paths = DomainPaths {
            domain_id: format!("syn{k}"),
            interactions: artifacts.interactions.clone(),
            format: prerec::corpus::load::LogFormat::Csv,
            catalog: artifacts.catalog.clone(),
            embeddings: artifacts.embedding_manifest.clone(),
        };
        if k + 1 == synth.domains {
            exp.target = Some(paths);
        } else {
            exp.sources.push(paths);
        }
    }
    exp.synth = Some(synth.clone());
    let exp_path = dir.join("experiment.json");
    exp.save(&exp_path)?;
    println!("interactions: {}", artifacts.interactions.display());
    println!("catalog: {}", artifacts.catalog.display());
    println!("embeddings: {}", artifacts.embedding_manifest.display());
    println!("ground truth: {}", artifacts.ground_truth.display());
    println!("experiment config: {}", exp_path.display());
    Ok(())
}

fn cmd_embed(args: CommonArgs) -> Result<()> {
    let cfg = load_config(&args)?;
    let encoder_cfg = cfg
        .encoder
        .clone()
        .ok_or_else(|| Error::Config("embed needs an `encoder` section in the config".into()))?;
    let client = EncoderClient::new(encoder_cfg);
    let mut all_domains: Vec<&DomainPaths> = cfg.sources.iter().collect();
    if let Some(t) = &cfg.target {
        all_domains.push(t);
    }
    if all_domains.is_empty() {
        return Err(Error::Config("config lists no domains to embed".into()));
    }
    for paths in all_domains {
        let catalog = load_catalog(&paths.catalog)?;
        let mut ids = Vec::new();
        let mut texts = Vec::new();
        for r in catalog.records() {
            let text = r.text.as_ref().ok_or_else(|| {
                Error::Data(format!(
                    "item {} in domain {} has no text to encode",
                    r.item_id, paths.domain_id
                ))
            })?;
            ids.push(r.item_id.clone());
            texts.push(text.clone());
        }
        let vectors = client.encode(&texts)?;
        let pairs: Vec<(String, Vec<f32>)> = ids.into_iter().zip(vectors).collect();
        let table = table_from_vectors(&pairs)?;
        if let Some(parent) = paths.embeddings.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let stem = paths
            .embeddings
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("embeddings")
            .to_string();
        table.save(&paths.embeddings, &format!("{stem}.bin"))?;
        println!(
            "encoded {} items for domain {} -> {} (dim {}; {} network calls so far)",
            table.len(),
            paths.domain_id,
            paths.embeddings.display(),
            table.dim(),
            client.network_calls()
        );
    }
    Ok(())
}

fn cmd_score(args: ScoreArgs) -> Result<()> {
    let cfg = load_config(&args.common)?;
    let dir = run_dir(&cfg)?;
    let target = load_target(&cfg)?;
    let checkpoint = require_checkpoint(&cfg)?;
    let mut scorer = match args.mode.as_str() {
        "zero_shot" => {
            ModelScorer::zero_shot(&checkpoint.params, &target.dataset, &target.counts)?
        }
        "in_domain" => {
            ModelScorer::in_domain(&checkpoint.params, &target.dataset, &target.counts)?
        }
        other => return Err(Error::Config(format!("unknown scoring mode {other}"))),
    };
    let file = std::fs::File::open(&args.requests).map_err(|e| Error::io(&args.requests, e))?;
    let out_path = args.out.unwrap_or_else(|| dir.join("rankings.jsonl"));
    let mut out = std::fs::File::create(&out_path).map_err(|e| Error::io(&out_path, e))?;
    for (lineno, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&args.requests, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let request: RankingRequest = serde_json::from_str(&line).map_err(|e| Error::Ingest {
            path: args.requests.clone(),
            row: lineno + 1,
            message: e.to_string(),
        })?;
        let (history, skipped) = resolve_history(&target.dataset, &request.history);
        if skipped > 0 {
            eprintln!(
                "request {}: skipped {skipped} unknown history item(s)",
                lineno + 1
            );
        }
        let probs = scorer.probabilities(&history, request.time)?;
        let k = request.k_pct.unwrap_or(cfg.metric.k_pct);
        let ranked = rank_topk(&target.dataset.items, &probs, k)?;
        let record = serde_json::json!({
            "user_id": request.user_id,
            "ranked": ranked.items,
            "scores": ranked.scores,
        });
        writeln!(out, "{record}").map_err(|e| Error::io(&out_path, e))?;
    }
    println!("rankings: {}", out_path.display());
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    if args.reports.is_empty() {
        return Err(Error::Config("report needs at least one input file".into()));
    }
    let merged = merge_reports(&args.reports)?;
    write_reports_csv(&merged, &args.scenario, &args.out)?;
    let json_out = args.out.with_extension("json");
    write_reports_json(&merged, &json_out)?;
    println!(
        "merged {} report rows into {}",
        merged.len(),
        args.out.display()
    );
    Ok(())
}
