//! `forge`: build stylized vision-language datasets and measure their domain gaps.

mod config;
mod error;
mod report;

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use forge_core::dataset::{
    compute_stats, read_manifest, read_sources, render_stats, split_by_ratio, SourceSet, StatsFormat,
};
use forge_core::mmd::{gap_matrix, read_embeddings_dir, render_gap_matrix, Bandwidth, Estimator, KernelSpec, Modality};
use forge_core::promptkit::TemplateSet;
use forge_core::provider::http::{HttpBackend, HttpConfig};
use forge_core::provider::replay::{replay_load, replay_record, Recorder};
use forge_core::provider::{Backend, Provider};
use forge_core::runs::{
    annotate_run, assemble, audit_run, read_omitted, run_status, stylize_run, RunOptions, RunSummary,
};
use forge_core::stylize::SessionMode;
use forge_core::{Style, Task};

use config::{FileConfig, Overrides};
use error::{CliError, Kind};
use report::RunReport;

/// Exit code when a run stopped before every unit was attempted.
const EXIT_INTERRUPTED: i32 = 130;

#[derive(Parser)]
#[command(name = "forge", version, about = "Stylize vision-language datasets and measure domain gaps")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, env = "FORGE_CONFIG")]
    config: Option<PathBuf>,

    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate and verify stylized images for a source manifest.
    Stylize(StylizeArgs),
    /// Verify, re-annotate and paraphrase labels for the stylized images.
    Annotate(AnnotateArgs),
    /// Write the dataset layout from a finished run.
    Assemble(AssembleArgs),
    /// Check a run's annotation transcripts against the branch rules.
    Audit(RunDirArgs),
    /// Progress of a run directory.
    Status(StatusArgs),
    /// Per-style, per-split counts of a dataset.
    Stats(StatsArgs),
    /// Domain-gap matrix from embedding files.
    Mmd(MmdArgs),
    /// Check a source manifest or a dataset directory.
    Validate(ValidateArgs),
    /// Reassign train/valid/test splits of a source manifest by ratio.
    Split(SplitArgs),
}

#[derive(Args)]
struct ProviderArgs {
    /// Answer every call from a recorded session file; no network.
    #[arg(long, conflicts_with = "record")]
    replay: Option<PathBuf>,

    /// Call the live service and save every exchange to this session file.
    #[arg(long)]
    record: Option<PathBuf>,

    #[arg(long, env = "FORGE_CHAT_MODEL")]
    chat_model: Option<String>,

    #[arg(long, env = "FORGE_IMAGE_MODEL")]
    image_model: Option<String>,

    #[arg(long, env = "FORGE_CHAT_BASE_URL")]
    chat_base_url: Option<String>,

    #[arg(long, env = "FORGE_IMAGE_BASE_URL")]
    image_base_url: Option<String>,

    /// Directory of template overrides (`id.toml`, `si.toml`, ...).
    #[arg(long, env = "FORGE_TEMPLATES")]
    templates: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Source manifest (JSONL).
    #[arg(long)]
    manifest: PathBuf,

    /// Run directory; rerunning with the same one resumes.
    #[arg(long)]
    out: PathBuf,

    /// Failures tolerated per unit before it is omitted.
    #[arg(long, env = "FORGE_PATIENCE")]
    patience: Option<u32>,

    /// Worker threads.
    #[arg(long, env = "FORGE_JOBS")]
    jobs: Option<usize>,

    /// Stop after starting this many units (for testing resumption).
    #[arg(long, hide = true)]
    stop_after: Option<usize>,

    #[command(flatten)]
    provider: ProviderArgs,
}

#[derive(Args)]
struct StylizeArgs {
    #[command(flatten)]
    run: RunArgs,

    /// Target styles, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "cartoon,pencil,oil")]
    styles: Vec<Style>,

    /// Whether image verification sees the whole conversation.
    #[arg(long, env = "FORGE_SESSION_MODE", value_parser = parse_session_mode)]
    session_mode: Option<SessionMode>,
}

#[derive(Args)]
struct AnnotateArgs {
    #[command(flatten)]
    run: RunArgs,

    /// Captions expected per caption record.
    #[arg(long, env = "FORGE_CAPTION_COUNT")]
    caption_count: Option<usize>,
}

#[derive(Args)]
struct AssembleArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Run directory with finished stylize and annotate phases.
    #[arg(long)]
    out: PathBuf,
    /// Dataset root to write into.
    #[arg(long)]
    dest: PathBuf,
}

#[derive(Args)]
struct RunDirArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StatusArgs {
    /// Run directory.
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Args)]
struct StatsArgs {
    /// Dataset root.
    root: PathBuf,
    /// Task to count; all tasks present when omitted.
    #[arg(long)]
    task: Option<Task>,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelArg {
    Rbf,
    Linear,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Biased,
    Unbiased,
}

#[derive(Args)]
struct MmdArgs {
    /// Directory of visual `.vldg` files, one per domain.
    #[arg(long)]
    visual: PathBuf,
    /// Directory of linguistic `.vldg` files, one per domain.
    #[arg(long)]
    linguistic: PathBuf,
    #[arg(long, value_enum, default_value = "rbf")]
    kernel: KernelArg,
    /// RBF bandwidth: a positive number or `median`.
    #[arg(long, default_value = "median")]
    bandwidth: String,
    #[arg(long, value_enum, default_value = "biased")]
    estimator: EstimatorArg,
    /// Seed for subsampling in the median heuristic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the matrix as JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    /// A source manifest file or a dataset root directory.
    path: PathBuf,
}

#[derive(Args)]
struct SplitArgs {
    /// Source manifest to re-split.
    manifest: PathBuf,
    /// Train, valid and test weights.
    #[arg(long, value_delimiter = ',', default_values_t = [8.0, 1.0, 1.0])]
    ratios: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output manifest.
    #[arg(long)]
    out: PathBuf,
}

fn parse_session_mode(s: &str) -> Result<SessionMode, String> {
    match s {
        "persistent" => Ok(SessionMode::Persistent),
        "fresh" => Ok(SessionMode::Fresh),
        other => Err(format!("unknown session mode `{other}` (expected persistent or fresh)")),
    }
}

fn main() {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp_secs()
        .init();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("forge: {e}");
            e.kind.exit_code()
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let file = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Stylize(a) => {
            let o = overrides(&a.run, Some(a.session_mode), None);
            let cfg = file.apply(&o)?;
            if a.styles.iter().any(|s| !s.is_target()) {
                return Err(CliError::config("real photos are not a stylization target"));
            }
            pipeline(&cfg, &a.run, "stylize", |p, t, sources, opts| {
                stylize_run(p, t, &cfg.stylize(), sources, &a.styles, &a.run.out, opts)
            })
        }
        Command::Annotate(a) => {
            let o = overrides(&a.run, None, a.caption_count);
            let cfg = file.apply(&o)?;
            pipeline(&cfg, &a.run, "annotate", |p, t, sources, opts| {
                annotate_run(p, t, &cfg.annotate(), sources, &a.run.out, opts)
            })
        }
        Command::Assemble(a) => {
            let report = RunReport::start("assemble", &file, &a.manifest);
            let sources = load_sources(&a.manifest)?;
            let m = assemble(&sources, &a.out, &a.dest)?;
            let omitted: usize = m.provenance.omitted_items.values().sum();
            println!(
                "assembled {} records for {} into {} ({omitted} omitted)",
                m.records.len(),
                m.task,
                a.dest.display()
            );
            let summary = RunSummary {
                total_units: m.records.len(),
                produced: m.records.len(),
                omitted,
                dropped_pairs: m.provenance.dropped_pairs.values().sum(),
                ..RunSummary::default()
            };
            report
                .finish(&summary, None, omitted)
                .write(&a.dest.join(m.task.as_str()).join("run.json"))?;
            Ok(0)
        }
        Command::Audit(a) => {
            let sources = load_sources(&a.manifest)?;
            let (units, violations) = audit_run(&sources, &a.out)?;
            for v in &violations {
                println!("{}", serde_json::to_string(v).expect("violations serialize"));
            }
            println!("audited {units} units: {} violation(s)", violations.len());
            if violations.is_empty() {
                Ok(0)
            } else {
                Err(CliError::validation(format!("{} branch rule violation(s)", violations.len())))
            }
        }
        Command::Status(a) => {
            let s = run_status(&a.out)?;
            println!("{}", serde_json::to_string_pretty(&s).expect("status serializes"));
            Ok(0)
        }
        Command::Stats(a) => stats(&a),
        Command::Mmd(a) => mmd(&a),
        Command::Validate(a) => validate(&a.path),
        Command::Split(a) => split(&a),
    }
}

fn overrides(run: &RunArgs, session_mode: Option<Option<SessionMode>>, caption_count: Option<usize>) -> Overrides {
    Overrides {
        patience: run.patience,
        caption_count,
        jobs: run.jobs,
        session_mode: session_mode.flatten(),
        chat_model: run.provider.chat_model.clone(),
        image_model: run.provider.image_model.clone(),
        chat_base_url: run.provider.chat_base_url.clone(),
        image_base_url: run.provider.image_base_url.clone(),
        templates_dir: run.provider.templates.clone(),
    }
}

fn load_sources(path: &Path) -> Result<SourceSet, CliError> {
    if !path.is_file() {
        return Err(CliError::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "no such file")));
    }
    let sources = read_sources(path)?;
    let missing = sources.missing_images();
    if let Some(first) = missing.first() {
        return Err(CliError::validation(format!(
            "{}: {} image(s) missing, first `{}` ({})",
            path.display(),
            missing.len(),
            first.id,
            sources.image_path(first).display()
        )));
    }
    Ok(sources)
}

enum Session {
    None,
    Recording(Arc<Recorder<HttpBackend>>),
}

fn backend(cfg: &FileConfig, args: &ProviderArgs) -> Result<(Arc<dyn Backend>, Session), CliError> {
    if let Some(path) = &args.replay {
        if !path.is_file() {
            return Err(CliError::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "no such session file")));
        }
        return Ok((Arc::new(replay_load(path)?), Session::None));
    }
    let key_var = &cfg.provider.api_key_env;
    let api_key = std::env::var(key_var)
        .ok()
        .filter(|k| !k.trim().is_empty())
        .ok_or_else(|| CliError::config(format!("no API key: set {key_var} or use --replay")))?;
    let http = HttpBackend::new(HttpConfig {
        chat_base_url: cfg.provider.chat_base_url.clone(),
        image_base_url: cfg.provider.image_base_url.clone(),
        api_key: Some(api_key),
        timeout: cfg.timeout(),
    })?;
    match &args.record {
        Some(path) => {
            let rec = Arc::new(replay_record(path, http)?);
            Ok((rec.clone(), Session::Recording(rec)))
        }
        None => Ok((Arc::new(http), Session::None)),
    }
}

fn templates(cfg: &FileConfig) -> Result<TemplateSet, CliError> {
    match &cfg.pipeline.templates_dir {
        Some(dir) => TemplateSet::load_dir(dir).map_err(|e| CliError::config(format!("{}: {e}", dir.display()))),
        None => Ok(TemplateSet::builtin()),
    }
}

fn stop_flag() -> Arc<AtomicBool> {
    let stop = Arc::new(AtomicBool::new(false));
    let s = stop.clone();
    if let Err(e) = ctrlc::set_handler(move || {
        if s.swap(true, Ordering::SeqCst) {
            std::process::exit(EXIT_INTERRUPTED);
        }
        eprintln!("forge: stopping after the units in flight (press again to abort)");
    }) {
        log::warn!("cannot install the interrupt handler: {e}");
    }
    stop
}

/// Shared driver of the two provider-backed phases.
fn pipeline<F>(cfg: &FileConfig, args: &RunArgs, phase: &str, work: F) -> Result<i32, CliError>
where
    F: FnOnce(&Provider, &TemplateSet, &SourceSet, &RunOptions) -> Result<RunSummary, forge_core::runs::RunError>,
{
    let report = RunReport::start(phase, cfg, &args.manifest);
    let sources = load_sources(&args.manifest)?;
    let templates = templates(cfg)?;
    let (backend, session) = backend(cfg, &args.provider)?;
    let live = backend.is_live();
    let provider = Provider::new(backend)
        .with_retry(cfg.retry())
        .with_pricing(cfg.provider.pricing);
    let opts = RunOptions {
        jobs: cfg.pipeline.jobs,
        stop_after: args.stop_after,
        stop: stop_flag(),
    };
    log::info!(
        "{phase}: {} items from {} ({})",
        sources.items.len(),
        args.manifest.display(),
        if live { "live" } else { "replay" }
    );
    let result = work(&provider, &templates, &sources, &opts);
    if let Session::Recording(rec) = &session {
        rec.save()?;
    }
    let summary = result?;
    let omissions = read_omitted(&args.out)?.len();
    report
        .finish(&summary, Some(&provider), omissions)
        .write(&args.out.join("run.json"))?;
    println!(
        "{phase}: {} done, {} omitted, {} pairs dropped, {} already done, {} failed; cost ${:.4}, live calls {}",
        summary.produced,
        summary.omitted,
        summary.dropped_pairs,
        summary.already_done,
        summary.failures.len(),
        provider.ledger().total(),
        provider.live_calls()
    );
    if !summary.failures.is_empty() {
        for f in &summary.failures {
            eprintln!("forge: {} [{}]: {}", f.source_id, f.style, f.error);
        }
        return Err(CliError::new(
            Kind::Provider,
            anyhow::anyhow!("{} unit(s) failed and stay pending; rerun to retry", summary.failures.len()),
        ));
    }
    if summary.interrupted {
        eprintln!("forge: {phase} interrupted with {} unit(s) pending; rerun to resume", summary.pending());
        return Ok(EXIT_INTERRUPTED);
    }
    Ok(0)
}

fn dataset_tasks(root: &Path) -> Vec<Task> {
    Task::ALL
        .into_iter()
        .filter(|t| root.join(t.as_str()).join("provenance.json").is_file())
        .collect()
}

fn stats(a: &StatsArgs) -> Result<i32, CliError> {
    let tasks = match a.task {
        Some(t) => vec![t],
        None => dataset_tasks(&a.root),
    };
    if tasks.is_empty() {
        return Err(CliError::validation(format!("{}: no dataset found", a.root.display())));
    }
    let format = match a.format {
        Format::Text => StatsFormat::Text,
        Format::Json => StatsFormat::Json,
        Format::Csv => StatsFormat::Csv,
    };
    let mut out = std::io::stdout().lock();
    for (i, task) in tasks.iter().enumerate() {
        let m = read_manifest(&a.root, *task)?;
        let text = render_stats(&compute_stats(&m), format);
        if i > 0 && format == StatsFormat::Text {
            let _ = writeln!(out);
        }
        let _ = out.write_all(text.as_bytes());
    }
    Ok(0)
}

fn mmd(a: &MmdArgs) -> Result<i32, CliError> {
    let kernel = match a.kernel {
        KernelArg::Linear => KernelSpec::Linear,
        KernelArg::Rbf => KernelSpec::Rbf {
            bandwidth: match a.bandwidth.as_str() {
                "median" => Bandwidth::Median,
                s => Bandwidth::Fixed {
                    sigma: s
                        .parse()
                        .ok()
                        .filter(|x: &f64| *x > 0.0 && x.is_finite())
                        .ok_or_else(|| CliError::config(format!("bad bandwidth `{s}`")))?,
                },
            },
        },
    };
    let estimator = match a.estimator {
        EstimatorArg::Biased => Estimator::Biased,
        EstimatorArg::Unbiased => Estimator::Unbiased,
    };
    let mut sets = Vec::new();
    for (dir, modality) in [(&a.visual, Modality::Visual), (&a.linguistic, Modality::Linguistic)] {
        for s in read_embeddings_dir(dir)? {
            if s.modality != modality {
                return Err(CliError::validation(format!(
                    "{}: holds {} embeddings for {}",
                    dir.display(),
                    s.modality,
                    s.domain
                )));
            }
            sets.push(s);
        }
    }
    let g = gap_matrix(&sets, kernel, estimator, a.seed)?;
    print!("{}", render_gap_matrix(&g));
    if let Some(out) = &a.out {
        let mut text = serde_json::to_string_pretty(&g).expect("gap matrix serializes");
        text.push('\n');
        std::fs::write(out, text).map_err(|e| CliError::io(out, e))?;
    }
    Ok(0)
}

fn validate(path: &Path) -> Result<i32, CliError> {
    if path.is_dir() {
        let tasks = dataset_tasks(path);
        if tasks.is_empty() {
            return Err(CliError::validation(format!("{}: no provenance.json under any task directory", path.display())));
        }
        for task in tasks {
            let m = read_manifest(path, task)?;
            println!("ok: {task}: {} records", m.records.len());
        }
    } else {
        let s = load_sources(path)?;
        println!("ok: {}: {} {} records", path.display(), s.items.len(), s.task);
    }
    Ok(0)
}

fn split(a: &SplitArgs) -> Result<i32, CliError> {
    let sources = load_sources(&a.manifest)?;
    let ids: Vec<String> = sources.items.iter().map(|i| i.id.clone()).collect();
    let sum: f64 = a.ratios.iter().sum();
    if a.ratios.len() != 3 || a.ratios.iter().any(|r| !r.is_finite() || *r < 0.0) || sum <= 0.0 {
        return Err(CliError::config(format!("bad split ratios {:?}", a.ratios)));
    }
    let ratios = [a.ratios[0] / sum, a.ratios[1] / sum, a.ratios[2] / sum];
    let assignment = split_by_ratio(&ids, ratios, a.seed).map_err(CliError::config)?;
    let mut text = String::new();
    for item in &sources.items {
        let mut item = item.clone();
        item.split = assignment[&item.id];
        text.push_str(&serde_json::to_string(&item).expect("source items serialize"));
        text.push('\n');
    }
    std::fs::write(&a.out, text).map_err(|e| CliError::io(&a.out, e))?;
    let count = |s| assignment.values().filter(|v| **v == s).count();
    println!(
        "train {} / valid {} / test {}",
        count(forge_core::Split::Train),
        count(forge_core::Split::Valid),
        count(forge_core::Split::Test)
    );
    Ok(0)
}
