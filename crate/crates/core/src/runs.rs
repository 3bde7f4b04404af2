//! Resumable runs over a whole source manifest.
//!
//! A run directory holds one task. Each phase keeps line-oriented journals:
//!
//! ```text
//! stylize.settings.json        configuration the phase was started with
//! stylized.jsonl               one line per stylized (item, style)
//! stylize.omitted.jsonl        one line per omitted (item, style)
//! stylize.transcript.jsonl     every provider call, tagged with its unit
//! {style}/{split}/{id}.png     stylized images
//! annotate.settings.json
//! annotated.jsonl              one record per annotated (item, style)
//! annotate.omitted.jsonl       dropped pairs and omitted records
//! annotate.transcript.jsonl
//! omitted.jsonl                both omission journals, tagged with their phase
//! ```
//!
//! A unit's transcript and dropped pairs are appended before its result
//! line, and the result line is what marks the unit done. Reopening a run
//! cuts off a half-written trailing line and discards the side entries of
//! units without a result, so an interrupted run picks up exactly the
//! unfinished units. Journals are rewritten sorted at the end of every run,
//! which makes a resumed run byte-identical to an uninterrupted one.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::annotate::{audit, AnnotateConfig, AnnotateOutcome, Annotator, AuditViolation, PairExchange};
use crate::dataset::{
    write_manifest, AnnotatedRecord, Manifest, Payload, Provenance, RecordError, SourceItem, SourceSet,
    SCHEMA_VERSION,
};
use crate::exchange::{Exchange, OmitReason, Omitted};
use crate::fsutil::write_atomic;
use crate::promptkit::{TemplateSet, VerificationVerdict};
use crate::provider::{ImageAttachment, Provider, ProviderError};
use crate::stylize::{StylizeConfig, StylizeOutcome, Stylizer};
use crate::{Split, Style, Task};

pub const STYLIZED: &str = "stylized.jsonl";
pub const ANNOTATED: &str = "annotated.jsonl";

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error("{file}: run was started with different settings ({fields})")]
    SettingsChanged { file: PathBuf, fields: String },
    #[error("{file}:{line}: {message}")]
    Journal { file: PathBuf, line: usize, message: String },
    #[error("run is incomplete: {0}")]
    Incomplete(String),
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Configuration a phase was started with; a resumed run must match it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSettings<C> {
    pub task: Task,
    pub styles: Vec<Style>,
    pub source_sha256: String,
    pub template_versions: BTreeMap<String, u32>,
    pub config: C,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StylizedRecord {
    pub source_id: String,
    pub style: Style,
    pub split: Split,
    /// Relative to the run directory.
    pub image_ref: String,
    pub p_ori: String,
    pub p_sty: String,
    pub attempts: u32,
    pub verdict_log: Vec<VerificationVerdict>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OmissionLine {
    pub source_id: String,
    pub style: Style,
    /// Set for a single dropped pair of a record that may still be emitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair: Option<usize>,
    pub reason: OmitReason,
    pub failures: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptLine {
    pub source_id: String,
    pub style: Style,
    pub seq: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair: Option<usize>,
    #[serde(flatten)]
    pub exchange: Exchange,
}

/// A line of the combined `omitted.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseOmission {
    pub phase: String,
    #[serde(flatten)]
    pub line: OmissionLine,
}

type UnitKey = (String, Style);

trait Line: Serialize + DeserializeOwned {
    fn key(&self) -> UnitKey;
    /// Position within the unit, for sorting.
    fn rank(&self) -> (usize, usize) {
        (0, 0)
    }
}

impl Line for StylizedRecord {
    fn key(&self) -> UnitKey {
        (self.source_id.clone(), self.style)
    }
}

impl Line for AnnotatedRecord {
    fn key(&self) -> UnitKey {
        (self.source_id.clone(), self.style)
    }
}

impl Line for OmissionLine {
    fn key(&self) -> UnitKey {
        (self.source_id.clone(), self.style)
    }
    fn rank(&self) -> (usize, usize) {
        match self.pair {
            Some(p) => (0, p),
            None => (1, 0),
        }
    }
}

impl Line for TranscriptLine {
    fn key(&self) -> UnitKey {
        (self.source_id.clone(), self.style)
    }
    fn rank(&self) -> (usize, usize) {
        (self.seq, 0)
    }
}

/// Complete lines of a journal; a trailing line without newline is dropped.
fn complete_lines(path: &Path) -> Result<Vec<String>, RunError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io(path)(e)),
    };
    let mut lines: Vec<String> = text.split_inclusive('\n').map(str::to_string).collect();
    if lines.last().is_some_and(|l| !l.ends_with('\n')) {
        log::warn!("{}: discarding a partial trailing line", path.display());
        lines.pop();
    }
    Ok(lines.into_iter().map(|l| l.trim_end_matches('\n').to_string()).filter(|l| !l.is_empty()).collect())
}

fn read_journal<T: Line>(path: &Path) -> Result<Vec<T>, RunError> {
    complete_lines(path)?
        .iter()
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| RunError::Journal {
                file: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

fn write_journal<T: Line>(path: &Path, items: &[T]) -> Result<(), RunError> {
    write_atomic(path, crate::fsutil::jsonl(items).as_bytes()).map_err(io(path))
}

/// Sorts by unit and position and drops exact repeats of a (unit, position).
fn canonical<T: Line>(mut items: Vec<T>) -> Vec<T> {
    items.sort_by_cached_key(|t| (t.key(), t.rank()));
    let mut seen = HashSet::new();
    items.retain(|t| seen.insert((t.key(), t.rank())));
    items
}

/// Journals of one phase.
struct Journal {
    results: PathBuf,
    omitted: PathBuf,
    transcript: PathBuf,
}

struct Appender {
    results: File,
    omitted: File,
    transcript: File,
}

fn append(path: &Path) -> Result<File, RunError> {
    OpenOptions::new().create(true).append(true).open(path).map_err(io(path))
}

fn write_line<T: Serialize>(f: &mut File, v: &T) -> std::io::Result<()> {
    let mut s = serde_json::to_string(v).expect("journal lines serialize");
    s.push('\n');
    f.write_all(s.as_bytes())?;
    f.flush()
}

impl Journal {
    fn new(dir: &Path, phase: &str, results: &str) -> Self {
        Self {
            results: dir.join(results),
            omitted: dir.join(format!("{phase}.omitted.jsonl")),
            transcript: dir.join(format!("{phase}.transcript.jsonl")),
        }
    }

    /// Recovers the journals after an interruption and returns the units
    /// that are done.
    fn reopen<R: Line>(&self) -> Result<BTreeSet<UnitKey>, RunError> {
        let results: Vec<R> = read_journal(&self.results)?;
        let omitted: Vec<OmissionLine> = read_journal(&self.omitted)?;
        let transcript: Vec<TranscriptLine> = read_journal(&self.transcript)?;
        let done: BTreeSet<UnitKey> = results
            .iter()
            .map(Line::key)
            .chain(omitted.iter().filter(|o| o.pair.is_none()).map(Line::key))
            .collect();
        let keep = |k: &UnitKey| done.contains(k);
        write_journal(&self.results, &results)?;
        write_journal(&self.omitted, &omitted.into_iter().filter(|o| keep(&o.key())).collect::<Vec<_>>())?;
        write_journal(&self.transcript, &transcript.into_iter().filter(|t| keep(&t.key())).collect::<Vec<_>>())?;
        Ok(done)
    }

    fn appender(&self) -> Result<Appender, RunError> {
        Ok(Appender {
            results: append(&self.results)?,
            omitted: append(&self.omitted)?,
            transcript: append(&self.transcript)?,
        })
    }

    fn finalize<R: Line>(&self) -> Result<(), RunError> {
        let results: Vec<R> = read_journal(&self.results)?;
        let omitted: Vec<OmissionLine> = read_journal(&self.omitted)?;
        let transcript: Vec<TranscriptLine> = read_journal(&self.transcript)?;
        write_journal(&self.results, &canonical(results))?;
        write_journal(&self.omitted, &canonical(omitted))?;
        write_journal(&self.transcript, &canonical(transcript))
    }
}

/// What one finished unit writes, in order.
struct UnitOutput<R> {
    transcript: Vec<TranscriptLine>,
    dropped: Vec<OmissionLine>,
    result: Result<R, OmissionLine>,
}

impl Appender {
    fn commit<R: Serialize>(&mut self, out: &UnitOutput<R>) -> std::io::Result<()> {
        for t in &out.transcript {
            write_line(&mut self.transcript, t)?;
        }
        for d in &out.dropped {
            write_line(&mut self.omitted, d)?;
        }
        match &out.result {
            Ok(r) => write_line(&mut self.results, r),
            Err(o) => write_line(&mut self.omitted, o),
        }
    }
}

fn check_settings<C: Serialize + DeserializeOwned + PartialEq>(path: &Path, now: &PhaseSettings<C>) -> Result<(), RunError> {
    match fs::read_to_string(path) {
        Ok(text) => {
            let before: serde_json::Value = serde_json::from_str(&text).map_err(|e| RunError::Journal {
                file: path.to_path_buf(),
                line: 1,
                message: e.to_string(),
            })?;
            let now = serde_json::to_value(now).expect("settings serialize");
            if before == now {
                return Ok(());
            }
            let mut fields = Vec::new();
            if let (Some(a), Some(b)) = (before.as_object(), now.as_object()) {
                for (k, v) in b {
                    if a.get(k) != Some(v) {
                        match (a.get(k).and_then(|x| x.as_object()), v.as_object()) {
                            (Some(ca), Some(cb)) => fields.extend(
                                cb.iter().filter(|(kk, vv)| ca.get(*kk) != Some(vv)).map(|(kk, _)| format!("{k}.{kk}")),
                            ),
                            _ => fields.push(k.clone()),
                        }
                    }
                }
            }
            Err(RunError::SettingsChanged {
                file: path.to_path_buf(),
                fields: fields.join(", "),
            })
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            let mut text = serde_json::to_string_pretty(now).expect("settings serialize");
            text.push('\n');
            write_atomic(path, text.as_bytes()).map_err(io(path))
        }
        Err(e) => Err(io(path)(e)),
    }
}

fn read_settings<C: DeserializeOwned>(path: &Path) -> Result<PhaseSettings<C>, RunError> {
    let text = fs::read_to_string(path).map_err(io(path))?;
    serde_json::from_str(&text).map_err(|e| RunError::Journal {
        file: path.to_path_buf(),
        line: 1,
        message: e.to_string(),
    })
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; 0 is treated as 1.
    pub jobs: usize,
    /// Start at most this many units, then stop as if interrupted.
    pub stop_after: Option<usize>,
    /// Checked before each unit is started.
    pub stop: Arc<AtomicBool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UnitFailure {
    pub source_id: String,
    pub style: Style,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RunSummary {
    pub total_units: usize,
    pub already_done: usize,
    pub produced: usize,
    pub omitted: usize,
    pub dropped_pairs: usize,
    /// Units that hit an unrecoverable error; they stay pending.
    pub failures: Vec<UnitFailure>,
    pub interrupted: bool,
}

impl RunSummary {
    pub fn pending(&self) -> usize {
        self.total_units - self.already_done - self.produced - self.omitted
    }
}

/// Runs `work` over `units` on a small thread pool, committing each
/// finished unit under one lock.
fn drive<U: Sync, R: Serialize>(
    units: &[U],
    opts: &RunOptions,
    provider: &Provider,
    appender: Appender,
    key: impl Fn(&U) -> UnitKey + Sync,
    work: impl Fn(&U) -> Result<UnitOutput<R>, String> + Sync,
) -> Result<RunSummary, RunError> {
    let next = AtomicUsize::new(0);
    let started = AtomicUsize::new(0);
    let appender = Mutex::new(appender);
    let summary = Mutex::new(RunSummary::default());
    let write_error: Mutex<Option<std::io::Error>> = Mutex::new(None);
    let limit = opts.stop_after.unwrap_or(usize::MAX).min(units.len());
    let jobs = opts.jobs.max(1);
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                if opts.stop.load(Ordering::SeqCst) || write_error.lock().unwrap().is_some() {
                    return;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= limit {
                    return;
                }
                started.fetch_add(1, Ordering::SeqCst);
                let unit = &units[i];
                let (id, style) = key(unit);
                match work(unit) {
                    Ok(out) => {
                        let mut app = appender.lock().unwrap();
                        if let Err(e) = app.commit(&out) {
                            *write_error.lock().unwrap() = Some(e);
                            return;
                        }
                        drop(app);
                        let mut s = summary.lock().unwrap();
                        s.dropped_pairs += out.dropped.len();
                        match out.result {
                            Ok(_) => s.produced += 1,
                            Err(_) => s.omitted += 1,
                        }
                        log::info!(
                            "[{}/{}] {id} [{style}]: {}, cost so far ${:.4}",
                            s.produced + s.omitted,
                            units.len(),
                            if out.result.is_ok() { "done" } else { "omitted" },
                            provider.ledger().total()
                        );
                    }
                    Err(error) => {
                        log::error!("{id} [{style}]: {error}");
                        summary.lock().unwrap().failures.push(UnitFailure {
                            source_id: id,
                            style,
                            error,
                        });
                    }
                }
            });
        }
    });
    if let Some(e) = write_error.into_inner().unwrap() {
        return Err(RunError::Io {
            path: PathBuf::from("journal"),
            source: e,
        });
    }
    let mut s = summary.into_inner().unwrap();
    s.interrupted = started.load(Ordering::SeqCst) < units.len();
    s.failures.sort_by(|a, b| (&a.source_id, a.style).cmp(&(&b.source_id, b.style)));
    Ok(s)
}

fn tag_transcript(id: &str, style: Style, items: impl IntoIterator<Item = (Option<usize>, Exchange)>) -> Vec<TranscriptLine> {
    items
        .into_iter()
        .enumerate()
        .map(|(seq, (pair, exchange))| TranscriptLine {
            source_id: id.to_string(),
            style,
            seq,
            pair,
            exchange,
        })
        .collect()
}

fn omission(id: &str, style: Style, pair: Option<usize>, o: Omitted) -> OmissionLine {
    OmissionLine {
        source_id: id.to_string(),
        style,
        pair,
        reason: o.reason,
        failures: o.failures,
        last_error: o.last_error,
    }
}

fn stylized_path(style: Style, item: &SourceItem) -> String {
    format!("{}/{}/{}.png", style.as_str(), item.split.as_str(), item.id)
}

fn stylize_settings(sources: &SourceSet, styles: &[Style], templates: &TemplateSet, cfg: &StylizeConfig) -> PhaseSettings<StylizeConfig> {
    PhaseSettings {
        task: sources.task,
        styles: styles.to_vec(),
        source_sha256: sources.sha256.clone(),
        template_versions: templates.versions(),
        config: cfg.clone(),
    }
}

pub const OMITTED: &str = "omitted.jsonl";

/// Rewrites `omitted.jsonl` from the per-phase omission journals.
fn write_omitted_view(out: &Path) -> Result<(), RunError> {
    let mut all = Vec::new();
    for phase in ["stylize", "annotate"] {
        let lines: Vec<OmissionLine> = read_journal(&out.join(format!("{phase}.omitted.jsonl")))?;
        all.extend(lines.into_iter().map(|line| PhaseOmission {
            phase: phase.to_string(),
            line,
        }));
    }
    let path = out.join(OMITTED);
    write_atomic(&path, crate::fsutil::jsonl(all).as_bytes()).map_err(io(&path))
}

/// Reads the combined omission list of a run directory.
pub fn read_omitted(out: &Path) -> Result<Vec<PhaseOmission>, RunError> {
    complete_lines(&out.join(OMITTED))?
        .iter()
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| RunError::Journal {
                file: out.join(OMITTED),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Stylizes every (item, style) not yet done in `out`.
pub fn stylize_run(
    provider: &Provider,
    templates: &TemplateSet,
    cfg: &StylizeConfig,
    sources: &SourceSet,
    styles: &[Style],
    out: &Path,
    opts: &RunOptions,
) -> Result<RunSummary, RunError> {
    if let Some(s) = styles.iter().find(|s| !s.is_target()) {
        return Err(RunError::Incomplete(format!("{s} is not a stylization target")));
    }
    fs::create_dir_all(out).map_err(io(out))?;
    check_settings(&out.join("stylize.settings.json"), &stylize_settings(sources, styles, templates, cfg))?;
    let journal = Journal::new(out, "stylize", STYLIZED);
    let done = journal.reopen::<StylizedRecord>()?;
    let units: Vec<(&SourceItem, Style)> = sources
        .items
        .iter()
        .flat_map(|item| styles.iter().map(move |s| (item, *s)))
        .collect();
    let pending: Vec<_> = units.iter().filter(|(i, s)| !done.contains(&(i.id.clone(), *s))).copied().collect();
    let stylizer = Stylizer::new(provider, templates, cfg);
    let mut summary = drive(
        &pending,
        opts,
        provider,
        journal.appender()?,
        |(item, style)| (item.id.clone(), *style),
        |&(item, style)| {
            let path = sources.image_path(item);
            let bytes = fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?;
            let report = stylizer
                .stylize_item(&item.id, sources.task, style, &bytes)
                .map_err(|e: ProviderError| e.to_string())?;
            let transcript = tag_transcript(&item.id, style, report.transcript.into_iter().map(|e| (None, e)));
            let result = match report.outcome {
                StylizeOutcome::Stylized(img) => {
                    let rel = stylized_path(style, item);
                    let dest = out.join(&rel);
                    write_atomic(&dest, &img.image).map_err(|e| format!("{}: {e}", dest.display()))?;
                    Ok(StylizedRecord {
                        source_id: item.id.clone(),
                        style,
                        split: item.split,
                        image_ref: rel,
                        p_ori: img.p_ori,
                        p_sty: img.p_sty,
                        attempts: img.attempts,
                        verdict_log: img.verdict_log,
                    })
                }
                StylizeOutcome::Omitted(o) => Err(omission(&item.id, style, None, o)),
            };
            Ok(UnitOutput {
                transcript,
                dropped: Vec::new(),
                result,
            })
        },
    )?;
    journal.finalize::<StylizedRecord>()?;
    write_omitted_view(out)?;
    summary.total_units = units.len();
    summary.already_done = units.len() - pending.len();
    Ok(summary)
}

/// Annotates every stylized image in `out` that is not yet done.
pub fn annotate_run(
    provider: &Provider,
    templates: &TemplateSet,
    cfg: &AnnotateConfig,
    sources: &SourceSet,
    out: &Path,
    opts: &RunOptions,
) -> Result<RunSummary, RunError> {
    let stylize: PhaseSettings<StylizeConfig> = read_settings(&out.join("stylize.settings.json"))?;
    if stylize.source_sha256 != sources.sha256 {
        return Err(RunError::SettingsChanged {
            file: out.join("stylize.settings.json"),
            fields: "source_sha256".into(),
        });
    }
    let settings = PhaseSettings {
        task: sources.task,
        styles: stylize.styles.clone(),
        source_sha256: sources.sha256.clone(),
        template_versions: templates.versions(),
        config: cfg.clone(),
    };
    check_settings(&out.join("annotate.settings.json"), &settings)?;
    let stylized: Vec<StylizedRecord> = read_journal(&out.join(STYLIZED))?;
    let journal = Journal::new(out, "annotate", ANNOTATED);
    let done = journal.reopen::<AnnotatedRecord>()?;
    let pending: Vec<&StylizedRecord> = stylized.iter().filter(|r| !done.contains(&r.key())).collect();
    let annotator = Annotator::new(provider, templates, cfg);
    let mut summary = drive(
        &pending,
        opts,
        provider,
        journal.appender()?,
        |r| r.key(),
        |r| {
            let item = sources
                .get(&r.source_id)
                .ok_or_else(|| format!("`{}` is not in the source manifest", r.source_id))?;
            let path = out.join(&r.image_ref);
            let bytes = fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?;
            let x_sty = ImageAttachment::from_bytes(bytes).map_err(|e| format!("{}: {e}", path.display()))?;
            let report = annotator
                .annotate(r.style, &x_sty, &item.payload)
                .map_err(|e| e.to_string())?;
            let transcript = tag_transcript(
                &r.source_id,
                r.style,
                report.transcript.into_iter().map(|p| (p.pair, p.exchange)),
            );
            let dropped = report
                .dropped_pairs
                .into_iter()
                .map(|d| OmissionLine {
                    source_id: r.source_id.clone(),
                    style: r.style,
                    pair: Some(d.pair),
                    reason: OmitReason::PatienceExhausted,
                    failures: d.failures,
                    last_error: d.last_error,
                })
                .collect();
            let result = match report.outcome {
                AnnotateOutcome::Annotated(payload) => Ok(AnnotatedRecord {
                    source_id: r.source_id.clone(),
                    style: r.style,
                    split: item.split,
                    task: sources.task,
                    image_ref: r.image_ref.clone(),
                    payload,
                }),
                AnnotateOutcome::Omitted(o) => Err(omission(&r.source_id, r.style, None, o)),
            };
            Ok(UnitOutput {
                transcript,
                dropped,
                result,
            })
        },
    )?;
    journal.finalize::<AnnotatedRecord>()?;
    write_omitted_view(out)?;
    summary.total_units = stylized.len();
    summary.already_done = stylized.len() - pending.len();
    Ok(summary)
}

/// Progress of a run directory, read from its journals.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RunStatus {
    pub stylized: usize,
    pub stylize_omitted: usize,
    pub annotated: usize,
    pub annotate_omitted: usize,
    pub dropped_pairs: usize,
}

pub fn run_status(out: &Path) -> Result<RunStatus, RunError> {
    let s_om: Vec<OmissionLine> = read_journal(&out.join("stylize.omitted.jsonl"))?;
    let a_om: Vec<OmissionLine> = read_journal(&out.join("annotate.omitted.jsonl"))?;
    Ok(RunStatus {
        stylized: read_journal::<StylizedRecord>(&out.join(STYLIZED))?.len(),
        stylize_omitted: s_om.len(),
        annotated: read_journal::<AnnotatedRecord>(&out.join(ANNOTATED))?.len(),
        annotate_omitted: a_om.iter().filter(|o| o.pair.is_none()).count(),
        dropped_pairs: a_om.iter().filter(|o| o.pair.is_some()).count(),
    })
}

/// A branch-rule violation found in one unit of a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunViolation {
    pub source_id: String,
    pub style: Style,
    #[serde(flatten)]
    pub violation: AuditViolation,
}

/// Audits every finished annotation unit of a run from its journals.
/// Returns the number of units checked and the violations found.
pub fn audit_run(sources: &SourceSet, out: &Path) -> Result<(usize, Vec<RunViolation>), RunError> {
    let annotated: Vec<AnnotatedRecord> = read_journal(&out.join(ANNOTATED))?;
    let omitted: Vec<OmissionLine> = read_journal(&out.join("annotate.omitted.jsonl"))?;
    let lines: Vec<TranscriptLine> = read_journal(&out.join("annotate.transcript.jsonl"))?;

    let mut transcripts: BTreeMap<UnitKey, Vec<PairExchange>> = BTreeMap::new();
    for l in lines {
        transcripts.entry(l.key()).or_default().push(PairExchange {
            pair: l.pair,
            exchange: l.exchange,
        });
    }
    let mut dropped: BTreeMap<UnitKey, Vec<usize>> = BTreeMap::new();
    let mut finished: BTreeMap<UnitKey, Option<&Payload>> = BTreeMap::new();
    for o in &omitted {
        match o.pair {
            Some(p) => dropped.entry(o.key()).or_default().push(p),
            None => {
                finished.insert(o.key(), None);
            }
        }
    }
    for r in &annotated {
        finished.insert(r.key(), Some(&r.payload));
    }

    let mut found = Vec::new();
    for (key, payload) in &finished {
        let item = sources
            .get(&key.0)
            .ok_or_else(|| RunError::Incomplete(format!("`{}` is not in the source manifest", key.0)))?;
        let transcript = transcripts.get(key).map(Vec::as_slice).unwrap_or(&[]);
        let drops = dropped.get(key).map(Vec::as_slice).unwrap_or(&[]);
        for violation in audit(&item.payload, *payload, drops, transcript) {
            found.push(RunViolation {
                source_id: key.0.clone(),
                style: key.1,
                violation,
            });
        }
    }
    Ok((finished.len(), found))
}

fn copy(from: &Path, to: &Path) -> Result<(), RunError> {
    if let Some(p) = to.parent() {
        fs::create_dir_all(p).map_err(io(p))?;
    }
    fs::copy(from, to).map(|_| ()).map_err(io(from))
}

/// Builds the dataset layout under `dest` from a finished run: real photos
/// from the source manifest plus every annotated stylized record.
pub fn assemble(sources: &SourceSet, out: &Path, dest: &Path) -> Result<Manifest, RunError> {
    let stylize: PhaseSettings<StylizeConfig> = read_settings(&out.join("stylize.settings.json"))?;
    let annotate: PhaseSettings<AnnotateConfig> = read_settings(&out.join("annotate.settings.json"))?;
    if stylize.source_sha256 != sources.sha256 {
        return Err(RunError::SettingsChanged {
            file: out.join("stylize.settings.json"),
            fields: "source_sha256".into(),
        });
    }
    let stylized: Vec<StylizedRecord> = read_journal(&out.join(STYLIZED))?;
    let s_om: Vec<OmissionLine> = read_journal(&out.join("stylize.omitted.jsonl"))?;
    let annotated: Vec<AnnotatedRecord> = read_journal(&out.join(ANNOTATED))?;
    let a_om: Vec<OmissionLine> = read_journal(&out.join("annotate.omitted.jsonl"))?;

    let s_done: HashSet<UnitKey> = stylized.iter().map(Line::key).chain(s_om.iter().map(Line::key)).collect();
    let missing = sources.items.len() * stylize.styles.len()
        - sources
            .items
            .iter()
            .flat_map(|i| stylize.styles.iter().map(move |s| (i.id.clone(), *s)))
            .filter(|k| s_done.contains(k))
            .count();
    if missing > 0 {
        return Err(RunError::Incomplete(format!("{missing} (item, style) units are not stylized yet")));
    }
    let a_done: HashSet<UnitKey> = annotated
        .iter()
        .map(Line::key)
        .chain(a_om.iter().filter(|o| o.pair.is_none()).map(Line::key))
        .collect();
    let missing = stylized.iter().filter(|r| !a_done.contains(&r.key())).count();
    if missing > 0 {
        return Err(RunError::Incomplete(format!("{missing} stylized images are not annotated yet")));
    }

    let task = sources.task;
    let root = dest.join(task.as_str());
    let mut records = Vec::new();
    for item in &sources.items {
        let from = sources.image_path(item);
        let ext = from.extension().and_then(|e| e.to_str()).unwrap_or("png").to_ascii_lowercase();
        let image_ref = format!("images/{}.{ext}", item.id);
        copy(&from, &root.join(Style::RealPhoto.as_str()).join(&image_ref))?;
        records.push(AnnotatedRecord {
            source_id: item.id.clone(),
            style: Style::RealPhoto,
            split: item.split,
            task,
            image_ref,
            payload: Payload::from_source(&item.payload),
        });
    }
    for r in &annotated {
        let image_ref = format!("images/{}.png", r.source_id);
        copy(&out.join(&r.image_ref), &root.join(r.style.as_str()).join(&image_ref))?;
        records.push(AnnotatedRecord {
            image_ref,
            ..r.clone()
        });
    }

    let mut omitted_items = BTreeMap::new();
    let mut dropped_pairs = BTreeMap::new();
    for &style in &stylize.styles {
        let emitted = annotated.iter().filter(|r| r.style == style).count();
        omitted_items.insert(style, sources.items.len() - emitted);
        dropped_pairs.insert(style, a_om.iter().filter(|o| o.style == style && o.pair.is_some()).count());
    }
    let mut template_versions = stylize.template_versions.clone();
    template_versions.extend(annotate.template_versions.clone());
    let mut styles = vec![Style::RealPhoto];
    styles.extend(stylize.styles.iter().copied());
    let session_mode = serde_json::to_value(stylize.config.session_mode)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default();
    let manifest = Manifest {
        task,
        records,
        provenance: Provenance {
            schema_version: SCHEMA_VERSION,
            task,
            styles,
            source_sha256: sources.sha256.clone(),
            template_versions,
            chat_model: stylize.config.sampling.model_id.clone(),
            image_model: stylize.config.image_model.clone(),
            patience: stylize.config.patience,
            caption_count: annotate.config.caption_count,
            session_mode,
            omitted_items,
            dropped_pairs,
        },
    };
    write_manifest(dest, &manifest)?;
    Ok(manifest)
}
