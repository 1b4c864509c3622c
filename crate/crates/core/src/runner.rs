//! Experiment orchestration: config, the JSONL result log, resume and the
//! evaluation report.
//!
//! A run loads the corpus, optionally samples it, runs the pipeline and
//! appends one [`LogRecord`] per statement to `results.jsonl`. The
//! [`EvalReport`] is computed from the log alone (plus annotations), so a
//! resumed run and an uninterrupted one produce the same report.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{LazyLock, Mutex};

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::annotate::load_annotations;
use crate::corpus::{self, ColumnMapping, CorpusError, CorpusFormat, DatasetSpec, Label, StatementRecord};
use crate::gateway::{
    Gateway, GatewayEmbedder, GatewayStats, MockScript, Provider, ResponseCache, DEFAULT_MAX_TOKENS, DEFAULT_TEMPERATURE,
};
use crate::metrics::{
    classification_report, flesch_reading_ease, human_aggregate, understanding_scores, Annotation,
    ClassificationReport, EmbeddingProvider, HashedNgramEmbedder, MetricError, RangeBounds, ReasoningReport,
    SimilarityReport, UnderstandingItem,
};
use crate::normalize::ParseNote;
use crate::pipeline::{self, IdadpResult, ModelSettings, Pipeline, PipelineError, Strategy};
use crate::prompts::{default_knowledge, DEFAULT_THRESHOLD};

/// Version of the result log and report schemas.
pub const SCHEMA_VERSION: u32 = 1;

pub const RESULTS_FILE: &str = "results.jsonl";
pub const QUARANTINE_FILE: &str = "results.quarantine.jsonl";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const KNOWLEDGE_FILE: &str = "knowledge.json";

#[derive(Debug, thiserror::Error)]
pub enum RunnerError {
    #[error("config: {0}")]
    Config(String),
    #[error("config references unset environment variable `{0}`")]
    MissingEnv(String),
    #[error("log line {line} has schema version {found}, expected {expected}")]
    SchemaMismatch { line: usize, found: u32, expected: u32 },
    #[error("log mixes datasets or strategies: {0}")]
    MixedLog(String),
    #[error("log is empty")]
    EmptyLog,
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

fn io_err(context: impl Into<String>) -> impl FnOnce(io::Error) -> RunnerError {
    let context = context.into();
    move |source| RunnerError::Io { context, source }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KnowledgeMode {
    #[default]
    Frozen,
    Live,
}

/// Either a preset name plus a path, or a full column mapping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub name: Option<String>,
    pub path: PathBuf,
    #[serde(default)]
    pub format: Option<CorpusFormat>,
    #[serde(default)]
    pub columns: Option<ColumnMapping>,
    #[serde(default)]
    pub labels: Option<BTreeMap<String, Label>>,
}

impl DatasetConfig {
    pub fn spec(&self) -> Result<DatasetSpec, RunnerError> {
        let mut spec = match &self.preset {
            Some(p) => DatasetSpec::preset(p, &self.path)?,
            None => DatasetSpec {
                name: self
                    .name
                    .clone()
                    .ok_or_else(|| RunnerError::Config("dataset needs `preset` or `name`".into()))?,
                path: self.path.clone(),
                format: match self.format.or_else(|| CorpusFormat::from_path(&self.path)) {
                    Some(f) => f,
                    None => return Err(RunnerError::Config("dataset `format` missing".into())),
                },
                columns: self
                    .columns
                    .clone()
                    .ok_or_else(|| RunnerError::Config("dataset `columns` missing".into()))?,
                labels: self
                    .labels
                    .clone()
                    .ok_or_else(|| RunnerError::Config("dataset `labels` missing".into()))?,
            },
        };
        if self.preset.is_some() {
            if let Some(n) = &self.name {
                spec.name = n.clone();
            }
            if let Some(f) = self.format {
                spec.format = f;
            }
            if let Some(c) = &self.columns {
                spec.columns = c.clone();
            }
            if let Some(l) = &self.labels {
                spec.labels = l.clone();
            }
        }
        Ok(spec)
    }
}

/// Embedding source for the understanding evaluation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingConfig {
    /// `None` selects the local hashed n-gram embedder.
    #[serde(default)]
    pub provider: Option<Provider>,
    #[serde(default)]
    pub model: Option<String>,
}

fn default_model() -> String {
    "gpt-3.5-turbo".into()
}
fn default_parallelism() -> usize {
    1
}
fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}
fn default_max_tokens() -> u32 {
    DEFAULT_MAX_TOKENS
}
fn default_temperature() -> f64 {
    DEFAULT_TEMPERATURE
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub strategy: Strategy,
    pub provider: Provider,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default)]
    pub limit: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub stratified: bool,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub knowledge: KnowledgeMode,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    /// Defaults to `IRONYLAB_CACHE_DIR`, else `<out_dir>/cache`.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    /// Required for the mock provider.
    #[serde(default)]
    pub mock_script: Option<PathBuf>,
    #[serde(default)]
    pub annotations: Option<PathBuf>,
    #[serde(default)]
    pub embedding: EmbeddingConfig,
    #[serde(default)]
    pub bounds: Option<RangeBounds>,
}

static ENV_REF: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}").unwrap());

/// Replaces `${NAME}` with the value of environment variable `NAME`.
pub fn interpolate_env(text: &str, lookup: impl Fn(&str) -> Option<String>) -> Result<String, RunnerError> {
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for caps in ENV_REF.captures_iter(text) {
        let whole = caps.get(0).expect("match");
        let name = &caps[1];
        let value = lookup(name).ok_or_else(|| RunnerError::MissingEnv(name.to_string()))?;
        out.push_str(&text[last..whole.start()]);
        out.push_str(&value);
        last = whole.end();
    }
    out.push_str(&text[last..]);
    Ok(out)
}

impl ExperimentConfig {
    /// Parses TOML after `${VAR}` interpolation; relative paths are taken
    /// relative to `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, RunnerError> {
        let text = interpolate_env(text, |k| std::env::var(k).ok())?;
        let mut cfg: ExperimentConfig = toml::from_str(&text).map_err(|e| RunnerError::Config(e.to_string()))?;
        cfg.resolve_paths(base_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, RunnerError> {
        let text = fs::read_to_string(path).map_err(io_err(format!("reading {}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.dataset.path);
        fix(&mut self.out_dir);
        for p in [&mut self.cache_dir, &mut self.mock_script, &mut self.annotations]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), RunnerError> {
        let bad = |m: String| Err(RunnerError::Config(m));
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad(format!("threshold {} outside (0, 1)", self.threshold));
        }
        if self.parallelism == 0 {
            return bad("parallelism must be at least 1".into());
        }
        if self.limit == Some(0) {
            return bad("limit must be positive".into());
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return bad(format!("temperature {} outside [0, 2]", self.temperature));
        }
        if self.provider == Provider::Mock && self.mock_script.is_none() {
            return bad("the mock provider needs `mock_script`".into());
        }
        Ok(())
    }

    pub fn settings(&self) -> ModelSettings {
        ModelSettings {
            provider: self.provider,
            model: self.model.clone(),
            max_tokens: self.max_tokens,
            temperature: self.temperature,
        }
    }

    pub fn results_path(&self) -> PathBuf {
        self.out_dir.join(RESULTS_FILE)
    }

    fn cache(&self) -> Result<ResponseCache, RunnerError> {
        let dir = self
            .cache_dir
            .clone()
            .or_else(|| std::env::var_os("IRONYLAB_CACHE_DIR").map(PathBuf::from))
            .unwrap_or_else(|| self.out_dir.join("cache"));
        ResponseCache::dir(&dir).map_err(io_err(format!("creating cache {}", dir.display())))
    }

    /// Gateway for this config: a scripted mock or the live HTTP client,
    /// both backed by the directory cache.
    pub fn gateway(&self) -> Result<Gateway, RunnerError> {
        let cache = self.cache()?;
        Ok(match (&self.mock_script, self.provider) {
            (Some(path), _) => {
                let script = MockScript::load(path).map_err(io_err(format!("reading {}", path.display())))?;
                Gateway::mock(script).with_cache(cache)
            }
            (None, _) => Gateway::new(cache),
        })
    }
}

/// One statement's entry in the result log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub schema_version: u32,
    pub statement_id: String,
    pub dataset: String,
    pub strategy: Strategy,
    pub provider: Provider,
    pub model: String,
    pub text: String,
    pub gold: Label,
    pub intended: Option<String>,
    pub ballots: Vec<Option<Label>>,
    #[serde(rename = "final")]
    pub final_label: Label,
    pub probability: Vec<Option<f64>>,
    pub reason: Option<String>,
    pub rephrase: Option<String>,
    pub reason_from: Option<usize>,
    pub rephrase_from: Option<usize>,
    pub parse_notes: Vec<Vec<ParseNote>>,
    pub request_hashes: Vec<Option<String>>,
    pub raw: Vec<String>,
    pub errors: Vec<Option<String>>,
    /// Every prompt failed; the statement counts as an all-abstain vote and
    /// is retried on resume.
    pub failed: bool,
    pub started_at: String,
    pub finished_at: String,
}

impl LogRecord {
    fn new(
        statement: &StatementRecord,
        settings: &ModelSettings,
        strategy: Strategy,
        result: &Result<IdadpResult, PipelineError>,
        started_at: String,
    ) -> Self {
        let base = |final_label| LogRecord {
            schema_version: SCHEMA_VERSION,
            statement_id: statement.id.clone(),
            dataset: statement.source.clone(),
            strategy,
            provider: settings.provider,
            model: settings.model.clone(),
            text: statement.text.clone(),
            gold: statement.gold,
            intended: statement.intended.clone(),
            ballots: Vec::new(),
            final_label,
            probability: Vec::new(),
            reason: None,
            rephrase: None,
            reason_from: None,
            rephrase_from: None,
            parse_notes: Vec::new(),
            request_hashes: Vec::new(),
            raw: Vec::new(),
            errors: Vec::new(),
            failed: false,
            started_at,
            finished_at: now(),
        };
        match result {
            Ok(r) => LogRecord {
                ballots: r.vote.ballots.clone(),
                probability: r.outputs.iter().map(|o| o.probability).collect(),
                reason: r.reason.clone(),
                rephrase: r.rephrase.clone(),
                reason_from: r.reason_from,
                rephrase_from: r.rephrase_from,
                parse_notes: r.outputs.iter().map(|o| o.parse_notes.clone()).collect(),
                request_hashes: r.request_hashes.clone(),
                raw: r.outputs.iter().map(|o| o.raw.clone()).collect(),
                errors: r.errors.clone(),
                ..base(r.vote.final_label)
            },
            Err(e) => {
                let abstain = pipeline::vote(&[]);
                LogRecord {
                    failed: true,
                    errors: vec![Some(e.to_string())],
                    ..base(abstain.final_label)
                }
            }
        }
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Parsed log plus whatever could not be parsed.
#[derive(Debug, Clone, Default)]
pub struct LogContents {
    pub records: Vec<LogRecord>,
    /// `(1-based line number, line)` of unparsable lines.
    pub corrupt: Vec<(usize, String)>,
}

/// Reads a result log. Unparsable lines are returned separately; a parsable
/// line with a different schema version is an error.
pub fn read_log(path: &Path) -> Result<LogContents, RunnerError> {
    let file = File::open(path).map_err(io_err(format!("opening {}", path.display())))?;
    let mut out = LogContents::default();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(format!("reading {}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = match serde_json::from_str(&line) {
            Ok(v) => v,
            Err(_) => {
                out.corrupt.push((i + 1, line));
                continue;
            }
        };
        if let Some(found) = value.get("schema_version").and_then(|v| v.as_u64()) {
            if found != SCHEMA_VERSION as u64 {
                return Err(RunnerError::SchemaMismatch {
                    line: i + 1,
                    found: found as u32,
                    expected: SCHEMA_VERSION,
                });
            }
        }
        match serde_json::from_value::<LogRecord>(value) {
            Ok(r) => out.records.push(r),
            Err(_) => out.corrupt.push((i + 1, line)),
        }
    }
    Ok(out)
}

/// Last record per statement id, sorted by id.
pub fn latest_records(records: &[LogRecord]) -> Vec<LogRecord> {
    let mut by_id: BTreeMap<&str, &LogRecord> = BTreeMap::new();
    for r in records {
        by_id.insert(&r.statement_id, r);
    }
    by_id.into_values().cloned().collect()
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), RunnerError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io_err(format!("creating {}", dir.display())))?;
    let tmp = dir.join(format!(
        ".{}.{}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("out"),
        std::process::id()
    ));
    fs::write(&tmp, bytes).map_err(io_err(format!("writing {}", tmp.display())))?;
    fs::rename(&tmp, path).map_err(io_err(format!("renaming to {}", path.display())))
}

/// Per-dataset metrics bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub dataset: String,
    pub strategy: Strategy,
    pub provider: Provider,
    pub model: String,
    pub evaluated: usize,
    /// Sorted ids of the statements behind every number in this report.
    pub evaluated_ids: Vec<String>,
    pub failed_statements: usize,
    /// Abstaining ballots over all statements.
    pub abstentions: usize,
    pub detection: ClassificationReport,
    pub reasoning: ReasoningReport,
    /// Present only when the corpus carries intended meanings.
    pub understanding: Option<SimilarityReport>,
    pub parse_note_counts: BTreeMap<String, usize>,
    pub notes: Vec<String>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// One row in the P,R,F1 / F,S,H,B column layout.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
        let d = &self.detection;
        let r = &self.reasoning;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["dataset", "strategy", "model", "P", "R", "F1", "F", "S", "H", "B"])
            .expect("in-memory write");
        w.write_record([
            self.dataset.clone(),
            self.strategy.name().to_string(),
            self.model.clone(),
            format!("{:.4}", d.macro_precision),
            format!("{:.4}", d.macro_recall),
            format!("{:.4}", d.micro_f1),
            opt(r.fre_mean),
            opt(r.fre_std),
            opt(r.human_mean),
            opt(r.b_measure),
        ])
        .expect("in-memory write");
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }

    pub fn write(&self, dir: &Path) -> Result<(), RunnerError> {
        write_atomic(&dir.join(REPORT_JSON), self.to_json().as_bytes())?;
        write_atomic(&dir.join(REPORT_CSV), self.to_csv().as_bytes())
    }
}

/// Computes the report from log records (deduplicated by id) and any
/// annotations. Annotations for ids outside the log are ignored.
pub fn build_report(
    records: &[LogRecord],
    annotations: &[Annotation],
    embedder: &dyn EmbeddingProvider,
    bounds: RangeBounds,
) -> Result<EvalReport, RunnerError> {
    let records = latest_records(records);
    let first = records.first().ok_or(RunnerError::EmptyLog)?;
    if let Some(r) = records
        .iter()
        .find(|r| r.dataset != first.dataset || r.strategy != first.strategy)
    {
        return Err(RunnerError::MixedLog(format!(
            "{}/{} and {}/{}",
            first.dataset, first.strategy, r.dataset, r.strategy
        )));
    }
    let mut notes = Vec::new();
    let preds: Vec<Label> = records.iter().map(|r| r.final_label).collect();
    let golds: Vec<Label> = records.iter().map(|r| r.gold).collect();
    let detection = classification_report(&preds, &golds)?;

    let mut fre = Vec::new();
    for r in &records {
        if let Some(reason) = &r.reason {
            match flesch_reading_ease(reason) {
                Ok(f) => fre.push(f),
                Err(_) => notes.push(format!("reason of `{}` has no words; not scored", r.statement_id)),
            }
        }
    }
    let ids: BTreeSet<&str> = records.iter().map(|r| r.statement_id.as_str()).collect();
    let relevant: Vec<Annotation> = annotations
        .iter()
        .filter(|a| ids.contains(a.item_id.as_str()))
        .cloned()
        .collect();
    let human = human_aggregate(&relevant)?;
    let reasoning = ReasoningReport::from_scores(&fre, human.mean)?;

    let understanding = if records.iter().any(|r| r.intended.is_some()) {
        let items: Vec<UnderstandingItem> = records
            .iter()
            .filter(|r| r.intended.is_some())
            .map(|r| UnderstandingItem {
                id: r.statement_id.clone(),
                literal: r.text.clone(),
                intended: r.intended.clone(),
                rephrase: r.rephrase.clone(),
            })
            .collect();
        Some(understanding_scores(&items, embedder, bounds)?)
    } else {
        None
    };

    let mut parse_note_counts = BTreeMap::new();
    for note in records.iter().flat_map(|r| r.parse_notes.iter().flatten()) {
        *parse_note_counts.entry(note.as_str().to_string()).or_insert(0) += 1;
    }
    let failed_statements = records.iter().filter(|r| r.failed).count();
    if failed_statements > 0 {
        notes.push(format!("{failed_statements} statement(s) had every prompt fail and count as NonIronic"));
    }
    Ok(EvalReport {
        schema_version: SCHEMA_VERSION,
        dataset: first.dataset.clone(),
        strategy: first.strategy,
        provider: first.provider,
        model: first.model.clone(),
        evaluated: records.len(),
        evaluated_ids: records.iter().map(|r| r.statement_id.clone()).collect(),
        failed_statements,
        abstentions: records
            .iter()
            .map(|r| if r.failed { 1 } else { r.ballots.iter().filter(|b| b.is_none()).count() })
            .sum(),
        detection,
        reasoning,
        understanding,
        parse_note_counts,
        notes,
    })
}

/// What a run did besides producing the report.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: EvalReport,
    /// Statements sent through the pipeline in this invocation.
    pub executed: usize,
    /// Statements already in the log and skipped.
    pub reused: usize,
    pub skipped_rows: usize,
    pub quarantined: usize,
    pub gateway: GatewayStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Fresh,
    Resume,
}

/// Runs the experiment from scratch, replacing any previous log.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutcome, RunnerError> {
    execute(config, Mode::Fresh)
}

/// Continues a run: statements with a successful record in the existing
/// log are not re-queried. Corrupt lines are moved to the quarantine file
/// and their statements run again.
pub fn resume(config: &ExperimentConfig) -> Result<RunOutcome, RunnerError> {
    execute(config, Mode::Resume)
}

fn embedder_for<'a>(config: &ExperimentConfig, gateway: &'a Gateway) -> Box<dyn EmbeddingProvider + 'a> {
    match config.embedding.provider {
        None => Box::new(HashedNgramEmbedder::default()),
        Some(provider) => Box::new(GatewayEmbedder {
            gateway,
            provider,
            model: config
                .embedding
                .model
                .clone()
                .unwrap_or_else(|| "text-embedding-3-small".into()),
        }),
    }
}

fn execute(config: &ExperimentConfig, mode: Mode) -> Result<RunOutcome, RunnerError> {
    config.validate()?;
    let loaded = corpus::load_corpus(&config.dataset.spec()?)?;
    for s in &loaded.skipped {
        tracing::warn!(row = s.row, reason = ?s.reason, "skipped corpus row");
    }
    let evaluated = match config.limit {
        Some(n) => corpus::sample(&loaded.corpus, n, config.seed, config.stratified)?,
        None => loaded.corpus.clone(),
    };

    fs::create_dir_all(&config.out_dir).map_err(io_err(format!("creating {}", config.out_dir.display())))?;
    let gateway = config.gateway()?;
    let settings = config.settings();

    let pipeline = match config.strategy {
        Strategy::Idadp => {
            let knowledge = match config.knowledge {
                KnowledgeMode::Frozen => default_knowledge(),
                KnowledgeMode::Live => {
                    let transcript = pipeline::extract_knowledge(&gateway, &settings)?;
                    let json = serde_json::to_string_pretty(&transcript).expect("transcript serializes") + "\n";
                    write_atomic(&config.out_dir.join(KNOWLEDGE_FILE), json.as_bytes())?;
                    transcript.bundle
                }
            };
            Pipeline::idadp(&knowledge, config.threshold, settings.clone())?
        }
        Strategy::AutoCot => {
            let exemplars = pipeline::build_auto_cot_exemplars(&loaded.corpus, config.seed, &gateway, &settings)?;
            Pipeline::baseline(Strategy::AutoCot, Some(&exemplars), settings.clone())?
        }
        other => Pipeline::baseline(other, None, settings.clone())?,
    };

    let log_path = config.results_path();
    let mut quarantined = 0;
    let mut done: BTreeSet<String> = BTreeSet::new();
    if mode == Mode::Resume && log_path.exists() {
        let contents = read_log(&log_path)?;
        if !contents.corrupt.is_empty() {
            quarantined = contents.corrupt.len();
            quarantine(&log_path, &config.out_dir.join(QUARANTINE_FILE), &contents)?;
        }
        for r in latest_records(&contents.records) {
            if !r.failed {
                done.insert(r.statement_id);
            }
        }
    } else {
        write_atomic(&log_path, b"")?;
    }

    let pending: Vec<StatementRecord> = evaluated
        .records()
        .iter()
        .filter(|r| !done.contains(&r.id))
        .cloned()
        .collect();
    let reused = evaluated.len() - pending.len();

    let log = OpenOptions::new()
        .append(true)
        .create(true)
        .open(&log_path)
        .map_err(io_err(format!("opening {}", log_path.display())))?;
    let log = Mutex::new(log);
    let write_error: Mutex<Option<io::Error>> = Mutex::new(None);
    let total = pending.len();
    let finished = std::sync::atomic::AtomicUsize::new(0);
    let started_at = now();
    pipeline.run_corpus(&pending, &gateway, config.parallelism, |i, result| {
        let record = LogRecord::new(&pending[i], &settings, config.strategy, result, started_at.clone());
        let line = serde_json::to_string(&record).expect("log record serializes") + "\n";
        let mut f = log.lock().unwrap();
        if let Err(e) = f.write_all(line.as_bytes()).and_then(|_| f.flush()) {
            write_error.lock().unwrap().get_or_insert(e);
        }
        let n = finished.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
        tracing::info!(done = n, total, statement = %pending[i].id, "statement finished");
    });
    if let Some(e) = write_error.into_inner().unwrap() {
        return Err(io_err(format!("appending to {}", log_path.display()))(e));
    }
    drop(log);

    let contents = read_log(&log_path)?;
    let wanted: BTreeSet<&str> = evaluated.records().iter().map(|r| r.id.as_str()).collect();
    let records: Vec<LogRecord> = contents
        .records
        .into_iter()
        .filter(|r| wanted.contains(r.statement_id.as_str()))
        .collect();
    let annotations = match &config.annotations {
        Some(p) => load_annotations(p).map_err(io_err(format!("reading {}", p.display())))?,
        None => Vec::new(),
    };
    let embedder = embedder_for(config, &gateway);
    let report = build_report(&records, &annotations, embedder.as_ref(), config.bounds.unwrap_or_default())?;
    report.write(&config.out_dir)?;
    Ok(RunOutcome {
        report,
        executed: total,
        reused,
        skipped_rows: loaded.skipped.len(),
        quarantined,
        gateway: gateway.stats(),
    })
}

fn quarantine(log_path: &Path, quarantine_path: &Path, contents: &LogContents) -> Result<(), RunnerError> {
    let mut q = OpenOptions::new()
        .append(true)
        .create(true)
        .open(quarantine_path)
        .map_err(io_err(format!("opening {}", quarantine_path.display())))?;
    for (line_no, line) in &contents.corrupt {
        tracing::warn!(line = line_no, "quarantining unparsable log line");
        writeln!(q, "{line}").map_err(io_err("writing quarantine"))?;
    }
    let mut clean = String::new();
    for r in &contents.records {
        clean.push_str(&serde_json::to_string(r).expect("log record serializes"));
        clean.push('\n');
    }
    write_atomic(log_path, clean.as_bytes())
}

/// Report for an existing log, as `ironylab report` prints it.
pub fn report_from_log(
    log: &Path,
    annotations: Option<&Path>,
    embedder: &dyn EmbeddingProvider,
) -> Result<EvalReport, RunnerError> {
    let contents = read_log(log)?;
    if !contents.corrupt.is_empty() {
        tracing::warn!(lines = contents.corrupt.len(), "ignoring unparsable log lines");
    }
    let annotations = match annotations {
        Some(p) => load_annotations(p).map_err(io_err(format!("reading {}", p.display())))?,
        None => Vec::new(),
    };
    build_report(&contents.records, &annotations, embedder, RangeBounds::default())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn env_interpolation() {
        let lookup = |k: &str| (k == "KEY").then(|| "s3cret".to_string());
        assert_eq!(interpolate_env("a = \"${KEY}\"", lookup).unwrap(), "a = \"s3cret\"");
        assert_eq!(interpolate_env("no refs $KEY", lookup).unwrap(), "no refs $KEY");
        assert!(matches!(interpolate_env("${MISSING}", lookup), Err(RunnerError::MissingEnv(v)) if v == "MISSING"));
    }

    #[test]
    fn config_parsing_and_validation() {
        let base = Path::new("/tmp/exp");
        let cfg = ExperimentConfig::from_toml_str(
            r#"
strategy = "idadp"
provider = "mock"
mock_script = "mock.json"
limit = 5

[dataset]
preset = "isarcasm"
path = "data/isarcasm.csv"
"#,
            base,
        )
        .unwrap();
        assert_eq!(cfg.dataset.path, base.join("data/isarcasm.csv"));
        assert_eq!(cfg.threshold, 0.7);
        assert_eq!((cfg.max_tokens, cfg.temperature), (300, 0.3));
        assert_eq!(cfg.dataset.spec().unwrap().name, "iSarcasm");

        let err = ExperimentConfig::from_toml_str(
            "strategy = \"idadp\"\nprovider = \"mock\"\nmock_script = \"m.json\"\nthreshold = 1.0\n[dataset]\npreset = \"gen\"\npath = \"x.csv\"\n",
            base,
        );
        assert!(matches!(err, Err(RunnerError::Config(_))));
        let err = ExperimentConfig::from_toml_str(
            "strategy = \"idadp\"\nprovider = \"mock\"\n[dataset]\npreset = \"gen\"\npath = \"x.csv\"\n",
            base,
        );
        assert!(matches!(err, Err(RunnerError::Config(_))));
    }

    #[test]
    fn custom_dataset_mapping() {
        let cfg: DatasetConfig = toml::from_str(
            r#"
name = "mine"
path = "x.tsv"
columns = { text = "t", label = "l" }
labels = { yes = 1, no = 0 }
"#,
        )
        .unwrap();
        let spec = cfg.spec().unwrap();
        assert_eq!(spec.format, CorpusFormat::Tsv);
        assert_eq!(spec.labels["yes"], Label::Ironic);
    }
}
