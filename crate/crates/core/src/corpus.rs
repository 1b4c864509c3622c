//! Corpus loading, normalization, statistics and sampling.
//!
//! Every benchmark corpus is described by a [`DatasetSpec`]: where the file
//! lives, which container format it uses, which columns carry the text, the
//! gold label and (optionally) the author-provided intended meaning, and how
//! raw label values map onto [`Label`]. Rows that cannot be turned into a
//! [`StatementRecord`] are never dropped silently; they end up in the
//! [`SkippedRow`] report returned next to the corpus.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("column `{column}` is not present in {path}")]
    MissingColumn { column: String, path: PathBuf },
    #[error("row {row}: label value `{value}` is not covered by the label mapping")]
    UnparsableLabel { row: usize, value: String },
    #[error("corpus `{0}` contains no valid rows")]
    EmptyCorpus(String),
    #[error("requested sample of {requested} records from a corpus of {available}")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("unknown dataset preset `{0}`")]
    UnknownPreset(String),
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

/// Binary irony label. Serialized as `1` (ironic) / `0` (non-ironic).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Ironic,
    NonIronic,
}

impl Label {
    pub fn as_int(self) -> u8 {
        match self {
            Label::Ironic => 1,
            Label::NonIronic => 0,
        }
    }

    pub fn from_int(v: u8) -> Option<Self> {
        match v {
            1 => Some(Label::Ironic),
            0 => Some(Label::NonIronic),
            _ => None,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Label::Ironic => Label::NonIronic,
            Label::NonIronic => Label::Ironic,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Ironic => "ironic",
            Label::NonIronic => "non-ironic",
        })
    }
}

impl Serialize for Label {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.as_int())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = u8::deserialize(d)?;
        Label::from_int(v).ok_or_else(|| serde::de::Error::custom(format!("label must be 0 or 1, got {v}")))
    }
}

/// One corpus item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatementRecord {
    pub id: String,
    pub text: String,
    pub gold: Label,
    /// Author-provided non-ironic meaning, only present on some corpora.
    pub intended: Option<String>,
    pub source: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Csv,
    Tsv,
    Jsonl,
}

impl CorpusFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(CorpusFormat::Csv),
            "tsv" => Some(CorpusFormat::Tsv),
            "jsonl" | "ndjson" => Some(CorpusFormat::Jsonl),
            _ => None,
        }
    }
}

/// Which source columns (or JSON keys) feed the record fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMapping {
    pub text: String,
    pub label: String,
    #[serde(default)]
    pub intended: Option<String>,
    #[serde(default)]
    pub id: Option<String>,
}

/// Everything needed to load one corpus file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub name: String,
    pub path: PathBuf,
    pub format: CorpusFormat,
    pub columns: ColumnMapping,
    /// Raw label value (trimmed, compared case-insensitively) to label.
    pub labels: BTreeMap<String, Label>,
}

fn label_table(pairs: &[(&str, Label)]) -> BTreeMap<String, Label> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

impl DatasetSpec {
    /// Names accepted by [`DatasetSpec::preset`].
    pub const PRESETS: [&'static str; 6] = ["isarcasm", "semeval", "gen", "rq", "hyp", "reddit"];

    /// Column layout and label vocabulary of the six benchmark corpora as
    /// distributed by their authors.
    pub fn preset(name: &str, path: impl Into<PathBuf>) -> Result<Self> {
        use Label::*;
        let path = path.into();
        let binary = label_table(&[("1", Ironic), ("0", NonIronic)]);
        let spec = match name.to_ascii_lowercase().as_str() {
            "isarcasm" => DatasetSpec {
                name: "iSarcasm".into(),
                path,
                format: CorpusFormat::Csv,
                columns: ColumnMapping {
                    text: "tweet".into(),
                    label: "sarcastic".into(),
                    intended: Some("rephrase".into()),
                    id: None,
                },
                labels: binary,
            },
            "semeval" => DatasetSpec {
                name: "SemEval".into(),
                path,
                format: CorpusFormat::Tsv,
                columns: ColumnMapping {
                    text: "Tweet text".into(),
                    label: "Label".into(),
                    intended: None,
                    id: Some("Tweet index".into()),
                },
                labels: binary,
            },
            n @ ("gen" | "rq" | "hyp") => DatasetSpec {
                name: match n {
                    "gen" => "Gen",
                    "rq" => "RQ",
                    _ => "HYP",
                }
                .into(),
                path,
                format: CorpusFormat::Csv,
                columns: ColumnMapping {
                    text: "Response Text".into(),
                    label: "Label".into(),
                    intended: None,
                    id: Some("ID".into()),
                },
                labels: label_table(&[("sarc", Ironic), ("notsarc", NonIronic)]),
            },
            "reddit" => DatasetSpec {
                name: "Reddit".into(),
                path,
                format: CorpusFormat::Jsonl,
                columns: ColumnMapping {
                    text: "comment_text".into(),
                    label: "label".into(),
                    intended: None,
                    id: Some("comment_id".into()),
                },
                labels: label_table(&[("1", Ironic), ("-1", NonIronic)]),
            },
            other => return Err(CorpusError::UnknownPreset(other.to_string())),
        };
        Ok(spec)
    }

    fn coerce_label(&self, raw: &str) -> Option<Label> {
        let key = raw.trim();
        self.labels
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(key))
            .map(|(_, v)| *v)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SkipReason {
    EmptyText,
    UnparsableLabel(String),
    DuplicateId(String),
    Malformed(String),
}

/// A source row that did not become a record. `row` is the 0-based data row
/// index (header excluded).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedRow {
    pub row: usize,
    pub reason: SkipReason,
}

/// An immutable, ordered set of records from one dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    name: String,
    records: Vec<StatementRecord>,
}

impl Corpus {
    /// Builds a corpus, rejecting empty input. Record ids must be unique.
    pub fn new(name: impl Into<String>, records: Vec<StatementRecord>) -> Result<Self> {
        let name = name.into();
        if records.is_empty() {
            return Err(CorpusError::EmptyCorpus(name));
        }
        debug_assert!({
            let mut seen = HashSet::new();
            records.iter().all(|r| seen.insert(r.id.as_str()))
        });
        Ok(Corpus { name, records })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn records(&self) -> &[StatementRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&StatementRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn has_intended(&self) -> bool {
        self.records.iter().any(|r| r.intended.is_some())
    }

    /// Writes the normalized JSONL form: one object per record with keys
    /// `id`, `text`, `gold` (0/1), `intended` (nullable) and `source`.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Reads the normalized JSONL form written by [`Corpus::write_jsonl`].
    pub fn read_jsonl(name: &str, path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut records = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|source| CorpusError::Io {
                path: path.to_path_buf(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: StatementRecord = serde_json::from_str(&line).map_err(|e| CorpusError::Io {
                path: path.to_path_buf(),
                source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
            })?;
            records.push(rec);
        }
        Corpus::new(name, records)
    }
}

/// Result of [`load_corpus`].
#[derive(Debug, Clone)]
pub struct LoadedCorpus {
    pub corpus: Corpus,
    pub skipped: Vec<SkippedRow>,
}

/// Loads a corpus file according to `spec`.
///
/// Rows with empty text, an unmapped label value or a duplicate id are
/// reported in `skipped`. A header missing any mapped column fails with
/// [`CorpusError::MissingColumn`]; zero usable rows fails with
/// [`CorpusError::EmptyCorpus`].
pub fn load_corpus(spec: &DatasetSpec) -> Result<LoadedCorpus> {
    let rows = match spec.format {
        CorpusFormat::Csv => read_delimited(spec, b',')?,
        CorpusFormat::Tsv => read_delimited(spec, b'\t')?,
        CorpusFormat::Jsonl => read_jsonl_rows(spec)?,
    };

    let mut records = Vec::with_capacity(rows.len());
    let mut skipped = Vec::new();
    let mut seen = HashSet::new();
    for (row, fields) in rows.into_iter().enumerate() {
        let fields = match fields {
            Ok(f) => f,
            Err(msg) => {
                skipped.push(SkippedRow {
                    row,
                    reason: SkipReason::Malformed(msg),
                });
                continue;
            }
        };
        let text = fields.text.trim();
        if text.is_empty() {
            skipped.push(SkippedRow {
                row,
                reason: SkipReason::EmptyText,
            });
            continue;
        }
        let Some(gold) = spec.coerce_label(&fields.label) else {
            skipped.push(SkippedRow {
                row,
                reason: SkipReason::UnparsableLabel(fields.label),
            });
            continue;
        };
        let id = match fields.id {
            Some(id) if !id.trim().is_empty() => id.trim().to_string(),
            _ => format!("{}-{}", spec.name, row),
        };
        if !seen.insert(id.clone()) {
            skipped.push(SkippedRow {
                row,
                reason: SkipReason::DuplicateId(id),
            });
            continue;
        }
        let intended = fields
            .intended
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty());
        records.push(StatementRecord {
            id,
            text: text.to_string(),
            gold,
            intended,
            source: spec.name.clone(),
        });
    }

    if !skipped.is_empty() {
        tracing::warn!(dataset = %spec.name, skipped = skipped.len(), "rows skipped while loading corpus");
    }
    Ok(LoadedCorpus {
        corpus: Corpus::new(spec.name.clone(), records)?,
        skipped,
    })
}

/// Like [`load_corpus`] but any unmapped label is a hard error.
pub fn load_corpus_strict(spec: &DatasetSpec) -> Result<Corpus> {
    let loaded = load_corpus(spec)?;
    for s in &loaded.skipped {
        if let SkipReason::UnparsableLabel(value) = &s.reason {
            return Err(CorpusError::UnparsableLabel {
                row: s.row,
                value: value.clone(),
            });
        }
    }
    Ok(loaded.corpus)
}

struct RawFields {
    text: String,
    label: String,
    intended: Option<String>,
    id: Option<String>,
}

type RawRow = std::result::Result<RawFields, String>;

fn read_delimited(spec: &DatasetSpec, delimiter: u8) -> Result<Vec<RawRow>> {
    let csv_err = |source| CorpusError::Csv {
        path: spec.path.clone(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(true)
        .quoting(delimiter == b',')
        .from_path(&spec.path)
        .map_err(csv_err)?;
    let headers = reader.headers().map_err(csv_err)?.clone();
    let index_of = |column: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == column)
            .ok_or_else(|| CorpusError::MissingColumn {
                column: column.to_string(),
                path: spec.path.clone(),
            })
    };
    let text_idx = index_of(&spec.columns.text)?;
    let label_idx = index_of(&spec.columns.label)?;
    let intended_idx = spec.columns.intended.as_deref().map(index_of).transpose()?;
    let id_idx = spec.columns.id.as_deref().map(index_of).transpose()?;

    let mut rows = Vec::new();
    for result in reader.records() {
        let row = match result {
            Ok(rec) => {
                let get = |i: usize| rec.get(i).map(str::to_string);
                match (get(text_idx), get(label_idx)) {
                    (Some(text), Some(label)) => Ok(RawFields {
                        text,
                        label,
                        intended: intended_idx.and_then(get),
                        id: id_idx.and_then(get),
                    }),
                    _ => Err(format!("row has {} fields", rec.len())),
                }
            }
            Err(e) => Err(e.to_string()),
        };
        rows.push(row);
    }
    Ok(rows)
}

fn value_to_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(if *b { "1".into() } else { "0".into() }),
        _ => None,
    }
}

fn read_jsonl_rows(spec: &DatasetSpec) -> Result<Vec<RawRow>> {
    let io_err = |source| CorpusError::Io {
        path: spec.path.clone(),
        source,
    };
    let file = File::open(&spec.path).map_err(io_err)?;
    let mut rows = Vec::new();
    let mut saw_text = false;
    let mut saw_label = false;
    for line in BufReader::new(file).lines() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let row = match serde_json::from_str::<Value>(&line) {
            Ok(Value::Object(obj)) => {
                let field = |key: &str| obj.get(key).and_then(value_to_string);
                let text = field(&spec.columns.text);
                let label = field(&spec.columns.label);
                saw_text |= text.is_some();
                saw_label |= label.is_some();
                Ok(RawFields {
                    text: text.unwrap_or_default(),
                    label: label.unwrap_or_default(),
                    intended: spec.columns.intended.as_deref().and_then(field),
                    id: spec.columns.id.as_deref().and_then(field),
                })
            }
            Ok(_) => Err("line is not a JSON object".to_string()),
            Err(e) => Err(e.to_string()),
        };
        rows.push(row);
    }
    // JSONL has no header; a key that never appears is treated as a missing column.
    if !rows.is_empty() {
        for (seen, column) in [(saw_text, &spec.columns.text), (saw_label, &spec.columns.label)] {
            if !seen {
                return Err(CorpusError::MissingColumn {
                    column: column.clone(),
                    path: spec.path.clone(),
                });
            }
        }
    }
    Ok(rows)
}

/// Size, ironic share and mean whitespace-token length of a corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub size: usize,
    pub ironic_ratio: f64,
    pub avg_token_length: f64,
}

/// Whitespace token count used for the average length statistic.
pub fn token_count(text: &str) -> usize {
    text.split_whitespace().count()
}

pub fn stats(records: &[StatementRecord]) -> Result<CorpusStats> {
    if records.is_empty() {
        return Err(CorpusError::EmptyCorpus(String::new()));
    }
    let size = records.len();
    let ironic = records.iter().filter(|r| r.gold == Label::Ironic).count();
    let tokens: usize = records.iter().map(|r| token_count(&r.text)).sum();
    Ok(CorpusStats {
        size,
        ironic_ratio: ironic as f64 / size as f64,
        avg_token_length: tokens as f64 / size as f64,
    })
}

impl Corpus {
    pub fn stats(&self) -> CorpusStats {
        stats(&self.records).expect("corpus is never empty")
    }
}

/// Draws `n` records deterministically from `(corpus order, n, seed)`.
///
/// Plain mode returns the first `n` records of a seeded shuffle. Stratified
/// mode keeps the ironic share at `round(n * ratio)` records, then shuffles
/// the union so labels are interleaved.
pub fn sample(corpus: &Corpus, n: usize, seed: u64, stratified: bool) -> Result<Corpus> {
    let available = corpus.len();
    if n == 0 || n > available {
        return Err(CorpusError::SampleTooLarge {
            requested: n,
            available,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked: Vec<usize> = if stratified {
        let (mut ironic, mut plain): (Vec<usize>, Vec<usize>) =
            (0..available).partition(|&i| corpus.records[i].gold == Label::Ironic);
        ironic.shuffle(&mut rng);
        plain.shuffle(&mut rng);
        let want_ironic = ((n as f64) * (ironic.len() as f64) / (available as f64)).round() as usize;
        let take_ironic = want_ironic.min(ironic.len()).max(n.saturating_sub(plain.len()));
        let mut idx: Vec<usize> = ironic[..take_ironic]
            .iter()
            .chain(&plain[..n - take_ironic])
            .copied()
            .collect();
        idx.shuffle(&mut rng);
        idx
    } else {
        let mut idx: Vec<usize> = (0..available).collect();
        idx.shuffle(&mut rng);
        idx.truncate(n);
        idx
    };
    let records = picked.into_iter().map(|i| corpus.records[i].clone()).collect();
    Corpus::new(corpus.name.clone(), records)
}

/// Picks `per_label` records of each label for few-shot exemplars.
pub fn balanced_exemplars(corpus: &Corpus, per_label: usize, seed: u64) -> Result<Vec<StatementRecord>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(per_label * 2);
    let mut pools = Vec::new();
    for label in [Label::Ironic, Label::NonIronic] {
        let mut pool: Vec<&StatementRecord> = corpus.records.iter().filter(|r| r.gold == label).collect();
        if pool.len() < per_label {
            return Err(CorpusError::SampleTooLarge {
                requested: per_label,
                available: pool.len(),
            });
        }
        pool.shuffle(&mut rng);
        pool.truncate(per_label);
        pools.push(pool);
    }
    // I, N, I, N, ...
    for i in 0..per_label {
        for pool in &pools {
            out.push(pool[i].clone());
        }
    }
    Ok(out)
}
