//! Labeled corpora: loading, normalization, and stratified splits.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

const STOPWORDS_EN_V1: &str = include_str!("../data/stopwords-en-v1.txt");

/// Identifier of the bundled English list.
pub const DEFAULT_STOPWORDS: &str = "en-v1";

/// A record as it appears in a source file, before normalization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDocument {
    pub id: String,
    pub text: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledDocument {
    pub id: String,
    pub tokens: Vec<String>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizationConfig {
    pub stopword_list_id: String,
    pub lowercase: bool,
    pub strip_punctuation: bool,
}

impl Default for NormalizationConfig {
    fn default() -> Self {
        Self {
            stopword_list_id: DEFAULT_STOPWORDS.to_string(),
            lowercase: true,
            strip_punctuation: true,
        }
    }
}

impl NormalizationConfig {
    pub fn digest(&self) -> String {
        seed::sha256_hex(
            format!(
                "{}|{}|{}",
                self.stopword_list_id, self.lowercase, self.strip_punctuation
            )
            .as_bytes(),
        )
    }
}

/// A resolved normalization pipeline: flags plus the concrete stop-word set.
#[derive(Debug, Clone)]
pub struct Normalizer {
    stopwords: HashSet<String>,
    lowercase: bool,
    strip_punctuation: bool,
}

impl Normalizer {
    pub fn new(config: &NormalizationConfig) -> Result<Self> {
        let stopwords = bundled_stopwords(&config.stopword_list_id)?;
        Ok(Self {
            stopwords,
            lowercase: config.lowercase,
            strip_punctuation: config.strip_punctuation,
        })
    }

    /// Lowercasing and punctuation stripping on, with a caller-provided
    /// stop-word set (which may be empty).
    pub fn with_stopwords<I, S>(stopwords: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            stopwords: stopwords.into_iter().map(Into::into).collect(),
            lowercase: true,
            strip_punctuation: true,
        }
    }

    pub fn is_stopword(&self, word: &str) -> bool {
        self.stopwords.contains(word)
    }

    /// Whitespace split, lowercase, drop every non-alphanumeric character,
    /// then drop stop words. Surviving words keep their order.
    ///
    /// Lowercasing runs first: some uppercase letters lower to a base letter
    /// plus a combining mark, and the mark must not survive as a token char.
    pub fn normalize(&self, text: &str) -> Vec<String> {
        text.split_whitespace()
            .filter_map(|raw| {
                let mut tok = if self.lowercase {
                    raw.to_lowercase()
                } else {
                    raw.to_string()
                };
                if self.strip_punctuation {
                    tok.retain(char::is_alphanumeric);
                }
                if self.lowercase {
                    // letters with no lowercase mapping (e.g. math capitals)
                    tok.retain(|c| !c.is_uppercase());
                }
                (!tok.is_empty() && !self.stopwords.contains(&tok)).then_some(tok)
            })
            .collect()
    }
}

fn bundled_stopwords(id: &str) -> Result<HashSet<String>> {
    let body = match id {
        DEFAULT_STOPWORDS => STOPWORDS_EN_V1,
        other => return Err(Error::UnknownStopList(other.to_string())),
    };
    let set: HashSet<String> = body
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect();
    if set.is_empty() {
        return Err(Error::UnknownStopList(id.to_string()));
    }
    Ok(set)
}

/// Shorthand for `Normalizer::new(config)?.normalize(text)`.
pub fn normalize(text: &str, config: &NormalizationConfig) -> Result<Vec<String>> {
    Ok(Normalizer::new(config)?.normalize(text))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Jsonl,
    Csv,
}

impl CorpusFormat {
    /// Guess from the file extension; `.csv` is CSV, everything else JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => CorpusFormat::Csv,
            _ => CorpusFormat::Jsonl,
        }
    }
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" => Ok(CorpusFormat::Jsonl),
            "csv" => Ok(CorpusFormat::Csv),
            _ => Err(Error::UnknownFormat(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub normalization_digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub loaded: usize,
    pub dropped_empty: usize,
    pub classes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub documents: Vec<LabeledDocument>,
    pub classes: Vec<String>,
    pub provenance: Provenance,
}

impl Corpus {
    /// Validates the class count, label range and id uniqueness.
    pub fn new(
        documents: Vec<LabeledDocument>,
        classes: Vec<String>,
        provenance: Provenance,
    ) -> Result<Self> {
        if classes.len() < 2 {
            return Err(Error::TooFewClasses {
                found: classes.len(),
            });
        }
        let mut ids = HashSet::with_capacity(documents.len());
        for d in &documents {
            if d.label >= classes.len() {
                return Err(Error::UnknownLabel(d.label.to_string()));
            }
            if !ids.insert(d.id.as_str()) {
                return Err(Error::DuplicateId(d.id.clone()));
            }
        }
        Ok(Self {
            documents,
            classes,
            provenance,
        })
    }

    /// Build from raw records; labels are mapped by sorted class name.
    /// Records that normalize to nothing are dropped and counted.
    pub fn from_raw(
        raw: Vec<RawDocument>,
        normalizer: &Normalizer,
        provenance: Provenance,
    ) -> Result<(Self, LoadReport)> {
        let mut kept = Vec::with_capacity(raw.len());
        let mut dropped_empty = 0;
        for r in raw {
            let tokens = normalizer.normalize(&r.text);
            if tokens.is_empty() {
                dropped_empty += 1;
            } else {
                kept.push((r.id, tokens, r.label));
            }
        }
        let classes: Vec<String> = kept
            .iter()
            .map(|(_, _, l)| l.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let index: HashMap<&str, usize> = classes
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();
        let documents = kept
            .iter()
            .map(|(id, tokens, label)| LabeledDocument {
                id: id.clone(),
                tokens: tokens.clone(),
                label: index[label.as_str()],
            })
            .collect::<Vec<_>>();
        let report = LoadReport {
            loaded: documents.len(),
            dropped_empty,
            classes: classes.clone(),
        };
        Ok((Self::new(documents, classes, provenance)?, report))
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes.len()];
        for d in &self.documents {
            counts[d.label] += 1;
        }
        counts
    }

    /// Same classes and provenance, different documents. Ids are not
    /// re-validated; callers only pass subsets of an existing corpus.
    pub fn with_documents(&self, documents: Vec<LabeledDocument>) -> Self {
        Self {
            documents,
            classes: self.classes.clone(),
            provenance: self.provenance.clone(),
        }
    }

    /// Content digest over classes and documents (ids, tokens, labels).
    /// Provenance is excluded so a written-then-reloaded corpus keeps its digest.
    pub fn digest(&self) -> String {
        let mut buf = Vec::new();
        for c in &self.classes {
            buf.extend_from_slice(c.as_bytes());
            buf.push(0x1f);
        }
        buf.push(0x1e);
        for d in &self.documents {
            buf.extend_from_slice(d.id.as_bytes());
            buf.push(0x1f);
            buf.extend_from_slice(&(d.label as u64).to_le_bytes());
            for t in &d.tokens {
                buf.extend_from_slice(t.as_bytes());
                buf.push(0x1f);
            }
            buf.push(0x1e);
        }
        seed::sha256_hex(&buf)
    }

    /// Write as JSONL with `text` set to the space-joined tokens. Reloading
    /// with the same normalization reproduces the same documents.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for d in &self.documents {
            let line = serde_json::to_string(&RawDocument {
                id: d.id.clone(),
                text: d.tokens.join(" "),
                label: self.classes[d.label].clone(),
            })
            .map_err(|e| Error::parse("corpus record", e))?;
            writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Deserialize)]
struct JsonRecord {
    id: Option<serde_json::Value>,
    text: Option<String>,
    label: Option<serde_json::Value>,
}

fn value_to_string(v: serde_json::Value) -> Option<String> {
    match v {
        serde_json::Value::String(s) => Some(s),
        serde_json::Value::Number(n) => Some(n.to_string()),
        serde_json::Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn read_jsonl(path: &Path) -> Result<Vec<RawDocument>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let loc = || format!("{}:{}", path.display(), i + 1);
        let rec: JsonRecord = serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
            location: loc(),
            reason: e.to_string(),
        })?;
        let text = rec.text.ok_or_else(|| Error::MalformedRecord {
            location: loc(),
            reason: "missing `text`".into(),
        })?;
        let label = rec
            .label
            .and_then(value_to_string)
            .ok_or_else(|| Error::MalformedRecord {
                location: loc(),
                reason: "missing or non-scalar `label`".into(),
            })?;
        let id = match rec.id.and_then(value_to_string) {
            Some(id) => id,
            None => format!("auto-{}", out.len()),
        };
        out.push(RawDocument { id, text, label });
    }
    Ok(out)
}

fn read_csv(path: &Path) -> Result<Vec<RawDocument>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::parse(path.display().to_string(), format!("{other:?}")),
    })?;
    let headers = rdr
        .headers()
        .map_err(|e| Error::parse(path.display().to_string(), e))?
        .clone();
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (text_col, label_col) = match (find("text"), find("label")) {
        (Some(t), Some(l)) => (t, l),
        _ => return Err(Error::MissingColumn(headers.iter().map(String::from).collect())),
    };
    let id_col = find("id");
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| Error::MalformedRecord {
            location: format!("{}:{}", path.display(), i + 2),
            reason: e.to_string(),
        })?;
        let field = |c: usize| row.get(c).map(str::to_string);
        let (Some(text), Some(label)) = (field(text_col), field(label_col)) else {
            return Err(Error::MalformedRecord {
                location: format!("{}:{}", path.display(), i + 2),
                reason: "row is missing `text` or `label`".into(),
            });
        };
        let id = id_col
            .and_then(field)
            .filter(|s| !s.is_empty())
            .unwrap_or_else(|| format!("auto-{i}"));
        out.push(RawDocument { id, text, label });
    }
    Ok(out)
}

pub fn load_corpus(
    path: &Path,
    format: CorpusFormat,
    norm: &NormalizationConfig,
) -> Result<(Corpus, LoadReport)> {
    let normalizer = Normalizer::new(norm)?;
    let raw = match format {
        CorpusFormat::Jsonl => read_jsonl(path)?,
        CorpusFormat::Csv => read_csv(path)?,
    };
    let provenance = Provenance {
        source: path.display().to_string(),
        normalization_digest: norm.digest(),
    };
    Corpus::from_raw(raw, &normalizer, provenance)
}

/// Stratified split. Each class contributes `round(fraction * n)` test
/// documents, clamped so both sides keep at least one. Document order within
/// each side follows the input corpus.
pub fn split(corpus: &Corpus, test_fraction: f64, seed: u64) -> Result<(Corpus, Corpus)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "test fraction {test_fraction} outside (0, 1)"
        )));
    }
    let (train_idx, test_idx) = stratified_indices(corpus, test_fraction, seed)?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| corpus.documents[i].clone()).collect();
    Ok((
        corpus.with_documents(pick(&train_idx)),
        corpus.with_documents(pick(&test_idx)),
    ))
}

pub(crate) fn stratified_indices(
    corpus: &Corpus,
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); corpus.class_count()];
    for (i, d) in corpus.documents.iter().enumerate() {
        by_class[d.label].push(i);
    }
    let mut rng = seed::rng(seed);
    let mut held = vec![false; corpus.len()];
    for (c, members) in by_class.iter_mut().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < 2 {
            return Err(Error::ClassTooSmall {
                class: corpus.classes[c].clone(),
                have: members.len(),
                need: 2,
            });
        }
        members.shuffle(&mut rng);
        let n = ((members.len() as f64) * fraction).round() as usize;
        let n = n.clamp(1, members.len() - 1);
        for &i in &members[..n] {
            held[i] = true;
        }
    }
    let (test, train): (Vec<usize>, Vec<usize>) = (0..corpus.len()).partition(|&i| held[i]);
    Ok((train, test))
}
