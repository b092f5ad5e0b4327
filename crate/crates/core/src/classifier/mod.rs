//! A small trainable text classifier.
//!
//! Training is single-threaded and fully determined by the data, the
//! [`TrainConfig`] and its seed: two runs produce identical parameter bytes
//! and identical [`EpochMetrics`]. Wall-clock epoch times are reported
//! separately so they never leak into the reproducible history.

pub mod metrics;
pub mod network;

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{stratified_indices, Corpus, LabeledDocument};
use crate::error::{Error, Result};
use crate::seed;

pub use metrics::{ConfusionMatrix, Scores};
pub use network::{Dims, Params};

pub const MODEL_FILE_VERSION: u32 = 1;

/// Spelling of the reserved unknown-word slot in serialized vocabularies.
pub const UNKNOWN_TOKEN: &str = "<unk>";

const INIT_SCALE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub seed: u64,
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 19,
            learning_rate: 0.5,
            batch_size: 4,
            embed_dim: 64,
            hidden_dim: 32,
            seed: 0,
            validation_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::InvalidConfig(
                "validation_fraction must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }

    pub fn digest(&self) -> String {
        seed::sha256_hex(
            serde_json::to_string(self)
                .expect("TrainConfig serializes")
                .as_bytes(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub training_loss: f64,
    pub validation_loss: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl EpochMetrics {
    pub const CSV_HEADER: &'static str =
        "epoch,training_loss,validation_loss,accuracy,precision,recall,f1";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.epoch,
            self.training_loss,
            self.validation_loss,
            self.accuracy,
            self.precision,
            self.recall,
            self.f1
        )
    }
}

pub fn history_csv(history: &[EpochMetrics]) -> String {
    let mut out = String::from(EpochMetrics::CSV_HEADER);
    out.push('\n');
    for m in history {
        out.push_str(&m.csv_row());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    index: HashMap<String, usize>,
    words: Vec<String>,
}

impl Vocabulary {
    pub const UNKNOWN: usize = 0;

    /// Every word seen at least once, in sorted order after the unknown slot.
    pub fn build<'a>(docs: impl IntoIterator<Item = &'a LabeledDocument>) -> Self {
        let sorted: BTreeSet<&str> = docs
            .into_iter()
            .flat_map(|d| d.tokens.iter().map(String::as_str))
            .collect();
        Self::from_words(sorted.into_iter().map(str::to_string))
    }

    fn from_words(words: impl IntoIterator<Item = String>) -> Self {
        let mut all = vec![UNKNOWN_TOKEN.to_string()];
        all.extend(words);
        let index = all
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Self { index, words: all }
    }

    pub fn size(&self) -> usize {
        self.words.len()
    }

    pub fn id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(Self::UNKNOWN)
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    /// Known words, excluding the unknown slot.
    pub fn words(&self) -> &[String] {
        &self.words[1..]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: usize,
    pub probabilities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub loss: f64,
    #[serde(flatten)]
    pub scores: Scores,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub vocab: Vocabulary,
    pub classes: Vec<String>,
    pub params: Params,
    pub config: TrainConfig,
}

/// A trained model plus everything observed while training it.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub history: Vec<EpochMetrics>,
    pub epoch_seconds: Vec<f64>,
    /// Documents the optimizer stepped over.
    pub fit_size: usize,
    /// Documents held out for per-epoch metrics.
    pub validation_size: usize,
}

impl TrainOutcome {
    /// Everything the trainer consumed, fit plus held-out.
    pub fn examples_seen(&self) -> usize {
        self.fit_size + self.validation_size
    }
}

/// Train on `data`, holding out a stratified validation slice.
pub fn train(data: &Corpus, config: &TrainConfig) -> Result<TrainOutcome> {
    train_with_extra(data, &[], config)
}

/// Train on `clean` plus `extra`. The validation slice is carved from
/// `clean` only, so every extra document is always stepped over; extras are
/// mixed into the shuffled stream, not appended. With `extra` empty this is
/// exactly [`train`].
pub fn train_with_extra(
    clean: &Corpus,
    extra: &[LabeledDocument],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if clean.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let present = clean.class_counts().iter().filter(|&&c| c > 0).count();
    if present < 2 {
        return Err(Error::TooFewClasses { found: present });
    }
    let n_classes = clean.class_count();
    if let Some(bad) = extra.iter().find(|d| d.label >= n_classes) {
        return Err(Error::UnknownLabel(bad.label.to_string()));
    }

    let (fit_idx, val_idx) = stratified_indices(
        clean,
        config.validation_fraction,
        seed::derive(config.seed, "validation"),
    )?;
    let fit_docs: Vec<&LabeledDocument> = fit_idx
        .iter()
        .map(|&i| &clean.documents[i])
        .chain(extra.iter())
        .collect();
    let val_docs: Vec<&LabeledDocument> = val_idx.iter().map(|&i| &clean.documents[i]).collect();

    let vocab = Vocabulary::build(fit_docs.iter().copied());
    let encode = |docs: &[&LabeledDocument]| -> Vec<(Vec<usize>, usize)> {
        docs.iter()
            .filter(|d| !d.tokens.is_empty())
            .map(|d| (vocab.encode(&d.tokens), d.label))
            .collect()
    };
    let fit = encode(&fit_docs);
    let val = encode(&val_docs);

    let dims = Dims {
        vocab: vocab.size(),
        embed: config.embed_dim,
        hidden: config.hidden_dim,
        classes: n_classes,
    };
    let mut params = Params::init(
        dims,
        INIT_SCALE,
        &mut seed::rng(seed::derive(config.seed, "init")),
    );
    let init_root = seed::derive(config.seed, "embedding");
    for (i, word) in vocab.words.iter().enumerate() {
        let mut rng = seed::rng(seed::derive(init_root, word));
        for v in &mut params.embedding[i * dims.embed..(i + 1) * dims.embed] {
            *v = rand::Rng::gen_range(&mut rng, -INIT_SCALE..=INIT_SCALE);
        }
    }
    let mut shuffle_rng = seed::rng(seed::derive(config.seed, "shuffle"));
    let mut order: Vec<usize> = (0..fit.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut epoch_seconds = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        let started = Instant::now();
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<network::Example<'_>> = chunk
                .iter()
                .map(|&i| (fit[i].0.as_slice(), fit[i].1))
                .collect();
            let (loss, grads) = params.loss_and_grad(&batch);
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            loss_sum += loss * batch.len() as f64;
            params.apply(&grads, config.learning_rate);
        }
        epoch_seconds.push(started.elapsed().as_secs_f64());

        let training_loss = loss_sum / fit.len() as f64;
        if !training_loss.is_finite() || !params.is_finite() {
            return Err(Error::Diverged { epoch, loss: training_loss });
        }
        let (validation_loss, scores) = evaluate_encoded(&params, &val, n_classes);
        history.push(EpochMetrics {
            epoch,
            training_loss,
            validation_loss,
            accuracy: scores.accuracy,
            precision: scores.precision,
            recall: scores.recall,
            f1: scores.f1,
        });
    }

    Ok(TrainOutcome {
        model: Model {
            vocab,
            classes: clean.classes.clone(),
            params,
            config: config.clone(),
        },
        history,
        epoch_seconds,
        fit_size: fit.len(),
        validation_size: val.len(),
    })
}

fn evaluate_encoded(params: &Params, data: &[(Vec<usize>, usize)], classes: usize) -> (f64, Scores) {
    if data.is_empty() {
        return (0.0, ConfusionMatrix::new(classes).scores());
    }
    let mut cm = ConfusionMatrix::new(classes);
    let mut loss = 0.0;
    for (ids, y) in data {
        let probs = params.probabilities(ids);
        loss -= probs[*y].max(f64::MIN_POSITIVE).ln();
        cm.add(*y, argmax(&probs));
    }
    (loss / data.len() as f64, cm.scores())
}

fn argmax(v: &[f64]) -> usize {
    // first maximum wins on ties
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

impl Model {
    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn predict(&self, tokens: &[String]) -> Result<Prediction> {
        if tokens.is_empty() {
            return Err(Error::EmptyInput);
        }
        let probabilities = self.params.probabilities(&self.vocab.encode(tokens));
        Ok(Prediction {
            label: argmax(&probabilities),
            probabilities,
        })
    }

    pub fn predict_doc(&self, doc: &LabeledDocument) -> Result<Prediction> {
        self.predict(&doc.tokens)
    }

    /// Loss and scores on `docs`, using each document's own label.
    pub fn evaluate<'a>(&self, docs: impl IntoIterator<Item = &'a LabeledDocument>) -> Evaluation {
        let encoded: Vec<(Vec<usize>, usize)> = docs
            .into_iter()
            .filter(|d| !d.tokens.is_empty())
            .map(|d| (self.vocab.encode(&d.tokens), d.label))
            .collect();
        let (loss, scores) = evaluate_encoded(&self.params, &encoded, self.class_count());
        Evaluation { loss, scores }
    }

    pub fn accuracy(&self, corpus: &Corpus) -> f64 {
        self.evaluate(&corpus.documents).scores.accuracy
    }

    /// Zero the `fraction` of weight entries with the smallest magnitude,
    /// ranked globally over the embedding, hidden and output matrices.
    /// Biases are never touched. At least `ceil(fraction * total)` entries
    /// end up zero; ties break by position.
    pub fn prune(&self, fraction: f64) -> Result<Model> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(Error::InvalidConfig(format!(
                "prune fraction {fraction} outside [0, 1)"
            )));
        }
        let mut pruned = self.clone();
        let total: usize = pruned.params.weight_blocks().iter().map(|b| b.len()).sum();
        let count = (fraction * total as f64).ceil() as usize;
        if count == 0 {
            return Ok(pruned);
        }
        let mut entries: Vec<(f64, usize, usize)> = pruned
            .params
            .weight_blocks()
            .iter()
            .enumerate()
            .flat_map(|(b, block)| block.iter().enumerate().map(move |(i, w)| (w.abs(), b, i)))
            .collect();
        entries.select_nth_unstable_by(count - 1, |x, y| {
            x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2))
        });
        let blocks = pruned.params.weight_blocks_mut();
        for &(_, b, i) in &entries[..count] {
            blocks[b][i] = 0.0;
        }
        Ok(pruned)
    }

    pub fn zero_weight_count(&self) -> usize {
        self.params
            .weight_blocks()
            .iter()
            .map(|b| b.iter().filter(|w| **w == 0.0).count())
            .sum()
    }

    pub fn weight_count(&self) -> usize {
        self.params.weight_blocks().iter().map(|b| b.len()).sum()
    }

    fn body(&self) -> ModelBody {
        let enc = |v: &[f64]| {
            let mut bytes = Vec::with_capacity(v.len() * 8);
            for x in v {
                bytes.extend_from_slice(&x.to_le_bytes());
            }
            hex::encode(bytes)
        };
        ModelBody {
            version: MODEL_FILE_VERSION,
            classes: self.classes.clone(),
            vocab: self.vocab.words().to_vec(),
            dims: self.params.dims,
            config: self.config.clone(),
            config_digest: self.config.digest(),
            params: EncodedParams {
                embedding: enc(&self.params.embedding),
                hidden_weights: enc(&self.params.hidden_weights),
                hidden_bias: enc(&self.params.hidden_bias),
                output_weights: enc(&self.params.output_weights),
                output_bias: enc(&self.params.output_bias),
            },
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let body = self.body();
        let canonical = serde_json::to_string(&body).map_err(|e| Error::parse("model", e))?;
        let file = ModelFile {
            content_digest: seed::sha256_hex(canonical.as_bytes()),
            body,
        };
        serde_json::to_string(&file).map_err(|e| Error::parse("model", e))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            version: u32,
        }
        let header: Header = serde_json::from_str(text).map_err(|e| Error::parse("model", e))?;
        if header.version != MODEL_FILE_VERSION {
            return Err(Error::VersionMismatch {
                found: header.version,
                expected: MODEL_FILE_VERSION,
            });
        }
        let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::parse("model", e))?;
        let canonical = serde_json::to_string(&file.body).map_err(|e| Error::parse("model", e))?;
        let computed = seed::sha256_hex(canonical.as_bytes());
        if computed != file.content_digest {
            return Err(Error::DigestMismatch {
                stored: file.content_digest,
                computed,
            });
        }
        let body = file.body;
        if body.config.digest() != body.config_digest {
            return Err(Error::DigestMismatch {
                stored: body.config_digest,
                computed: body.config.digest(),
            });
        }
        let dec = |name: &str, s: &str, len: usize| -> Result<Vec<f64>> {
            let bytes = hex::decode(s).map_err(|e| Error::parse(format!("model {name}"), e))?;
            if bytes.len() != len * 8 {
                return Err(Error::parse(
                    format!("model {name}"),
                    format!("expected {len} values, found {} bytes", bytes.len()),
                ));
            }
            Ok(bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect())
        };
        let d = body.dims;
        if d.vocab != body.vocab.len() + 1 || d.classes != body.classes.len() {
            return Err(Error::parse("model", "dimensions disagree with vocabulary or classes"));
        }
        let params = Params {
            dims: d,
            embedding: dec("embedding", &body.params.embedding, d.vocab * d.embed)?,
            hidden_weights: dec("hidden_weights", &body.params.hidden_weights, d.embed * d.hidden)?,
            hidden_bias: dec("hidden_bias", &body.params.hidden_bias, d.hidden)?,
            output_weights: dec("output_weights", &body.params.output_weights, d.hidden * d.classes)?,
            output_bias: dec("output_bias", &body.params.output_bias, d.classes)?,
        };
        if !params.is_finite() {
            return Err(Error::parse("model", "non-finite parameter"));
        }
        Ok(Model {
            vocab: Vocabulary::from_words(body.vocab),
            classes: body.classes,
            params,
            config: body.config,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Digest of the serialized parameters; equal models give equal digests.
    pub fn param_digest(&self) -> String {
        let mut bytes = Vec::new();
        for block in self
            .params
            .weight_blocks()
            .into_iter()
            .chain([&self.params.hidden_bias[..], &self.params.output_bias[..]])
        {
            for x in block {
                bytes.extend_from_slice(&x.to_le_bytes());
            }
        }
        seed::sha256_hex(&bytes)
    }
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    model.save(path)
}

pub fn load_model(path: &Path) -> Result<Model> {
    Model::load(path)
}

#[derive(Serialize, Deserialize)]
struct EncodedParams {
    embedding: String,
    hidden_weights: String,
    hidden_bias: String,
    output_weights: String,
    output_bias: String,
}

#[derive(Serialize, Deserialize)]
struct ModelBody {
    version: u32,
    classes: Vec<String>,
    /// Known words in id order; id 0 (unknown) is implicit.
    vocab: Vec<String>,
    dims: Dims,
    config: TrainConfig,
    config_digest: String,
    params: EncodedParams,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    #[serde(flatten)]
    body: ModelBody,
    content_digest: String,
}
