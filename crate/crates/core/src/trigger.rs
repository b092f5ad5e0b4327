//! Trigger-set generation by cross-class word exchange.
//!
//! For every unordered pair of classes, `B` document pairs are drawn without
//! replacement from the training corpus. Both documents of a pair are ranked
//! by TF-IDF, their first `K` ranked words are exchanged rank by rank (every
//! occurrence, in place), and each document takes its partner's label. The
//! modified documents are the watermark key; the originals leave the
//! training corpus.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, LabeledDocument};
use crate::error::{Error, Result};
use crate::seed;
use crate::tfidf::{Order, TfIdfIndex};

pub const TRIGGER_FILE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    /// Document pairs drawn per unordered class pairing.
    #[serde(rename = "B")]
    pub pairs: usize,
    /// Ranked words exchanged per pair.
    #[serde(rename = "K")]
    pub swap_words: usize,
    pub strategy: Order,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_hint: Option<f64>,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            pairs: 100,
            swap_words: 80,
            strategy: Order::Asc,
            seed: 0,
            theta_hint: None,
        }
    }
}

impl GenerationConfig {
    /// Defaults with `B` scaled to the smallest class: one pair per 40
    /// documents, capped at 100.
    pub fn for_corpus(corpus: &Corpus) -> Self {
        let smallest = corpus.class_counts().into_iter().min().unwrap_or(0);
        Self {
            pairs: (smallest / 40).clamp(1, 100),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pairs == 0 {
            return Err(Error::InvalidConfig("B must be at least 1".into()));
        }
        if self.swap_words == 0 {
            return Err(Error::InvalidConfig("K must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggerRecord {
    pub doc_id: String,
    pub partner_id: String,
    pub tokens: Vec<String>,
    pub original_label: usize,
    pub assigned_label: usize,
    pub swapped_out: Vec<String>,
    pub swapped_in: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerSet {
    pub version: u32,
    pub config: GenerationConfig,
    pub corpus_digest: String,
    pub classes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<u64>,
    pub records: Vec<TriggerRecord>,
}

impl TriggerSet {
    /// An empty key over the given classes; used for degenerate baselines.
    pub fn empty(config: GenerationConfig, corpus: &Corpus) -> Self {
        Self {
            version: TRIGGER_FILE_VERSION,
            config,
            corpus_digest: corpus.digest(),
            classes: corpus.classes.clone(),
            created_at: None,
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records as training documents carrying their assigned labels.
    pub fn as_documents(&self) -> Vec<LabeledDocument> {
        self.records
            .iter()
            .map(|r| LabeledDocument {
                id: r.doc_id.clone(),
                tokens: r.tokens.clone(),
                label: r.assigned_label,
            })
            .collect()
    }

    pub fn per_class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes.len()];
        for r in &self.records {
            if let Some(c) = counts.get_mut(r.assigned_label) {
                *c += 1;
            }
        }
        counts
    }

    /// Structural checks that must hold for any key this crate writes.
    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for r in &self.records {
            let bad = |why: &str| Error::parse("trigger set", format!("record `{}`: {why}", r.doc_id));
            if r.assigned_label >= self.classes.len() || r.original_label >= self.classes.len() {
                return Err(bad("label out of range"));
            }
            if r.assigned_label == r.original_label {
                return Err(bad("assigned label equals original label"));
            }
            if r.swapped_in.len() != r.swapped_out.len() || r.swapped_in.is_empty() {
                return Err(bad("swap lists empty or of unequal length"));
            }
            if r.tokens.is_empty() {
                return Err(bad("no tokens"));
            }
            if !ids.insert(r.doc_id.as_str()) {
                return Err(Error::DuplicateId(r.doc_id.clone()));
            }
        }
        Ok(())
    }

    /// A warning when `corpus` is not the one this key was generated from.
    pub fn check_source(&self, corpus: &Corpus) -> Option<String> {
        let digest = corpus.digest();
        (digest != self.corpus_digest).then(|| {
            format!(
                "corpus digest {} differs from the trigger set's source digest {}",
                &digest[..12],
                &self.corpus_digest[..self.corpus_digest.len().min(12)]
            )
        })
    }

    /// Checks that `reduced_train` can be combined with this key: same class
    /// set and no trigger source document still present. Returns warnings.
    pub fn check_compatible(&self, reduced_train: &Corpus) -> Result<Vec<String>> {
        if reduced_train.classes != self.classes {
            return Err(Error::InvalidConfig(format!(
                "class sets differ: corpus {:?}, trigger set {:?}",
                reduced_train.classes, self.classes
            )));
        }
        let ids: HashSet<&str> = reduced_train.documents.iter().map(|d| d.id.as_str()).collect();
        let overlap = self
            .records
            .iter()
            .filter(|r| ids.contains(r.doc_id.as_str()))
            .count();
        let mut warnings = Vec::new();
        if overlap > 0 {
            warnings.push(format!(
                "{overlap} trigger source document(s) are still present in the training corpus"
            ));
        }
        Ok(warnings)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::parse("trigger set", e))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            version: u32,
        }
        let header: Header =
            serde_json::from_str(text).map_err(|e| Error::parse("trigger set", e))?;
        if header.version != TRIGGER_FILE_VERSION {
            return Err(Error::VersionMismatch {
                found: header.version,
                expected: TRIGGER_FILE_VERSION,
            });
        }
        let set: TriggerSet =
            serde_json::from_str(text).map_err(|e| Error::parse("trigger set", e))?;
        set.validate()?;
        Ok(set)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut body = self.to_json()?;
        body.push('\n');
        fs::write(path, body).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// SHA-256 of the serialized key; what an owner writes down.
    pub fn digest(&self) -> Result<String> {
        Ok(seed::sha256_hex(self.to_json()?.as_bytes()))
    }
}

pub fn save_trigger(trigger: &TriggerSet, path: &Path) -> Result<()> {
    trigger.save(path)
}

pub fn load_trigger(path: &Path) -> Result<TriggerSet> {
    TriggerSet::load(path)
}

/// Ranked-word lists for one pair after shared words are removed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwapPlan {
    /// Words leaving the first document, in rank order.
    pub out_words: Vec<String>,
    /// Words entering the first document (leaving the partner), same order.
    pub in_words: Vec<String>,
}

/// Pick the words to exchange between two ranked word lists.
///
/// A word sitting in both prefixes would end up back in the document it was
/// removed from, so it is excluded from both lists and the next ranked word
/// moves up. Repeats until the two prefixes are disjoint.
pub fn plan_swap(ranked: &[String], partner_ranked: &[String], k: usize) -> SwapPlan {
    let mut excluded: HashSet<&str> = HashSet::new();
    loop {
        let prefix = |list: &'_ [String], excluded: &HashSet<&str>| -> Vec<usize> {
            list.iter()
                .enumerate()
                .filter(|(_, w)| !excluded.contains(w.as_str()))
                .map(|(i, _)| i)
                .take(k)
                .collect()
        };
        let a = prefix(ranked, &excluded);
        let b = prefix(partner_ranked, &excluded);
        let b_words: HashSet<&str> = b.iter().map(|&i| partner_ranked[i].as_str()).collect();
        let shared: Vec<&str> = a
            .iter()
            .map(|&i| ranked[i].as_str())
            .filter(|w| b_words.contains(w))
            .collect();
        if shared.is_empty() {
            let eff = a.len().min(b.len());
            return SwapPlan {
                out_words: a[..eff].iter().map(|&i| ranked[i].clone()).collect(),
                in_words: b[..eff].iter().map(|&i| partner_ranked[i].clone()).collect(),
            };
        }
        excluded.extend(shared);
    }
}

/// Replace every occurrence of `from[k]` with `to[k]`, in place.
pub fn apply_swap(tokens: &[String], from: &[String], to: &[String]) -> Vec<String> {
    let map: HashMap<&str, &str> = from
        .iter()
        .map(String::as_str)
        .zip(to.iter().map(String::as_str))
        .collect();
    tokens
        .iter()
        .map(|t| map.get(t.as_str()).map_or_else(|| t.clone(), |s| s.to_string()))
        .collect()
}

fn distinct_count(doc: &LabeledDocument) -> usize {
    doc.tokens.iter().collect::<HashSet<_>>().len()
}

/// Build the trigger set from `train`. Returns the key and the training corpus
/// with every consumed document removed.
pub fn generate(
    train: &Corpus,
    index: &TfIdfIndex,
    config: &GenerationConfig,
) -> Result<(TriggerSet, Corpus)> {
    config.validate()?;
    let n_classes = train.class_count();
    let needed = config.pairs * (n_classes - 1);
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, d) in train.documents.iter().enumerate() {
        pools[d.label].push(i);
    }
    for (c, pool) in pools.iter().enumerate() {
        if pool.len() < needed {
            return Err(Error::ClassTooSmall {
                class: train.classes[c].clone(),
                have: pool.len(),
                need: needed,
            });
        }
    }
    let longest = train.documents.iter().map(distinct_count).max().unwrap_or(0);
    if config.swap_words > longest {
        return Err(Error::InfeasibleSwap(format!(
            "K = {} exceeds the distinct-word count of every document (max {longest})",
            config.swap_words
        )));
    }

    let mut rng = seed::rng(config.seed);
    let mut consumed = vec![false; train.len()];
    let mut records = Vec::with_capacity(2 * config.pairs * n_classes * (n_classes - 1) / 2);

    let draw = |pool: &mut Vec<usize>, rng: &mut seed::Rng| -> usize {
        let at = rng.gen_range(0..pool.len());
        pool.remove(at)
    };

    for a in 0..n_classes {
        for b in (a + 1)..n_classes {
            for _ in 0..config.pairs {
                let i = draw(&mut pools[a], &mut rng);
                let j = draw(&mut pools[b], &mut rng);
                let (doc, partner) = (&train.documents[i], &train.documents[j]);
                let words = |d: &LabeledDocument| -> Result<Vec<String>> {
                    Ok(index
                        .rank_words(d, config.strategy)?
                        .ranked_words
                        .into_iter()
                        .map(|(w, _)| w)
                        .collect())
                };
                let plan = plan_swap(&words(doc)?, &words(partner)?, config.swap_words);
                if plan.out_words.is_empty() {
                    return Err(Error::InfeasibleSwap(format!(
                        "documents `{}` and `{}` share every candidate word",
                        doc.id, partner.id
                    )));
                }
                records.push(TriggerRecord {
                    doc_id: doc.id.clone(),
                    partner_id: partner.id.clone(),
                    tokens: apply_swap(&doc.tokens, &plan.out_words, &plan.in_words),
                    original_label: doc.label,
                    assigned_label: partner.label,
                    swapped_out: plan.out_words.clone(),
                    swapped_in: plan.in_words.clone(),
                });
                records.push(TriggerRecord {
                    doc_id: partner.id.clone(),
                    partner_id: doc.id.clone(),
                    tokens: apply_swap(&partner.tokens, &plan.in_words, &plan.out_words),
                    original_label: partner.label,
                    assigned_label: doc.label,
                    swapped_out: plan.in_words,
                    swapped_in: plan.out_words,
                });
                consumed[i] = true;
                consumed[j] = true;
            }
        }
    }

    let reduced = train.with_documents(
        train
            .documents
            .iter()
            .zip(&consumed)
            .filter(|(_, &c)| !c)
            .map(|(d, _)| d.clone())
            .collect(),
    );
    let trigger = TriggerSet {
        version: TRIGGER_FILE_VERSION,
        config: config.clone(),
        corpus_digest: train.digest(),
        classes: train.classes.clone(),
        created_at: None,
        records,
    };
    Ok((trigger, reduced))
}
