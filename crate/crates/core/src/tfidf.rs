//! Document-frequency index and per-document word ranking.
//!
//! Scores are `tf * ln(N / df)` with raw counts for `tf` and no smoothing.
//! The natural log is used; any other base rescales every score by the same
//! constant, so rankings do not depend on it.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, LabeledDocument};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Order {
    #[serde(rename = "ASC")]
    Asc,
    #[serde(rename = "DES")]
    Des,
}

impl FromStr for Order {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "ASC" => Ok(Order::Asc),
            "DES" | "DESC" => Ok(Order::Des),
            _ => Err(Error::InvalidConfig(format!(
                "strategy `{s}` (expected ASC or DES)"
            ))),
        }
    }
}

impl std::fmt::Display for Order {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Order::Asc => "ASC",
            Order::Des => "DES",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfIdfIndex {
    pub df: HashMap<String, usize>,
    pub n_docs: usize,
    pub source_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedDocument {
    pub doc_id: String,
    pub ranked_words: Vec<(String, f64)>,
    pub order: Order,
}

impl TfIdfIndex {
    pub fn build(corpus: &Corpus) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut df: HashMap<String, usize> = HashMap::new();
        for doc in &corpus.documents {
            let distinct: HashSet<&str> = doc.tokens.iter().map(String::as_str).collect();
            for w in distinct {
                *df.entry(w.to_string()).or_default() += 1;
            }
        }
        Ok(Self {
            df,
            n_docs: corpus.len(),
            source_digest: corpus.digest(),
        })
    }

    pub fn idf(&self, word: &str) -> Result<f64> {
        match self.df.get(word) {
            Some(&df) => Ok((self.n_docs as f64 / df as f64).ln()),
            None => Err(Error::UnindexedWord(word.to_string())),
        }
    }

    /// Score of `word` in `doc`; zero when the word does not occur in it.
    pub fn score(&self, word: &str, doc: &LabeledDocument) -> Result<f64> {
        let idf = self.idf(word)?;
        let tf = doc.tokens.iter().filter(|t| *t == word).count();
        Ok(tf as f64 * idf)
    }

    /// Distinct words of `doc` sorted by score. Ties keep first-occurrence
    /// order in both directions.
    pub fn rank_words(&self, doc: &LabeledDocument, order: Order) -> Result<RankedDocument> {
        let mut first_seen: Vec<&str> = Vec::new();
        let mut tf: HashMap<&str, usize> = HashMap::new();
        for t in &doc.tokens {
            let count = tf.entry(t.as_str()).or_default();
            if *count == 0 {
                first_seen.push(t.as_str());
            }
            *count += 1;
        }
        let mut scored = first_seen
            .into_iter()
            .map(|w| Ok((w.to_string(), tf[w] as f64 * self.idf(w)?)))
            .collect::<Result<Vec<_>>>()?;
        // sort_by is stable, so equal scores keep first-occurrence order
        match order {
            Order::Asc => scored.sort_by(|a, b| a.1.total_cmp(&b.1)),
            Order::Des => scored.sort_by(|a, b| b.1.total_cmp(&a.1)),
        }
        Ok(RankedDocument {
            doc_id: doc.id.clone(),
            ranked_words: scored,
            order,
        })
    }

    /// Debug dump `{n_docs, df}` with words sorted.
    pub fn to_json(&self) -> serde_json::Value {
        let df: BTreeMap<&str, usize> = self.df.iter().map(|(k, &v)| (k.as_str(), v)).collect();
        serde_json::json!({ "n_docs": self.n_docs, "df": df })
    }
}
