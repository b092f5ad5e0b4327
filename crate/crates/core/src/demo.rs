//! Synthetic two-class review corpus for offline runs.
//!
//! Each document mixes three kinds of content words: a small set of very
//! common neutral words, a class-specific sentiment vocabulary (with some
//! cross-class noise), and a long Zipfian tail of rare neutral words. Raw
//! text also carries stop words, capitalization and punctuation so the
//! normalizer has real work to do.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::corpus::{self, Corpus, NormalizationConfig, Normalizer, Provenance, RawDocument};
use crate::error::Result;
use crate::evalsuite::ExperimentData;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoConfig {
    pub documents: usize,
    pub min_words: usize,
    pub max_words: usize,
    pub common_vocab: usize,
    pub sentiment_vocab: usize,
    pub rare_vocab: usize,
    /// Zipf exponent of the rare-word pool.
    pub rare_exponent: f64,
    /// Share of content words drawn from the common pool.
    pub common_share: f64,
    /// Share drawn from the sentiment pools.
    pub sentiment_share: f64,
    /// Probability that a sentiment word comes from the other class.
    pub sentiment_noise: f64,
    pub seed: u64,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            documents: 2500,
            min_words: 60,
            max_words: 140,
            common_vocab: 120,
            sentiment_vocab: 150,
            rare_vocab: 30000,
            rare_exponent: 1.05,
            common_share: 0.45,
            sentiment_share: 0.2,
            sentiment_noise: 0.15,
            seed: 1,
        }
    }
}

pub const DEMO_CLASSES: [&str; 2] = ["neg", "pos"];

const ONSETS: [&str; 16] = [
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "ch", "st",
];
const VOWELS: [&str; 6] = ["a", "e", "i", "o", "u", "ai"];

/// Distinct pronounceable words; `namespace` keeps pools disjoint.
fn pseudo_words(namespace: usize, n: usize, reject: &Normalizer) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    let mut i = namespace * 1_000_000;
    while out.len() < n {
        let mut x = i;
        let mut w = String::new();
        for _ in 0..3 {
            w.push_str(ONSETS[x % ONSETS.len()]);
            x /= ONSETS.len();
            w.push_str(VOWELS[x % VOWELS.len()]);
            x /= VOWELS.len();
        }
        w.push_str(ONSETS[(namespace * 5 + x) % ONSETS.len()]);
        i += 1;
        if !reject.is_stopword(&w) {
            out.push(w);
        }
    }
    out
}

fn zipf(n: usize, exponent: f64) -> WeightedIndex<f64> {
    WeightedIndex::new((1..=n).map(|r| 1.0 / (r as f64).powf(exponent))).expect("non-empty pool")
}

const FILLER: [&str; 12] = [
    "the", "a", "and", "of", "to", "is", "it", "this", "was", "in", "but", "with",
];

/// Generate raw records, balanced across the two classes.
pub fn generate(config: &DemoConfig) -> Vec<RawDocument> {
    let stop = Normalizer::new(&Default::default()).expect("bundled stop list");
    let common = pseudo_words(1, config.common_vocab, &stop);
    let sentiment = [
        pseudo_words(2, config.sentiment_vocab, &stop),
        pseudo_words(3, config.sentiment_vocab, &stop),
    ];
    let rare = pseudo_words(4, config.rare_vocab, &stop);
    let common_dist = zipf(common.len(), 1.0);
    let sentiment_dist = zipf(config.sentiment_vocab, 0.8);
    let rare_dist = zipf(rare.len(), config.rare_exponent);

    let mut rng = seed::rng(seed::derive(config.seed, "demo-corpus"));
    (0..config.documents)
        .map(|i| {
            let label = i % 2;
            let len = rng.gen_range(config.min_words..=config.max_words);
            let mut text = String::new();
            for k in 0..len {
                let roll: f64 = rng.gen();
                let word = if roll < config.common_share {
                    &common[common_dist.sample(&mut rng)]
                } else if roll < config.common_share + config.sentiment_share {
                    let side = if rng.gen_bool(config.sentiment_noise) { 1 - label } else { label };
                    &sentiment[side][sentiment_dist.sample(&mut rng)]
                } else {
                    &rare[rare_dist.sample(&mut rng)]
                };
                if rng.gen_bool(0.3) {
                    text.push_str(FILLER[rng.gen_range(0..FILLER.len())]);
                    text.push(' ');
                }
                if k == 0 || rng.gen_bool(0.05) {
                    let mut cs = word.chars();
                    if let Some(first) = cs.next() {
                        text.extend(first.to_uppercase());
                        text.push_str(cs.as_str());
                    }
                } else {
                    text.push_str(word);
                }
                if rng.gen_bool(0.08) {
                    text.push_str([",", ".", "!", "?", ";"][rng.gen_range(0..5)]);
                }
                text.push(' ');
            }
            RawDocument {
                id: format!("demo-{i:05}"),
                text: text.trim_end().to_string(),
                label: DEMO_CLASSES[label].to_string(),
            }
        })
        .collect()
}

/// Generated documents as a normalized corpus.
pub fn corpus(config: &DemoConfig) -> Result<Corpus> {
    let norm = NormalizationConfig::default();
    let provenance = Provenance {
        source: format!("demo:seed={}:docs={}", config.seed, config.documents),
        normalization_digest: norm.digest(),
    };
    Ok(Corpus::from_raw(generate(config), &Normalizer::new(&norm)?, provenance)?.0)
}

/// Generated corpus split into train and test halves.
pub fn experiment_data(config: &DemoConfig, test_fraction: f64) -> Result<ExperimentData> {
    let all = corpus(config)?;
    let (train, test) = corpus::split(&all, test_fraction, seed::derive(config.seed, "split"))?;
    Ok(ExperimentData { train, test })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_balanced() {
        let cfg = DemoConfig { documents: 40, ..Default::default() };
        let a = generate(&cfg);
        assert_eq!(a, generate(&cfg));
        assert_eq!(a.iter().filter(|d| d.label == "pos").count(), 20);
        let other = generate(&DemoConfig { seed: 2, ..cfg });
        assert_ne!(a, other);
    }

    #[test]
    fn pools_are_disjoint_and_avoid_stop_words() {
        let stop = Normalizer::new(&Default::default()).unwrap();
        let a = pseudo_words(1, 300, &stop);
        let b = pseudo_words(2, 300, &stop);
        assert!(a.iter().all(|w| !b.contains(w)));
        let unique: std::collections::HashSet<_> = a.iter().collect();
        assert_eq!(unique.len(), a.len());
    }
}
