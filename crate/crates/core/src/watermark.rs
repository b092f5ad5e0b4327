//! Embedding a trigger set at training time and verifying ownership of a
//! label-only prediction oracle.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::classifier::{self, Model, TrainConfig, TrainOutcome};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::trigger::TriggerSet;

/// Default ownership threshold on trigger accuracy.
pub const DEFAULT_THETA: f64 = 0.8;

/// Black-box access to a classifier: tokens in, class index out.
///
/// Implement this for a remote API to verify a deployed model; nothing else
/// in the crate needs to change. Return `Err` with a human-readable reason
/// when a query fails.
pub trait ModelOracle: Sync {
    fn query(&self, tokens: &[String]) -> std::result::Result<usize, String>;

    /// Whether `query` may be called from several threads at once.
    fn concurrent(&self) -> bool {
        false
    }
}

impl ModelOracle for Model {
    fn query(&self, tokens: &[String]) -> std::result::Result<usize, String> {
        self.predict(tokens).map(|p| p.label).map_err(|e| e.to_string())
    }

    fn concurrent(&self) -> bool {
        true
    }
}

impl<F> ModelOracle for F
where
    F: Fn(&[String]) -> std::result::Result<usize, String> + Sync,
{
    fn query(&self, tokens: &[String]) -> std::result::Result<usize, String> {
        self(tokens)
    }
}

/// Result of [`embed`]: the watermarked model and what training saw.
#[derive(Debug, Clone)]
pub struct Embedded {
    pub outcome: TrainOutcome,
    pub warnings: Vec<String>,
}

/// Train on the reduced corpus plus the trigger records under their assigned
/// labels.
pub fn embed(reduced_train: &Corpus, trigger: &TriggerSet, config: &TrainConfig) -> Result<Embedded> {
    let mut warnings = trigger.check_compatible(reduced_train)?;
    if trigger.is_empty() {
        warnings.push("trigger set is empty; this is plain training".into());
    }
    let outcome = classifier::train_with_extra(reduced_train, &trigger.as_documents(), config)?;
    Ok(Embedded { outcome, warnings })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Decision {
    Owned,
    NotOwned,
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Decision::Owned => "OWNED",
            Decision::NotOwned => "NOT_OWNED",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordOutcome {
    pub doc_id: String,
    /// `None` when the oracle failed on this record.
    pub predicted: Option<usize>,
    pub expected: usize,
    #[serde(rename = "match")]
    pub matched: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub trigger_count: usize,
    pub errored: usize,
    pub matches: usize,
    pub trigger_accuracy: f64,
    pub theta: f64,
    pub decision: Decision,
    pub chance_rate: f64,
    /// P(at least `matches` hits) for an oracle answering at chance.
    pub binomial_tail: f64,
    pub per_record: Vec<RecordOutcome>,
}

impl VerificationReport {
    fn assemble(per_record: Vec<RecordOutcome>, theta: f64, classes: usize) -> Self {
        let errored = per_record.iter().filter(|r| r.error.is_some()).count();
        let trigger_count = per_record.len() - errored;
        let matches = per_record.iter().filter(|r| r.matched).count();
        let trigger_accuracy = if trigger_count == 0 {
            0.0
        } else {
            matches as f64 / trigger_count as f64
        };
        let chance_rate = 1.0 / classes.max(1) as f64;
        Self {
            trigger_count,
            errored,
            matches,
            trigger_accuracy,
            theta,
            decision: decide(trigger_accuracy, theta),
            chance_rate,
            binomial_tail: binomial_tail(trigger_count, matches, chance_rate),
            per_record,
        }
    }

    /// Rebuild the summary from `per_record` alone.
    pub fn recompute(&self) -> Self {
        let classes = (1.0 / self.chance_rate).round() as usize;
        Self::assemble(self.per_record.clone(), self.theta, classes)
    }
}

pub fn decide(trigger_accuracy: f64, theta: f64) -> Decision {
    if trigger_accuracy >= theta {
        Decision::Owned
    } else {
        Decision::NotOwned
    }
}

/// `P[X >= k]` for `X ~ Binomial(n, p)`, summed in log space.
pub fn binomial_tail(n: usize, k: usize, p: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    let (lp, lq) = (p.ln(), (1.0 - p).ln());
    // ln C(n, i) built incrementally
    let mut ln_choose = 0.0;
    let mut terms = Vec::with_capacity(n + 1);
    for i in 0..=n {
        if i > 0 {
            ln_choose += ((n - i + 1) as f64).ln() - (i as f64).ln();
        }
        if i >= k {
            terms.push(ln_choose + i as f64 * lp + (n - i) as f64 * lq);
        }
    }
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    (max + sum.ln()).exp().min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub theta: f64,
    /// Mark failed queries in the report and drop them from the denominator
    /// instead of failing the whole verification.
    pub skip_errors: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            theta: DEFAULT_THETA,
            skip_errors: false,
        }
    }
}

/// Send every trigger record to `oracle` and compare with the assigned label.
pub fn verify(oracle: &dyn ModelOracle, trigger: &TriggerSet, theta: f64) -> Result<VerificationReport> {
    verify_with(oracle, trigger, VerifyOptions { theta, skip_errors: false })
}

/// Range checks on theta are the caller's job (the CLI rejects values
/// outside (0, 1]); any real threshold is accepted here so degenerate
/// settings can be studied.
pub fn verify_with(
    oracle: &dyn ModelOracle,
    trigger: &TriggerSet,
    options: VerifyOptions,
) -> Result<VerificationReport> {
    if trigger.is_empty() {
        return Err(Error::InvalidConfig("cannot verify with an empty trigger set".into()));
    }
    let answers = query_all(oracle, trigger);
    let mut per_record = Vec::with_capacity(answers.len());
    for (record, answer) in trigger.records.iter().zip(answers) {
        let outcome = match answer {
            Ok(predicted) => RecordOutcome {
                doc_id: record.doc_id.clone(),
                predicted: Some(predicted),
                expected: record.assigned_label,
                matched: predicted == record.assigned_label,
                error: None,
            },
            Err(reason) if options.skip_errors => RecordOutcome {
                doc_id: record.doc_id.clone(),
                predicted: None,
                expected: record.assigned_label,
                matched: false,
                error: Some(reason),
            },
            Err(reason) => {
                return Err(Error::Oracle {
                    doc_id: record.doc_id.clone(),
                    reason,
                })
            }
        };
        per_record.push(outcome);
    }
    Ok(VerificationReport::assemble(
        per_record,
        options.theta,
        trigger.classes.len(),
    ))
}

fn query_all(
    oracle: &dyn ModelOracle,
    trigger: &TriggerSet,
) -> Vec<std::result::Result<usize, String>> {
    let records = &trigger.records;
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(8);
    if !oracle.concurrent() || workers < 2 || records.len() < 2 * workers {
        return records.iter().map(|r| oracle.query(&r.tokens)).collect();
    }
    let chunk = records.len().div_ceil(workers);
    std::thread::scope(|scope| {
        let handles: Vec<_> = records
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || part.iter().map(|r| oracle.query(&r.tokens)).collect::<Vec<_>>())
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("oracle worker panicked"))
            .collect()
    })
}
