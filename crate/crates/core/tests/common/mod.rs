//! Independent reference implementations used by the integration tests.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashSet};

use textmark::corpus::{Corpus, LabeledDocument};
use textmark::tfidf::Order;
use textmark::trigger::{TriggerRecord, TriggerSet};

/// Term frequency times natural-log inverse document frequency, by direct
/// counting over the whole corpus.
pub fn brute_score(corpus: &Corpus, word: &str, doc: &LabeledDocument) -> f64 {
    let tf = doc.tokens.iter().filter(|t| t.as_str() == word).count() as f64;
    let mut df = 0usize;
    for d in &corpus.documents {
        if d.tokens.iter().any(|t| t == word) {
            df += 1;
        }
    }
    tf * (corpus.len() as f64 / df as f64).ln()
}

/// Distinct words of `doc` in first-occurrence order, stably sorted by score.
pub fn brute_rank(corpus: &Corpus, doc: &LabeledDocument, order: Order) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut words: Vec<(String, f64)> = Vec::new();
    for t in &doc.tokens {
        if seen.insert(t.clone()) {
            words.push((t.clone(), brute_score(corpus, t, doc)));
        }
    }
    match order {
        Order::Asc => words.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap()),
        Order::Des => words.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap()),
    }
    words.into_iter().map(|(w, _)| w).collect()
}

/// First `k` words of each list, dropping any word that lands in both
/// prefixes until they are disjoint, trimmed to equal length.
pub fn brute_plan(a: &[String], b: &[String], k: usize) -> (Vec<String>, Vec<String>) {
    let mut dropped: BTreeSet<String> = BTreeSet::new();
    loop {
        let pa: Vec<String> = a.iter().filter(|w| !dropped.contains(*w)).take(k).cloned().collect();
        let pb: Vec<String> = b.iter().filter(|w| !dropped.contains(*w)).take(k).cloned().collect();
        let both: Vec<String> = pa.iter().filter(|w| pb.contains(w)).cloned().collect();
        if both.is_empty() {
            let n = pa.len().min(pb.len());
            return (pa[..n].to_vec(), pb[..n].to_vec());
        }
        dropped.extend(both);
    }
}

/// Every structural property a trigger set must satisfy relative to the
/// training corpus it was drawn from and the reduced corpus left behind.
/// Returns a description of the first violation.
pub fn check_trigger_structure(
    train: &Corpus,
    trigger: &TriggerSet,
    reduced: &Corpus,
    pairs: usize,
    swap_words: usize,
    order: Order,
) -> Result<(), String> {
    let by_id: BTreeMap<&str, &LabeledDocument> =
        train.documents.iter().map(|d| (d.id.as_str(), d)).collect();
    let records: BTreeMap<&str, &TriggerRecord> =
        trigger.records.iter().map(|r| (r.doc_id.as_str(), r)).collect();
    let c = train.class_count();
    let expected = 2 * pairs * c * (c - 1) / 2;
    if trigger.records.len() != expected {
        return Err(format!("{} records, expected {expected}", trigger.records.len()));
    }
    if records.len() != trigger.records.len() {
        return Err("duplicate trigger doc ids".into());
    }

    let mut per_class = vec![0usize; c];
    for r in &trigger.records {
        per_class[r.assigned_label] += 1;
    }
    if per_class.iter().any(|&n| n != per_class[0]) {
        return Err(format!("unbalanced assigned labels {per_class:?}"));
    }

    let mut ids: BTreeSet<&str> = reduced.documents.iter().map(|d| d.id.as_str()).collect();
    if ids.len() != reduced.len() {
        return Err("duplicate ids in reduced corpus".into());
    }
    for r in &trigger.records {
        if !ids.insert(r.doc_id.as_str()) {
            return Err(format!("{} is both a trigger source and still in training", r.doc_id));
        }
    }
    if ids != by_id.keys().copied().collect::<BTreeSet<_>>() || reduced.len() + trigger.len() != train.len() {
        return Err("reduced corpus and trigger set do not partition the training corpus".into());
    }
    for d in &reduced.documents {
        if by_id.get(d.id.as_str()) != Some(&d) {
            return Err(format!("reduced document {} was modified", d.id));
        }
    }

    for r in &trigger.records {
        let original = by_id[r.doc_id.as_str()];
        let partner = records
            .get(r.partner_id.as_str())
            .ok_or_else(|| format!("partner {} of {} is not a record", r.partner_id, r.doc_id))?;
        if partner.partner_id != r.doc_id {
            return Err(format!("{} and {} are not mutual partners", r.doc_id, r.partner_id));
        }
        if r.original_label != original.label
            || r.assigned_label != partner.original_label
            || r.assigned_label == r.original_label
        {
            return Err(format!("label swap broken for {}", r.doc_id));
        }
        let partner_doc = by_id[r.partner_id.as_str()];
        let (out, inn) = brute_plan(
            &brute_rank(train, original, order),
            &brute_rank(train, partner_doc, order),
            swap_words,
        );
        if out.is_empty() || r.swapped_out != out || r.swapped_in != inn {
            return Err(format!(
                "swap lists for {} are {:?} -> {:?}, oracle says {:?} -> {:?}",
                r.doc_id, r.swapped_out, r.swapped_in, out, inn
            ));
        }
        if r.tokens.len() != original.tokens.len() {
            return Err(format!("length of {} changed", r.doc_id));
        }
        for (pos, (before, after)) in original.tokens.iter().zip(&r.tokens).enumerate() {
            let want = match out.iter().position(|w| w == before) {
                Some(k) => &inn[k],
                None => before,
            };
            if after != want {
                return Err(format!("{} position {pos}: {after} should be {want}", r.doc_id));
            }
        }
        if r.swapped_out.iter().any(|w| r.tokens.contains(w)) {
            return Err(format!("a swapped-out word survives in {}", r.doc_id));
        }
        if !r.swapped_in.iter().all(|w| r.tokens.contains(w)) {
            return Err(format!("a swapped-in word is missing from {}", r.doc_id));
        }
    }
    Ok(())
}
