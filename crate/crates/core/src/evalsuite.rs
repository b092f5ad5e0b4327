//! Evaluation battery: fidelity, credibility, integrity, robustness under
//! pruning, efficiency, a random-query security probe, and a K sweep.
//!
//! Each experiment derives its seeds from the configured root seed plus a
//! fixed tag, so every report except efficiency timings is a pure function of
//! its inputs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::classifier::{self, EpochMetrics, Model, TrainConfig, TrainOutcome};
use crate::corpus::{Corpus, LabeledDocument};
use crate::error::{Error, Result};
use crate::seed;
use crate::tfidf::{Order, TfIdfIndex};
use crate::trigger::{self, GenerationConfig, TriggerSet};
use crate::watermark::{self, Decision, ModelOracle};

/// Held-out evaluation needs both halves.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub train: Corpus,
    pub test: Corpus,
}

/// One generate -> embed run.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub trigger: TriggerSet,
    pub reduced: Corpus,
    pub embedded: TrainOutcome,
}

pub fn run_pipeline(train: &Corpus, gen: &GenerationConfig, cfg: &TrainConfig) -> Result<PipelineRun> {
    let index = TfIdfIndex::build(train)?;
    let (trigger, reduced) = trigger::generate(train, &index, gen)?;
    let embedded = watermark::embed(&reduced, &trigger, cfg)?.outcome;
    Ok(PipelineRun { trigger, reduced, embedded })
}

/// Fraction of trigger records the oracle labels with the assigned label.
pub fn trigger_accuracy(oracle: &dyn ModelOracle, trigger: &TriggerSet) -> Result<f64> {
    Ok(watermark::verify(oracle, trigger, 1.0)?.trigger_accuracy)
}

/// Anything the suite writes: JSON via serde plus a flat CSV.
pub trait Report: Serialize {
    fn csv(&self) -> String;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyFidelity {
    pub strategy: Order,
    pub watermarked_accuracy: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub strategy: Order,
    pub original_accuracy: f64,
    pub watermarked_accuracy: f64,
    /// `original_accuracy - watermarked_accuracy`
    pub gap: f64,
    pub per_strategy: Vec<StrategyFidelity>,
}

impl Report for FidelityReport {
    fn csv(&self) -> String {
        let mut s = String::from("strategy,original_accuracy,watermarked_accuracy,gap\n");
        for r in &self.per_strategy {
            let _ = writeln!(s, "{},{},{},{}", r.strategy, self.original_accuracy, r.watermarked_accuracy, r.gap);
        }
        s
    }
}

fn with_strategy(gen: &GenerationConfig, strategy: Order) -> GenerationConfig {
    GenerationConfig { strategy, ..gen.clone() }
}

/// The configured strategy first, then the others requested, no repeats.
fn strategy_list(gen: &GenerationConfig, strategies: &[Order]) -> Vec<Order> {
    let mut out = vec![gen.strategy];
    for s in strategies {
        if !out.contains(s) {
            out.push(*s);
        }
    }
    out
}

pub fn run_fidelity(
    data: &ExperimentData,
    gen: &GenerationConfig,
    cfg: &TrainConfig,
    strategies: &[Order],
) -> Result<FidelityReport> {
    let original = classifier::train(&data.train, cfg)?.model;
    let original_accuracy = original.accuracy(&data.test);
    let mut per_strategy = Vec::new();
    for strategy in strategy_list(gen, strategies) {
        let run = run_pipeline(&data.train, &with_strategy(gen, strategy), cfg)?;
        let watermarked_accuracy = run.embedded.model.accuracy(&data.test);
        per_strategy.push(StrategyFidelity {
            strategy,
            watermarked_accuracy,
            gap: original_accuracy - watermarked_accuracy,
        });
    }
    let primary = per_strategy[0].clone();
    Ok(FidelityReport {
        strategy: primary.strategy,
        original_accuracy,
        watermarked_accuracy: primary.watermarked_accuracy,
        gap: primary.gap,
        per_strategy,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CredibilityRow {
    pub strategy: Order,
    pub trigger_count: usize,
    pub original_trigger_accuracy: f64,
    pub watermarked_trigger_accuracy: f64,
    pub separation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CredibilityReport {
    pub rows: Vec<CredibilityRow>,
}

impl CredibilityReport {
    pub fn row(&self, strategy: Order) -> Option<&CredibilityRow> {
        self.rows.iter().find(|r| r.strategy == strategy)
    }
}

impl Report for CredibilityReport {
    fn csv(&self) -> String {
        let mut s = String::from(
            "strategy,trigger_count,original_trigger_accuracy,watermarked_trigger_accuracy,separation\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.strategy, r.trigger_count, r.original_trigger_accuracy, r.watermarked_trigger_accuracy, r.separation
            );
        }
        s
    }
}

pub fn run_credibility(
    data: &ExperimentData,
    gen: &GenerationConfig,
    cfg: &TrainConfig,
    strategies: &[Order],
) -> Result<CredibilityReport> {
    let original = classifier::train(&data.train, cfg)?.model;
    let mut rows = Vec::new();
    for strategy in strategy_list(gen, strategies) {
        let run = run_pipeline(&data.train, &with_strategy(gen, strategy), cfg)?;
        let original_trigger_accuracy = trigger_accuracy(&original, &run.trigger)?;
        let watermarked_trigger_accuracy = trigger_accuracy(&run.embedded.model, &run.trigger)?;
        rows.push(CredibilityRow {
            strategy,
            trigger_count: run.trigger.len(),
            original_trigger_accuracy,
            watermarked_trigger_accuracy,
            separation: watermarked_trigger_accuracy - original_trigger_accuracy,
        });
    }
    Ok(CredibilityReport { rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrityEntry {
    pub model: String,
    pub seed: u64,
    pub trigger_accuracy: f64,
    pub decision: Decision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrityReport {
    pub theta: f64,
    pub unmarked: Vec<IntegrityEntry>,
    pub false_claims: usize,
    pub control: IntegrityEntry,
}

impl Report for IntegrityReport {
    fn csv(&self) -> String {
        let mut s = String::from("model,seed,trigger_accuracy,decision\n");
        for e in self.unmarked.iter().chain([&self.control]) {
            let _ = writeln!(s, "{},{},{},{}", e.model, e.seed, e.trigger_accuracy, e.decision);
        }
        s
    }
}

/// Train `n_unmarked` models without the key (fresh seeds) and count how
/// many would be claimed at `theta`; the watermarked model is the control.
pub fn run_integrity(
    data: &ExperimentData,
    gen: &GenerationConfig,
    cfg: &TrainConfig,
    n_unmarked: usize,
    theta: f64,
) -> Result<IntegrityReport> {
    if n_unmarked == 0 {
        return Err(Error::InvalidConfig("integrity needs at least one unmarked model".into()));
    }
    let run = run_pipeline(&data.train, gen, cfg)?;
    let mut unmarked = Vec::with_capacity(n_unmarked);
    for i in 0..n_unmarked {
        let seed = seed::derive(cfg.seed, &format!("unmarked-{i}"));
        let model = classifier::train(&data.train, &TrainConfig { seed, ..cfg.clone() })?.model;
        let report = watermark::verify(&model, &run.trigger, theta)?;
        unmarked.push(IntegrityEntry {
            model: format!("unmarked-{i}"),
            seed,
            trigger_accuracy: report.trigger_accuracy,
            decision: report.decision,
        });
    }
    let control_report = watermark::verify(&run.embedded.model, &run.trigger, theta)?;
    Ok(IntegrityReport {
        theta,
        false_claims: unmarked.iter().filter(|e| e.decision == Decision::Owned).count(),
        unmarked,
        control: IntegrityEntry {
            model: "watermarked".into(),
            seed: cfg.seed,
            trigger_accuracy: control_report.trigger_accuracy,
            decision: control_report.decision,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessPoint {
    pub prune_fraction: f64,
    pub test_accuracy: f64,
    pub trigger_accuracy: f64,
    pub train_loss: f64,
    pub validation_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessCurve {
    pub theta: f64,
    pub points: Vec<RobustnessPoint>,
}

impl Report for RobustnessCurve {
    fn csv(&self) -> String {
        let mut s = String::from("prune_fraction,test_accuracy,trigger_accuracy,train_loss,validation_loss\n");
        for p in &self.points {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                p.prune_fraction, p.test_accuracy, p.trigger_accuracy, p.train_loss, p.validation_loss
            );
        }
        s
    }
}

pub const DEFAULT_PRUNE_FRACTIONS: [f64; 6] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5];

/// Prune a copy of `model` at each fraction and re-evaluate. `train_loss` is
/// measured on `train` plus the trigger records, `validation_loss` on `test`.
pub fn run_robustness(
    model: &Model,
    trigger: &TriggerSet,
    train: &Corpus,
    test: &Corpus,
    fractions: &[f64],
    theta: f64,
) -> Result<RobustnessCurve> {
    if fractions.is_empty() {
        return Err(Error::InvalidConfig("no prune fractions given".into()));
    }
    if fractions.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig("prune fractions must be strictly increasing".into()));
    }
    let trigger_docs = trigger.as_documents();
    let fit: Vec<&LabeledDocument> = train.documents.iter().chain(&trigger_docs).collect();
    let mut points = Vec::with_capacity(fractions.len());
    for &fraction in fractions {
        let pruned = model.prune(fraction)?;
        let test_eval = pruned.evaluate(&test.documents);
        points.push(RobustnessPoint {
            prune_fraction: fraction,
            test_accuracy: test_eval.scores.accuracy,
            trigger_accuracy: trigger_accuracy(&pruned, trigger)?,
            train_loss: pruned.evaluate(fit.iter().copied()).loss,
            validation_loss: test_eval.loss,
        });
    }
    Ok(RobustnessCurve { theta, points })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub original_epoch_seconds: Vec<f64>,
    pub watermarked_epoch_seconds: Vec<f64>,
    pub original_mean: f64,
    pub watermarked_mean: f64,
    /// `watermarked_mean / original_mean`
    pub ratio: f64,
    /// `|T| / |D|`
    pub trigger_fraction: f64,
}

impl Report for EfficiencyReport {
    fn csv(&self) -> String {
        let mut s = String::from("epoch,original_seconds,watermarked_seconds\n");
        for (i, (a, b)) in self
            .original_epoch_seconds
            .iter()
            .zip(&self.watermarked_epoch_seconds)
            .enumerate()
        {
            let _ = writeln!(s, "{},{a},{b}", i + 1);
        }
        s
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

/// Time both trainings serially with identical configs.
pub fn run_efficiency(data: &ExperimentData, gen: &GenerationConfig, cfg: &TrainConfig) -> Result<EfficiencyReport> {
    let index = TfIdfIndex::build(&data.train)?;
    let (trigger, reduced) = trigger::generate(&data.train, &index, gen)?;
    let original = classifier::train(&data.train, cfg)?;
    let watermarked = watermark::embed(&reduced, &trigger, cfg)?.outcome;
    let (o, w) = (original.epoch_seconds, watermarked.epoch_seconds);
    if o.iter().chain(&w).any(|&t| t <= 0.0) {
        return Err(Error::InvalidConfig("epoch timer reported a non-positive duration".into()));
    }
    let (original_mean, watermarked_mean) = (mean(&o), mean(&w));
    Ok(EfficiencyReport {
        ratio: watermarked_mean / original_mean,
        trigger_fraction: trigger.len() as f64 / data.train.len() as f64,
        original_epoch_seconds: o,
        watermarked_epoch_seconds: w,
        original_mean,
        watermarked_mean,
    })
}

/// Shape of the random queries sent by [`run_security_probe`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSpec {
    pub vocabulary: Vec<String>,
    /// Empirical length distribution to sample from (trigger-set lengths).
    pub lengths: Vec<usize>,
    pub n_probes: usize,
    pub seed: u64,
}

impl ProbeSpec {
    pub fn from_trigger(model: &Model, trigger: &TriggerSet, n_probes: usize, seed: u64) -> Self {
        Self {
            vocabulary: model.vocab.words().to_vec(),
            lengths: trigger.records.iter().map(|r| r.tokens.len()).collect(),
            n_probes,
            seed,
        }
    }

    /// Uniform words from the vocabulary, lengths drawn from `lengths`.
    pub fn documents(&self) -> Result<Vec<Vec<String>>> {
        if self.n_probes < 100 {
            return Err(Error::InvalidConfig(format!(
                "security probe needs at least 100 queries, got {}",
                self.n_probes
            )));
        }
        if self.vocabulary.is_empty() || self.lengths.iter().all(|&l| l == 0) {
            return Err(Error::InvalidConfig("probe vocabulary or lengths empty".into()));
        }
        let lengths: Vec<usize> = self.lengths.iter().copied().filter(|&l| l > 0).collect();
        let mut rng = seed::rng(seed::derive(self.seed, "security-probe"));
        Ok((0..self.n_probes)
            .map(|_| {
                let len = lengths[rng.gen_range(0..lengths.len())];
                (0..len)
                    .map(|_| self.vocabulary[rng.gen_range(0..self.vocabulary.len())].clone())
                    .collect()
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecurityReport {
    pub n_probes: usize,
    pub class_fractions: Vec<f64>,
    pub base_rates: Vec<f64>,
    pub max_deviation: f64,
    pub method: String,
}

const PROBE_METHOD: &str = "random documents drawn uniformly from the model vocabulary with \
trigger-set lengths; measures whether blind queries reveal trigger behaviour";

/// Query `oracle` with random documents and compare its answer distribution
/// with `base_rates` (uniform when `None`).
pub fn run_security_probe(
    oracle: &dyn ModelOracle,
    spec: &ProbeSpec,
    classes: usize,
    base_rates: Option<Vec<f64>>,
) -> Result<SecurityReport> {
    let docs = spec.documents()?;
    let mut counts = vec![0usize; classes];
    for (i, d) in docs.iter().enumerate() {
        let label = oracle.query(d).map_err(|reason| Error::Oracle {
            doc_id: format!("probe-{i}"),
            reason,
        })?;
        if label >= classes {
            return Err(Error::Oracle {
                doc_id: format!("probe-{i}"),
                reason: format!("class {label} out of range"),
            });
        }
        counts[label] += 1;
    }
    let class_fractions: Vec<f64> = counts.iter().map(|&c| c as f64 / docs.len() as f64).collect();
    let base_rates = base_rates.unwrap_or_else(|| vec![1.0 / classes as f64; classes]);
    let max_deviation = class_fractions
        .iter()
        .zip(&base_rates)
        .map(|(f, b)| (f - b).abs())
        .fold(0.0, f64::max);
    Ok(SecurityReport {
        n_probes: docs.len(),
        class_fractions,
        base_rates,
        max_deviation,
        method: PROBE_METHOD.into(),
    })
}

/// Predicted-class distribution of `model` over `corpus`.
pub fn predicted_rates(model: &Model, corpus: &Corpus) -> Result<Vec<f64>> {
    let mut counts = vec![0usize; model.class_count()];
    for d in &corpus.documents {
        counts[model.predict_doc(d)?.label] += 1;
    }
    Ok(counts.iter().map(|&c| c as f64 / corpus.len().max(1) as f64).collect())
}

/// The probe run against both the unmarked and the watermarked model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecurityComparison {
    pub original: SecurityReport,
    pub watermarked: SecurityReport,
    /// Largest per-class gap between the two models' answer distributions.
    pub max_model_difference: f64,
}

impl Report for SecurityComparison {
    fn csv(&self) -> String {
        let mut s = String::from("class,original_fraction,watermarked_fraction,original_base_rate,watermarked_base_rate\n");
        for c in 0..self.original.class_fractions.len() {
            let _ = writeln!(
                s,
                "{c},{},{},{},{}",
                self.original.class_fractions[c],
                self.watermarked.class_fractions[c],
                self.original.base_rates[c],
                self.watermarked.base_rates[c]
            );
        }
        s
    }
}

pub fn compare_security(
    original: &Model,
    watermarked: &Model,
    trigger: &TriggerSet,
    test: &Corpus,
    n_probes: usize,
    seed: u64,
) -> Result<SecurityComparison> {
    let spec = ProbeSpec::from_trigger(watermarked, trigger, n_probes, seed);
    let classes = watermarked.class_count();
    let o = run_security_probe(original, &spec, classes, Some(predicted_rates(original, test)?))?;
    let w = run_security_probe(watermarked, &spec, classes, Some(predicted_rates(watermarked, test)?))?;
    let max_model_difference = o
        .class_fractions
        .iter()
        .zip(&w.class_fractions)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(SecurityComparison { original: o, watermarked: w, max_model_difference })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSweepRow {
    #[serde(rename = "K")]
    pub k: usize,
    pub accuracy: Option<f64>,
    pub trigger_accuracy: Option<f64>,
    pub final_epoch: Option<EpochMetrics>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSweepReport {
    pub rows: Vec<KSweepRow>,
}

impl Report for KSweepReport {
    fn csv(&self) -> String {
        let mut s = String::from(
            "K,accuracy,trigger_accuracy,training_loss,validation_loss,val_accuracy,precision,recall,f1,error\n",
        );
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            let m = r.final_epoch.as_ref();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                r.k,
                opt(r.accuracy),
                opt(r.trigger_accuracy),
                opt(m.map(|m| m.training_loss)),
                opt(m.map(|m| m.validation_loss)),
                opt(m.map(|m| m.accuracy)),
                opt(m.map(|m| m.precision)),
                opt(m.map(|m| m.recall)),
                opt(m.map(|m| m.f1)),
                r.error.as_deref().unwrap_or("").replace(',', ";"),
            );
        }
        s
    }
}

/// One full generate -> embed -> verify run per K. An infeasible K becomes
/// an error row; the sweep carries on.
pub fn run_k_sweep(
    data: &ExperimentData,
    ks: &[usize],
    gen: &GenerationConfig,
    cfg: &TrainConfig,
) -> Result<KSweepReport> {
    let mut seen = Vec::new();
    for &k in ks {
        if k == 0 || seen.contains(&k) {
            return Err(Error::InvalidConfig(format!("K values must be distinct and positive, got {k}")));
        }
        seen.push(k);
    }
    let rows = ks
        .iter()
        .map(|&k| {
            let gen = GenerationConfig { swap_words: k, ..gen.clone() };
            match run_pipeline(&data.train, &gen, cfg) {
                Ok(run) => {
                    let model = &run.embedded.model;
                    Ok(KSweepRow {
                        k,
                        accuracy: Some(model.accuracy(&data.test)),
                        trigger_accuracy: Some(trigger_accuracy(model, &run.trigger)?),
                        final_epoch: run.embedded.history.last().cloned(),
                        error: None,
                    })
                }
                Err(e @ (Error::InfeasibleSwap(_) | Error::ClassTooSmall { .. })) => Ok(KSweepRow {
                    k,
                    accuracy: None,
                    trigger_accuracy: None,
                    final_epoch: None,
                    error: Some(e.to_string()),
                }),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(KSweepReport { rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Fidelity,
    Credibility,
    Integrity,
    Robustness,
    Efficiency,
    Security,
    KSweep,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::Fidelity,
        Suite::Credibility,
        Suite::Integrity,
        Suite::Robustness,
        Suite::Efficiency,
        Suite::Security,
        Suite::KSweep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Fidelity => "fidelity",
            Suite::Credibility => "credibility",
            Suite::Integrity => "integrity",
            Suite::Robustness => "robustness",
            Suite::Efficiency => "efficiency",
            Suite::Security => "security",
            Suite::KSweep => "k-sweep",
        }
    }

    /// Comma-separated names, or `all`.
    pub fn parse_list(s: &str) -> Result<Vec<Suite>> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            if part == "all" {
                return Ok(Self::ALL.to_vec());
            }
            let suite: Suite = part.parse()?;
            if !out.contains(&suite) {
                out.push(suite);
            }
        }
        if out.is_empty() {
            return Err(Error::InvalidConfig("no suites selected".into()));
        }
        Ok(out)
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| {
                let valid: Vec<_> = Self::ALL.iter().map(|x| x.name()).collect();
                Error::InvalidConfig(format!("unknown suite `{s}`; valid: all, {}", valid.join(", ")))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub generation: GenerationConfig,
    pub training: TrainConfig,
    pub theta: f64,
    pub strategies: Vec<Order>,
    pub n_unmarked: usize,
    pub prune_fractions: Vec<f64>,
    pub k_values: Vec<usize>,
    pub n_probes: usize,
}

impl EvalSettings {
    pub fn new(generation: GenerationConfig, training: TrainConfig) -> Self {
        Self {
            generation,
            training,
            theta: watermark::DEFAULT_THETA,
            strategies: vec![Order::Asc, Order::Des],
            n_unmarked: 3,
            prune_fractions: DEFAULT_PRUNE_FRACTIONS.to_vec(),
            k_values: vec![4, 8, 16],
            n_probes: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub suite: String,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub json: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub settings: EvalSettings,
    pub train_digest: String,
    pub test_digest: String,
    pub reports: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn failures(&self) -> usize {
        self.reports.iter().filter(|r| r.status != "ok").count()
    }
}

fn write_report<R: Report>(dir: &Path, suite: Suite, report: &R) -> Result<ManifestEntry> {
    let json_path = dir.join(format!("{}.json", suite.name()));
    let csv_path = dir.join(format!("{}.csv", suite.name()));
    let json = serde_json::to_string_pretty(report).map_err(|e| Error::parse("report", e))?;
    fs::write(&json_path, json + "\n").map_err(|e| Error::io(&json_path, e))?;
    fs::write(&csv_path, report.csv()).map_err(|e| Error::io(&csv_path, e))?;
    let name = |p: &PathBuf| p.file_name().map(|n| n.to_string_lossy().into_owned());
    Ok(ManifestEntry {
        suite: suite.name().into(),
        status: "ok".into(),
        json: name(&json_path),
        csv: name(&csv_path),
        error: None,
    })
}

fn run_one(data: &ExperimentData, s: &EvalSettings, suite: Suite, dir: &Path) -> Result<ManifestEntry> {
    let gen = &s.generation;
    let cfg = &s.training;
    match suite {
        Suite::Fidelity => write_report(dir, suite, &run_fidelity(data, gen, cfg, &s.strategies)?),
        Suite::Credibility => write_report(dir, suite, &run_credibility(data, gen, cfg, &s.strategies)?),
        Suite::Integrity => write_report(dir, suite, &run_integrity(data, gen, cfg, s.n_unmarked, s.theta)?),
        Suite::Robustness => {
            let run = run_pipeline(&data.train, gen, cfg)?;
            let curve = run_robustness(
                &run.embedded.model,
                &run.trigger,
                &run.reduced,
                &data.test,
                &s.prune_fractions,
                s.theta,
            )?;
            write_report(dir, suite, &curve)
        }
        Suite::Efficiency => write_report(dir, suite, &run_efficiency(data, gen, cfg)?),
        Suite::Security => {
            let original = classifier::train(&data.train, cfg)?.model;
            let run = run_pipeline(&data.train, gen, cfg)?;
            let cmp = compare_security(
                &original,
                &run.embedded.model,
                &run.trigger,
                &data.test,
                s.n_probes,
                seed::derive(gen.seed, "security"),
            )?;
            write_report(dir, suite, &cmp)
        }
        Suite::KSweep => write_report(dir, suite, &run_k_sweep(data, &s.k_values, gen, cfg)?),
    }
}

/// Run the selected suites serially, writing `<suite>.json`, `<suite>.csv`
/// and `manifest.json` into `dir`. A failing suite is recorded in the
/// manifest and does not stop the others.
pub fn evaluate(data: &ExperimentData, settings: &EvalSettings, suites: &[Suite], dir: &Path) -> Result<Manifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let reports = suites
        .iter()
        .map(|&suite| {
            run_one(data, settings, suite, dir).unwrap_or_else(|e| ManifestEntry {
                suite: suite.name().into(),
                status: "error".into(),
                json: None,
                csv: None,
                error: Some(e.to_string()),
            })
        })
        .collect();
    let manifest = Manifest {
        settings: settings.clone(),
        train_digest: data.train.digest(),
        test_digest: data.test.digest(),
        reports,
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::parse("manifest", e))?;
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}
