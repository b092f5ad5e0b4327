//! End-to-end acceptance checks at desk scale. Every criterion is evaluated,
//! one PASS/FAIL line is printed per criterion, and the test fails at the end
//! if any of them did. Runs without the libtest harness so the table is
//! always printed.

mod common;

use std::path::Path;
use std::process::{Command, Stdio};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use textmark::classifier::network::{softmax, Dims, Example, Params};
use textmark::classifier::{self, Model, TrainConfig};
use textmark::corpus::{Corpus, LabeledDocument, Provenance};
use textmark::demo::{self, DemoConfig};
use textmark::evalsuite::{self, ExperimentData, PipelineRun};
use textmark::tfidf::{Order, TfIdfIndex};
use textmark::trigger::{self, GenerationConfig};
use textmark::watermark::Decision;

const SEEDS: u64 = 3;
const PAIRS: usize = 25;
const K: usize = 12;
const THETA: f64 = 0.8;

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn outcome(name: &'static str, pass: bool, detail: String) -> Outcome {
    Outcome { name, pass, detail }
}

/// Everything trained once per seed and shared by several criteria.
struct SeedRun {
    data: ExperimentData,
    cfg: TrainConfig,
    gen: GenerationConfig,
    original: Model,
    asc: PipelineRun,
    des: PipelineRun,
}

fn seed_run(s: u64) -> SeedRun {
    let data = demo::experiment_data(&DemoConfig { seed: 1 + s, ..Default::default() }, 0.2).unwrap();
    let cfg = TrainConfig { seed: 10 + s, ..Default::default() };
    let gen = GenerationConfig { pairs: PAIRS, swap_words: K, seed: 20 + s, ..Default::default() };
    let original = classifier::train(&data.train, &cfg).unwrap().model;
    let asc = evalsuite::run_pipeline(&data.train, &gen, &cfg).unwrap();
    let des = evalsuite::run_pipeline(&data.train, &GenerationConfig { strategy: Order::Des, ..gen.clone() }, &cfg)
        .unwrap();
    SeedRun { data, cfg, gen, original, asc, des }
}

fn trig(model: &Model, run: &PipelineRun) -> f64 {
    evalsuite::trigger_accuracy(model, &run.trigger).unwrap()
}

fn random_corpus(rng: &mut ChaCha8Rng, docs: usize) -> Corpus {
    let vocab: Vec<String> = (0..40).map(|i| format!("w{i}")).collect();
    let documents = (0..docs)
        .map(|i| {
            let len = rng.gen_range(1..30);
            // Skewed draws so document frequencies span the whole range.
            let tokens = (0..len)
                .map(|_| {
                    let u: f64 = rng.gen();
                    vocab[((u * u) * vocab.len() as f64) as usize].clone()
                })
                .collect();
            LabeledDocument { id: format!("d{i}"), tokens, label: i % 2 }
        })
        .collect();
    Corpus::new(
        documents,
        vec!["a".into(), "b".into()],
        Provenance { source: "random".into(), normalization_digest: String::new() },
    )
    .unwrap()
}

fn tfidf_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let corpus = random_corpus(&mut rng, 50);
    let index = TfIdfIndex::build(&corpus).unwrap();
    let mut worst = 0.0f64;
    let mut pairs = 0usize;
    let words: std::collections::BTreeSet<&String> = corpus.documents.iter().flat_map(|d| &d.tokens).collect();
    for doc in &corpus.documents {
        for w in &words {
            let want = common::brute_score(&corpus, w, doc);
            let got = index.score(w, doc).unwrap();
            let err = if want == 0.0 { got.abs() } else { ((got - want) / want).abs() };
            worst = worst.max(err);
            pairs += 1;
        }
    }
    outcome("tfidf-oracle", worst <= 1e-12, format!("{pairs} (word, doc) pairs, max relative error {worst:.3e}"))
}

fn trigger_structure() -> Outcome {
    let train = demo::corpus(&DemoConfig { documents: 400, seed: 9, ..Default::default() }).unwrap();
    let index = TfIdfIndex::build(&train).unwrap();
    let mut failures = Vec::new();
    for i in 0..100u64 {
        let order = if i % 2 == 0 { Order::Asc } else { Order::Des };
        let pairs = 5 + (i as usize % 4) * 5;
        let k = 4 + (i as usize % 5) * 3;
        let cfg = GenerationConfig { pairs, swap_words: k, strategy: order, seed: 1000 + i, theta_hint: None };
        let (set, reduced) = trigger::generate(&train, &index, &cfg).unwrap();
        if let Err(e) = common::check_trigger_structure(&train, &set, &reduced, pairs, k, order) {
            failures.push(format!("seed {}: {e}", cfg.seed));
            continue;
        }
        let (again, reduced_again) = trigger::generate(&train, &index, &cfg).unwrap();
        if set.to_json().unwrap() != again.to_json().unwrap() || reduced.documents != reduced_again.documents {
            failures.push(format!("seed {}: not deterministic", cfg.seed));
        }
    }
    let detail = match failures.first() {
        None => "100 generations, all invariants hold".to_string(),
        Some(f) => format!("{} failures, first: {f}", failures.len()),
    };
    outcome("trigger-structure", failures.is_empty(), detail)
}

fn fidelity(runs: &[SeedRun]) -> Outcome {
    let mut gaps = [0.0; 2];
    let mut per_seed = Vec::new();
    for r in runs {
        let base = r.original.accuracy(&r.data.test);
        let a = base - r.asc.embedded.model.accuracy(&r.data.test);
        let d = base - r.des.embedded.model.accuracy(&r.data.test);
        gaps[0] += a.abs() / runs.len() as f64;
        gaps[1] += d.abs() / runs.len() as f64;
        per_seed.push(format!("{:.3}/{:+.3}/{:+.3}", base, a, d));
    }
    outcome(
        "fidelity",
        gaps[0] <= 0.02 && gaps[1] <= 0.02,
        format!(
            "mean |gap| ASC {:.2} DES {:.2} points (per seed acc/ASC/DES {})",
            gaps[0] * 100.0,
            gaps[1] * 100.0,
            per_seed.join(" ")
        ),
    )
}

fn credibility(runs: &[SeedRun]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for r in runs {
        let marked = trig(&r.asc.embedded.model, &r.asc);
        let unmarked = trig(&r.original, &r.asc);
        pass &= marked >= 0.85 && unmarked <= 0.25 && marked - unmarked >= 0.5;
        parts.push(format!("{marked:.2}/{unmarked:.2}"));
    }
    outcome("credibility", pass, format!("ASC marked/unmarked per seed {}", parts.join(" ")))
}

fn asc_beats_des(runs: &[SeedRun]) -> Outcome {
    let mut wins = 0;
    let mut parts = Vec::new();
    for r in runs {
        let a = trig(&r.asc.embedded.model, &r.asc);
        let d = trig(&r.des.embedded.model, &r.des);
        wins += usize::from(a > d);
        parts.push(format!("{a:.2}>{d:.2}"));
    }
    outcome("asc-vs-des", wins * 2 > runs.len(), format!("{wins}/{} seeds ({})", runs.len(), parts.join(" ")))
}

fn integrity(r: &SeedRun) -> Outcome {
    let report = evalsuite::run_integrity(&r.data, &r.gen, &r.cfg, 3, THETA).unwrap();
    let accs: Vec<String> = report.unmarked.iter().map(|e| format!("{:.2}", e.trigger_accuracy)).collect();
    outcome(
        "integrity",
        report.false_claims == 0
            && report.unmarked.iter().all(|e| e.decision == Decision::NotOwned)
            && report.control.decision == Decision::Owned,
        format!(
            "unmarked {} -> {} false claims; control {:.2} {}",
            accs.join(","),
            report.false_claims,
            report.control.trigger_accuracy,
            report.control.decision
        ),
    )
}

fn robustness(r: &SeedRun) -> Outcome {
    let model = &r.asc.embedded.model;
    let curve =
        evalsuite::run_robustness(model, &r.asc.trigger, &r.asc.reduced, &r.data.test, &[0.0, 0.1, 0.2, 0.3], THETA)
            .unwrap();
    let base_acc = model.accuracy(&r.data.test);
    let base_trig = trig(model, &r.asc);
    let zero = &curve.points[0];
    let identical = zero.test_accuracy.to_bits() == base_acc.to_bits()
        && zero.trigger_accuracy.to_bits() == base_trig.to_bits()
        && model.prune(0.0).unwrap().params == model.params;
    let mut pass = identical;
    let mut parts = Vec::new();
    for p in &curve.points {
        pass &= p.trigger_accuracy >= 0.8 && base_acc - p.test_accuracy <= 0.05;
        parts.push(format!("{:.1}:{:.2}/{:+.3}", p.prune_fraction, p.trigger_accuracy, base_acc - p.test_accuracy));
    }
    outcome(
        "robustness",
        pass,
        format!("fraction:trigger/drop {}; fraction 0 identical {identical}", parts.join(" ")),
    )
}

fn efficiency(r: &SeedRun) -> Outcome {
    let report = evalsuite::run_efficiency(&r.data, &r.gen, &r.cfg).unwrap();
    outcome(
        "efficiency",
        report.trigger_fraction <= 0.1 && report.ratio <= 1.3,
        format!("|T|/|D| {:.3}, epoch time ratio {:.3}", report.trigger_fraction, report.ratio),
    )
}

fn numerics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let dims = Dims { vocab: 12, embed: 5, hidden: 4, classes: 3 };
    let mut params = Params::init(dims, 0.5, &mut rng);
    params.hidden_bias.iter_mut().for_each(|b| *b = rng.gen_range(0.05..0.3));
    params.output_bias.iter_mut().for_each(|b| *b = rng.gen_range(-0.3..0.3));
    let docs: Vec<Vec<usize>> = (0..5).map(|_| (0..rng.gen_range(1..8)).map(|_| rng.gen_range(0..12)).collect()).collect();
    let batch: Vec<Example<'_>> = docs.iter().enumerate().map(|(i, d)| (d.as_slice(), i % 3)).collect();
    let (_, grad) = params.loss_and_grad(&batch);

    let h = 1e-6;
    let mut worst = 0.0f64;
    let mut check = |analytic: f64, bump: &dyn Fn(&mut Params, f64)| {
        let mut p = params.clone();
        bump(&mut p, h);
        let up = p.loss(&batch);
        let mut p = params.clone();
        bump(&mut p, -h);
        let down = p.loss(&batch);
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max((numeric - analytic).abs() / analytic.abs().max(numeric.abs()).max(1.0));
    };
    for i in 0..params.embedding.len() {
        let row = i / dims.embed;
        let analytic = grad.embedding.get(&row).map_or(0.0, |r| r[i % dims.embed]);
        check(analytic, &|p, d| p.embedding[i] += d);
    }
    for i in 0..params.hidden_weights.len() {
        check(grad.hidden_weights[i], &|p, d| p.hidden_weights[i] += d);
    }
    for i in 0..params.hidden_bias.len() {
        check(grad.hidden_bias[i], &|p, d| p.hidden_bias[i] += d);
    }
    for i in 0..params.output_weights.len() {
        check(grad.output_weights[i], &|p, d| p.output_weights[i] += d);
    }
    for i in 0..params.output_bias.len() {
        check(grad.output_bias[i], &|p, d| p.output_bias[i] += d);
    }

    let mut worst_sum = 0.0f64;
    for _ in 0..1000 {
        let n = rng.gen_range(2..6);
        let scale = [1.0, 50.0, 700.0][rng.gen_range(0..3)];
        let logits: Vec<f64> = (0..n).map(|_| rng.gen_range(-scale..scale)).collect();
        worst_sum = worst_sum.max((softmax(&logits).iter().sum::<f64>() - 1.0).abs());
    }

    let data = demo::corpus(&DemoConfig { documents: 300, seed: 4, ..Default::default() }).unwrap();
    let cfg = TrainConfig { epochs: 3, seed: 8, ..Default::default() };
    let a = classifier::train(&data, &cfg).unwrap().model.to_json().unwrap();
    let b = classifier::train(&data, &cfg).unwrap().model.to_json().unwrap();
    let reproducible = a == b;

    outcome(
        "numerics",
        worst <= 1e-4 && worst_sum <= 1e-9 && reproducible,
        format!("gradient error {worst:.2e}, softmax sum error {worst_sum:.2e}, byte-identical retrain {reproducible}"),
    )
}

fn k_sweep(r: &SeedRun) -> Outcome {
    let ks = [8, 12, 16];
    let report = evalsuite::run_k_sweep(&r.data, &ks, &r.gen, &r.cfg).unwrap();
    let mut pass = report.rows.len() == ks.len();
    let mut parts = Vec::new();
    for row in &report.rows {
        let gen = GenerationConfig { swap_words: row.k, ..r.gen.clone() };
        let run = evalsuite::run_pipeline(&r.data.train, &gen, &r.cfg).unwrap();
        let acc = run.embedded.model.accuracy(&r.data.test);
        let t = trig(&run.embedded.model, &run);
        pass &= row.error.is_none()
            && row.accuracy.map(f64::to_bits) == Some(acc.to_bits())
            && row.trigger_accuracy.map(f64::to_bits) == Some(t.to_bits())
            && row.final_epoch.as_ref() == run.embedded.history.last();
        parts.push(format!("K={}:{:.3}/{:.2}", row.k, acc, t));
    }
    outcome("k-sweep", pass, format!("rows match standalone runs: {}", parts.join(" ")))
}

fn cli(dir: &Path) -> Outcome {
    let start = Instant::now();
    let run = |args: &[&str]| -> i32 {
        Command::new(env!("CARGO_BIN_EXE_textmark"))
            .current_dir(dir)
            .arg("--quiet")
            .args(args)
            .stdout(Stdio::null())
            .status()
            .expect("binary runs")
            .code()
            .unwrap_or(-1)
    };
    let k = K.to_string();
    let b = PAIRS.to_string();
    let steps: [(&[&str], i32); 6] = [
        (&["make-demo-corpus", "--seed", "5"], 0),
        (&["generate", "--corpus", "train.jsonl", "--B", &b, "--K", &k, "--seed", "6"], 0),
        (&["embed", "--reduced", "reduced_train.jsonl", "--trigger", "trigger.json", "--seed", "7"], 0),
        (&["verify", "--model", "watermarked_model.json", "--trigger", "trigger.json"], 0),
        (&["train", "--corpus", "train.jsonl", "--seed", "8"], 0),
        (&["verify", "--model", "baseline_model.json", "--trigger", "trigger.json"], 1),
    ];
    let mut codes = Vec::new();
    let mut pass = true;
    for (args, want) in steps {
        let got = run(args);
        pass &= got == want;
        codes.push(format!("{}={got}", args[0]));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome("cli", pass && secs <= 600.0, format!("exit codes {} in {secs:.1}s", codes.join(" ")))
}

fn main() {
    let mut results = vec![tfidf_oracle(), trigger_structure()];
    let runs: Vec<SeedRun> = (0..SEEDS).map(seed_run).collect();
    results.push(fidelity(&runs));
    results.push(credibility(&runs));
    results.push(asc_beats_des(&runs));
    results.push(integrity(&runs[0]));
    results.push(robustness(&runs[0]));
    results.push(efficiency(&runs[0]));
    results.push(numerics());
    results.push(k_sweep(&runs[0]));
    let tmp = tempfile::tempdir().unwrap();
    results.push(cli(tmp.path()));

    for (i, r) in results.iter().enumerate() {
        println!("{:>2} {:<18} {}  {}", i + 1, r.name, if r.pass { "PASS" } else { "FAIL" }, r.detail);
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.pass).map(|r| r.name).collect();
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
    println!("all {} criteria passed", results.len());
}
