mod common;

use proptest::prelude::*;

use textmark::corpus::{Corpus, LabeledDocument, Provenance};
use textmark::demo::{self, DemoConfig};
use textmark::tfidf::{Order, TfIdfIndex};
use textmark::trigger::{self, GenerationConfig, TriggerSet};
use textmark::Error;

const WORDS: [&str; 12] = [
    "apple", "brick", "cloud", "delta", "ember", "fjord", "grain", "harbor", "ivory", "jolt", "kite",
    "lumen",
];

fn random_corpus() -> impl Strategy<Value = Corpus> {
    (2usize..=3)
        .prop_flat_map(|classes| {
            prop::collection::vec(
                prop::collection::vec(
                    prop::collection::vec(prop::sample::select(WORDS.to_vec()), 2..10),
                    3..8,
                ),
                classes,
            )
        })
        .prop_map(|per_class| {
            let classes: Vec<String> = (0..per_class.len()).map(|c| format!("c{c}")).collect();
            let documents = per_class
                .into_iter()
                .enumerate()
                .flat_map(|(label, docs)| {
                    docs.into_iter().enumerate().map(move |(i, tokens)| LabeledDocument {
                        id: format!("{label}-{i}"),
                        tokens: tokens.into_iter().map(String::from).collect(),
                        label,
                    })
                })
                .collect();
            Corpus::new(
                documents,
                classes,
                Provenance { source: "proptest".into(), normalization_digest: String::new() },
            )
            .unwrap()
        })
}

fn strategy() -> impl Strategy<Value = Order> {
    prop_oneof![Just(Order::Asc), Just(Order::Des)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn generated_sets_satisfy_every_structural_invariant(
        train in random_corpus(),
        pairs in 1usize..=3,
        k in 1usize..=6,
        order in strategy(),
        seed in any::<u64>(),
    ) {
        let index = TfIdfIndex::build(&train).unwrap();
        let cfg = GenerationConfig { pairs, swap_words: k, strategy: order, seed, theta_hint: None };
        match trigger::generate(&train, &index, &cfg) {
            Ok((set, reduced)) => {
                if let Err(msg) = common::check_trigger_structure(&train, &set, &reduced, pairs, k, order) {
                    return Err(TestCaseError::fail(msg));
                }
                let (again, reduced_again) = trigger::generate(&train, &index, &cfg).unwrap();
                prop_assert_eq!(set.to_json().unwrap(), again.to_json().unwrap());
                prop_assert_eq!(reduced.documents, reduced_again.documents);
                let back = TriggerSet::from_json(&set.to_json().unwrap()).unwrap();
                prop_assert_eq!(back, set);
            }
            Err(Error::ClassTooSmall { have, need, .. }) => prop_assert!(have < need),
            Err(Error::InfeasibleSwap(_)) => {}
            Err(e) => return Err(TestCaseError::fail(format!("unexpected error {e}"))),
        }
    }

    #[test]
    fn constant_label_oracle_scores_exactly_one_half_on_binary_sets(
        seed in any::<u64>(),
        label in 0usize..2,
    ) {
        let train = demo::corpus(&DemoConfig { documents: 60, seed: 3, ..Default::default() }).unwrap();
        let index = TfIdfIndex::build(&train).unwrap();
        let cfg = GenerationConfig { pairs: 5, swap_words: 4, strategy: Order::Asc, seed, theta_hint: None };
        let (set, _) = trigger::generate(&train, &index, &cfg).unwrap();
        let oracle = move |_: &[String]| -> Result<usize, String> { Ok(label) };
        let report = textmark::watermark::verify(&oracle, &set, 0.8).unwrap();
        prop_assert_eq!(report.trigger_accuracy, 0.5);
    }
}

#[test]
fn twenty_document_corpus_matches_rederived_swaps() {
    let train = demo::corpus(&DemoConfig { documents: 20, seed: 11, ..Default::default() }).unwrap();
    let index = TfIdfIndex::build(&train).unwrap();
    for order in [Order::Asc, Order::Des] {
        let cfg = GenerationConfig { pairs: 4, swap_words: 3, strategy: order, seed: 5, theta_hint: None };
        let (set, reduced) = trigger::generate(&train, &index, &cfg).unwrap();
        assert_eq!(set.len(), 8);
        common::check_trigger_structure(&train, &set, &reduced, 4, 3, order).unwrap();
        assert!(set.records.iter().all(|r| r.swapped_out.len() == 3));
    }
}

#[test]
fn two_hundred_record_set_round_trips_through_a_file() {
    let train = demo::corpus(&DemoConfig { documents: 400, ..Default::default() }).unwrap();
    let index = TfIdfIndex::build(&train).unwrap();
    let cfg = GenerationConfig { pairs: 100, swap_words: 8, ..Default::default() };
    let (set, reduced) = trigger::generate(&train, &index, &cfg).unwrap();
    assert_eq!(set.len(), 200);
    assert_eq!(set.per_class_counts(), vec![100, 100]);
    assert_eq!(reduced.len(), 200);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trigger.json");
    trigger::save_trigger(&set, &path).unwrap();
    let back = trigger::load_trigger(&path).unwrap();
    assert_eq!(back, set);
    assert_eq!(back.digest().unwrap(), set.digest().unwrap());
}
