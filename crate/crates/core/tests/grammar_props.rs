mod common;

use std::collections::BTreeSet;

use coinai_core::grammar::{
    bundled_grammar, derive_from_hash, parse_architecture, parse_grammar, DerivationLimits, DeriveError, Sentence,
    MAX_SENTENCE_TOKENS,
};
use coinai_core::Hash512;
use common::{hash_of_int, oracle_derive, OracleOutcome, Toy, TOYS};
use proptest::prelude::*;

const BUNDLED: Toy = Toy {
    name: "bundled",
    rules: &[
        ("cnn", &[&["<convs>", "<fcs>"]]),
        ("convs", &[&["<conv>"], &["<conv>", "<convs>"]]),
        ("fcs", &[&["<fc>"], &["<fc>", "<fcs>"]]),
        ("conv", &[&["<num_filters>", "<filter_size>", "<act_fn>"]]),
        ("fc", &[&["<num_units>", "<act_fn>"]]),
        ("num_filters", &[&["<number>"]]),
        ("filter_size", &[&["<number>"]]),
        ("num_units", &[&["<number>"]]),
        ("act_fn", &[&["sigmoid"], &["tanh"], &["relu"]]),
        ("number", &[&["<digit>"], &["<digit>", "<number>"]]),
        ("digit", &[&["0"], &["1"], &["2"], &["3"], &["4"], &["5"], &["6"], &["7"], &["8"], &["9"]]),
    ],
};

fn compare(toy: &Toy, range: std::ops::Range<u64>, limits: DerivationLimits) {
    let g = parse_grammar(&toy.bnf()).unwrap();
    for h in range {
        let got = match derive_from_hash(&g, &hash_of_int(h), &limits) {
            Ok(d) => OracleOutcome::Sentence(d.sentence.tokens().to_vec()),
            Err(DeriveError::StepLimit(_)) => OracleOutcome::StepLimit,
            Err(DeriveError::ResetLimit(_)) => OracleOutcome::ResetLimit,
        };
        let want = oracle_derive(toy, h, limits.max_steps, limits.max_resets);
        assert_eq!(got, want, "{} at H = {h}", toy.name);
    }
}

#[test]
fn toys_match_oracle_on_small_seeds() {
    let limits = DerivationLimits {
        max_steps: 500,
        max_resets: 16,
    };
    for toy in &TOYS {
        compare(toy, 0..4096, limits);
    }
}

#[test]
fn bundled_grammar_matches_its_data_form() {
    assert_eq!(parse_grammar(&BUNDLED.bnf()).unwrap(), bundled_grammar());
    compare(&BUNDLED, 0..2048, DerivationLimits::default());
}

#[test]
fn every_single_layer_sentence_is_reachable() {
    let toy = &TOYS[2];
    let g = parse_grammar(&toy.bnf()).unwrap();
    let mut seen = BTreeSet::new();
    for h in 0..1 << 14 {
        if let Ok(d) = derive_from_hash(&g, &hash_of_int(h), &DerivationLimits::default()) {
            seen.insert(d.sentence.tokens().join(" "));
        }
    }
    for kind in ["conv", "fc"] {
        for size in 1..=5 {
            for act in ["relu", "tanh", "sigmoid", "linear"] {
                assert!(seen.contains(&format!("{kind} {size} {act}")), "{kind} {size} {act}");
            }
        }
    }
    for size in 1..=5 {
        assert!(seen.contains(&format!("pool {size}")));
    }
}

#[test]
fn full_width_hash_derivation_is_deterministic() {
    let g = bundled_grammar();
    let h = Hash512::digest(b"coinai");
    let a = derive_from_hash(&g, &h, &DerivationLimits::default()).unwrap();
    let b = derive_from_hash(&g, &h, &DerivationLimits::default()).unwrap();
    assert_eq!(a.sentence, b.sentence);
    assert_eq!(a.trace.replay(&g).unwrap(), a.sentence);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn derived_sentences_replay_and_round_trip(bytes in proptest::collection::vec(any::<u8>(), 64)) {
        let g = bundled_grammar();
        let h = Hash512::from_slice(&bytes).unwrap();
        if let Ok(d) = derive_from_hash(&g, &h, &DerivationLimits::default()) {
            prop_assert_eq!(d.trace.replay(&g).unwrap(), d.sentence.clone());
            if d.sentence.len() <= MAX_SENTENCE_TOKENS {
                let spec = parse_architecture(&d.sentence, &g).unwrap();
                prop_assert!(!spec.conv_layers.is_empty());
                prop_assert!(!spec.fc_layers.is_empty());
                // Canonical parse re-emits the sentence token for token.
                let again = parse_architecture(&spec.to_sentence(), &g).unwrap();
                prop_assert_eq!(again, spec);
            }
        }
    }

    #[test]
    fn sentence_text_round_trips(tokens in proptest::collection::vec("[a-z0-9]{1,4}", 1..12)) {
        let s = Sentence(tokens.clone());
        let text: String = s.clone().into();
        prop_assert_eq!(Sentence::from_text(&text), s);
    }

    #[test]
    fn derivation_depends_on_every_byte(bytes in proptest::collection::vec(any::<u8>(), 64), i in 0usize..64) {
        // Flipping one byte changes the seed integer, hence at least the
        // recorded trace values.
        let g = bundled_grammar();
        let a = Hash512::from_slice(&bytes).unwrap();
        let mut flipped = bytes.clone();
        flipped[i] ^= 0xff;
        let b = Hash512::from_slice(&flipped).unwrap();
        let da = derive_from_hash(&g, &a, &DerivationLimits::default());
        let db = derive_from_hash(&g, &b, &DerivationLimits::default());
        if let (Ok(da), Ok(db)) = (da, db) {
            prop_assert_ne!(da.trace.steps.first().map(|s| s.m.clone()), db.trace.steps.first().map(|s| s.m.clone()));
        }
    }
}
