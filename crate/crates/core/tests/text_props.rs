use proptest::prelude::*;
use serde::Deserialize;
use spandecode_core::metrics::{exact_match, is_extractive, normalize_answer, token_f1};
use spandecode_core::prompting::list_templates;
use spandecode_core::tokenizer::{find_subsequence, is_token_subsequence};
use spandecode_core::Vocabulary;

fn vocab() -> Vocabulary {
    Vocabulary::new(
        ["▁the", "▁Paris", "▁is", "▁big", "▁(19", "71", ")", "▁1971", "ar", "is", "▁", "e", "a"],
        "</s>",
        &["<extra_id_0>", "<extra_id_1>"],
    )
    .unwrap()
}

fn brute_force_contains(needle: &[u32], hay: &[u32]) -> bool {
    needle.is_empty() || hay.windows(needle.len()).any(|w| w == needle)
}

proptest! {
    #[test]
    fn encode_decode_round_trip(text in "[a-zA-Z0-9 .,()éß\u{4e2d}]{0,40}") {
        let v = vocab();
        let ids = v.encode(&text);
        prop_assert_eq!(v.decode(&ids).unwrap(), text.clone());
        // deterministic
        prop_assert_eq!(v.encode(&text), ids);
    }

    #[test]
    fn subsequence_matches_brute_force(
        needle in prop::collection::vec(0u32..4, 0..4),
        hay in prop::collection::vec(0u32..4, 0..12),
    ) {
        let found = find_subsequence(&needle, &hay);
        prop_assert_eq!(found.is_some(), brute_force_contains(&needle, &hay));
        if let Some(at) = found {
            prop_assert_eq!(&hay[at..at + needle.len()], &needle[..]);
            // first occurrence
            prop_assert!(!(0..at).any(|s| hay[s..].starts_with(&needle)));
        }
        let v = vocab();
        let a = v.seq(needle.clone()).unwrap();
        let b = v.seq(hay.clone()).unwrap();
        prop_assert_eq!(is_token_subsequence(&a, &b).unwrap(), brute_force_contains(&needle, &hay));
    }

    #[test]
    fn f1_is_a_bounded_max(pred in "[a-z .!]{0,20}", g1 in "[a-z .!]{0,20}", g2 in "[a-z .!]{0,20}") {
        let f = token_f1(&pred, &[g1.as_str(), g2.as_str()]).unwrap();
        prop_assert!((0.0..=1.0).contains(&f));
        let f1 = token_f1(&pred, &[g1.as_str()]).unwrap();
        let f2 = token_f1(&pred, &[g2.as_str()]).unwrap();
        prop_assert_eq!(f, f1.max(f2));
        // single-gold F1 is symmetric
        prop_assert_eq!(f1, token_f1(&g1, &[pred.as_str()]).unwrap());
        prop_assert_eq!(token_f1(&pred, &[pred.as_str()]).unwrap(), 1.0);
        if exact_match(&pred, &[g1.as_str()]).unwrap() {
            prop_assert_eq!(f1, 1.0);
        }
    }

    #[test]
    fn normalization_is_idempotent(s in "[a-zA-Z .,!'-]{0,30}") {
        let once = normalize_answer(&s);
        prop_assert_eq!(normalize_answer(&once), once);
    }

    #[test]
    fn passage_substrings_with_letters_are_extractive(p in "[a-z ]{1,30}", a in 0usize..30, b in 0usize..30) {
        let (lo, hi) = (a.min(b).min(p.len()), a.max(b).min(p.len()));
        let piece = &p[lo..hi];
        prop_assert_eq!(is_extractive(piece, &p), piece.chars().any(|c| c.is_alphanumeric()));
    }

    #[test]
    fn templates_are_injective(t1 in "[a-z ]{0,12}", q1 in "[a-z ?]{0,12}", t2 in "[a-z ]{0,12}", q2 in "[a-z ?]{0,12}") {
        prop_assume!((t1.as_str(), q1.as_str()) != (t2.as_str(), q2.as_str()));
        for t in list_templates() {
            prop_assert_ne!(t.render_encoder_input(&t1, &q1), t.render_encoder_input(&t2, &q2));
        }
    }
}

#[derive(Deserialize)]
struct GoldenF1 {
    prediction: String,
    golds: Vec<String>,
    f1: f64,
}

#[test]
fn f1_golden_file() {
    let cases: Vec<GoldenF1> =
        serde_json::from_str(include_str!("data/f1_golden.json")).unwrap();
    assert_eq!(cases.len(), 50);
    for c in cases {
        let got = token_f1(&c.prediction, &c.golds).unwrap();
        assert!((got - c.f1).abs() < 1e-12, "{:?}: {got} vs {}", c.prediction, c.f1);
    }
}
