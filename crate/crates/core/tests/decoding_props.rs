mod common;

use common::{close, fuzz_case, Case};
use proptest::prelude::*;
use spandecode_core::decoding::naive_span_scores;
use spandecode_core::{
    build_span_table, exact_extract, greedy_decode, naive_exact, DecodeConfig, ScoreRequest, Scorer, Span,
};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn exact_matches_naive(seed in any::<u64>(), cap in prop::option::of(1usize..6), empty in any::<bool>()) {
        let (case, lm) = fuzz_case(seed, 16, 10);
        let cfg = DecodeConfig { max_span_len: cap, allow_empty_span: empty, ..Default::default() };
        let fast = exact_extract(&case.input(), &lm, &cfg).unwrap();
        let slow = naive_exact(&case.input(), &lm, &cfg).unwrap();
        prop_assert_eq!(fast.span, slow.span);
        prop_assert!(close(fast.span_logprob, slow.span_logprob, 1e-9));
        prop_assert_eq!(fast.text, slow.text);
    }

    #[test]
    fn table_agrees_with_every_naive_span(seed in any::<u64>()) {
        let (case, lm) = fuzz_case(seed, 12, 8);
        let table = build_span_table(&case.input(), &lm).unwrap();
        let cfg = DecodeConfig { allow_empty_span: true, ..Default::default() };
        for (span, score) in naive_span_scores(&case.input(), &lm, &cfg).unwrap() {
            prop_assert!(close(table.span_logprob(span.start, span.length), score, 1e-9));
        }
    }

    #[test]
    fn cumulative_scores_never_increase(seed in any::<u64>()) {
        let (case, lm) = fuzz_case(seed, 16, 12);
        let table = build_span_table(&case.input(), &lm).unwrap();
        for i in 0..table.n() {
            prop_assert_eq!(table.cumulative(i, 0), 0.0);
            for j in 1..=table.row_len(i) {
                prop_assert!(table.cumulative(i, j) <= table.cumulative(i, j - 1));
            }
        }
    }

    #[test]
    fn winner_dominates_all_candidates(seed in any::<u64>()) {
        let (case, lm) = fuzz_case(seed, 16, 10);
        let r = exact_extract(&case.input(), &lm, &DecodeConfig::default()).unwrap();
        let best = r.span.unwrap();
        let table = build_span_table(&case.input(), &lm).unwrap();
        for i in 0..table.n() {
            for j in 1..=table.row_len(i) {
                let s = table.span_logprob(i, j);
                prop_assert!(s <= r.span_logprob);
                // anything tying the winner must come later in row-major order
                if s == r.span_logprob {
                    prop_assert!((i, j) >= (best.start, best.length));
                }
            }
        }
    }

    #[test]
    fn exact_pass_count_is_passage_length(seed in any::<u64>()) {
        let (case, lm) = fuzz_case(seed, 8, 12);
        let n = case.passage.len() as u64;
        prop_assert_eq!(exact_extract(&case.input(), &lm, &DecodeConfig::default()).unwrap().passes_used, n);
        prop_assert_eq!(naive_exact(&case.input(), &lm, &DecodeConfig::default()).unwrap().passes_used, n * (n + 1) / 2);
    }

    #[test]
    fn greedy_score_matches_rescoring(seed in any::<u64>()) {
        let (case, lm) = fuzz_case(seed, 16, 10);
        let cfg = DecodeConfig { max_greedy_steps: 16, ..Default::default() };
        let r = greedy_decode(&case.input(), &lm, &cfg).unwrap();
        prop_assume!(!r.truncated);
        let target = case.vocab.seq(r.output_ids.clone()).unwrap();
        let req = ScoreRequest::new(case.prompt.clone(), case.prefix.clone(), target).unwrap();
        let m = r.output_ids.len();
        let s = lm.teacher_forced_pass(&req).unwrap().validated(m).unwrap();
        let rescored: f64 = s.gold_logprob.iter().sum::<f64>() + s.term_logprob[m];
        prop_assert!(close(r.span_logprob, rescored, 1e-9));
        if let Some(Span { start, length }) = r.span {
            prop_assert_eq!(&case.passage.ids[start..start + length], &r.output_ids[..]);
        }
    }
}

#[test]
fn tie_break_prefers_smaller_start_then_shorter() {
    // every token and the terminator equally likely: all length-1 spans tie
    let case = Case::new(common::word_vocab(4), vec![1, 2, 3, 1]);
    let lm = spandecode_core::TableLm::uniform(&case.vocab);
    let r = exact_extract(&case.input(), &lm, &DecodeConfig::default()).unwrap();
    assert_eq!(r.span, Some(Span { start: 0, length: 1 }));
}
