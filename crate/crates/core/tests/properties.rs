//! Property tests for the pipeline's structural invariants.

use proptest::prelude::*;

use redactprobe_core::balance::{
    counts_of, smote_oversample, split_train_test, undersample, LabeledPoint, PointOrigin, Seed,
};
use redactprobe_core::corpus::{
    parse_corpus, serialize_corpus, slice_codepoints, AnnotatedDocument, Annotation, EntityLabel,
    IdentifierClass, Span,
};
use redactprobe_core::embed::{cosine, embed_base, Embedding};
use redactprobe_core::evade::{fold, harden, HomoglyphMap};
use redactprobe_core::preprocess::{materialize, normalize_text, split_sentences, SentenceSpan};

fn arb_label() -> impl Strategy<Value = EntityLabel> {
    (0usize..8).prop_map(|i| EntityLabel::from_index(i).unwrap())
}

proptest! {
    /// Normalization never changes the code-point length.
    #[test]
    fn normalize_conserves_length(text in "[A-Za-z0-9 .\n]{0,200}") {
        prop_assert_eq!(
            normalize_text(&text).chars().count(),
            text.chars().count()
        );
    }

    /// Sentence spans are ordered, disjoint, and slice back to their text.
    #[test]
    fn sentence_spans_are_consistent(text in "[A-Za-z .!?]{0,160}") {
        let normalized = normalize_text(&text);
        let chars: Vec<char> = normalized.chars().collect();
        let sentences = split_sentences("d", &normalized);
        let mut previous_end = 0usize;
        for s in &sentences {
            prop_assert!(s.span.start >= previous_end);
            prop_assert!(s.span.end <= chars.len());
            let slice: String = chars[s.span.start..s.span.end].iter().collect();
            prop_assert_eq!(&slice, &s.text);
            previous_end = s.span.end;
        }
    }

    /// Redaction changes exactly the span and the restored sentence matches.
    #[test]
    fn redaction_conserves_the_complement(
        sentence in "[a-zA-Z ]{1,60}",
        start_frac in 0.0f64..1.0,
        len in 1usize..10,
        label in arb_label(),
    ) {
        let n = sentence.chars().count();
        let start = ((n - 1) as f64 * start_frac) as usize;
        let end = (start + len).min(n);
        let span = SentenceSpan {
            doc_id: "d".into(),
            span: Span::new(0, n),
            text: sentence.clone(),
        };
        let anns = vec![Annotation {
            span: Span::new(start, end),
            label,
            identifier_class: IdentifierClass::Quasi,
        }];
        let samples = materialize(&span, &anns);
        prop_assert_eq!(samples.len(), 1);
        let sample = &samples[0];
        sample.check_invariants().unwrap();
        // Replacing the asterisk run with the original slice restores the
        // sentence exactly.
        let original = slice_codepoints(&sample.sentence, start, end);
        let mut chars: Vec<char> = sample.redacted_sentence.chars().collect();
        for (offset, c) in original.chars().enumerate() {
            chars[start + offset] = c;
        }
        let restored: String = chars.into_iter().collect();
        prop_assert_eq!(&restored, &sample.sentence);
    }

    /// parse(serialize(parse(x))) == parse(x).
    #[test]
    fn corpus_ingest_is_idempotent(
        texts in proptest::collection::vec("[a-zA-Z ]{4,40}", 1..4),
        label in arb_label(),
    ) {
        let docs: Vec<AnnotatedDocument> = texts
            .iter()
            .enumerate()
            .map(|(i, text)| {
                let len = text.chars().count();
                AnnotatedDocument {
                    id: format!("doc-{i}"),
                    text: text.clone(),
                    annotations: vec![Annotation {
                        span: Span::new(0, 1.max(len / 2)),
                        label,
                        identifier_class: IdentifierClass::Direct,
                    }],
                    revised: i % 2 == 0,
                    anonymization_target: "person".into(),
                }
            })
            .collect();
        let first = parse_corpus(&serialize_corpus(&docs)).unwrap();
        let second = parse_corpus(&serialize_corpus(&first)).unwrap();
        prop_assert_eq!(first, second);
    }

    /// Cosine is invariant under positive scaling of either argument.
    #[test]
    fn cosine_is_scale_invariant(
        values_a in proptest::collection::vec(-5.0f64..5.0, 6),
        values_b in proptest::collection::vec(-5.0f64..5.0, 6),
        alpha in 0.01f64..100.0,
    ) {
        let a = Embedding::new(values_a.clone());
        let b = Embedding::new(values_b);
        prop_assume!(a.l2_norm() > 1e-9 && b.l2_norm() > 1e-9);
        let scaled = Embedding::new(values_a.iter().map(|v| v * alpha).collect());
        let c1 = cosine(&a, &b).unwrap();
        let c2 = cosine(&scaled, &b).unwrap();
        prop_assert!((c1 - c2).abs() < 1e-9);
    }

    /// fold(harden(x)) == x on ASCII text.
    #[test]
    fn fold_inverts_harden(text in "[ -~]{0,120}") {
        let map = HomoglyphMap::default();
        prop_assert_eq!(fold(&harden(&text, &map), &map), text);
    }

    /// Hardening preserves code-point length.
    #[test]
    fn harden_conserves_length(text in "\\PC{0,80}") {
        let map = HomoglyphMap::default();
        prop_assert_eq!(
            harden(&text, &map).chars().count(),
            text.chars().count()
        );
    }

    /// Mask runs collapse: embeddings ignore redaction length.
    #[test]
    fn mask_length_never_leaks_into_embeddings(
        prefix in "[a-z ]{0,20}",
        suffix in "[a-z ]{0,20}",
        len_a in 1usize..30,
        len_b in 1usize..30,
    ) {
        let a = format!("{prefix}{}{suffix}", "*".repeat(len_a));
        let b = format!("{prefix}{}{suffix}", "*".repeat(len_b));
        prop_assert_eq!(embed_base(&a), embed_base(&b));
    }
}

fn labeled_points(per_class: usize, dim: usize, seed: u64) -> Vec<LabeledPoint> {
    use rand::Rng;
    let mut rng = Seed(seed).rng();
    let mut points = Vec::new();
    for label in EntityLabel::ALL {
        for s in 0..per_class {
            let values = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            points.push(LabeledPoint {
                embedding: Embedding::new(values),
                label,
                origin: PointOrigin::Real { sample: s },
            });
        }
    }
    points
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Undersampling equalizes counts and is a sub-multiset of the input.
    #[test]
    fn undersample_counts_and_subset(extra in proptest::collection::vec(0usize..6, 8), seed in 0u64..500) {
        let counts: Vec<usize> = extra.iter().map(|e| 2 + e).collect();
        let mut points = Vec::new();
        for label in EntityLabel::ALL {
            for s in 0..counts[label.index()] {
                points.push(LabeledPoint {
                    embedding: Embedding::new(vec![s as f64]),
                    label,
                    origin: PointOrigin::Real { sample: s },
                });
            }
        }
        let min = *counts.iter().min().unwrap();
        let balanced = undersample(points, Seed(seed)).unwrap();
        let balanced_counts = counts_of(&balanced);
        for label in EntityLabel::ALL {
            prop_assert_eq!(balanced_counts.get(label), min);
        }
    }

    /// The split partitions the input and is stratified per class.
    #[test]
    fn split_partitions_the_input(per_class in 2usize..30, seed in 0u64..500) {
        let points = labeled_points(per_class, 2, seed);
        let total = points.len();
        let (train, test) = split_train_test(points, 0.85, Seed(seed)).unwrap();
        prop_assert_eq!(train.len() + test.len(), total);
        let expected_train = (0.85 * per_class as f64 + 0.5).floor() as usize;
        let train_counts = counts_of(&train);
        for label in EntityLabel::ALL {
            prop_assert_eq!(train_counts.get(label), expected_train);
        }
    }

    /// SMOTE keeps originals untouched and reaches the target exactly.
    #[test]
    fn smote_reaches_target_and_keeps_originals(per_class in 2usize..12, seed in 0u64..500) {
        let points = labeled_points(per_class, 3, seed);
        let originals = points.clone();
        let target = per_class + 7;
        let out = smote_oversample(points, target, 3, Seed(seed)).unwrap();
        prop_assert_eq!(&out[..originals.len()], &originals[..]);
        let counts = counts_of(&out);
        for label in EntityLabel::ALL {
            prop_assert_eq!(counts.get(label), target);
        }
    }
}
