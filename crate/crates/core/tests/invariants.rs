use expcon::constraints::{conjugate_value_and_subgradient, DualBound, PenaltyFamily};
use expcon::eval::score_predictions;
use expcon::io::{format_examples, parse_sequence_str, parse_classification_str, Checkpoint, Schema, TaskKind, Vocabulary};
use expcon::model::{
    brute_force_posterior, brute_force_viterbi, chain_posterior, classify_posterior, score_assignment,
    viterbi, Example, Instance, LabelSpace, Layout, ParamVector, SequenceInstance,
    SparseFeatures,
};
use proptest::prelude::*;

const VOCAB: usize = 4;

fn features() -> impl Strategy<Value = SparseFeatures> {
    proptest::collection::btree_map(0..VOCAB, -2.0f64..2.0, 0..=3)
        .prop_map(|m| SparseFeatures::new(m.into_iter().collect()).unwrap())
}

/// (params, sequence with gold labels) for K in 2..=3, L in 1..=4.
fn chain_case() -> impl Strategy<Value = (ParamVector, SequenceInstance)> {
    (2usize..=3, 1usize..=4).prop_flat_map(|(k, len)| {
        let layout = Layout::chain(VOCAB, k);
        (
            proptest::collection::vec(-3.0f64..3.0, layout.dim()),
            proptest::collection::vec(features(), len),
            proptest::collection::vec(0..k, len),
        )
            .prop_map(move |(w, pos, y)| {
                (
                    ParamVector::from_weights(layout, w).unwrap(),
                    SequenceInstance::new(pos, Some(y)).unwrap(),
                )
            })
    })
}

fn penalty() -> impl Strategy<Value = PenaltyFamily> {
    prop_oneof![
        (0.01f64..5.0).prop_map(|b| PenaltyFamily::l2(b).unwrap()),
        (0.0f64..2.0).prop_map(|b| PenaltyFamily::l1_box(b).unwrap()),
        Just(PenaltyFamily::affine()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn chain_marginals_normalize_and_match_enumeration((params, seq) in chain_case()) {
        let post = chain_posterior(&params, &seq).unwrap();
        let brute = brute_force_posterior(&params, &seq).unwrap();
        prop_assert!((post.log_z() - brute.log_z()).abs() < 1e-9);
        let k = params.num_labels();
        for t in 0..seq.len() {
            let row: f64 = post.node_row(t).iter().sum();
            prop_assert!((row - 1.0).abs() < 1e-12);
            for y in 0..k {
                prop_assert!((post.node(t, y) - brute.node(t, y)).abs() < 1e-9);
            }
        }
        for t in 0..seq.len().saturating_sub(1) {
            for a in 0..k {
                // The edge t -> t+1 sums out to both endpoint marginals.
                let out: f64 = (0..k).map(|b| post.edge(t, a, b)).sum();
                prop_assert!((out - post.node(t, a)).abs() < 1e-12);
                let into: f64 = (0..k).map(|b| post.edge(t, b, a)).sum();
                prop_assert!((into - post.node(t + 1, a)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn viterbi_is_optimal((params, seq) in chain_case()) {
        let best = viterbi(&params, &seq).unwrap();
        prop_assert_eq!(&best, &brute_force_viterbi(&params, &seq).unwrap());
        let ex = Example::Sequence(seq.clone());
        let gold = seq.labels.clone().unwrap();
        prop_assert!(
            score_assignment(&params, ex.as_ref(), &best) >= score_assignment(&params, ex.as_ref(), &gold) - 1e-12
        );
    }

    #[test]
    fn classifier_posterior_is_softmax(
        w in proptest::collection::vec(-3.0f64..3.0, VOCAB * 3),
        x in features(),
    ) {
        let params = ParamVector::from_weights(Layout::flat(VOCAB, 3), w).unwrap();
        let inst = Instance::new(x, None);
        let post = classify_posterior(&params, &inst).unwrap();
        let scores: Vec<f64> = (0..3).map(|y| params.node_score(&inst.features, y)).collect();
        let z: f64 = scores.iter().map(|s| s.exp()).sum();
        for (y, s) in scores.iter().enumerate() {
            prop_assert!((post.node(0, y) - s.exp() / z).abs() < 1e-12);
        }
    }

    /// `U(v) + U*(−μ) ≥ −μ·v` with equality at the maximizing `v`.
    #[test]
    fn fenchel_young(p in penalty(), u in -3.0f64..3.0, v in -3.0f64..3.0, m in -3.0f64..3.0) {
        let mu = match p.bound() {
            DualBound::Free => m,
            DualBound::NonPositive => -m.abs(),
        };
        let (conj, _) = conjugate_value_and_subgradient(&p, mu, u);
        let lhs = p.primal(v, u) + conj;
        prop_assert!(lhs >= -mu * v - 1e-9);
        // The subgradient of U*(−μ) in μ is −v* for a maximizer v*.
        let (_, g) = conjugate_value_and_subgradient(&p, mu, u);
        let v_star = -g;
        if p.primal(v_star, u).is_finite() {
            prop_assert!((p.primal(v_star, u) + conj + mu * v_star).abs() < 1e-9);
        }
    }

    #[test]
    fn macro_f1_and_accuracy_are_bounded(
        pairs in proptest::collection::vec((0usize..4, 0usize..4), 1..60),
    ) {
        let (gold, pred): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let r = score_predictions(&gold, &pred, 4).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.accuracy));
        prop_assert!((0.0..=1.0).contains(&r.macro_f1));
        let hits = gold.iter().zip(&pred).filter(|(g, p)| g == p).count();
        prop_assert!((r.accuracy - hits as f64 / gold.len() as f64).abs() < 1e-15);
        let f1: f64 = r.per_label.iter().map(|s| s.f1).sum::<f64>() / 4.0;
        prop_assert!((r.macro_f1 - f1).abs() < 1e-15);
    }

    #[test]
    fn sequence_files_round_trip(
        seqs in proptest::collection::vec(
            proptest::collection::vec((features(), proptest::option::of(0usize..3)), 1..5),
            1..4,
        ),
    ) {
        let schema = Schema::frozen(
            Vocabulary::from_names((0..VOCAB).map(|i| format!("w{i}"))).unwrap(),
            LabelSpace::new(["A", "B", "C"]).unwrap(),
        );
        let examples: Vec<Example> = seqs
            .into_iter()
            .map(|s| {
                // Partial labeling is rejected, so a sequence is all-or-nothing.
                let labeled = s[0].1.is_some();
                let (pos, ys): (Vec<_>, Vec<_>) = s.into_iter().unzip();
                let ys = labeled.then(|| ys.into_iter().map(|y| y.unwrap_or(0)).collect());
                Example::Sequence(SequenceInstance::new(pos, ys).unwrap())
            })
            .collect();
        let text = format_examples(&examples, &schema);
        let mut again = schema.clone();
        let parsed = parse_sequence_str(&text, "t", &mut again).unwrap().examples;
        prop_assert_eq!(parsed.len(), examples.len());
        prop_assert_eq!(format_examples(&parsed, &schema), text);
    }

    #[test]
    fn classification_files_round_trip(
        rows in proptest::collection::vec((features(), proptest::option::of(0usize..3)), 1..8),
    ) {
        let schema = Schema::frozen(
            Vocabulary::from_names((0..VOCAB).map(|i| format!("w{i}"))).unwrap(),
            LabelSpace::new(["A", "B", "C"]).unwrap(),
        );
        let examples: Vec<Example> =
            rows.into_iter().map(|(x, y)| Example::Flat(Instance::new(x, y))).collect();
        let text = format_examples(&examples, &schema);
        let mut again = schema.clone();
        let parsed = parse_classification_str(&text, "t", &mut again).unwrap().examples;
        prop_assert_eq!(format_examples(&parsed, &schema), text);
    }

    #[test]
    fn checkpoint_text_round_trips(w in proptest::collection::vec(-1e6f64..1e6, Layout::chain(VOCAB, 3).dim())) {
        let layout = Layout::chain(VOCAB, 3);
        let ck = Checkpoint {
            task: TaskKind::Sequence,
            labels: LabelSpace::new(["A", "B", "C"]).unwrap(),
            vocab: Vocabulary::from_names((0..VOCAB).map(|i| format!("w{i}"))).unwrap(),
            lambda: ParamVector::from_weights(layout, w).unwrap(),
            mu: vec![-0.5, 1e-300, 3.25],
            iteration: 7,
            meta: vec![("trainer".into(), "ap".into())],
        };
        let back = Checkpoint::from_text(&ck.to_text(), "ck").unwrap();
        prop_assert_eq!(back, ck);
    }
}
