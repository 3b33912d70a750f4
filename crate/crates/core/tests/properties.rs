use proptest::prelude::*;

use relvm::corpus::io::{format_corpus_line, parse_corpus_line};
use relvm::corpus::{kfold_split, Mention, RelationLabel, TaggedSentence};
use relvm::metrics::{f1_score, prf};
use relvm::model::kl_anneal_weight;
use relvm::numeric::ops::{log_sum_exp, softmax};
use relvm::numeric::{gaussian_kl_to_standard, Array, GaussianParams, RngStream};
use relvm::pair::{attention_pool, pair_prf, threshold_label};

fn labels(n: usize, classes: usize) -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (proptest::collection::vec(0..classes, n), proptest::collection::vec(0..classes, n))
}

fn distribution(k: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-4.0..4.0f64, k).prop_map(|l| softmax(&l))
}

proptest! {
    #[test]
    fn prf_ignores_example_order((pred, gold) in labels(40, 5), seed in any::<u64>()) {
        let mut idx: Vec<usize> = (0..pred.len()).collect();
        let mut rng = RngStream::new(seed, 0);
        for i in (1..idx.len()).rev() {
            idx.swap(i, rng.below(i + 1));
        }
        let p2: Vec<usize> = idx.iter().map(|&i| pred[i]).collect();
        let g2: Vec<usize> = idx.iter().map(|&i| gold[i]).collect();
        prop_assert_eq!(prf(&pred, &gold, &[1, 2, 3, 4]).unwrap(), prf(&p2, &g2, &[1, 2, 3, 4]).unwrap());
    }

    #[test]
    fn f1_lies_between_precision_and_recall(p in 0.0..=1.0f64, r in 0.0..=1.0f64) {
        let f = f1_score(p, r);
        prop_assert!(f >= p.min(r) - 1e-15 && f <= p.max(r) + 1e-15);
        prop_assert!(f <= 0.5 * (p + r) + 1e-15);
    }

    #[test]
    fn scores_stay_in_the_unit_interval((pred, gold) in labels(30, 5)) {
        let m = prf(&pred, &gold, &[1, 2, 3, 4]).unwrap();
        for v in [m.precision, m.recall, m.f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn raising_the_threshold_never_adds_positives(
        probs in proptest::collection::vec(distribution(5), 1..30),
        t1 in 0.0..1.0f64,
        t2 in 0.0..1.0f64,
    ) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let positives = |tau: f64| probs.iter().filter(|p| threshold_label(p, tau).0.is_positive()).count();
        prop_assert!(positives(hi) <= positives(lo));
        let gold = vec![RelationLabel::NoRelation; probs.len()];
        // with no gold positives, precision can only be zero
        prop_assert_eq!(pair_prf(&probs, &gold, lo).unwrap().precision, 0.0);
    }

    #[test]
    fn attention_weights_form_a_distribution(
        rows in proptest::collection::vec(proptest::collection::vec(-3.0..3.0f64, 6), 1..8),
        score in proptest::collection::vec(-2.0..2.0f64, 6),
    ) {
        let encodings: Vec<Array> = rows.into_iter().map(Array::vector).collect();
        let pooled = attention_pool(&encodings, &Array::vector(score)).unwrap();
        prop_assert!((pooled.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(pooled.weights.iter().all(|&w| w >= 0.0));
        // the pooled vector is a convex combination, so it stays inside the box
        for j in 0..6 {
            let lo = encodings.iter().map(|e| e.data()[j]).fold(f64::INFINITY, f64::min);
            let hi = encodings.iter().map(|e| e.data()[j]).fold(f64::NEG_INFINITY, f64::max);
            let v = pooled.output.data()[j];
            prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
        }
    }

    #[test]
    fn kl_is_nonnegative_and_zero_at_the_prior(
        mean in proptest::collection::vec(-5.0..5.0f64, 1..6),
        lv_seed in proptest::collection::vec(-5.0..5.0f64, 6),
    ) {
        let d = mean.len();
        let q = GaussianParams::new(Array::vector(mean), Array::vector(lv_seed[..d].to_vec())).unwrap();
        prop_assert!(gaussian_kl_to_standard(&q) >= 0.0);
        prop_assert_eq!(gaussian_kl_to_standard(&GaussianParams::standard(d)), 0.0);
    }

    #[test]
    fn anneal_weight_is_monotone(a in 0u64..50_000, b in 0u64..50_000, horizon in 1u64..20_000) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (wl, wh) = (kl_anneal_weight(lo, horizon).unwrap(), kl_anneal_weight(hi, horizon).unwrap());
        prop_assert!((0.0..=1.0).contains(&wl) && wl <= wh);
    }

    #[test]
    fn log_sum_exp_bounds(xs in proptest::collection::vec(-700.0..700.0f64, 1..20)) {
        let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let l = log_sum_exp(&xs);
        prop_assert!(l >= m && l <= m + (xs.len() as f64).ln() + 1e-12);
    }

    #[test]
    fn folds_partition_the_indices(n in 1usize..200, k in 1usize..12, seed in any::<u64>()) {
        prop_assume!(k <= n);
        let folds = kfold_split(n, k, &mut RngStream::new(seed, 0)).unwrap();
        prop_assert_eq!(folds.len(), k);
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn corpus_lines_round_trip(
        words in proptest::collection::vec("[a-z]{1,6}", 2..12),
        a in 0usize..12,
        b in 0usize..12,
    ) {
        let n = words.len();
        let (a, b) = (a % n, b % n);
        prop_assume!(a != b);
        let m = |s: usize, id: &str| Mention { start: s, end: s + 1, entity_type: "GENE".into(), entity_id: id.into() };
        let s = TaggedSentence { tokens: words, mentions: vec![m(a.min(b), "A1"), m(a.max(b), "B2")] };
        let line = format_corpus_line(&s);
        prop_assert_eq!(parse_corpus_line(&line, 1).unwrap(), s);
    }
}
