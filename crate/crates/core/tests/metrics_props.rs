use leadone::label::{RATER_CHOICES, REFERENCE_CLASSES};
use leadone::metrics::{
    accuracy, class_metrics, cohen_kappa, confusion, f1_score, interpret_kappa, kappa_from_counts,
    roc_binary, weighted_avg, MetricKind, MetricsError, Z_95,
};
use leadone::Label;
use proptest::prelude::*;

fn reference() -> impl Strategy<Value = Label> {
    prop::sample::select(REFERENCE_CLASSES.to_vec())
}

fn answer() -> impl Strategy<Value = Label> {
    prop::sample::select(RATER_CHOICES.to_vec())
}

/// Aligned reference and rater label lists.
fn labelled(max: usize) -> impl Strategy<Value = Vec<(Label, Label)>> {
    prop::collection::vec((reference(), answer()), 1..max)
}

/// Square count matrix with at least one nonzero cell.
fn square_counts() -> impl Strategy<Value = Vec<Vec<u64>>> {
    (2usize..=5)
        .prop_flat_map(|k| prop::collection::vec(prop::collection::vec(0u64..40, k), k))
        .prop_filter("empty matrix", |m| m.iter().flatten().sum::<u64>() > 0)
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn rows_are_supports(pairs in labelled(200)) {
        let (refs, answers): (Vec<Label>, Vec<Label>) = pairs.iter().copied().unzip();
        let m = confusion(&refs, &answers, &REFERENCE_CLASSES, &RATER_CHOICES).unwrap();
        prop_assert_eq!(m.n(), refs.len() as u64);
        let mut total = 0;
        for &c in &REFERENCE_CLASSES {
            let support = refs.iter().filter(|&&r| r == c).count() as u64;
            prop_assert_eq!(m.row_sum(c), support);
            total += support;
            for &a in &RATER_CHOICES {
                let recount = pairs.iter().filter(|&&p| p == (c, a)).count() as u64;
                prop_assert_eq!(m.count(c, a), recount);
            }
            let cm = class_metrics(&m, c).unwrap();
            prop_assert!(cm.true_positives <= cm.support);
        }
        prop_assert_eq!(total, m.n());
    }

    #[test]
    fn accuracy_is_weighted_recall(pairs in labelled(300)) {
        let (refs, answers): (Vec<Label>, Vec<Label>) = pairs.into_iter().unzip();
        let m = confusion(&refs, &answers, &REFERENCE_CLASSES, &RATER_CHOICES).unwrap();
        let per_class: Vec<_> = REFERENCE_CLASSES.iter().map(|&c| class_metrics(&m, c).unwrap()).collect();
        let recall = weighted_avg(&per_class, MetricKind::Recall).unwrap();
        prop_assert!((accuracy(&m).unwrap() - recall).abs() <= 1e-12);
    }

    #[test]
    fn f1_is_a_harmonic_mean(p in 0.0f64..=1.0, r in 0.0f64..=1.0) {
        match f1_score(p, r) {
            None => prop_assert!(p + r == 0.0),
            Some(f) => {
                let (lo, hi) = (p.min(r), p.max(r));
                prop_assert!(lo - 1e-15 <= f && f <= hi + 1e-15);
                if p == r {
                    prop_assert!((f - p).abs() <= 1e-15);
                } else {
                    prop_assert!(lo < f && f < hi);
                }
            }
        }
    }

    #[test]
    fn kappa_ignores_class_order(counts in square_counts(), seed in any::<u64>()) {
        let k = counts.len();
        let mut perm: Vec<usize> = (0..k).collect();
        let mut s = seed;
        for i in (1..k).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let permuted: Vec<Vec<u64>> = perm.iter().map(|&i| perm.iter().map(|&j| counts[i][j]).collect()).collect();
        match (kappa_from_counts(&counts), kappa_from_counts(&permuted)) {
            (Ok(a), Ok(b)) => {
                prop_assert!((a.kappa - b.kappa).abs() <= 1e-12);
                prop_assert!((a.se - b.se).abs() <= 1e-12);
            }
            (Err(MetricsError::DegenerateAgreement), Err(MetricsError::DegenerateAgreement)) => {}
            (a, b) => prop_assert!(false, "{a:?} vs {b:?}"),
        }
    }

    #[test]
    fn kappa_is_one_exactly_on_the_diagonal(counts in square_counts()) {
        let Ok(r) = kappa_from_counts(&counts) else { return Ok(()) };
        prop_assert!(r.kappa <= 1.0 + 1e-12);
        let diagonal = counts.iter().enumerate().all(|(i, row)| row.iter().enumerate().all(|(j, &v)| i == j || v == 0));
        prop_assert_eq!((r.kappa - 1.0).abs() <= 1e-12, diagonal);
        prop_assert_eq!(r.ci_low, (r.kappa - Z_95 * r.se).max(-1.0));
        prop_assert_eq!(r.ci_high, (r.kappa + Z_95 * r.se).min(1.0));
        prop_assert_eq!(r.band, interpret_kappa(r.kappa));
    }

    #[test]
    fn label_kappa_matches_count_kappa(pairs in labelled(100)) {
        let (refs, answers): (Vec<Label>, Vec<Label>) = pairs.into_iter().unzip();
        let labels: Vec<Label> = RATER_CHOICES.to_vec();
        let counts: Vec<Vec<u64>> = labels
            .iter()
            .map(|&a| labels.iter().map(|&b| refs.iter().zip(&answers).filter(|&(&r, &x)| r == a && x == b).count() as u64).collect())
            .collect();
        match (cohen_kappa(&refs, &answers), kappa_from_counts(&counts)) {
            (Ok(a), Ok(b)) => prop_assert!((a.kappa - b.kappa).abs() <= 1e-12),
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "{a:?} vs {b:?}"),
        }
    }

    #[test]
    fn roc_is_a_monotone_path_with_pairwise_area(
        scored in prop::collection::vec((0u8..8, any::<bool>()), 2..=50)
            .prop_filter("both classes", |v| v.iter().any(|p| p.1) && v.iter().any(|p| !p.1)),
    ) {
        let scores: Vec<f64> = scored.iter().map(|p| f64::from(p.0) / 7.0).collect();
        let positive: Vec<bool> = scored.iter().map(|p| p.1).collect();
        let curve = roc_binary(&scores, &positive, "x").unwrap();
        prop_assert_eq!(curve.points.first(), Some(&(0.0, 0.0)));
        prop_assert_eq!(curve.points.last(), Some(&(1.0, 1.0)));
        for w in curve.points.windows(2) {
            prop_assert!(w[0].0 <= w[1].0 && w[0].1 <= w[1].1);
        }
        let (mut wins, mut pairs) = (0.0, 0.0);
        for (i, si) in scores.iter().enumerate() {
            for (j, sj) in scores.iter().enumerate() {
                if positive[i] && !positive[j] {
                    pairs += 1.0;
                    wins += if si > sj { 1.0 } else if si == sj { 0.5 } else { 0.0 };
                }
            }
        }
        prop_assert!((curve.auc - wins / pairs).abs() <= 1e-12);
    }
}
