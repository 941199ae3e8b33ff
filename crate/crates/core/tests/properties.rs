use std::collections::BTreeSet;

use ndarray::Array2;
use proptest::prelude::*;

use genrefuse::eval::{micro_prf, on_threshold_grid, tune_thresholds};
use genrefuse::fusion::predict_labels;

fn label(i: usize) -> String {
    format!("L{i}")
}

fn sets(n: usize, labels: usize) -> impl Strategy<Value = Vec<BTreeSet<String>>> {
    prop::collection::vec(prop::collection::btree_set((0..labels).prop_map(label), 0..=labels), n)
}

fn paired(max_n: usize, labels: usize) -> impl Strategy<Value = (Vec<BTreeSet<String>>, Vec<BTreeSet<String>>)> {
    (1..=max_n).prop_flat_map(move |n| (sets(n, labels), sets(n, labels)))
}

proptest! {
    #[test]
    fn perfect_prediction_scores_one((gold, _) in paired(15, 6)) {
        let order: Vec<String> = (0..6).map(label).collect();
        let r = micro_prf(&gold, &gold, &order).unwrap();
        let any = gold.iter().any(|g| !g.is_empty());
        prop_assert_eq!(r.micro_f1, if any { 1.0 } else { 0.0 });
    }

    #[test]
    fn f1_bounded_and_between_p_and_r((gold, pred) in paired(15, 6)) {
        let order: Vec<String> = (0..6).map(label).collect();
        let r = micro_prf(&gold, &pred, &order).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.micro_f1));
        let (lo, hi) = (r.micro_precision.min(r.micro_recall), r.micro_precision.max(r.micro_recall));
        if r.micro_f1 > 0.0 {
            prop_assert!(r.micro_f1 >= lo - 1e-12 && r.micro_f1 <= hi + 1e-12);
        }
    }

    #[test]
    fn record_order_does_not_matter((gold, pred) in paired(15, 6), rot in 0usize..15) {
        let order: Vec<String> = (0..6).map(label).collect();
        let k = rot % gold.len();
        let (mut g2, mut p2) = (gold.clone(), pred.clone());
        g2.rotate_left(k);
        p2.rotate_left(k);
        let a = micro_prf(&gold, &pred, &order).unwrap();
        let b = micro_prf(&g2, &p2, &order).unwrap();
        prop_assert_eq!(a.totals(), b.totals());
        prop_assert_eq!(a.micro_f1, b.micro_f1);
    }

    #[test]
    fn tuned_thresholds_on_grid(
        probs in prop::collection::vec(0.0f64..=1.0, 24),
        gold in prop::collection::vec(any::<bool>(), 24),
    ) {
        let p = Array2::from_shape_vec((8, 3), probs).unwrap();
        let g = Array2::from_shape_vec((8, 3), gold.iter().map(|&b| b as u8 as f64).collect()).unwrap();
        let tuned = tune_thresholds(p.view(), g.view()).unwrap();
        prop_assert_eq!(tuned.len(), 3);
        prop_assert!(tuned.as_slice().iter().all(|&t| on_threshold_grid(t)));
    }

    #[test]
    fn prediction_never_empty(
        probs in prop::collection::vec(0.0f64..=1.0, 1..12),
        tau in 0usize..=10,
        pick in any::<prop::sample::Index>(),
    ) {
        let thresholds = vec![tau as f64 / 10.0; probs.len()];
        let fallback = pick.index(probs.len());
        let chosen = predict_labels(&probs, &thresholds, fallback);
        prop_assert!(!chosen.is_empty());
        if probs.iter().all(|&p| p <= thresholds[0]) {
            prop_assert_eq!(chosen, vec![fallback]);
        }
    }
}
