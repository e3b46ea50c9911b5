use proptest::prelude::*;
use sst_core::data::{fit_scaler, pad_to, strip_padding, time_split};
use sst_core::metrics::{roc_auc, roc_curve};
use sst_core::model::{normalize_pairs, normalize_pairs_graph};
use sst_core::{Graph, Tensor};

fn scored_labels() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2usize..80).prop_flat_map(|n| {
        (
            prop::collection::vec((0u8..12).prop_map(|v| v as f64 / 11.0), n),
            prop::collection::vec(any::<bool>(), n),
        )
            .prop_filter("both classes", |(_, l)| l.iter().any(|&v| v) && l.iter().any(|&v| !v))
    })
}

fn pair_counting(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &p) in labels.iter().enumerate() {
        for (j, &q) in labels.iter().enumerate() {
            if p && !q {
                pairs += 1.0;
                wins += match scores[i].partial_cmp(&scores[j]).unwrap() {
                    std::cmp::Ordering::Greater => 1.0,
                    std::cmp::Ordering::Equal => 0.5,
                    std::cmp::Ordering::Less => 0.0,
                };
            }
        }
    }
    wins / pairs
}

proptest! {
    #[test]
    fn auc_matches_pair_counting((scores, labels) in scored_labels()) {
        let a = roc_auc(&scores, &labels).unwrap();
        prop_assert!((a - pair_counting(&scores, &labels)).abs() < 1e-12);
    }

    #[test]
    fn auc_invariant_under_monotone_maps((scores, labels) in scored_labels()) {
        let a = roc_auc(&scores, &labels).unwrap();
        let mapped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
        prop_assert_eq!(a, roc_auc(&mapped, &labels).unwrap());
    }

    #[test]
    fn flipping_labels_gives_complement((scores, labels) in scored_labels()) {
        let a = roc_auc(&scores, &labels).unwrap();
        let flipped: Vec<bool> = labels.iter().map(|l| !l).collect();
        prop_assert!((a + roc_auc(&scores, &flipped).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn roc_is_monotone_from_origin_to_corner((scores, labels) in scored_labels()) {
        let pts = roc_curve(&scores, &labels).unwrap();
        prop_assert_eq!((pts[0].fpr, pts[0].tpr), (0.0, 0.0));
        let last = pts.last().unwrap();
        prop_assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        for w in pts.windows(2) {
            prop_assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr && w[1].threshold < w[0].threshold);
        }
    }

    #[test]
    fn scaled_training_data_lies_in_unit_box(
        data in (1usize..20).prop_flat_map(|rows| prop::collection::vec(-1e3f64..1e3, rows * 3))
    ) {
        let rows = data.len() / 3;
        let x = Tensor::new(&[rows, 1, 3], data).unwrap();
        let s = fit_scaler(&x, None).unwrap();
        let y = s.apply(&x, None).unwrap();
        prop_assert!(y.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn split_partitions_in_order(n in 0usize..5000, a in 1usize..100, b in 0usize..30, c in 0usize..30) {
        if let Ok([tr, va, te]) = time_split(n, [a, b, c]) {
            prop_assert_eq!(tr.start, 0);
            prop_assert_eq!(tr.end, va.start);
            prop_assert_eq!(va.end, te.start);
            prop_assert_eq!(te.end, n);
            prop_assert_eq!(va.len(), n * b / (a + b + c));
        }
    }

    #[test]
    fn padding_round_trips(lens in prop::collection::vec(1usize..6, 1..8), f in 1usize..4) {
        let seqs: Vec<Vec<Vec<f64>>> = lens
            .iter()
            .enumerate()
            .map(|(i, &l)| (0..l).map(|s| (0..f).map(|k| (i * 100 + s * 10 + k) as f64).collect()).collect())
            .collect();
        let t = *lens.iter().max().unwrap();
        let p = pad_to(&seqs, t).unwrap();
        prop_assert_eq!(p.x.shape(), &[seqs.len(), t, f + 1][..]);
        prop_assert_eq!(strip_padding(&p.x, &p.pad_mask).unwrap(), seqs);
    }

    #[test]
    fn pair_normalization_agrees_with_graph(raw in prop::collection::vec(0.001f64..1.0, 1..10).prop_map(|v| [v.clone(), v.iter().rev().copied().collect::<Vec<_>>()].concat())) {
        let n = raw.len();
        let t = Tensor::new(&[1, n], raw).unwrap();
        let pos = normalize_pairs(&t).unwrap();
        let mut g = Graph::new();
        let v = g.constant(t);
        let both = normalize_pairs_graph(&mut g, v).unwrap();
        for (pair, p) in g.value(both).data().chunks(2).zip(pos.data()) {
            prop_assert!((pair[0] + pair[1] - 1.0).abs() < 1e-12);
            prop_assert!((pair[1] - p).abs() < 1e-15);
        }
    }
}
