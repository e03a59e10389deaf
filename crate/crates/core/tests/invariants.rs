use std::collections::HashSet;

use mina::dataset::{class_weights, preprocess, split_dataset, EcgRecord};
use mina::dsp::{add_baseline_wander, add_white_noise};
use mina::harness::{align_attention, pr_auc, roc_auc};
use mina::nn::softmax;
use proptest::prelude::*;

fn records(labels: &[usize]) -> Vec<EcgRecord> {
    labels
        .iter()
        .enumerate()
        .map(|(i, &label)| EcgRecord {
            id: format!("r{i}"),
            samples: vec![i as f64],
            label,
            sampling_rate: 300.0,
        })
        .collect()
}

proptest! {
    #[test]
    fn preprocess_fixes_length_and_is_idempotent(x in prop::collection::vec(-5.0f64..5.0, 1..200), n in 1usize..150) {
        let once = preprocess(&x, n).unwrap();
        prop_assert_eq!(once.len(), n);
        let keep = x.len().min(n);
        prop_assert_eq!(&once[..keep], &x[..keep]);
        prop_assert!(once[keep..].iter().all(|&v| v == 0.0));
        prop_assert_eq!(preprocess(&once, n).unwrap(), once);
    }

    #[test]
    fn class_weights_preserve_total_mass(labels in prop::collection::vec(0usize..3, 3..300)) {
        prop_assume!((0..3).all(|c| labels.contains(&c)));
        let w = class_weights(&labels, 3).unwrap();
        let mass: f64 = labels.iter().map(|&l| w.0[l]).sum();
        prop_assert!((mass - labels.len() as f64).abs() <= 1e-9);
        prop_assert!(w.0.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn split_partitions_and_stratifies(labels in prop::collection::vec(0usize..2, 1..200), seed in any::<u64>()) {
        let recs = records(&labels);
        let ratios = (0.75, 0.10, 0.15);
        let split = split_dataset(&recs, ratios, seed).unwrap();
        prop_assert_eq!(&split, &split_dataset(&recs, ratios, seed).unwrap());
        let parts = [&split.train, &split.validation, &split.test];
        let ids: Vec<&str> = parts.iter().flat_map(|p| p.iter().map(|r| r.id.as_str())).collect();
        prop_assert_eq!(ids.len(), recs.len());
        prop_assert_eq!(ids.iter().collect::<HashSet<_>>().len(), recs.len());
        let total = recs.len() as f64;
        for (part, r) in parts.iter().zip([ratios.0, ratios.1, ratios.2]) {
            prop_assert!((part.len() as f64 - r * total).abs() <= 1.0);
            for class in 0..2 {
                let count = labels.iter().filter(|&&l| l == class).count() as f64;
                let got = part.iter().filter(|x| x.label == class).count() as f64;
                prop_assert!((got - r * count).abs() <= 1.0, "class {} got {} of {}", class, got, count);
            }
        }
    }

    #[test]
    fn softmax_is_a_shift_invariant_distribution(v in prop::collection::vec(-50.0f64..50.0, 1..20), shift in -100.0f64..100.0) {
        let p = softmax(&v);
        prop_assert!(p.iter().all(|&x| x > 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        let shifted: Vec<f64> = v.iter().map(|x| x + shift).collect();
        let q = softmax(&shifted);
        prop_assert!(p.iter().zip(&q).all(|(a, b)| (a - b).abs() <= 1e-12));
    }

    #[test]
    fn interferers_stay_within_their_amplitude(x in prop::collection::vec(-2.0f64..2.0, 2..500), amp in 0.0f64..3.0, seed in any::<u64>()) {
        let w = add_baseline_wander(&x, amp);
        prop_assert!(w.iter().zip(&x).all(|(a, b)| (a - b).abs() <= amp + 1e-12));
        let n = add_white_noise(&x, amp, seed);
        prop_assert_eq!(n.len(), x.len());
        prop_assert_eq!(n, add_white_noise(&x, amp, seed));
    }

    #[test]
    fn ranking_metrics_lie_in_unit_interval(
        cases in prop::collection::vec((0u8..6, 0usize..2), 2..40)
    ) {
        let scores: Vec<f64> = cases.iter().map(|c| c.0 as f64 / 5.0).collect();
        let labels: Vec<usize> = cases.iter().map(|c| c.1).collect();
        prop_assume!(labels.contains(&0) && labels.contains(&1));
        let roc = roc_auc(&scores, &labels).unwrap();
        let ap = pr_auc(&scores, &labels).unwrap();
        prop_assert!((0.0..=1.0).contains(&roc));
        prop_assert!(ap > 0.0 && ap <= 1.0);
    }

    #[test]
    fn alignment_ranges_cover_the_record(m in 1usize..80, n_pos in 1usize..20, n in 1usize..4000) {
        let ranges = align_attention(m, n_pos, n);
        prop_assert_eq!(ranges.len(), m * n_pos);
        prop_assert_eq!(ranges[0].0, 0);
        prop_assert_eq!(ranges.last().unwrap().1, n);
        for w in ranges.windows(2) {
            // Consecutive ranges touch or overlap by at most one sample.
            prop_assert!(w[1].0 <= w[0].1 && w[0].1 - w[1].0 <= 1);
            prop_assert!(w[0].0 <= w[1].0);
        }
    }
}
