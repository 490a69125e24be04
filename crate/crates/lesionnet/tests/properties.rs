//! Randomized invariants driven by proptest: shape algebra, augmentation
//! involutions, split partitioning, metric symmetries, and ensemble bounds.

use proptest::prelude::*;

use lesionnet::data::augment::{apply, Augmentation};
use lesionnet::data::{ensemble_predict, split, EnsembleWeights};
use lesionnet::metrics::{auc_trapezoid, auc_wmw, ScoredDataset, TieMode};
use lesionnet::tensor::{conv_out_extent, ops, ConvSpec, Padding, Tensor};

proptest! {
    #[test]
    fn same_conv_maps_extent_to_ceil_div_stride(
        h in 1usize..40,
        w in 1usize..40,
        k in prop_oneof![Just(1usize), Just(3), Just(5)],
        stride in 1usize..3,
        cin in 1usize..4,
        cout in 1usize..4,
    ) {
        let x = Tensor::<f64>::zeros(vec![1, cin, h, w]);
        let wt = Tensor::<f64>::zeros(vec![cout, cin, k, k]);
        let spec = ConvSpec::isotropic(2, k, stride, Padding::Same, 1, cout).unwrap();
        let y = ops::conv_forward(&x, &wt, &spec).unwrap();
        prop_assert_eq!(y.dims()[2], h.div_ceil(stride));
        prop_assert_eq!(y.dims()[3], w.div_ceil(stride));
        prop_assert_eq!(
            conv_out_extent(h, k, stride, Padding::Same).unwrap(),
            h.div_ceil(stride)
        );
    }

    #[test]
    fn flips_are_bitwise_involutions(
        data in proptest::collection::vec(-1e3f32..1e3, 12..60),
        flip_h in any::<bool>(),
        flip_v in any::<bool>(),
    ) {
        let h = 3usize;
        let w = data.len() / h;
        let x = Tensor::from_vec(vec![h, w], data[..h * w].to_vec()).unwrap();
        let aug = Augmentation { flip_h, flip_v, angle: 0.0 };
        let twice = apply(&apply(&x, &aug).unwrap(), &aug).unwrap();
        prop_assert_eq!(x.data(), twice.data());
    }

    #[test]
    fn split_partitions_at_three_quarters(n in 4usize..300, seed in any::<u64>()) {
        let ids: Vec<String> = (0..n).map(|i| format!("{i:05}")).collect();
        let s = split(&ids, seed).unwrap();
        prop_assert_eq!(s.train_ids.len(), (0.75 * n as f64).round() as usize);
        prop_assert_eq!(s.train_ids.len() + s.val_ids.len(), n);
        let mut all: Vec<&String> = s.train_ids.iter().chain(&s.val_ids).collect();
        all.sort();
        all.dedup();
        prop_assert_eq!(all.len(), n);
    }

    #[test]
    fn auc_is_invariant_under_increasing_transforms(
        neg in proptest::collection::vec(0u8..12, 1..40),
        pos in proptest::collection::vec(0u8..12, 1..40),
    ) {
        let to_scores = |v: &[u8]| v.iter().map(|&x| x as f64 / 4.0).collect::<Vec<_>>();
        let d = ScoredDataset::new(to_scores(&neg), to_scores(&pos)).unwrap();
        let t = ScoredDataset::new(
            to_scores(&neg).iter().map(|v| v.exp()).collect(),
            to_scores(&pos).iter().map(|v| v.exp()).collect(),
        )
        .unwrap();
        for mode in [TieMode::Strict, TieMode::Half] {
            prop_assert_eq!(auc_wmw(&d, mode), auc_wmw(&t, mode));
        }
        let a = auc_wmw(&d, TieMode::Half);
        prop_assert!((auc_trapezoid(&d) - a).abs() < 1e-9);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn ensemble_is_bounded_and_normalized(
        probs in [0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..=1.0],
        ratio in [0.0f64..10.0, 0.0f64..10.0, 0.0f64..10.0, 0.0f64..10.0],
    ) {
        prop_assume!(ratio.iter().sum::<f64>() > 1e-9);
        let w = EnsembleWeights::from_ratio(ratio).unwrap();
        prop_assert!((w.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let p = ensemble_predict(probs, &w).unwrap();
        let lo = probs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(p >= lo - 1e-12 && p <= hi + 1e-12);
    }
}
