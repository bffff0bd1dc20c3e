use std::path::PathBuf;

use dido_core::datagen::{
    gen_toy, load_tabular, perturb, split, split_sizes, PerturbationKind, SplitTag, Standardizer, ToyVariant,
};
use dido_core::diffkit::Tensor;
use proptest::prelude::*;

fn wine_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/winequality-red.csv")
}

#[test]
fn wine_loads_with_expected_shape() {
    let ds = load_tabular(&wine_path(), "quality", b',').unwrap();
    assert_eq!(ds.features.shape(), &[1599, 11]);
    assert_eq!(ds.targets.len(), 1599);
    assert_eq!(ds.feature_names.len(), 11);
    assert!(!ds.feature_names.iter().any(|n| n == "quality"));
    assert!(ds.targets.iter().all(|&q| (3.0..=8.0).contains(&q)));
    assert_eq!(&ds.features.row(0)[..2], &[7.4, 0.7]);
}

#[test]
fn wine_split_sizes() {
    let ds = load_tabular(&wine_path(), "quality", b',').unwrap();
    let s = split(&ds, (0.72, 0.08, 0.2), 1).unwrap();
    let sizes: Vec<usize> = [SplitTag::Train, SplitTag::Val, SplitTag::Test]
        .iter()
        .map(|&t| s.part(t).unwrap().len())
        .collect();
    assert_eq!(sizes, vec![1153, 127, 319]);
    // a different seed reorders but keeps the sizes
    let s2 = split(&ds, (0.72, 0.08, 0.2), 2).unwrap();
    assert_eq!(s2.part(SplitTag::Test).unwrap().len(), 319);
    assert_ne!(s.part(SplitTag::Test).unwrap().targets, s2.part(SplitTag::Test).unwrap().targets);
}

#[test]
fn missing_target_is_reported() {
    let err = load_tabular(&wine_path(), "price", b',').unwrap_err();
    assert!(err.to_string().contains("price"), "{err}");
}

#[test]
fn wine_perturbations() {
    let ds = load_tabular(&wine_path(), "quality", b',').unwrap();
    let neg = perturb(&ds, PerturbationKind::NegateAll).unwrap();
    assert!(neg.features.data().iter().all(|&v| v <= 0.0));
    assert_eq!(neg.targets, ds.targets);
    let sh = perturb(&ds, PerturbationKind::ShuffleFeatures { seed: 4 }).unwrap();
    let d = ds.n_features();
    for j in 0..d {
        let mut a: Vec<f64> = (0..ds.len()).map(|i| ds.features.row(i)[j]).collect();
        let mut b: Vec<f64> = (0..ds.len()).map(|i| sh.features.row(i)[j]).collect();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        assert_eq!(a, b, "column {j} is not a permutation");
    }
    assert_ne!(sh.features, ds.features);
}

#[test]
fn toy_b_leaves_the_gap_empty() {
    let ds = gen_toy(ToyVariant::B, 5000, 8).unwrap();
    let x = ds.features.data();
    assert!(x.iter().all(|&v| (-3.0..=-1.0).contains(&v) || (3.0..=5.0).contains(&v)));
    assert!(x.iter().any(|&v| v < 0.0) && x.iter().any(|&v| v > 0.0));
}

proptest! {
    #[test]
    fn split_sizes_partition(n in 10usize..5000, val in 0.0f64..0.3, test in 0.05f64..0.4) {
        match split_sizes(n, (1.0 - val - test, val, test)) {
            Ok((a, b, c)) => {
                prop_assert_eq!(a + b + c, n);
                prop_assert!(a > 0);
            }
            // a requested split that rounds down to nothing is refused
            Err(_) => prop_assert!(
                (val * n as f64 + 1e-9).floor() == 0.0 || (test * n as f64 + 1e-9).floor() == 0.0
            ),
        }
    }

    #[test]
    fn standardized_train_columns_are_unit(
        data in prop::collection::vec(-100.0f64..100.0, 30),
    ) {
        let x = Tensor::matrix(10, 3, data).unwrap();
        let s = Standardizer::fit(&x).unwrap();
        let z = s.transform(&x).unwrap();
        for j in 0..3 {
            let col: Vec<f64> = (0..10).map(|i| z.row(i)[j]).collect();
            let m = col.iter().sum::<f64>() / 10.0;
            let v = col.iter().map(|c| (c - m).powi(2)).sum::<f64>() / 10.0;
            prop_assert!(m.abs() < 1e-9);
            prop_assert!((v - 1.0).abs() < 1e-6 || v.abs() < 1e-12);
        }
    }

    #[test]
    fn negation_is_idempotent(data in prop::collection::vec(-5.0f64..5.0, 4..40)) {
        let n = data.len();
        let ds = dido_core::datagen::RegressionDataset::new(Tensor::column(data), vec![0.0; n]).unwrap();
        let once = perturb(&ds, PerturbationKind::NegateAll).unwrap();
        let twice = perturb(&once, PerturbationKind::NegateAll).unwrap();
        prop_assert_eq!(once.features, twice.features);
    }

    #[test]
    fn toy_generation_is_deterministic(seed in any::<u64>(), n in 10usize..200) {
        let a = gen_toy(ToyVariant::A, n, seed).unwrap();
        let b = gen_toy(ToyVariant::A, n, seed).unwrap();
        prop_assert_eq!(a.features, b.features);
        prop_assert_eq!(a.targets, b.targets);
    }
}
