use dido_core::metrics::{pr_aupr, roc_auc, sparsification_curves, uce, ErrorMetric};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pairwise_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li && !lj {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

/// Every distinct score as a threshold, interpolated precision, step area.
fn enumerated_aupr(scores: &[f64], labels: &[bool]) -> f64 {
    let n_pos = labels.iter().filter(|&&l| l).count() as f64;
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let pts: Vec<(f64, f64)> = thresholds
        .iter()
        .map(|&t| {
            let tp = scores.iter().zip(labels).filter(|(s, l)| **s >= t && **l).count() as f64;
            let fl = scores.iter().filter(|s| **s >= t).count() as f64;
            (tp / n_pos, tp / fl)
        })
        .collect();
    let mut area = 0.0;
    let mut prev = 0.0;
    for (i, &(r, _)) in pts.iter().enumerate() {
        let p = pts[i..].iter().map(|q| q.1).fold(0.0, f64::max);
        area += (r - prev) * p;
        prev = r;
    }
    area
}

fn sample(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<bool>) {
    let n = rng.gen_range(2..=200);
    // coarse grid, so ties are common
    let levels = rng.gen_range(2..20);
    let mut labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
    labels[0] = true;
    labels[1] = false;
    let scores = labels
        .iter()
        .map(|&l| (rng.gen_range(0..levels) + if l { 2 } else { 0 }) as f64 / levels as f64)
        .collect();
    (scores, labels)
}

#[test]
fn auc_matches_pairwise_counting() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..500 {
        let (s, l) = sample(&mut rng);
        let got = roc_auc(&s, &l).unwrap();
        assert!((got - pairwise_auc(&s, &l)).abs() < 1e-9);
    }
}

#[test]
fn aupr_matches_threshold_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..500 {
        let (s, l) = sample(&mut rng);
        let got = pr_aupr(&s, &l).unwrap();
        assert!((got - enumerated_aupr(&s, &l)).abs() < 1e-9);
    }
}

#[test]
fn ause_vanishes_for_oracle_scores() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..100 {
        let n = rng.gen_range(20..400);
        let resid: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let targets: Vec<f64> = (0..n).map(|_| rng.gen_range(1.0..10.0)).collect();
        for metric in [ErrorMetric::Rmse, ErrorMetric::Rel] {
            let scores: Vec<f64> = match metric {
                ErrorMetric::Rmse => resid.iter().map(|r| r.abs()).collect(),
                ErrorMetric::Rel => resid.iter().zip(&targets).map(|(r, t)| r.abs() / t).collect(),
            };
            let c = sparsification_curves(&resid, &targets, &scores, 0.05, metric).unwrap();
            let (ause, _) = c.ause_aurg().unwrap();
            assert!(ause.abs() < 1e-12, "{metric:?}: {ause}");
        }
    }
}

#[test]
fn uce_vanishes_under_perfect_calibration() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for _ in 0..100 {
        let n = rng.gen_range(1..500);
        let e: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..7.0)).collect();
        assert!(uce(&e, &e, 15).unwrap() < 1e-12);
    }
}

proptest! {
    #[test]
    fn auc_flips_under_negation(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (s, l) = sample(&mut rng);
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        let a = roc_auc(&s, &l).unwrap();
        prop_assert!((a + roc_auc(&neg, &l).unwrap() - 1.0).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
        let p = pr_aupr(&s, &l).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
    }

    #[test]
    fn ranking_metrics_ignore_monotone_transforms(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (s, l) = sample(&mut rng);
        let t: Vec<f64> = s.iter().map(|v| (3.0 * v).exp() + 1.0).collect();
        prop_assert!((roc_auc(&s, &l).unwrap() - roc_auc(&t, &l).unwrap()).abs() < 1e-12);
        prop_assert!((pr_aupr(&s, &l).unwrap() - pr_aupr(&t, &l).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn oracle_curve_never_above_predictive_start(
        resid in prop::collection::vec(-4.0f64..4.0, 20..200),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scores: Vec<f64> = resid.iter().map(|_| rng.gen()).collect();
        let t = vec![1.0; resid.len()];
        let c = sparsification_curves(&resid, &t, &scores, 0.05, ErrorMetric::Rmse).unwrap();
        prop_assert!((c.oracle.values[0] - c.predictive.values[0]).abs() < 1e-12);
        for (o, p) in c.oracle.values.iter().zip(&c.predictive.values) {
            prop_assert!(o <= &(p + 1e-12));
        }
        let (ause, _) = c.ause_aurg().unwrap();
        prop_assert!(ause >= -1e-12);
    }

    #[test]
    fn uce_non_negative(
        e in prop::collection::vec(0.0f64..5.0, 1..100),
        shift in -1.0f64..1.0,
    ) {
        let u: Vec<f64> = e.iter().map(|v| (v + shift).abs()).collect();
        prop_assert!(uce(&e, &u, 15).unwrap() >= 0.0);
    }
}
