use std::collections::BTreeSet;

use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wasserfair::audit::{curve_area, detect_flipped, discovery_curve, discrimination_scores, found_at, match_and_flip};
use wasserfair::{Dataset, DiscriminationRanking};

fn population(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_simple_fn((n, 3), || rng.random_range(-1.0..1.0));
    let y = (0..n).map(|_| u8::from(rng.random_bool(0.4))).collect();
    let p = (0..n).map(|_| usize::from(rng.random_bool(0.35))).collect();
    Dataset::from_parts(x, y, p).unwrap()
}

fn ranking_from(order: Vec<usize>) -> DiscriminationRanking {
    let n = order.len();
    let mut scores = vec![0.0; n];
    for (rank, &i) in order.iter().enumerate() {
        scores[i] = (n - rank) as f64;
    }
    DiscriminationRanking { scores, ordering: order }
}

#[test]
fn flipping_touches_only_positive_targets() {
    for seed in 0..10 {
        let ds = population(300, seed);
        let (flipped_ds, exp) = match_and_flip(&ds).unwrap();
        assert_eq!(flipped_ds.x, ds.x);
        assert_eq!(flipped_ds.p, ds.p);
        let targets: BTreeSet<usize> = exp.pairs.iter().map(|&(_, f)| f).collect();
        assert_eq!(exp.flipped, targets.into_iter().collect::<Vec<_>>());
        for i in 0..ds.n() {
            if exp.flipped.binary_search(&i).is_ok() {
                assert_eq!((ds.y[i], flipped_ds.y[i]), (1, 0));
                assert_eq!(ds.p[i], exp.target_group);
            } else {
                assert_eq!(ds.y[i], flipped_ds.y[i]);
            }
        }
        for &(m, f) in &exp.pairs {
            assert_ne!(ds.p[m], exp.target_group);
            assert_eq!(ds.y[m], 1);
            assert_eq!(ds.y[f], 1);
        }
        assert_eq!(match_and_flip(&ds).unwrap().1, exp);
    }
}

#[test]
fn matches_are_nearest_neighbours() {
    let ds = population(200, 77);
    let (_, exp) = match_and_flip(&ds).unwrap();
    let dist = |a: usize, b: usize| -> f64 {
        ds.x.row(a).iter().zip(ds.x.row(b)).map(|(u, v)| (u - v).powi(2)).sum()
    };
    for &(m, f) in &exp.pairs {
        let best = (0..ds.n())
            .filter(|&j| ds.p[j] == exp.target_group && ds.y[j] == 1)
            .min_by(|&a, &b| dist(m, a).total_cmp(&dist(m, b)).then(a.cmp(&b)))
            .unwrap();
        assert_eq!(f, best);
    }
}

#[test]
fn pure_noise_detection_is_near_prediction_rate() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let ds = population(2000, 5);
    let (flipped_ds, exp) = match_and_flip(&ds).unwrap();
    let noise = Array2::from_shape_simple_fn((ds.n(), 4), || rng.random_range(-1.0..1.0));
    let det = detect_flipped(&flipped_ds, &exp, noise.view(), &[1e-2]).unwrap();
    let clf = wasserfair::linear_models::logreg_fit(noise.view(), &flipped_ds.y, 1e-2).unwrap();
    let rate = clf.score(noise.view()).unwrap().iter().filter(|&&s| s > 0.5).count() as f64 / ds.n() as f64;
    let se = (rate.max(0.01) * (1.0 - rate) / exp.flipped.len() as f64).sqrt();
    assert!((det.fraction - rate).abs() < 4.0 * se + 0.02, "fraction {} rate {rate}", det.fraction);
}

#[test]
fn random_ranking_follows_diagonal() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let group: Vec<usize> = (0..1000).collect();
    let flipped: Vec<usize> = group.iter().copied().filter(|_| rng.random_bool(0.2)).collect();
    let mut order = group.clone();
    order.shuffle(&mut rng);
    let curve = discovery_curve(&ranking_from(order), &flipped, &group).unwrap();
    let f = flipped.len() as f64;
    for &(x, y) in curve.iter().step_by(50) {
        // Hypergeometric standard deviation of the found fraction.
        let sd = (x * (1.0 - x) * (1000.0 - f) / (999.0 * f)).sqrt();
        assert!((y - x).abs() <= 4.0 * sd + 1e-9, "({x}, {y})");
    }
    assert_eq!(*curve.last().unwrap(), (1.0, 1.0));
}

#[test]
fn best_case_curve_reaches_one_early() {
    let group: Vec<usize> = (0..50).collect();
    let flipped: Vec<usize> = (0..10).collect();
    let curve = discovery_curve(&ranking_from(group.clone()), &flipped, &group).unwrap();
    assert_eq!(found_at(&curve, 0.2), 1.0);
    assert!((curve_area(&curve) - (1.0 - 0.1)).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn s_d_ranking_is_scale_invariant(
        pairs in proptest::collection::vec((0.0f64..1.0, 0.01f64..1.0), 1..60),
        k in 0.01f64..100.0,
    ) {
        let p_o = Array1::from_iter(pairs.iter().map(|p| p.0));
        let p_f = Array1::from_iter(pairs.iter().map(|p| p.1));
        let a = discrimination_scores(p_o.view(), p_f.view()).unwrap();
        let b = discrimination_scores((&p_o * k).view(), (&p_f * k).view()).unwrap();
        for (x, y) in a.scores.iter().zip(&b.scores) {
            prop_assert!((x - y).abs() < 1e-9);
        }
        let same = discrimination_scores(p_f.view(), p_f.view()).unwrap();
        prop_assert!(same.scores.iter().all(|&s| s == 0.0));
        for w in a.ordering.windows(2) {
            prop_assert!(a.scores[w[0]] >= a.scores[w[1]]);
        }
    }

    #[test]
    fn curve_is_monotone_and_area_matches_pair_count(
        n in 2usize..80,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let group: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.7)).collect();
        prop_assume!(group.len() >= 2);
        let flipped: Vec<usize> = group.iter().copied().filter(|_| rng.random_bool(0.3)).collect();
        prop_assume!(!flipped.is_empty() && flipped.len() < group.len());
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let curve = discovery_curve(&ranking_from(order.clone()), &flipped, &group).unwrap();

        prop_assert_eq!(curve[0], (0.0, 0.0));
        prop_assert_eq!(*curve.last().unwrap(), (1.0, 1.0));
        for w in curve.windows(2) {
            prop_assert!(w[1].0 > w[0].0 && w[1].1 >= w[0].1);
        }
        // Brute force: correctly ordered (flipped, unflipped) pairs plus the
        // half-step credit of the flipped individuals themselves.
        let pos = |i: usize| order.iter().position(|&j| j == i).unwrap();
        let unflipped: Vec<usize> = group.iter().copied().filter(|i| !flipped.contains(i)).collect();
        let correct = flipped
            .iter()
            .flat_map(|&f| unflipped.iter().map(move |&u| (f, u)))
            .filter(|&(f, u)| pos(f) < pos(u))
            .count() as f64;
        let (g, fl) = (group.len() as f64, flipped.len() as f64);
        let area = curve_area(&curve);
        prop_assert!((0.0..=1.0).contains(&area));
        let rank_area = (correct + fl * fl / 2.0) / (g * fl);
        prop_assert!((area - rank_area).abs() < 1e-9, "area {} vs {}", area, rank_area);
    }
}
