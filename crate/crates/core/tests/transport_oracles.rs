use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wasserfair::transport::{dual_estimate, emd_1d, emd_exact, per_feature_emd};
use wasserfair::{CriticState, Dataset, EmpiricalCloud};

fn cloud_from(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-2.0..2.0))
}

fn cloud(a: &Array2<f64>) -> EmpiricalCloud {
    EmpiricalCloud::new(a.clone()).unwrap()
}

/// Minimum over all permutations of the mean matched distance.
fn brute_force_matching(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    fn permute(k: usize, perm: &mut Vec<usize>, cost: &dyn Fn(&[usize]) -> f64, best: &mut f64) {
        if k == perm.len() {
            *best = best.min(cost(perm));
            return;
        }
        for i in k..perm.len() {
            perm.swap(k, i);
            permute(k + 1, perm, cost, best);
            perm.swap(k, i);
        }
    }
    let n = a.nrows();
    let dist = |i: usize, j: usize| {
        a.row(i)
            .iter()
            .zip(b.row(j))
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let cost = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| dist(i, j)).sum::<f64>() / n as f64;
    let mut best = f64::INFINITY;
    permute(0, &mut (0..n).collect(), &cost, &mut best);
    best
}

#[test]
fn exact_matches_permutation_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for trial in 0..40 {
        let k = 1 + trial % 6;
        let d = 1 + trial % 3;
        let a = cloud_from(k, d, &mut rng);
        let b = cloud_from(k, d, &mut rng);
        let exact = emd_exact(&cloud(&a), &cloud(&b)).unwrap();
        let brute = brute_force_matching(&a, &b);
        assert!((exact - brute).abs() < 1e-9, "k={k} d={d}: {exact} vs {brute}");
    }
}

#[test]
fn one_dimensional_example() {
    let v = emd_1d(&[0.0, 0.0, 4.0], &[1.0, 2.0, 3.0]).unwrap();
    assert!((v - 4.0 / 3.0).abs() < 1e-12);
    let a = Array2::from_shape_vec((3, 1), vec![0.0, 0.0, 4.0]).unwrap();
    let b = Array2::from_shape_vec((3, 1), vec![1.0, 2.0, 3.0]).unwrap();
    assert!((brute_force_matching(&a, &b) - 4.0 / 3.0).abs() < 1e-12);
}

#[test]
fn per_feature_matches_exact_per_column() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = cloud_from(37, 4, &mut rng);
    let p: Vec<usize> = (0..37).map(|i| usize::from(i % 3 == 0)).collect();
    let ds = Dataset::from_parts(x.clone(), vec![0; 37], p.clone()).unwrap();
    let part = ds.partition();
    let values = per_feature_emd(&ds, &part).unwrap();
    for (j, v) in values.iter().enumerate() {
        let col = |g: &[usize]| {
            Array2::from_shape_fn((g.len(), 1), |(i, _)| x[[g[i], j]])
        };
        let exact = emd_exact(&cloud(&col(&part.groups[0])), &cloud(&col(&part.groups[1]))).unwrap();
        assert!((v - exact).abs() < 1e-9);
    }
}

#[test]
fn gaussian_clouds_weak_duality() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..10 {
        let a = cloud_from(32, 3, &mut rng);
        let b = cloud_from(32, 3, &mut rng) + 0.5;
        let w = CriticState {
            weights: ndarray::Array1::from_shape_simple_fn(3, || rng.random_range(-1.0..1.0)),
            clip: 1.0,
        };
        let dual = dual_estimate(&w, a.view(), b.view()).unwrap();
        assert!(dual <= emd_exact(&cloud(&a), &cloud(&b)).unwrap() + 1e-9);
    }
}

fn arb_cloud(max_k: usize, d: usize) -> impl Strategy<Value = Array2<f64>> {
    (1..=max_k).prop_flat_map(move |k| {
        proptest::collection::vec(-3.0f64..3.0, k * d)
            .prop_map(move |v| Array2::from_shape_vec((k, d), v).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn symmetric_and_zero_on_self(d in 1usize..4, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = cloud_from(rng.random_range(1..12), d, &mut rng);
        let b = cloud_from(rng.random_range(1..12), d, &mut rng);
        let ab = emd_exact(&cloud(&a), &cloud(&b)).unwrap();
        let ba = emd_exact(&cloud(&b), &cloud(&a)).unwrap();
        prop_assert!((ab - ba).abs() < 1e-9);
        prop_assert!(emd_exact(&cloud(&a), &cloud(&a)).unwrap().abs() < 1e-9);
    }

    #[test]
    fn triangle_inequality(a in arb_cloud(16, 2), b in arb_cloud(16, 2), c in arb_cloud(16, 2)) {
        let ab = emd_exact(&cloud(&a), &cloud(&b)).unwrap();
        let bc = emd_exact(&cloud(&b), &cloud(&c)).unwrap();
        let ac = emd_exact(&cloud(&a), &cloud(&c)).unwrap();
        prop_assert!(ac <= ab + bc + 1e-9);
    }

    #[test]
    fn translation_and_scaling(a in arb_cloud(12, 3), b in arb_cloud(12, 3), t in -5.0f64..5.0, s in -3.0f64..3.0) {
        let base = emd_exact(&cloud(&a), &cloud(&b)).unwrap();
        let moved = emd_exact(&cloud(&(&a + t)), &cloud(&(&b + t))).unwrap();
        prop_assert!((base - moved).abs() < 1e-9);
        let scaled = emd_exact(&cloud(&(&a * s)), &cloud(&(&b * s))).unwrap();
        prop_assert!((scaled - s.abs() * base).abs() < 1e-9 * (1.0 + base * s.abs()));
    }

    #[test]
    fn one_d_agrees_with_exact(xs in proptest::collection::vec(-10.0f64..10.0, 1..40),
                              ys in proptest::collection::vec(-10.0f64..10.0, 1..40)) {
        let a = Array2::from_shape_vec((xs.len(), 1), xs.clone()).unwrap();
        let b = Array2::from_shape_vec((ys.len(), 1), ys.clone()).unwrap();
        let exact = emd_exact(&cloud(&a), &cloud(&b)).unwrap();
        prop_assert!((emd_1d(&xs, &ys).unwrap() - exact).abs() < 1e-9);
    }

    #[test]
    fn dual_never_exceeds_primal(a in arb_cloud(24, 3), b in arb_cloud(24, 3),
                                 w in proptest::collection::vec(-1.0f64..1.0, 3)) {
        prop_assume!(w.iter().any(|v| v.abs() > 1e-6));
        let critic = CriticState { weights: w.into(), clip: 1.0 };
        let dual = dual_estimate(&critic, a.view(), b.view()).unwrap();
        prop_assert!(dual <= emd_exact(&cloud(&a), &cloud(&b)).unwrap() + 1e-9);
    }
}
