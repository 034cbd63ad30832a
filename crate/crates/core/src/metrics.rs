//! Fairness and classification measurements.

use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linear_models::ClassifierState;
use crate::transport::{emd_exact, EmpiricalCloud};

/// Rows drawn per group by [`group_emd`].
pub const EMD_SUBSAMPLE: usize = 256;
/// Draws averaged by [`group_emd`].
pub const EMD_DRAWS: usize = 5;

fn check_len(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::Dimension(format!("{what}: lengths {a} and {b} differ")));
    }
    Ok(())
}

/// Mean score of every protected class, in class order.
pub fn group_means(scores: ArrayView1<'_, f64>, p: &[usize]) -> Result<Vec<f64>> {
    check_len(scores.len(), p.len(), "group means")?;
    let classes = p.iter().max().map_or(0, |m| m + 1);
    let mut sum = vec![0.0; classes];
    let mut count = vec![0usize; classes];
    for (s, &c) in scores.iter().zip(p) {
        sum[c] += s;
        count[c] += 1;
    }
    if classes < 2 {
        return Err(Error::EmptyGroup("fewer than two protected classes present".into()));
    }
    if let Some(c) = count.iter().position(|&k| k == 0) {
        return Err(Error::EmptyGroup(format!("protected class {c} has no rows")));
    }
    Ok(sum.iter().zip(&count).map(|(s, &k)| s / k as f64).collect())
}

fn max_over_min(means: &[f64]) -> f64 {
    let hi = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = means.iter().copied().fold(f64::INFINITY, f64::min);
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// `max(mean_0, mean_1) / min(mean_0, mean_1)`; infinite when a group mean is zero.
pub fn statistical_parity(scores: ArrayView1<'_, f64>, p: &[usize]) -> Result<f64> {
    let means = group_means(scores, p)?;
    if means.len() != 2 {
        return Err(Error::InvalidArgument(format!(
            "statistical parity needs two groups, got {}",
            means.len()
        )));
    }
    Ok(max_over_min(&means))
}

/// Largest class mean over smallest class mean.
pub fn multiclass_parity(scores: ArrayView1<'_, f64>, p: &[usize]) -> Result<f64> {
    Ok(max_over_min(&group_means(scores, p)?))
}

/// yNN consistency: `1 - mean_i |s_i - mean of s over the k nearest neighbours of z_i|`.
///
/// Neighbours are Euclidean, exclude the point itself, and ties go to the
/// lower index.
pub fn consistency(z: ArrayView2<'_, f64>, scores: ArrayView1<'_, f64>, k: usize) -> Result<f64> {
    let n = z.nrows();
    check_len(n, scores.len(), "consistency")?;
    if k == 0 || k >= n {
        return Err(Error::InvalidArgument(format!("k = {k} must be in 1..{n}")));
    }
    let z = z.as_standard_layout();
    let flat = z.as_slice().expect("standard layout");
    let width = z.ncols();
    let rows: Vec<&[f64]> = (0..n).map(|i| &flat[i * width..(i + 1) * width]).collect();

    let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    let mut total = 0.0;
    for i in 0..n {
        best.clear();
        let a = rows[i];
        for (j, b) in rows.iter().enumerate() {
            if j == i {
                continue;
            }
            let bound = if best.len() == k { best[k - 1].0 } else { f64::INFINITY };
            let mut acc = 0.0;
            let mut pruned = false;
            for (x, y) in a.iter().zip(b.iter()) {
                acc += (x - y) * (x - y);
                if acc > bound {
                    pruned = true;
                    break;
                }
            }
            // Equal distances keep the earlier (lower) index.
            if pruned || (best.len() == k && acc >= bound) {
                continue;
            }
            let pos = best.partition_point(|&(d, _)| d <= acc);
            best.insert(pos, (acc, j));
            best.truncate(k);
        }
        let mean = best.iter().map(|&(_, j)| scores[j]).sum::<f64>() / k as f64;
        total += (scores[i] - mean).abs();
    }
    Ok(1.0 - total / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F1Score {
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    /// No sample was predicted positive; `f1` is reported as 0.
    pub no_predicted_positives: bool,
}

/// F1 of the predictions `score > threshold`.
pub fn f1(scores: ArrayView1<'_, f64>, labels: &[u8], threshold: f64) -> Result<F1Score> {
    check_len(scores.len(), labels.len(), "f1")?;
    two_classes(labels)?;
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (&s, &y) in scores.iter().zip(labels) {
        match (s > threshold, y == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
    }
    if tp + fp == 0 {
        return Ok(F1Score {
            f1: 0.0,
            precision: 0.0,
            recall: 0.0,
            no_predicted_positives: true,
        });
    }
    let precision = tp as f64 / (tp + fp) as f64;
    let recall = tp as f64 / (tp + fneg) as f64;
    let f1 = if tp == 0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(F1Score {
        f1,
        precision,
        recall,
        no_predicted_positives: false,
    })
}

fn two_classes(labels: &[u8]) -> Result<usize> {
    let pos = labels.iter().filter(|&&y| y == 1).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::Degenerate("labels contain a single class".into()));
    }
    Ok(pos)
}

/// Two-sample Kolmogorov-Smirnov statistic between the scores of positives
/// and negatives, `max_t |TPR(t) - FPR(t)|`.
pub fn ks_statistic(scores: ArrayView1<'_, f64>, labels: &[u8]) -> Result<f64> {
    check_len(scores.len(), labels.len(), "ks")?;
    let pos = two_classes(labels)? as f64;
    let neg = labels.len() as f64 - pos;
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let (mut cp, mut cn, mut best) = (0.0f64, 0.0f64, 0.0f64);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                cp += 1.0;
            } else {
                cn += 1.0;
            }
            i += 1;
        }
        best = best.max((cp / pos - cn / neg).abs());
    }
    Ok(best)
}

/// Exact EMD between the two groups of `z`, on `EMD_SUBSAMPLE` rows per
/// group and averaged over `EMD_DRAWS` seeded draws. Groups no larger than
/// the subsample are used whole.
pub fn group_emd(z: ArrayView2<'_, f64>, p: &[usize], seed: u64) -> Result<f64> {
    group_emd_with(z, p, seed, EMD_SUBSAMPLE, EMD_DRAWS)
}

pub fn group_emd_with(
    z: ArrayView2<'_, f64>,
    p: &[usize],
    seed: u64,
    subsample: usize,
    draws: usize,
) -> Result<f64> {
    check_len(z.nrows(), p.len(), "group emd")?;
    let (g0, g1) = binary_groups(p)?;
    if subsample == 0 || draws == 0 {
        return Err(Error::InvalidArgument("subsample size and draw count must be positive".into()));
    }
    if g0.len() <= subsample && g1.len() <= subsample {
        return exact_between(z, &g0, &g1);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..draws {
        let pick = |g: &[usize], rng: &mut ChaCha8Rng| -> Vec<usize> {
            if g.len() <= subsample {
                g.to_vec()
            } else {
                let mut s: Vec<usize> = index::sample(rng, g.len(), subsample)
                    .into_iter()
                    .map(|i| g[i])
                    .collect();
                s.sort_unstable();
                s
            }
        };
        let s0 = pick(&g0, &mut rng);
        let s1 = pick(&g1, &mut rng);
        total += exact_between(z, &s0, &s1)?;
    }
    Ok(total / draws as f64)
}

fn exact_between(z: ArrayView2<'_, f64>, a: &[usize], b: &[usize]) -> Result<f64> {
    let c0 = EmpiricalCloud::new(z.select(Axis(0), a))?;
    let c1 = EmpiricalCloud::new(z.select(Axis(0), b))?;
    emd_exact(&c0, &c1)
}

fn binary_groups(p: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut g = (Vec::new(), Vec::new());
    for (i, &c) in p.iter().enumerate() {
        match c {
            0 => g.0.push(i),
            1 => g.1.push(i),
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "binary protected attribute expected, found class {c}"
                )))
            }
        }
    }
    if g.0.is_empty() || g.1.is_empty() {
        return Err(Error::EmptyGroup("both protected groups need rows".into()));
    }
    Ok(g)
}

/// Pieces of the parity certificate `|delta| <= K * D`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParityBound {
    /// `|mean score_0 - mean score_1|`.
    pub delta: f64,
    pub lipschitz_k: f64,
    pub distance: f64,
    /// `K * D - |delta|`.
    pub margin: f64,
}

/// The certificate with `D` from [`group_emd`]. Subsampling makes `D` noisy,
/// so a margin slightly below zero (about 0.02) is expected.
pub fn parity_bound_check(
    clf: &ClassifierState,
    z: ArrayView2<'_, f64>,
    p: &[usize],
    seed: u64,
) -> Result<ParityBound> {
    let d = group_emd(z, p, seed)?;
    parity_bound_with_distance(clf, z, p, d)
}

/// The certificate for a caller-supplied distance `D`.
pub fn parity_bound_with_distance(
    clf: &ClassifierState,
    z: ArrayView2<'_, f64>,
    p: &[usize],
    distance: f64,
) -> Result<ParityBound> {
    let scores = clf.score(z)?;
    let means = group_means(scores.view(), p)?;
    if means.len() != 2 {
        return Err(Error::InvalidArgument("parity bound needs two groups".into()));
    }
    let delta = (means[0] - means[1]).abs();
    let k = clf.lipschitz_bound();
    Ok(ParityBound {
        delta,
        lipschitz_k: k,
        distance,
        margin: k * distance - delta,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    /// `n x dims` coordinates.
    pub projection: Array2<f64>,
    /// One component per column, `m x dims`.
    pub components: Array2<f64>,
    /// Population variance along each kept component.
    pub eigenvalues: Vec<f64>,
    pub mean: Array1<f64>,
    /// Fewer than `dims` components carry variance; the rest are zero.
    pub rank_deficient: bool,
}

/// Projection onto the top principal components of the centred data. Each
/// component is signed so that its largest-magnitude loading is positive.
pub fn pca_project(x: ArrayView2<'_, f64>, dims: usize) -> Result<Pca> {
    let (n, m) = x.dim();
    if dims == 0 || dims > m {
        return Err(Error::InvalidArgument(format!("dims = {dims} must be in 1..={m}")));
    }
    if n < dims {
        return Err(Error::InvalidArgument(format!("{n} rows cannot give {dims} components")));
    }
    let mean = x.mean_axis(Axis(0)).expect("n >= 1");
    let centred = &x - &mean;
    let cov = centred.t().dot(&centred) / n as f64;
    let eig = SymmetricEigen::new(DMatrix::from_row_iterator(m, m, cov.iter().copied()));
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let top = eig.eigenvalues[order[0]].max(0.0);
    let tol = 1e-12 * top.max(1e-300);
    let mut components = Array2::zeros((m, dims));
    let mut eigenvalues = Vec::with_capacity(dims);
    let mut rank_deficient = false;
    for (c, &k) in order.iter().take(dims).enumerate() {
        let value = eig.eigenvalues[k];
        if value <= tol {
            rank_deficient = true;
            eigenvalues.push(0.0);
            continue;
        }
        let v = eig.eigenvectors.column(k);
        let lead = v
            .iter()
            .copied()
            .fold(0.0f64, |acc, e| if e.abs() > acc.abs() { e } else { acc });
        let sign = if lead < 0.0 { -1.0 } else { 1.0 };
        for r in 0..m {
            components[[r, c]] = sign * v[r];
        }
        eigenvalues.push(value);
    }
    Ok(Pca {
        projection: centred.dot(&components),
        components,
        eigenvalues,
        mean,
        rank_deficient,
    })
}

/// Every metric reported for one configuration.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FairnessReport {
    pub mse: f64,
    pub emd: f64,
    pub parity: f64,
    pub consistency: f64,
    pub f1: f64,
    pub ks: f64,
    pub lipschitz_k: f64,
    pub bound_margin: f64,
}

/// Six significant digits, always with a decimal point or exponent.
pub fn format_sig6(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let rounded: f64 = format!("{v:.5e}").parse().expect("formatted float parses");
    let mut s = format!("{rounded:?}");
    if !s.contains(['.', 'e', 'E']) {
        s.push_str(".0");
    }
    s
}

impl FairnessReport {
    pub const KEYS: [&'static str; 8] = [
        "mse",
        "emd",
        "parity",
        "consistency",
        "f1",
        "ks",
        "lipschitz_k",
        "bound_margin",
    ];

    pub fn values(&self) -> [f64; 8] {
        [
            self.mse,
            self.emd,
            self.parity,
            self.consistency,
            self.f1,
            self.ks,
            self.lipschitz_k,
            self.bound_margin,
        ]
    }

    fn from_values(v: [f64; 8]) -> Self {
        FairnessReport {
            mse: v[0],
            emd: v[1],
            parity: v[2],
            consistency: v[3],
            f1: v[4],
            ks: v[5],
            lipschitz_k: v[6],
            bound_margin: v[7],
        }
    }

    /// Field-wise mean.
    pub fn mean(reports: &[FairnessReport]) -> Result<FairnessReport> {
        if reports.is_empty() {
            return Err(Error::InvalidArgument("no reports to average".into()));
        }
        let mut acc = [0.0; 8];
        for r in reports {
            for (a, v) in acc.iter_mut().zip(r.values()) {
                *a += v;
            }
        }
        Ok(Self::from_values(acc.map(|a| a / reports.len() as f64)))
    }

    /// `key = value` lines, six significant digits.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        for (k, v) in Self::KEYS.iter().zip(self.values()) {
            writeln!(out, "{k} = {}", format_sig6(v)).unwrap();
        }
        out
    }

    pub fn from_kv(text: &str) -> Result<FairnessReport> {
        toml::from_str(text).map_err(|e| Error::Parse(format!("report: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn parity_examples() {
        let s = array![0.5, 0.5, 0.5];
        assert_eq!(statistical_parity(s.view(), &[0, 1, 0]).unwrap(), 1.0);
        let s = array![0.24, 0.10];
        assert!((statistical_parity(s.view(), &[0, 1]).unwrap() - 2.4).abs() < 1e-12);
        assert!(statistical_parity(array![0.0, 0.3].view(), &[0, 1]).unwrap().is_infinite());
        assert!(statistical_parity(s.view(), &[0, 0]).is_err());
    }

    #[test]
    fn multiclass_parity_table_means() {
        let means = [0.359, 0.544, 0.280, 0.613, 0.314];
        let s = Array1::from(means.to_vec());
        let v = multiclass_parity(s.view(), &[0, 1, 2, 3, 4]).unwrap();
        assert!((v - 0.613 / 0.280).abs() < 1e-12);
        assert!((v - 2.19).abs() < 0.005);
    }

    #[test]
    fn consistency_examples() {
        let z = array![[0.0], [1.0], [5.0]];
        assert_eq!(consistency(z.view(), array![0.3, 0.3, 0.3].view(), 1).unwrap(), 1.0);
        let z2 = array![[0.0], [1.0]];
        assert_eq!(consistency(z2.view(), array![1.0, 0.0].view(), 1).unwrap(), 0.0);
        assert!(consistency(z2.view(), array![1.0, 0.0].view(), 2).is_err());
    }

    #[test]
    fn consistency_ties_pick_lower_index() {
        // Point 1 is equidistant from 0 and 2.
        let z = array![[0.0], [1.0], [2.0]];
        let s = array![0.0, 0.0, 1.0];
        // i=0 -> 1 (diff 0), i=1 -> 0 (diff 0), i=2 -> 1 (diff 1).
        assert!((consistency(z.view(), s.view(), 1).unwrap() - (1.0 - 1.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn f1_examples() {
        let y = [1u8, 0, 1, 0];
        let perfect = f1(array![0.9, 0.1, 0.8, 0.2].view(), &y, 0.5).unwrap();
        assert_eq!(perfect.f1, 1.0);
        let y: Vec<u8> = (0..100).map(|i| (i < 24) as u8).collect();
        let all = f1(Array1::from_elem(100, 0.9).view(), &y, 0.5).unwrap();
        assert!((all.precision - 0.24).abs() < 1e-12);
        assert!((all.f1 - 2.0 * 0.24 / 1.24).abs() < 1e-12);
        let none = f1(Array1::from_elem(100, 0.1).view(), &y, 0.5).unwrap();
        assert!(none.no_predicted_positives && none.f1 == 0.0);
    }

    #[test]
    fn ks_examples() {
        let y = [0u8, 0, 1, 1];
        assert_eq!(ks_statistic(array![0.1, 0.2, 0.7, 0.9].view(), &y).unwrap(), 1.0);
        assert_eq!(ks_statistic(array![0.5, 0.5, 0.5, 0.5].view(), &y).unwrap(), 0.0);
        assert!(ks_statistic(array![0.1, 0.2].view(), &[1, 1]).is_err());
    }

    #[test]
    fn group_emd_point_masses() {
        let z = array![[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]];
        assert!((group_emd(z.view(), &[0, 0, 1], 0).unwrap() - 1.0).abs() < 1e-12);
        let z = array![[0.3, 1.0], [0.3, 1.0]];
        assert_eq!(group_emd(z.view(), &[0, 1], 0).unwrap(), 0.0);
    }

    #[test]
    fn zero_classifier_has_zero_margin() {
        let clf = ClassifierState {
            weights: Array1::zeros(2),
            bias: 0.4,
            lambda: 1.0,
        };
        let z = array![[0.0, 1.0], [3.0, 1.0], [2.0, -2.0]];
        let b = parity_bound_check(&clf, z.view(), &[0, 1, 1], 1).unwrap();
        assert_eq!(b.delta, 0.0);
        assert_eq!(b.margin, 0.0);
    }

    #[test]
    fn pca_full_rank_reconstructs() {
        let x = array![[1.0, 2.0, 0.5], [3.0, -1.0, 0.0], [0.0, 0.0, 2.0], [2.0, 1.0, 1.0]];
        let pca = pca_project(x.view(), 3).unwrap();
        let back = pca.projection.dot(&pca.components.t()) + &pca.mean;
        for (a, b) in back.iter().zip(x.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(pca.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn pca_rank_deficient_is_flagged() {
        let x = array![[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]];
        let pca = pca_project(x.view(), 2).unwrap();
        assert!(pca.rank_deficient);
        assert!(pca.projection.column(1).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn report_round_trip() {
        let r = FairnessReport {
            mse: 0.1234567,
            emd: 0.015,
            parity: 1.0,
            consistency: 0.987,
            f1: 0.579,
            ks: 0.51,
            lipschitz_k: 1.25,
            bound_margin: -0.0001234564,
        };
        let text = r.to_kv();
        assert!(text.contains("mse = 0.123457\n"));
        assert!(text.contains("parity = 1.0\n"));
        let back = FairnessReport::from_kv(&text).unwrap();
        assert_eq!(back.to_kv(), text);
        assert_eq!(format_sig6(f64::INFINITY), "inf");
    }
}
