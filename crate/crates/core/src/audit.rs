//! Hidden label bias: inject discrimination by flipping labels, check whether
//! a representation recovers them, and rank individuals by how much a fair
//! representation raises their score.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use ndarray::{ArrayView1, ArrayView2};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linear_models::logreg_fit;

/// Pairs matched by [`match_and_flip`] and the labels they changed.
#[derive(Debug, Clone, PartialEq)]
pub struct FlipExperiment {
    /// `(reference index, target index)`: the male and the nearest female.
    pub pairs: Vec<(usize, usize)>,
    /// Targets whose label was set to 0, ascending and unique.
    pub flipped: Vec<usize>,
    pub original_labels: Vec<u8>,
    /// Protected class whose labels were flipped.
    pub target_group: usize,
}

/// `s_d = 1 - p_o / p_f` per individual and the indices sorted by it.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminationRanking {
    pub scores: Vec<f64>,
    /// Descending `s_d`, ties by ascending index.
    pub ordering: Vec<usize>,
}

/// Matches every positive member of the reference group to the nearest
/// positive member of the target group (Euclidean, protected columns left
/// out, ties to the lower index) and flips each matched target to 0 once.
///
/// The target group is `ds.protected_group`, or class 1 when unset.
pub fn match_and_flip(ds: &Dataset) -> Result<(Dataset, FlipExperiment)> {
    if ds.n_groups() != 2 {
        return Err(Error::InvalidArgument(format!(
            "the flip experiment needs a binary protected attribute, got {} classes",
            ds.n_groups()
        )));
    }
    let target = ds.protected_group.unwrap_or(1);
    let features = ds.features_without_protected();
    let positive = |i: &usize| ds.y[*i] == 1;
    let refs: Vec<usize> = (0..ds.n()).filter(|&i| ds.p[i] != target).filter(positive).collect();
    let cands: Vec<usize> = (0..ds.n()).filter(|&i| ds.p[i] == target).filter(positive).collect();
    if refs.is_empty() || cands.is_empty() {
        return Err(Error::Degenerate(
            "no qualifying pairs: both groups need positive labels".into(),
        ));
    }

    let mut pairs = Vec::with_capacity(refs.len());
    for &r in &refs {
        let a = features.row(r);
        let mut best = (f64::INFINITY, usize::MAX);
        for &c in &cands {
            let mut acc = 0.0;
            for (x, y) in a.iter().zip(features.row(c)) {
                acc += (x - y) * (x - y);
                if acc >= best.0 {
                    break;
                }
            }
            if acc < best.0 {
                best = (acc, c);
            }
        }
        pairs.push((r, best.1));
    }
    let flipped: Vec<usize> = pairs
        .iter()
        .map(|&(_, f)| f)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let mut out = ds.clone();
    for &f in &flipped {
        out.y[f] = 0;
    }
    Ok((
        out,
        FlipExperiment {
            pairs,
            flipped,
            original_labels: ds.y.clone(),
            target_group: target,
        },
    ))
}

/// Result of [`detect_flipped`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    /// Share of flipped individuals scored above 0.5.
    pub fraction: f64,
    /// Grid value that achieved it.
    pub lambda: f64,
}

/// Fits ridge logistic regression to the flipped labels on `representation`
/// for every `lambda` in the grid and keeps the fit that predicts the most
/// flipped individuals as positive.
pub fn detect_flipped(
    flipped_ds: &Dataset,
    experiment: &FlipExperiment,
    representation: ArrayView2<'_, f64>,
    lambda_grid: &[f64],
) -> Result<Detection> {
    if lambda_grid.is_empty() {
        return Err(Error::InvalidArgument("empty lambda grid".into()));
    }
    if representation.nrows() != flipped_ds.n() {
        return Err(Error::Dimension(format!(
            "representation has {} rows, dataset {}",
            representation.nrows(),
            flipped_ds.n()
        )));
    }
    if experiment.flipped.is_empty() {
        return Err(Error::Degenerate("no flipped individuals".into()));
    }
    let mut best: Option<Detection> = None;
    for &lambda in lambda_grid {
        let clf = logreg_fit(representation, &flipped_ds.y, lambda)?;
        let scores = clf.score(representation)?;
        let hits = experiment.flipped.iter().filter(|&&i| scores[i] > 0.5).count();
        let fraction = hits as f64 / experiment.flipped.len() as f64;
        if best.is_none_or(|b| fraction > b.fraction) {
            best = Some(Detection { fraction, lambda });
        }
    }
    Ok(best.expect("grid is nonempty"))
}

/// `s_d[i] = 1 - p_o[i] / p_f[i]`, ranked descending.
pub fn discrimination_scores(
    p_o: ArrayView1<'_, f64>,
    p_f: ArrayView1<'_, f64>,
) -> Result<DiscriminationRanking> {
    if p_o.len() != p_f.len() {
        return Err(Error::Dimension(format!(
            "score vectors have lengths {} and {}",
            p_o.len(),
            p_f.len()
        )));
    }
    if let Some(i) = p_f.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "p_f[{i}] = {} is not positive",
            p_f[i]
        )));
    }
    let scores: Vec<f64> = p_o.iter().zip(p_f).map(|(o, f)| 1.0 - o / f).collect();
    let mut ordering: Vec<usize> = (0..scores.len()).collect();
    ordering.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    Ok(DiscriminationRanking { scores, ordering })
}

/// Walks the ranking restricted to `group` and reports, after each selected
/// individual, `(selected / |group|, found / |flipped|)`. Starts at `(0, 0)`
/// and ends at `(1, 1)`.
pub fn discovery_curve(
    ranking: &DiscriminationRanking,
    flipped: &[usize],
    group: &[usize],
) -> Result<Vec<(f64, f64)>> {
    if flipped.is_empty() {
        return Err(Error::Degenerate("no flipped individuals".into()));
    }
    let group_set: BTreeSet<usize> = group.iter().copied().collect();
    let flipped_set: BTreeSet<usize> = flipped.iter().copied().collect();
    if !flipped_set.is_subset(&group_set) {
        return Err(Error::InvalidArgument("flipped individuals must belong to the group".into()));
    }
    let g = group_set.len() as f64;
    let f = flipped_set.len() as f64;
    let mut curve = Vec::with_capacity(group_set.len() + 1);
    curve.push((0.0, 0.0));
    let (mut selected, mut found) = (0usize, 0usize);
    for &i in &ranking.ordering {
        if !group_set.contains(&i) {
            continue;
        }
        selected += 1;
        if flipped_set.contains(&i) {
            found += 1;
        }
        curve.push((selected as f64 / g, found as f64 / f));
    }
    if selected != group_set.len() {
        return Err(Error::InvalidArgument("ranking does not cover the whole group".into()));
    }
    Ok(curve)
}

/// Trapezoidal area under a discovery curve.
pub fn curve_area(curve: &[(f64, f64)]) -> f64 {
    curve
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

/// Fraction found once `fraction` of the group has been selected.
pub fn found_at(curve: &[(f64, f64)], fraction: f64) -> f64 {
    curve
        .iter()
        .take_while(|(x, _)| *x <= fraction + 1e-12)
        .last()
        .map_or(0.0, |&(_, y)| y)
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    std::fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// `index,s_d,flipped` rows in ranking order.
pub fn write_ranking_csv(
    path: impl AsRef<Path>,
    ranking: &DiscriminationRanking,
    flipped: &[usize],
) -> Result<()> {
    let path = path.as_ref();
    let flipped: BTreeSet<usize> = flipped.iter().copied().collect();
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "index,s_d,flipped").map_err(io)?;
    for &i in &ranking.ordering {
        writeln!(w, "{i},{},{}", ranking.scores[i], u8::from(flipped.contains(&i))).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// `fraction_selected,fraction_found` rows.
pub fn write_curve_csv(path: impl AsRef<Path>, curve: &[(f64, f64)]) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "fraction_selected,fraction_found").map_err(io)?;
    for (x, y) in curve {
        writeln!(w, "{x},{y}").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// `male,female` rows of the matched pairs.
pub fn write_pairs_csv(path: impl AsRef<Path>, experiment: &FlipExperiment) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "reference,target").map_err(io)?;
    for (a, b) in &experiment.pairs {
        writeln!(w, "{a},{b}").map_err(io)?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1, Array2};

    fn toy() -> Dataset {
        // Rows 0,1 group 0; rows 2,3 group 1.
        let x = array![[0.0, 0.0], [5.0, 5.0], [0.0, 0.0], [9.0, 9.0]];
        Dataset::from_parts(x, vec![1, 0, 1, 1], vec![0, 0, 1, 1]).unwrap()
    }

    #[test]
    fn zero_distance_pair_flips() {
        let ds = toy();
        let (flipped, exp) = match_and_flip(&ds).unwrap();
        assert_eq!(exp.pairs, vec![(0, 2)]);
        assert_eq!(exp.flipped, vec![2]);
        assert_eq!(flipped.y, vec![1, 0, 0, 1]);
        assert_eq!(flipped.x, ds.x);
    }

    #[test]
    fn no_positive_targets_is_an_error() {
        let x = Array2::zeros((4, 1));
        let ds = Dataset::from_parts(x, vec![1, 1, 0, 0], vec![0, 0, 1, 1]).unwrap();
        assert!(matches!(match_and_flip(&ds), Err(Error::Degenerate(_))));
    }

    #[test]
    fn duplicate_matches_flip_once() {
        let x = array![[0.0], [0.1], [0.05], [7.0]];
        let ds = Dataset::from_parts(x, vec![1, 1, 1, 1], vec![0, 0, 1, 1]).unwrap();
        let (_, exp) = match_and_flip(&ds).unwrap();
        assert_eq!(exp.pairs.len(), 2);
        assert_eq!(exp.flipped, vec![2]);
    }

    #[test]
    fn oracle_feature_recovers_everything() {
        let n = 200;
        let truth: Vec<u8> = (0..n).map(|i| (i % 3 == 0) as u8).collect();
        let p: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let mut y = truth.clone();
        let flipped: Vec<usize> = (0..n).filter(|&i| truth[i] == 1 && p[i] == 1).take(5).collect();
        for &f in &flipped {
            y[f] = 0;
        }
        let x = Array2::from_shape_fn((n, 1), |(i, _)| f64::from(truth[i]));
        let ds = Dataset::from_parts(x.clone(), y, p).unwrap();
        let exp = FlipExperiment {
            pairs: vec![],
            flipped,
            original_labels: truth,
            target_group: 1,
        };
        let d = detect_flipped(&ds, &exp, x.view(), &[1e-4, 1.0]).unwrap();
        assert_eq!(d.fraction, 1.0);
        assert!(detect_flipped(&ds, &exp, x.view(), &[]).is_err());
    }

    #[test]
    fn s_d_examples() {
        let r = discrimination_scores(array![0.2, 0.3].view(), array![0.4, 0.3].view()).unwrap();
        assert!((r.scores[0] - 0.5).abs() < 1e-15);
        assert_eq!(r.scores[1], 0.0);
        assert_eq!(r.ordering, vec![0, 1]);
        assert!(discrimination_scores(array![0.2].view(), array![0.0].view()).is_err());
    }

    #[test]
    fn best_case_curve() {
        let scores = vec![0.9, 0.1, 0.8, 0.0, -0.3];
        let ranking = DiscriminationRanking {
            ordering: vec![0, 2, 1, 3, 4],
            scores,
        };
        let curve = discovery_curve(&ranking, &[0, 2], &[0, 1, 2, 3]).unwrap();
        assert_eq!(curve.first(), Some(&(0.0, 0.0)));
        assert_eq!(curve[2], (0.5, 1.0));
        assert_eq!(curve.last(), Some(&(1.0, 1.0)));
        assert_eq!(found_at(&curve, 0.25), 0.5);
    }

    #[test]
    fn area_matches_rank_formula() {
        let p_o = Array1::from(vec![0.3, 0.2, 0.5, 0.1, 0.4, 0.6]);
        let p_f = Array1::from(vec![0.5, 0.4, 0.6, 0.5, 0.4, 0.7]);
        let r = discrimination_scores(p_o.view(), p_f.view()).unwrap();
        let group = [0, 1, 3, 4, 5];
        let flipped = [1, 4];
        let curve = discovery_curve(&r, &flipped, &group).unwrap();
        let ranks: Vec<usize> = r.ordering.iter().copied().filter(|i| group.contains(i)).collect();
        let g = group.len() as f64;
        let expected = 1.0
            - flipped
                .iter()
                .map(|f| (ranks.iter().position(|x| x == f).unwrap() as f64 + 0.5) / g)
                .sum::<f64>()
                / flipped.len() as f64;
        assert!((curve_area(&curve) - expected).abs() < 1e-12);
    }

    #[test]
    fn flipped_outside_group_is_rejected() {
        let r = discrimination_scores(array![0.1, 0.2].view(), array![0.3, 0.3].view()).unwrap();
        assert!(discovery_curve(&r, &[1], &[0]).is_err());
        assert!(discovery_curve(&r, &[], &[0]).is_err());
    }
}
