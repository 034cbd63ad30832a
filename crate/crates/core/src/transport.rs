//! Wasserstein-1 distances between empirical distributions.
//!
//! [`emd_exact`] solves the transportation problem exactly by successive
//! shortest paths. Masses `1/k0` and `1/k1` are scaled to the integers `k1`
//! and `k0`, so every flow is integral and the solver never rounds.
//! [`emd_1d`] is the closed form on the line and serves as an independent
//! cross-check.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use crate::dataset::{Dataset, GroupPartition};
use crate::error::{Error, Result};
use crate::linear_models::CriticState;

/// Largest `k0 * k1` accepted by [`emd_exact`].
pub const DEFAULT_CAP: usize = 512 * 512;

/// Uniformly weighted point cloud, one point per row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCloud {
    points: Array2<f64>,
}

impl EmpiricalCloud {
    pub fn new(points: Array2<f64>) -> Result<Self> {
        if points.nrows() == 0 {
            return Err(Error::EmptyGroup("point cloud has no points".into()));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("point cloud has non-finite entries".into()));
        }
        Ok(EmpiricalCloud { points })
    }

    pub fn from_view(points: ArrayView2<'_, f64>) -> Result<Self> {
        Self::new(points.to_owned())
    }

    pub fn points(&self) -> ArrayView2<'_, f64> {
        self.points.view()
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }
}

/// Exact W1 between two empirical distributions on the real line.
pub fn emd_1d(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::EmptyGroup("emd_1d needs two nonempty samples".into()));
    }
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    if a.len() == b.len() {
        let s: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum();
        return Ok(s / a.len() as f64);
    }
    // Integral of |F_a - F_b| over the merged support.
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut prev = a[0].min(b[0]);
    let mut total = 0.0;
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        total += (i as f64 / na - j as f64 / nb).abs() * (next - prev);
        while i < a.len() && a[i] == next {
            i += 1;
        }
        while j < b.len() && b[j] == next {
            j += 1;
        }
        prev = next;
    }
    Ok(total)
}

/// Exact W1 with Euclidean ground cost, using [`DEFAULT_CAP`].
pub fn emd_exact(c0: &EmpiricalCloud, c1: &EmpiricalCloud) -> Result<f64> {
    emd_exact_with_cap(c0, c1, DEFAULT_CAP)
}

pub fn emd_exact_with_cap(c0: &EmpiricalCloud, c1: &EmpiricalCloud, cap: usize) -> Result<f64> {
    let (k0, k1) = (c0.len(), c1.len());
    if c0.dim() != c1.dim() {
        return Err(Error::Dimension(format!(
            "clouds live in {} and {} dimensions",
            c0.dim(),
            c1.dim()
        )));
    }
    if k0.saturating_mul(k1) > cap {
        return Err(Error::SizeCap {
            rows: k0,
            cols: k1,
            cap,
        });
    }
    let cost = pairwise_distances(c0.points(), c1.points());
    Ok(min_cost_transport(&cost))
}

fn pairwise_distances(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.nrows(), b.nrows()), |(i, j)| {
        a.row(i)
            .iter()
            .zip(b.row(j))
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    })
}

/// Optimal value of the balanced transportation problem with uniform
/// masses `1/k0` on the rows of `cost` and `1/k1` on its columns.
fn min_cost_transport(cost: &Array2<f64>) -> f64 {
    let (k0, k1) = cost.dim();
    let nodes = k0 + k1;
    let mut supply = vec![k1 as u64; k0];
    let mut demand = vec![k0 as u64; k1];
    let mut flow = Array2::<u64>::zeros((k0, k1));
    // Sources are nodes 0..k0, sinks k0..k0+k1.
    let mut potential = vec![0.0f64; nodes];
    let mut dist = vec![f64::INFINITY; nodes];
    let mut parent = vec![usize::MAX; nodes];
    let mut done = vec![false; nodes];
    let mut remaining = (k0 * k1) as u64;

    while remaining > 0 {
        dist.fill(f64::INFINITY);
        parent.fill(usize::MAX);
        done.fill(false);
        for i in 0..k0 {
            if supply[i] > 0 {
                dist[i] = 0.0;
            }
        }

        let target = loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for v in 0..nodes {
                if !done[v] && dist[v] < best {
                    best = dist[v];
                    u = v;
                }
            }
            assert!(u != usize::MAX, "transport graph disconnected");
            done[u] = true;
            if u >= k0 && demand[u - k0] > 0 {
                break u;
            }
            if u < k0 {
                let row = cost.row(u);
                for j in 0..k1 {
                    let v = k0 + j;
                    if done[v] {
                        continue;
                    }
                    let rc = (row[j] + potential[u] - potential[v]).max(0.0);
                    if best + rc < dist[v] {
                        dist[v] = best + rc;
                        parent[v] = u;
                    }
                }
            } else {
                let j = u - k0;
                for i in 0..k0 {
                    if done[i] || flow[[i, j]] == 0 {
                        continue;
                    }
                    let rc = (-cost[[i, j]] + potential[u] - potential[i]).max(0.0);
                    if best + rc < dist[i] {
                        dist[i] = best + rc;
                        parent[i] = u;
                    }
                }
            }
        };

        let reach = dist[target];
        for v in 0..nodes {
            potential[v] += dist[v].min(reach);
        }

        // Walk back from the sink to the source that started the path.
        let mut bottleneck = demand[target - k0];
        let mut v = target;
        while parent[v] != usize::MAX {
            let u = parent[v];
            if u >= k0 {
                bottleneck = bottleneck.min(flow[[v, u - k0]]);
            }
            v = u;
        }
        let source = v;
        bottleneck = bottleneck.min(supply[source]);

        let mut v = target;
        while parent[v] != usize::MAX {
            let u = parent[v];
            if u < k0 {
                flow[[u, v - k0]] += bottleneck;
            } else {
                flow[[v, u - k0]] -= bottleneck;
            }
            v = u;
        }
        supply[source] -= bottleneck;
        demand[target - k0] -= bottleneck;
        remaining -= bottleneck;
    }

    let total: f64 = flow
        .iter()
        .zip(cost.iter())
        .filter(|(f, _)| **f > 0)
        .map(|(f, c)| *f as f64 * c)
        .sum();
    total / (k0 * k1) as f64
}

/// Normalized duality value of a linear critic:
/// `|mean(w . z0) - mean(w . z1)| / |w|`, a lower bound on W1.
pub fn dual_estimate(critic: &CriticState, z0: ArrayView2<'_, f64>, z1: ArrayView2<'_, f64>) -> Result<f64> {
    let norm = critic.norm();
    if norm == 0.0 {
        return Err(Error::Degenerate("critic weights are all zero".into()));
    }
    Ok(critic.gap(z0, z1)?.abs() / norm)
}

/// [`emd_1d`] of every feature column between the two groups.
pub fn per_feature_emd(ds: &Dataset, part: &GroupPartition) -> Result<Vec<f64>> {
    if part.n_groups() != 2 {
        return Err(Error::InvalidArgument(format!(
            "per-feature EMD needs a binary protected attribute, got {} classes",
            part.n_groups()
        )));
    }
    let g0 = ds.x.select(Axis(0), &part.groups[0]);
    let g1 = ds.x.select(Axis(0), &part.groups[1]);
    g0.columns()
        .into_iter()
        .zip(g1.columns())
        .map(|(a, b)| emd_1d(&column(a), &column(b)))
        .collect()
}

fn column(c: ArrayView1<'_, f64>) -> Vec<f64> {
    c.iter().copied().collect()
}
