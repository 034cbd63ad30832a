use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::Generator;
use crate::error::{Error, Result};

/// Linear critic `D(z) = w . z` kept inside the box `[-clip, clip]^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticState {
    pub weights: Array1<f64>,
    pub clip: f64,
}

impl CriticState {
    /// Zero critic of width `d`.
    pub fn new(d: usize, clip: f64) -> Self {
        CriticState {
            weights: Array1::zeros(d),
            clip,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// `mean(w . z0) - mean(w . z1)`.
    pub fn gap(&self, z0: ArrayView2<'_, f64>, z1: ArrayView2<'_, f64>) -> Result<f64> {
        Ok(self.weights.dot(&self.gradient(z0, z1)?))
    }

    /// Gradient of [`CriticState::gap`] in `w`: the difference of group means.
    pub fn gradient(&self, z0: ArrayView2<'_, f64>, z1: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        let d = self.dim();
        if z0.ncols() != d || z1.ncols() != d {
            return Err(Error::Dimension(format!(
                "critic of width {d} applied to {} and {} columns",
                z0.ncols(),
                z1.ncols()
            )));
        }
        let m0 = z0
            .mean_axis(Axis(0))
            .ok_or_else(|| Error::EmptyGroup("critic group 0 is empty".into()))?;
        let m1 = z1
            .mean_axis(Axis(0))
            .ok_or_else(|| Error::EmptyGroup("critic group 1 is empty".into()))?;
        Ok(m0 - m1)
    }

    /// Projection onto the clipping box. Idempotent.
    pub fn clipped(&self) -> CriticState {
        CriticState {
            weights: self.weights.mapv(|w| w.clamp(-self.clip, self.clip)),
            clip: self.clip,
        }
    }

    /// One projected ascent step: `w <- clip(w + step * grad)`.
    pub fn ascend(&mut self, grad: &Array1<f64>, step: f64) {
        let c = self.clip;
        self.weights.zip_mut_with(grad, |w, g| *w = (*w + step * g).clamp(-c, c));
    }

    /// Euclidean norm of the weights, the critic's Lipschitz constant.
    pub fn norm(&self) -> f64 {
        self.weights.dot(&self.weights).sqrt()
    }
}

/// Critic gap `L_D` between the encodings of two batches.
pub fn critic_gap<G: Generator>(
    critic: &CriticState,
    gen: &G,
    x0: ArrayView2<'_, f64>,
    x1: ArrayView2<'_, f64>,
) -> Result<f64> {
    critic.gap(gen.encode(x0)?.view(), gen.encode(x1)?.view())
}

/// Gradient of [`critic_gap`] with respect to the critic weights.
pub fn grad_critic<G: Generator>(
    critic: &CriticState,
    gen: &G,
    x0: ArrayView2<'_, f64>,
    x1: ArrayView2<'_, f64>,
) -> Result<Array1<f64>> {
    critic.gradient(gen.encode(x0)?.view(), gen.encode(x1)?.view())
}

/// Adds `alpha * dL_D/dz` to the latent gradient of a stacked batch whose
/// first `n0` rows belong to group 0, and returns `L_D`.
pub(crate) fn add_critic_term(
    d_z: &mut Array2<f64>,
    z: ArrayView2<'_, f64>,
    critic: &CriticState,
    n0: usize,
    alpha: f64,
) -> Result<f64> {
    let n1 = z.nrows() - n0;
    let (z0, z1) = z.split_at(Axis(0), n0);
    let gap = critic.gap(z0, z1)?;
    if alpha != 0.0 {
        let up = &critic.weights * (alpha / n0 as f64);
        let down = &critic.weights * (alpha / n1 as f64);
        for (i, mut row) in d_z.rows_mut().into_iter().enumerate() {
            if i < n0 {
                row += &up;
            } else {
                row -= &down;
            }
        }
    }
    Ok(gap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear_models::EncoderState;
    use ndarray::array;

    #[test]
    fn clip_example() {
        let c = CriticState {
            weights: array![0.5, -2.0],
            clip: 1.0,
        };
        assert_eq!(c.clipped().weights, array![0.5, -1.0]);
        assert_eq!(c.clipped().clipped(), c.clipped());
    }

    #[test]
    fn clip_inside_box_is_noop() {
        let c = CriticState {
            weights: array![0.1, -0.3, 0.0],
            clip: 0.5,
        };
        assert_eq!(c.clipped(), c);
    }

    #[test]
    fn gap_of_identical_groups_is_zero() {
        let enc = EncoderState::identity(2);
        let x = array![[1.0, 2.0], [0.5, -1.0]];
        let c = CriticState {
            weights: array![0.3, -0.2],
            clip: 1.0,
        };
        assert_eq!(critic_gap(&c, &enc, x.view(), x.view()).unwrap(), 0.0);
    }

    #[test]
    fn unit_gap_example_and_antisymmetry() {
        let enc = EncoderState::identity(1);
        let x0 = array![[1.0]];
        let x1 = array![[0.0]];
        let c = CriticState {
            weights: array![1.0],
            clip: 1.0,
        };
        assert_eq!(critic_gap(&c, &enc, x0.view(), x1.view()).unwrap(), 1.0);
        assert_eq!(critic_gap(&c, &enc, x1.view(), x0.view()).unwrap(), -1.0);
    }

    #[test]
    fn single_sample_gradient_is_difference() {
        let enc = EncoderState::identity(3);
        let z0 = array![[1.0, 2.0, 3.0]];
        let z1 = array![[0.5, 0.0, -1.0]];
        let g = grad_critic(&CriticState::new(3, 1.0), &enc, z0.view(), z1.view()).unwrap();
        assert_eq!(g, array![0.5, 2.0, 4.0]);
    }

    #[test]
    fn equal_means_give_zero_gradient() {
        let z0 = array![[1.0, 0.0], [-1.0, 2.0]];
        let z1 = array![[0.0, 1.0]];
        let g = CriticState::new(2, 1.0).gradient(z0.view(), z1.view()).unwrap();
        assert_eq!(g, array![0.0, 0.0]);
    }

    #[test]
    fn empty_group_is_an_error() {
        let z0 = Array2::<f64>::zeros((0, 2));
        let z1 = array![[0.0, 1.0]];
        assert!(matches!(
            CriticState::new(2, 1.0).gap(z0.view(), z1.view()),
            Err(Error::EmptyGroup(_))
        ));
    }

    #[test]
    fn clipped_norm_within_sqrt_d_bound() {
        let c = CriticState {
            weights: array![5.0, -7.0, 0.01, 3.0],
            clip: 0.1,
        }
        .clipped();
        assert!(c.norm() <= 0.1 * 2.0 + 1e-15);
    }
}
