//! The learnable pieces: the autoencoder that produces representations, the
//! linear critic that scores group separation, and the ridge logistic
//! classifier used downstream. All gradients are closed form.

mod critic;
mod encoder;
mod logistic;
mod mlp;

use ndarray::{Array2, ArrayView2};

pub use critic::{critic_gap, grad_critic, CriticState};
pub use encoder::{grad_generator, EncoderGradient, EncoderState};
pub use logistic::{logreg_fit, logreg_fit_with, sigmoid, ClassifierState, LogRegOptions};
pub use mlp::{MlpAutoencoder, MlpGradient};

use crate::error::{Error, Result};

/// Reconstruction and critic terms of the generator objective on one batch pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorLoss {
    pub reconstruction: f64,
    pub critic_gap: f64,
}

/// An encoder/decoder pair trained by gradient descent.
pub trait Generator: Clone {
    type Gradient;

    fn input_dim(&self) -> usize;
    fn latent_dim(&self) -> usize;
    fn encode(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>>;
    fn reconstruct(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>>;

    /// Value and exact gradient of `L_A + alpha * L_D` with the critic held
    /// fixed. `L_A` is the mean squared reconstruction error over the rows
    /// of both batches; `L_D` is the critic gap between `x0` and `x1`.
    fn loss_and_gradient(
        &self,
        critic: &CriticState,
        x0: ArrayView2<'_, f64>,
        x1: ArrayView2<'_, f64>,
        alpha: f64,
    ) -> Result<(GeneratorLoss, Self::Gradient)>;

    /// `self -= step * grad`.
    fn apply(&mut self, grad: &Self::Gradient, step: f64);
}

/// Mean over samples and features of the squared reconstruction error.
pub fn reconstruction_loss<G: Generator>(gen: &G, x: ArrayView2<'_, f64>) -> Result<f64> {
    let r = gen.reconstruct(x)?;
    let n = (x.nrows() * x.ncols()).max(1) as f64;
    Ok(r.iter().zip(x.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n)
}

/// A trained representation of either architecture.
#[derive(Debug, Clone, PartialEq)]
pub enum Representation {
    Linear(EncoderState),
    Mlp(MlpAutoencoder),
}

impl Representation {
    pub fn encode(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        match self {
            Representation::Linear(e) => e.encode(x),
            Representation::Mlp(e) => e.encode(x),
        }
    }

    pub fn reconstruction_loss(&self, x: ArrayView2<'_, f64>) -> Result<f64> {
        match self {
            Representation::Linear(e) => reconstruction_loss(e, x),
            Representation::Mlp(e) => reconstruction_loss(e, x),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Representation::Linear(e) => e.input_dim(),
            Representation::Mlp(e) => e.input_dim(),
        }
    }

    pub fn latent_dim(&self) -> usize {
        match self {
            Representation::Linear(e) => e.latent_dim(),
            Representation::Mlp(e) => e.latent_dim(),
        }
    }
}

pub(crate) fn check_cols(x: ArrayView2<'_, f64>, expected: usize, what: &str) -> Result<()> {
    if x.ncols() != expected {
        return Err(Error::Dimension(format!(
            "{what}: expected {expected} columns, got {}",
            x.ncols()
        )));
    }
    Ok(())
}
