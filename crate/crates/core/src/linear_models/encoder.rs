use ndarray::{concatenate, Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::critic::add_critic_term;
use super::{check_cols, CriticState, Generator, GeneratorLoss};
use crate::error::{Error, Result};

/// Linear autoencoder: `z = x A + b_enc`, `x_hat = z B + b_dec`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderState {
    /// `m x d`
    pub encoder: Array2<f64>,
    /// `d x m`
    pub decoder: Array2<f64>,
    pub enc_bias: Array1<f64>,
    pub dec_bias: Array1<f64>,
    /// When false the biases stay at zero and `z = x A` exactly.
    pub use_bias: bool,
}

/// Gradient of the generator objective with respect to every [`EncoderState`] field.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGradient {
    pub encoder: Array2<f64>,
    pub decoder: Array2<f64>,
    pub enc_bias: Array1<f64>,
    pub dec_bias: Array1<f64>,
}

impl EncoderState {
    /// Weights uniform in `[-1/sqrt(m), 1/sqrt(m)]`, biases zero.
    pub fn init<R: Rng>(m: usize, d: usize, use_bias: bool, rng: &mut R) -> Result<Self> {
        if d == 0 || d > m {
            return Err(Error::InvalidArgument(format!(
                "latent dimension {d} must be in 1..={m}"
            )));
        }
        let bound = 1.0 / (m as f64).sqrt();
        let encoder = Array2::from_shape_simple_fn((m, d), || rng.random_range(-bound..=bound));
        let decoder = Array2::from_shape_simple_fn((d, m), || rng.random_range(-bound..=bound));
        Ok(EncoderState {
            encoder,
            decoder,
            enc_bias: Array1::zeros(d),
            dec_bias: Array1::zeros(m),
            use_bias,
        })
    }

    /// Encoder is the identity, decoder the identity (requires `d == m`).
    pub fn identity(m: usize) -> Self {
        EncoderState {
            encoder: Array2::eye(m),
            decoder: Array2::eye(m),
            enc_bias: Array1::zeros(m),
            dec_bias: Array1::zeros(m),
            use_bias: false,
        }
    }

    pub fn from_parts(
        encoder: Array2<f64>,
        decoder: Array2<f64>,
        enc_bias: Array1<f64>,
        dec_bias: Array1<f64>,
        use_bias: bool,
    ) -> Result<Self> {
        let (m, d) = encoder.dim();
        if decoder.dim() != (d, m) || enc_bias.len() != d || dec_bias.len() != m {
            return Err(Error::Dimension(format!(
                "inconsistent encoder shapes: A {:?}, B {:?}, b_enc {}, b_dec {}",
                encoder.dim(),
                decoder.dim(),
                enc_bias.len(),
                dec_bias.len()
            )));
        }
        if d > m {
            return Err(Error::Dimension(format!("latent dimension {d} exceeds input dimension {m}")));
        }
        let state = EncoderState {
            encoder,
            decoder,
            enc_bias,
            dec_bias,
            use_bias,
        };
        if !state.is_finite() {
            return Err(Error::InvalidArgument("encoder has non-finite entries".into()));
        }
        Ok(state)
    }

    pub fn is_finite(&self) -> bool {
        self.encoder.iter().all(|v| v.is_finite())
            && self.decoder.iter().all(|v| v.is_finite())
            && self.enc_bias.iter().all(|v| v.is_finite())
            && self.dec_bias.iter().all(|v| v.is_finite())
    }

    pub fn decode(&self, z: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        check_cols(z, self.latent_dim(), "decode")?;
        Ok(z.dot(&self.decoder) + &self.dec_bias)
    }
}

impl Generator for EncoderState {
    type Gradient = EncoderGradient;

    fn input_dim(&self) -> usize {
        self.encoder.nrows()
    }

    fn latent_dim(&self) -> usize {
        self.encoder.ncols()
    }

    fn encode(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        check_cols(x, self.input_dim(), "encode")?;
        Ok(x.dot(&self.encoder) + &self.enc_bias)
    }

    fn reconstruct(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let z = self.encode(x)?;
        self.decode(z.view())
    }

    fn loss_and_gradient(
        &self,
        critic: &CriticState,
        x0: ArrayView2<'_, f64>,
        x1: ArrayView2<'_, f64>,
        alpha: f64,
    ) -> Result<(GeneratorLoss, EncoderGradient)> {
        check_cols(x0, self.input_dim(), "generator batch 0")?;
        check_cols(x1, self.input_dim(), "generator batch 1")?;
        let (n0, n1) = (x0.nrows(), x1.nrows());
        if n0 == 0 || n1 == 0 {
            return Err(Error::EmptyGroup("generator batches must be nonempty".into()));
        }
        let x = concatenate(Axis(0), &[x0, x1]).expect("same column count");
        let z = x.dot(&self.encoder) + &self.enc_bias;
        let r = z.dot(&self.decoder) + &self.dec_bias;
        let err = r - &x;
        let scale = (err.len()) as f64;
        let reconstruction = err.iter().map(|e| e * e).sum::<f64>() / scale;

        let d_r = err * (2.0 / scale);
        let decoder = z.t().dot(&d_r);
        let mut d_z = d_r.dot(&self.decoder.t());
        let critic_gap = add_critic_term(&mut d_z, z.view(), critic, n0, alpha)?;
        let encoder = x.t().dot(&d_z);

        let (enc_bias, dec_bias) = if self.use_bias {
            (d_z.sum_axis(Axis(0)), d_r.sum_axis(Axis(0)))
        } else {
            (Array1::zeros(self.latent_dim()), Array1::zeros(self.input_dim()))
        };

        Ok((
            GeneratorLoss {
                reconstruction,
                critic_gap,
            },
            EncoderGradient {
                encoder,
                decoder,
                enc_bias,
                dec_bias,
            },
        ))
    }

    fn apply(&mut self, grad: &EncoderGradient, step: f64) {
        self.encoder.scaled_add(-step, &grad.encoder);
        self.decoder.scaled_add(-step, &grad.decoder);
        if self.use_bias {
            self.enc_bias.scaled_add(-step, &grad.enc_bias);
            self.dec_bias.scaled_add(-step, &grad.dec_bias);
        }
    }
}

/// Gradient of `L_A + alpha * L_D` for a linear autoencoder, critic fixed.
pub fn grad_generator(
    enc: &EncoderState,
    critic: &CriticState,
    x0: ArrayView2<'_, f64>,
    x1: ArrayView2<'_, f64>,
    alpha: f64,
) -> Result<EncoderGradient> {
    enc.loss_and_gradient(critic, x0, x1, alpha).map(|(_, g)| g)
}
