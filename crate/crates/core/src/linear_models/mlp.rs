use ndarray::{concatenate, Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::critic::add_critic_term;
use super::{check_cols, CriticState, Generator, GeneratorLoss};
use crate::error::{Error, Result};

/// Autoencoder with one rectified hidden layer on each side.
///
/// Encoder: `z = relu(x W1 + b1) W2 + b2`, hidden width `d`.
/// Decoder mirrors it: `x_hat = relu(z V1 + c1) V2 + c2`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpAutoencoder {
    pub enc_hidden: Array2<f64>,
    pub enc_hidden_bias: Array1<f64>,
    pub enc_out: Array2<f64>,
    pub enc_out_bias: Array1<f64>,
    pub dec_hidden: Array2<f64>,
    pub dec_hidden_bias: Array1<f64>,
    pub dec_out: Array2<f64>,
    pub dec_out_bias: Array1<f64>,
}

/// Same layout as the model it differentiates.
pub type MlpGradient = MlpAutoencoder;

struct Forward {
    x: Array2<f64>,
    h_pre: Array2<f64>,
    h: Array2<f64>,
    z: Array2<f64>,
    g_pre: Array2<f64>,
    g: Array2<f64>,
    r: Array2<f64>,
}

fn relu(a: &Array2<f64>) -> Array2<f64> {
    a.mapv(|v| v.max(0.0))
}

fn relu_back(grad: &mut Array2<f64>, pre: &Array2<f64>) {
    grad.zip_mut_with(pre, |g, p| {
        if *p <= 0.0 {
            *g = 0.0;
        }
    });
}

impl MlpAutoencoder {
    /// Each weight matrix uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, biases zero.
    pub fn init<R: Rng>(m: usize, d: usize, rng: &mut R) -> Result<Self> {
        if d == 0 || d > m {
            return Err(Error::InvalidArgument(format!(
                "latent dimension {d} must be in 1..={m}"
            )));
        }
        let mut layer = |fan_in: usize, fan_out: usize| {
            let b = 1.0 / (fan_in as f64).sqrt();
            Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-b..=b))
        };
        Ok(MlpAutoencoder {
            enc_hidden: layer(m, d),
            enc_hidden_bias: Array1::zeros(d),
            enc_out: layer(d, d),
            enc_out_bias: Array1::zeros(d),
            dec_hidden: layer(d, d),
            dec_hidden_bias: Array1::zeros(d),
            dec_out: layer(d, m),
            dec_out_bias: Array1::zeros(m),
        })
    }

    fn forward(&self, x: Array2<f64>) -> Forward {
        let h_pre = x.dot(&self.enc_hidden) + &self.enc_hidden_bias;
        let h = relu(&h_pre);
        let z = h.dot(&self.enc_out) + &self.enc_out_bias;
        let g_pre = z.dot(&self.dec_hidden) + &self.dec_hidden_bias;
        let g = relu(&g_pre);
        let r = g.dot(&self.dec_out) + &self.dec_out_bias;
        Forward {
            x,
            h_pre,
            h,
            z,
            g_pre,
            g,
            r,
        }
    }

    /// Visits every parameter array of `self` alongside the matching one of `other`.
    fn zip_params(&mut self, other: &MlpAutoencoder, mut f: impl FnMut(&mut f64, f64)) {
        macro_rules! each {
            ($($field:ident),*) => {
                $( self.$field.zip_mut_with(&other.$field, |a, b| f(a, *b)); )*
            };
        }
        each!(
            enc_hidden,
            enc_hidden_bias,
            enc_out,
            enc_out_bias,
            dec_hidden,
            dec_hidden_bias,
            dec_out,
            dec_out_bias
        );
    }
}

impl Generator for MlpAutoencoder {
    type Gradient = MlpGradient;

    fn input_dim(&self) -> usize {
        self.enc_hidden.nrows()
    }

    fn latent_dim(&self) -> usize {
        self.enc_out.ncols()
    }

    fn encode(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        check_cols(x, self.input_dim(), "encode")?;
        let h = relu(&(x.dot(&self.enc_hidden) + &self.enc_hidden_bias));
        Ok(h.dot(&self.enc_out) + &self.enc_out_bias)
    }

    fn reconstruct(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        check_cols(x, self.input_dim(), "reconstruct")?;
        Ok(self.forward(x.to_owned()).r)
    }

    fn loss_and_gradient(
        &self,
        critic: &CriticState,
        x0: ArrayView2<'_, f64>,
        x1: ArrayView2<'_, f64>,
        alpha: f64,
    ) -> Result<(GeneratorLoss, MlpGradient)> {
        check_cols(x0, self.input_dim(), "generator batch 0")?;
        check_cols(x1, self.input_dim(), "generator batch 1")?;
        let n0 = x0.nrows();
        if n0 == 0 || x1.nrows() == 0 {
            return Err(Error::EmptyGroup("generator batches must be nonempty".into()));
        }
        let f = self.forward(concatenate(Axis(0), &[x0, x1]).expect("same column count"));
        let err = &f.r - &f.x;
        let scale = err.len() as f64;
        let reconstruction = err.iter().map(|e| e * e).sum::<f64>() / scale;

        let d_r = err * (2.0 / scale);
        let dec_out = f.g.t().dot(&d_r);
        let dec_out_bias = d_r.sum_axis(Axis(0));
        let mut d_g = d_r.dot(&self.dec_out.t());
        relu_back(&mut d_g, &f.g_pre);
        let dec_hidden = f.z.t().dot(&d_g);
        let dec_hidden_bias = d_g.sum_axis(Axis(0));
        let mut d_z = d_g.dot(&self.dec_hidden.t());
        let critic_gap = add_critic_term(&mut d_z, f.z.view(), critic, n0, alpha)?;
        let enc_out = f.h.t().dot(&d_z);
        let enc_out_bias = d_z.sum_axis(Axis(0));
        let mut d_h = d_z.dot(&self.enc_out.t());
        relu_back(&mut d_h, &f.h_pre);
        let enc_hidden = f.x.t().dot(&d_h);
        let enc_hidden_bias = d_h.sum_axis(Axis(0));

        Ok((
            GeneratorLoss {
                reconstruction,
                critic_gap,
            },
            MlpAutoencoder {
                enc_hidden,
                enc_hidden_bias,
                enc_out,
                enc_out_bias,
                dec_hidden,
                dec_hidden_bias,
                dec_out,
                dec_out_bias,
            },
        ))
    }

    fn apply(&mut self, grad: &MlpGradient, step: f64) {
        self.zip_params(grad, |p, g| *p -= step * g);
    }
}
