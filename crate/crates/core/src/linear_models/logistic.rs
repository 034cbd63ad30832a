use nalgebra::{DMatrix, DVector};
use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use super::check_cols;
use crate::error::{Error, Result};

/// Ridge logistic regression `score(z) = sigmoid(z . W + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierState {
    pub weights: Array1<f64>,
    pub bias: f64,
    /// Strength of the `(lambda / 2) * |W|^2` penalty on the mean loss.
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRegOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
}

impl Default for LogRegOptions {
    fn default() -> Self {
        LogRegOptions {
            max_iter: 5000,
            grad_tol: 1e-6,
        }
    }
}

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(t))` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

impl ClassifierState {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn score(&self, z: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        check_cols(z, self.dim(), "classifier")?;
        Ok((z.dot(&self.weights) + self.bias).mapv(sigmoid))
    }

    /// `|W|_2 / 4`: the sigmoid's slope never exceeds 1/4.
    pub fn lipschitz_bound(&self) -> f64 {
        self.weights.dot(&self.weights).sqrt() / 4.0
    }

    /// Mean logistic loss plus the ridge penalty.
    pub fn objective(&self, z: ArrayView2<'_, f64>, y: &[u8]) -> Result<f64> {
        check_cols(z, self.dim(), "classifier")?;
        let t = z.dot(&self.weights) + self.bias;
        let loss = t
            .iter()
            .zip(y)
            .map(|(t, &y)| softplus(*t) - f64::from(y) * t)
            .sum::<f64>()
            / y.len() as f64;
        Ok(loss + 0.5 * self.lambda * self.weights.dot(&self.weights))
    }

    /// Gradient of [`ClassifierState::objective`]; the bias entry comes last.
    pub fn gradient(&self, z: ArrayView2<'_, f64>, y: &[u8]) -> Result<Array1<f64>> {
        check_cols(z, self.dim(), "classifier")?;
        let n = y.len() as f64;
        let resid: Array1<f64> = (z.dot(&self.weights) + self.bias)
            .iter()
            .zip(y)
            .map(|(t, &y)| sigmoid(*t) - f64::from(y))
            .collect();
        let mut g = Array1::zeros(self.dim() + 1);
        let gw = z.t().dot(&resid) / n + &self.weights * self.lambda;
        g.slice_mut(s![..self.dim()]).assign(&gw);
        g[self.dim()] = resid.sum() / n;
        Ok(g)
    }
}

/// [`logreg_fit_with`] using default options.
pub fn logreg_fit(z: ArrayView2<'_, f64>, y: &[u8], lambda: f64) -> Result<ClassifierState> {
    logreg_fit_with(z, y, lambda, LogRegOptions::default())
}

/// Minimizes mean logistic loss + `(lambda/2)|W|^2` (bias unpenalized) by
/// damped Newton iterations with Armijo backtracking, starting from zero.
/// Stops once the gradient norm drops below `grad_tol` or after `max_iter`
/// iterations.
pub fn logreg_fit_with(
    z: ArrayView2<'_, f64>,
    y: &[u8],
    lambda: f64,
    opts: LogRegOptions,
) -> Result<ClassifierState> {
    let (n, p) = z.dim();
    if y.len() != n {
        return Err(Error::Dimension(format!("{n} rows but {} labels", y.len())));
    }
    if n < 2 {
        return Err(Error::InvalidArgument("need at least two samples".into()));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda {lambda} must be finite and >= 0")));
    }
    let positives = y.iter().filter(|&&v| v == 1).count();
    if positives == 0 || positives == n {
        return Err(Error::Degenerate("labels contain a single class".into()));
    }

    // Design matrix with a trailing column of ones for the bias.
    let mut design = Array2::ones((n, p + 1));
    design.slice_mut(s![.., ..p]).assign(&z);
    let yf: Array1<f64> = y.iter().map(|&v| f64::from(v)).collect();
    let nf = n as f64;

    let objective = |theta: &Array1<f64>| -> f64 {
        let t = design.dot(theta);
        let w = theta.slice(s![..p]);
        t.iter()
            .zip(yf.iter())
            .map(|(t, y)| softplus(*t) - y * t)
            .sum::<f64>()
            / nf
            + 0.5 * lambda * w.dot(&w)
    };

    let mut theta = Array1::<f64>::zeros(p + 1);
    let mut value = objective(&theta);
    for _ in 0..opts.max_iter {
        let t = design.dot(&theta);
        let prob = t.mapv(sigmoid);
        let resid = &prob - &yf;
        let mut grad = design.t().dot(&resid) / nf;
        grad.slice_mut(s![..p]).scaled_add(lambda, &theta.slice(s![..p]));
        let gnorm = grad.dot(&grad).sqrt();
        if gnorm < opts.grad_tol {
            break;
        }

        let weights = prob.mapv(|q| (q * (1.0 - q)).sqrt() / nf.sqrt());
        let scaled = &design * &weights.view().insert_axis(Axis(1));
        let mut hess = scaled.t().dot(&scaled);
        for j in 0..p {
            hess[[j, j]] += lambda;
        }
        let dir = newton_direction(&hess, &grad);
        let slope = grad.dot(&dir);
        let dir = if slope < 0.0 { dir } else { -grad.clone() };
        let slope = grad.dot(&dir);

        let mut step = 1.0;
        let mut accepted = false;
        while step > 1e-16 {
            let cand = &theta + &(&dir * step);
            let v = objective(&cand);
            if v <= value + 1e-4 * step * slope {
                theta = cand;
                value = v;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // No representable decrease left along the search direction.
            break;
        }
    }

    Ok(ClassifierState {
        weights: theta.slice(s![..p]).to_owned(),
        bias: theta[p],
        lambda,
    })
}

/// Solves `H d = -g`, adding a growing ridge when `H` is not numerically
/// positive definite (unregularized bias on separable data).
fn newton_direction(hess: &Array2<f64>, grad: &Array1<f64>) -> Array1<f64> {
    let k = grad.len();
    let h = DMatrix::from_row_iterator(k, k, hess.iter().copied());
    let g = DVector::from_iterator(k, grad.iter().map(|v| -v));
    let trace = (0..k).map(|i| hess[[i, i]]).sum::<f64>() / k as f64;
    let mut ridge = 0.0;
    for _ in 0..12 {
        let mut hr = h.clone();
        for i in 0..k {
            hr[(i, i)] += ridge;
        }
        if let Some(chol) = hr.cholesky() {
            let d = chol.solve(&g);
            if d.iter().all(|v| v.is_finite()) {
                return d.iter().copied().collect();
            }
        }
        ridge = if ridge == 0.0 { 1e-10 * trace.max(1e-12) } else { ridge * 100.0 };
    }
    -grad.clone()
}
