//! The evaluation protocol shared by every command.
//!
//! A representation is fixed (learned or the raw features), then for each
//! of `split_repeats` seeded train/test splits a ridge logistic classifier
//! is fitted on the training part and scored on the test part. MSE and EMD
//! are measured on the full representation. Learned representations are
//! retrained `full_repeats` times with consecutive seeds and everything is
//! averaged.

use ndarray::{Array2, ArrayView2, Axis};
use wasserfair::linear_models::logreg_fit;
use wasserfair::metrics::{
    consistency, f1, group_emd, group_means, ks_statistic, multiclass_parity, parity_bound_check,
    parity_bound_with_distance, statistical_parity,
};
use wasserfair::training::{train_autoencoder_any, train_multiclass, train_nrl};
use wasserfair::transport::dual_estimate;
use wasserfair::{
    CriticState, Dataset, FairnessReport, Representation, TrainConfig, TrainHistory,
};

use crate::config::{EvalConfig, Method, RunConfig};
use crate::error::CliError;

/// Output of the training stage of one method.
#[derive(Debug, Clone)]
pub struct Learned {
    pub representation: Option<Representation>,
    pub critic: Option<CriticState>,
    pub history: Option<TrainHistory>,
}

impl Learned {
    /// The representation of `x`: encoded, or `x` itself for raw-feature methods.
    pub fn transform(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>, CliError> {
        match &self.representation {
            Some(r) => Ok(r.encode(x)?),
            None => Ok(x.to_owned()),
        }
    }

    pub fn mse(&self, x: ArrayView2<'_, f64>) -> Result<f64, CliError> {
        match &self.representation {
            Some(r) => Ok(r.reconstruction_loss(x)?),
            None => Ok(0.0),
        }
    }
}

/// The dataset a method sees: `-P` methods lose the protected columns.
pub fn method_dataset(ds: &Dataset, method: Method) -> Result<Dataset, CliError> {
    if method.drops_protected() {
        Ok(ds.drop_protected()?)
    } else {
        Ok(ds.clone())
    }
}

pub fn learn(ds: &Dataset, method: Method, train: &TrainConfig) -> Result<Learned, CliError> {
    match method {
        Method::Original | Method::OriginalP => Ok(Learned {
            representation: None,
            critic: None,
            history: None,
        }),
        Method::Ae | Method::AeP => {
            let (rep, history) = train_autoencoder_any(ds, train)?;
            Ok(Learned {
                representation: Some(rep),
                critic: None,
                history: Some(history),
            })
        }
        Method::Nrl => {
            if ds.n_groups() != 2 {
                return Err(CliError::config(format!(
                    "method nrl needs a binary protected attribute ({} classes found); use nrl_multiclass",
                    ds.n_groups()
                )));
            }
            if train.nonlinear {
                return Err(CliError::config(
                    "method nrl trains the linear encoder; use nrl_multiclass for the nonlinear one",
                ));
            }
            let (enc, critic, history) = train_nrl(ds, train)?;
            Ok(Learned {
                representation: Some(Representation::Linear(enc)),
                critic: Some(critic),
                history: Some(history),
            })
        }
        Method::NrlMulticlass => {
            let (rep, critic, history) = train_multiclass(ds, train)?;
            Ok(Learned {
                representation: Some(rep),
                critic: Some(critic),
                history: Some(history),
            })
        }
    }
}

/// Metrics of one representation, averaged over the test splits.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: FairnessReport,
    /// Mean test score per protected class.
    pub group_means: Vec<f64>,
    /// EMD of each class against its complement (a single entry when binary).
    pub class_emd: Vec<f64>,
    /// Critic duality value on the full representation, when a critic exists.
    pub dual_estimate: Option<f64>,
    pub lambda: f64,
    pub n_train: usize,
    /// Some split's classifier predicted no positives at all.
    pub no_predicted_positives: bool,
}

fn one_vs_rest(p: &[usize], class: usize) -> Vec<usize> {
    p.iter().map(|&c| usize::from(c != class)).collect()
}

/// Applies the split protocol to a fixed representation `z` of `ds`.
pub fn evaluate_representation(
    z: ArrayView2<'_, f64>,
    ds: &Dataset,
    mse: f64,
    critic: Option<&CriticState>,
    eval: &EvalConfig,
    seed: u64,
) -> Result<Evaluation, CliError> {
    if eval.split_repeats == 0 {
        return Err(CliError::config("split_repeats must be at least 1"));
    }
    let binary = ds.n_groups() == 2;
    let class_emd: Vec<f64> = if binary {
        vec![group_emd(z, &ds.p, seed)?]
    } else {
        (0..ds.n_groups())
            .map(|c| group_emd(z, &one_vs_rest(&ds.p, c), seed))
            .collect::<Result<_, _>>()?
    };
    let emd = class_emd.iter().copied().fold(0.0, f64::max);
    let dual = match critic {
        Some(c) if c.norm() > 0.0 && binary => {
            let part = ds.partition();
            let z0 = z.select(Axis(0), &part.groups[0]);
            let z1 = z.select(Axis(0), &part.groups[1]);
            Some(dual_estimate(c, z0.view(), z1.view())?)
        }
        _ => None,
    };

    let mut reports = Vec::with_capacity(eval.split_repeats);
    let mut means_acc = vec![0.0; ds.n_groups()];
    let mut no_pos = false;
    let mut lambda = f64::NAN;
    let mut n_train = 0;
    for s in 0..eval.split_repeats {
        let (train, test) = ds.split_indices(eval.train_fraction, seed.wrapping_add(s as u64))?;
        let z_train = z.select(Axis(0), &train);
        let z_test = z.select(Axis(0), &test);
        let y_train: Vec<u8> = train.iter().map(|&i| ds.y[i]).collect();
        let y_test: Vec<u8> = test.iter().map(|&i| ds.y[i]).collect();
        let p_test: Vec<usize> = test.iter().map(|&i| ds.p[i]).collect();
        n_train = train.len();
        lambda = eval.lambda_for(n_train);

        let clf = logreg_fit(z_train.view(), &y_train, lambda)?;
        let scores = clf.score(z_test.view())?;
        let f = f1(scores.view(), &y_test, eval.threshold)?;
        no_pos |= f.no_predicted_positives;
        let means = group_means(scores.view(), &p_test)?;
        for (a, m) in means_acc.iter_mut().zip(&means) {
            *a += m;
        }
        let (parity, margin) = if binary {
            let bound = parity_bound_check(&clf, z_test.view(), &p_test, seed)?;
            (statistical_parity(scores.view(), &p_test)?, bound.margin)
        } else {
            let mut worst = f64::INFINITY;
            for (c, d) in class_emd.iter().enumerate() {
                let b = parity_bound_with_distance(&clf, z_test.view(), &one_vs_rest(&p_test, c), *d)?;
                worst = worst.min(b.margin);
            }
            (multiclass_parity(scores.view(), &p_test)?, worst)
        };
        reports.push(FairnessReport {
            mse,
            emd,
            parity,
            consistency: consistency(z_test.view(), scores.view(), eval.consistency_k)?,
            f1: f.f1,
            ks: ks_statistic(scores.view(), &y_test)?,
            lipschitz_k: clf.lipschitz_bound(),
            bound_margin: margin,
        });
    }
    let k = eval.split_repeats as f64;
    Ok(Evaluation {
        report: FairnessReport::mean(&reports)?,
        group_means: means_acc.iter().map(|m| m / k).collect(),
        class_emd,
        dual_estimate: dual,
        lambda,
        n_train,
        no_predicted_positives: no_pos,
    })
}

/// Result of the full protocol for one method.
#[derive(Debug, Clone)]
pub struct Protocol {
    pub method: Method,
    /// Averaged over repeats.
    pub evaluation: Evaluation,
    pub repeats: Vec<Evaluation>,
    /// Training output of the first repeat.
    pub learned: Learned,
    /// The dataset the method saw.
    pub dataset: Dataset,
}

fn average(evals: &[Evaluation]) -> Result<Evaluation, CliError> {
    let k = evals.len() as f64;
    let reports: Vec<FairnessReport> = evals.iter().map(|e| e.report).collect();
    let mean_vec = |f: &dyn Fn(&Evaluation) -> &Vec<f64>| -> Vec<f64> {
        let len = f(&evals[0]).len();
        (0..len)
            .map(|i| evals.iter().map(|e| f(e)[i]).sum::<f64>() / k)
            .collect()
    };
    let duals: Vec<f64> = evals.iter().filter_map(|e| e.dual_estimate).collect();
    Ok(Evaluation {
        report: FairnessReport::mean(&reports)?,
        group_means: mean_vec(&|e| &e.group_means),
        class_emd: mean_vec(&|e| &e.class_emd),
        dual_estimate: (duals.len() == evals.len()).then(|| duals.iter().sum::<f64>() / k),
        lambda: evals[0].lambda,
        n_train: evals[0].n_train,
        no_predicted_positives: evals.iter().any(|e| e.no_predicted_positives),
    })
}

/// Runs training (if any) and evaluation for `method` on `ds`.
pub fn run_protocol(ds: &Dataset, method: Method, cfg: &RunConfig) -> Result<Protocol, CliError> {
    let data = method_dataset(ds, method)?;
    let repeats = if method.is_trained() {
        cfg.evaluation.full_repeats.max(1)
    } else {
        1
    };
    let mut evals = Vec::with_capacity(repeats);
    let mut first = None;
    for r in 0..repeats {
        let train = TrainConfig {
            seed: cfg.train.seed.wrapping_add(cfg.seed).wrapping_add(r as u64),
            ..cfg.train.clone()
        };
        let learned = learn(&data, method, &train)?;
        let z = learned.transform(data.x.view())?;
        let mse = learned.mse(data.x.view())?;
        evals.push(evaluate_representation(
            z.view(),
            &data,
            mse,
            learned.critic.as_ref(),
            &cfg.evaluation,
            cfg.seed,
        )?);
        first.get_or_insert(learned);
    }
    Ok(Protocol {
        method,
        evaluation: average(&evals)?,
        repeats: evals,
        learned: first.expect("at least one repeat"),
        dataset: data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn synthetic(n: usize) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let x = Array2::from_shape_fn((n, 4), |(i, j)| {
            rng.random_range(-1.0..1.0) + if j == 0 { p[i] as f64 } else { 0.0 }
        });
        let y = (0..n).map(|i| u8::from(x[[i, 1]] + 0.3 * x[[i, 0]] > 0.0)).collect();
        Dataset::from_parts(x, y, p).unwrap()
    }

    #[test]
    fn original_protocol_runs_once() {
        let ds = synthetic(200);
        let cfg = RunConfig {
            evaluation: EvalConfig {
                split_repeats: 2,
                ..Default::default()
            },
            ..Default::default()
        };
        let out = run_protocol(&ds, Method::Original, &cfg).unwrap();
        assert_eq!(out.repeats.len(), 1);
        assert_eq!(out.evaluation.report.mse, 0.0);
        assert!(out.evaluation.report.parity >= 1.0);
        assert_eq!(out.evaluation.n_train, 140);
    }

    #[test]
    fn protocol_is_deterministic() {
        let ds = synthetic(160);
        let cfg = RunConfig {
            train: TrainConfig {
                latent_dim: 2,
                epochs: 30,
                batch_size: 32,
                ..Default::default()
            },
            evaluation: EvalConfig {
                split_repeats: 2,
                full_repeats: 2,
                ..Default::default()
            },
            ..Default::default()
        };
        let a = run_protocol(&ds, Method::Nrl, &cfg).unwrap();
        let b = run_protocol(&ds, Method::Nrl, &cfg).unwrap();
        assert_eq!(a.evaluation, b.evaluation);
        assert_eq!(a.repeats.len(), 2);
        assert!(a.evaluation.dual_estimate.is_some());
    }

    #[test]
    fn drop_protected_needs_tracked_columns() {
        let ds = synthetic(40);
        assert!(method_dataset(&ds, Method::OriginalP).is_err());
    }
}
