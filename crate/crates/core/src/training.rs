//! The adversarial training loop.
//!
//! Every epoch draws `L` rows from a protected group and `L` rows from its
//! complement, lets the critic climb `L_D` on that fixed pair of batches
//! until the change per step falls below `critic_tol`, and then moves the
//! generator one gradient step against `L_A + alpha * L_D`.
//!
//! With `alpha == 0` the critic has no influence on the generator and is
//! skipped entirely, so the plain autoencoder is literally the same loop.

use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, GroupPartition};
use crate::error::{Error, Result};
use crate::linear_models::{
    reconstruction_loss, CriticState, EncoderState, Generator, MlpAutoencoder, Representation,
};

/// Iterations spent on one class before the one-vs-rest schedule moves on.
pub const MULTICLASS_ROUND: usize = 10;

/// Rows scored when step halving monitors the reconstruction loss.
const MONITOR_ROWS: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub latent_dim: usize,
    pub alpha: f64,
    pub mu: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub critic_tol: f64,
    pub critic_max_iter: usize,
    pub c_clip: f64,
    pub seed: u64,
    /// One rectified hidden layer on each side of the autoencoder.
    pub nonlinear: bool,
    pub use_bias: bool,
    /// Plain autoencoder only: reject steps that raise the monitored loss
    /// and halve the step size instead.
    pub step_halving: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            latent_dim: 12,
            alpha: 10.0,
            mu: 5e-3,
            batch_size: 256,
            epochs: 2000,
            critic_tol: 1e-3,
            critic_max_iter: 500,
            c_clip: 0.1,
            seed: 0,
            nonlinear: false,
            use_bias: true,
            step_halving: false,
        }
    }
}

impl TrainConfig {
    /// Adult income: `d = 12`, `alpha = 10`, 20000 epochs.
    pub fn adult() -> Self {
        TrainConfig {
            latent_dim: 12,
            alpha: 10.0,
            epochs: 20_000,
            ..Default::default()
        }
    }

    /// German credit: `d = 23`, `alpha = 100`.
    pub fn statlog() -> Self {
        TrainConfig {
            latent_dim: 23,
            alpha: 100.0,
            ..Default::default()
        }
    }

    /// Adult with race protected: nonlinear encoder, `d = 10`, `alpha = 1000`.
    pub fn adult_race() -> Self {
        TrainConfig {
            latent_dim: 10,
            alpha: 1000.0,
            nonlinear: true,
            ..Default::default()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "adult" => Ok(Self::adult()),
            "statlog" | "german" => Ok(Self::statlog()),
            "adult_race" => Ok(Self::adult_race()),
            other => Err(Error::InvalidArgument(format!("unknown preset `{other}`"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(what.to_string()));
        if self.latent_dim == 0 {
            return bad("latent_dim must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.critic_tol > 0.0) {
            return bad("critic_tol must be positive");
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return bad("mu must be positive and finite");
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be nonnegative and finite");
        }
        if !(self.c_clip > 0.0 && self.c_clip.is_finite()) {
            return bad("c_clip must be positive and finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Batch reconstruction loss before the generator step (or the monitored
    /// loss after it, when step halving is on).
    pub reconstruction: f64,
    pub critic_gap: f64,
    /// `|L_D| / |w|` on the epoch's batches; zero while the critic is zero.
    pub dual_estimate: f64,
    pub critic_iters: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    /// Some group had fewer than `batch_size` rows and was sampled with replacement.
    pub sampled_with_replacement: bool,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let fail = |e: csv::Error| Error::InvalidArgument(format!("history export failed: {e}"));
        w.write_record(["epoch", "L_A", "L_D", "dual_estimate", "critic_iters"])
            .map_err(fail)?;
        for r in &self.records {
            w.write_record([
                r.epoch.to_string(),
                r.reconstruction.to_string(),
                r.critic_gap.to_string(),
                r.dual_estimate.to_string(),
                r.critic_iters.to_string(),
            ])
            .map_err(fail)?;
        }
        w.flush().map_err(|e| Error::InvalidArgument(format!("history export failed: {e}")))
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Projected gradient ascent on `L_D` with the batches held fixed.
///
/// `L_D` is linear in `w`, so its gradient is the constant difference of the
/// latent batch means. Stops when one step changes `L_D` by less than
/// `critic_tol`, or after `critic_max_iter` steps.
pub fn train_critic_inner<G: Generator>(
    critic: &CriticState,
    gen: &G,
    x0: ArrayView2<'_, f64>,
    x1: ArrayView2<'_, f64>,
    cfg: &TrainConfig,
) -> Result<(CriticState, usize)> {
    let z0 = gen.encode(x0)?;
    let z1 = gen.encode(x1)?;
    Ok(critic_ascent(critic, z0.view(), z1.view(), cfg))
}

fn critic_ascent(
    critic: &CriticState,
    z0: ArrayView2<'_, f64>,
    z1: ArrayView2<'_, f64>,
    cfg: &TrainConfig,
) -> (CriticState, usize) {
    let mut critic = critic.clone();
    let grad = match critic.gradient(z0, z1) {
        Ok(g) => g,
        Err(_) => return (critic, 0),
    };
    let mut value = critic.weights.dot(&grad);
    let mut iters = 0;
    while iters < cfg.critic_max_iter {
        critic.ascend(&grad, cfg.mu);
        iters += 1;
        let next = critic.weights.dot(&grad);
        let change = (next - value).abs();
        value = next;
        if change < cfg.critic_tol {
            break;
        }
    }
    (critic, iters)
}

/// Adversarial training for a binary protected attribute (group 0 against group 1).
pub fn train_nrl(ds: &Dataset, cfg: &TrainConfig) -> Result<(EncoderState, CriticState, TrainHistory)> {
    if ds.n_groups() != 2 {
        return Err(Error::InvalidArgument(format!(
            "binary training needs exactly two protected classes, got {}",
            ds.n_groups()
        )));
    }
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let gen = EncoderState::init(ds.m(), cfg.latent_dim, cfg.use_bias, &mut rng)?;
    run(gen, ds, cfg, Schedule::Fixed(0), false, &mut rng)
}

/// Reconstruction-only training; the same batches and RNG stream as
/// [`train_nrl`] with `alpha = 0`.
pub fn train_autoencoder(ds: &Dataset, cfg: &TrainConfig) -> Result<(EncoderState, TrainHistory)> {
    cfg.validate()?;
    let cfg = TrainConfig {
        alpha: 0.0,
        ..cfg.clone()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let gen = EncoderState::init(ds.m(), cfg.latent_dim, cfg.use_bias, &mut rng)?;
    let (gen, _, history) = run(gen, ds, &cfg, Schedule::Fixed(0), cfg.step_halving, &mut rng)?;
    Ok((gen, history))
}

/// [`train_autoencoder`] for either architecture, selected by `cfg.nonlinear`.
pub fn train_autoencoder_any(ds: &Dataset, cfg: &TrainConfig) -> Result<(Representation, TrainHistory)> {
    if !cfg.nonlinear {
        return train_autoencoder(ds, cfg).map(|(e, h)| (Representation::Linear(e), h));
    }
    cfg.validate()?;
    let cfg = TrainConfig {
        alpha: 0.0,
        ..cfg.clone()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let gen = MlpAutoencoder::init(ds.m(), cfg.latent_dim, &mut rng)?;
    let (gen, _, history) = run(gen, ds, &cfg, Schedule::Fixed(0), cfg.step_halving, &mut rng)?;
    Ok((Representation::Mlp(gen), history))
}

/// One-vs-rest training: class `j` is pitted against its complement for
/// [`MULTICLASS_ROUND`] iterations, then `j + 1`, cycling. A single critic
/// is shared across all classes.
pub fn train_multiclass(
    ds: &Dataset,
    cfg: &TrainConfig,
) -> Result<(Representation, CriticState, TrainHistory)> {
    cfg.validate()?;
    let part = ds.partition();
    if let Some(c) = part.groups.iter().position(|g| g.is_empty()) {
        return Err(Error::EmptyGroup(format!("protected class {c} has no rows")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let schedule = Schedule::RoundRobin(part.n_groups());
    if cfg.nonlinear {
        let gen = MlpAutoencoder::init(ds.m(), cfg.latent_dim, &mut rng)?;
        let (g, c, h) = run(gen, ds, cfg, schedule, false, &mut rng)?;
        Ok((Representation::Mlp(g), c, h))
    } else {
        let gen = EncoderState::init(ds.m(), cfg.latent_dim, cfg.use_bias, &mut rng)?;
        let (g, c, h) = run(gen, ds, cfg, schedule, false, &mut rng)?;
        Ok((Representation::Linear(g), c, h))
    }
}

#[derive(Debug, Clone, Copy)]
enum Schedule {
    /// Always the given class against its complement.
    Fixed(usize),
    /// Class `(epoch / MULTICLASS_ROUND) % n` against its complement.
    RoundRobin(usize),
}

impl Schedule {
    fn class(self, epoch: usize) -> usize {
        match self {
            Schedule::Fixed(c) => c,
            Schedule::RoundRobin(n) => (epoch / MULTICLASS_ROUND) % n,
        }
    }
}

fn sample_rows<R: Rng>(pool: &[usize], size: usize, rng: &mut R) -> Vec<usize> {
    if pool.len() >= size {
        index::sample(rng, pool.len(), size)
            .into_iter()
            .map(|i| pool[i])
            .collect()
    } else {
        (0..size).map(|_| pool[rng.random_range(0..pool.len())]).collect()
    }
}

fn run<G: Generator>(
    mut gen: G,
    ds: &Dataset,
    cfg: &TrainConfig,
    schedule: Schedule,
    step_halving: bool,
    rng: &mut ChaCha8Rng,
) -> Result<(G, CriticState, TrainHistory)> {
    let part: GroupPartition = ds.partition();
    let pairs: Vec<(Vec<usize>, Vec<usize>)> = (0..part.n_groups())
        .map(|c| (part.groups[c].clone(), part.complement(c)))
        .collect();
    for (c, (inside, outside)) in pairs.iter().enumerate() {
        if inside.is_empty() || outside.is_empty() {
            return Err(Error::EmptyGroup(format!(
                "class {c} or its complement has no rows"
            )));
        }
    }

    let mut critic = CriticState::new(gen.latent_dim(), cfg.c_clip);
    let mut history = TrainHistory {
        records: Vec::with_capacity(cfg.epochs),
        sampled_with_replacement: pairs
            .iter()
            .any(|(a, b)| a.len() < cfg.batch_size || b.len() < cfg.batch_size),
    };

    let monitor = if step_halving {
        let mut mrng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6d6f_6e69_746f_72);
        let rows = if ds.n() <= MONITOR_ROWS {
            (0..ds.n()).collect()
        } else {
            let mut r = index::sample(&mut mrng, ds.n(), MONITOR_ROWS).into_vec();
            r.sort_unstable();
            r
        };
        Some(ds.x.select(Axis(0), &rows))
    } else {
        None
    };
    let mut step = cfg.mu;
    let mut monitored = match &monitor {
        Some(x) => reconstruction_loss(&gen, x.view())?,
        None => f64::NAN,
    };

    for epoch in 0..cfg.epochs {
        let (inside, outside) = &pairs[schedule.class(epoch)];
        let b0: Array2<f64> = ds.x.select(Axis(0), &sample_rows(inside, cfg.batch_size, rng));
        let b1: Array2<f64> = ds.x.select(Axis(0), &sample_rows(outside, cfg.batch_size, rng));

        let mut critic_iters = 0;
        if cfg.alpha != 0.0 {
            let (c, it) = train_critic_inner(&critic, &gen, b0.view(), b1.view(), cfg)?;
            critic = c;
            critic_iters = it;
        }

        let (loss, grad) = gen.loss_and_gradient(&critic, b0.view(), b1.view(), cfg.alpha)?;
        let mut reconstruction = loss.reconstruction;
        match &monitor {
            Some(x) => {
                let mut candidate = gen.clone();
                candidate.apply(&grad, step);
                let value = reconstruction_loss(&candidate, x.view())?;
                if value <= monitored {
                    gen = candidate;
                    monitored = value;
                } else {
                    step *= 0.5;
                }
                reconstruction = monitored;
            }
            None => gen.apply(&grad, step),
        }

        let (critic_gap, dual) = if cfg.alpha != 0.0 {
            let norm = critic.norm();
            let dual = if norm > 0.0 { loss.critic_gap.abs() / norm } else { 0.0 };
            (loss.critic_gap, dual)
        } else {
            (0.0, 0.0)
        };
        if !reconstruction.is_finite() {
            return Err(Error::Degenerate(format!(
                "training diverged at epoch {epoch}; lower mu or alpha"
            )));
        }
        history.records.push(EpochRecord {
            epoch,
            reconstruction,
            critic_gap,
            dual_estimate: dual,
            critic_iters,
        });
    }
    Ok((gen, critic, history))
}
