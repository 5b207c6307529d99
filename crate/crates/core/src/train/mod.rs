//! Unrolled training of learned mirror pairs and step sizes.

mod adam;
mod checkpoint;
mod config;
mod loss;

pub use adam::Adam;
pub use checkpoint::{swap_maps, Checkpoint};
pub use config::{IcnnSettings, TrainConfig};
pub use loss::{unrolled_loss, unrolled_loss_and_gradient};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::mirror::{Icnn, MirrorMap};
use crate::problems::Sample;
use crate::scalar::{softplus, softplus_inverse, Scalar};
use crate::tensor::Tensor;

/// Full-dataset statistics after an epoch (epoch 0 is the initialisation).
#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Mean forward-backward error at the last unrolled iterate.
    pub mean_fb_error: f64,
    /// Samples whose loss or gradient was not finite.
    pub skipped: usize,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    /// Parameters with the lowest full-dataset loss seen.
    pub checkpoint: Checkpoint<T>,
    pub best_epoch: usize,
    pub history: Vec<EpochStats>,
    /// Smallest constrained weight seen after any update.
    pub min_constrained_weight: T,
    /// Smallest step size seen after any update.
    pub min_step: T,
}

impl<T> TrainOutcome<T> {
    /// `epoch,mean_loss,mean_fb_error` rows.
    pub fn history_csv(&self) -> String {
        let mut out = String::from("epoch,mean_loss,mean_fb_error\n");
        for h in &self.history {
            out.push_str(&format!("{},{:?},{:?}\n", h.epoch, h.mean_loss, h.mean_fb_error));
        }
        out
    }
}

/// Everything that is optimised: both networks and the raw step
/// parameters `u_k` with `t_k = softplus(u_k)`.
#[derive(Clone, Debug)]
struct Model<T> {
    forward: Icnn<T>,
    inverse: Icnn<T>,
    raw_steps: Vec<T>,
}

impl<T: Scalar> Model<T> {
    fn init(cfg: &TrainConfig, dim: usize) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let icnn = cfg.icnn.for_dim(dim);
        Ok(Self {
            forward: Icnn::new(icnn.clone(), &mut rng)?,
            inverse: Icnn::new(icnn, &mut rng)?,
            raw_steps: vec![softplus_inverse(T::lit(cfg.initial_step)); cfg.unroll],
        })
    }

    fn params(&self) -> Vec<Tensor<T>> {
        let mut p = self.forward.params();
        p.extend(self.inverse.params());
        p.extend(self.raw_steps.iter().map(|&u| Tensor::scalar(u)));
        p
    }

    fn set_params(&mut self, mut p: Vec<Tensor<T>>) -> Result<()> {
        let nf = self.forward.param_names().len();
        let ni = self.inverse.param_names().len();
        let steps = p.split_off(nf + ni);
        let inv = p.split_off(nf);
        self.forward.set_params(p)?;
        self.inverse.set_params(inv)?;
        self.forward.project();
        self.inverse.project();
        self.raw_steps = steps.iter().map(|t| t.item()).collect::<Result<_>>()?;
        Ok(())
    }

    fn steps(&self) -> Vec<T> {
        self.raw_steps.iter().map(|&u| softplus(u)).collect()
    }

    fn mirror(&self) -> MirrorMap<T> {
        MirrorMap::Learned {
            forward: self.forward.clone(),
            inverse: self.inverse.clone(),
        }
    }

    fn checkpoint(&self, cfg: &TrainConfig) -> Checkpoint<T> {
        Checkpoint {
            forward: self.forward.clone(),
            inverse: self.inverse.clone(),
            steps: self.steps(),
            trained_with: cfg.method,
            runner: cfg.method,
            amd: cfg.amd,
            config_hash: cfg.hash(),
        }
    }

    /// Loss, final forward-backward error and, if asked, the gradient with
    /// respect to [`Model::params`].
    fn evaluate(
        &self,
        cfg: &TrainConfig,
        sample: &Sample<T>,
        with_grad: bool,
    ) -> Result<(T, T, Option<Vec<Tensor<T>>>)> {
        let tape = Tape::new();
        let (bound, mut leaves) = self.mirror().bind(&tape);
        let raw: Vec<Var> = self.raw_steps.iter().map(|&u| tape.scalar(u)).collect();
        let steps = raw
            .iter()
            .map(|&u| tape.softplus(u))
            .collect::<Result<Vec<_>>>()?;
        leaves.extend(&raw);
        let out = loss::unroll_on(&tape, cfg, &bound, &steps, sample)?;
        let loss = tape.value(out.loss).item()?;
        let fb = tape.value(out.fb_final).item()?;
        let grad = if with_grad && loss.is_finite() {
            Some(tape.gradient(out.loss, &leaves)?)
        } else {
            None
        };
        Ok((loss, fb, grad))
    }
}

fn all_finite<T: Scalar>(g: &[Tensor<T>]) -> bool {
    g.iter().all(Tensor::all_finite)
}

/// Mean loss and final forward-backward error over `samples`, skipping
/// non-finite samples.
fn full_stats<T: Scalar>(model: &Model<T>, cfg: &TrainConfig, samples: &[Sample<T>], epoch: usize) -> Result<EpochStats> {
    let evals: Vec<(T, T)> = samples
        .par_iter()
        .map(|s| model.evaluate(cfg, s, false).map(|(l, fb, _)| (l, fb)))
        .collect::<Result<_>>()?;
    let good: Vec<&(T, T)> = evals.iter().filter(|(l, fb)| l.is_finite() && fb.is_finite()).collect();
    let n = good.len().max(1) as f64;
    Ok(EpochStats {
        epoch,
        mean_loss: if good.is_empty() { f64::NAN } else { good.iter().map(|e| e.0.as_f64()).sum::<f64>() / n },
        mean_fb_error: if good.is_empty() { f64::NAN } else { good.iter().map(|e| e.1.as_f64()).sum::<f64>() / n },
        skipped: evals.len() - good.len(),
    })
}

/// Trains a learned pair and steps on `samples`.
///
/// Minibatch gradients are computed in parallel on independent tapes and
/// summed in sample order, so the result is deterministic per seed. After
/// every update constrained weights are clamped at zero. `on_epoch` sees
/// each epoch's statistics as they are produced.
pub fn train<T: Scalar>(
    cfg: &TrainConfig,
    samples: &[Sample<T>],
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    let first = samples
        .first()
        .ok_or_else(|| Error::invalid("training needs at least one sample"))?;
    let dim = first.x0.len();
    if samples.iter().any(|s| s.x0.len() != dim) {
        return Err(Error::invalid("all training samples must have the same size"));
    }
    let mut model = Model::init(cfg, dim)?;
    let params = model.params();
    let first_step = params.len() - cfg.unroll;
    let mut adam = Adam::new(T::lit(cfg.meta_step), &params)
        .with_lr_from(first_step, T::lit(cfg.step_meta_step));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xA5A5_5A5A);

    let stats = full_stats(&model, cfg, samples, 0)?;
    if !stats.mean_loss.is_finite() {
        return Err(Error::NonFinite("training loss at initialisation".into()));
    }
    on_epoch(&stats);
    let mut best = (stats.mean_loss, 0, model.clone());
    let mut history = vec![stats];
    let mut min_w = model.forward.min_constrained_weight().min(model.inverse.min_constrained_weight());
    let mut min_step = model.steps().into_iter().fold(T::infinity(), T::min);

    let mut order: Vec<usize> = (0..samples.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut used_in_epoch = 0;
        for batch in order.chunks(cfg.batch_size) {
            let grads: Vec<Option<Vec<Tensor<T>>>> = batch
                .par_iter()
                .map(|&i| {
                    let (loss, _, g) = model.evaluate(cfg, &samples[i], true)?;
                    Ok(g.filter(|g| loss.is_finite() && all_finite(g)))
                })
                .collect::<Result<_>>()?;
            let mut sum: Option<Vec<Tensor<T>>> = None;
            let mut used = 0usize;
            for g in grads.into_iter().flatten() {
                used += 1;
                sum = Some(match sum {
                    None => g,
                    Some(s) => s.iter().zip(&g).map(|(a, b)| a.add(b)).collect::<Result<_>>()?,
                });
            }
            let Some(sum) = sum else { continue };
            used_in_epoch += used;
            let scale = T::one() / T::lit(used as f64);
            let mean: Vec<Tensor<T>> = sum.iter().map(|g| g.scale(scale)).collect();
            let updated = adam.step(&model.params(), &mean)?;
            model.set_params(updated)?;
            min_w = min_w
                .min(model.forward.min_constrained_weight())
                .min(model.inverse.min_constrained_weight());
            min_step = model.steps().into_iter().fold(min_step, T::min);
        }
        if used_in_epoch == 0 {
            return Err(Error::NonFinite(format!(
                "every sample in epoch {epoch} had a non-finite loss or gradient"
            )));
        }
        let stats = full_stats(&model, cfg, samples, epoch)?;
        on_epoch(&stats);
        if stats.mean_loss < best.0 {
            best = (stats.mean_loss, epoch, model.clone());
        }
        history.push(stats);
    }
    Ok(TrainOutcome {
        checkpoint: best.2.checkpoint(cfg),
        best_epoch: best.1,
        history,
        min_constrained_weight: min_w,
        min_step,
    })
}

/// Mean unrolled loss and final forward-backward error of `map` and `steps`
/// over `samples`.
pub fn evaluate_loss<T: Scalar>(
    cfg: &TrainConfig,
    map: &MirrorMap<T>,
    steps: &[T],
    samples: &[Sample<T>],
) -> Result<(f64, f64)> {
    let evals: Vec<(T, T)> = samples
        .par_iter()
        .map(|s| {
            let tape = Tape::new();
            let (bound, _) = map.bind(&tape);
            let vars: Vec<Var> = steps.iter().map(|&t| tape.scalar(t)).collect();
            let out = loss::unroll_on(&tape, cfg, &bound, &vars, s)?;
            Ok((tape.value(out.loss).item()?, tape.value(out.fb_final).item()?))
        })
        .collect::<Result<_>>()?;
    let n = evals.len().max(1) as f64;
    Ok((
        evals.iter().map(|e| e.0.as_f64()).sum::<f64>() / n,
        evals.iter().map(|e| e.1.as_f64()).sum::<f64>() / n,
    ))
}
