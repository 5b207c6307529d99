//! The unrolled training loss
//! `Σ_k r_k f(x̃_k) + s_k ‖(∇M* ∘ ∇M − I)(x̃_k)‖`, built on a tape so it can be
//! differentiated with respect to both networks and the steps.

use super::config::TrainConfig;
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::mirror::{BoundMirror, MirrorMap};
use crate::optim::{amd_lambda, Method};
use crate::problems::{Objective, Sample};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Loss node plus diagnostics from one unroll.
pub(crate) struct Unrolled {
    pub loss: Var,
    /// Forward-backward error at the last iterate.
    pub fb_final: Var,
}

fn fb_on<T: Scalar>(tape: &Tape<T>, map: &BoundMirror<T>, x: Var) -> Result<Var> {
    let fwd = map.mirror_map_on(tape, x)?;
    let back = map.inverse_mirror_map_on(tape, fwd)?;
    let d = tape.sub(back, x)?;
    tape.norm2(d)
}

/// Iterates `x̃_1..x̃_N` of the configured method on the tape.
fn iterates<T: Scalar>(
    tape: &Tape<T>,
    cfg: &TrainConfig,
    map: &BoundMirror<T>,
    steps: &[Var],
    obj: &dyn Objective<T>,
    x0: Var,
) -> Result<Vec<Var>> {
    let mut out = Vec::with_capacity(steps.len());
    match cfg.method {
        Method::Lmd => {
            let mut x = x0;
            for &t in steps {
                let g = obj.gradient_on(tape, x)?;
                let dual = map.mirror_map_on(tape, x)?;
                let dual = tape.sub_scaled(dual, t, g)?;
                x = map.inverse_mirror_map_on(tape, dual)?;
                out.push(x);
            }
        }
        Method::Lamd => {
            let r = T::lit(cfg.amd.r);
            let gamma = T::lit(cfg.amd.gamma);
            let mut xt = x0;
            let mut z = if cfg.amd.dual_init {
                map.inverse_mirror_map_on(tape, x0)?
            } else {
                x0
            };
            for (k, &t) in steps.iter().enumerate() {
                let lam = amd_lambda(r, k);
                let a = tape.scale(z, lam)?;
                let b = tape.scale(xt, T::one() - lam)?;
                let x = tape.add(a, b)?;
                let g = obj.gradient_on(tape, x)?;
                let c = tape.scale(t, T::lit(k as f64) / r)?;
                let dual = map.mirror_map_on(tape, z)?;
                let dual = tape.sub_scaled(dual, c, g)?;
                z = map.inverse_mirror_map_on(tape, dual)?;
                let gt = tape.scale(t, gamma)?;
                xt = tape.sub_scaled(x, gt, g)?;
                out.push(xt);
            }
        }
        m => return Err(Error::Config(format!("cannot unroll method {m}"))),
    }
    Ok(out)
}

pub(crate) fn unroll_on<T: Scalar>(
    tape: &Tape<T>,
    cfg: &TrainConfig,
    map: &BoundMirror<T>,
    steps: &[Var],
    sample: &Sample<T>,
) -> Result<Unrolled> {
    if steps.len() != cfg.unroll {
        return Err(Error::invalid(format!(
            "expected {} steps, got {}",
            cfg.unroll,
            steps.len()
        )));
    }
    let (rw, sw) = cfg.weights();
    let x0 = tape.leaf(sample.x0.clone());
    let xs = iterates(tape, cfg, map, steps, &sample.objective, x0)?;
    let mut loss: Option<Var> = None;
    let mut acc = |term: Var| -> Result<()> {
        loss = Some(match loss {
            Some(l) => tape.add(l, term)?,
            None => term,
        });
        Ok(())
    };
    let mut fb_final = None;
    for (k, &x) in xs.iter().enumerate() {
        if rw[k] != 0.0 {
            let f = sample.objective.value_on(tape, x)?;
            acc(tape.scale(f, T::lit(rw[k]))?)?;
        }
        let last = k + 1 == xs.len();
        if sw[k] != 0.0 || last {
            let e = fb_on(tape, map, x)?;
            if sw[k] != 0.0 {
                acc(tape.scale(e, T::lit(sw[k]))?)?;
            }
            if last {
                fb_final = Some(e);
            }
        }
    }
    let s_last = sw[cfg.unroll - 1];
    if cfg.fb_at_clean && s_last != 0.0 {
        let c = tape.leaf(sample.clean.clone());
        let e = fb_on(tape, map, c)?;
        acc(tape.scale(e, T::lit(s_last))?)?;
    }
    Ok(Unrolled {
        loss: loss.expect("weights are not all zero"),
        fb_final: fb_final.expect("at least one step"),
    })
}

/// Value of the unrolled loss for explicit step sizes `t_1..t_N`.
pub fn unrolled_loss<T: Scalar>(
    cfg: &TrainConfig,
    map: &MirrorMap<T>,
    steps: &[T],
    sample: &Sample<T>,
) -> Result<T> {
    let tape = Tape::new();
    let (bound, _) = map.bind(&tape);
    let step_vars: Vec<Var> = steps.iter().map(|&t| tape.scalar(t)).collect();
    let out = unroll_on(&tape, cfg, &bound, &step_vars, sample)?;
    tape.value(out.loss).item()
}

/// The loss and its gradient with respect to the map parameters (forward
/// network first, then inverse, in parameter-name order) followed by one
/// scalar per step.
pub fn unrolled_loss_and_gradient<T: Scalar>(
    cfg: &TrainConfig,
    map: &MirrorMap<T>,
    steps: &[T],
    sample: &Sample<T>,
) -> Result<(T, Vec<Tensor<T>>)> {
    let tape = Tape::new();
    let (bound, mut leaves) = map.bind(&tape);
    let step_vars: Vec<Var> = steps.iter().map(|&t| tape.scalar(t)).collect();
    leaves.extend(&step_vars);
    let out = unroll_on(&tape, cfg, &bound, &step_vars, sample)?;
    tape.value_and_gradient(out.loss, &leaves)
}
