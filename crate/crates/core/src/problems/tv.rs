//! Smoothed isotropic total variation
//! `TV_ε(x) = Σ_p √(Dₕx_p² + Dᵥx_p² + ε²) − ε` with forward differences and
//! a zero difference past the last row and column.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::kernels;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

fn image_dims<T: Scalar>(x: &Tensor<T>) -> Result<(usize, usize)> {
    match *x.shape() {
        [h, w] => Ok((h, w)),
        _ => Err(Error::BadShape {
            op: "tv",
            msg: "expects a 2-d image",
            shape: x.shape().to_vec(),
        }),
    }
}

fn check_eps<T: Scalar>(eps: T) -> Result<()> {
    if eps > T::zero() {
        Ok(())
    } else {
        Err(Error::invalid("tv smoothing must be positive"))
    }
}

pub fn tv_value<T: Scalar>(x: &Tensor<T>, eps: T) -> Result<T> {
    check_eps(eps)?;
    let (h, w) = image_dims(x)?;
    let n = h * w;
    let mut d = vec![T::zero(); 2 * n];
    kernels::diff2d(h, w, x.as_slice(), &mut d);
    let e2 = eps * eps;
    Ok((0..n)
        .map(|p| (d[p] * d[p] + d[n + p] * d[n + p] + e2).sqrt() - eps)
        .sum())
}

pub fn tv_gradient<T: Scalar>(x: &Tensor<T>, eps: T) -> Result<Tensor<T>> {
    check_eps(eps)?;
    let (h, w) = image_dims(x)?;
    let n = h * w;
    let mut d = vec![T::zero(); 2 * n];
    kernels::diff2d(h, w, x.as_slice(), &mut d);
    let e2 = eps * eps;
    for p in 0..n {
        let r = (d[p] * d[p] + d[n + p] * d[n + p] + e2).sqrt();
        d[p] /= r;
        d[n + p] /= r;
    }
    let mut out = vec![T::zero(); n];
    kernels::diff2d_adjoint_acc(h, w, &d, &mut out);
    Ok(Tensor::new_unchecked(vec![h, w], out))
}

/// Pixelwise magnitudes `√(Dₕ² + Dᵥ² + ε²)` on the tape, plus the
/// differences they were built from.
fn magnitudes<T: Scalar>(tape: &Tape<T>, x: Var, eps: T) -> Result<(Var, Var)> {
    check_eps(eps)?;
    let d = tape.diff2d(x)?;
    let sq = tape.square(d)?;
    let s = tape.sum_leading(sq)?;
    Ok((d, tape.sqrt_smoothed(s, eps)?))
}

pub fn tv_value_on<T: Scalar>(tape: &Tape<T>, x: Var, eps: T) -> Result<Var> {
    let (_, r) = magnitudes(tape, x, eps)?;
    let r = tape.offset(r, -eps)?;
    tape.sum(r)
}

/// `∇TV_ε(x) = Dᵀ(Dx / r)` as a differentiable expression.
pub fn tv_gradient_on<T: Scalar>(tape: &Tape<T>, x: Var, eps: T) -> Result<Var> {
    let (d, r) = magnitudes(tape, x, eps)?;
    let r2 = tape.tile(r, 2)?;
    let p = tape.div(d, r2)?;
    tape.diff2d_adjoint(p)
}
