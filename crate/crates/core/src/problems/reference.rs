use super::objective::Objective;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Smallest budget accepted by [`reference_minimum`].
pub const MIN_REFERENCE_BUDGET: usize = 10_000;

/// Best objective value seen by accelerated gradient descent with
/// backtracking and gradient-based momentum restarts, run from `x0` for at
/// most `budget` iterations.
///
/// The run stops early once the gradient vanishes to rounding level; that
/// decision depends only on the trajectory, so the result is monotone in
/// `budget`.
pub fn reference_minimum<T: Scalar>(
    obj: &dyn Objective<T>,
    x0: &Tensor<T>,
    budget: usize,
) -> Result<T> {
    if budget < MIN_REFERENCE_BUDGET {
        return Err(Error::invalid(format!(
            "reference budget must be at least {MIN_REFERENCE_BUDGET}, got {budget}"
        )));
    }
    let half = T::lit(0.5);
    let mut x = x0.clone();
    let mut fx = obj.value(&x)?;
    let mut best = fx;
    let mut y = x.clone();
    let mut t = T::one();
    let mut lip = T::one();
    let tol = T::epsilon() * T::lit(10.0);

    for _ in 0..budget {
        let fy = obj.value(&y)?;
        let g = obj.gradient(&y)?;
        let g2 = g.dot(&g)?;
        if g2.sqrt() <= tol * (T::one() + fy.abs()) {
            best = best.min(fy);
            break;
        }
        let slack = T::epsilon() * T::lit(16.0) * (T::one() + fy.abs());
        let (xn, fxn) = loop {
            let xn = y.axpy(-T::one() / lip, &g)?;
            let fxn = obj.value(&xn)?;
            if fxn <= fy - half * g2 / lip + slack {
                break (xn, fxn);
            }
            lip *= T::lit(2.0);
            if !lip.is_finite() {
                return Err(Error::NonFinite("reference line search".into()));
            }
        };
        if !fxn.is_finite() {
            return Err(Error::NonFinite("reference iterate".into()));
        }
        best = best.min(fxn);
        let step = xn.sub(&x)?;
        if g.dot(&step)? > T::zero() || fxn > fx {
            // Momentum is pointing uphill: restart.
            t = T::one();
            y = xn.clone();
        } else {
            let tn = half * (T::one() + (T::one() + T::lit(4.0) * t * t).sqrt());
            y = xn.axpy((t - T::one()) / tn, &step)?;
            t = tn;
        }
        x = xn;
        fx = fxn;
        // Let the step grow back slowly.
        lip *= T::lit(0.98);
    }
    Ok(best)
}
