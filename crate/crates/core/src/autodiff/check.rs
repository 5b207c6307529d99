use super::{Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Outcome of comparing a reverse-mode gradient against central differences.
#[derive(Clone, Debug)]
pub struct FdReport<T> {
    /// `max_i |fd_i - g_i| / (|g_i| + h)` over the finite coordinates.
    pub max_rel_error: T,
    /// Coordinate with the largest error.
    pub worst_index: usize,
    /// Coordinates where `f(x ± h e_i)` was not finite.
    pub nonfinite: Vec<usize>,
}

impl<T: Scalar> FdReport<T> {
    pub fn passes(&self, tol: T) -> bool {
        self.nonfinite.is_empty() && self.max_rel_error < tol
    }
}

/// Checks the tape gradient of the scalar function built by `f` at `x`
/// against central differences with step `h`.
pub fn finite_diff_check<T, F>(f: F, x: &Tensor<T>, h: T) -> Result<FdReport<T>>
where
    T: Scalar,
    F: Fn(&Tape<T>, Var) -> Result<Var>,
{
    if !(h > T::zero()) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let out = f(&tape, xv)?;
    let grad = tape.gradient(out, &[xv])?.remove(0);

    let eval = |p: Vec<T>| -> Result<T> {
        let tape = Tape::new();
        let v = tape.leaf(Tensor::from_vec(x.shape().to_vec(), p)?);
        let out = f(&tape, v)?;
        tape.value(out).item()
    };

    let base = x.as_slice();
    let mut report = FdReport {
        max_rel_error: T::zero(),
        worst_index: 0,
        nonfinite: Vec::new(),
    };
    for i in 0..base.len() {
        let mut plus = base.to_vec();
        plus[i] += h;
        let mut minus = base.to_vec();
        minus[i] -= h;
        let (fp, fm) = (eval(plus)?, eval(minus)?);
        if !fp.is_finite() || !fm.is_finite() {
            report.nonfinite.push(i);
            continue;
        }
        let fd = (fp - fm) / (T::lit(2.0) * h);
        let g = grad.as_slice()[i];
        let err = (fd - g).abs() / (g.abs() + h);
        if err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst_index = i;
        }
    }
    Ok(report)
}
