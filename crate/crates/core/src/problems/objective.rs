use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::operator::ForwardOperator;
use super::tv;
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::kernels;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// A convex, continuously differentiable function with Lipschitz gradient.
///
/// The tape methods must build `∇f` as a forward expression (not via
/// reverse mode) so that unrolled iterations can be differentiated.
pub trait Objective<T: Scalar>: Send + Sync {
    /// Shape of the variable.
    fn shape(&self) -> &[usize];

    fn value_on(&self, tape: &Tape<T>, x: Var) -> Result<Var>;

    fn gradient_on(&self, tape: &Tape<T>, x: Var) -> Result<Var>;

    /// An upper bound on the Lipschitz constant of `∇f`.
    fn lipschitz_bound(&self) -> T;

    fn value(&self, x: &Tensor<T>) -> Result<T> {
        let tape = Tape::new();
        let v = tape.leaf(x.clone());
        let out = self.value_on(&tape, v)?;
        tape.value(out).item()
    }

    fn gradient(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let tape = Tape::new();
        let v = tape.leaf(x.clone());
        let out = self.gradient_on(&tape, v)?;
        Ok(tape.value(out))
    }

    fn check_shape(&self, x: &Tensor<T>) -> Result<()> {
        if x.shape() == self.shape() {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                op: "objective",
                left: self.shape().to_vec(),
                right: x.shape().to_vec(),
            })
        }
    }
}

/// `f(x) = ‖Ax − y‖² + λ·TV_ε(x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TvObjective<T> {
    pub operator: ForwardOperator<T>,
    pub observation: Tensor<T>,
    pub lambda: T,
    pub eps: T,
}

impl<T: Scalar> TvObjective<T> {
    pub fn new(operator: ForwardOperator<T>, observation: Tensor<T>, lambda: T, eps: T) -> Result<Self> {
        if observation.shape().len() != 2 {
            return Err(Error::BadShape {
                op: "tv objective",
                msg: "observation must be a 2-d image",
                shape: observation.shape().to_vec(),
            });
        }
        if !(lambda >= T::zero()) || !(eps > T::zero()) {
            return Err(Error::invalid("tv weight must be nonnegative and smoothing positive"));
        }
        Ok(Self {
            operator,
            observation,
            lambda,
            eps,
        })
    }

    fn residual(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_shape(x)?;
        self.operator.apply(x)?.sub(&self.observation)
    }
}

impl<T: Scalar> Objective<T> for TvObjective<T> {
    fn shape(&self) -> &[usize] {
        self.observation.shape()
    }

    fn value_on(&self, tape: &Tape<T>, x: Var) -> Result<Var> {
        let y = tape.leaf(self.observation.clone());
        let ax = self.operator.apply_on(tape, x)?;
        let r = tape.sub(ax, y)?;
        let data = tape.dot(r, r)?;
        let t = tv::tv_value_on(tape, x, self.eps)?;
        let t = tape.scale(t, self.lambda)?;
        tape.add(data, t)
    }

    fn gradient_on(&self, tape: &Tape<T>, x: Var) -> Result<Var> {
        let y = tape.leaf(self.observation.clone());
        let ax = self.operator.apply_on(tape, x)?;
        let r = tape.sub(ax, y)?;
        let at = self.operator.adjoint_on(tape, r)?;
        let data = tape.scale(at, T::lit(2.0))?;
        let t = tv::tv_gradient_on(tape, x, self.eps)?;
        let t = tape.scale(t, self.lambda)?;
        tape.add(data, t)
    }

    /// `2‖A‖² + λ‖D‖²/ε` with `‖D‖² ≤ 8`.
    fn lipschitz_bound(&self) -> T {
        let a = self.operator.norm_bound();
        T::lit(2.0) * a * a + self.lambda * T::lit(8.0) / self.eps
    }

    fn value(&self, x: &Tensor<T>) -> Result<T> {
        let r = self.residual(x)?;
        Ok(r.dot(&r)? + self.lambda * tv::tv_value(x, self.eps)?)
    }

    fn gradient(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let r = self.residual(x)?;
        let data = self.operator.adjoint(&r)?.scale(T::lit(2.0));
        data.axpy(self.lambda, &tv::tv_gradient(x, self.eps)?)
    }
}

/// `f(x) = ½‖Ax − b‖²` for a dense matrix `A`.
#[derive(Clone, Debug, PartialEq)]
pub struct LeastSquares<T> {
    a: Tensor<T>,
    b: Tensor<T>,
    shape: Vec<usize>,
    lipschitz: T,
}

impl<T: Scalar> LeastSquares<T> {
    pub fn new(a: Tensor<T>, b: Tensor<T>) -> Result<Self> {
        let (m, n) = match *a.shape() {
            [m, n] => (m, n),
            _ => {
                return Err(Error::BadShape {
                    op: "least squares",
                    msg: "matrix must be 2-d",
                    shape: a.shape().to_vec(),
                })
            }
        };
        if b.shape() != [m] {
            return Err(Error::ShapeMismatch {
                op: "least squares",
                left: a.shape().to_vec(),
                right: b.shape().to_vec(),
            });
        }
        let lipschitz = top_singular_value_sq(&a, m, n);
        Ok(Self {
            a,
            b,
            shape: vec![n],
            lipschitz,
        })
    }

    /// `½‖x‖²` in `n` dimensions.
    pub fn half_norm_squared(n: usize) -> Self {
        Self::new(Tensor::eye(n), Tensor::zeros(vec![n])).expect("square identity")
    }

    /// `A = diag(√s) Q` with `Q` a random orthogonal matrix and `s` log-spaced
    /// in `[1/cond, 1]`, and `b = A x*` for a random `x*`, so `f* = 0`.
    pub fn conditioned<R: Rng>(n: usize, cond: f64, rng: &mut R) -> Result<Self> {
        if n == 0 || !(cond >= 1.0) {
            return Err(Error::invalid("need n > 0 and condition number >= 1"));
        }
        let q = random_orthogonal(n, rng);
        let mut a = vec![0.0f64; n * n];
        for i in 0..n {
            let frac = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
            let s = cond.powf(-frac).sqrt();
            for j in 0..n {
                a[i * n + j] = s * q[i * n + j];
            }
        }
        let xs: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let mut b = vec![0.0; n];
        kernels::matvec(&a, n, n, &xs, &mut b);
        let lit = |v: Vec<f64>| v.into_iter().map(T::lit).collect::<Vec<_>>();
        Self::new(
            Tensor::from_vec(vec![n, n], lit(a))?,
            Tensor::vector(lit(b)),
        )
    }

    /// Random Gaussian `A` (`m × n`) and `b`.
    pub fn random<R: Rng>(m: usize, n: usize, rng: &mut R) -> Result<Self> {
        let mut draw = |len: usize| -> Vec<T> {
            (0..len)
                .map(|_| T::lit(StandardNormal.sample(&mut *rng)))
                .collect()
        };
        let a = draw(m * n);
        let b = draw(m);
        let scale = T::lit(1.0 / (m as f64).sqrt());
        Self::new(Tensor::from_vec(vec![m, n], a)?.scale(scale), Tensor::vector(b))
    }

    pub fn matrix(&self) -> &Tensor<T> {
        &self.a
    }

    pub fn rhs(&self) -> &Tensor<T> {
        &self.b
    }
}

fn random_orthogonal<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    // Gram–Schmidt on a Gaussian matrix, row by row.
    let mut q: Vec<f64> = (0..n * n).map(|_| StandardNormal.sample(rng)).collect();
    for i in 0..n {
        for j in 0..i {
            let (done, cur) = q.split_at_mut(i * n);
            let prev = &done[j * n..(j + 1) * n];
            let row = &mut cur[..n];
            let p = kernels::dot(prev, row);
            kernels::axpy(-p, prev, row);
        }
        let row = &mut q[i * n..(i + 1) * n];
        let nrm = kernels::dot(row, row).sqrt();
        row.iter_mut().for_each(|v| *v /= nrm);
    }
    q
}

/// `‖A‖₂²` by power iteration on `AᵀA`.
fn top_singular_value_sq<T: Scalar>(a: &Tensor<T>, m: usize, n: usize) -> T {
    let mut v: Vec<T> = (0..n).map(|i| T::lit(1.0 + 0.01 * i as f64)).collect();
    let mut av = vec![T::zero(); m];
    let mut est = T::zero();
    for _ in 0..500 {
        let nv = kernels::dot(&v, &v).sqrt();
        if nv == T::zero() {
            return T::zero();
        }
        v.iter_mut().for_each(|x| *x /= nv);
        kernels::matvec(a.as_slice(), m, n, &v, &mut av);
        let mut w = vec![T::zero(); n];
        kernels::matvec_t_acc(a.as_slice(), m, n, &av, &mut w);
        let next = kernels::dot(&v, &w);
        v = w;
        if (next - est).abs() <= T::epsilon() * next {
            est = next;
            break;
        }
        est = next;
    }
    // A little slack: power iteration approaches from below.
    est * T::lit(1.0 + 1e-9)
}

impl<T: Scalar> Objective<T> for LeastSquares<T> {
    fn shape(&self) -> &[usize] {
        &self.shape
    }

    fn value_on(&self, tape: &Tape<T>, x: Var) -> Result<Var> {
        let a = tape.leaf(self.a.clone());
        let b = tape.leaf(self.b.clone());
        let ax = tape.matvec(a, x)?;
        let r = tape.sub(ax, b)?;
        let rr = tape.dot(r, r)?;
        tape.scale(rr, T::lit(0.5))
    }

    fn gradient_on(&self, tape: &Tape<T>, x: Var) -> Result<Var> {
        let a = tape.leaf(self.a.clone());
        let b = tape.leaf(self.b.clone());
        let ax = tape.matvec(a, x)?;
        let r = tape.sub(ax, b)?;
        tape.matvec_t(a, r)
    }

    fn lipschitz_bound(&self) -> T {
        self.lipschitz
    }

    fn value(&self, x: &Tensor<T>) -> Result<T> {
        self.check_shape(x)?;
        let r = self.a.matvec(x)?.sub(&self.b)?;
        Ok(T::lit(0.5) * r.dot(&r)?)
    }

    fn gradient(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_shape(x)?;
        let r = self.a.matvec(x)?.sub(&self.b)?;
        let (m, n) = (self.a.shape()[0], self.a.shape()[1]);
        let mut out = vec![T::zero(); n];
        kernels::matvec_t_acc(self.a.as_slice(), m, n, r.as_slice(), &mut out);
        Ok(Tensor::vector(out))
    }
}
