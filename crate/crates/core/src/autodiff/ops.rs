use super::GradSink;
use crate::error::{Error, Result};
use crate::kernels::{self, ConvDims};
use crate::scalar::{sigmoid, softplus, Scalar};
use crate::tensor::Tensor;

/// Every operation the tape can record.
#[derive(Clone, Debug, PartialEq)]
pub enum OpKind<T> {
    Add,
    Sub,
    /// Elementwise product.
    Mul,
    /// Elementwise quotient.
    Div,
    /// Multiplication by a constant.
    Scale(T),
    /// Addition of a constant.
    Offset(T),
    /// `(tensor, scalar node) -> scalar * tensor`.
    ScaleBy,
    /// `(W: (m,n), x: (n)) -> W x`.
    MatVec,
    /// `(W: (m,n), y: (m)) -> Wᵀ y`.
    MatVecT,
    /// `(A: (m,k), B: (k,n)) -> A B`.
    MatMul,
    /// `(image: (h,w), kernel: (kh,kw))`, zero-padded centred convolution.
    Conv2dSame,
    Sum,
    /// Sums over the leading axis: `(k, rest..) -> (rest..)`.
    SumLeading,
    /// Stacks `n` copies along a new leading axis.
    Tile(usize),
    Dot,
    /// Euclidean norm of all entries.
    Norm2,
    Square,
    /// `sqrt(a + eps²)`, elementwise.
    SqrtSmoothed(T),
    Softplus,
    Sigmoid,
    Relu,
    /// Heaviside step `[a > 0]`, treated as locally constant.
    Step,
    Exp,
    Log,
    Reshape(Vec<usize>),
    /// Concatenation along the leading axis.
    Concat,
    /// Forward differences of an image, `(h,w) -> (2,h,w)`.
    Diff2d,
    /// Adjoint of [`OpKind::Diff2d`], `(2,h,w) -> (h,w)`.
    Diff2dAdjoint,
}

impl<T> OpKind<T> {
    pub fn name(&self) -> &'static str {
        match self {
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Div => "div",
            OpKind::Scale(_) => "scale",
            OpKind::Offset(_) => "offset",
            OpKind::ScaleBy => "scale_by",
            OpKind::MatVec => "matvec",
            OpKind::MatVecT => "matvec_t",
            OpKind::MatMul => "matmul",
            OpKind::Conv2dSame => "conv2d_same",
            OpKind::Sum => "sum",
            OpKind::SumLeading => "sum_leading",
            OpKind::Tile(_) => "tile",
            OpKind::Dot => "dot",
            OpKind::Norm2 => "norm2",
            OpKind::Square => "square",
            OpKind::SqrtSmoothed(_) => "sqrt_smoothed",
            OpKind::Softplus => "softplus",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Relu => "relu",
            OpKind::Step => "step",
            OpKind::Exp => "exp",
            OpKind::Log => "log",
            OpKind::Reshape(_) => "reshape",
            OpKind::Concat => "concat",
            OpKind::Diff2d => "diff2d",
            OpKind::Diff2dAdjoint => "diff2d_adjoint",
        }
    }
}

fn arity<T>(kind: &OpKind<T>, n: usize, inputs: usize) -> Result<()> {
    if inputs != n {
        return Err(Error::invalid(format!(
            "{} takes {n} input(s), got {inputs}",
            kind.name()
        )));
    }
    Ok(())
}

fn image_dims(op: &'static str, shape: &[usize]) -> Result<(usize, usize)> {
    match shape {
        [h, w] => Ok((*h, *w)),
        _ => Err(Error::BadShape {
            op,
            msg: "expected an image of shape (h, w)",
            shape: shape.to_vec(),
        }),
    }
}

/// Evaluates `kind` on concrete inputs without recording anything.
pub fn forward_op<T: Scalar>(kind: &OpKind<T>, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
    use OpKind::*;
    match kind {
        Concat => {
            if inputs.is_empty() {
                return Err(Error::invalid("concat needs at least one input"));
            }
            let first = inputs[0].shape();
            let rest = first.get(1..).unwrap_or(&[]).to_vec();
            let mut lead = 0;
            let mut data = Vec::new();
            for t in inputs {
                let s = t.shape();
                if s.is_empty() || s[1..] != rest[..] {
                    return Err(Error::ShapeMismatch {
                        op: "concat",
                        left: first.to_vec(),
                        right: s.to_vec(),
                    });
                }
                lead += s[0];
                data.extend_from_slice(t.as_slice());
            }
            let mut shape = vec![lead];
            shape.extend(rest);
            return Ok(Tensor::new_unchecked(shape, data));
        }
        Add | Sub | Mul | Div | ScaleBy | MatVec | MatVecT | MatMul | Conv2dSame | Dot => {
            arity(kind, 2, inputs.len())?
        }
        _ => arity(kind, 1, inputs.len())?,
    }
    let a = inputs[0];
    let out = match kind {
        Add => a.add(inputs[1])?,
        Sub => a.sub(inputs[1])?,
        Mul => a.zip_map(inputs[1], "mul", |x, y| x * y)?,
        Div => a.zip_map(inputs[1], "div", |x, y| x / y)?,
        Scale(c) => a.scale(*c),
        Offset(c) => a.map(|x| x + *c),
        ScaleBy => {
            let s = inputs[1];
            if !s.is_scalar() {
                return Err(Error::ShapeMismatch {
                    op: "scale_by",
                    left: a.shape().to_vec(),
                    right: s.shape().to_vec(),
                });
            }
            a.scale(s.as_slice()[0])
        }
        MatVec => a.matvec(inputs[1])?,
        MatVecT => {
            let y = inputs[1];
            let (m, n) = kernels::matvec_t_dims("matvec_t", a.shape(), y.shape())?;
            let mut out = vec![T::zero(); n];
            kernels::matvec_t_acc(a.as_slice(), m, n, y.as_slice(), &mut out);
            Tensor::vector(out)
        }
        MatMul => {
            let b = inputs[1];
            let (m, k, n) = match (a.shape(), b.shape()) {
                ([m, k], [k2, n]) if k == k2 => (*m, *k, *n),
                _ => {
                    return Err(Error::ShapeMismatch {
                        op: "matmul",
                        left: a.shape().to_vec(),
                        right: b.shape().to_vec(),
                    })
                }
            };
            let mut out = vec![T::zero(); m * n];
            kernels::matmul_acc(a.as_slice(), b.as_slice(), m, k, n, &mut out);
            Tensor::new_unchecked(vec![m, n], out)
        }
        Conv2dSame => {
            let k = inputs[1];
            let dims = ConvDims::new(a.shape(), k.shape())?;
            let mut out = vec![T::zero(); a.len()];
            kernels::conv2d_same(dims, a.as_slice(), k.as_slice(), &mut out);
            Tensor::new_unchecked(a.shape().to_vec(), out)
        }
        Sum => Tensor::scalar(a.sum()),
        SumLeading => {
            let s = a.shape();
            if s.len() < 2 {
                return Err(Error::BadShape {
                    op: "sum_leading",
                    msg: "needs at least two axes",
                    shape: s.to_vec(),
                });
            }
            let r = a.len() / s[0];
            let mut out = vec![T::zero(); r];
            for chunk in a.as_slice().chunks(r) {
                kernels::axpy(T::one(), chunk, &mut out);
            }
            Tensor::new_unchecked(s[1..].to_vec(), out)
        }
        Tile(n) => {
            if *n == 0 {
                return Err(Error::invalid("tile needs at least one copy"));
            }
            let mut shape = vec![*n];
            shape.extend_from_slice(a.shape());
            let mut data = Vec::with_capacity(a.len() * n);
            for _ in 0..*n {
                data.extend_from_slice(a.as_slice());
            }
            Tensor::new_unchecked(shape, data)
        }
        Dot => Tensor::scalar(a.dot(inputs[1])?),
        Norm2 => Tensor::scalar(a.norm()),
        Square => a.map(|x| x * x),
        SqrtSmoothed(eps) => {
            let e2 = *eps * *eps;
            a.map(|x| (x + e2).sqrt())
        }
        Softplus => a.map(softplus),
        Sigmoid => a.map(sigmoid),
        Relu => a.map(|x| x.max(T::zero())),
        Step => a.map(|x| if x > T::zero() { T::one() } else { T::zero() }),
        Exp => a.map(|x| x.exp()),
        Log => {
            if let Some((index, &value)) =
                a.as_slice().iter().enumerate().find(|(_, v)| !(**v > T::zero()))
            {
                return Err(Error::Domain {
                    index,
                    value: value.as_f64(),
                });
            }
            a.map(|x| x.ln())
        }
        Reshape(shape) => a.reshape(shape.clone())?,
        Diff2d => {
            let (h, w) = image_dims("diff2d", a.shape())?;
            let mut out = vec![T::zero(); 2 * h * w];
            kernels::diff2d(h, w, a.as_slice(), &mut out);
            Tensor::new_unchecked(vec![2, h, w], out)
        }
        Diff2dAdjoint => {
            let (h, w) = match a.shape() {
                [2, h, w] => (*h, *w),
                s => {
                    return Err(Error::BadShape {
                        op: "diff2d_adjoint",
                        msg: "expected shape (2, h, w)",
                        shape: s.to_vec(),
                    })
                }
            };
            let mut out = vec![T::zero(); h * w];
            kernels::diff2d_adjoint_acc(h, w, a.as_slice(), &mut out);
            Tensor::new_unchecked(vec![h, w], out)
        }
        Concat => unreachable!(),
    };
    Ok(out)
}

/// Pushes the vector-Jacobian product of one recorded op into its inputs.
pub(super) fn backward<T: Scalar>(
    kind: &OpKind<T>,
    vals: &[&Tensor<T>],
    out: &Tensor<T>,
    g: &[T],
    sink: &mut GradSink<'_, T>,
) {
    use OpKind::*;
    let a = vals[0].as_slice();
    // Elementwise helper: grad_a[i] += f(i).
    macro_rules! each {
        ($slot:expr, |$i:ident| $e:expr) => {
            if sink.wants($slot) {
                let buf = sink.buf($slot);
                for $i in 0..buf.len() {
                    buf[$i] += $e;
                }
            }
        };
    }
    match kind {
        Add => {
            each!(0, |i| g[i]);
            each!(1, |i| g[i]);
        }
        Sub => {
            each!(0, |i| g[i]);
            each!(1, |i| -g[i]);
        }
        Mul => {
            let b = vals[1].as_slice();
            each!(0, |i| g[i] * b[i]);
            each!(1, |i| g[i] * a[i]);
        }
        Div => {
            let b = vals[1].as_slice();
            each!(0, |i| g[i] / b[i]);
            each!(1, |i| -g[i] * a[i] / (b[i] * b[i]));
        }
        Scale(c) => each!(0, |i| *c * g[i]),
        Offset(_) | Reshape(_) => each!(0, |i| g[i]),
        ScaleBy => {
            let s = vals[1].as_slice()[0];
            each!(0, |i| s * g[i]);
            if sink.wants(1) {
                sink.buf(1)[0] += kernels::dot(g, a);
            }
        }
        MatVec => {
            let x = vals[1].as_slice();
            let (m, n) = (vals[0].shape()[0], vals[0].shape()[1]);
            if sink.wants(0) {
                kernels::outer_acc(g, x, sink.buf(0));
            }
            if sink.wants(1) {
                kernels::matvec_t_acc(a, m, n, g, sink.buf(1));
            }
        }
        MatVecT => {
            let y = vals[1].as_slice();
            let (m, n) = (vals[0].shape()[0], vals[0].shape()[1]);
            if sink.wants(0) {
                kernels::outer_acc(y, g, sink.buf(0));
            }
            if sink.wants(1) {
                let buf = sink.buf(1);
                for (i, bi) in buf.iter_mut().enumerate().take(m) {
                    *bi += kernels::dot(&a[i * n..(i + 1) * n], g);
                }
            }
        }
        MatMul => {
            let b = vals[1].as_slice();
            let (m, k) = (vals[0].shape()[0], vals[0].shape()[1]);
            let n = vals[1].shape()[1];
            if sink.wants(0) {
                kernels::matmul_nt_acc(g, b, m, n, k, sink.buf(0));
            }
            if sink.wants(1) {
                kernels::matmul_tn_acc(a, g, m, k, n, sink.buf(1));
            }
        }
        Conv2dSame => {
            let k = vals[1].as_slice();
            let dims = ConvDims::new(vals[0].shape(), vals[1].shape()).expect("checked on forward");
            if sink.wants(0) {
                kernels::conv2d_same_adjoint_acc(dims, g, k, sink.buf(0));
            }
            if sink.wants(1) {
                kernels::conv2d_same_kernel_grad_acc(dims, g, a, sink.buf(1));
            }
        }
        Sum => each!(0, |_i| g[0]),
        SumLeading => {
            let r = g.len();
            each!(0, |i| g[i % r]);
        }
        Tile(n) => {
            if sink.wants(0) {
                let r = a.len();
                let buf = sink.buf(0);
                for c in 0..*n {
                    kernels::axpy(T::one(), &g[c * r..(c + 1) * r], buf);
                }
            }
        }
        Dot => {
            let b = vals[1].as_slice();
            each!(0, |i| g[0] * b[i]);
            each!(1, |i| g[0] * a[i]);
        }
        Norm2 => {
            let nrm = out.as_slice()[0];
            if nrm > T::zero() {
                each!(0, |i| g[0] * a[i] / nrm);
            }
        }
        Square => each!(0, |i| T::lit(2.0) * a[i] * g[i]),
        SqrtSmoothed(_) => {
            let y = out.as_slice();
            each!(0, |i| g[i] / (T::lit(2.0) * y[i]));
        }
        Softplus => each!(0, |i| g[i] * sigmoid(a[i])),
        Sigmoid => {
            let y = out.as_slice();
            each!(0, |i| g[i] * y[i] * (T::one() - y[i]));
        }
        Relu => each!(0, |i| if a[i] > T::zero() { g[i] } else { T::zero() }),
        Step => {}
        Exp => {
            let y = out.as_slice();
            each!(0, |i| g[i] * y[i]);
        }
        Log => each!(0, |i| g[i] / a[i]),
        Concat => {
            let mut offset = 0;
            for slot in 0..vals.len() {
                let len = vals[slot].len();
                if sink.wants(slot) {
                    kernels::axpy(T::one(), &g[offset..offset + len], sink.buf(slot));
                }
                offset += len;
            }
        }
        Diff2d => {
            let (h, w) = (vals[0].shape()[0], vals[0].shape()[1]);
            if sink.wants(0) {
                kernels::diff2d_adjoint_acc(h, w, g, sink.buf(0));
            }
        }
        Diff2dAdjoint => {
            let (h, w) = (vals[0].shape()[1], vals[0].shape()[2]);
            if sink.wants(0) {
                let mut d = vec![T::zero(); 2 * h * w];
                kernels::diff2d(h, w, g, &mut d);
                kernels::axpy(T::one(), &d, sink.buf(0));
            }
        }
    }
}
