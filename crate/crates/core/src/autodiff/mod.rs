//! Reverse-mode differentiation over [`Tensor`]s.
//!
//! A [`Tape`] records every operation applied to its variables. Calling
//! [`Tape::gradient`] on a scalar node walks the records backwards and returns
//! exact vector-Jacobian products. Tapes are cheap and meant to be rebuilt for
//! every evaluation; nothing on a tape is ever mutated after it is recorded.
//!
//! Gradients of the mirror maps that are themselves differentiated (during
//! unrolled training) are written out explicitly as forward expressions, so
//! only first-order reverse mode is ever needed.

mod check;
mod ops;

pub use check::{finite_diff_check, FdReport};
pub use ops::{forward_op, OpKind};

use std::cell::RefCell;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

struct Node<T> {
    op: Option<(OpKind<T>, Vec<usize>)>,
    value: Tensor<T>,
}

pub struct Tape<T> {
    nodes: RefCell<Vec<Node<T>>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Registers an input. Leaves are the only nodes gradients can be taken
    /// with respect to.
    pub fn leaf(&self, value: Tensor<T>) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { op: None, value });
        Var(nodes.len() - 1)
    }

    pub fn scalar(&self, v: T) -> Var {
        self.leaf(Tensor::scalar(v))
    }

    pub fn value(&self, v: Var) -> Tensor<T> {
        self.nodes.borrow()[v.0].value.clone()
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.nodes.borrow()[v.0].value.shape().to_vec()
    }

    /// Applies `kind` to `inputs` and records the result.
    pub fn apply(&self, kind: OpKind<T>, inputs: &[Var]) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            let mut vals = Vec::with_capacity(inputs.len());
            for v in inputs {
                let node = nodes.get(v.0).ok_or_else(|| {
                    Error::invalid(format!("variable {} does not belong to this tape", v.0))
                })?;
                vals.push(&node.value);
            }
            forward_op(&kind, &vals)?
        };
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            op: Some((kind, inputs.iter().map(|v| v.0).collect())),
            value,
        });
        Ok(Var(nodes.len() - 1))
    }

    /// Reverse-mode gradient of the scalar `output` with respect to each of
    /// `wrt`. Variables `output` does not depend on get zero gradients.
    pub fn gradient(&self, output: Var, wrt: &[Var]) -> Result<Vec<Tensor<T>>> {
        let nodes = self.nodes.borrow();
        let out = output.0;
        let out_node = nodes
            .get(out)
            .ok_or_else(|| Error::invalid("output does not belong to this tape"))?;
        if !out_node.value.is_scalar() {
            return Err(Error::NonScalarOutput(out_node.value.shape().to_vec()));
        }

        // Only propagate into nodes that lead back to a requested variable.
        let mut live = vec![false; out + 1];
        for v in wrt {
            if v.0 <= out {
                live[v.0] = true;
            }
        }
        for i in 0..=out {
            if let Some((_, inputs)) = &nodes[i].op {
                if inputs.iter().any(|&j| live[j]) {
                    live[i] = true;
                }
            }
        }

        let mut grads: Vec<Option<Vec<T>>> = vec![None; out + 1];
        grads[out] = Some(vec![T::one()]);
        for i in (0..=out).rev() {
            let Some((kind, inputs)) = &nodes[i].op else {
                continue;
            };
            if !live[i] {
                continue;
            }
            let Some(g) = grads[i].take() else {
                continue;
            };
            let vals: Vec<&Tensor<T>> = inputs.iter().map(|&j| &nodes[j].value).collect();
            let mut sink = GradSink {
                grads: &mut grads,
                live: &live,
                inputs,
                vals: &vals,
            };
            ops::backward(kind, &vals, &nodes[i].value, &g, &mut sink);
            if wrt.iter().any(|v| v.0 == i) {
                grads[i] = Some(g);
            }
        }

        Ok(wrt
            .iter()
            .map(|v| {
                let shape = nodes[v.0].value.shape().to_vec();
                match grads.get(v.0).and_then(|g| g.clone()) {
                    Some(g) => Tensor::new_unchecked(shape, g),
                    None => Tensor::zeros(shape),
                }
            })
            .collect())
    }

    /// Value and gradients in one call.
    pub fn value_and_gradient(&self, output: Var, wrt: &[Var]) -> Result<(T, Vec<Tensor<T>>)> {
        let grads = self.gradient(output, wrt)?;
        Ok((self.value(output).item()?, grads))
    }
}

/// Accumulates contributions into input gradients during the backward pass.
pub(crate) struct GradSink<'a, T> {
    grads: &'a mut [Option<Vec<T>>],
    live: &'a [bool],
    inputs: &'a [usize],
    vals: &'a [&'a Tensor<T>],
}

impl<T: Scalar> GradSink<'_, T> {
    /// Whether input slot `slot` needs a gradient.
    pub(crate) fn wants(&self, slot: usize) -> bool {
        self.live[self.inputs[slot]]
    }

    /// Mutable gradient buffer of input slot `slot`, zero-initialised.
    pub(crate) fn buf(&mut self, slot: usize) -> &mut [T] {
        let idx = self.inputs[slot];
        let len = self.vals[slot].len();
        self.grads[idx].get_or_insert_with(|| vec![T::zero(); len])
    }
}

// Convenience constructors for the common op kinds.
macro_rules! unary {
    ($($name:ident => $kind:ident),* $(,)?) => {
        impl<T: Scalar> Tape<T> {
            $(pub fn $name(&self, a: Var) -> Result<Var> { self.apply(OpKind::$kind, &[a]) })*
        }
    };
}

macro_rules! binary {
    ($($name:ident => $kind:ident),* $(,)?) => {
        impl<T: Scalar> Tape<T> {
            $(pub fn $name(&self, a: Var, b: Var) -> Result<Var> { self.apply(OpKind::$kind, &[a, b]) })*
        }
    };
}

unary! {
    sum => Sum,
    sum_leading => SumLeading,
    norm2 => Norm2,
    square => Square,
    softplus => Softplus,
    sigmoid => Sigmoid,
    relu => Relu,
    step => Step,
    exp => Exp,
    log => Log,
    diff2d => Diff2d,
    diff2d_adjoint => Diff2dAdjoint,
}

binary! {
    add => Add,
    sub => Sub,
    mul => Mul,
    div => Div,
    scale_by => ScaleBy,
    matvec => MatVec,
    matvec_t => MatVecT,
    matmul => MatMul,
    conv2d_same => Conv2dSame,
    dot => Dot,
}

impl<T: Scalar> Tape<T> {
    pub fn scale(&self, a: Var, c: T) -> Result<Var> {
        self.apply(OpKind::Scale(c), &[a])
    }

    pub fn offset(&self, a: Var, c: T) -> Result<Var> {
        self.apply(OpKind::Offset(c), &[a])
    }

    pub fn sqrt_smoothed(&self, a: Var, eps: T) -> Result<Var> {
        self.apply(OpKind::SqrtSmoothed(eps), &[a])
    }

    pub fn tile(&self, a: Var, copies: usize) -> Result<Var> {
        self.apply(OpKind::Tile(copies), &[a])
    }

    pub fn reshape(&self, a: Var, shape: Vec<usize>) -> Result<Var> {
        self.apply(OpKind::Reshape(shape), &[a])
    }

    pub fn concat(&self, parts: &[Var]) -> Result<Var> {
        self.apply(OpKind::Concat, parts)
    }

    /// `a - c * b` for a scalar node `c`.
    pub fn sub_scaled(&self, a: Var, c: Var, b: Var) -> Result<Var> {
        let cb = self.scale_by(b, c)?;
        self.sub(a, cb)
    }
}

#[cfg(test)]
mod tests;
