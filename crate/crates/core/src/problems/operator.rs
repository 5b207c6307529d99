use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::kernels::{self, ConvDims};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// The linear forward model `A` of a data term `‖Ax − y‖²`.
#[derive(Clone, Debug, PartialEq)]
pub enum ForwardOperator<T> {
    Identity,
    /// Zero-padded "same" convolution with the given kernel.
    Blur(Tensor<T>),
}

fn flipped<T: Scalar>(k: &Tensor<T>) -> Tensor<T> {
    let mut data = k.as_slice().to_vec();
    data.reverse();
    Tensor::new_unchecked(k.shape().to_vec(), data)
}

impl<T: Scalar> ForwardOperator<T> {
    pub fn apply(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            ForwardOperator::Identity => Ok(x.clone()),
            ForwardOperator::Blur(k) => {
                let dims = ConvDims::new(x.shape(), k.shape())?;
                let mut out = vec![T::zero(); x.len()];
                kernels::conv2d_same(dims, x.as_slice(), k.as_slice(), &mut out);
                Ok(Tensor::new_unchecked(x.shape().to_vec(), out))
            }
        }
    }

    pub fn adjoint(&self, z: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            ForwardOperator::Identity => Ok(z.clone()),
            ForwardOperator::Blur(k) => {
                let dims = ConvDims::new(z.shape(), k.shape())?;
                let mut out = vec![T::zero(); z.len()];
                kernels::conv2d_same_adjoint_acc(dims, z.as_slice(), k.as_slice(), &mut out);
                Ok(Tensor::new_unchecked(z.shape().to_vec(), out))
            }
        }
    }

    pub fn apply_on(&self, tape: &Tape<T>, x: Var) -> Result<Var> {
        match self {
            ForwardOperator::Identity => Ok(x),
            ForwardOperator::Blur(k) => {
                let kv = tape.leaf(k.clone());
                tape.conv2d_same(x, kv)
            }
        }
    }

    /// The adjoint is convolution with the flipped kernel.
    pub fn adjoint_on(&self, tape: &Tape<T>, z: Var) -> Result<Var> {
        match self {
            ForwardOperator::Identity => Ok(z),
            ForwardOperator::Blur(k) => {
                let kv = tape.leaf(flipped(k));
                tape.conv2d_same(z, kv)
            }
        }
    }

    /// Upper bound on `‖A‖₂` (Young's inequality for the blur).
    pub fn norm_bound(&self) -> T {
        match self {
            ForwardOperator::Identity => T::one(),
            ForwardOperator::Blur(k) => k.as_slice().iter().map(|v| v.abs()).sum(),
        }
    }
}
