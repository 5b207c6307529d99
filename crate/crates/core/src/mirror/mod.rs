//! Mirror potentials, their gradients and the divergences built from them.

mod icnn;

pub use icnn::{Activation, BoundIcnn, Icnn, IcnnConfig};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// A strongly convex potential `M` together with a way to evaluate `∇M` and
/// (an approximation of) `(∇M)⁻¹`.
#[derive(Clone, Debug, PartialEq)]
pub enum MirrorMap<T> {
    /// `½‖x‖²`; mirror descent reduces to gradient descent.
    Quadratic,
    /// `Σ xᵢ log xᵢ` on the positive orthant. The inverse map refuses dual
    /// points whose exponent would exceed `exp_cap`.
    NegEntropy { exp_cap: T },
    /// A learned pair: `forward` is `M_θ`, `inverse` is `M*_ϑ`, trained so
    /// that `∇M*_ϑ ≈ (∇M_θ)⁻¹`.
    Learned { forward: Icnn<T>, inverse: Icnn<T> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PotentialKind {
    Quadratic,
    NegEntropy,
    Learned,
}

impl<T: Scalar> MirrorMap<T> {
    /// Negative entropy with the largest exponent the scalar type survives.
    pub fn neg_entropy() -> Self {
        MirrorMap::NegEntropy {
            exp_cap: T::max_value().ln(),
        }
    }

    pub fn kind(&self) -> PotentialKind {
        match self {
            MirrorMap::Quadratic => PotentialKind::Quadratic,
            MirrorMap::NegEntropy { .. } => PotentialKind::NegEntropy,
            MirrorMap::Learned { .. } => PotentialKind::Learned,
        }
    }

    pub fn potential_value(&self, x: &Tensor<T>) -> Result<T> {
        match self {
            MirrorMap::Quadratic => Ok(T::lit(0.5) * x.dot(x)?),
            MirrorMap::NegEntropy { .. } => {
                check_positive(x)?;
                Ok(x.as_slice().iter().map(|&v| v * v.ln()).sum())
            }
            MirrorMap::Learned { forward, .. } => forward.value(x),
        }
    }

    /// `∇M(x)`.
    pub fn mirror_map(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            MirrorMap::Quadratic => Ok(x.clone()),
            MirrorMap::NegEntropy { .. } => {
                check_positive(x)?;
                Ok(x.map(|v| T::one() + v.ln()))
            }
            MirrorMap::Learned { forward, .. } => forward.gradient(x),
        }
    }

    /// `(∇M)⁻¹(y)`, exact for the closed forms and `∇M*` for learned maps.
    pub fn inverse_mirror_map(&self, y: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            MirrorMap::Quadratic => Ok(y.clone()),
            MirrorMap::NegEntropy { exp_cap } => {
                for (index, &v) in y.as_slice().iter().enumerate() {
                    let e = v - T::one();
                    if !e.is_finite() || e > *exp_cap {
                        return Err(Error::Overflow {
                            index,
                            value: v.as_f64(),
                            cap: exp_cap.as_f64(),
                        });
                    }
                }
                Ok(y.map(|v| (v - T::one()).exp()))
            }
            MirrorMap::Learned { inverse, .. } => inverse.gradient(y),
        }
    }

    /// `B_M(x, y) = M(x) - M(y) - ⟨∇M(y), x - y⟩`.
    pub fn bregman_divergence(&self, x: &Tensor<T>, y: &Tensor<T>) -> Result<T> {
        x.expect_same_shape(y, "bregman_divergence")?;
        let grad = self.mirror_map(y)?;
        let diff = x.sub(y)?;
        Ok(self.potential_value(x)? - self.potential_value(y)? - grad.dot(&diff)?)
    }

    /// `‖(∇M)⁻¹(∇M(x)) - x‖`.
    pub fn forward_backward_error(&self, x: &Tensor<T>) -> Result<T> {
        let back = self.inverse_mirror_map(&self.mirror_map(x)?)?;
        Ok(back.sub(x)?.norm())
    }

    /// Puts the map on `tape`. The returned variables are the trainable
    /// leaves: forward parameters first, then inverse parameters.
    pub fn bind(&self, tape: &Tape<T>) -> (BoundMirror<T>, Vec<Var>) {
        match self {
            MirrorMap::Quadratic => (BoundMirror::Quadratic, Vec::new()),
            MirrorMap::NegEntropy { exp_cap } => (
                BoundMirror::NegEntropy { exp_cap: *exp_cap },
                Vec::new(),
            ),
            MirrorMap::Learned { forward, inverse } => {
                let (f, mut leaves) = forward.bind(tape);
                let (i, inv_leaves) = inverse.bind(tape);
                leaves.extend(inv_leaves);
                (
                    BoundMirror::Learned {
                        forward: f,
                        inverse: i,
                    },
                    leaves,
                )
            }
        }
    }
}

fn check_positive<T: Scalar>(x: &Tensor<T>) -> Result<()> {
    match x.as_slice().iter().position(|&v| !(v > T::zero())) {
        Some(index) => Err(Error::Domain {
            index,
            value: x.as_slice()[index].as_f64(),
        }),
        None => Ok(()),
    }
}

/// A [`MirrorMap`] whose parameters are tape leaves.
#[derive(Clone, Debug)]
pub enum BoundMirror<T> {
    Quadratic,
    NegEntropy { exp_cap: T },
    Learned {
        forward: BoundIcnn<T>,
        inverse: BoundIcnn<T>,
    },
}

impl<T: Scalar> BoundMirror<T> {
    pub fn mirror_map_on(&self, tape: &Tape<T>, x: Var) -> Result<Var> {
        match self {
            BoundMirror::Quadratic => Ok(x),
            BoundMirror::NegEntropy { .. } => {
                let l = tape.log(x)?;
                tape.offset(l, T::one())
            }
            BoundMirror::Learned { forward, .. } => forward.gradient_on(tape, x),
        }
    }

    pub fn inverse_mirror_map_on(&self, tape: &Tape<T>, y: Var) -> Result<Var> {
        match self {
            BoundMirror::Quadratic => Ok(y),
            BoundMirror::NegEntropy { exp_cap } => {
                let e = tape.offset(y, -T::one())?;
                if let Some((index, &v)) = tape
                    .value(e)
                    .as_slice()
                    .iter()
                    .enumerate()
                    .find(|(_, v)| !v.is_finite() || **v > *exp_cap)
                {
                    return Err(Error::Overflow {
                        index,
                        value: (v + T::one()).as_f64(),
                        cap: exp_cap.as_f64(),
                    });
                }
                tape.exp(e)
            }
            BoundMirror::Learned { inverse, .. } => inverse.gradient_on(tape, y),
        }
    }

    pub fn potential_on(&self, tape: &Tape<T>, x: Var) -> Result<Var> {
        match self {
            BoundMirror::Quadratic => {
                let xx = tape.dot(x, x)?;
                tape.scale(xx, T::lit(0.5))
            }
            BoundMirror::NegEntropy { .. } => {
                let l = tape.log(x)?;
                let xl = tape.mul(x, l)?;
                tape.sum(xl)
            }
            BoundMirror::Learned { forward, .. } => forward.value_on(tape, x),
        }
    }
}

#[cfg(test)]
mod tests;
