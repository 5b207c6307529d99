use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Adaptive moment estimation over a fixed list of parameter tensors, with
/// one learning rate per tensor.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub lr: Vec<T>,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    t: i32,
}

impl<T: Scalar> Adam<T> {
    pub fn new(lr: T, params: &[Tensor<T>]) -> Self {
        Self {
            lr: vec![lr; params.len()],
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
            m: params.iter().map(|p| vec![T::zero(); p.len()]).collect(),
            v: params.iter().map(|p| vec![T::zero(); p.len()]).collect(),
            t: 0,
        }
    }

    /// Uses `lr` for tensors `first..`.
    pub fn with_lr_from(mut self, first: usize, lr: T) -> Self {
        for l in self.lr.iter_mut().skip(first) {
            *l = lr;
        }
        self
    }

    pub fn steps_taken(&self) -> i32 {
        self.t
    }

    /// Returns the updated parameters.
    pub fn step(&mut self, params: &[Tensor<T>], grads: &[Tensor<T>]) -> Result<Vec<Tensor<T>>> {
        self.t += 1;
        let one = T::one();
        let c1 = one - self.beta1.powi(self.t);
        let c2 = one - self.beta2.powi(self.t);
        params
            .iter()
            .zip(grads)
            .enumerate()
            .map(|(i, (p, g))| {
                p.expect_same_shape(g, "adam")?;
                let (m, v) = (&mut self.m[i], &mut self.v[i]);
                let lr = self.lr[i];
                let data = p
                    .as_slice()
                    .iter()
                    .zip(g.as_slice())
                    .enumerate()
                    .map(|(j, (&p, &g))| {
                        m[j] = self.beta1 * m[j] + (one - self.beta1) * g;
                        v[j] = self.beta2 * v[j] + (one - self.beta2) * g * g;
                        let mh = m[j] / c1;
                        let vh = v[j] / c2;
                        p - lr * mh / (vh.sqrt() + self.eps)
                    })
                    .collect();
                Tensor::from_vec(p.shape().to_vec(), data)
            })
            .collect()
    }
}
