//! Input-convex network potentials.
//!
//! The potential is
//!
//! ```text
//! z₀ = σ(W₀ˣ x + b₀)
//! zⱼ = σ(Wⱼᶻ zⱼ₋₁ + Wⱼˣ x + bⱼ)          j = 1..L-1
//! M(x) = wᶻ·z_{L-1} + wˣ·x + b + ½(μ + q)‖x‖²
//! ```
//!
//! with `σ` convex and nondecreasing, every `Wⱼᶻ`, `wᶻ` and `q` entrywise
//! nonnegative. That makes `M` convex, and the `μ` term makes it
//! `μ`-strongly convex. `q` is a trainable quadratic weight; starting it at
//! `1 - μ` puts the initial mirror map close to the identity.
//!
//! The mirror map `∇M` is built as an explicit forward expression so the
//! tape can differentiate it with respect to the weights during training.

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Softplus,
    Relu,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Softplus => "softplus",
            Activation::Relu => "relu",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IcnnConfig {
    pub input_dim: usize,
    pub hidden_layers: usize,
    pub width: usize,
    /// Strong-convexity floor.
    pub mu: f64,
    pub activation: Activation,
    /// Multiplier on the fan-in scaled random weights.
    pub init_scale: f64,
}

impl IcnnConfig {
    pub fn new(input_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_layers: 2,
            width: 32,
            mu: 0.1,
            activation: Activation::Softplus,
            init_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.width == 0 || self.hidden_layers == 0 {
            return Err(Error::Config(
                "icnn input_dim, width and hidden_layers must be positive".into(),
            ));
        }
        if !(self.mu > 0.0) {
            return Err(Error::Config("icnn mu must be positive".into()));
        }
        if !(self.init_scale >= 0.0) {
            return Err(Error::Config("icnn init_scale must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Layer<T> {
    /// Absent on the first layer.
    wz: Option<Tensor<T>>,
    wx: Tensor<T>,
    b: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Icnn<T> {
    config: IcnnConfig,
    layers: Vec<Layer<T>>,
    out_wz: Tensor<T>,
    out_wx: Tensor<T>,
    out_b: Tensor<T>,
    quad: Tensor<T>,
}

/// An [`Icnn`] whose parameters live on a tape.
#[derive(Clone, Debug)]
pub struct BoundIcnn<T> {
    layers: Vec<(Option<Var>, Var, Var)>,
    out_wz: Var,
    out_wx: Var,
    out_b: Var,
    quad: Var,
    mu: T,
    activation: Activation,
    input_dim: usize,
}

fn gaussian<T: Scalar, R: Rng>(rng: &mut R, shape: Vec<usize>, std: f64, abs: bool) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v: f64 = StandardNormal.sample(rng);
            T::lit(if abs { v.abs() } else { v } * std)
        })
        .collect();
    Tensor::new_unchecked(shape, data)
}

impl<T: Scalar> Icnn<T> {
    /// Random fan-in scaled weights; constrained ones are folded to be
    /// nonnegative.
    pub fn new<R: Rng>(config: IcnnConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let (d, w, s) = (config.input_dim, config.width, config.init_scale);
        let sx = s / (d as f64).sqrt();
        let sz = s / (w as f64).sqrt();
        let layers = (0..config.hidden_layers)
            .map(|j| Layer {
                wz: (j > 0).then(|| gaussian(rng, vec![w, w], sz, true)),
                wx: gaussian(rng, vec![w, d], sx, false),
                b: Tensor::zeros(vec![w]),
            })
            .collect();
        let out_wz = gaussian(rng, vec![w], sz, true);
        let out_wx = gaussian(rng, vec![d], sx, false);
        let quad = Tensor::scalar(T::lit((1.0 - config.mu).max(0.0)));
        Ok(Self {
            config,
            layers,
            out_wz,
            out_wx,
            out_b: Tensor::scalar(T::zero()),
            quad,
        })
    }

    /// A network whose weights are all zero: `M(x) = const + ½(μ+q)‖x‖²`.
    /// With `q = 1 - μ` its mirror map is exactly the identity.
    pub fn quadratic(config: IcnnConfig) -> Result<Self> {
        let mut net = Self::new(
            IcnnConfig {
                init_scale: 0.0,
                ..config
            },
            &mut rand_chacha::ChaCha8Rng::seed_from_u64(0),
        )?;
        net.config.init_scale = config.init_scale;
        Ok(net)
    }

    pub fn config(&self) -> &IcnnConfig {
        &self.config
    }

    /// Parameter names in the canonical order used everywhere else.
    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (j, layer) in self.layers.iter().enumerate() {
            if layer.wz.is_some() {
                names.push(format!("layer{j}.wz"));
            }
            names.push(format!("layer{j}.wx"));
            names.push(format!("layer{j}.b"));
        }
        names.extend(["out.wz", "out.wx", "out.b", "quad"].map(String::from));
        names
    }

    /// Which parameters must stay entrywise nonnegative.
    pub fn constrained_mask(&self) -> Vec<bool> {
        self.param_names()
            .iter()
            .map(|n| n.ends_with(".wz") || n == "quad")
            .collect()
    }

    pub fn params(&self) -> Vec<Tensor<T>> {
        let mut out = Vec::new();
        for layer in &self.layers {
            if let Some(wz) = &layer.wz {
                out.push(wz.clone());
            }
            out.push(layer.wx.clone());
            out.push(layer.b.clone());
        }
        out.extend([
            self.out_wz.clone(),
            self.out_wx.clone(),
            self.out_b.clone(),
            self.quad.clone(),
        ]);
        out
    }

    /// Replaces the parameters, in [`Icnn::param_names`] order.
    pub fn set_params(&mut self, params: Vec<Tensor<T>>) -> Result<()> {
        let current = self.params();
        if params.len() != current.len() {
            return Err(Error::invalid(format!(
                "icnn expects {} parameter tensors, got {}",
                current.len(),
                params.len()
            )));
        }
        for (new, old) in params.iter().zip(&current) {
            new.expect_same_shape(old, "icnn parameter")?;
        }
        let mut it = params.into_iter();
        for layer in &mut self.layers {
            if layer.wz.is_some() {
                layer.wz = it.next();
            }
            layer.wx = it.next().expect("length checked");
            layer.b = it.next().expect("length checked");
        }
        self.out_wz = it.next().expect("length checked");
        self.out_wx = it.next().expect("length checked");
        self.out_b = it.next().expect("length checked");
        self.quad = it.next().expect("length checked");
        Ok(())
    }

    /// Clamps every constrained parameter at zero.
    pub fn project(&mut self) {
        let mask = self.constrained_mask();
        let params = self
            .params()
            .into_iter()
            .zip(mask)
            .map(|(p, c)| if c { p.map(|v| v.max(T::zero())) } else { p })
            .collect();
        self.set_params(params).expect("same shapes");
    }

    /// Smallest entry over all constrained parameters.
    pub fn min_constrained_weight(&self) -> T {
        self.params()
            .iter()
            .zip(self.constrained_mask())
            .filter(|(_, c)| *c)
            .map(|(p, _)| p.min())
            .fold(T::infinity(), T::min)
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(Tensor::len).sum()
    }

    /// Puts the parameters on `tape`. Returns the bound network and the leaf
    /// variables in [`Icnn::param_names`] order.
    pub fn bind(&self, tape: &Tape<T>) -> (BoundIcnn<T>, Vec<Var>) {
        let mut leaves = Vec::new();
        let mut leaf = |t: &Tensor<T>| {
            let v = tape.leaf(t.clone());
            leaves.push(v);
            v
        };
        let layers = self
            .layers
            .iter()
            .map(|l| (l.wz.as_ref().map(&mut leaf), leaf(&l.wx), leaf(&l.b)))
            .collect();
        let bound = BoundIcnn {
            layers,
            out_wz: leaf(&self.out_wz),
            out_wx: leaf(&self.out_wx),
            out_b: leaf(&self.out_b),
            quad: leaf(&self.quad),
            mu: T::lit(self.config.mu),
            activation: self.config.activation,
            input_dim: self.config.input_dim,
        };
        (bound, leaves)
    }

    pub fn value(&self, x: &Tensor<T>) -> Result<T> {
        let tape = Tape::new();
        let (net, _) = self.bind(&tape);
        let xv = tape.leaf(x.clone());
        let out = net.value_on(&tape, xv)?;
        tape.value(out).item()
    }

    pub fn gradient(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let tape = Tape::new();
        let (net, _) = self.bind(&tape);
        let xv = tape.leaf(x.clone());
        let out = net.gradient_on(&tape, xv)?;
        Ok(tape.value(out))
    }
}

impl<T: Scalar> BoundIcnn<T> {
    fn flatten(&self, tape: &Tape<T>, x: Var) -> Result<(Var, Vec<usize>)> {
        let shape = tape.shape(x);
        let n: usize = shape.iter().product();
        if n != self.input_dim {
            return Err(Error::ShapeMismatch {
                op: "icnn input",
                left: vec![self.input_dim],
                right: shape,
            });
        }
        let flat = if shape.len() == 1 {
            x
        } else {
            tape.reshape(x, vec![n])?
        };
        Ok((flat, shape))
    }

    fn activate(&self, tape: &Tape<T>, a: Var) -> Result<Var> {
        match self.activation {
            Activation::Softplus => tape.softplus(a),
            Activation::Relu => tape.relu(a),
        }
    }

    fn activation_slope(&self, tape: &Tape<T>, a: Var) -> Result<Var> {
        match self.activation {
            Activation::Softplus => tape.sigmoid(a),
            Activation::Relu => tape.step(a),
        }
    }

    /// Pre-activations of every hidden layer.
    fn preactivations(&self, tape: &Tape<T>, x: Var) -> Result<Vec<Var>> {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut z: Option<Var> = None;
        for &(wz, wx, b) in &self.layers {
            let mut a = tape.matvec(wx, x)?;
            if let (Some(wz), Some(z)) = (wz, z) {
                let zz = tape.matvec(wz, z)?;
                a = tape.add(a, zz)?;
            }
            a = tape.add(a, b)?;
            z = Some(self.activate(tape, a)?);
            pre.push(a);
        }
        Ok(pre)
    }

    /// `μ + q` as a scalar node.
    fn quad_coeff(&self, tape: &Tape<T>) -> Result<Var> {
        tape.offset(self.quad, self.mu)
    }

    pub fn value_on(&self, tape: &Tape<T>, x: Var) -> Result<Var> {
        let (x, _) = self.flatten(tape, x)?;
        let pre = self.preactivations(tape, x)?;
        let last = self.activate(tape, *pre.last().expect("at least one layer"))?;
        let a = tape.dot(self.out_wz, last)?;
        let b = tape.dot(self.out_wx, x)?;
        let xx = tape.dot(x, x)?;
        let c = self.quad_coeff(tape)?;
        let half = tape.scale(c, T::lit(0.5))?;
        let q = tape.scale_by(xx, half)?;
        let s = tape.add(a, b)?;
        let s = tape.add(s, self.out_b)?;
        tape.add(s, q)
    }

    /// `∇M(x)` as a differentiable expression, shaped like `x`.
    pub fn gradient_on(&self, tape: &Tape<T>, x: Var) -> Result<Var> {
        let (xf, shape) = self.flatten(tape, x)?;
        let pre = self.preactivations(tape, xf)?;
        let last = pre.len() - 1;
        let slope = self.activation_slope(tape, pre[last])?;
        let mut delta = tape.mul(self.out_wz, slope)?;
        let mut grad = tape.matvec_t(self.layers[last].1, delta)?;
        for j in (1..=last).rev() {
            let wz = self.layers[j].0.expect("hidden layers past the first have wz");
            let back = tape.matvec_t(wz, delta)?;
            let slope = self.activation_slope(tape, pre[j - 1])?;
            delta = tape.mul(back, slope)?;
            let gx = tape.matvec_t(self.layers[j - 1].1, delta)?;
            grad = tape.add(grad, gx)?;
        }
        grad = tape.add(grad, self.out_wx)?;
        let c = self.quad_coeff(tape)?;
        let cx = tape.scale_by(xf, c)?;
        grad = tape.add(grad, cx)?;
        if shape.len() == 1 {
            Ok(grad)
        } else {
            tape.reshape(grad, shape)
        }
    }
}
