use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::mirror::{Activation, IcnnConfig};
use crate::optim::{AmdParams, Method};

/// Architecture of both networks of a learned pair. The input dimension
/// comes from the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IcnnSettings {
    pub hidden_layers: usize,
    /// Hidden width; `None` means twice the input dimension.
    pub width: Option<usize>,
    pub mu: f64,
    pub activation: Activation,
    pub init_scale: f64,
}

impl Default for IcnnSettings {
    fn default() -> Self {
        Self {
            hidden_layers: 2,
            width: None,
            mu: 0.1,
            activation: Activation::Softplus,
            init_scale: 0.01,
        }
    }
}

impl IcnnSettings {
    pub fn for_dim(&self, input_dim: usize) -> IcnnConfig {
        IcnnConfig {
            input_dim,
            hidden_layers: self.hidden_layers,
            width: self.width.unwrap_or(2 * input_dim),
            mu: self.mu,
            activation: self.activation,
            init_scale: self.init_scale,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// `lmd` or `lamd`.
    pub method: Method,
    /// Unroll depth `N`.
    pub unroll: usize,
    /// Objective weights `r_k`; default `1/N` each.
    pub f_weights: Option<Vec<f64>>,
    /// Forward-backward weights `s_k`; default `300/N` each.
    pub fb_weights: Option<Vec<f64>>,
    /// Also penalise the forward-backward error at the clean image, with
    /// weight `s_N`.
    pub fb_at_clean: bool,
    pub batch_size: usize,
    pub epochs: usize,
    pub meta_step: f64,
    /// Meta-step for the raw step parameters. Kept separate because
    /// `t = softplus(u)` moves by only `t·Δu` per update.
    pub step_meta_step: f64,
    pub seed: u64,
    /// Initial value of every learned step.
    pub initial_step: f64,
    pub icnn: IcnnSettings,
    pub amd: AmdParams,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: Method::Lamd,
            unroll: 10,
            f_weights: None,
            fb_weights: None,
            fb_at_clean: true,
            batch_size: 8,
            epochs: 50,
            meta_step: 1e-4,
            step_meta_step: 1e-2,
            seed: 0,
            initial_step: 0.05,
            icnn: IcnnSettings::default(),
            amd: AmdParams::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !matches!(self.method, Method::Lmd | Method::Lamd) {
            return bad(format!("training method must be lmd or lamd, got {}", self.method));
        }
        if self.unroll == 0 {
            return bad("unroll depth must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.meta_step > 0.0) {
            return bad("meta_step must be positive".into());
        }
        if !(self.step_meta_step > 0.0) {
            return bad("step_meta_step must be positive".into());
        }
        if !(self.initial_step > 0.0) {
            return bad("initial_step must be positive".into());
        }
        let (f, fb) = self.weights();
        for (name, w) in [("f_weights", &f), ("fb_weights", &fb)] {
            if w.len() != self.unroll {
                return bad(format!("{name} needs {} entries, got {}", self.unroll, w.len()));
            }
            if w.iter().any(|v| !(*v >= 0.0)) {
                return bad(format!("{name} must be nonnegative"));
            }
        }
        if f.iter().chain(&fb).all(|v| *v == 0.0) {
            return bad("loss weights are all zero".into());
        }
        self.amd.validate()?;
        self.icnn.for_dim(1).validate()
    }

    /// Resolved `(r_k, s_k)`.
    pub fn weights(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.unroll.max(1) as f64;
        let f = self
            .f_weights
            .clone()
            .unwrap_or_else(|| vec![1.0 / n; self.unroll]);
        let fb = self
            .fb_weights
            .clone()
            .unwrap_or_else(|| vec![300.0 / n; self.unroll]);
        (f, fb)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}
