//! Learned optimizers and their JSON checkpoint form.
//!
//! A checkpoint is one JSON document: metadata (format tag, potential kind,
//! training method, runner, config hash, network configuration, momentum
//! parameters), the learned steps, and an object mapping every parameter
//! name (`forward.layer0.wx`, `inverse.quad`, ...) to its shape and
//! row-major values. Floats are written in shortest round-trip form, so
//! save → load → save is byte-identical.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mirror::{Icnn, IcnnConfig, MirrorMap};
use crate::optim::{AmdParams, ExtensionRule, Method, StepSchedule};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const FORMAT: &str = "lamd-checkpoint/1";

/// A trained pair of networks plus learned steps, installed in a runner.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub forward: Icnn<T>,
    pub inverse: Icnn<T>,
    pub steps: Vec<T>,
    /// The method the maps and steps were trained with.
    pub trained_with: Method,
    /// The method they are run with.
    pub runner: Method,
    pub amd: AmdParams,
    pub config_hash: String,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn mirror(&self) -> MirrorMap<T> {
        MirrorMap::Learned {
            forward: self.forward.clone(),
            inverse: self.inverse.clone(),
        }
    }

    pub fn schedule(&self, rule: ExtensionRule) -> Result<StepSchedule<T>> {
        StepSchedule::new(self.steps.clone(), rule)
    }

    /// `LMD`, `LAMD`, or `LMD Transfer` / `LAMD Transfer` when the runner
    /// differs from the training method.
    pub fn label(&self) -> String {
        let base = self.runner.name().to_uppercase();
        if self.runner == self.trained_with {
            base
        } else {
            format!("{base} Transfer")
        }
    }

    /// Installs the maps and steps into `target`'s runner.
    pub fn swap_maps(&self, target: Method) -> Result<Self> {
        if !matches!(target, Method::Lmd | Method::Lamd) {
            return Err(Error::invalid(format!(
                "learned maps run with lmd or lamd, not {target}"
            )));
        }
        Ok(Self {
            runner: target,
            ..self.clone()
        })
    }

    /// Toggles between the two runners; applying it twice is the identity.
    pub fn swapped(&self) -> Self {
        let target = match self.runner {
            Method::Lamd => Method::Lmd,
            _ => Method::Lamd,
        };
        Self {
            runner: target,
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut parameters = BTreeMap::new();
        for (prefix, net) in [("forward", &self.forward), ("inverse", &self.inverse)] {
            for (name, p) in net.param_names().into_iter().zip(net.params()) {
                parameters.insert(
                    format!("{prefix}.{name}"),
                    ParamDoc {
                        shape: p.shape().to_vec(),
                        values: p.as_slice().iter().map(|v| v.as_f64()).collect(),
                    },
                );
            }
        }
        let doc = CheckpointDoc {
            format: FORMAT.into(),
            kind: "icnn".into(),
            trained_with: self.trained_with,
            runner: self.runner,
            config_hash: self.config_hash.clone(),
            mu: self.forward.config().mu,
            activation: self.forward.config().activation.name().into(),
            forward: self.forward.config().clone(),
            inverse: self.inverse.config().clone(),
            amd: self.amd,
            steps: self.steps.iter().map(|v| v.as_f64()).collect(),
            parameters,
        };
        Ok(serde_json::to_string_pretty(&doc)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: CheckpointDoc = serde_json::from_str(text)?;
        if doc.format != FORMAT {
            return Err(Error::Checkpoint(format!("unsupported format `{}`", doc.format)));
        }
        if doc.kind != "icnn" {
            return Err(Error::Checkpoint(format!("unsupported potential kind `{}`", doc.kind)));
        }
        let mut used = 0;
        let mut load = |prefix: &str, cfg: IcnnConfig| -> Result<Icnn<T>> {
            let mut net = Icnn::quadratic(cfg)?;
            let params = net
                .param_names()
                .iter()
                .map(|name| {
                    let key = format!("{prefix}.{name}");
                    let p = doc
                        .parameters
                        .get(&key)
                        .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{key}`")))?;
                    used += 1;
                    Tensor::from_vec(p.shape.clone(), p.values.iter().map(|&v| T::lit(v)).collect())
                        .map_err(|e| Error::Checkpoint(format!("parameter `{key}`: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            net.set_params(params)
                .map_err(|e| Error::Checkpoint(format!("{prefix} network: {e}")))?;
            Ok(net)
        };
        let forward = load("forward", doc.forward)?;
        let inverse = load("inverse", doc.inverse)?;
        if used != doc.parameters.len() {
            return Err(Error::Checkpoint("checkpoint has unknown parameters".into()));
        }
        let steps: Vec<T> = doc.steps.iter().map(|&v| T::lit(v)).collect();
        StepSchedule::new(steps.clone(), ExtensionRule::Final)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(Self {
            forward,
            inverse,
            steps,
            trained_with: doc.trained_with,
            runner: doc.runner,
            amd: doc.amd,
            config_hash: doc.config_hash,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Free-function form of [`Checkpoint::swap_maps`].
pub fn swap_maps<T: Scalar>(checkpoint: &Checkpoint<T>, target: Method) -> Result<Checkpoint<T>> {
    checkpoint.swap_maps(target)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamDoc {
    shape: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointDoc {
    format: String,
    kind: String,
    trained_with: Method,
    runner: Method,
    config_hash: String,
    mu: f64,
    activation: String,
    forward: IcnnConfig,
    inverse: IcnnConfig,
    amd: AmdParams,
    steps: Vec<f64>,
    parameters: BTreeMap<String, ParamDoc>,
}
