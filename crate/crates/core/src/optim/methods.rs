use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::schedule::StepSchedule;
use super::trace::IterateTrace;
use crate::error::{Error, Result};
use crate::mirror::MirrorMap;
use crate::problems::Objective;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// `x − t∇f(x)`.
pub fn gd_step<T: Scalar>(obj: &dyn Objective<T>, x: &Tensor<T>, t: T) -> Result<Tensor<T>> {
    x.axpy(-t, &obj.gradient(x)?)
}

/// `∇Ψ*(∇Ψ(x) − t∇f(x))`.
pub fn md_step<T: Scalar>(
    obj: &dyn Objective<T>,
    map: &MirrorMap<T>,
    x: &Tensor<T>,
    t: T,
) -> Result<Tensor<T>> {
    let dual = map.mirror_map(x)?.axpy(-t, &obj.gradient(x)?)?;
    map.inverse_mirror_map(&dual)
}

/// A mirror step with a learned pair. Also returns the forward-backward
/// error at `x`.
pub fn lmd_step<T: Scalar>(
    obj: &dyn Objective<T>,
    map: &MirrorMap<T>,
    x: &Tensor<T>,
    t: T,
) -> Result<(Tensor<T>, T)> {
    Ok((md_step(obj, map, x, t)?, map.forward_backward_error(x)?))
}

/// Momentum parameters of the accelerated mirror scheme.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AmdParams {
    pub r: f64,
    pub gamma: f64,
    /// Start the dual sequence at `∇Ψ*(x₀)` instead of `x₀`.
    pub dual_init: bool,
}

impl Default for AmdParams {
    fn default() -> Self {
        Self {
            r: 3.0,
            gamma: 1.0,
            dual_init: false,
        }
    }
}

impl AmdParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.r >= 3.0) || !(self.gamma > 0.0) {
            return Err(Error::Config("amd needs r >= 3 and gamma > 0".into()));
        }
        Ok(())
    }
}

/// State of the accelerated mirror recursion.
#[derive(Clone, Debug, PartialEq)]
pub struct AmdState<T> {
    pub x_tilde: Tensor<T>,
    pub z_tilde: Tensor<T>,
    /// The most recent averaged point `x⁽ᵏ⁾`.
    pub x: Tensor<T>,
    pub k: usize,
    pub r: T,
    pub gamma: T,
}

impl<T: Scalar> AmdState<T> {
    pub fn new(map: &MirrorMap<T>, x0: &Tensor<T>, params: &AmdParams) -> Result<Self> {
        params.validate()?;
        let z_tilde = if params.dual_init {
            map.inverse_mirror_map(x0)?
        } else {
            x0.clone()
        };
        Ok(Self {
            x_tilde: x0.clone(),
            z_tilde,
            x: x0.clone(),
            k: 0,
            r: T::lit(params.r),
            gamma: T::lit(params.gamma),
        })
    }

    /// `λ_k = r / (r + k)`.
    pub fn lambda(&self) -> T {
        amd_lambda(self.r, self.k)
    }
}

pub fn amd_lambda<T: Scalar>(r: T, k: usize) -> T {
    r / (r + T::lit(k as f64))
}

/// One step of the accelerated recursion:
///
/// ```text
/// x⁽ᵏ⁺¹⁾ = λ_k z̃⁽ᵏ⁾ + (1 − λ_k) x̃⁽ᵏ⁾
/// z̃⁽ᵏ⁺¹⁾ = ∇Ψ*(∇Ψ(z̃⁽ᵏ⁾) − (k t_k / r) ∇f(x⁽ᵏ⁺¹⁾))
/// x̃⁽ᵏ⁺¹⁾ = x⁽ᵏ⁺¹⁾ − γ t_k ∇f(x⁽ᵏ⁺¹⁾)
/// ```
pub fn amd_iterate<T: Scalar>(
    obj: &dyn Objective<T>,
    map: &MirrorMap<T>,
    state: &AmdState<T>,
    t: T,
) -> Result<AmdState<T>> {
    let lam = state.lambda();
    let x = state.z_tilde.scale(lam).axpy(T::one() - lam, &state.x_tilde)?;
    let g = obj.gradient(&x)?;
    let coeff = T::lit(state.k as f64) * t / state.r;
    let dual = map.mirror_map(&state.z_tilde)?.axpy(-coeff, &g)?;
    let z_tilde = map.inverse_mirror_map(&dual)?;
    let x_tilde = x.axpy(-state.gamma * t, &g)?;
    Ok(AmdState {
        x_tilde,
        z_tilde,
        x,
        k: state.k + 1,
        r: state.r,
        gamma: state.gamma,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Gd,
    Nesterov,
    Md,
    Lmd,
    Amd,
    Lamd,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Gd => "gd",
            Method::Nesterov => "nesterov",
            Method::Md => "md",
            Method::Lmd => "lmd",
            Method::Amd => "amd",
            Method::Lamd => "lamd",
        }
    }

    /// Whether the method uses a mirror map.
    pub fn is_mirror(self) -> bool {
        matches!(self, Method::Md | Method::Lmd | Method::Amd | Method::Lamd)
    }

    pub fn is_accelerated_mirror(self) -> bool {
        matches!(self, Method::Amd | Method::Lamd)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Method::Gd,
            Method::Nesterov,
            Method::Md,
            Method::Lmd,
            Method::Amd,
            Method::Lamd,
        ]
        .into_iter()
        .find(|m| m.name() == s)
        .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

/// What to run and for how long.
#[derive(Clone, Debug)]
pub struct RunConfig<'a, T> {
    pub method: Method,
    pub schedule: &'a StepSchedule<T>,
    pub iters: usize,
    pub amd: AmdParams,
    /// Record the forward-backward error at every iterate.
    pub track_fb: bool,
}

impl<'a, T: Scalar> RunConfig<'a, T> {
    pub fn new(method: Method, schedule: &'a StepSchedule<T>, iters: usize) -> Self {
        Self {
            method,
            schedule,
            iters,
            amd: AmdParams::default(),
            track_fb: matches!(method, Method::Lmd | Method::Lamd),
        }
    }
}

fn fb<T: Scalar>(track: bool, map: &MirrorMap<T>, x: &Tensor<T>) -> Result<Option<T>> {
    if track {
        Ok(Some(map.forward_backward_error(x)?))
    } else {
        Ok(None)
    }
}

/// Runs `cfg.iters` iterations of `cfg.method` from `x0`. The trace has
/// `iters + 1` records unless the run diverged. `map` is ignored by the
/// Euclidean methods.
pub fn run<T: Scalar>(
    obj: &dyn Objective<T>,
    map: &MirrorMap<T>,
    x0: &Tensor<T>,
    f_star: T,
    cfg: &RunConfig<'_, T>,
    sample: usize,
) -> Result<IterateTrace<T>> {
    if cfg.iters == 0 {
        return Err(Error::invalid("a run needs at least one iteration"));
    }
    obj.check_shape(x0)?;
    let track = cfg.track_fb && cfg.method.is_mirror();
    let mut trace = IterateTrace::new(cfg.method.name(), sample, f_star);
    if !trace.push(T::zero(), obj.value(x0)?, fb(track, map, x0)?) {
        return Ok(trace);
    }
    match cfg.method {
        Method::Gd | Method::Md | Method::Lmd => {
            let mut x = x0.clone();
            for k in 1..=cfg.iters {
                let t = cfg.schedule.step(k)?;
                x = if cfg.method == Method::Gd {
                    gd_step(obj, &x, t)?
                } else {
                    md_step(obj, map, &x, t)?
                };
                if !trace.push(t, obj.value(&x)?, fb(track, map, &x)?) {
                    break;
                }
            }
        }
        Method::Nesterov => {
            let mut x = x0.clone();
            let mut prev = x0.clone();
            for k in 1..=cfg.iters {
                let t = cfg.schedule.step(k)?;
                let beta = T::lit((k as f64 - 1.0) / (k as f64 + 2.0));
                let y = x.axpy(beta, &x.sub(&prev)?)?;
                let next = gd_step(obj, &y, t)?;
                prev = std::mem::replace(&mut x, next);
                if !trace.push(t, obj.value(&x)?, None) {
                    break;
                }
            }
        }
        Method::Amd | Method::Lamd => {
            let mut state = AmdState::new(map, x0, &cfg.amd)?;
            for k in 1..=cfg.iters {
                let t = cfg.schedule.step(k)?;
                state = amd_iterate(obj, map, &state, t)?;
                if !trace.push(t, obj.value(&state.x)?, fb(track, map, &state.x)?) {
                    break;
                }
            }
        }
    }
    Ok(trace)
}

/// [`run`] for the Nesterov baseline.
pub fn nesterov_run<T: Scalar>(
    obj: &dyn Objective<T>,
    x0: &Tensor<T>,
    schedule: &StepSchedule<T>,
    iters: usize,
    f_star: T,
) -> Result<IterateTrace<T>> {
    let cfg = RunConfig::new(Method::Nesterov, schedule, iters);
    run(obj, &MirrorMap::Quadratic, x0, f_star, &cfg, 0)
}

/// [`run`] for the learned accelerated scheme.
pub fn lamd_run<T: Scalar>(
    obj: &dyn Objective<T>,
    map: &MirrorMap<T>,
    x0: &Tensor<T>,
    schedule: &StepSchedule<T>,
    iters: usize,
    f_star: T,
) -> Result<IterateTrace<T>> {
    let cfg = RunConfig::new(Method::Lamd, schedule, iters);
    run(obj, map, x0, f_star, &cfg, 0)
}
