use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// How a schedule continues past its learned horizon.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtensionRule {
    Max,
    Mean,
    Min,
    Final,
    /// `t_k = c / k` with `c = (1/N) Σ k t_k`.
    Reciprocal,
}

impl ExtensionRule {
    pub const ALL: [ExtensionRule; 5] = [
        ExtensionRule::Max,
        ExtensionRule::Mean,
        ExtensionRule::Min,
        ExtensionRule::Final,
        ExtensionRule::Reciprocal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExtensionRule::Max => "max",
            ExtensionRule::Mean => "mean",
            ExtensionRule::Min => "min",
            ExtensionRule::Final => "final",
            ExtensionRule::Reciprocal => "reciprocal",
        }
    }
}

impl fmt::Display for ExtensionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExtensionRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown extension rule `{s}`")))
    }
}

/// Step sizes `t_1..t_N` plus a rule for `k > N`.
#[derive(Clone, Debug, PartialEq)]
pub struct StepSchedule<T> {
    steps: Vec<T>,
    rule: ExtensionRule,
    c: T,
    c_scale: T,
}

impl<T: Scalar> StepSchedule<T> {
    pub fn new(steps: Vec<T>, rule: ExtensionRule) -> Result<Self> {
        let mut s = Self {
            steps: Vec::new(),
            rule,
            c: T::zero(),
            c_scale: T::one(),
        };
        s.set_steps(steps)?;
        Ok(s)
    }

    /// The same step for every iteration.
    pub fn constant(t: T) -> Result<Self> {
        Self::new(vec![t], ExtensionRule::Final)
    }

    /// Replaces the learned steps and recomputes `c`.
    pub fn set_steps(&mut self, steps: Vec<T>) -> Result<()> {
        if steps.is_empty() {
            return Err(Error::invalid("a step schedule needs at least one step"));
        }
        if let Some(i) = steps.iter().position(|t| !(*t > T::zero()) || !t.is_finite()) {
            return Err(Error::invalid(format!(
                "step t_{} = {} is not a positive finite number",
                i + 1,
                steps[i]
            )));
        }
        let n = T::lit(steps.len() as f64);
        self.c = steps
            .iter()
            .enumerate()
            .map(|(i, &t)| T::lit((i + 1) as f64) * t)
            .sum::<T>()
            / n;
        self.steps = steps;
        Ok(())
    }

    pub fn with_rule(&self, rule: ExtensionRule) -> Self {
        Self {
            rule,
            ..self.clone()
        }
    }

    /// Multiplies the reciprocal constant by `factor` (for sweeps around the
    /// fitted `c`).
    pub fn with_c_scale(&self, factor: T) -> Self {
        Self {
            c_scale: factor,
            ..self.clone()
        }
    }

    pub fn steps(&self) -> &[T] {
        &self.steps
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn rule(&self) -> ExtensionRule {
        self.rule
    }

    /// The reciprocal constant actually used, including any scale.
    pub fn reciprocal_constant(&self) -> T {
        self.c * self.c_scale
    }

    /// `t_k` for `k ≥ 1`.
    pub fn step(&self, k: usize) -> Result<T> {
        if k == 0 {
            return Err(Error::invalid("step sizes are indexed from k = 1"));
        }
        Ok(self.extend(k))
    }

    fn extend(&self, k: usize) -> T {
        let n = self.steps.len();
        if k <= n {
            return self.steps[k - 1];
        }
        match self.rule {
            ExtensionRule::Max => self.steps.iter().copied().fold(T::neg_infinity(), T::max),
            ExtensionRule::Min => self.steps.iter().copied().fold(T::infinity(), T::min),
            ExtensionRule::Mean => self.steps.iter().copied().sum::<T>() / T::lit(n as f64),
            ExtensionRule::Final => self.steps[n - 1],
            ExtensionRule::Reciprocal => self.reciprocal_constant() / T::lit(k as f64),
        }
    }
}

/// `t_k` from `schedule` (free-function form).
pub fn extend_schedule<T: Scalar>(schedule: &StepSchedule<T>, k: usize) -> Result<T> {
    schedule.step(k)
}
