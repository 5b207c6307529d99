use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::optim::{ExtensionRule, Method};
use crate::problems::{OperatorSpec, ProblemConfig};
use crate::train::TrainConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Learned steps continued past the horizon with each extension rule.
    #[serde(alias = "stepsize-extension")]
    Stepsize,
    /// Checkpoints evaluated on another problem class, with baselines.
    #[serde(alias = "domain-transfer")]
    Transfer,
    /// LMD/LAMD checkpoints with their maps installed in the other runner.
    #[serde(alias = "mirror-swap")]
    Swap,
    /// Learned methods against the classical ones.
    #[serde(alias = "baseline-compare")]
    Baseline,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 4] = [Self::Stepsize, Self::Transfer, Self::Swap, Self::Baseline];

    pub fn name(self) -> &'static str {
        match self {
            Self::Stepsize => "stepsize",
            Self::Transfer => "transfer",
            Self::Swap => "swap",
            Self::Baseline => "baseline",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stepsize" | "stepsize-extension" => Ok(Self::Stepsize),
            "transfer" | "domain-transfer" => Ok(Self::Transfer),
            "swap" | "mirror-swap" => Ok(Self::Swap),
            "baseline" | "baseline-compare" => Ok(Self::Baseline),
            _ => Err(Error::Config(format!("unknown experiment `{s}`"))),
        }
    }
}

/// Which samples to train on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub count: usize,
    /// Index of the first sample.
    pub first: usize,
    /// Load a dataset written by `generate` instead of generating one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            count: 200,
            first: 0,
            path: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Iterations per run, `K`.
    pub iters: usize,
    /// Number of held-out samples.
    pub samples: usize,
    /// Index of the first held-out sample; defaults to just past the
    /// training set so the two never overlap.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first: Option<usize>,
    /// Problem class to evaluate on; defaults to `[problem]`, or to its
    /// deconvolution variant for the transfer experiment.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub problem: Option<ProblemConfig>,
    /// Classical methods included as baselines.
    pub methods: Vec<Method>,
    /// Extension rules for the step-size experiment.
    pub rules: Vec<ExtensionRule>,
    /// Multiples of the fitted `c` for the transfer experiment.
    pub c_scales: Vec<f64>,
    /// Constant step of the classical baselines.
    pub baseline_step: f64,
    /// Inclusive `k` window of the log-log slope fit.
    pub slope_window: [usize; 2],
    pub checkpoints: Vec<PathBuf>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            iters: 2000,
            samples: 20,
            first: None,
            problem: None,
            methods: vec![Method::Gd, Method::Nesterov],
            rules: ExtensionRule::ALL.to_vec(),
            c_scales: vec![0.5, 1.0, 2.0],
            baseline_step: 0.02,
            slope_window: [100, 2000],
            checkpoints: Vec::new(),
        }
    }
}

/// Everything a CLI invocation needs, read from one TOML document. Every
/// section and field is optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Seed of the generated datasets (training and held-out).
    pub seed: u64,
    pub problem: ProblemConfig,
    pub dataset: DatasetSection,
    pub train: TrainConfig,
    pub experiment: ExperimentSpec,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Overrides both the dataset and the training seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.train.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.dataset.count == 0 {
            return bad("dataset.count must be at least 1");
        }
        self.train.validate()?;
        let e = &self.experiment;
        if e.iters == 0 {
            return bad("experiment.iters must be at least 1");
        }
        if e.samples == 0 {
            return bad("experiment.samples must be at least 1");
        }
        if !(e.baseline_step > 0.0) {
            return bad("experiment.baseline_step must be positive");
        }
        if e.c_scales.is_empty() || e.c_scales.iter().any(|c| !(*c > 0.0)) {
            return bad("experiment.c_scales must be nonempty and positive");
        }
        if e.rules.is_empty() {
            return bad("experiment.rules must not be empty");
        }
        if e.slope_window[0] == 0 || e.slope_window[0] >= e.slope_window[1] {
            return bad("experiment.slope_window must be [lo, hi] with 1 <= lo < hi");
        }
        if let Some(m) = e.methods.iter().find(|m| matches!(m, Method::Lmd | Method::Lamd)) {
            return Err(Error::Config(format!(
                "experiment.methods lists classical baselines; {m} runs come from checkpoints"
            )));
        }
        Ok(())
    }

    /// Problem class the experiment evaluates on.
    pub fn eval_problem(&self, kind: ExperimentKind) -> ProblemConfig {
        match (&self.experiment.problem, kind) {
            (Some(p), _) => p.clone(),
            (None, ExperimentKind::Transfer) => ProblemConfig {
                operator: OperatorSpec::default_blur(),
                ..self.problem.clone()
            },
            (None, _) => self.problem.clone(),
        }
    }

    /// First held-out sample index.
    pub fn held_out_first(&self) -> usize {
        self.experiment
            .first
            .unwrap_or(self.dataset.first + self.dataset.count)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}
