//! Experiment orchestration: configuration, the four robustness
//! experiments, trace CSVs, log-log plots and the output manifest.
//!
//! An experiment is planned as a list of labelled runs, every run is
//! executed on every held-out sample (in parallel, collected in order), and
//! the results are written as
//!
//! ```text
//! <out>/traces/<label>.csv   one trace per sample, CSV format of `optim`
//! <out>/summary.csv          per-label divergence counts, k=10 and final
//!                            suboptimality, median log-log slope
//! <out>/plot.svg             mean suboptimality per label, log-log axes
//! <out>/manifest.json        settings, per-label slopes, SHA-256 of every file
//! ```
//!
//! Nothing in the outputs depends on time or thread scheduling, so a rerun
//! with the same configuration, seed and checkpoints is byte-identical.

mod config;
mod plot;

pub use config::{Config, DatasetSection, ExperimentKind, ExperimentSpec};
pub use plot::{plot_loglog, Series, SUBOPT_FLOOR};

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::mirror::MirrorMap;
use crate::optim::{
    loglog_slope, run, traces_to_csv, AmdParams, ExtensionRule, IterateTrace, Method, RunConfig,
    StepSchedule,
};
use crate::problems::{generate_dataset, load_dataset, OperatorSpec, ProblemConfig, Sample};
use crate::scalar::Scalar;
use crate::train::Checkpoint;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// A checkpoint together with the name it is reported under (its file
/// stem) and the hash of its file.
#[derive(Clone, Debug)]
pub struct NamedCheckpoint<T> {
    pub name: String,
    pub checkpoint: Checkpoint<T>,
    pub sha256: String,
}

impl<T: Scalar> NamedCheckpoint<T> {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let text = String::from_utf8(bytes)
            .map_err(|_| Error::Checkpoint(format!("{} is not UTF-8", path.display())))?;
        let checkpoint = Checkpoint::from_json(&text)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "checkpoint".into());
        Ok(Self {
            name,
            checkpoint,
            sha256: sha256_hex(text.as_bytes()),
        })
    }

    pub fn new(name: impl Into<String>, checkpoint: Checkpoint<T>) -> Result<Self> {
        let sha256 = sha256_hex(checkpoint.to_json()?.as_bytes());
        Ok(Self {
            name: name.into(),
            checkpoint,
            sha256,
        })
    }
}

/// One labelled optimizer configuration.
#[derive(Clone, Debug)]
pub struct RunSpec<T> {
    pub label: String,
    pub method: Method,
    pub map: MirrorMap<T>,
    pub schedule: StepSchedule<T>,
    pub amd: AmdParams,
}

/// Display name of a classical method.
pub fn method_label(m: Method) -> &'static str {
    match m {
        Method::Gd => "GD",
        Method::Nesterov => "Nesterov",
        Method::Md => "MD",
        Method::Lmd => "LMD",
        Method::Amd => "AMD",
        Method::Lamd => "LAMD",
    }
}

impl<T: Scalar> RunSpec<T> {
    /// A classical method with a constant step (mirror methods use the
    /// Euclidean map).
    pub fn baseline(method: Method, step: f64) -> Result<Self> {
        if matches!(method, Method::Lmd | Method::Lamd) {
            return Err(Error::Config(format!("{method} needs a checkpoint")));
        }
        Ok(Self {
            label: method_label(method).into(),
            method,
            map: MirrorMap::Quadratic,
            schedule: StepSchedule::constant(T::lit(step))?,
            amd: AmdParams::default(),
        })
    }

    /// The checkpoint's maps and steps in its runner, extended by `rule`
    /// (with `c` scaled by `c_scale` for the reciprocal rule).
    pub fn learned(ck: &Checkpoint<T>, rule: ExtensionRule, c_scale: f64) -> Result<Self> {
        Ok(Self {
            label: ck.label(),
            method: ck.runner,
            map: ck.mirror(),
            schedule: ck.schedule(rule)?.with_c_scale(T::lit(c_scale)),
            amd: ck.amd,
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Runs on one sample for `iters` iterations.
    pub fn run(&self, sample: &Sample<T>, iters: usize) -> Result<IterateTrace<T>> {
        let cfg = RunConfig {
            method: self.method,
            schedule: &self.schedule,
            iters,
            amd: self.amd,
            track_fb: matches!(self.method, Method::Lmd | Method::Lamd),
        };
        Ok(run(&sample.objective, &self.map, &sample.x0, sample.f_star, &cfg, sample.index)?
            .with_label(self.label.clone()))
    }
}

fn scale_label(c: f64) -> String {
    format!("c*{c}")
}

/// The labelled runs of an experiment.
pub fn plan<T: Scalar>(
    kind: ExperimentKind,
    spec: &ExperimentSpec,
    checkpoints: &[NamedCheckpoint<T>],
) -> Result<Vec<RunSpec<T>>> {
    for c in checkpoints {
        if spec.iters < c.checkpoint.steps.len() {
            return Err(Error::Config(format!(
                "experiment.iters = {} is shorter than the {} learned steps of `{}`",
                spec.iters,
                c.checkpoint.steps.len(),
                c.name
            )));
        }
    }
    let need = |n: usize| -> Result<()> {
        if checkpoints.len() < n {
            return Err(Error::Config(format!(
                "the {kind} experiment needs at least {n} checkpoint(s), got {}",
                checkpoints.len()
            )));
        }
        Ok(())
    };
    // Checkpoint names are only added to labels when needed to tell runs apart.
    let tagged = |c: &NamedCheckpoint<T>| {
        let dup = checkpoints
            .iter()
            .filter(|o| o.checkpoint.label() == c.checkpoint.label())
            .count()
            > 1;
        if dup {
            format!("{} [{}]", c.checkpoint.label(), c.name)
        } else {
            c.checkpoint.label()
        }
    };
    let baselines = || -> Result<Vec<RunSpec<T>>> {
        spec.methods
            .iter()
            .map(|&m| RunSpec::baseline(m, spec.baseline_step))
            .collect()
    };
    let mut runs = Vec::new();
    match kind {
        ExperimentKind::Stepsize => {
            need(1)?;
            for c in checkpoints {
                for &rule in &spec.rules {
                    runs.push(
                        RunSpec::learned(&c.checkpoint, rule, 1.0)?
                            .with_label(format!("{} {rule}", tagged(c))),
                    );
                }
            }
        }
        ExperimentKind::Transfer => {
            need(1)?;
            for c in checkpoints {
                for &s in &spec.c_scales {
                    runs.push(
                        RunSpec::learned(&c.checkpoint, ExtensionRule::Reciprocal, s)?
                            .with_label(format!("{} [{}] {}", c.checkpoint.label(), c.name, scale_label(s))),
                    );
                }
            }
            runs.extend(baselines()?);
        }
        ExperimentKind::Swap => {
            let find = |m: Method| {
                checkpoints
                    .iter()
                    .find(|c| c.checkpoint.trained_with == m)
                    .ok_or_else(|| Error::Config(format!("the swap experiment needs a checkpoint trained with {m}")))
            };
            let lmd = &find(Method::Lmd)?.checkpoint;
            let lamd = &find(Method::Lamd)?.checkpoint;
            for ck in [
                lmd.swap_maps(Method::Lmd)?,
                lamd.swap_maps(Method::Lamd)?,
                lamd.swap_maps(Method::Lmd)?,
                lmd.swap_maps(Method::Lamd)?,
            ] {
                runs.push(RunSpec::learned(&ck, ExtensionRule::Reciprocal, 1.0)?);
            }
        }
        ExperimentKind::Baseline => {
            runs.extend(baselines()?);
            for c in checkpoints {
                runs.push(RunSpec::learned(&c.checkpoint, ExtensionRule::Reciprocal, 1.0)?.with_label(tagged(c)));
            }
        }
    }
    if runs.is_empty() {
        return Err(Error::Config(format!("the {kind} experiment has nothing to run")));
    }
    Ok(runs)
}

/// All traces of one labelled run.
#[derive(Clone, Debug)]
pub struct TraceSet<T> {
    pub label: String,
    pub traces: Vec<IterateTrace<T>>,
}

/// Runs every spec on every sample; the pool works on all pairs at once and
/// the results are collected in (run, sample) order.
pub fn run_all<T: Scalar>(runs: &[RunSpec<T>], samples: &[Sample<T>], iters: usize) -> Result<Vec<TraceSet<T>>> {
    let pairs: Vec<(usize, usize)> = (0..runs.len())
        .flat_map(|r| (0..samples.len()).map(move |s| (r, s)))
        .collect();
    let traces: Vec<IterateTrace<T>> = pairs
        .par_iter()
        .map(|&(r, s)| runs[r].run(&samples[s], iters))
        .collect::<Result<_>>()?;
    let mut it = traces.into_iter();
    Ok(runs
        .iter()
        .map(|r| TraceSet {
            label: r.label.clone(),
            traces: it.by_ref().take(samples.len()).collect(),
        })
        .collect())
}

/// Per-label numbers reported in `summary.csv` and the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub label: String,
    pub file: String,
    pub samples: usize,
    pub divergent: usize,
    /// Mean suboptimality at `k = 10` over the runs that reached it.
    pub mean_subopt_k10: Option<f64>,
    /// Mean final suboptimality over the non-divergent runs.
    pub mean_final_subopt: Option<f64>,
    pub median_slope: Option<f64>,
    pub slopes: Vec<Option<f64>>,
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

impl TraceSummary {
    pub fn new<T: Scalar>(set: &TraceSet<T>, file: impl Into<String>, window: [usize; 2]) -> Self {
        let slopes: Vec<Option<f64>> = set
            .traces
            .iter()
            .map(|t| loglog_slope(t, window[0], window[1]))
            .collect();
        Self {
            label: set.label.clone(),
            file: file.into(),
            samples: set.traces.len(),
            divergent: set.traces.iter().filter(|t| t.divergent).count(),
            mean_subopt_k10: mean(set.traces.iter().filter_map(|t| t.subopt(10)).map(|v| v.as_f64())),
            mean_final_subopt: mean(
                set.traces
                    .iter()
                    .filter(|t| !t.divergent)
                    .filter_map(|t| t.last())
                    .map(|r| r.subopt.as_f64()),
            ),
            median_slope: median(slopes.iter().flatten().copied().collect()),
            slopes,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointEntry {
    pub name: String,
    pub sha256: String,
    pub trained_with: Method,
    pub runner: Method,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

/// Contents of `manifest.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub iters: usize,
    pub samples: Vec<usize>,
    pub problem: ProblemConfig,
    pub slope_window: [usize; 2],
    pub config_hash: String,
    pub checkpoints: Vec<CheckpointEntry>,
    pub traces: Vec<TraceSummary>,
    pub files: Vec<FileEntry>,
}

/// Lowercase ASCII file stem for a label.
pub fn slug(label: &str) -> String {
    let mut out = String::new();
    for c in label.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    let trimmed = out.trim_matches('_');
    if trimmed.is_empty() {
        "trace".into()
    } else {
        trimmed.into()
    }
}

fn describe(problem: &ProblemConfig) -> String {
    let class = match problem.operator {
        OperatorSpec::Identity => "denoising",
        OperatorSpec::Blur { .. } => "deconvolution",
    };
    format!("{0}x{0} {class}", problem.size)
}

fn title(kind: ExperimentKind, problem: &ProblemConfig) -> String {
    let what = match kind {
        ExperimentKind::Stepsize => "Step-size extensions",
        ExperimentKind::Transfer => "Domain transfer",
        ExperimentKind::Swap => "Mirror-map swap",
        ExperimentKind::Baseline => "Learned vs classical",
    };
    format!("{what}, {}", describe(problem))
}

fn write_file(out: &Path, rel: &str, contents: &str, files: &mut Vec<FileEntry>) -> Result<()> {
    let path = out.join(rel);
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    files.push(FileEntry {
        path: rel.into(),
        sha256: sha256_hex(contents.as_bytes()),
    });
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:?}")).unwrap_or_default()
}

/// Writes traces, summary, plot and manifest into `out`.
pub fn write_outputs<T: Scalar>(
    kind: ExperimentKind,
    cfg: &Config,
    problem: &ProblemConfig,
    checkpoints: &[NamedCheckpoint<T>],
    sets: &[TraceSet<T>],
    out: &Path,
) -> Result<Manifest> {
    let window = [cfg.experiment.slope_window[0], cfg.experiment.slope_window[1].min(cfg.experiment.iters)];
    let mut files = Vec::new();
    let mut used = HashSet::new();
    let mut summaries = Vec::new();
    for set in sets {
        let base = slug(&set.label);
        let mut name = base.clone();
        let mut n = 2;
        while !used.insert(name.clone()) {
            name = format!("{base}_{n}");
            n += 1;
        }
        let rel = format!("traces/{name}.csv");
        write_file(out, &rel, &traces_to_csv(&set.traces), &mut files)?;
        summaries.push(TraceSummary::new(set, rel, window));
    }
    let mut csv = String::from("label,file,samples,divergent,mean_subopt_k10,mean_final_subopt,median_slope\n");
    for s in &summaries {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            s.label,
            s.file,
            s.samples,
            s.divergent,
            opt(s.mean_subopt_k10),
            opt(s.mean_final_subopt),
            opt(s.median_slope)
        );
    }
    write_file(out, "summary.csv", &csv, &mut files)?;
    let series: Vec<Series> = sets.iter().map(|s| Series::mean(s.label.clone(), &s.traces)).collect();
    write_file(out, "plot.svg", &plot_loglog(&series, &title(kind, problem))?, &mut files)?;
    let manifest = Manifest {
        experiment: kind,
        seed: cfg.seed,
        iters: cfg.experiment.iters,
        samples: sets
            .first()
            .map(|s| s.traces.iter().map(|t| t.sample).collect())
            .unwrap_or_default(),
        problem: problem.clone(),
        slope_window: window,
        config_hash: cfg.hash(),
        checkpoints: checkpoints
            .iter()
            .map(|c| CheckpointEntry {
                name: c.name.clone(),
                sha256: c.sha256.clone(),
                trained_with: c.checkpoint.trained_with,
                runner: c.checkpoint.runner,
            })
            .collect(),
        traces: summaries,
        files,
    };
    let path = out.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// The training set described by `[dataset]` (loaded or generated).
pub fn training_samples<T: Scalar>(cfg: &Config) -> Result<Vec<Sample<T>>> {
    match &cfg.dataset.path {
        Some(dir) => Ok(load_dataset(dir)?.2),
        None => generate_dataset(&cfg.problem, cfg.seed, cfg.dataset.first, cfg.dataset.count),
    }
}

/// Held-out samples of the class `kind` evaluates on.
pub fn held_out_samples<T: Scalar>(cfg: &Config, kind: ExperimentKind) -> Result<Vec<Sample<T>>> {
    generate_dataset(
        &cfg.eval_problem(kind),
        cfg.seed,
        cfg.held_out_first(),
        cfg.experiment.samples,
    )
}

/// Plans, runs and writes one experiment. Divergent runs are reported, not
/// treated as errors.
pub fn run_experiment<T: Scalar>(
    kind: ExperimentKind,
    cfg: &Config,
    checkpoints: &[NamedCheckpoint<T>],
    samples: &[Sample<T>],
    out: &Path,
) -> Result<Manifest> {
    let runs = plan(kind, &cfg.experiment, checkpoints)?;
    let sets = run_all(&runs, samples, cfg.experiment.iters)?;
    write_outputs(kind, cfg, &cfg.eval_problem(kind), checkpoints, &sets, out)
}

/// [`run_experiment`] with checkpoints loaded from the configured paths and
/// freshly generated held-out samples.
pub fn run_configured<T: Scalar>(kind: ExperimentKind, cfg: &Config, out: &Path) -> Result<Manifest> {
    let checkpoints = cfg
        .experiment
        .checkpoints
        .iter()
        .map(|p| NamedCheckpoint::<T>::load(p))
        .collect::<Result<Vec<_>>>()?;
    // Fail on configuration problems before the expensive sample generation.
    plan(kind, &cfg.experiment, &checkpoints)?;
    let samples = held_out_samples(cfg, kind)?;
    run_experiment(kind, cfg, &checkpoints, &samples, out)
}

/// Paths of every file an experiment writes, relative to its output
/// directory, in manifest order.
pub fn output_files(manifest: &Manifest) -> Vec<PathBuf> {
    manifest
        .files
        .iter()
        .map(|f| PathBuf::from(&f.path))
        .chain([PathBuf::from("manifest.json")])
        .collect()
}
