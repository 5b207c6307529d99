//! Function-class samples and their on-disk form.
//!
//! A dataset directory holds `dataset.json` (configuration, seeds and
//! reference minima) plus two flat text images per sample,
//! `clean_NNNN.txt` and `obs_NNNN.txt`. An image file starts with a line
//! `H W` followed by `H` lines of `W` whitespace-separated numbers written
//! in shortest round-trip form.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::objective::{Objective, TvObjective};
use super::operator::ForwardOperator;
use super::phantom::{add_noise, gaussian_kernel, generate_phantom};
use super::reference::reference_minimum;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorSpec {
    Identity,
    Blur { size: usize, std: f64 },
}

impl OperatorSpec {
    pub fn build<T: Scalar>(&self) -> Result<ForwardOperator<T>> {
        match self {
            OperatorSpec::Identity => Ok(ForwardOperator::Identity),
            OperatorSpec::Blur { size, std } => Ok(ForwardOperator::Blur(gaussian_kernel(*size, *std)?)),
        }
    }

    /// The 7px, std 3px blur.
    pub fn default_blur() -> Self {
        OperatorSpec::Blur { size: 7, std: 3.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub size: usize,
    pub noise_level: f64,
    pub lambda: f64,
    pub eps: f64,
    pub operator: OperatorSpec,
    /// Inclusive range of ellipses per phantom.
    pub ellipses: [usize; 2],
    pub reference_budget: usize,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            size: 16,
            noise_level: 0.1,
            lambda: 0.15,
            eps: 1e-3,
            operator: OperatorSpec::Identity,
            ellipses: [3, 8],
            reference_budget: 20_000,
        }
    }
}

impl ProblemConfig {
    pub fn deconvolution() -> Self {
        Self {
            operator: OperatorSpec::default_blur(),
            ..Self::default()
        }
    }
}

/// One member of the function class with its starting point and reference
/// minimum.
#[derive(Clone, Debug)]
pub struct Sample<T> {
    pub index: usize,
    pub seed: u64,
    pub objective: TvObjective<T>,
    pub x0: Tensor<T>,
    pub f_star: T,
    pub clean: Tensor<T>,
}

/// Per-sample seed derived from the dataset seed (SplitMix64 finaliser).
pub fn sample_seed(seed: u64, index: usize) -> u64 {
    let mut z = seed
        .wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn build_sample<T: Scalar>(
    cfg: &ProblemConfig,
    index: usize,
    seed: u64,
    clean: Tensor<T>,
    observation: Tensor<T>,
) -> Result<Sample<T>> {
    let objective = TvObjective::new(
        cfg.operator.build()?,
        observation.clone(),
        T::lit(cfg.lambda),
        T::lit(cfg.eps),
    )?;
    let f_star = reference_minimum(&objective, &observation, cfg.reference_budget)?;
    Ok(Sample {
        index,
        seed,
        objective,
        x0: observation,
        f_star,
        clean,
    })
}

/// Sample `index` of the class: phantom, then `y = A(phantom) + noise`,
/// with `x₀ = y`.
pub fn generate_sample<T: Scalar>(cfg: &ProblemConfig, seed: u64, index: usize) -> Result<Sample<T>> {
    let s = sample_seed(seed, index);
    let clean: Tensor<T> = generate_phantom(s, cfg.size, cfg.ellipses[0]..=cfg.ellipses[1])?;
    let op: ForwardOperator<T> = cfg.operator.build()?;
    let observation = add_noise(&op.apply(&clean)?, T::lit(cfg.noise_level), s ^ 0x5DEE_CE66_D)?;
    build_sample(cfg, index, s, clean, observation)
}

/// `count` samples starting at `first`, generated in parallel, in order.
pub fn generate_dataset<T: Scalar>(
    cfg: &ProblemConfig,
    seed: u64,
    first: usize,
    count: usize,
) -> Result<Vec<Sample<T>>> {
    (first..first + count)
        .into_par_iter()
        .map(|i| generate_sample(cfg, seed, i))
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleEntry {
    index: usize,
    seed: u64,
    f_star: f64,
    f_x0: f64,
    clean: String,
    observation: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetManifest {
    seed: u64,
    config: ProblemConfig,
    samples: Vec<SampleEntry>,
}

pub fn format_image<T: Scalar>(img: &Tensor<T>) -> Result<String> {
    let (h, w) = match *img.shape() {
        [h, w] => (h, w),
        _ => {
            return Err(Error::BadShape {
                op: "image file",
                msg: "expects a 2-d image",
                shape: img.shape().to_vec(),
            })
        }
    };
    let mut out = format!("{h} {w}\n");
    for row in img.as_slice().chunks(w) {
        let line: Vec<String> = row.iter().map(|v| format!("{:?}", v.as_f64())).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
    Ok(out)
}

pub fn parse_image<T: Scalar>(text: &str) -> Result<Tensor<T>> {
    let bad = |m: &str| Error::Checkpoint(format!("malformed image file: {m}"));
    let mut tokens = text.split_whitespace();
    let mut dim = || -> Result<usize> {
        tokens
            .next()
            .ok_or_else(|| bad("missing header"))?
            .parse()
            .map_err(|_| bad("bad header"))
    };
    let (h, w) = (dim()?, dim()?);
    let data: Vec<T> = text
        .split_whitespace()
        .skip(2)
        .map(|t| t.parse::<f64>().map(T::lit).map_err(|_| bad(t)))
        .collect::<Result<_>>()?;
    if data.len() != h * w {
        return Err(bad("wrong number of values"));
    }
    Tensor::from_vec(vec![h, w], data)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes `samples` under `dir`, creating it if needed.
pub fn save_dataset<T: Scalar>(
    dir: &Path,
    cfg: &ProblemConfig,
    seed: u64,
    samples: &[Sample<T>],
) -> Result<Vec<std::path::PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut entries = Vec::new();
    for s in samples {
        let clean = format!("clean_{:04}.txt", s.index);
        let obs = format!("obs_{:04}.txt", s.index);
        write(&dir.join(&clean), &format_image(&s.clean)?)?;
        write(&dir.join(&obs), &format_image(&s.objective.observation)?)?;
        written.push(dir.join(&clean));
        written.push(dir.join(&obs));
        entries.push(SampleEntry {
            index: s.index,
            seed: s.seed,
            f_star: s.f_star.as_f64(),
            f_x0: s.objective.value(&s.x0)?.as_f64(),
            clean,
            observation: obs,
        });
    }
    let manifest = DatasetManifest {
        seed,
        config: cfg.clone(),
        samples: entries,
    };
    let path = dir.join("dataset.json");
    write(&path, &(serde_json::to_string_pretty(&manifest)? + "\n"))?;
    written.push(path);
    Ok(written)
}

/// Reads a directory written by [`save_dataset`]. Reference minima come
/// from the manifest rather than being recomputed.
pub fn load_dataset<T: Scalar>(dir: &Path) -> Result<(ProblemConfig, u64, Vec<Sample<T>>)> {
    let manifest: DatasetManifest = serde_json::from_str(&read(&dir.join("dataset.json"))?)?;
    let cfg = manifest.config;
    let samples = manifest
        .samples
        .iter()
        .map(|e| {
            let clean = parse_image(&read(&dir.join(&e.clean))?)?;
            let observation: Tensor<T> = parse_image(&read(&dir.join(&e.observation))?)?;
            let objective = TvObjective::new(
                cfg.operator.build()?,
                observation.clone(),
                T::lit(cfg.lambda),
                T::lit(cfg.eps),
            )?;
            Ok(Sample {
                index: e.index,
                seed: e.seed,
                objective,
                x0: observation,
                f_star: T::lit(e.f_star),
                clean,
            })
        })
        .collect::<Result<_>>()?;
    Ok((cfg, manifest.seed, samples))
}
