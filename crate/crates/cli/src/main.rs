use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use lamd_core::harness::{
    self, plot_loglog, run_configured, Config, ExperimentKind, NamedCheckpoint, RunSpec, Series,
};
use lamd_core::optim::{parse_traces_csv, traces_to_csv, ExtensionRule, IterateTrace, Method};
use lamd_core::problems::{generate_dataset, save_dataset};
use lamd_core::train::{train, EpochStats};

#[derive(Parser)]
#[command(name = "lamd", version, about = "Learned (accelerated) mirror descent experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration; every section and field is optional
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for data generation and training (overrides the config)
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the training dataset described by `[problem]` and `[dataset]`
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a learned mirror pair and step sizes
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        /// lmd or lamd (overrides `train.method`)
        #[arg(long)]
        method: Option<Method>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Run one method on the held-out samples
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        /// gd, nesterov, md, amd, or lmd/lamd with a checkpoint
        #[arg(long)]
        method: Option<Method>,
        /// Learned checkpoint; without `--method` its own runner is used
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Extension rule past the learned horizon
        #[arg(long, default_value = "reciprocal")]
        rule: ExtensionRule,
        #[arg(long)]
        iters: Option<usize>,
    },
    /// Run one of the robustness experiments
    Experiment {
        /// stepsize, transfer, swap or baseline
        kind: ExperimentKind,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        /// Checkpoints to evaluate (replaces `experiment.checkpoints`)
        #[arg(long)]
        checkpoint: Vec<PathBuf>,
        #[arg(long)]
        iters: Option<usize>,
    },
    /// Plot mean suboptimality of trace CSVs on log-log axes
    Plot {
        /// Output SVG file
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "Suboptimality")]
        title: String,
        #[arg(required = true)]
        traces: Vec<PathBuf>,
    },
}

fn load_config(common: &Common) -> Result<Config> {
    let cfg = match &common.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    Ok(match common.seed {
        Some(seed) => cfg.with_seed(seed),
        None => cfg,
    })
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn generate(common: Common, out: PathBuf) -> Result<()> {
    let cfg = load_config(&common)?;
    let samples = generate_dataset::<f64>(&cfg.problem, cfg.seed, cfg.dataset.first, cfg.dataset.count)?;
    save_dataset(&out, &cfg.problem, cfg.seed, &samples)?;
    println!("wrote {} samples to {}", samples.len(), out.display());
    Ok(())
}

fn run_train(common: Common, out: PathBuf, method: Option<Method>, epochs: Option<usize>) -> Result<()> {
    let mut cfg = load_config(&common)?;
    if let Some(m) = method {
        cfg.train.method = m;
    }
    if let Some(e) = epochs {
        cfg.train.epochs = e;
    }
    cfg.validate()?;
    let samples = harness::training_samples::<f64>(&cfg)?;
    eprintln!(
        "training {} on {} samples for {} epochs",
        cfg.train.method,
        samples.len(),
        cfg.train.epochs
    );
    let report = |s: &EpochStats| {
        eprintln!(
            "epoch {:>4}  loss {:.6e}  fb {:.6e}{}",
            s.epoch,
            s.mean_loss,
            s.mean_fb_error,
            if s.skipped > 0 { format!("  skipped {}", s.skipped) } else { String::new() }
        )
    };
    let outcome = train(&cfg.train, &samples, report)?;
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    outcome.checkpoint.save(&out.join("checkpoint.json"))?;
    write(&out.join("loss_history.csv"), &outcome.history_csv())?;
    write(&out.join("config.toml"), &cfg.to_toml()?)?;
    println!(
        "best epoch {} of {}; checkpoint written to {}",
        outcome.best_epoch,
        cfg.train.epochs,
        out.join("checkpoint.json").display()
    );
    Ok(())
}

fn run_single(
    common: Common,
    out: PathBuf,
    method: Option<Method>,
    checkpoint: Option<PathBuf>,
    rule: ExtensionRule,
    iters: Option<usize>,
) -> Result<()> {
    let mut cfg = load_config(&common)?;
    if let Some(k) = iters {
        cfg.experiment.iters = k;
    }
    cfg.validate()?;
    let spec = match (method, &checkpoint) {
        (_, Some(path)) => {
            let named = NamedCheckpoint::<f64>::load(path)?;
            let ck = match method {
                Some(m) => named.checkpoint.swap_maps(m)?,
                None => named.checkpoint,
            };
            RunSpec::learned(&ck, rule, 1.0)?
        }
        (Some(m), None) => RunSpec::baseline(m, cfg.experiment.baseline_step)?,
        (None, None) => bail!("`run` needs --method or --checkpoint"),
    };
    let samples = harness::held_out_samples::<f64>(&cfg, ExperimentKind::Baseline)?;
    let traces = samples
        .iter()
        .map(|s| spec.run(s, cfg.experiment.iters))
        .collect::<lamd_core::Result<Vec<_>>>()?;
    write(&out.join("trace.csv"), &traces_to_csv(&traces))?;
    let svg = plot_loglog(&[Series::mean(spec.label.clone(), &traces)], &spec.label)?;
    write(&out.join("plot.svg"), &svg)?;
    let divergent = traces.iter().filter(|t| t.divergent).count();
    let finals: Vec<f64> = traces
        .iter()
        .filter(|t| !t.divergent)
        .filter_map(|t| t.last().map(|r| r.subopt))
        .collect();
    let mean_final = if finals.is_empty() { f64::NAN } else { finals.iter().sum::<f64>() / finals.len() as f64 };
    println!(
        "{}: {} samples, {} divergent, mean final suboptimality {:.3e}",
        spec.label,
        traces.len(),
        divergent,
        mean_final
    );
    Ok(())
}

fn experiment(
    kind: ExperimentKind,
    common: Common,
    out: PathBuf,
    checkpoints: Vec<PathBuf>,
    iters: Option<usize>,
) -> Result<()> {
    let mut cfg = load_config(&common)?;
    if !checkpoints.is_empty() {
        cfg.experiment.checkpoints = checkpoints;
    }
    if let Some(k) = iters {
        cfg.experiment.iters = k;
    }
    cfg.validate()?;
    let manifest = run_configured::<f64>(kind, &cfg, &out)?;
    let fmt = |v: Option<f64>| v.map(|v| format!("{v:.3e}")).unwrap_or_else(|| "-".into());
    println!("{:<36} {:>9} {:>11} {:>11} {:>7}", "label", "divergent", "k=10", "final", "slope");
    for t in &manifest.traces {
        println!(
            "{:<36} {:>4}/{:<4} {:>11} {:>11} {:>7}",
            t.label,
            t.divergent,
            t.samples,
            fmt(t.mean_subopt_k10),
            fmt(t.mean_final_subopt),
            t.median_slope.map(|s| format!("{s:.2}")).unwrap_or_else(|| "-".into())
        );
    }
    println!("outputs in {}", out.display());
    Ok(())
}

fn plot(out: PathBuf, title: String, inputs: Vec<PathBuf>) -> Result<()> {
    // Group by label in order of first appearance, across all files.
    let mut groups: Vec<(String, Vec<IterateTrace<f64>>)> = Vec::new();
    for path in &inputs {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let traces = parse_traces_csv::<f64>(&text).with_context(|| format!("parsing {}", path.display()))?;
        for t in traces {
            match groups.iter_mut().find(|(label, _)| *label == t.method) {
                Some((_, v)) => v.push(t),
                None => groups.push((t.method.clone(), vec![t])),
            }
        }
    }
    if groups.is_empty() {
        bail!("no traces in the input files");
    }
    let series: Vec<Series> = groups.iter().map(|(l, ts)| Series::mean(l.clone(), ts)).collect();
    write(&out, &plot_loglog(&series, &title)?)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { common, out } => generate(common, out),
        Command::Train { common, out, method, epochs } => run_train(common, out, method, epochs),
        Command::Run { common, out, method, checkpoint, rule, iters } => {
            run_single(common, out, method, checkpoint, rule, iters)
        }
        Command::Experiment { kind, common, out, checkpoint, iters } => {
            experiment(kind, common, out, checkpoint, iters)
        }
        Command::Plot { out, title, traces } => plot(out, title, traces),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
