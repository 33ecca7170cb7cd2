//! `hybridfem` command-line driver.
//!
//! Exit codes: 0 success or PASS, 1 check FAIL, 2 usage or input error,
//! 3 numerical failure (solver stall, training divergence).

mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use hybridfem::data::{generate_dataset, Dataset, Family, SourceParams};
use hybridfem::exec::Exec;
use hybridfem::hybrid::{
    error_budget, evaluate, stability_check, train, write_eval_csv, write_loss_csv, CoarseInput, Model, TrainConfig,
};
use hybridfem::mesh::MeshHierarchy;

use manifest::RunManifest;

#[derive(Parser)]
#[command(
    name = "hybridfem",
    version,
    about = "Coarse FE solves corrected by patch-local neural networks"
)]
struct Cli {
    /// Run every data-parallel loop on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a random family of Poisson problems on the coarse and fine level.
    Generate(GenerateArgs),
    /// Fit a patch network to a dataset.
    Train(TrainArgs),
    /// Mean coarse, fine and hybrid errors per split, as CSV.
    Evaluate(EvaluateArgs),
    /// Empirical check of the network Lipschitz bound.
    Stability(StabilityArgs),
    /// Four-term error budget of one source against the training set.
    Budget(BudgetArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    n0: usize,
    #[arg(long)]
    level: usize,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    count: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "verbatim")]
    family: Family,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Held-out set; its loss is recorded but never trained on.
    #[arg(long)]
    test: Option<PathBuf>,
    /// `<layers>x<width>` or a comma-separated list of widths.
    #[arg(long, default_value = "4x512")]
    hidden: Hidden,
    #[arg(long, default_value_t = 400)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// `<factor>@<every>`: multiply the learning rate by `factor` every
    /// `every` epochs.
    #[arg(long, default_value = "0.5@100")]
    decay: Decay,
    /// Samples per mini-batch; full batch when omitted.
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    standardize: bool,
    #[arg(long, default_value = "patch")]
    coarse_input: CoarseInput,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Model file; `loss.csv` is written in the same directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StabilityArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pairs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "verbatim")]
    family: Family,
    /// Report file; the report always goes to standard output as well.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BudgetArgs {
    #[arg(long)]
    model: PathBuf,
    /// Training set the budget minimises over.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, num_args = 4, value_names = ["C1", "C2", "C3", "C4"], allow_negative_numbers = true)]
    fparams: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone)]
struct Hidden(Vec<usize>);

impl FromStr for Hidden {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let widths: Vec<usize> = if let Some((n, w)) = s.split_once('x') {
            let n: usize = n.trim().parse().map_err(|_| format!("bad layer count in {s:?}"))?;
            let w: usize = w.trim().parse().map_err(|_| format!("bad width in {s:?}"))?;
            vec![w; n]
        } else {
            s.split(',')
                .map(|w| w.trim().parse().map_err(|_| format!("bad width {w:?}")))
                .collect::<Result<_, _>>()?
        };
        if widths.is_empty() || widths.contains(&0) {
            return Err(format!(
                "hidden layout {s:?} needs at least one layer of positive width"
            ));
        }
        Ok(Hidden(widths))
    }
}

#[derive(Debug, Clone, Copy)]
struct Decay {
    factor: f64,
    every: usize,
}

impl FromStr for Decay {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (f, e) = s
            .split_once('@')
            .ok_or_else(|| format!("expected <factor>@<every>, got {s:?}"))?;
        let factor: f64 = f.trim().parse().map_err(|_| format!("bad decay factor {f:?}"))?;
        let every: usize = e.trim().parse().map_err(|_| format!("bad decay interval {e:?}"))?;
        Ok(Decay { factor, every })
    }
}

/// Worker threads available to data-parallel loops.
pub(crate) fn threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// Applies `HYBRIDFEM_THREADS` to the global pool.
fn configure_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var("HYBRIDFEM_THREADS") else {
        return Ok(());
    };
    let n: usize = match raw.trim().parse() {
        Ok(n) if n > 0 => n,
        _ => bail!(Usage(format!(
            "HYBRIDFEM_THREADS must be a positive integer, got {raw:?}"
        ))),
    };
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring the worker pool")?;
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn load_dataset(p: &Path) -> anyhow::Result<Dataset> {
    Dataset::load(p).with_context(|| format!("loading dataset {}", p.display()))
}

fn load_model(p: &Path) -> anyhow::Result<Model> {
    Model::load(p).with_context(|| format!("loading model {}", p.display()))
}

fn print_json<T: serde::Serialize>(v: &T) -> anyhow::Result<()> {
    println!("{}", hybridfem::io::to_json_string(v)?);
    Ok(())
}

fn generate(a: &GenerateArgs, exec: Exec) -> anyhow::Result<bool> {
    let start = Instant::now();
    let m = MeshHierarchy::new(a.n0, a.level)?;
    let count = usize::try_from(a.count)?;
    let d = generate_dataset(&m, count, a.seed, a.family, exec)?;
    d.save(&a.out)?;
    println!(
        "wrote {} samples to {} (H = {}, h = {})",
        d.len(),
        a.out.display(),
        m.coarse_h(),
        m.fine_h()
    );
    RunManifest::new(
        "generate",
        json!({"n0": a.n0, "level": a.level, "count": a.count, "family": a.family, "exec": exec}),
    )
    .seed("data", a.seed)
    .output(&a.out)
    .finish(&a.out, start.elapsed())?;
    Ok(true)
}

fn train_cmd(a: &TrainArgs, exec: Exec) -> anyhow::Result<bool> {
    let start = Instant::now();
    let train_set = load_dataset(&a.data)?;
    let test_set = a.test.as_deref().map(load_dataset).transpose()?;
    let cfg = TrainConfig {
        hidden: a.hidden.0.clone(),
        epochs: a.epochs,
        lr: a.lr,
        lr_decay_factor: a.decay.factor,
        lr_decay_every: a.decay.every,
        batch_size: a.batch_size,
        seed: a.seed,
        standardize: a.standardize,
        coarse_input: a.coarse_input,
        exec,
    };
    if let Err(e) = cfg.validate() {
        bail!(Usage(e.to_string()));
    }
    let out = train(&train_set, test_set.as_ref(), &cfg)?;
    out.model.save(&a.out)?;
    let loss_path = a.out.with_file_name("loss.csv");
    write_loss_csv(&loss_path, &out.history)?;
    let first = out.history.first().map_or(f64::NAN, |r| r.train_loss);
    let last = out.history.last().map_or(f64::NAN, |r| r.train_loss);
    println!(
        "trained {:?} for {} epochs: train loss {first:.4e} -> {last:.4e}; model {}",
        out.model.net.dims(),
        a.epochs,
        a.out.display()
    );
    let mut manifest = RunManifest::new("train", serde_json::to_value(&cfg)?)
        .seed("init", a.seed)
        .seed("train_data", train_set.seed)
        .input(&a.data);
    if let (Some(p), Some(d)) = (&a.test, &test_set) {
        manifest = manifest.input(p).seed("test_data", d.seed);
    }
    manifest
        .output(&a.out)
        .output(&loss_path)
        .finish(&a.out, start.elapsed())?;
    Ok(true)
}

fn evaluate_cmd(a: &EvaluateArgs, exec: Exec) -> anyhow::Result<bool> {
    let start = Instant::now();
    let model = load_model(&a.model)?;
    let train_set = load_dataset(&a.train)?;
    let test_set = load_dataset(&a.test)?;
    let rows = evaluate(&model, &train_set, &test_set, exec)?;
    write_eval_csv(&a.out, &rows)?;
    print!("{}", hybridfem::hybrid::eval_csv(&rows));
    RunManifest::new("evaluate", json!({"exec": exec}))
        .seed("train_data", train_set.seed)
        .seed("test_data", test_set.seed)
        .input(&a.model)
        .input(&a.train)
        .input(&a.test)
        .output(&a.out)
        .finish(&a.out, start.elapsed())?;
    Ok(true)
}

fn stability_cmd(a: &StabilityArgs) -> anyhow::Result<bool> {
    let start = Instant::now();
    let model = load_model(&a.model)?;
    let report = stability_check(&model, a.pairs, a.seed, a.family)?;
    print_json(&report)?;
    if let Some(out) = &a.out {
        hybridfem::io::write_json(out, &report)?;
        RunManifest::new("stability", json!({"pairs": a.pairs, "family": a.family}))
            .seed("pairs", a.seed)
            .input(&a.model)
            .output(out)
            .finish(out, start.elapsed())?;
    }
    eprintln!("stability: {}", if report.pass { "PASS" } else { "FAIL" });
    Ok(report.pass)
}

fn budget_cmd(a: &BudgetArgs, exec: Exec) -> anyhow::Result<bool> {
    let start = Instant::now();
    let model = load_model(&a.model)?;
    let data = load_dataset(&a.data)?;
    let c: [f64; 4] = a.fparams.as_slice().try_into().expect("clap enforces four values");
    let params = match SourceParams::new(c) {
        Ok(p) => p,
        Err(e) => bail!(Usage(e.to_string())),
    };
    let report = error_budget(&model, &data, params, exec)?;
    print_json(&report)?;
    if let Some(out) = &a.out {
        hybridfem::io::write_json(out, &report)?;
        RunManifest::new("budget", json!({"fparams": c, "exec": exec}))
            .seed("data", data.seed)
            .input(&a.model)
            .input(&a.data)
            .output(out)
            .finish(out, start.elapsed())?;
    }
    eprintln!("budget: {}", if report.holds { "PASS" } else { "FAIL" });
    Ok(report.holds)
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<Usage>().is_some() {
        return 2;
    }
    let numerical = e.chain().any(|c| {
        matches!(
            c.downcast_ref::<hybridfem::Error>(),
            Some(hybridfem::Error::NoConvergence { .. } | hybridfem::Error::Divergence { .. })
        )
    });
    if numerical {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let exec = if cli.sequential {
        Exec::Sequential
    } else {
        Exec::Parallel
    };
    let result = configure_threads().and_then(|()| match &cli.command {
        Command::Generate(a) => generate(a, exec),
        Command::Train(a) => train_cmd(a, exec),
        Command::Evaluate(a) => evaluate_cmd(a, exec),
        Command::Stability(a) => stability_cmd(a),
        Command::Budget(a) => budget_cmd(a, exec),
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
