use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use urnn_core::harness::{
    eval_csv, evaluate_checkpoint, run_probes, train, ProbeKind, METRICS_HEADER,
};
use urnn_core::{Checkpoint, RunConfig};

#[derive(Parser)]
#[command(
    name = "urnn",
    version,
    about = "Train and probe unitary-evolution RNNs and baselines"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model, writing metrics CSV and optionally a checkpoint
    Train(TrainArgs),
    /// Per-step gradient or hidden-state norms on a fresh batch
    Probe(ProbeArgs),
    /// Loss and metric of a checkpoint on a fresh held-out batch
    Eval(EvalArgs),
}

/// Flags mirroring the config-file keys; unset flags fall back to the file,
/// then to built-in defaults.
#[derive(Args, Default)]
struct ConfigFlags {
    /// urnn, rnn_tanh, irnn or lstm
    #[arg(long)]
    model: Option<String>,
    /// copy, adding, mnist or mnist_permuted
    #[arg(long)]
    task: Option<String>,
    /// Sequence length (copy lag, adding length)
    #[arg(long = "T")]
    steps: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    decay: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Global-norm gradient clipping threshold, or "none"
    #[arg(long)]
    clip: Option<String>,
    #[arg(long = "eval-every")]
    eval_every: Option<usize>,
    #[arg(long = "eval-batch")]
    eval_batch: Option<usize>,
    /// Directory with the four standard MNIST IDX files
    #[arg(long = "mnist-dir")]
    mnist_dir: Option<PathBuf>,
    #[arg(long = "mnist-train-limit")]
    mnist_train_limit: Option<usize>,
    #[arg(long = "mnist-test-limit")]
    mnist_test_limit: Option<usize>,
    /// key = value config file; flags override it
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigFlags {
    fn pairs(&self) -> Vec<(String, String)> {
        fn push<T: ToString>(out: &mut Vec<(String, String)>, key: &str, v: &Option<T>) {
            if let Some(v) = v {
                out.push((key.to_string(), v.to_string()));
            }
        }
        let mut out = Vec::new();
        push(&mut out, "model", &self.model);
        push(&mut out, "task", &self.task);
        push(&mut out, "T", &self.steps);
        push(&mut out, "hidden", &self.hidden);
        push(&mut out, "lr", &self.lr);
        push(&mut out, "decay", &self.decay);
        push(&mut out, "batch", &self.batch);
        push(&mut out, "iters", &self.iters);
        push(&mut out, "seed", &self.seed);
        push(&mut out, "clip", &self.clip);
        push(&mut out, "eval_every", &self.eval_every);
        push(&mut out, "eval_batch", &self.eval_batch);
        push(
            &mut out,
            "mnist_dir",
            &self.mnist_dir.as_ref().map(|p| p.display()),
        );
        push(&mut out, "mnist_train_limit", &self.mnist_train_limit);
        push(&mut out, "mnist_test_limit", &self.mnist_test_limit);
        out
    }

    /// File pairs first, then flags, applied in one pass so an explicit
    /// `clip` survives the per-model default wherever it came from.
    fn build_on(&self, mut cfg: RunConfig, extra: Vec<(String, String)>) -> Result<RunConfig> {
        let mut pairs = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                RunConfig::parse_pairs(&text)?
            }
            None => Vec::new(),
        };
        pairs.extend(self.pairs());
        pairs.extend(extra);
        cfg.apply_pairs(&pairs)?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    cfg: ConfigFlags,
    /// Metrics CSV path
    #[arg(long)]
    out: Option<PathBuf>,
    /// Save the final model here
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Args)]
struct ProbeArgs {
    /// Trained model; without it the probe runs at initialization
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// grad_norms or hidden_norms
    #[arg(long, default_value = "grad_norms")]
    probe: String,
    #[command(flatten)]
    cfg: ConfigFlags,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    cfg: ConfigFlags,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn emit(out: Option<&PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_checkpoint(path: &PathBuf) -> Result<Checkpoint> {
    Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let mut extra = Vec::new();
    if let Some(p) = &args.out {
        extra.push(("out".into(), p.display().to_string()));
    }
    if let Some(p) = &args.checkpoint {
        extra.push(("checkpoint".into(), p.display().to_string()));
    }
    let cfg = args.cfg.build_on(RunConfig::default(), extra)?;
    let to_stdout = cfg.out.is_none();
    if to_stdout {
        println!("{METRICS_HEADER}");
    }
    let outcome = train(&cfg, |r| {
        if to_stdout {
            println!("{}", r.csv_row());
        }
        true
    })?;
    let last = outcome.final_record();
    eprintln!(
        "{} on {} (T={}, hidden={}, {} params): {} steps, eval loss {}, eval metric {}",
        cfg.model,
        cfg.task,
        cfg.steps,
        cfg.hidden,
        outcome.model.num_params(),
        outcome.iters_done,
        last.eval_loss,
        last.eval_metric
    );
    Ok(())
}

fn cmd_probe(args: &ProbeArgs) -> Result<()> {
    let kind: ProbeKind = args.probe.parse()?;
    let ck = args.checkpoint.as_ref().map(load_checkpoint).transpose()?;
    let base = ck
        .as_ref()
        .map_or_else(RunConfig::default, |c| c.config.clone());
    let cfg = args.cfg.build_on(base, Vec::new())?;
    if ck.is_some() && (args.cfg.model.is_some() || args.cfg.hidden.is_some()) {
        bail!("--model and --hidden come from the checkpoint and cannot be overridden");
    }
    let output = run_probes(&cfg, ck.as_ref(), kind, cfg.steps)?;
    emit(args.out.as_ref(), &output.to_csv())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let ck = load_checkpoint(&args.checkpoint)?;
    if args.cfg.model.is_some() || args.cfg.hidden.is_some() {
        bail!("--model and --hidden come from the checkpoint and cannot be overridden");
    }
    let cfg = args.cfg.build_on(ck.config.clone(), Vec::new())?;
    let result = evaluate_checkpoint(&cfg, &ck)?;
    emit(args.out.as_ref(), &eval_csv(&cfg, &result))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Probe(a) => cmd_probe(a),
        Command::Eval(a) => cmd_eval(a),
    }
}
