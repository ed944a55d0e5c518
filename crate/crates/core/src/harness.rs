//! Experiment driver: model construction, data streams, the training loop,
//! metrics CSV, checkpoints, probes and evaluation.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;

use crate::baselines::{clip_gradients, LstmParams, RnnActivation, RnnParams};
use crate::checkpoint::{Checkpoint, NamedArray};
use crate::config::{ModelKind, RunConfig, TaskKind};
use crate::error::{Error, Result};
use crate::mnist::{load_mnist_idx, permute_pixels, MnistSet, MNIST_CLASSES};
use crate::model::{self, BatchResult, Grads, Recurrent};
use crate::optim::{init_urnn, RmsProp};
use crate::seed::{derive, rng_for, Stream};
use crate::tasks::{
    gen_adding_batch, gen_copy_batch, TaskBatch, ADDING_INPUT_DIM, COPY_INPUT_DIM, COPY_OUTPUT_DIM,
};
use crate::unitary::FixedPermutation;
use crate::urnn::{Activation, UrnnDims, UrnnParams};

pub const METRICS_HEADER: &str = "iter,train_loss,eval_loss,eval_metric,wallclock_s";

pub const MNIST_TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const MNIST_TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const MNIST_TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const MNIST_TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

/// `(n_in, n_out)` of a task.
pub fn task_dims(task: TaskKind) -> (usize, usize) {
    match task {
        TaskKind::Copy => (COPY_INPUT_DIM, COPY_OUTPUT_DIM),
        TaskKind::Adding => (ADDING_INPUT_DIM, 1),
        TaskKind::Mnist | TaskKind::MnistPermuted => (1, MNIST_CLASSES),
    }
}

// One long-lived value per run; boxing buys nothing.
#[allow(clippy::large_enum_variant)]
#[derive(Clone, Debug, PartialEq)]
pub enum AnyModel {
    Urnn(UrnnParams),
    Rnn(RnnParams),
    Lstm(LstmParams),
}

macro_rules! dispatch {
    ($self:expr, $m:ident => $body:expr) => {
        match $self {
            AnyModel::Urnn($m) => $body,
            AnyModel::Rnn($m) => $body,
            AnyModel::Lstm($m) => $body,
        }
    };
}

impl AnyModel {
    pub fn init(
        model: ModelKind,
        n_in: usize,
        n_h: usize,
        n_out: usize,
        seed: u64,
    ) -> Result<Self> {
        Ok(match model {
            ModelKind::Urnn => Self::Urnn(init_urnn(UrnnDims { n_in, n_h, n_out }, seed)?),
            ModelKind::RnnTanh => {
                Self::Rnn(RnnParams::init(n_in, n_h, n_out, RnnActivation::Tanh, seed))
            }
            ModelKind::Irnn => {
                Self::Rnn(RnnParams::init(n_in, n_h, n_out, RnnActivation::Relu, seed))
            }
            ModelKind::Lstm => Self::Lstm(LstmParams::init(n_in, n_h, n_out, seed)),
        })
    }

    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        let (n_in, n_out) = task_dims(cfg.task);
        Self::init(cfg.model, n_in, cfg.hidden, n_out, cfg.seed)
    }

    pub fn run_batch(
        &self,
        batch: &TaskBatch,
        want_grads: bool,
        want_probe: bool,
    ) -> Result<BatchResult> {
        dispatch!(self, m => model::run_batch(m, batch, want_grads, want_probe))
    }

    pub fn evaluate(&self, batch: &TaskBatch) -> Result<(f64, f64)> {
        dispatch!(self, m => model::evaluate(m, batch))
    }

    pub fn gradient_norm_probe(&self, batch: &TaskBatch) -> Result<Vec<f64>> {
        dispatch!(self, m => model::gradient_norm_probe(m, batch))
    }

    pub fn hidden_norm_probe(&self, batch: &TaskBatch) -> Result<(Vec<f64>, Vec<f64>)> {
        dispatch!(self, m => model::hidden_norm_probe(m, batch))
    }

    pub fn group_names(&self) -> Vec<&'static str> {
        dispatch!(self, m => m.param_groups().iter().map(|g| g.name).collect())
    }

    pub fn group_shapes(&self) -> Vec<Vec<usize>> {
        dispatch!(self, m => m.param_groups().into_iter().map(|g| g.shape).collect())
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        dispatch!(self, m => m.param_groups().iter().map(|g| g.data.len()).collect())
    }

    pub fn num_params(&self) -> usize {
        dispatch!(self, m => m.num_params())
    }

    fn apply_update(&mut self, opt: &mut RmsProp, grads: &Grads) -> Result<()> {
        let names = self.group_names();
        dispatch!(self, m => opt.update(&mut m.param_data_mut(), grads, &names))
    }

    /// Parameter groups as `param/<name>`, plus the fixed permutation and
    /// activation of a uRNN.
    pub fn to_named_arrays(&self) -> Vec<NamedArray> {
        let mut out: Vec<NamedArray> = dispatch!(self, m => m
            .param_groups()
            .into_iter()
            .map(|g| NamedArray {
                name: format!("param/{}", g.name),
                dims: g.shape,
                data: g.data.to_vec(),
            })
            .collect());
        if let Self::Urnn(p) = self {
            let perm: Vec<f64> = p.w.perm.indices.iter().map(|&i| i as f64).collect();
            out.push(NamedArray::vector("urnn/perm", &perm));
            let act = match p.activation {
                Activation::ModRelu => 0.0,
                Activation::Identity => 1.0,
            };
            out.push(NamedArray::vector("urnn/activation", &[act]));
        }
        out
    }

    /// Overwrites every parameter from `ck`; every group must exist with the
    /// same shape as in `self`.
    pub fn load_named_arrays(&mut self, ck: &Checkpoint) -> Result<()> {
        let names = self.group_names();
        let shapes = self.group_shapes();
        let sources = names
            .iter()
            .zip(&shapes)
            .map(|(n, s)| {
                ck.expect_group(&format!("param/{n}"), s)
                    .map(|g| g.data.clone())
            })
            .collect::<Result<Vec<_>>>()?;
        if let Self::Urnn(p) = self {
            let n_h = p.w.n();
            let perm = ck.expect_group("urnn/perm", &[n_h])?;
            let indices = perm
                .data
                .iter()
                .map(|&v| {
                    (v >= 0.0 && v.fract() == 0.0 && v < n_h as f64)
                        .then_some(v as usize)
                        .ok_or_else(|| Error::Consistency(format!("invalid permutation entry {v}")))
                })
                .collect::<Result<Vec<_>>>()?;
            if p.w.perm.indices != indices {
                p.w.perm = FixedPermutation::from_indices(indices)?;
            }
            p.activation = match ck.expect_group("urnn/activation", &[1])?.data[0] {
                0.0 => Activation::ModRelu,
                1.0 => Activation::Identity,
                a => return Err(Error::Consistency(format!("unknown activation code {a}"))),
            };
        }
        dispatch!(self, m => {
            for (dst, src) in m.param_data_mut().into_iter().zip(&sources) {
                dst.copy_from_slice(src);
            }
        });
        Ok(())
    }
}

/// Batch source for one configured task.
#[allow(clippy::large_enum_variant)]
pub enum TaskData {
    Copy {
        lag: usize,
    },
    Adding {
        steps: usize,
    },
    Mnist {
        train: MnistSet,
        test: MnistSet,
        /// Epoch whose shuffled order is cached in `order`.
        epoch: Option<usize>,
        order: Vec<usize>,
    },
}

/// Loads `(train, test)` from the standard file names in `dir`.
pub fn load_mnist_dir(dir: &Path) -> Result<(MnistSet, MnistSet)> {
    let load = |images: &str, labels: &str| -> Result<MnistSet> {
        load_mnist_idx(dir.join(images), dir.join(labels)).map_err(|e| match e {
            Error::Io(io) => Error::Data(format!(
                "cannot read MNIST files in {}: {io}",
                dir.display()
            )),
            other => other,
        })
    };
    Ok((
        load(MNIST_TRAIN_IMAGES, MNIST_TRAIN_LABELS)?,
        load(MNIST_TEST_IMAGES, MNIST_TEST_LABELS)?,
    ))
}

impl TaskData {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        Ok(match cfg.task {
            TaskKind::Copy => Self::Copy { lag: cfg.steps },
            TaskKind::Adding => Self::Adding { steps: cfg.steps },
            TaskKind::Mnist | TaskKind::MnistPermuted => {
                let dir = cfg
                    .mnist_dir
                    .as_deref()
                    .ok_or_else(|| Error::Config(format!("task {} needs mnist_dir", cfg.task)))?;
                let (train, test) = load_mnist_dir(dir)?;
                Self::from_mnist(cfg, train, test)?
            }
        })
    }

    /// Applies the configured subset limits and pixel permutation.
    pub fn from_mnist(cfg: &RunConfig, train: MnistSet, test: MnistSet) -> Result<Self> {
        let mut train = match cfg.mnist_train_limit {
            Some(n) => train.truncate(n),
            None => train,
        };
        let mut test = match cfg.mnist_test_limit {
            Some(n) => test.truncate(n),
            None => test,
        };
        if train.is_empty() || test.is_empty() {
            return Err(Error::Data("MNIST subset is empty".into()));
        }
        if cfg.task == TaskKind::MnistPermuted {
            train = permute_pixels(&train, cfg.seed);
            test = permute_pixels(&test, cfg.seed);
        }
        Ok(Self::Mnist {
            train,
            test,
            epoch: None,
            order: Vec::new(),
        })
    }

    /// Batch for optimization step `iter`. MNIST walks reshuffled epochs.
    pub fn train_batch(&mut self, seed: u64, iter: usize, size: usize) -> Result<TaskBatch> {
        let stream_seed = derive(seed, Stream::TrainBatch, iter as u64);
        match self {
            Self::Copy { lag } => Ok(gen_copy_batch(*lag, size, stream_seed)?.to_task_batch()),
            Self::Adding { steps } => {
                Ok(gen_adding_batch(*steps, size, stream_seed)?.to_task_batch())
            }
            Self::Mnist {
                train,
                epoch,
                order,
                ..
            } => {
                let n = train.len();
                let mut indices = Vec::with_capacity(size);
                for pos in iter * size..(iter + 1) * size {
                    let e = pos / n;
                    if *epoch != Some(e) {
                        *order = (0..n).collect();
                        order.shuffle(&mut rng_for(seed, Stream::Shuffle, e as u64));
                        *epoch = Some(e);
                    }
                    indices.push(order[pos % n]);
                }
                Ok(train.to_task_batch(&indices))
            }
        }
    }

    /// Held-out batch: fresh draws from a separate stream for generated
    /// tasks, the first `size` test images for MNIST.
    pub fn eval_batch(
        &self,
        seed: u64,
        index: usize,
        size: usize,
        stream: Stream,
    ) -> Result<TaskBatch> {
        let stream_seed = derive(seed, stream, index as u64);
        match self {
            Self::Copy { lag } => Ok(gen_copy_batch(*lag, size, stream_seed)?.to_task_batch()),
            Self::Adding { steps } => {
                Ok(gen_adding_batch(*steps, size, stream_seed)?.to_task_batch())
            }
            Self::Mnist { test, .. } => {
                let indices: Vec<usize> = (0..size.min(test.len())).collect();
                Ok(test.to_task_batch(&indices))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsRecord {
    pub iter: usize,
    pub train_loss: f64,
    pub eval_loss: f64,
    /// Recall accuracy (copy), test accuracy (MNIST) or MSE (adding).
    pub eval_metric: f64,
    pub wallclock_s: f64,
}

impl MetricsRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.3}",
            self.iter, self.train_loss, self.eval_loss, self.eval_metric, self.wallclock_s
        )
    }
}

pub struct TrainingOutcome {
    pub records: Vec<MetricsRecord>,
    pub model: AnyModel,
    pub optimizer: RmsProp,
    /// Optimization steps actually taken.
    pub iters_done: usize,
}

impl TrainingOutcome {
    pub fn final_record(&self) -> MetricsRecord {
        *self.records.last().expect("at least one record")
    }
}

pub fn make_checkpoint(
    cfg: &RunConfig,
    iter: usize,
    model: &AnyModel,
    opt: &RmsProp,
) -> Checkpoint {
    let mut groups = model.to_named_arrays();
    for (name, acc) in model.group_names().iter().zip(&opt.accum) {
        groups.push(NamedArray::vector(format!("rmsprop/{name}"), acc));
    }
    groups.push(NamedArray::vector(
        "rmsprop/hyper",
        &[opt.lr, opt.decay, opt.eps],
    ));
    Checkpoint::new(iter as u64, cfg.clone(), groups)
}

/// Rebuilds the model described by the checkpoint's own config.
pub fn restore_model(ck: &Checkpoint) -> Result<AnyModel> {
    let mut model = AnyModel::from_config(&ck.config)?;
    model.load_named_arrays(ck)?;
    Ok(model)
}

pub fn restore_optimizer(ck: &Checkpoint, model: &AnyModel) -> Result<RmsProp> {
    let hyper = ck.expect_group("rmsprop/hyper", &[3])?;
    let mut opt = RmsProp::new(hyper.data[0], hyper.data[1], &model.group_sizes());
    opt.eps = hyper.data[2];
    for (name, acc) in model.group_names().iter().zip(&mut opt.accum) {
        let g = ck.expect_group(&format!("rmsprop/{name}"), &[acc.len()])?;
        acc.copy_from_slice(&g.data);
    }
    Ok(opt)
}

/// Where a diagnostic checkpoint goes when training aborts.
pub fn diagnostic_path(cfg: &RunConfig) -> Option<PathBuf> {
    let base = cfg.checkpoint.as_ref().or(cfg.out.as_ref())?;
    let mut name = base.file_name()?.to_os_string();
    name.push(".diag.ckpt");
    Some(base.with_file_name(name))
}

struct MetricsSink {
    out: Option<BufWriter<File>>,
}

impl MetricsSink {
    fn open(path: Option<&Path>) -> Result<Self> {
        let out = match path {
            Some(p) => {
                let mut w = BufWriter::new(File::create(p)?);
                writeln!(w, "{METRICS_HEADER}")?;
                w.flush()?;
                Some(w)
            }
            None => None,
        };
        Ok(Self { out })
    }

    fn write(&mut self, r: &MetricsRecord) -> Result<()> {
        if let Some(w) = self.out.as_mut() {
            writeln!(w, "{}", r.csv_row())?;
            w.flush()?;
        }
        Ok(())
    }
}

/// Trains per `cfg`, writing metrics to `cfg.out` and the final model to
/// `cfg.checkpoint` when set. Returns the last metrics record.
pub fn run_training(cfg: &RunConfig) -> Result<MetricsRecord> {
    Ok(train(cfg, |_| true)?.final_record())
}

/// The training loop. Step `k` evaluates batch `k`, records metrics at
/// `k = 0`, every `eval_every` steps and at `k = iters`, then updates (for
/// `k < iters`). `observe` sees each record; returning `false` stops early.
pub fn train(
    cfg: &RunConfig,
    observe: impl FnMut(&MetricsRecord) -> bool,
) -> Result<TrainingOutcome> {
    cfg.validate()?;
    let data = TaskData::new(cfg)?;
    train_with_data(cfg, data, observe)
}

pub fn train_with_data(
    cfg: &RunConfig,
    mut data: TaskData,
    mut observe: impl FnMut(&MetricsRecord) -> bool,
) -> Result<TrainingOutcome> {
    cfg.validate()?;
    let mut model = AnyModel::from_config(cfg)?;
    let mut opt = RmsProp::new(cfg.lr, cfg.decay, &model.group_sizes());
    let mut sink = MetricsSink::open(cfg.out.as_deref())?;
    let start = Instant::now();
    let mut records = Vec::new();

    let abort = |model: &AnyModel, opt: &RmsProp, iter: usize, err: Error| -> Error {
        if let Some(path) = diagnostic_path(cfg) {
            if let Err(e) = make_checkpoint(cfg, iter, model, opt).save(&path) {
                return Error::Consistency(format!("{err}; diagnostic checkpoint failed: {e}"));
            }
        }
        err
    };

    let mut iter = 0;
    loop {
        let last = iter == cfg.iters;
        let batch = data.train_batch(cfg.seed, iter, cfg.batch)?;
        let result = model.run_batch(&batch, !last, false)?;
        if !result.loss.is_finite() {
            return Err(abort(&model, &opt, iter, Error::NonFiniteLoss { iter }));
        }

        if iter % cfg.eval_every == 0 || last {
            let eval = data.eval_batch(cfg.seed, iter, cfg.eval_batch, Stream::EvalBatch)?;
            let (eval_loss, eval_metric) = model.evaluate(&eval)?;
            let record = MetricsRecord {
                iter,
                train_loss: result.loss,
                eval_loss,
                eval_metric,
                wallclock_s: start.elapsed().as_secs_f64(),
            };
            sink.write(&record)?;
            records.push(record);
            if !observe(&record) {
                break;
            }
        }
        if last {
            break;
        }

        let mut grads = result.grads.expect("requested");
        if let Some(c) = cfg.clip {
            clip_gradients(&mut grads, c);
        }
        if let Err(e) = model.apply_update(&mut opt, &grads) {
            return Err(abort(&model, &opt, iter, e));
        }
        iter += 1;
    }

    if let Some(path) = &cfg.checkpoint {
        make_checkpoint(cfg, iter, &model, &opt).save(path)?;
    }
    Ok(TrainingOutcome {
        records,
        model,
        optimizer: opt,
        iters_done: iter,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProbeKind {
    GradNorms,
    HiddenNorms,
}

impl std::str::FromStr for ProbeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grad_norms" => Ok(Self::GradNorms),
            "hidden_norms" => Ok(Self::HiddenNorms),
            _ => Err(Error::Config(format!(
                "unknown probe '{s}' (expected grad_norms or hidden_norms)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ProbeOutput {
    /// Batch-averaged `‖∂C/∂h_t‖`, `t = 1..=T`.
    GradNorms(Vec<f64>),
    HiddenNorms {
        norms: Vec<f64>,
        dist_to_final: Vec<f64>,
    },
}

impl ProbeOutput {
    pub fn len(&self) -> usize {
        match self {
            Self::GradNorms(v) => v.len(),
            Self::HiddenNorms { norms, .. } => norms.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        match self {
            Self::GradNorms(v) => {
                s.push_str("t,value\n");
                for (t, x) in v.iter().enumerate() {
                    s.push_str(&format!("{},{x}\n", t + 1));
                }
            }
            Self::HiddenNorms {
                norms,
                dist_to_final,
            } => {
                s.push_str("t,norm,dist_to_final\n");
                for (t, (n, d)) in norms.iter().zip(dist_to_final).enumerate() {
                    s.push_str(&format!("{},{n},{d}\n", t + 1));
                }
            }
        }
        s
    }
}

fn check_matches(cfg: &RunConfig, ck: &Checkpoint) -> Result<()> {
    let c = &ck.config;
    if (c.model, c.hidden) != (cfg.model, cfg.hidden) || task_dims(c.task) != task_dims(cfg.task) {
        return Err(Error::Consistency(format!(
            "checkpoint holds {} (hidden {}, task {}) but the run is configured for {} (hidden {}, task {})",
            c.model, c.hidden, c.task, cfg.model, cfg.hidden, cfg.task
        )));
    }
    Ok(())
}

/// Per-step probe of the model in `checkpoint` (or a fresh initialization
/// from `cfg`) on a new batch of length `t_eval`.
pub fn run_probes(
    cfg: &RunConfig,
    checkpoint: Option<&Checkpoint>,
    probe: ProbeKind,
    t_eval: usize,
) -> Result<ProbeOutput> {
    let probe_cfg = RunConfig {
        steps: t_eval,
        ..cfg.clone()
    };
    probe_cfg.validate()?;
    let mut model = AnyModel::from_config(cfg)?;
    if let Some(ck) = checkpoint {
        check_matches(cfg, ck)?;
        model.load_named_arrays(ck)?;
    }
    let data = TaskData::new(&probe_cfg)?;
    let batch = data.eval_batch(cfg.seed, 0, cfg.eval_batch, Stream::ProbeBatch)?;
    Ok(match probe {
        ProbeKind::GradNorms => ProbeOutput::GradNorms(model.gradient_norm_probe(&batch)?),
        ProbeKind::HiddenNorms => {
            let (norms, dist_to_final) = model.hidden_norm_probe(&batch)?;
            ProbeOutput::HiddenNorms {
                norms,
                dist_to_final,
            }
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalResult {
    pub loss: f64,
    pub metric: f64,
    pub batch: usize,
}

pub const EVAL_HEADER: &str = "task,T,batch,eval_loss,eval_metric";

/// Evaluates the checkpointed model on a fresh held-out batch of the task
/// in `cfg`, which must have the same input and output sizes.
pub fn evaluate_checkpoint(cfg: &RunConfig, ck: &Checkpoint) -> Result<EvalResult> {
    cfg.validate()?;
    check_matches(cfg, ck)?;
    let mut model = AnyModel::from_config(cfg)?;
    model.load_named_arrays(ck)?;
    let data = TaskData::new(cfg)?;
    let batch = data.eval_batch(cfg.seed, 0, cfg.eval_batch, Stream::ProbeBatch)?;
    let (loss, metric) = model.evaluate(&batch)?;
    Ok(EvalResult {
        loss,
        metric,
        batch: batch.len(),
    })
}

pub fn eval_csv(cfg: &RunConfig, r: &EvalResult) -> String {
    format!(
        "{EVAL_HEADER}\n{},{},{},{},{}\n",
        cfg.task, cfg.steps, r.batch, r.loss, r.metric
    )
}
