//! Experiment configuration: a flat `key = value` text format whose keys
//! mirror the command-line flags one to one.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::optim::{DEFAULT_DECAY, DEFAULT_LR, RMSPROP_EPS};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Urnn,
    RnnTanh,
    Irnn,
    Lstm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskKind {
    Copy,
    Adding,
    Mnist,
    MnistPermuted,
}

macro_rules! keyword_enum {
    ($ty:ty, $what:literal, $($variant:ident => $name:literal),+ $(,)?) => {
        impl $ty {
            pub const NAMES: &'static [&'static str] = &[$($name),+];

            pub fn name(self) -> &'static str {
                match self { $(Self::$variant => $name),+ }
            }
        }

        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok(Self::$variant),)+
                    _ => Err(Error::Config(format!(
                        "unknown {} '{s}' (expected one of: {})", $what, Self::NAMES.join(", ")
                    ))),
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }
    };
}

keyword_enum!(ModelKind, "model", Urnn => "urnn", RnnTanh => "rnn_tanh", Irnn => "irnn", Lstm => "lstm");
keyword_enum!(TaskKind, "task", Copy => "copy", Adding => "adding", Mnist => "mnist", MnistPermuted => "mnist_permuted");

impl TaskKind {
    pub fn is_mnist(self) -> bool {
        matches!(self, Self::Mnist | Self::MnistPermuted)
    }
}

/// Default clipping threshold for the non-unitary baselines.
pub const BASELINE_CLIP: f64 = 1.0;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelKind,
    pub task: TaskKind,
    /// Sequence length: the copy lag, the adding length. Ignored for MNIST,
    /// whose length is fixed by the image size.
    pub steps: usize,
    pub hidden: usize,
    pub lr: f64,
    pub decay: f64,
    pub batch: usize,
    pub iters: usize,
    pub seed: u64,
    /// Global-norm clipping threshold; `None` disables clipping.
    pub clip: Option<f64>,
    pub eval_every: usize,
    pub eval_batch: usize,
    pub out: Option<PathBuf>,
    /// Where the final model is saved.
    pub checkpoint: Option<PathBuf>,
    /// Directory holding the four standard IDX files.
    pub mnist_dir: Option<PathBuf>,
    pub mnist_train_limit: Option<usize>,
    pub mnist_test_limit: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Urnn,
            task: TaskKind::Copy,
            steps: 100,
            hidden: 128,
            lr: DEFAULT_LR,
            decay: DEFAULT_DECAY,
            batch: 20,
            iters: 10_000,
            seed: 42,
            clip: None,
            eval_every: 100,
            eval_batch: 100,
            out: None,
            checkpoint: None,
            mnist_dir: None,
            mnist_train_limit: None,
            mnist_test_limit: None,
        }
    }
}

/// Every accepted key, in the order [`RunConfig::to_text`] writes them.
pub const CONFIG_KEYS: &[&str] = &[
    "model",
    "task",
    "T",
    "hidden",
    "lr",
    "decay",
    "batch",
    "iters",
    "seed",
    "clip",
    "eval_every",
    "eval_batch",
    "out",
    "checkpoint",
    "mnist_dir",
    "mnist_train_limit",
    "mnist_test_limit",
];

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{value}' for '{key}'")))
}

fn parse_opt<T: FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    match value {
        "" | "none" => Ok(None),
        v => parse_num(key, v).map(Some),
    }
}

fn parse_path(value: &str) -> Option<PathBuf> {
    match value {
        "" | "none" => None,
        v => Some(PathBuf::from(v)),
    }
}

impl RunConfig {
    /// Default configuration for `model`, including baseline clipping.
    pub fn for_model(model: ModelKind) -> Self {
        let mut cfg = Self {
            model,
            ..Self::default()
        };
        if model != ModelKind::Urnn {
            cfg.clip = Some(BASELINE_CLIP);
        }
        cfg
    }

    /// Sets a single key. Setting `model` also resets `clip` to that model's
    /// default, so a later `clip` key still wins.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "model" => {
                self.model = value.parse()?;
                self.clip = (self.model != ModelKind::Urnn).then_some(BASELINE_CLIP);
            }
            "task" => self.task = value.parse()?,
            "T" => self.steps = parse_num(key, value)?,
            "hidden" => self.hidden = parse_num(key, value)?,
            "lr" => self.lr = parse_num(key, value)?,
            "decay" => self.decay = parse_num(key, value)?,
            "batch" => self.batch = parse_num(key, value)?,
            "iters" => self.iters = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "clip" => self.clip = parse_opt(key, value)?,
            "eval_every" => self.eval_every = parse_num(key, value)?,
            "eval_batch" => self.eval_batch = parse_num(key, value)?,
            "out" => self.out = parse_path(value),
            "checkpoint" => self.checkpoint = parse_path(value),
            "mnist_dir" => self.mnist_dir = parse_path(value),
            "mnist_train_limit" => self.mnist_train_limit = parse_opt(key, value)?,
            "mnist_test_limit" => self.mnist_test_limit = parse_opt(key, value)?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Applies `pairs` with `model` first, so an explicit `clip` is never
    /// overridden by the model default. Later duplicates win.
    pub fn apply_pairs(&mut self, pairs: &[(String, String)]) -> Result<()> {
        let mut ordered: Vec<&(String, String)> = pairs.iter().collect();
        ordered.sort_by_key(|(k, _)| k != "model");
        for (k, v) in ordered {
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Parses `key = value` lines; blank lines and `#` comments are skipped.
    pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
        let mut pairs = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(pairs)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        self.apply_pairs(&Self::parse_pairs(text)?)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    /// Serializes every key; `from_text(to_text())` reproduces `self`.
    pub fn to_text(&self) -> String {
        fn opt<T: ToString>(v: &Option<T>) -> String {
            v.as_ref().map_or_else(|| "none".into(), T::to_string)
        }
        fn path(v: &Option<PathBuf>) -> String {
            v.as_ref()
                .map_or_else(|| "none".into(), |p| p.display().to_string())
        }
        let values = [
            self.model.to_string(),
            self.task.to_string(),
            self.steps.to_string(),
            self.hidden.to_string(),
            self.lr.to_string(),
            self.decay.to_string(),
            self.batch.to_string(),
            self.iters.to_string(),
            self.seed.to_string(),
            opt(&self.clip),
            self.eval_every.to_string(),
            self.eval_batch.to_string(),
            path(&self.out),
            path(&self.checkpoint),
            path(&self.mnist_dir),
            opt(&self.mnist_train_limit),
            opt(&self.mnist_test_limit),
        ];
        let header = format!(
            "# optimizer: rmsprop, accum = decay*accum + (1-decay)*g^2, step = lr*g/(sqrt(accum)+{RMSPROP_EPS:e})\n"
        );
        CONFIG_KEYS
            .iter()
            .zip(values)
            .fold(header, |acc, (k, v)| acc + &format!("{k} = {v}\n"))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.hidden == 0 {
            return bad("hidden must be positive".into());
        }
        if self.model == ModelKind::Urnn && !self.hidden.is_power_of_two() {
            return bad(format!(
                "hidden = {} must be a power of two for the urnn",
                self.hidden
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr = {} must be positive", self.lr));
        }
        if !(0.0..1.0).contains(&self.decay) {
            return bad(format!("decay = {} must lie in [0, 1)", self.decay));
        }
        if self.batch == 0 || self.eval_batch == 0 {
            return bad("batch sizes must be positive".into());
        }
        if self.eval_every == 0 {
            return bad("eval_every must be positive".into());
        }
        if let Some(c) = self.clip {
            if !(c > 0.0 && c.is_finite()) {
                return bad(format!("clip = {c} must be positive"));
            }
        }
        match self.task {
            TaskKind::Copy if self.steps == 0 => return bad("copy lag T must be positive".into()),
            TaskKind::Adding if self.steps < 2 => return bad("adding task needs T >= 2".into()),
            t if t.is_mnist() && self.mnist_dir.is_none() => {
                return bad(format!("task {t} needs mnist_dir"));
            }
            _ => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let cfg = RunConfig {
            model: ModelKind::Lstm,
            task: TaskKind::MnistPermuted,
            steps: 7,
            lr: 3.5e-4,
            clip: Some(0.5),
            out: Some("m.csv".into()),
            mnist_dir: Some("/data/mnist".into()),
            mnist_train_limit: Some(1000),
            ..RunConfig::default()
        };
        assert_eq!(RunConfig::from_text(&cfg.to_text()).unwrap(), cfg);
        let d = RunConfig::default();
        assert_eq!(RunConfig::from_text(&d.to_text()).unwrap(), d);
    }

    #[test]
    fn model_sets_default_clip_but_explicit_clip_wins() {
        assert_eq!(
            RunConfig::from_text("model = lstm").unwrap().clip,
            Some(1.0)
        );
        assert_eq!(RunConfig::from_text("model = urnn").unwrap().clip, None);
        let cfg = RunConfig::from_text("clip = none\nmodel = irnn # comment\n").unwrap();
        assert_eq!(cfg.clip, None);
        assert_eq!(RunConfig::for_model(ModelKind::RnnTanh).clip, Some(1.0));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(RunConfig::from_text("colour = red").is_err());
        assert!(RunConfig::from_text("hidden 12").is_err());
        assert!(RunConfig::from_text("model = gru").is_err());
        assert!(RunConfig::from_text("lr = fast").is_err());
        let cfg = RunConfig {
            hidden: 12,
            ..RunConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert!(RunConfig {
            model: ModelKind::Lstm,
            ..cfg
        }
        .validate()
        .is_ok());
        assert!(RunConfig {
            task: TaskKind::Mnist,
            ..RunConfig::default()
        }
        .validate()
        .is_err());
        assert!(RunConfig {
            decay: 1.0,
            ..RunConfig::default()
        }
        .validate()
        .is_err());
        assert!(RunConfig {
            task: TaskKind::Adding,
            steps: 1,
            ..RunConfig::default()
        }
        .validate()
        .is_err());
    }
}
