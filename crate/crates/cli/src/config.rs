//! Run configuration: built-in defaults, then a config file, then flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use phaseret::cascade::{CascadeSpec, TrainConfig};
use phaseret::data_io::{default_data_root, DatasetName};
use phaseret::nn::LossKind;
use phaseret::solvers::SolverKind;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Hio,
    Raar,
    Er,
    Mlp,
    Cpr,
    CprFs,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Hio => "hio",
            Method::Raar => "raar",
            Method::Er => "er",
            Method::Mlp => "mlp",
            Method::Cpr => "cpr",
            Method::CprFs => "cpr-fs",
        }
    }

    pub fn solver(self) -> Option<SolverKind> {
        match self {
            Method::Hio => Some(SolverKind::Hio),
            Method::Raar => Some(SolverKind::Raar),
            Method::Er => Some(SolverKind::ErrorReduction),
            _ => None,
        }
    }

    /// Cascade layout for network methods; `q` only affects `cpr-fs`.
    pub fn spec(self, q: usize) -> Option<CascadeSpec> {
        match self {
            Method::Mlp => Some(CascadeSpec::mlp()),
            Method::Cpr => Some(CascadeSpec::cpr()),
            Method::CprFs => Some(CascadeSpec::cpr_fs(q)),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hio" => Ok(Method::Hio),
            "raar" => Ok(Method::Raar),
            "er" => Ok(Method::Er),
            "mlp" => Ok(Method::Mlp),
            "cpr" => Ok(Method::Cpr),
            "cpr-fs" | "cprfs" | "cpr_fs" => Ok(Method::CprFs),
            other => bail!("unknown method '{other}' (expected hio, raar, er, mlp, cpr or cpr-fs)"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    /// `None` selects the solver's default.
    pub beta: Option<f64>,
    pub iterations: usize,
    pub restarts: usize,
    pub clip_output: bool,
    /// Measurement side `m ≥ n` with a known corner support; 0 measures at `n`.
    pub oversample: usize,
}

/// Fully resolved settings of one invocation; written to `run.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub dataset: DatasetName,
    pub data_root: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
    /// Images drawn from the split the command consumes (0 = all).
    pub subset: usize,
    /// Test images for commands that both train and evaluate (0 = all).
    pub test_subset: usize,
    /// Worker threads (0 = one per core).
    pub threads: usize,
    pub method: Method,
    /// Methods compared by `bench`.
    pub methods: Vec<Method>,
    pub solver: SolverSettings,
    pub train: TrainConfig,
    /// Stage count for `cpr-fs`.
    pub q: usize,
    pub max_q: usize,
    pub dropout: f64,
    /// Divisor applied to magnitudes before they enter a network; `None` uses `n`.
    pub normalization: Option<f64>,
    pub checkpoint: Option<PathBuf>,
    /// Keep a snapshot every this many epochs besides the rolling `last` (0 = never).
    pub checkpoint_every: usize,
    /// Images shown in output grids.
    pub grid_count: usize,
}

impl RunConfig {
    pub fn defaults(command: &str) -> Self {
        let (method, epochs) = match command {
            "train" => (Method::Cpr, 100),
            "ablate" => (Method::CprFs, 50),
            "eval" => (Method::Cpr, 100),
            "bench" => (Method::Hio, 100),
            _ => (Method::Hio, 100),
        };
        RunConfig {
            command: command.to_string(),
            dataset: DatasetName::Mnist,
            data_root: default_data_root(),
            out: PathBuf::from("runs").join(command),
            seed: 0,
            subset: 0,
            test_subset: 0,
            threads: 0,
            method,
            methods: vec![Method::Hio, Method::Raar, Method::Mlp, Method::Cpr],
            solver: SolverSettings {
                beta: None,
                iterations: 1000,
                restarts: 3,
                clip_output: true,
                oversample: 0,
            },
            train: TrainConfig {
                epochs,
                ..TrainConfig::default()
            },
            q: 5,
            max_q: 5,
            dropout: 0.2,
            normalization: None,
            checkpoint: None,
            checkpoint_every: 0,
            grid_count: 16,
        }
    }

    /// Apply one `key = value` setting. Keys use the long flag names;
    /// `_` and `-` are interchangeable.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().to_ascii_lowercase().replace('_', "-");
        let value = value.trim();
        let ctx = || format!("invalid value '{value}' for '{key}'");
        match key.as_str() {
            "dataset" => self.dataset = value.parse().with_context(ctx)?,
            "data-root" => self.data_root = PathBuf::from(value),
            "out" => self.out = PathBuf::from(value),
            "seed" => {
                self.seed = value.parse().with_context(ctx)?;
                self.train.seed = self.seed;
            }
            "subset" => self.subset = value.parse().with_context(ctx)?,
            "test-subset" => self.test_subset = value.parse().with_context(ctx)?,
            "threads" => self.threads = value.parse().with_context(ctx)?,
            "method" => self.method = value.parse()?,
            "methods" => {
                self.methods = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(Method::from_str)
                    .collect::<Result<_>>()?
            }
            "beta" => self.solver.beta = Some(value.parse().with_context(ctx)?),
            "iters" | "iterations" => self.solver.iterations = value.parse().with_context(ctx)?,
            "restarts" => self.solver.restarts = value.parse().with_context(ctx)?,
            "clip" | "clip-output" => self.solver.clip_output = value.parse().with_context(ctx)?,
            "oversample" => self.solver.oversample = value.parse().with_context(ctx)?,
            "epochs" => self.train.epochs = value.parse().with_context(ctx)?,
            "batch-size" => self.train.batch_size = value.parse().with_context(ctx)?,
            "lr" | "learning-rate" => self.train.learning_rate = value.parse().with_context(ctx)?,
            "val-fraction" => self.train.val_fraction = value.parse().with_context(ctx)?,
            "losses" => {
                self.train.loss_override = if value.is_empty() || value == "default" {
                    None
                } else {
                    Some(
                        value
                            .split(',')
                            .map(|s| s.trim().parse::<LossKind>())
                            .collect::<Result<_, _>>()
                            .with_context(ctx)?,
                    )
                }
            }
            "q" => self.q = value.parse().with_context(ctx)?,
            "max-q" => self.max_q = value.parse().with_context(ctx)?,
            "dropout" => self.dropout = value.parse().with_context(ctx)?,
            "normalization" => self.normalization = Some(value.parse().with_context(ctx)?),
            "checkpoint" => self.checkpoint = Some(PathBuf::from(value)),
            "checkpoint-every" => self.checkpoint_every = value.parse().with_context(ctx)?,
            "grid-count" => self.grid_count = value.parse().with_context(ctx)?,
            other => bail!("unknown setting '{other}'"),
        }
        Ok(())
    }

    /// Layer a config file over `self`. A `.json` file is a previous
    /// `run.json` and replaces every setting; anything else is read as
    /// `key = value` lines with `#` comments.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        if path.extension().is_some_and(|e| e == "json") {
            let command = std::mem::take(&mut self.command);
            *self = serde_json::from_str(&text).with_context(|| format!("malformed run file {}", path.display()))?;
            self.command = command;
            return Ok(());
        }
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{}:{}: expected key = value", path.display(), lineno + 1))?;
            self.set(key, value)
                .with_context(|| format!("{}:{}", path.display(), lineno + 1))?;
        }
        Ok(())
    }

    /// Cascade layout for `method` with the dataset's default loss wiring.
    pub fn cascade_spec(&self, method: Method, q: usize) -> Result<CascadeSpec> {
        let mut spec = method
            .spec(q)
            .ok_or_else(|| anyhow!("method '{method}' is not a network"))?
            .with_dataset_losses(self.dataset);
        spec.dropout = self.dropout;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let net_cmd = matches!(self.command.as_str(), "train" | "ablate");
        if self.command == "solve" && self.method.solver().is_none() {
            bail!("solve needs a classical method (hio, raar or er), got '{}'", self.method);
        }
        if net_cmd && self.method.solver().is_some() {
            bail!("{} needs a network method (mlp, cpr or cpr-fs), got '{}'", self.command, self.method);
        }
        if self.command == "ablate" && self.max_q == 0 {
            bail!("max-q must be at least 1");
        }
        if self.q == 0 {
            bail!("q must be at least 1");
        }
        if self.solver.iterations == 0 || self.solver.restarts == 0 {
            bail!("iters and restarts must be at least 1");
        }
        if self.solver.oversample != 0 && self.solver.oversample < 28 {
            bail!("oversample must be 0 or at least the image side");
        }
        if self.command == "eval" && self.checkpoint.is_none() {
            bail!("eval needs --checkpoint <dir>");
        }
        if self.command == "bench" && self.methods.is_empty() {
            bail!("bench needs at least one method");
        }
        if let Some(n) = self.normalization {
            if !(n > 0.0 && n.is_finite()) {
                bail!("normalization must be positive");
            }
        }
        if self.train.epochs == 0 || self.train.batch_size == 0 {
            bail!("epochs and batch-size must be at least 1");
        }
        if !(self.train.learning_rate > 0.0 && self.train.learning_rate.is_finite()) {
            bail!("lr must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_defaults_file_flags() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("cfg.txt");
        std::fs::write(&file, "# comment\niters = 50\nbeta=0.7\nmethods = hio, cpr-fs\n").unwrap();
        let mut cfg = RunConfig::defaults("solve");
        assert_eq!(cfg.solver.iterations, 1000);
        cfg.apply_file(&file).unwrap();
        assert_eq!(cfg.solver.iterations, 50);
        assert_eq!(cfg.methods, vec![Method::Hio, Method::CprFs]);
        cfg.set("iters", "7").unwrap();
        assert_eq!((cfg.solver.iterations, cfg.solver.beta), (7, Some(0.7)));
    }

    #[test]
    fn run_json_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("run.json");
        let mut cfg = RunConfig::defaults("train");
        cfg.set("losses", "mse,mae").unwrap();
        std::fs::write(&file, serde_json::to_string(&cfg).unwrap()).unwrap();
        let mut back = RunConfig::defaults("train");
        back.apply_file(&file).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn bad_settings_are_reported() {
        let mut cfg = RunConfig::defaults("solve");
        assert!(cfg.set("iters", "many").is_err());
        assert!(cfg.set("colour", "blue").is_err());
        assert!(cfg.set("method", "gan").is_err());
        cfg.set("method", "cpr").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn fashion_gets_final_stage_mae() {
        let mut cfg = RunConfig::defaults("train");
        cfg.set("dataset", "fashion").unwrap();
        let spec = cfg.cascade_spec(Method::Cpr, 5).unwrap();
        assert_eq!(spec.loss_per_stage.last(), Some(&LossKind::Mae));
        assert_eq!(spec.loss_per_stage[0], LossKind::Mse);
    }
}
