//! Fully resolved description of one CLI run.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Serialize, Serializer};
use simfair::data::{rank_label_groups, Dataset, SynthSpec};
use simfair::train::TrainConfig;
use simfair::{LabelVector, SimilaritySpec};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Estimate,
    Robustness,
    Train,
    Sweep,
    Gen,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Manifest(PathBuf),
    Synth(SynthSpec),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regularizer {
    None,
    Dp,
    Eop,
    SimFair { gamma: f64 },
}

impl Regularizer {
    /// Kernel the penalty is built from; `None` trains without a penalty.
    pub fn kernel(&self) -> Option<SimilaritySpec> {
        match *self {
            Self::None => None,
            Self::Dp => Some(SimilaritySpec::Constant),
            Self::Eop => Some(SimilaritySpec::Indicator),
            Self::SimFair { gamma } => Some(SimilaritySpec::JaccardExp { gamma }),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Dp => "dp",
            Self::Eop => "eop",
            Self::SimFair { .. } => "simfair",
        }
    }

    pub fn gamma(&self) -> Option<f64> {
        match *self {
            Self::SimFair { gamma } => Some(gamma),
            _ => None,
        }
    }

    /// Parses one `--reg` entry; a bare `simfair` takes `default_gamma`.
    pub fn parse(text: &str, default_gamma: Option<f64>) -> Result<Self> {
        let text = text.trim();
        let reg = match text {
            "none" => Self::None,
            "dp" => Self::Dp,
            "eop" => Self::Eop,
            "simfair" => Self::SimFair {
                gamma: default_gamma.ok_or_else(|| {
                    CliError::config(
                        "regularizer simfair needs a gamma (--gamma or simfair:<gamma>)",
                    )
                })?,
            },
            _ => match text.strip_prefix("simfair:") {
                Some(g) => Self::SimFair {
                    gamma: g.parse().map_err(|_| {
                        CliError::config(format!("bad gamma in regularizer {text:?}"))
                    })?,
                },
                None => {
                    return Err(CliError::config(format!(
                        "unknown regularizer {text:?}; expected none, dp, eop or simfair[:gamma]"
                    )))
                }
            },
        };
        if let Some(spec) = reg.kernel() {
            spec.validate()?;
        }
        Ok(reg)
    }
}

impl fmt::Display for Regularizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.gamma() {
            Some(g) => write!(f, "simfair:{g}"),
            None => f.write_str(self.name()),
        }
    }
}

impl Serialize for Regularizer {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// How the advantaged label group is chosen for each seed.
#[derive(Debug, Clone, PartialEq)]
pub enum YAdvSelector {
    Bits(LabelVector),
    /// k-th most frequent label group of the training split, 1-based.
    Rank(usize),
    /// Least frequent label group of the training split.
    Last,
    /// Least frequent test label group with at least this many test samples
    /// and a member in every sensitive group.
    Smallest(usize),
}

impl FromStr for YAdvSelector {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || {
            CliError::config(format!("bad y_adv selector {s:?}; expected a bitstring, rank:<k>, rank:last or smallest:<n>"))
        };
        if s == "rank:last" {
            Ok(Self::Last)
        } else if let Some(k) = s.strip_prefix("rank:") {
            match k.parse() {
                Ok(k) if k >= 1 => Ok(Self::Rank(k)),
                _ => Err(bad()),
            }
        } else if let Some(n) = s.strip_prefix("smallest:") {
            n.parse().map(Self::Smallest).map_err(|_| bad())
        } else {
            s.parse().map(Self::Bits).map_err(|_| bad())
        }
    }
}

impl fmt::Display for YAdvSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Bits(y) => write!(f, "{y}"),
            Self::Rank(k) => write!(f, "rank:{k}"),
            Self::Last => f.write_str("rank:last"),
            Self::Smallest(n) => write!(f, "smallest:{n}"),
        }
    }
}

impl Serialize for YAdvSelector {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl YAdvSelector {
    /// Resolves the selector against one train/test split.
    pub fn resolve(&self, train: &Dataset, test: &Dataset) -> Result<LabelVector> {
        match self {
            Self::Bits(y) => {
                if y.len() != train.num_labels() {
                    return Err(CliError::config(format!(
                        "y_adv {y} has {} bits but the dataset has {} labels",
                        y.len(),
                        train.num_labels()
                    )));
                }
                Ok(y.clone())
            }
            Self::Rank(k) => {
                let ranked = rank_label_groups(train);
                ranked.get(k - 1).map(|r| r.0.clone()).ok_or_else(|| {
                    CliError::config(format!(
                        "rank:{k} requested but the training split has only {} label groups",
                        ranked.len()
                    ))
                })
            }
            Self::Last => rank_label_groups(train)
                .pop()
                .map(|r| r.0)
                .ok_or_else(|| CliError::data("training split has no samples")),
            Self::Smallest(min) => {
                let k = test.num_groups() as u32;
                rank_label_groups(test)
                    .into_iter()
                    .rev()
                    .find(|(y, count)| {
                        *count >= *min
                            && (1..=k).all(|g| {
                                test.labels()
                                    .iter()
                                    .zip(test.sensitive())
                                    .any(|(l, a)| l == y && a.value() == g)
                            })
                    })
                    .map(|r| r.0)
                    .ok_or_else(|| {
                        CliError::data(format!(
                            "no test label group has {min} samples covering every sensitive group"
                        ))
                    })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSpec {
    pub command: Command,
    pub source: DataSource,
    pub regularizers: Vec<Regularizer>,
    pub lambdas: Vec<f64>,
    pub y_adv: YAdvSelector,
    /// Each seed drives one train/test split, model initialization and shuffling.
    pub seeds: Vec<u64>,
    /// Subsampling replications per keep fraction (robustness only).
    pub replications: usize,
    /// Evaluation grid for SimFair estimates.
    pub gammas: Vec<f64>,
    pub keep_fractions: Vec<f64>,
    pub train_fraction: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub hidden: Vec<usize>,
    pub max_grad_norm: f64,
    /// Pretrained model used by estimate and robustness instead of training.
    pub model: Option<PathBuf>,
    pub out: PathBuf,
}

pub const DEFAULT_GAMMAS: [f64; 5] = [0.1, 0.5, 1.0, 5.0, 10.0];
pub const DEFAULT_KEEP_FRACTIONS: [f64; 5] = [1.0, 0.7, 0.3, 0.1, 0.05];
pub const DEFAULT_SWEEP_LAMBDAS: [f64; 5] = [1.0, 10.0, 100.0, 1000.0, 5000.0];

impl RunSpec {
    /// Defaults for `command` reading from `source` and writing to `out`.
    pub fn new(command: Command, source: DataSource, out: impl Into<PathBuf>) -> Self {
        let base = TrainConfig::default();
        let lambdas = match command {
            Command::Sweep => DEFAULT_SWEEP_LAMBDAS.to_vec(),
            _ => vec![base.lambda],
        };
        Self {
            command,
            source,
            regularizers: vec![Regularizer::None],
            lambdas,
            y_adv: YAdvSelector::Rank(1),
            seeds: vec![1],
            replications: 10,
            gammas: DEFAULT_GAMMAS.to_vec(),
            keep_fractions: DEFAULT_KEEP_FRACTIONS.to_vec(),
            train_fraction: 0.7,
            epochs: base.epochs,
            batch_size: base.batch_size,
            learning_rate: base.learning_rate,
            hidden: base.hidden,
            max_grad_norm: base.max_grad_norm,
            model: None,
            out: out.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::config(m));
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.regularizers.is_empty() {
            return bad("at least one regularizer is required".into());
        }
        if self.lambdas.is_empty() || self.lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return bad(format!(
                "lambda values must be finite and >= 0, got {:?}",
                self.lambdas
            ));
        }
        for &g in &self.gammas {
            SimilaritySpec::jaccard_exp(g)?;
        }
        if self.keep_fractions.iter().any(|k| !(*k > 0.0 && *k <= 1.0)) {
            return bad(format!(
                "keep fractions must lie in (0, 1], got {:?}",
                self.keep_fractions
            ));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!(
                "train fraction must lie in (0, 1), got {}",
                self.train_fraction
            ));
        }
        if self.command == Command::Robustness && self.replications == 0 {
            return bad("robustness needs at least one replication".into());
        }
        if self.command == Command::Train
            && (self.regularizers.len() != 1 || self.lambdas.len() != 1)
        {
            return bad(
                "train takes exactly one regularizer and one lambda; use sweep for grids".into(),
            );
        }
        if self.command == Command::Gen && !matches!(self.source, DataSource::Synth(_)) {
            return bad("gen needs a synthetic spec (--synth)".into());
        }
        if self.model.is_some() && !matches!(self.command, Command::Estimate | Command::Robustness)
        {
            return bad("a pretrained model is only used by estimate and robustness".into());
        }
        if let DataSource::Synth(s) = &self.source {
            s.validate()?;
        }
        self.train_config(Regularizer::None, 0.0, None, 1)
            .validate()?;
        Ok(())
    }

    pub fn train_config(
        &self,
        reg: Regularizer,
        lambda: f64,
        y_adv: Option<LabelVector>,
        seed: u64,
    ) -> TrainConfig {
        TrainConfig {
            lambda,
            spec: reg.kernel(),
            y_adv: reg.kernel().and(y_adv),
            form: None,
            hidden: self.hidden.clone(),
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            max_grad_norm: self.max_grad_norm,
            seed,
        }
    }
}
