//! Command-line flags and their translation into a [`RunSpec`].

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use simfair::data::SynthSpec;

use crate::error::{CliError, Result};
use crate::spec::{Command, DataSource, Regularizer, RunSpec};

#[derive(Debug, Parser)]
#[command(
    name = "simfair",
    version,
    about = "Similarity-weighted fairness experiments for multi-label classifiers"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Train without a penalty and report DP, EOp and SimFair violations over a gamma grid
    Estimate(RunArgs),
    /// Re-estimate violations of one model while thinning out the advantaged group
    Robustness(RunArgs),
    /// Train one regularized model per seed; writes model and report files
    Train(RunArgs),
    /// Train over a lambda grid and every listed regularizer
    Sweep(RunArgs),
    /// Write a synthetic dataset as CSV plus manifest
    Gen(RunArgs),
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["manifest", "synth"])))]
pub struct RunArgs {
    /// Dataset manifest (see docs/manifest.md)
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Synthetic dataset spec of `key = value` lines
    #[arg(long)]
    pub synth: Option<PathBuf>,
    /// Override one synthetic spec field, e.g. `--set samples=5000`; repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Regularizers: comma list of none, dp, eop, simfair[:gamma]
    #[arg(long, default_value = "none")]
    pub reg: String,
    /// Gamma for `--reg simfair` entries without their own
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Penalty weight; a comma list for sweep
    #[arg(long)]
    pub lambda: Option<String>,
    /// Advantaged group: bitstring, rank:<k>, rank:last or smallest:<n>
    #[arg(long = "y-adv", default_value = "rank:1")]
    pub y_adv: String,
    /// Seeds as a comma list or an inclusive range `a..b`
    #[arg(long, default_value = "1")]
    pub seeds: String,
    #[arg(long, default_value_t = 10)]
    pub replications: usize,
    /// SimFair gamma grid used for evaluation
    #[arg(long)]
    pub gammas: Option<String>,
    /// Advantaged-group keep fractions for robustness
    #[arg(long)]
    pub keep: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long = "batch-size")]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Hidden layer widths, comma separated; empty for a linear model
    #[arg(long)]
    pub hidden: Option<String>,
    #[arg(long = "max-grad-norm")]
    pub max_grad_norm: Option<f64>,
    #[arg(long = "train-fraction")]
    pub train_fraction: Option<f64>,
    /// Pretrained model for estimate and robustness
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Worker threads; defaults to all cores
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output CSV (estimate, robustness, sweep) or directory (train, gen)
    #[arg(long)]
    pub out: PathBuf,
}

fn list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| CliError::config(format!("bad {what} value {s:?}")))
        })
        .collect()
}

pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = text.split_once("..") {
        let (a, b): (u64, u64) = match (a.trim().parse(), b.trim().parse()) {
            (Ok(a), Ok(b)) if a <= b => (a, b),
            _ => return Err(CliError::config(format!("bad seed range {text:?}"))),
        };
        return Ok((a..=b).collect());
    }
    list(text, "seed")
}

fn read_synth(path: &PathBuf, overrides: &[String]) -> Result<SynthSpec> {
    let mut text = std::fs::read_to_string(path).map_err(|e| {
        CliError::config(format!(
            "cannot read synthetic spec {}: {e}",
            path.display()
        ))
    })?;
    for kv in overrides {
        if !kv.contains('=') {
            return Err(CliError::config(format!(
                "override {kv:?} is not KEY=VALUE"
            )));
        }
        text.push('\n');
        text.push_str(kv);
    }
    Ok(SynthSpec::from_kv_text(&text)?)
}

impl RunArgs {
    pub fn into_spec(self, command: Command) -> Result<RunSpec> {
        let source = match (&self.manifest, &self.synth) {
            (Some(m), None) => {
                if !self.overrides.is_empty() {
                    return Err(CliError::config("--set only applies to --synth sources"));
                }
                DataSource::Manifest(m.clone())
            }
            (None, Some(s)) => DataSource::Synth(read_synth(s, &self.overrides)?),
            _ => {
                return Err(CliError::config(
                    "give exactly one of --manifest or --synth",
                ))
            }
        };
        let mut spec = RunSpec::new(command, source, self.out);
        spec.regularizers = self
            .reg
            .split(',')
            .map(|r| Regularizer::parse(r, self.gamma))
            .collect::<Result<_>>()?;
        if self.gamma.is_some() && !spec.regularizers.iter().any(|r| r.gamma().is_some()) {
            return Err(CliError::config(
                "--gamma given but no simfair regularizer selected",
            ));
        }
        if let Some(l) = self.lambda {
            spec.lambdas = list(&l, "lambda")?;
        }
        spec.y_adv = self.y_adv.parse()?;
        spec.seeds = parse_seeds(&self.seeds)?;
        spec.replications = self.replications;
        if let Some(g) = self.gammas {
            spec.gammas = list(&g, "gamma")?;
        }
        if let Some(k) = self.keep {
            spec.keep_fractions = list(&k, "keep fraction")?;
        }
        if let Some(h) = self.hidden {
            spec.hidden = list(&h, "hidden width")?;
        }
        spec.epochs = self.epochs.unwrap_or(spec.epochs);
        spec.batch_size = self.batch_size.unwrap_or(spec.batch_size);
        spec.learning_rate = self.lr.unwrap_or(spec.learning_rate);
        spec.max_grad_norm = self.max_grad_norm.unwrap_or(spec.max_grad_norm);
        spec.train_fraction = self.train_fraction.unwrap_or(spec.train_fraction);
        spec.model = self.model;
        spec.validate()?;
        Ok(spec)
    }
}
