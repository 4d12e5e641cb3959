//! The five subcommands. Each returns what it wrote so callers and tests can
//! inspect results without re-reading files.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use simfair::data::{
    gen_synthetic, load, manifest_for, split, subsample_advantaged, write_csv, Dataset, Manifest,
};
use simfair::model::Backbone;
use simfair::train::{evaluate, evaluate_predictions, train, EvalReport, TrainReport};
use simfair::LabelVector;

use crate::error::{CliError, Result};
use crate::output::{
    num, to_json, violation, write_file, write_table, Metadata, ResolvedAdv, Table,
};
use crate::spec::{DataSource, RunSpec};

pub fn load_source(source: &DataSource) -> Result<Dataset> {
    match source {
        DataSource::Manifest(path) => Ok(load(&Manifest::from_file(path)?)?),
        DataSource::Synth(spec) => Ok(gen_synthetic(spec)?),
    }
}

/// One seed's train/test split with its resolved advantaged group.
struct Replicate {
    seed: u64,
    train: Dataset,
    test: Dataset,
    y_adv: LabelVector,
}

fn replicates(spec: &RunSpec, data: &Dataset) -> Result<Vec<Replicate>> {
    spec.seeds
        .iter()
        .map(|&seed| {
            let (train, test) = split(data, spec.train_fraction, seed)?;
            if train.is_empty() || test.is_empty() {
                return Err(CliError::data(format!(
                    "{} samples cannot be split into nonempty train and test sets",
                    data.len()
                )));
            }
            let y_adv = spec.y_adv.resolve(&train, &test)?;
            Ok(Replicate {
                seed,
                train,
                test,
                y_adv,
            })
        })
        .collect()
}

fn resolved(reps: &[Replicate]) -> Vec<ResolvedAdv> {
    reps.iter()
        .map(|r| ResolvedAdv {
            seed: r.seed,
            y_adv: r.y_adv.clone(),
        })
        .collect()
}

fn prepare(spec: &RunSpec) -> Result<Vec<Replicate>> {
    spec.validate()?;
    replicates(spec, &load_source(&spec.source)?)
}

/// The pretrained model if one was given, otherwise an unregularized fit.
fn base_model(spec: &RunSpec, rep: &Replicate) -> Result<Backbone> {
    match &spec.model {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| {
                CliError::data(format!("cannot read model {}: {e}", path.display()))
            })?;
            let model = Backbone::from_text(&text)?;
            if model.input_dim() != rep.train.num_features()
                || model.output_dim() != rep.train.num_labels()
            {
                return Err(CliError::data(format!(
                    "model maps {} features to {} labels but the dataset has {} and {}",
                    model.input_dim(),
                    model.output_dim(),
                    rep.train.num_features(),
                    rep.train.num_labels()
                )));
            }
            Ok(model)
        }
        None => {
            let config = spec.train_config(crate::spec::Regularizer::None, 0.0, None, rep.seed);
            Ok(train(&rep.train, &config)?.0)
        }
    }
}

/// `(estimator, gamma, violation)` triples: DP, the SimFair grid, then EOp.
fn estimator_cells(report: &EvalReport, gammas: &[f64]) -> Vec<(&'static str, String, String)> {
    let mut cells = vec![("dp", String::new(), violation(report.dp.violation))];
    for (g, r) in gammas.iter().zip(&report.simfair) {
        cells.push(("simfair", num(*g), violation(r.violation)));
    }
    if let Some(eop) = &report.eop {
        cells.push(("eop", String::new(), violation(eop.violation)));
    }
    cells
}

pub const ESTIMATE_COLUMNS: [&str; 5] = ["seed", "y_adv", "estimator", "gamma", "violation"];

/// Violations of an unregularized model under DP, EOp and a SimFair grid.
pub fn cmd_estimate(spec: &RunSpec) -> Result<Table> {
    let reps = prepare(spec)?;
    let per_seed: Vec<Vec<Vec<String>>> = reps
        .par_iter()
        .map(|rep| {
            let model = base_model(spec, rep)?;
            let report = evaluate(&model, &rep.test, Some(&rep.y_adv), &spec.gammas)?;
            Ok(estimator_cells(&report, &spec.gammas)
                .into_iter()
                .map(|(name, gamma, v)| {
                    vec![
                        rep.seed.to_string(),
                        rep.y_adv.to_string(),
                        name.to_string(),
                        gamma,
                        v,
                    ]
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut table = Table::new(&ESTIMATE_COLUMNS);
    per_seed.into_iter().flatten().for_each(|r| table.push(r));
    write_table(&spec.out, &table, Metadata::new(spec, resolved(&reps)))?;
    Ok(table)
}

pub const ROBUSTNESS_COLUMNS: [&str; 8] = [
    "seed",
    "y_adv",
    "keep_fraction",
    "replication",
    "advantaged_kept",
    "estimator",
    "gamma",
    "violation",
];

fn subsample_seed(seed: u64, keep_index: usize, replication: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ((keep_index as u64) << 32 | replication as u64)
}

/// Re-estimates violations of a fixed model on test sets whose advantaged
/// group has been thinned out.
pub fn cmd_robustness(spec: &RunSpec) -> Result<Table> {
    let reps = prepare(spec)?;
    let models: Vec<Backbone> = reps
        .par_iter()
        .map(|rep| base_model(spec, rep))
        .collect::<Result<_>>()?;
    let cells: Vec<(usize, usize, usize)> = (0..reps.len())
        .flat_map(|r| {
            (0..spec.keep_fractions.len())
                .flat_map(move |k| (0..spec.replications).map(move |i| (r, k, i)))
        })
        .collect();
    let rows: Vec<Vec<Vec<String>>> = cells
        .par_iter()
        .map(|&(r, k, i)| {
            let rep = &reps[r];
            let keep = spec.keep_fractions[k];
            let sub =
                subsample_advantaged(&rep.test, &rep.y_adv, keep, subsample_seed(rep.seed, k, i))?;
            let probs = models[r].forward_batch(sub.dataset.features())?;
            let report =
                evaluate_predictions(&probs, &sub.dataset, Some(&rep.y_adv), &spec.gammas)?;
            Ok(estimator_cells(&report, &spec.gammas)
                .into_iter()
                .map(|(name, gamma, v)| {
                    vec![
                        rep.seed.to_string(),
                        rep.y_adv.to_string(),
                        num(keep),
                        i.to_string(),
                        sub.advantaged_kept.to_string(),
                        name.to_string(),
                        gamma,
                        v,
                    ]
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut table = Table::new(&ROBUSTNESS_COLUMNS);
    rows.into_iter().flatten().for_each(|r| table.push(r));
    write_table(&spec.out, &table, Metadata::new(spec, resolved(&reps)))?;
    Ok(table)
}

fn note_skips(seed: u64, report: &TrainReport) {
    let h = &report.history;
    if h.total_batches > 0 && 2 * h.skipped_penalty_batches > h.total_batches {
        eprintln!(
            "note: seed {seed}: fairness penalty skipped in {} of {} minibatches (advantaged group too sparse)",
            h.skipped_penalty_batches, h.total_batches
        );
    }
}

fn train_and_report(
    spec: &RunSpec,
    rep: &Replicate,
    reg: crate::spec::Regularizer,
    lambda: f64,
) -> Result<(Backbone, TrainReport)> {
    let config = spec.train_config(reg, lambda, Some(rep.y_adv.clone()), rep.seed);
    let (model, history) = train(&rep.train, &config)?;
    let evaluation = evaluate(&model, &rep.test, Some(&rep.y_adv), &spec.gammas)?;
    let report = TrainReport {
        config,
        seed: rep.seed,
        history,
        evaluation: Some(evaluation),
    };
    note_skips(rep.seed, &report);
    Ok((model, report))
}

/// Trains one regularized model per seed and writes
/// `<out>/seed-<s>/{model.txt,report.json}` plus `<out>/run.json`.
pub fn cmd_train(spec: &RunSpec) -> Result<Vec<TrainReport>> {
    let reps = prepare(spec)?;
    let (reg, lambda) = (spec.regularizers[0], spec.lambdas[0]);
    let trained: Vec<(Backbone, TrainReport)> = reps
        .par_iter()
        .map(|rep| train_and_report(spec, rep, reg, lambda))
        .collect::<Result<_>>()?;
    let mut meta = Metadata::new(spec, resolved(&reps));
    for (model, report) in &trained {
        let dir = spec.out.join(format!("seed-{}", report.seed));
        let model_path = dir.join("model.txt");
        let report_path = dir.join("report.json");
        write_file(&model_path, &model.to_text())?;
        write_file(&report_path, &to_json(report)?)?;
        meta.files.push(model_path.display().to_string());
        meta.files.push(report_path.display().to_string());
    }
    write_file(&spec.out.join("run.json"), &to_json(&meta)?)?;
    Ok(trained.into_iter().map(|(_, r)| r).collect())
}

pub const SWEEP_COLUMNS: [&str; 14] = [
    "lambda",
    "regularizer",
    "gamma",
    "seed",
    "y_adv",
    "dp",
    "eop",
    "simfair",
    "micro_f1",
    "macro_f1",
    "example_f1",
    "skipped_batches",
    "total_batches",
    "final_loss",
];

/// Trains every (lambda, regularizer, seed) cell and tabulates test metrics.
/// The `simfair` column holds the violation of the regularizer's own
/// similarity kernel and is empty for the others.
pub fn cmd_sweep(spec: &RunSpec) -> Result<Table> {
    let reps = prepare(spec)?;
    let n = reps.len();
    let cells: Vec<(f64, crate::spec::Regularizer, usize)> = spec
        .lambdas
        .iter()
        .flat_map(|&l| {
            spec.regularizers
                .iter()
                .flat_map(move |&g| (0..n).map(move |r| (l, g, r)))
        })
        .collect();
    let rows: Vec<Vec<String>> = cells
        .par_iter()
        .map(|&(lambda, reg, r)| {
            let rep = &reps[r];
            let mut gamma_spec = spec.clone();
            gamma_spec.gammas = reg.gamma().into_iter().collect();
            let (_, report) = train_and_report(&gamma_spec, rep, reg, lambda)?;
            let eval = report
                .evaluation
                .as_ref()
                .expect("train_and_report evaluates");
            Ok(vec![
                num(lambda),
                reg.name().to_string(),
                reg.gamma().map(num).unwrap_or_default(),
                rep.seed.to_string(),
                rep.y_adv.to_string(),
                violation(eval.dp.violation),
                eval.eop
                    .as_ref()
                    .map(|e| violation(e.violation))
                    .unwrap_or_default(),
                eval.simfair
                    .first()
                    .map(|s| violation(s.violation))
                    .unwrap_or_default(),
                num(eval.f1.micro),
                num(eval.f1.macro_),
                num(eval.f1.example),
                report.history.skipped_penalty_batches.to_string(),
                report.history.total_batches.to_string(),
                report
                    .history
                    .epoch_losses
                    .last()
                    .map(|&l| num(l))
                    .unwrap_or_default(),
            ])
        })
        .collect::<Result<_>>()?;
    let mut table = Table::new(&SWEEP_COLUMNS);
    rows.into_iter().for_each(|r| table.push(r));
    write_table(&spec.out, &table, Metadata::new(spec, resolved(&reps)))?;
    Ok(table)
}

/// Files written by [`cmd_gen`].
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub dataset: Dataset,
    pub csv: std::path::PathBuf,
    pub manifest: std::path::PathBuf,
}

/// Writes a synthetic dataset as `data.csv` with a `data.manifest` that
/// loads it back, plus `synth.txt` and `run.json`.
pub fn cmd_gen(spec: &RunSpec) -> Result<Generated> {
    spec.validate()?;
    let DataSource::Synth(synth) = &spec.source else {
        unreachable!("validate requires a synthetic source")
    };
    let dataset = gen_synthetic(synth)?;
    let out: &Path = &spec.out;
    let csv = out.join("data.csv");
    let manifest = out.join("data.manifest");
    let mut buf = Vec::new();
    write_csv(&dataset, &mut buf)?;
    write_file(
        &csv,
        &String::from_utf8(buf).expect("csv writer emits utf-8"),
    )?;
    write_file(&manifest, &manifest_for(&dataset, "data.csv"))?;
    write_file(&out.join("synth.txt"), &synth.to_kv_text())?;
    let mut meta = Metadata::new(spec, Vec::new());
    meta.rows = Some(dataset.len());
    meta.files = [&csv, &manifest]
        .iter()
        .map(|p| p.display().to_string())
        .collect();
    write_file(&out.join("run.json"), &to_json(&meta)?)?;
    Ok(Generated {
        dataset,
        csv,
        manifest,
    })
}
