//! Datasets: aligned features, sensitive attributes and multi-label targets.

mod manifest;
mod synth;

use std::collections::BTreeMap;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, Result, SimFairError};
use crate::fairness::SensitiveAttr;
use crate::linalg::Matrix;
use crate::similarity::LabelVector;

pub use manifest::{load, parse_manifest, ColumnRule, GroupRule, Manifest, TargetRule};
pub use synth::{gen_synthetic, gen_synthetic_with_truth, SynthData, SynthSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix,
    sensitive: Vec<SensitiveAttr>,
    labels: Vec<LabelVector>,
    num_groups: usize,
    feature_names: Vec<String>,
    sensitive_name: String,
    target_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        features: Matrix,
        sensitive: Vec<SensitiveAttr>,
        labels: Vec<LabelVector>,
        num_groups: usize,
    ) -> Result<Self> {
        let feature_names = (1..=features.cols()).map(|j| format!("x{j}")).collect();
        let width = labels.first().map_or(0, LabelVector::len);
        let target_names = (1..=width).map(|l| format!("y{l}")).collect();
        Self::with_names(
            features,
            sensitive,
            labels,
            num_groups,
            feature_names,
            "a".to_string(),
            target_names,
        )
    }

    pub fn with_names(
        features: Matrix,
        sensitive: Vec<SensitiveAttr>,
        labels: Vec<LabelVector>,
        num_groups: usize,
        feature_names: Vec<String>,
        sensitive_name: String,
        target_names: Vec<String>,
    ) -> Result<Self> {
        let n = features.rows();
        check_len("sensitive column", n, sensitive.len())?;
        check_len("label rows", n, labels.len())?;
        check_len("feature names", features.cols(), feature_names.len())?;
        for y in &labels {
            check_len("label width", target_names.len(), y.len())?;
        }
        if target_names.is_empty() {
            return Err(SimFairError::data("dataset needs at least one target"));
        }
        if num_groups < 2 {
            return Err(SimFairError::data(format!(
                "need K >= 2 sensitive groups, got {num_groups}"
            )));
        }
        if let Some(a) = sensitive.iter().find(|a| a.value() as usize > num_groups) {
            return Err(SimFairError::data(format!(
                "sensitive value {a} exceeds K = {num_groups}"
            )));
        }
        if let Some(x) = features.as_slice().iter().find(|x| !x.is_finite()) {
            return Err(SimFairError::data(format!("non-finite feature value {x}")));
        }
        Ok(Self {
            features,
            sensitive,
            labels,
            num_groups,
            feature_names,
            sensitive_name,
            target_names,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn sensitive(&self) -> &[SensitiveAttr] {
        &self.sensitive
    }

    pub fn labels(&self) -> &[LabelVector] {
        &self.labels
    }

    pub fn num_groups(&self) -> usize {
        self.num_groups
    }

    pub fn num_features(&self) -> usize {
        self.features.cols()
    }

    pub fn num_labels(&self) -> usize {
        self.target_names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn sensitive_name(&self) -> &str {
        &self.sensitive_name
    }

    pub fn target_names(&self) -> &[String] {
        &self.target_names
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(indices),
            sensitive: indices.iter().map(|&i| self.sensitive[i]).collect(),
            labels: indices.iter().map(|&i| self.labels[i].clone()).collect(),
            num_groups: self.num_groups,
            feature_names: self.feature_names.clone(),
            sensitive_name: self.sensitive_name.clone(),
            target_names: self.target_names.clone(),
        }
    }

    fn with_features(&self, features: Matrix) -> Self {
        Self {
            features,
            ..self.clone()
        }
    }
}

/// Per-column mean and standard deviation fitted on one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardizer {
    /// Population statistics; constant columns get a unit scale.
    pub fn fit(x: &Matrix) -> Self {
        let n = x.rows().max(1) as f64;
        let mut means = vec![0.0; x.cols()];
        for row in x.iter_rows() {
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut vars = vec![0.0; x.cols()];
        for row in x.iter_rows() {
            for ((s, v), m) in vars.iter_mut().zip(row).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        let stds = vars
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { means, stds }
    }

    pub fn apply(&self, x: &Matrix) -> Matrix {
        let mut out = x.clone();
        for i in 0..out.rows() {
            for ((v, m), s) in out.row_mut(i).iter_mut().zip(&self.means).zip(&self.stds) {
                *v = (*v - m) / s;
            }
        }
        out
    }
}

/// Seeded shuffle of `0..n` cut at `floor(n * train_fraction)`.
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(SimFairError::config(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (n as f64 * train_fraction).floor() as usize;
    let test = idx.split_off(n_train);
    Ok((idx, test))
}

/// Train/test split with features standardized by training statistics.
pub fn split(d: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train_idx, test_idx) = split_indices(d.len(), train_fraction, seed)?;
    let train = d.subset(&train_idx);
    let test = d.subset(&test_idx);
    let scaler = Standardizer::fit(train.features());
    Ok((
        train.with_features(scaler.apply(train.features())),
        test.with_features(scaler.apply(test.features())),
    ))
}

/// Distinct label vectors by descending count; ties in bitstring order.
pub fn rank_label_groups(d: &Dataset) -> Vec<(LabelVector, usize)> {
    rank_labels(d.labels())
}

pub fn rank_labels(labels: &[LabelVector]) -> Vec<(LabelVector, usize)> {
    let mut counts: BTreeMap<&LabelVector, usize> = BTreeMap::new();
    for y in labels {
        *counts.entry(y).or_default() += 1;
    }
    let mut ranked: Vec<(LabelVector, usize)> =
        counts.into_iter().map(|(y, c)| (y.clone(), c)).collect();
    // stable sort keeps the BTreeMap's lexicographic order within equal counts
    ranked.sort_by_key(|r| std::cmp::Reverse(r.1));
    ranked
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subsample {
    pub dataset: Dataset,
    /// False when no row carried `y_adv`; the dataset is then unchanged.
    pub advantaged_found: bool,
    pub advantaged_total: usize,
    pub advantaged_kept: usize,
}

/// Keeps `ceil(keep_fraction * n_adv)` advantaged rows chosen uniformly at
/// random; every other row is kept, and row order is preserved.
pub fn subsample_advantaged(
    d: &Dataset,
    y_adv: &LabelVector,
    keep_fraction: f64,
    seed: u64,
) -> Result<Subsample> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(SimFairError::config(format!(
            "keep fraction must lie in (0, 1], got {keep_fraction}"
        )));
    }
    check_len("advantaged label length", d.num_labels(), y_adv.len())?;
    let adv: Vec<usize> = (0..d.len()).filter(|&i| d.labels[i] == *y_adv).collect();
    let keep = ((keep_fraction * adv.len() as f64).ceil() as usize).min(adv.len());
    let mut kept_flags = vec![true; d.len()];
    if keep < adv.len() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        adv.iter().for_each(|&i| kept_flags[i] = false);
        for j in index::sample(&mut rng, adv.len(), keep) {
            kept_flags[adv[j]] = true;
        }
    }
    let rows: Vec<usize> = (0..d.len()).filter(|&i| kept_flags[i]).collect();
    Ok(Subsample {
        dataset: d.subset(&rows),
        advantaged_found: !adv.is_empty(),
        advantaged_total: adv.len(),
        advantaged_kept: keep,
    })
}

/// Writes the dataset as a CSV whose columns are features, the sensitive
/// attribute, then targets.
pub fn write_csv<W: std::io::Write>(d: &Dataset, out: W) -> Result<()> {
    let io_err = |e: csv::Error| SimFairError::data(format!("csv write failed: {e}"));
    let mut w = csv::Writer::from_writer(out);
    let header = d
        .feature_names
        .iter()
        .chain(std::iter::once(&d.sensitive_name))
        .chain(&d.target_names);
    w.write_record(header).map_err(io_err)?;
    for i in 0..d.len() {
        let mut rec: Vec<String> = d.features.row(i).iter().map(f64::to_string).collect();
        rec.push(d.sensitive[i].to_string());
        rec.extend(d.labels[i].bits().iter().map(|&b| u8::from(b).to_string()));
        w.write_record(&rec).map_err(io_err)?;
    }
    w.flush()
        .map_err(|e| SimFairError::data(format!("csv write failed: {e}")))
}

/// Manifest text that loads a CSV written by [`write_csv`] back verbatim.
pub fn manifest_for(d: &Dataset, csv_path: &str) -> String {
    let mut out = format!("csv = {csv_path}\n");
    for f in &d.feature_names {
        out.push_str(&format!("feature = {f}\n"));
    }
    out.push_str(&format!("sensitive = {}\n", d.sensitive_name));
    out.push_str(&format!("groups = {}\n", d.num_groups));
    for t in &d.target_names {
        out.push_str(&format!("target = {t}\n"));
    }
    out
}
