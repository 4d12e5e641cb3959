//! Finite-sample fairness violations and their gradients.
//!
//! Every notion compares similarity-weighted means of predicted probabilities:
//!
//! ```text
//! m   = sum_i w_i p_i / sum_i w_i                      (reference mean)
//! m_k = sum_{i: a_i = k} w_i p_i / sum_{i: a_i = k} w_i (group mean)
//! ```
//!
//! with `w_i = s(y_i, y_adv)`. Two compositions are provided: the pairwise
//! form `||m_1 - m_2||` for a binary sensitive attribute and the sum form
//! `sum_k ||m - m_k||` for any `K`. A zero denominator anywhere makes the
//! violation [`Violation::Undefined`]; it never surfaces as NaN.
//!
//! [`dp_violation`] and [`eop_violation`] are computed from plain filtered
//! averages (group counts, membership in the advantaged label group) rather
//! than through the weighted path, so they act as an independent check on
//! [`simfair_violation`] with the constant and indicator kernels.

use std::fmt;

use serde::{Serialize, Serializer};

use crate::error::{check_len, Result, SimFairError};
use crate::linalg::{l2_norm, Matrix};
use crate::similarity::{weights_for, LabelVector, SimilaritySpec};

/// A 1-based sensitive group index in `1..=K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct SensitiveAttr(u32);

impl SensitiveAttr {
    pub fn new(value: u32) -> Result<Self> {
        if value == 0 {
            return Err(SimFairError::data("sensitive attribute values start at 1"));
        }
        Ok(Self(value))
    }

    pub fn value(self) -> u32 {
        self.0
    }

    fn index(self) -> usize {
        self.0 as usize - 1
    }
}

impl fmt::Display for SensitiveAttr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// How group means are composed into one scalar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationForm {
    /// `||m_1 - m_2||`; only valid for `K = 2`.
    Pairwise,
    /// `sum_k ||m - m_k||`.
    SumOverGroups,
}

impl ViolationForm {
    pub fn default_for(num_groups: usize) -> Self {
        if num_groups == 2 {
            Self::Pairwise
        } else {
            Self::SumOverGroups
        }
    }
}

impl fmt::Display for ViolationForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Pairwise => "pairwise",
            Self::SumOverGroups => "sum_over_groups",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Notion {
    Dp,
    Eop,
    SimFair { gamma: f64 },
}

impl Notion {
    pub fn of_spec(spec: &SimilaritySpec) -> Self {
        match *spec {
            SimilaritySpec::Constant => Self::Dp,
            SimilaritySpec::Indicator => Self::Eop,
            SimilaritySpec::JaccardExp { gamma } => Self::SimFair { gamma },
        }
    }

    pub fn gamma(&self) -> Option<f64> {
        match *self {
            Self::SimFair { gamma } => Some(gamma),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Dp => "dp",
            Self::Eop => "eop",
            Self::SimFair { .. } => "simfair",
        }
    }
}

impl Serialize for Notion {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Violation {
    Value(f64),
    Undefined,
}

impl Violation {
    pub fn value(self) -> Option<f64> {
        match self {
            Self::Value(v) => Some(v),
            Self::Undefined => None,
        }
    }

    pub fn is_defined(self) -> bool {
        matches!(self, Self::Value(_))
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Value(v) => write!(f, "{v}"),
            Self::Undefined => f.write_str("undefined"),
        }
    }
}

impl Serialize for Violation {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Self::Value(v) => serializer.serialize_f64(*v),
            Self::Undefined => serializer.serialize_str("undefined"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViolationReport {
    pub notion: Notion,
    pub gamma: Option<f64>,
    pub form: ViolationForm,
    pub y_adv: Option<LabelVector>,
    /// Group `k` mean at index `k - 1`; `None` where the group has no weight.
    pub per_group_means: Vec<Option<Vec<f64>>>,
    pub reference_mean: Option<Vec<f64>>,
    pub violation: Violation,
}

impl ViolationReport {
    /// Flat `key, value` pairs for CSV/JSON result rows.
    pub fn to_record(&self) -> Vec<(String, String)> {
        fn join(v: &Option<Vec<f64>>) -> String {
            match v {
                Some(v) => v.iter().map(f64::to_string).collect::<Vec<_>>().join(";"),
                None => "undefined".to_string(),
            }
        }
        let mut rec = vec![
            ("notion".to_string(), self.notion.name().to_string()),
            (
                "gamma".to_string(),
                self.gamma.map(|g| g.to_string()).unwrap_or_default(),
            ),
            ("form".to_string(), self.form.to_string()),
            (
                "y_adv".to_string(),
                self.y_adv
                    .as_ref()
                    .map(|y| y.to_bitstring())
                    .unwrap_or_default(),
            ),
            ("violation".to_string(), self.violation.to_string()),
            ("reference_mean".to_string(), join(&self.reference_mean)),
        ];
        for (k, m) in self.per_group_means.iter().enumerate() {
            rec.push((format!("group_{}_mean", k + 1), join(m)));
        }
        rec
    }
}

fn check_groups(sensitive: &[SensitiveAttr], num_groups: usize) -> Result<()> {
    if num_groups < 2 {
        return Err(SimFairError::config(format!(
            "need at least two sensitive groups, got K = {num_groups}"
        )));
    }
    if let Some(bad) = sensitive.iter().find(|a| a.index() >= num_groups) {
        return Err(SimFairError::data(format!(
            "sensitive value {bad} outside 1..={num_groups}"
        )));
    }
    Ok(())
}

fn check_form(form: ViolationForm, num_groups: usize) -> Result<()> {
    if form == ViolationForm::Pairwise && num_groups != 2 {
        return Err(SimFairError::config(format!(
            "pairwise violation form needs K = 2, got K = {num_groups}"
        )));
    }
    Ok(())
}

fn check_weights(weights: &[f64]) -> Result<()> {
    match weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        Some(w) => Err(SimFairError::data(format!(
            "sample weights must be finite and nonnegative, found {w}"
        ))),
        None => Ok(()),
    }
}

fn weighted_mean_where(
    probs: &Matrix,
    weights: &[f64],
    mut keep: impl FnMut(usize) -> bool,
) -> Option<Vec<f64>> {
    let mut acc = vec![0.0; probs.cols()];
    let mut mass = 0.0;
    for (i, (p, &w)) in probs.iter_rows().zip(weights).enumerate() {
        if !keep(i) {
            continue;
        }
        for (a, &x) in acc.iter_mut().zip(p) {
            *a += w * x;
        }
        mass += w;
    }
    if mass > 0.0 {
        acc.iter_mut().for_each(|a| *a /= mass);
        Some(acc)
    } else {
        None
    }
}

/// `sum_i w_i p_i / sum_i w_i`, elementwise; `None` when the total weight is zero.
pub fn weighted_overall_mean(probs: &Matrix, weights: &[f64]) -> Result<Option<Vec<f64>>> {
    check_len("weights", probs.rows(), weights.len())?;
    check_weights(weights)?;
    Ok(weighted_mean_where(probs, weights, |_| true))
}

/// Weighted mean restricted to samples with `a = k`; `None` when that weight mass is zero.
pub fn weighted_group_mean(
    probs: &Matrix,
    sensitive: &[SensitiveAttr],
    k: SensitiveAttr,
    weights: &[f64],
) -> Result<Option<Vec<f64>>> {
    check_len("weights", probs.rows(), weights.len())?;
    check_len("sensitive attributes", probs.rows(), sensitive.len())?;
    check_weights(weights)?;
    Ok(weighted_mean_where(probs, weights, |i| sensitive[i] == k))
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn compose(
    form: ViolationForm,
    group_means: &[Option<Vec<f64>>],
    reference: &Option<Vec<f64>>,
) -> Violation {
    let groups: Option<Vec<&Vec<f64>>> = group_means.iter().map(Option::as_ref).collect();
    let (Some(groups), Some(reference)) = (groups, reference.as_ref()) else {
        return Violation::Undefined;
    };
    match form {
        ViolationForm::Pairwise => Violation::Value(l2_norm(&diff(groups[0], groups[1]))),
        ViolationForm::SumOverGroups => {
            Violation::Value(groups.iter().map(|m| l2_norm(&diff(reference, m))).sum())
        }
    }
}

fn report_from_weights(
    notion: Notion,
    y_adv: Option<&LabelVector>,
    probs: &Matrix,
    sensitive: &[SensitiveAttr],
    weights: &[f64],
    num_groups: usize,
    form: ViolationForm,
) -> ViolationReport {
    let reference_mean = weighted_mean_where(probs, weights, |_| true);
    let per_group_means: Vec<_> = (0..num_groups)
        .map(|k| weighted_mean_where(probs, weights, |i| sensitive[i].index() == k))
        .collect();
    ViolationReport {
        notion,
        gamma: notion.gamma(),
        form,
        y_adv: y_adv.cloned(),
        violation: compose(form, &per_group_means, &reference_mean),
        per_group_means,
        reference_mean,
    }
}

fn check_aligned(
    probs: &Matrix,
    sensitive: &[SensitiveAttr],
    labels: &[LabelVector],
    y_adv: &LabelVector,
) -> Result<()> {
    check_len("sensitive attributes", probs.rows(), sensitive.len())?;
    check_len("labels", probs.rows(), labels.len())?;
    check_len("advantaged label length", probs.cols(), y_adv.len())
}

/// Similarity-weighted violation using the default form for `K`.
pub fn simfair_violation(
    probs: &Matrix,
    sensitive: &[SensitiveAttr],
    labels: &[LabelVector],
    y_adv: &LabelVector,
    spec: &SimilaritySpec,
    num_groups: usize,
) -> Result<ViolationReport> {
    simfair_violation_in_form(
        probs,
        sensitive,
        labels,
        y_adv,
        spec,
        num_groups,
        ViolationForm::default_for(num_groups),
    )
}

pub fn simfair_violation_in_form(
    probs: &Matrix,
    sensitive: &[SensitiveAttr],
    labels: &[LabelVector],
    y_adv: &LabelVector,
    spec: &SimilaritySpec,
    num_groups: usize,
    form: ViolationForm,
) -> Result<ViolationReport> {
    spec.validate()?;
    check_aligned(probs, sensitive, labels, y_adv)?;
    check_groups(sensitive, num_groups)?;
    check_form(form, num_groups)?;
    let weights = weights_for(spec, labels, y_adv)?;
    let notion = Notion::of_spec(spec);
    let y_adv = (notion != Notion::Dp).then_some(y_adv);
    Ok(report_from_weights(
        notion, y_adv, probs, sensitive, &weights, num_groups, form,
    ))
}

/// Plain average over the rows selected by `keep`; `None` if no row qualifies.
fn filtered_mean(probs: &Matrix, mut keep: impl FnMut(usize) -> bool) -> Option<Vec<f64>> {
    let mut acc = vec![0.0; probs.cols()];
    let mut count = 0usize;
    for (i, p) in probs.iter_rows().enumerate() {
        if keep(i) {
            for (a, &x) in acc.iter_mut().zip(p) {
                *a += x;
            }
            count += 1;
        }
    }
    (count > 0).then(|| {
        let n = count as f64;
        acc.into_iter().map(|a| a / n).collect()
    })
}

/// Demographic Parity violation: compares `E[p | a = k]` across groups.
pub fn dp_violation(
    probs: &Matrix,
    sensitive: &[SensitiveAttr],
    num_groups: usize,
) -> Result<ViolationReport> {
    dp_violation_in_form(
        probs,
        sensitive,
        num_groups,
        ViolationForm::default_for(num_groups),
    )
}

pub fn dp_violation_in_form(
    probs: &Matrix,
    sensitive: &[SensitiveAttr],
    num_groups: usize,
    form: ViolationForm,
) -> Result<ViolationReport> {
    check_len("sensitive attributes", probs.rows(), sensitive.len())?;
    check_groups(sensitive, num_groups)?;
    check_form(form, num_groups)?;
    let reference_mean = filtered_mean(probs, |_| true);
    let per_group_means: Vec<_> = (0..num_groups)
        .map(|k| filtered_mean(probs, |i| sensitive[i].index() == k))
        .collect();
    Ok(ViolationReport {
        notion: Notion::Dp,
        gamma: None,
        form,
        y_adv: None,
        violation: compose(form, &per_group_means, &reference_mean),
        per_group_means,
        reference_mean,
    })
}

/// Equalized Opportunity violation: compares `E[p | a = k, y = y_adv]` across groups.
pub fn eop_violation(
    probs: &Matrix,
    sensitive: &[SensitiveAttr],
    labels: &[LabelVector],
    y_adv: &LabelVector,
    num_groups: usize,
) -> Result<ViolationReport> {
    eop_violation_in_form(
        probs,
        sensitive,
        labels,
        y_adv,
        num_groups,
        ViolationForm::default_for(num_groups),
    )
}

pub fn eop_violation_in_form(
    probs: &Matrix,
    sensitive: &[SensitiveAttr],
    labels: &[LabelVector],
    y_adv: &LabelVector,
    num_groups: usize,
    form: ViolationForm,
) -> Result<ViolationReport> {
    check_aligned(probs, sensitive, labels, y_adv)?;
    check_groups(sensitive, num_groups)?;
    check_form(form, num_groups)?;
    let advantaged = |i: usize| labels[i] == *y_adv;
    let reference_mean = filtered_mean(probs, advantaged);
    let per_group_means: Vec<_> = (0..num_groups)
        .map(|k| filtered_mean(probs, |i| advantaged(i) && sensitive[i].index() == k))
        .collect();
    Ok(ViolationReport {
        notion: Notion::Eop,
        gamma: None,
        form,
        y_adv: Some(y_adv.clone()),
        violation: compose(form, &per_group_means, &reference_mean),
        per_group_means,
        reference_mean,
    })
}

/// Gradient of the default-form violation with respect to every predicted
/// probability. Fails with [`SimFairError::UndefinedViolation`] or
/// [`SimFairError::ZeroViolation`] where no gradient exists.
pub fn violation_gradient(
    probs: &Matrix,
    sensitive: &[SensitiveAttr],
    labels: &[LabelVector],
    y_adv: &LabelVector,
    spec: &SimilaritySpec,
    num_groups: usize,
) -> Result<Matrix> {
    spec.validate()?;
    check_aligned(probs, sensitive, labels, y_adv)?;
    let weights = weights_for(spec, labels, y_adv)?;
    let form = ViolationForm::default_for(num_groups);
    match weighted_violation_with_gradient(probs, sensitive, &weights, num_groups, form)? {
        WeightedPenalty::Undefined => Err(SimFairError::UndefinedViolation),
        WeightedPenalty::Defined { violation, .. } if violation == 0.0 => {
            Err(SimFairError::ZeroViolation)
        }
        WeightedPenalty::Defined { gradient, .. } => Ok(gradient),
    }
}

/// Result of evaluating a penalty on a (mini)batch of precomputed weights.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightedPenalty {
    Undefined,
    /// At zero violation the gradient is all zeros (subgradient choice).
    Defined {
        violation: f64,
        gradient: Matrix,
    },
}

/// Violation and its gradient from precomputed per-sample weights.
pub fn weighted_violation_with_gradient(
    probs: &Matrix,
    sensitive: &[SensitiveAttr],
    weights: &[f64],
    num_groups: usize,
    form: ViolationForm,
) -> Result<WeightedPenalty> {
    check_len("weights", probs.rows(), weights.len())?;
    check_len("sensitive attributes", probs.rows(), sensitive.len())?;
    check_weights(weights)?;
    check_groups(sensitive, num_groups)?;
    check_form(form, num_groups)?;

    let cols = probs.cols();
    let mut total = vec![0.0; cols];
    let mut total_mass = 0.0;
    let mut group_sum = vec![vec![0.0; cols]; num_groups];
    let mut group_mass = vec![0.0; num_groups];
    for ((p, &w), a) in probs.iter_rows().zip(weights).zip(sensitive) {
        let k = a.index();
        for l in 0..cols {
            total[l] += w * p[l];
            group_sum[k][l] += w * p[l];
        }
        total_mass += w;
        group_mass[k] += w;
    }
    if total_mass <= 0.0 || group_mass.iter().any(|&m| m <= 0.0) {
        return Ok(WeightedPenalty::Undefined);
    }
    let reference: Vec<f64> = total.iter().map(|s| s / total_mass).collect();
    let means: Vec<Vec<f64>> = group_sum
        .iter()
        .zip(&group_mass)
        .map(|(s, &m)| s.iter().map(|x| x / m).collect())
        .collect();

    let unit = |d: Vec<f64>| -> (f64, Vec<f64>) {
        let n = l2_norm(&d);
        if n > 0.0 {
            (n, d.into_iter().map(|x| x / n).collect())
        } else {
            (0.0, vec![0.0; d.len()])
        }
    };

    let mut gradient = Matrix::zeros(probs.rows(), cols);
    let violation = match form {
        ViolationForm::Pairwise => {
            let (v, u) = unit(diff(&means[0], &means[1]));
            for (i, (&w, a)) in weights.iter().zip(sensitive).enumerate() {
                let k = a.index();
                let scale = if k == 0 {
                    w / group_mass[0]
                } else {
                    -w / group_mass[1]
                };
                for (g, &ul) in gradient.row_mut(i).iter_mut().zip(&u) {
                    *g = scale * ul;
                }
            }
            v
        }
        ViolationForm::SumOverGroups => {
            let mut v = 0.0;
            let mut units = Vec::with_capacity(num_groups);
            for m in &means {
                let (n, u) = unit(diff(&reference, m));
                v += n;
                units.push(u);
            }
            let unit_sum: Vec<f64> = (0..cols)
                .map(|l| units.iter().map(|u| u[l]).sum())
                .collect();
            for (i, (&w, a)) in weights.iter().zip(sensitive).enumerate() {
                let k = a.index();
                let to_ref = w / total_mass;
                let to_group = w / group_mass[k];
                for (l, g) in gradient.row_mut(i).iter_mut().enumerate() {
                    *g = to_ref * unit_sum[l] - to_group * units[k][l];
                }
            }
            v
        }
    };
    Ok(WeightedPenalty::Defined {
        violation,
        gradient,
    })
}
