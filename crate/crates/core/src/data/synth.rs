//! Synthetic long-tailed, group-biased multi-label data.
//!
//! Generative model for one sample:
//!
//! ```text
//! a    ~ Categorical(proportions)                       in 1..=K
//! x_0  ~ N(shift * t_a, 1)                              proxy of the group
//! x_j  ~ N(0, 1)                          for j >= 1
//! y_l  ~ Bernoulli(sigmoid(w_l . x + b_l + bias * c_{l,a}))
//! ```
//!
//! where `t_a` spreads the groups evenly over `[-1/2, 1/2]`, `w_l` ignores the
//! proxy coordinate, and `c_{l,a} = 2 * (-1)^l * t_a`. With `bias = 0` the
//! labels are independent of `a`; a model can still pick the group up from
//! `x_0` once `bias > 0`. The offsets `b_l` target marginal frequencies
//! `top_frequency * l^(-decay)` through the probit approximation of the
//! logistic-normal mean, giving a long tail of rare labels and label groups.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Result, SimFairError};
use crate::fairness::SensitiveAttr;
use crate::linalg::Matrix;
use crate::similarity::LabelVector;

use super::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthSpec {
    pub samples: usize,
    pub features: usize,
    pub labels: usize,
    pub groups: usize,
    pub proportions: Vec<f64>,
    /// Long-tail exponent; label `l` appears with frequency about `top_frequency * l^-decay`.
    pub decay: f64,
    pub top_frequency: f64,
    /// How strongly label probabilities depend on the sensitive group.
    pub bias: f64,
    /// Separation of group means along the proxy feature.
    pub group_shift: f64,
    /// Standard deviation of the informative part of each logit.
    pub signal: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            samples: 20_000,
            features: 10,
            labels: 6,
            groups: 2,
            proportions: vec![0.5, 0.5],
            decay: 1.5,
            top_frequency: 0.6,
            bias: 1.0,
            group_shift: 2.0,
            signal: 0.5,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(SimFairError::config(msg));
        if self.samples == 0 {
            return bad("synthetic sample count must be positive".into());
        }
        if self.features < 2 {
            return bad(format!("need at least 2 features, got {}", self.features));
        }
        if self.labels == 0 {
            return bad("need at least one label".into());
        }
        if self.groups < 2 {
            return bad(format!("need K >= 2 groups, got {}", self.groups));
        }
        if self.proportions.len() != self.groups {
            return bad(format!(
                "{} proportions given for {} groups",
                self.proportions.len(),
                self.groups
            ));
        }
        if self
            .proportions
            .iter()
            .any(|p| !(p.is_finite() && *p >= 0.0))
            || (self.proportions.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return bad(format!(
                "group proportions must be nonnegative and sum to 1, got {:?}",
                self.proportions
            ));
        }
        if !(self.decay.is_finite() && self.decay > 0.0) {
            return bad(format!("decay exponent must be > 0, got {}", self.decay));
        }
        if !(self.top_frequency > 0.0 && self.top_frequency < 1.0) {
            return bad(format!(
                "top frequency must lie in (0, 1), got {}",
                self.top_frequency
            ));
        }
        for (name, v) in [
            ("bias", self.bias),
            ("group_shift", self.group_shift),
            ("signal", self.signal),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        Ok(())
    }

    /// Parses `key = value` lines; unknown keys are rejected, missing keys keep defaults.
    pub fn from_kv_text(text: &str) -> Result<Self> {
        let mut spec = Self::default();
        let mut explicit_props = false;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                SimFairError::config(format!("synth spec line {}: expected `key = value`", i + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let num = |v: &str| -> Result<f64> {
                v.parse().map_err(|_| {
                    SimFairError::config(format!("synth spec line {}: bad number {v:?}", i + 1))
                })
            };
            let int = |v: &str| -> Result<u64> {
                v.parse().map_err(|_| {
                    SimFairError::config(format!("synth spec line {}: bad integer {v:?}", i + 1))
                })
            };
            match key {
                "samples" => spec.samples = int(value)? as usize,
                "features" => spec.features = int(value)? as usize,
                "labels" => spec.labels = int(value)? as usize,
                "groups" => spec.groups = int(value)? as usize,
                "proportions" => {
                    spec.proportions = value
                        .split(',')
                        .map(|v| num(v.trim()))
                        .collect::<Result<_>>()?;
                    explicit_props = true;
                }
                "decay" => spec.decay = num(value)?,
                "top_frequency" => spec.top_frequency = num(value)?,
                "bias" => spec.bias = num(value)?,
                "group_shift" => spec.group_shift = num(value)?,
                "signal" => spec.signal = num(value)?,
                "seed" => spec.seed = int(value)?,
                other => {
                    return Err(SimFairError::config(format!(
                        "synth spec line {}: unknown key {other:?}",
                        i + 1
                    )))
                }
            }
        }
        if !explicit_props {
            spec.proportions = vec![1.0 / spec.groups as f64; spec.groups];
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_kv_text(&self) -> String {
        let props: Vec<String> = self.proportions.iter().map(f64::to_string).collect();
        let fields: BTreeMap<&str, String> = BTreeMap::from([
            ("samples", self.samples.to_string()),
            ("features", self.features.to_string()),
            ("labels", self.labels.to_string()),
            ("groups", self.groups.to_string()),
            ("proportions", props.join(",")),
            ("decay", self.decay.to_string()),
            ("top_frequency", self.top_frequency.to_string()),
            ("bias", self.bias.to_string()),
            ("group_shift", self.group_shift.to_string()),
            ("signal", self.signal.to_string()),
            ("seed", self.seed.to_string()),
        ]);
        fields.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

/// A generated dataset together with the probabilities labels were drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub dataset: Dataset,
    pub true_probs: Matrix,
}

pub fn gen_synthetic(spec: &SynthSpec) -> Result<Dataset> {
    gen_synthetic_with_truth(spec).map(|s| s.dataset)
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

pub fn gen_synthetic_with_truth(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (n, m, l, k) = (spec.samples, spec.features, spec.labels, spec.groups);

    let informative = (m - 1) as f64;
    let scale = spec.signal / informative.sqrt();
    let weights: Vec<Vec<f64>> = (0..l)
        .map(|_| {
            let mut w = vec![0.0; m];
            for wj in w.iter_mut().skip(1) {
                *wj = scale * rng.sample::<f64, _>(StandardNormal);
            }
            w
        })
        .collect();
    let offsets: Vec<f64> = weights
        .iter()
        .enumerate()
        .map(|(idx, w)| {
            let freq = spec.top_frequency * ((idx + 1) as f64).powf(-spec.decay);
            let var: f64 = w.iter().map(|x| x * x).sum();
            logit(freq) * (1.0 + std::f64::consts::PI * var / 8.0).sqrt()
        })
        .collect();
    let position = |a: usize| a as f64 / (k - 1) as f64 - 0.5;
    let group_bias = |label: usize, a: usize| {
        let sign = if label.is_multiple_of(2) { 1.0 } else { -1.0 };
        2.0 * sign * position(a)
    };

    let picker = WeightedIndex::new(&spec.proportions)
        .map_err(|e| SimFairError::config(format!("bad proportions: {e}")))?;
    let mut x = Matrix::zeros(n, m);
    let mut probs = Matrix::zeros(n, l);
    let mut sensitive = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let a = picker.sample(&mut rng);
        let row = x.row_mut(i);
        for (j, v) in row.iter_mut().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            *v = if j == 0 {
                z + spec.group_shift * position(a)
            } else {
                z
            };
        }
        let row = x.row(i).to_vec();
        let mut bits = Vec::with_capacity(l);
        for (label, p_out) in probs.row_mut(i).iter_mut().enumerate() {
            let z = offsets[label]
                + weights[label]
                    .iter()
                    .zip(&row)
                    .map(|(w, v)| w * v)
                    .sum::<f64>()
                + spec.bias * group_bias(label, a);
            let p = sigmoid(z);
            *p_out = p;
            bits.push(rng.random::<f64>() < p);
        }
        sensitive.push(SensitiveAttr::new(a as u32 + 1)?);
        labels.push(LabelVector::new(bits));
    }
    Ok(SynthData {
        dataset: Dataset::new(x, sensitive, labels, k)?,
        true_probs: probs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fairness::dp_violation;

    fn spec(samples: usize, bias: f64, seed: u64) -> SynthSpec {
        SynthSpec {
            samples,
            bias,
            seed,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = gen_synthetic(&spec(500, 1.0, 4)).unwrap();
        assert_eq!(a, gen_synthetic(&spec(500, 1.0, 4)).unwrap());
        assert_ne!(a, gen_synthetic(&spec(500, 1.0, 5)).unwrap());
    }

    #[test]
    fn unbiased_truth_is_fair() {
        let s = gen_synthetic_with_truth(&spec(10_000, 0.0, 1)).unwrap();
        let d = &s.dataset;
        let v = dp_violation(&s.true_probs, d.sensitive(), d.num_groups()).unwrap();
        assert!(v.violation.value().unwrap() <= 0.05, "{:?}", v.violation);
    }

    #[test]
    fn biased_truth_is_unfair() {
        let s = gen_synthetic_with_truth(&spec(10_000, 1.0, 1)).unwrap();
        let d = &s.dataset;
        let v = dp_violation(&s.true_probs, d.sensitive(), d.num_groups()).unwrap();
        assert!(v.violation.value().unwrap() > 0.1, "{:?}", v.violation);
    }

    #[test]
    fn label_frequencies_decay() {
        let d = gen_synthetic(&spec(10_000, 1.0, 2)).unwrap();
        let freq =
            |l: usize| d.labels().iter().filter(|y| y.get(l)).count() as f64 / d.len() as f64;
        assert!(freq(0) >= 3.0 * freq(5), "{} vs {}", freq(0), freq(5));
    }

    #[test]
    fn invalid_specs() {
        assert!(gen_synthetic(&spec(0, 1.0, 0)).is_err());
        let mut s = spec(10, 1.0, 0);
        s.proportions = vec![0.7, 0.7];
        assert!(gen_synthetic(&s).is_err());
        s = spec(10, 1.0, 0);
        s.decay = 0.0;
        assert!(gen_synthetic(&s).is_err());
        s = spec(10, -1.0, 0);
        assert!(gen_synthetic(&s).is_err());
    }

    #[test]
    fn kv_round_trip() {
        let mut s = spec(123, 0.5, 9);
        s.groups = 3;
        s.proportions = vec![0.5, 0.25, 0.25];
        let parsed = SynthSpec::from_kv_text(&s.to_kv_text()).unwrap();
        assert_eq!(parsed, s);
        let defaults = SynthSpec::from_kv_text("groups = 4\nsamples = 10\n").unwrap();
        assert_eq!(defaults.proportions, vec![0.25; 4]);
        assert!(SynthSpec::from_kv_text("samples = 0\n").is_err());
        assert!(SynthSpec::from_kv_text("colour = red\n").is_err());
    }
}
