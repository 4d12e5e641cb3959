//! Similarity kernels over binary label vectors.
//!
//! A kernel `s(y, y')` maps a pair of label vectors into `[0, 1]`. Weighting
//! samples by `s(y, y_adv)` interpolates between Demographic Parity
//! (constant kernel) and Equalized Opportunity (indicator kernel); the
//! Jaccard-exponential kernel `exp(gamma * (jaccard - 1))` moves between the
//! two as `gamma` goes from 0 to infinity.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{check_len, Result, SimFairError};

/// A binary vector of `L` targets. Ordering is lexicographic on the bitstring.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabelVector(Vec<bool>);

impl LabelVector {
    pub fn new(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    /// Builds a label vector from `0`/`1` integers; any other value is rejected.
    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        bits.iter()
            .map(|&b| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(SimFairError::data(format!(
                    "label entries must be 0 or 1, found {other}"
                ))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![false; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn get(&self, index: usize) -> bool {
        self.0[index]
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn to_bitstring(&self) -> String {
        self.0.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }
}

impl fmt::Display for LabelVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_bitstring())
    }
}

impl FromStr for LabelVector {
    type Err = SimFairError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Err(SimFairError::data("empty label bitstring"));
        }
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(SimFairError::data(format!(
                    "invalid character {other:?} in label bitstring {s:?}"
                ))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }
}

impl Serialize for LabelVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_bitstring())
    }
}

impl<'de> Deserialize<'de> for LabelVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Which similarity kernel to weight samples with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimilaritySpec {
    /// `s = 1` for every pair; recovers Demographic Parity.
    Constant,
    /// `s = 1(y == y')`; recovers Equalized Opportunity.
    Indicator,
    /// `s = exp(gamma * (jaccard(y, y') - 1))`.
    JaccardExp { gamma: f64 },
}

impl SimilaritySpec {
    pub fn jaccard_exp(gamma: f64) -> Result<Self> {
        let spec = Self::JaccardExp { gamma };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::JaccardExp { gamma } if !(gamma.is_finite() && gamma >= 0.0) => Err(
                SimFairError::config(format!("gamma must be finite and >= 0, got {gamma}")),
            ),
            _ => Ok(()),
        }
    }

    pub fn gamma(&self) -> Option<f64> {
        match *self {
            Self::JaccardExp { gamma } => Some(gamma),
            _ => None,
        }
    }
}

impl fmt::Display for SimilaritySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant => f.write_str("constant"),
            Self::Indicator => f.write_str("indicator"),
            Self::JaccardExp { gamma } => write!(f, "jaccard_exp({gamma})"),
        }
    }
}

/// Intersection-over-union of the index sets of present targets.
///
/// Two all-zero vectors are identical and score 1; an all-zero vector
/// against a nonempty one scores 0.
pub fn jaccard(y: &LabelVector, y2: &LabelVector) -> Result<f64> {
    check_len("jaccard", y.len(), y2.len())?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&a, &b) in y.bits().iter().zip(y2.bits()) {
        inter += usize::from(a && b);
        union += usize::from(a || b);
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

pub fn sim(spec: &SimilaritySpec, y: &LabelVector, y2: &LabelVector) -> Result<f64> {
    check_len("sim", y.len(), y2.len())?;
    Ok(match *spec {
        SimilaritySpec::Constant => 1.0,
        SimilaritySpec::Indicator => {
            if y == y2 {
                1.0
            } else {
                0.0
            }
        }
        SimilaritySpec::JaccardExp { gamma } => (gamma * (jaccard(y, y2)? - 1.0)).exp(),
    })
}

/// `s(labels[i], y_adv)` for every sample.
pub fn weights_for(
    spec: &SimilaritySpec,
    labels: &[LabelVector],
    y_adv: &LabelVector,
) -> Result<Vec<f64>> {
    labels.iter().map(|y| sim(spec, y, y_adv)).collect()
}
