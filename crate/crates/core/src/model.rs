//! Feedforward multi-label backbone: tanh hidden layers, sigmoid outputs.
//!
//! Parameters live in one flat vector so that the optimizer, gradient
//! clipping and finite-difference checks can treat them uniformly. Layer `i`
//! owns a `dims[i+1] x dims[i]` row-major weight block followed by its
//! `dims[i+1]` biases.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, Result, SimFairError};
use crate::linalg::Matrix;
use crate::similarity::LabelVector;

/// Probabilities are clamped to this range before taking logs in the loss.
pub const BCE_CLAMP: f64 = 1e-7;

const PROB_MIN: f64 = f64::MIN_POSITIVE;
const PROB_MAX: f64 = 1.0 - f64::EPSILON / 2.0;

const FORMAT_TAG: &str = "simfair-model";
const FORMAT_VERSION: u32 = 1;

/// Predicted presence probabilities for `L` targets.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(SimFairError::data(format!(
                "probability {p} outside [0, 1]"
            )));
        }
        Ok(Self(probs))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Backbone {
    dims: Vec<usize>,
    params: Vec<f64>,
}

pub fn parameter_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(SimFairError::config(format!(
            "layer dims need an input and an output size, got {dims:?}"
        )));
    }
    if dims.contains(&0) {
        return Err(SimFairError::config(format!(
            "layer dims must be positive, got {dims:?}"
        )));
    }
    Ok(())
}

/// Weights ~ Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero; the
/// stream is ChaCha8 seeded from `seed`.
pub fn init_backbone(dims: &[usize], seed: u64) -> Result<Backbone> {
    check_dims(dims)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Vec::with_capacity(parameter_count(dims));
    for w in dims.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let bound = 1.0 / (fan_in as f64).sqrt();
        for _ in 0..fan_in * fan_out {
            params.push(rng.random_range(-bound..bound));
        }
        params.extend(std::iter::repeat_n(0.0, fan_out));
    }
    Ok(Backbone {
        dims: dims.to_vec(),
        params,
    })
}

fn sigmoid(z: f64) -> f64 {
    let p = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    p.clamp(PROB_MIN, PROB_MAX)
}

/// `y_hat_l = 1` iff `p_l >= 0.5`.
pub fn threshold(p: &[f64]) -> LabelVector {
    LabelVector::new(p.iter().map(|&x| x >= 0.5).collect())
}

/// Summed binary cross-entropy over the targets.
pub fn bce_loss(p: &[f64], y: &LabelVector) -> Result<f64> {
    check_len("bce targets", y.len(), p.len())?;
    Ok(p.iter()
        .zip(y.bits())
        .map(|(&p, &y)| {
            let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
            if y {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum())
}

/// `d bce_loss / d p`; zero where the clamp is active.
pub fn bce_grad(p: &[f64], y: &LabelVector) -> Result<Vec<f64>> {
    check_len("bce targets", y.len(), p.len())?;
    Ok(p.iter()
        .zip(y.bits())
        .map(|(&p, &y)| {
            if !(BCE_CLAMP..=1.0 - BCE_CLAMP).contains(&p) {
                0.0
            } else if y {
                -1.0 / p
            } else {
                1.0 / (1.0 - p)
            }
        })
        .collect())
}

/// Activations of one batch, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardPass<'a> {
    backbone: &'a Backbone,
    input: &'a Matrix,
    /// Post-activation output of every layer; the last one holds the probabilities.
    activations: Vec<Matrix>,
}

impl ForwardPass<'_> {
    pub fn probs(&self) -> &Matrix {
        self.activations
            .last()
            .expect("backbone has at least one layer")
    }

    /// Parameter gradients given `dL/dp` for every sample in the batch.
    pub fn backward(&self, upstream: &Matrix) -> Result<Vec<f64>> {
        let b = self.backbone;
        let out = self.probs();
        check_len("upstream rows", out.rows(), upstream.rows())?;
        check_len("upstream cols", out.cols(), upstream.cols())?;

        let mut grads = vec![0.0; b.params.len()];
        let n = out.rows();
        let layers = b.dims.len() - 1;

        // delta = dL/dz for the current layer
        let mut delta = Matrix::zeros(n, out.cols());
        for i in 0..n {
            for ((d, &g), &p) in delta
                .row_mut(i)
                .iter_mut()
                .zip(upstream.row(i))
                .zip(out.row(i))
            {
                *d = g * p * (1.0 - p);
            }
        }

        for layer in (0..layers).rev() {
            let (fan_in, fan_out) = (b.dims[layer], b.dims[layer + 1]);
            let prev = if layer == 0 {
                self.input
            } else {
                &self.activations[layer - 1]
            };
            let (w_off, b_off) = b.offsets(layer);
            for i in 0..n {
                let d = delta.row(i);
                let x = prev.row(i);
                for o in 0..fan_out {
                    let row = &mut grads[w_off + o * fan_in..w_off + (o + 1) * fan_in];
                    for (g, &xi) in row.iter_mut().zip(x) {
                        *g += d[o] * xi;
                    }
                    grads[b_off + o] += d[o];
                }
            }
            if layer > 0 {
                let weights = &b.params[w_off..b_off];
                let mut next = Matrix::zeros(n, fan_in);
                for i in 0..n {
                    let d = delta.row(i);
                    let h = prev.row(i);
                    let row = next.row_mut(i);
                    for o in 0..fan_out {
                        for (r, &w) in row.iter_mut().zip(&weights[o * fan_in..(o + 1) * fan_in]) {
                            *r += d[o] * w;
                        }
                    }
                    for (r, &hv) in row.iter_mut().zip(h) {
                        *r *= 1.0 - hv * hv;
                    }
                }
                delta = next;
            }
        }
        Ok(grads)
    }
}

impl Backbone {
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().expect("dims validated")
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Builds a backbone from explicit parameters in the flat layout.
    pub fn from_params(dims: &[usize], params: Vec<f64>) -> Result<Self> {
        check_dims(dims)?;
        check_len("parameter count", parameter_count(dims), params.len())?;
        Ok(Self {
            dims: dims.to_vec(),
            params,
        })
    }

    /// Start of the weight block and of the bias block of `layer`.
    fn offsets(&self, layer: usize) -> (usize, usize) {
        let start = parameter_count(&self.dims[..=layer]);
        (start, start + self.dims[layer] * self.dims[layer + 1])
    }

    pub fn forward(&self, x: &[f64]) -> Result<ProbVector> {
        let input = Matrix::from_vec(1, x.len(), x.to_vec())?;
        let probs = self.forward_batch(&input)?;
        Ok(ProbVector(probs.row(0).to_vec()))
    }

    pub fn forward_batch(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self
            .forward_pass(x)?
            .activations
            .pop()
            .expect("at least one layer"))
    }

    pub fn forward_pass<'a>(&'a self, x: &'a Matrix) -> Result<ForwardPass<'a>> {
        check_len("feature dimension", self.input_dim(), x.cols())?;
        let layers = self.dims.len() - 1;
        let mut activations: Vec<Matrix> = Vec::with_capacity(layers);
        for layer in 0..layers {
            let (fan_in, fan_out) = (self.dims[layer], self.dims[layer + 1]);
            let (w_off, b_off) = self.offsets(layer);
            let weights = &self.params[w_off..b_off];
            let biases = &self.params[b_off..b_off + fan_out];
            let prev = activations.last().unwrap_or(x);
            let last = layer + 1 == layers;
            let mut out = Matrix::zeros(x.rows(), fan_out);
            for i in 0..x.rows() {
                let xi = prev.row(i);
                for (o, z_out) in out.row_mut(i).iter_mut().enumerate() {
                    let w = &weights[o * fan_in..(o + 1) * fan_in];
                    let z = biases[o] + w.iter().zip(xi).map(|(a, b)| a * b).sum::<f64>();
                    *z_out = if last { sigmoid(z) } else { z.tanh() };
                }
            }
            activations.push(out);
        }
        Ok(ForwardPass {
            backbone: self,
            input: x,
            activations,
        })
    }

    /// Convenience: forward then backward on one batch.
    pub fn backward(&self, x: &Matrix, upstream: &Matrix) -> Result<Vec<f64>> {
        self.forward_pass(x)?.backward(upstream)
    }

    /// Versioned plain-text record; floats are written in shortest
    /// round-trip form.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{FORMAT_TAG} v{FORMAT_VERSION}").unwrap();
        let dims: Vec<String> = self.dims.iter().map(usize::to_string).collect();
        writeln!(out, "dims {}", dims.join(" ")).unwrap();
        for layer in 0..self.dims.len() - 1 {
            let (fan_in, fan_out) = (self.dims[layer], self.dims[layer + 1]);
            let (w_off, b_off) = self.offsets(layer);
            writeln!(out, "layer {layer}").unwrap();
            for o in 0..fan_out {
                let row = &self.params[w_off + o * fan_in..w_off + (o + 1) * fan_in];
                writeln!(out, "w {}", join_floats(row)).unwrap();
            }
            writeln!(
                out,
                "b {}",
                join_floats(&self.params[b_off..b_off + fan_out])
            )
            .unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| SimFairError::Format("empty model file".into()))?;
        let expected = format!("{FORMAT_TAG} v{FORMAT_VERSION}");
        if header.trim() != expected {
            return Err(SimFairError::Format(format!(
                "expected header {expected:?}, found {:?}",
                header.trim()
            )));
        }
        let dims_line = lines.next().unwrap_or_default();
        let dims: Vec<usize> = dims_line
            .strip_prefix("dims ")
            .ok_or_else(|| SimFairError::Format("missing dims line".into()))?
            .split_whitespace()
            .map(|t| {
                t.parse()
                    .map_err(|_| SimFairError::Format(format!("bad dim {t:?}")))
            })
            .collect::<Result<_>>()?;
        check_dims(&dims)?;

        let mut params = Vec::with_capacity(parameter_count(&dims));
        for layer in 0..dims.len() - 1 {
            let (fan_in, fan_out) = (dims[layer], dims[layer + 1]);
            let tag = lines.next().unwrap_or_default();
            if tag.trim() != format!("layer {layer}") {
                return Err(SimFairError::Format(format!(
                    "expected 'layer {layer}', found {tag:?}"
                )));
            }
            for _ in 0..fan_out {
                params.extend(parse_floats(lines.next(), "w", fan_in)?);
            }
            params.extend(parse_floats(lines.next(), "b", fan_out)?);
        }
        if let Some(extra) = lines.next() {
            return Err(SimFairError::Format(format!("trailing content {extra:?}")));
        }
        Self::from_params(&dims, params)
    }
}

fn join_floats(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(" ")
}

fn parse_floats(line: Option<&str>, prefix: &str, expected: usize) -> Result<Vec<f64>> {
    let line = line.ok_or_else(|| SimFairError::Format("truncated model file".into()))?;
    let body = line
        .strip_prefix(prefix)
        .and_then(|r| {
            r.strip_prefix(' ')
                .or(if r.is_empty() { Some(r) } else { None })
        })
        .ok_or_else(|| SimFairError::Format(format!("expected '{prefix}' line, found {line:?}")))?;
    let values: Vec<f64> = body
        .split_whitespace()
        .map(|t| {
            t.parse()
                .map_err(|_| SimFairError::Format(format!("bad float {t:?}")))
        })
        .collect::<Result<_>>()?;
    if values.len() != expected {
        return Err(SimFairError::Format(format!(
            "'{prefix}' line has {} values, expected {expected}",
            values.len()
        )));
    }
    Ok(values)
}
