//! Fully connected networks over node coordinates, reverse-mode parameter
//! gradients, and the Adam optimizer.
//!
//! Parameters live in one flat vector: for each layer the weight matrix
//! (row-major, `out x in`) followed by the bias vector. Hidden layers apply
//! the activation, the output layer is linear.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: expected {expected} values, got {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("non-finite gradient component at index {0}")]
    NonFiniteGradient(usize),
    #[error("invalid network config: {0}")]
    InvalidConfig(String),
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Silu,
    Gelu,
}

impl Activation {
    fn code(self) -> u64 {
        match self {
            Activation::Tanh => 0,
            Activation::Silu => 1,
            Activation::Gelu => 2,
        }
    }

    fn from_code(code: u64) -> Option<Self> {
        match code {
            0 => Some(Activation::Tanh),
            1 => Some(Activation::Silu),
            2 => Some(Activation::Gelu),
            _ => None,
        }
    }

    /// Value and derivative at `x`.
    #[inline]
    fn eval(self, x: f64) -> (f64, f64) {
        match self {
            Activation::Tanh => {
                let t = x.tanh();
                (t, 1.0 - t * t)
            }
            Activation::Silu => {
                let s = 1.0 / (1.0 + (-x).exp());
                (x * s, s * (1.0 + x * (1.0 - s)))
            }
            Activation::Gelu => {
                let cdf = 0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2));
                let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
                (x * cdf, cdf + x * pdf)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub seed: u64,
}

impl MlpConfig {
    /// Three hidden layers of 30 units with `tanh`.
    pub fn new(input_dim: usize, output_dim: usize) -> Self {
        Self {
            input_dim,
            output_dim,
            hidden: vec![30, 30, 30],
            activation: Activation::Tanh,
            seed: 0,
        }
    }

    fn validate(&self) -> Result<(), NnError> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(NnError::InvalidConfig("input and output sizes must be at least 1".into()));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(NnError::InvalidConfig(format!(
                "hidden widths must be a non-empty list of positive sizes, got {:?}",
                self.hidden
            )));
        }
        Ok(())
    }

    fn shapes(&self) -> Vec<(usize, usize)> {
        let mut sizes = vec![self.input_dim];
        sizes.extend(&self.hidden);
        sizes.push(self.output_dim);
        sizes.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    /// `(in, out)` per layer.
    shapes: Vec<(usize, usize)>,
    activation: Activation,
    values: Vec<f64>,
}

fn param_count(shapes: &[(usize, usize)]) -> usize {
    shapes.iter().map(|&(i, o)| i * o + o).sum()
}

struct Cache {
    /// Layer inputs, one buffer per layer (`n x in`).
    inputs: Vec<Vec<f64>>,
    /// Activation derivatives at each hidden layer's pre-activation.
    slopes: Vec<Vec<f64>>,
}

impl MlpParams {
    /// Xavier-uniform weights, zero biases.
    pub fn init(cfg: &MlpConfig) -> Result<Self, NnError> {
        let mut p = Self::zeros(cfg)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut offset = 0;
        for &(i, o) in &p.shapes {
            let bound = (6.0 / (i + o) as f64).sqrt();
            for w in &mut p.values[offset..offset + i * o] {
                *w = rng.random_range(-bound..bound);
            }
            offset += i * o + o;
        }
        Ok(p)
    }

    pub fn zeros(cfg: &MlpConfig) -> Result<Self, NnError> {
        cfg.validate()?;
        let shapes = cfg.shapes();
        Ok(Self {
            values: vec![0.0; param_count(&shapes)],
            shapes,
            activation: cfg.activation,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn shapes(&self) -> &[(usize, usize)] {
        &self.shapes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.shapes[0].0
    }

    pub fn output_dim(&self) -> usize {
        self.shapes.last().unwrap().1
    }

    fn output_offset(&self) -> usize {
        param_count(&self.shapes[..self.shapes.len() - 1])
    }

    /// Output-layer weights (`out x in`, row-major).
    pub fn output_weights_mut(&mut self) -> &mut [f64] {
        let (i, o) = *self.shapes.last().unwrap();
        let start = self.output_offset();
        &mut self.values[start..start + i * o]
    }

    pub fn output_bias_mut(&mut self) -> &mut [f64] {
        let (i, o) = *self.shapes.last().unwrap();
        let start = self.output_offset() + i * o;
        &mut self.values[start..start + o]
    }

    fn check_inputs(&self, nodes: &[f64]) -> Result<usize, NnError> {
        let d = self.input_dim();
        if nodes.len() % d != 0 {
            return Err(NnError::ShapeMismatch {
                expected: (nodes.len() / d + 1) * d,
                found: nodes.len(),
            });
        }
        Ok(nodes.len() / d)
    }

    fn run(&self, nodes: &[f64], mut cache: Option<&mut Cache>) -> Vec<f64> {
        let n = nodes.len() / self.input_dim();
        let last = self.shapes.len() - 1;
        let mut a = nodes.to_vec();
        let mut offset = 0;
        for (l, &(din, dout)) in self.shapes.iter().enumerate() {
            let w = &self.values[offset..offset + din * dout];
            let b = &self.values[offset + din * dout..offset + din * dout + dout];
            offset += din * dout + dout;
            let mut z = vec![0.0; n * dout];
            for s in 0..n {
                let x = &a[s * din..(s + 1) * din];
                let row = &mut z[s * dout..(s + 1) * dout];
                for (j, out) in row.iter_mut().enumerate() {
                    let wj = &w[j * din..(j + 1) * din];
                    *out = b[j] + wj.iter().zip(x).map(|(p, q)| p * q).sum::<f64>();
                }
            }
            if l < last {
                let mut slopes = if cache.is_some() { vec![0.0; z.len()] } else { Vec::new() };
                for (k, v) in z.iter_mut().enumerate() {
                    let (f, df) = self.activation.eval(*v);
                    *v = f;
                    if let Some(s) = slopes.get_mut(k) {
                        *s = df;
                    }
                }
                if let Some(c) = cache.as_deref_mut() {
                    c.slopes.push(slopes);
                }
            }
            if let Some(c) = cache.as_deref_mut() {
                c.inputs.push(std::mem::replace(&mut a, z));
            } else {
                a = z;
            }
        }
        a
    }

    /// Network outputs, one row of `output_dim` values per input row.
    pub fn forward(&self, nodes: &[f64]) -> Result<Vec<f64>, NnError> {
        self.check_inputs(nodes)?;
        Ok(self.run(nodes, None))
    }

    /// Gradient of `<outputs, cotangent>` with respect to all parameters.
    pub fn vjp(&self, nodes: &[f64], cotangent: &[f64]) -> Result<Vec<f64>, NnError> {
        let n = self.check_inputs(nodes)?;
        let expected = n * self.output_dim();
        if cotangent.len() != expected {
            return Err(NnError::ShapeMismatch {
                expected,
                found: cotangent.len(),
            });
        }
        let mut cache = Cache {
            inputs: Vec::with_capacity(self.shapes.len()),
            slopes: Vec::with_capacity(self.shapes.len()),
        };
        self.run(nodes, Some(&mut cache));

        let mut grad = vec![0.0; self.len()];
        let mut delta = cotangent.to_vec();
        let mut offset = self.len();
        for l in (0..self.shapes.len()).rev() {
            let (din, dout) = self.shapes[l];
            offset -= din * dout + dout;
            if l < self.shapes.len() - 1 {
                for (d, s) in delta.iter_mut().zip(&cache.slopes[l]) {
                    *d *= s;
                }
            }
            let x = &cache.inputs[l];
            let (gw, gb) = grad[offset..offset + din * dout + dout].split_at_mut(din * dout);
            for s in 0..n {
                let ds = &delta[s * dout..(s + 1) * dout];
                let xs = &x[s * din..(s + 1) * din];
                for (j, &dj) in ds.iter().enumerate() {
                    gb[j] += dj;
                    if dj != 0.0 {
                        for (g, xi) in gw[j * din..(j + 1) * din].iter_mut().zip(xs) {
                            *g += dj * xi;
                        }
                    }
                }
            }
            if l > 0 {
                let w = &self.values[offset..offset + din * dout];
                let mut prev = vec![0.0; n * din];
                for s in 0..n {
                    let ds = &delta[s * dout..(s + 1) * dout];
                    let ps = &mut prev[s * din..(s + 1) * din];
                    for (j, &dj) in ds.iter().enumerate() {
                        for (p, wji) in ps.iter_mut().zip(&w[j * din..(j + 1) * din]) {
                            *p += dj * wji;
                        }
                    }
                }
                delta = prev;
            }
        }
        Ok(grad)
    }
}

pub fn init_mlp(cfg: &MlpConfig) -> Result<MlpParams, NnError> {
    MlpParams::init(cfg)
}

pub fn forward_nodes(params: &MlpParams, nodes: &[f64]) -> Result<Vec<f64>, NnError> {
    params.forward(nodes)
}

pub fn vjp_params(params: &MlpParams, nodes: &[f64], cotangent: &[f64]) -> Result<Vec<f64>, NnError> {
    params.vjp(nodes, cotangent)
}

/// Adam moments and hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl Adam {
    pub fn new(len: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update, in place. Nothing is modified when the
    /// gradient contains a non-finite entry.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), NnError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(NnError::ShapeMismatch {
                expected: self.m.len(),
                found: if params.len() != self.m.len() { params.len() } else { grads.len() },
            });
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(NnError::NonFiniteGradient(i));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
        Ok(())
    }
}

pub fn adam_step(params: &mut MlpParams, grads: &[f64], state: &mut Adam) -> Result<(), NnError> {
    state.step(params.values_mut(), grads)
}

/// Writes parameter sets back to back. Each record is a little-endian
/// `u64` header (layer count, activation code, then `in, out` per layer)
/// followed by the `f64` parameter values.
pub fn write_checkpoint(mut w: impl Write, params: &[&MlpParams]) -> Result<(), NnError> {
    for p in params {
        w.write_all(&(p.shapes.len() as u64).to_le_bytes())?;
        w.write_all(&p.activation.code().to_le_bytes())?;
        for &(i, o) in &p.shapes {
            w.write_all(&(i as u64).to_le_bytes())?;
            w.write_all(&(o as u64).to_le_bytes())?;
        }
        for v in &p.values {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads every record written by [`write_checkpoint`].
pub fn read_checkpoint(mut r: impl Read) -> Result<Vec<MlpParams>, NnError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut pos = 0;
    let word = |pos: &mut usize| -> Result<[u8; 8], NnError> {
        let chunk = bytes
            .get(*pos..*pos + 8)
            .ok_or_else(|| NnError::Checkpoint(format!("truncated at byte {pos}")))?;
        *pos += 8;
        Ok(chunk.try_into().unwrap())
    };
    let mut out = Vec::new();
    while pos < bytes.len() {
        let layers = u64::from_le_bytes(word(&mut pos)?) as usize;
        if layers == 0 || layers > 1024 {
            return Err(NnError::Checkpoint(format!("implausible layer count {layers}")));
        }
        let code = u64::from_le_bytes(word(&mut pos)?);
        let activation =
            Activation::from_code(code).ok_or_else(|| NnError::Checkpoint(format!("unknown activation {code}")))?;
        let mut shapes = Vec::with_capacity(layers);
        for _ in 0..layers {
            let i = u64::from_le_bytes(word(&mut pos)?) as usize;
            let o = u64::from_le_bytes(word(&mut pos)?) as usize;
            if i == 0 || o == 0 || i > 1 << 20 || o > 1 << 20 {
                return Err(NnError::Checkpoint(format!("implausible layer shape {i}x{o}")));
            }
            if let Some(&(_, prev)) = shapes.last() {
                if prev != i {
                    return Err(NnError::Checkpoint("layer sizes do not chain".into()));
                }
            }
            shapes.push((i, o));
        }
        let count = param_count(&shapes);
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            values.push(f64::from_le_bytes(word(&mut pos)?));
        }
        out.push(MlpParams {
            shapes,
            activation,
            values,
        });
    }
    Ok(out)
}
