//! Named-tensor storage and the parameter bundles encoders are built from.
//!
//! A [`WeightSet`] maps tensor names to either f32 matrices or per-channel
//! INT8 matrices. Encoder constructors pull tensors out by name once, into
//! typed structs ([`Linear`], [`LayerNormParams`]), so forward passes never
//! do map lookups.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{EncoderError, Result};
use crate::numerics::{layer_norm, Matrix};
use crate::quant::{quantized_matvec, QuantizedMatrix};

/// One stored tensor: float or quantized.
#[derive(Debug, Clone, PartialEq)]
pub enum Tensor {
    F32(Matrix),
    I8PerChannel(QuantizedMatrix),
}

impl Tensor {
    pub fn rows(&self) -> usize {
        match self {
            Tensor::F32(m) => m.rows(),
            Tensor::I8PerChannel(q) => q.rows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Tensor::F32(m) => m.cols(),
            Tensor::I8PerChannel(q) => q.cols(),
        }
    }

    /// Element count (scales excluded; anything counted as a parameter in
    /// the float model).
    pub fn num_params(&self) -> u64 {
        (self.rows() * self.cols()) as u64
    }
}

/// Named tensors for one encoder, float or quantized per tensor.
#[derive(Debug, Clone, Default)]
pub struct WeightSet {
    tensors: BTreeMap<String, Tensor>,
}

impl WeightSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.tensors.insert(name.into(), tensor);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| EncoderError::MissingTensor(name.into()))
    }

    /// Fetches a 1-row tensor as a float vector of the given length.
    pub fn require_vector(&self, name: &str, len: usize) -> Result<Vec<f32>> {
        let t = self.require(name)?;
        let m = match t {
            Tensor::F32(m) => m,
            Tensor::I8PerChannel(_) => {
                return Err(EncoderError::Config(format!(
                    "tensor {name} must be f32 (vectors are never quantized)"
                )))
            }
        };
        if m.rows() != 1 || m.cols() != len {
            return Err(EncoderError::Shape(format!(
                "tensor {name}: expected 1x{len}, got {}x{}",
                m.rows(),
                m.cols()
            )));
        }
        Ok(m.as_slice().to_vec())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn total_params(&self) -> u64 {
        self.tensors.values().map(Tensor::num_params).sum()
    }
}

/// A dense layer y = x W^T + b. The weight is stored out_dim x in_dim and
/// may be float or per-channel INT8; the bias is always float.
#[derive(Debug, Clone)]
pub struct Linear {
    weight: Tensor,
    bias: Vec<f32>,
}

impl Linear {
    pub fn new(weight: Tensor, bias: Vec<f32>) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(EncoderError::Shape(format!(
                "linear bias length {} vs {} output rows",
                bias.len(),
                weight.rows()
            )));
        }
        Ok(Linear { weight, bias })
    }

    /// Builds from `<prefix>.weight` / `<prefix>.bias` in a weight set.
    pub fn from_set(set: &WeightSet, prefix: &str, in_dim: usize, out_dim: usize) -> Result<Self> {
        let weight = set.require(&format!("{prefix}.weight"))?.clone();
        if weight.rows() != out_dim || weight.cols() != in_dim {
            return Err(EncoderError::Shape(format!(
                "{prefix}.weight: expected {out_dim}x{in_dim}, got {}x{}",
                weight.rows(),
                weight.cols()
            )));
        }
        let bias = set.require_vector(&format!("{prefix}.bias"), out_dim)?;
        Linear { weight, bias }.validate()
    }

    fn validate(self) -> Result<Self> {
        Ok(self)
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn is_quantized(&self) -> bool {
        matches!(self.weight, Tensor::I8PerChannel(_))
    }

    /// Applies the layer to one input row.
    pub fn forward_row(&self, x: &[f32]) -> Result<Vec<f32>> {
        if x.len() != self.in_dim() {
            return Err(EncoderError::Shape(format!(
                "linear input length {} vs in_dim {}",
                x.len(),
                self.in_dim()
            )));
        }
        let mut y = match &self.weight {
            Tensor::F32(w) => {
                let mut y = Vec::with_capacity(w.rows());
                for r in 0..w.rows() {
                    let mut acc = 0.0f32;
                    for (a, b) in w.row(r).iter().zip(x) {
                        acc += a * b;
                    }
                    y.push(acc);
                }
                y
            }
            Tensor::I8PerChannel(q) => quantized_matvec(q, x)?,
        };
        for (v, b) in y.iter_mut().zip(&self.bias) {
            *v += b;
        }
        Ok(y)
    }

    /// Applies the layer to every row of `x`.
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let mut data = Vec::with_capacity(x.rows() * self.out_dim());
        for r in 0..x.rows() {
            data.extend_from_slice(&self.forward_row(x.row(r))?);
        }
        Ok(Matrix::from_raw(x.rows(), self.out_dim(), data))
    }
}

/// Gain/bias/epsilon for one layer normalization site.
#[derive(Debug, Clone)]
pub struct LayerNormParams {
    pub gain: Vec<f32>,
    pub bias: Vec<f32>,
    pub eps: f32,
}

/// Default normalization epsilon used everywhere a config does not override it.
pub const LAYER_NORM_EPS: f32 = 1e-5;

impl LayerNormParams {
    pub fn from_set(set: &WeightSet, prefix: &str, dim: usize) -> Result<Self> {
        Ok(LayerNormParams {
            gain: set.require_vector(&format!("{prefix}.gain"), dim)?,
            bias: set.require_vector(&format!("{prefix}.bias"), dim)?,
            eps: LAYER_NORM_EPS,
        })
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        layer_norm(x, &self.gain, &self.bias, self.eps)
    }
}

/// What a tensor is for; drives synthesis scale and the quantization rule
/// (only weight matrices quantize).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorRole {
    WeightMatrix,
    Bias,
    Gain,
}

/// Shape and role of one tensor an encoder configuration requires.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub role: TensorRole,
}

impl TensorSpec {
    pub fn matrix(name: String, rows: usize, cols: usize) -> Self {
        TensorSpec {
            name,
            rows,
            cols,
            role: TensorRole::WeightMatrix,
        }
    }

    pub fn bias(name: String, len: usize) -> Self {
        TensorSpec {
            name,
            rows: 1,
            cols: len,
            role: TensorRole::Bias,
        }
    }

    pub fn gain(name: String, len: usize) -> Self {
        TensorSpec {
            name,
            rows: 1,
            cols: len,
            role: TensorRole::Gain,
        }
    }

    pub fn num_params(&self) -> u64 {
        (self.rows * self.cols) as u64
    }
}
