//! Per-channel INT8 weight quantization and the quantized matrix-vector
//! kernel used on the inference path.
//!
//! Scheme: symmetric signed INT8, one scale per matrix row (channel),
//! zero-point fixed at 0. Values are `round(x / scale)` with round-half-away-
//! from-zero, clamped to [-127, 127]. Activations stay in f32; only weights
//! are quantized, so the reconstruction error per element is bounded by half
//! a quantization step.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{EncoderError, Result};
use crate::numerics::{fmath, Matrix};

/// A row-major INT8 matrix with one scale (and zero-point, fixed 0) per row.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedMatrix {
    rows: usize,
    cols: usize,
    values: Vec<i8>,
    scales: Vec<f32>,
}

impl QuantizedMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[i8] {
        &self.values
    }

    pub fn scales(&self) -> &[f32] {
        &self.scales
    }

    pub fn row(&self, r: usize) -> &[i8] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    /// Rebuilds a quantized matrix from stored parts (model file loading).
    pub fn from_parts(rows: usize, cols: usize, values: Vec<i8>, scales: Vec<f32>) -> Result<Self> {
        if values.len() != rows * cols || scales.len() != rows {
            return Err(EncoderError::Shape(format!(
                "quantized matrix {rows}x{cols}: {} values, {} scales",
                values.len(),
                scales.len()
            )));
        }
        if scales.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(EncoderError::NonFinite("quantization scale".into()));
        }
        if values.contains(&i8::MIN) {
            return Err(EncoderError::Shape(
                "quantized values must stay within [-127, 127]".into(),
            ));
        }
        Ok(QuantizedMatrix {
            rows,
            cols,
            values,
            scales,
        })
    }
}

/// Quantizes a weight matrix row by row: scale = max|row| / 127, all-zero
/// rows get scale 1 so dequantization stays exact.
pub fn quantize_per_channel(w: &Matrix) -> Result<QuantizedMatrix> {
    if w.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(EncoderError::NonFinite("quantize input".into()));
    }
    let mut values = Vec::with_capacity(w.rows() * w.cols());
    let mut scales = Vec::with_capacity(w.rows());
    for r in 0..w.rows() {
        let row = w.row(r);
        let max_abs = row.iter().fold(0.0f32, |m, v| m.max(v.abs()));
        let scale = if max_abs == 0.0 { 1.0 } else { max_abs / 127.0 };
        scales.push(scale);
        for &x in row {
            let q = fmath::round(x / scale);
            values.push(q.clamp(-127.0, 127.0) as i8);
        }
    }
    Ok(QuantizedMatrix {
        rows: w.rows(),
        cols: w.cols(),
        values,
        scales,
    })
}

/// Expands a quantized matrix back to f32.
pub fn dequantize(qw: &QuantizedMatrix) -> Matrix {
    let mut data = Vec::with_capacity(qw.rows * qw.cols);
    for r in 0..qw.rows {
        let scale = qw.scales[r];
        for &q in qw.row(r) {
            data.push(q as f32 * scale);
        }
    }
    Matrix::from_raw(qw.rows, qw.cols, data)
}

/// y = qw * x with float activations: per output row, the INT8 weights are
/// multiplied against x and accumulated in a wide (f64) accumulator, then
/// scaled once by the row's quantizer. The result stays within
/// sum_j |x_j| * scale_row / 2 of the float product.
pub fn quantized_matvec(qw: &QuantizedMatrix, x: &[f32]) -> Result<Vec<f32>> {
    if x.len() != qw.cols {
        return Err(EncoderError::Shape(format!(
            "quantized matvec: {} columns vs input length {}",
            qw.cols,
            x.len()
        )));
    }
    let mut out = Vec::with_capacity(qw.rows);
    for r in 0..qw.rows {
        let row = qw.row(r);
        let mut acc = 0.0f64;
        for (q, &xv) in row.iter().zip(x) {
            acc += (*q as i32 as f64) * (xv as f64);
        }
        out.push((acc * qw.scales[r] as f64) as f32);
    }
    Ok(out)
}
