//! Dense math kernels: matrix multiply, layer normalization, masked softmax,
//! scaled multi-head attention and the activations the encoders use.
//!
//! All kernels run in 32-bit floats with fixed accumulation order, so
//! repeated calls on the same inputs are bit-identical. That determinism is
//! load-bearing: the streaming/batch equivalence checks compare outputs
//! exactly.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{EncoderError, Result};

/// Scalar math routed through libm so results do not depend on the `std`
/// feature being enabled.
pub(crate) mod fmath {
    #[inline]
    pub fn exp(x: f32) -> f32 {
        libm::expf(x)
    }
    #[inline]
    pub fn tanh(x: f32) -> f32 {
        libm::tanhf(x)
    }
    #[inline]
    pub fn sqrt(x: f32) -> f32 {
        libm::sqrtf(x)
    }
    /// Rounds half away from zero, like C99 `round`.
    #[inline]
    pub fn round(x: f32) -> f32 {
        libm::roundf(x)
    }
}

/// Logistic sigmoid.
#[inline]
pub fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + fmath::exp(-x))
}

/// Hyperbolic tangent.
#[inline]
pub fn tanh(x: f32) -> f32 {
    fmath::tanh(x)
}

/// Dense row-major f32 matrix. Frames are rows, features are columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix from external data, rejecting shape mismatches and
    /// non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(EncoderError::Shape(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(EncoderError::NonFinite(format!(
                "matrix entry at flat index {pos} is {}",
                data[pos]
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Internal constructor for values produced by our own kernels.
    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub(crate) fn row_mut(&mut self, r: usize) -> &mut [f32] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.cols + c]
    }

    pub(crate) fn set(&mut self, r: usize, c: usize, v: f32) {
        self.data[r * self.cols + c] = v;
    }

    /// Copy of the given row range as a new matrix.
    pub fn slice_rows(&self, range: Range<usize>) -> Matrix {
        let cols = self.cols;
        Matrix::from_raw(
            range.len(),
            cols,
            self.data[range.start * cols..range.end * cols].to_vec(),
        )
    }

    /// Stacks matrices vertically. Zero-row inputs are skipped; all non-empty
    /// inputs must share a column count.
    pub fn vstack(parts: &[&Matrix]) -> Result<Matrix> {
        let cols = parts
            .iter()
            .find(|m| m.rows > 0)
            .map(|m| m.cols)
            .unwrap_or(0);
        let mut rows = 0;
        let mut data = Vec::new();
        for m in parts {
            if m.rows == 0 {
                continue;
            }
            if m.cols != cols {
                return Err(EncoderError::Shape(format!(
                    "vstack column mismatch: {} vs {}",
                    m.cols, cols
                )));
            }
            rows += m.rows;
            data.extend_from_slice(&m.data);
        }
        Ok(Matrix::from_raw(rows, cols, data))
    }

    /// Concatenates two matrices along the feature axis.
    pub fn hstack(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(EncoderError::Shape(format!(
                "hstack row mismatch: {} vs {}",
                self.rows, other.rows
            )));
        }
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for r in 0..self.rows {
            data.extend_from_slice(self.row(r));
            data.extend_from_slice(other.row(r));
        }
        Ok(Matrix::from_raw(self.rows, cols, data))
    }

    /// Element-wise sum; shapes must match.
    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(EncoderError::Shape(format!(
                "add shape mismatch: {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Matrix::from_raw(self.rows, self.cols, data))
    }
}

/// Standard matrix product with a fixed k-ascending accumulation order per
/// output element, so repeated calls are bit-identical.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(EncoderError::Shape(format!(
            "matmul inner dim mismatch: {}x{} * {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = vec![0.0f32; a.rows * b.cols];
    for i in 0..a.rows {
        let a_row = a.row(i);
        let out_row = &mut out[i * b.cols..(i + 1) * b.cols];
        for (k, &aik) in a_row.iter().enumerate() {
            let b_row = b.row(k);
            for (o, &bkj) in out_row.iter_mut().zip(b_row) {
                *o += aik * bkj;
            }
        }
    }
    Ok(Matrix::from_raw(a.rows, b.cols, out))
}

/// Per-row layer normalization followed by a feature-wise affine transform.
/// Variance is the biased (divide by n) estimate over the feature axis.
pub fn layer_norm(x: &Matrix, gain: &[f32], bias: &[f32], eps: f32) -> Result<Matrix> {
    if gain.len() != x.cols || bias.len() != x.cols {
        return Err(EncoderError::Shape(format!(
            "layer_norm gain/bias length {}/{} vs {} columns",
            gain.len(),
            bias.len(),
            x.cols
        )));
    }
    let n = x.cols as f32;
    let mut out = Matrix::zeros(x.rows, x.cols);
    for r in 0..x.rows {
        let row = x.row(r);
        let mut mean = 0.0f32;
        for &v in row {
            mean += v;
        }
        mean /= n;
        let mut var = 0.0f32;
        for &v in row {
            let d = v - mean;
            var += d * d;
        }
        var /= n;
        let inv = 1.0 / fmath::sqrt(var + eps);
        let dst = out.row_mut(r);
        for c in 0..row.len() {
            dst[c] = (row[c] - mean) * inv * gain[c] + bias[c];
        }
    }
    Ok(out)
}

/// ReLU applied element-wise.
pub fn relu(x: &Matrix) -> Matrix {
    let data = x.data.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
    Matrix::from_raw(x.rows, x.cols, data)
}

/// Boolean attention mask, query rows by key rows. `true` means the query may
/// attend to the key.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMask {
    rows: usize,
    cols: usize,
    data: Vec<bool>,
}

impl AttentionMask {
    /// All-denied mask; call [`AttentionMask::allow`] to open entries.
    pub fn new_denied(rows: usize, cols: usize) -> Self {
        AttentionMask {
            rows,
            cols,
            data: vec![false; rows * cols],
        }
    }

    pub fn new_allowed(rows: usize, cols: usize) -> Self {
        AttentionMask {
            rows,
            cols,
            data: vec![true; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn allow(&mut self, q: usize, k: usize) {
        self.data[q * self.cols + k] = true;
    }

    pub fn deny(&mut self, q: usize, k: usize) {
        self.data[q * self.cols + k] = false;
    }

    pub fn is_allowed(&self, q: usize, k: usize) -> bool {
        self.data[q * self.cols + k]
    }
}

/// Attention geometry: head count, per-head width, optional mask.
#[derive(Debug, Clone)]
pub struct AttentionSpec {
    pub num_heads: usize,
    pub head_dim: usize,
    pub mask: Option<AttentionMask>,
}

impl AttentionSpec {
    pub fn unmasked(num_heads: usize, head_dim: usize) -> Self {
        AttentionSpec {
            num_heads,
            head_dim,
            mask: None,
        }
    }

    pub fn model_dim(&self) -> usize {
        self.num_heads * self.head_dim
    }
}

/// Row-wise softmax over unmasked positions. Masked positions get probability
/// zero; a row with every position masked is an error rather than a NaN.
pub fn masked_softmax(logits: &Matrix, mask: Option<&AttentionMask>) -> Result<Matrix> {
    if let Some(m) = mask {
        if m.rows() != logits.rows || m.cols() != logits.cols {
            return Err(EncoderError::Shape(format!(
                "mask {}x{} vs logits {}x{}",
                m.rows(),
                m.cols(),
                logits.rows,
                logits.cols
            )));
        }
    }
    let mut out = Matrix::zeros(logits.rows, logits.cols);
    for r in 0..logits.rows {
        let row = logits.row(r);
        let mut max = f32::NEG_INFINITY;
        for (c, &v) in row.iter().enumerate() {
            if mask.is_none_or(|m| m.is_allowed(r, c)) && v > max {
                max = v;
            }
        }
        if max == f32::NEG_INFINITY {
            return Err(EncoderError::FullyMaskedQuery { row: r });
        }
        let mut denom = 0.0f32;
        let dst = out.row_mut(r);
        for (c, &v) in row.iter().enumerate() {
            if mask.is_none_or(|m| m.is_allowed(r, c)) {
                let e = fmath::exp(v - max);
                dst[c] = e;
                denom += e;
            }
        }
        for v in dst.iter_mut() {
            *v /= denom;
        }
    }
    Ok(out)
}

/// Scaled multi-head attention over already-projected inputs.
///
/// Splits `q`/`k`/`v` into `num_heads` contiguous column blocks of
/// `head_dim`, computes per-head scaled dot-product scores (scale
/// 1/sqrt(head_dim)), applies the optional mask via the softmax, and
/// concatenates the per-head context vectors. No output projection is
/// applied here; callers own that.
pub fn multi_head_attention(
    q: &Matrix,
    k: &Matrix,
    v: &Matrix,
    spec: &AttentionSpec,
) -> Result<Matrix> {
    let d = spec.model_dim();
    if q.cols != d || k.cols != d || v.cols != d {
        return Err(EncoderError::Shape(format!(
            "attention wants {} columns (heads {} x dim {}), got q {} k {} v {}",
            d, spec.num_heads, spec.head_dim, q.cols, k.cols, v.cols
        )));
    }
    if k.rows != v.rows {
        return Err(EncoderError::Shape(format!(
            "key rows {} != value rows {}",
            k.rows, v.rows
        )));
    }
    if let Some(m) = &spec.mask {
        if m.rows() != q.rows || m.cols() != k.rows {
            return Err(EncoderError::Shape(format!(
                "mask {}x{} vs queries {} keys {}",
                m.rows(),
                m.cols(),
                q.rows,
                k.rows
            )));
        }
    }

    let scale = 1.0 / fmath::sqrt(spec.head_dim as f32);
    let mut out = Matrix::zeros(q.rows, d);
    for h in 0..spec.num_heads {
        let lo = h * spec.head_dim;
        let hi = lo + spec.head_dim;
        let mut logits = Matrix::zeros(q.rows, k.rows);
        for i in 0..q.rows {
            let q_h = &q.row(i)[lo..hi];
            for j in 0..k.rows {
                let k_h = &k.row(j)[lo..hi];
                let mut dot = 0.0f32;
                for (a, b) in q_h.iter().zip(k_h) {
                    dot += a * b;
                }
                logits.set(i, j, dot * scale);
            }
        }
        let probs = masked_softmax(&logits, spec.mask.as_ref())?;
        for i in 0..q.rows {
            let p_row = probs.row(i);
            for (j, &p) in p_row.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let v_h = &v.row(j)[lo..hi];
                let dst = &mut out.row_mut(i)[lo..hi];
                for (o, &vv) in dst.iter_mut().zip(v_h) {
                    *o += p * vv;
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    // Reference oracles below are written with explicit index loops on
    // purpose.
    #![allow(clippy::needless_range_loop)]

    use super::*;

    fn rng_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-1.0f32..1.0))
            .collect();
        Matrix::from_raw(rows, cols, data)
    }

    /// Dumb ijk reference used as the matmul oracle.
    fn matmul_triple_loop(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut acc = 0.0f32;
                for k in 0..a.cols() {
                    acc += a.get(i, k) * b.get(k, j);
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    /// Scalar single-head attention oracle, written independently of the
    /// production kernel (no shared helpers, f64 softmax).
    fn attention_scalar_oracle(
        q: &Matrix,
        k: &Matrix,
        v: &Matrix,
        num_heads: usize,
        head_dim: usize,
        mask: Option<&AttentionMask>,
    ) -> Matrix {
        let mut out = Matrix::zeros(q.rows(), num_heads * head_dim);
        for h in 0..num_heads {
            for i in 0..q.rows() {
                let mut weights = alloc::vec![0.0f64; k.rows()];
                let mut denom = 0.0f64;
                let mut max = f64::NEG_INFINITY;
                for j in 0..k.rows() {
                    if mask.is_none_or(|m| m.is_allowed(i, j)) {
                        let mut dot = 0.0f64;
                        for c in 0..head_dim {
                            dot += q.get(i, h * head_dim + c) as f64
                                * k.get(j, h * head_dim + c) as f64;
                        }
                        let logit = dot / (head_dim as f64).sqrt();
                        if logit > max {
                            max = logit;
                        }
                        weights[j] = logit;
                    } else {
                        weights[j] = f64::NEG_INFINITY;
                    }
                }
                for w in weights.iter_mut() {
                    if *w > f64::NEG_INFINITY {
                        *w = (*w - max).exp();
                        denom += *w;
                    } else {
                        *w = 0.0;
                    }
                }
                for j in 0..k.rows() {
                    let p = weights[j] / denom;
                    for c in 0..head_dim {
                        let cur = out.get(i, h * head_dim + c);
                        out.set(
                            i,
                            h * head_dim + c,
                            cur + (p * v.get(j, h * head_dim + c) as f64) as f32,
                        );
                    }
                }
            }
        }
        out
    }

    #[test]
    fn matmul_identity() {
        let mut eye = Matrix::zeros(3, 3);
        for i in 0..3 {
            eye.set(i, i, 1.0);
        }
        let b = rng_matrix(3, 5, 1);
        let prod = matmul(&eye, &b).unwrap();
        assert_eq!(prod, b);
    }

    #[test]
    fn matmul_hand_checked() {
        let a = Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Matrix::from_vec(2, 1, vec![1.0, 1.0]).unwrap();
        let prod = matmul(&a, &b).unwrap();
        assert_eq!(prod.as_slice(), &[3.0, 7.0]);
    }

    #[test]
    fn matmul_matches_triple_loop_exactly() {
        for seed in 0..8 {
            let a = rng_matrix(8, 8, seed);
            let b = rng_matrix(8, 8, seed + 100);
            let fast = matmul(&a, &b).unwrap();
            let slow = matmul_triple_loop(&a, &b);
            assert_eq!(fast, slow, "seed {seed}");
        }
    }

    #[test]
    fn matmul_rejects_dim_mismatch() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(2, 2);
        assert!(matches!(matmul(&a, &b), Err(EncoderError::Shape(_))));
    }

    #[test]
    fn matrix_from_vec_rejects_nan() {
        let err = Matrix::from_vec(1, 2, vec![1.0, f32::NAN]).unwrap_err();
        assert!(matches!(err, EncoderError::NonFinite(_)));
    }

    #[test]
    fn layer_norm_constant_row_maps_to_bias() {
        let x = Matrix::from_vec(1, 4, vec![5.0; 4]).unwrap();
        let out = layer_norm(&x, &[1.0; 4], &[0.0; 4], 1e-5).unwrap();
        for &v in out.as_slice() {
            assert!(v.abs() < 1e-6);
        }
    }

    #[test]
    fn layer_norm_symmetric_pair() {
        let x = Matrix::from_vec(1, 2, vec![1.0, 3.0]).unwrap();
        let out = layer_norm(&x, &[1.0, 1.0], &[0.0, 0.0], 1e-12).unwrap();
        assert!((out.get(0, 0) + 1.0).abs() < 1e-5);
        assert!((out.get(0, 1) - 1.0).abs() < 1e-5);
    }

    #[test]
    fn layer_norm_statistics() {
        let x = rng_matrix(4, 6, 7);
        let out = layer_norm(&x, &[1.0; 6], &[0.0; 6], 1e-5).unwrap();
        for r in 0..4 {
            let row = out.row(r);
            let mean: f32 = row.iter().sum::<f32>() / 6.0;
            let var: f32 = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / 6.0;
            assert!(mean.abs() <= 1e-6, "row {r} mean {mean}");
            assert!((var - 1.0).abs() <= 1e-4, "row {r} var {var}");
        }
    }

    #[test]
    fn layer_norm_rejects_bad_lengths() {
        let x = Matrix::zeros(1, 4);
        assert!(layer_norm(&x, &[1.0; 3], &[0.0; 4], 1e-5).is_err());
    }

    #[test]
    fn attention_single_key_passes_value_through() {
        let q = rng_matrix(3, 4, 2);
        let k = rng_matrix(1, 4, 3);
        let v = rng_matrix(1, 4, 4);
        let out = multi_head_attention(&q, &k, &v, &AttentionSpec::unmasked(2, 2)).unwrap();
        for r in 0..3 {
            for c in 0..4 {
                assert!((out.get(r, c) - v.get(0, c)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn attention_identical_keys_average_values() {
        let q = rng_matrix(1, 4, 5);
        let key_row = rng_matrix(1, 4, 6);
        let k = Matrix::vstack(&[&key_row, &key_row]).unwrap();
        let v = rng_matrix(2, 4, 7);
        let out = multi_head_attention(&q, &k, &v, &AttentionSpec::unmasked(1, 4)).unwrap();
        for c in 0..4 {
            let mean = 0.5 * (v.get(0, c) + v.get(1, c));
            assert!((out.get(0, c) - mean).abs() < 1e-6);
        }
    }

    #[test]
    fn attention_matches_scalar_oracle() {
        let q = rng_matrix(2, 2, 10);
        let k = rng_matrix(2, 2, 11);
        let v = rng_matrix(2, 2, 12);
        let out = multi_head_attention(&q, &k, &v, &AttentionSpec::unmasked(1, 2)).unwrap();
        let oracle = attention_scalar_oracle(&q, &k, &v, 1, 2, None);
        for i in 0..2 {
            for c in 0..2 {
                assert!((out.get(i, c) - oracle.get(i, c)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn attention_multi_head_matches_scalar_oracle_masked() {
        let q = rng_matrix(4, 6, 20);
        let k = rng_matrix(5, 6, 21);
        let v = rng_matrix(5, 6, 22);
        let mut mask = AttentionMask::new_allowed(4, 5);
        mask.deny(0, 3);
        mask.deny(2, 0);
        mask.deny(2, 1);
        let spec = AttentionSpec {
            num_heads: 3,
            head_dim: 2,
            mask: Some(mask.clone()),
        };
        let out = multi_head_attention(&q, &k, &v, &spec).unwrap();
        let oracle = attention_scalar_oracle(&q, &k, &v, 3, 2, Some(&mask));
        for i in 0..4 {
            for c in 0..6 {
                assert!((out.get(i, c) - oracle.get(i, c)).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn fully_masked_row_is_an_error() {
        let q = rng_matrix(2, 2, 30);
        let k = rng_matrix(2, 2, 31);
        let v = rng_matrix(2, 2, 32);
        let mut mask = AttentionMask::new_allowed(2, 2);
        mask.deny(1, 0);
        mask.deny(1, 1);
        let spec = AttentionSpec {
            num_heads: 1,
            head_dim: 2,
            mask: Some(mask),
        };
        let err = multi_head_attention(&q, &k, &v, &spec).unwrap_err();
        assert_eq!(err, EncoderError::FullyMaskedQuery { row: 1 });
    }

    #[test]
    fn softmax_rows_sum_to_one_over_unmasked() {
        let logits = rng_matrix(5, 7, 40);
        let mut mask = AttentionMask::new_allowed(5, 7);
        mask.deny(0, 0);
        mask.deny(3, 2);
        mask.deny(3, 4);
        let probs = masked_softmax(&logits, Some(&mask)).unwrap();
        for r in 0..5 {
            let sum: f32 = probs.row(r).iter().sum();
            assert!((sum - 1.0).abs() <= 1e-6, "row {r} sums to {sum}");
            for c in 0..7 {
                if !mask.is_allowed(r, c) {
                    assert_eq!(probs.get(r, c), 0.0);
                }
            }
        }
    }

    #[test]
    fn attention_invariant_under_key_value_permutation() {
        let q = rng_matrix(3, 4, 50);
        let k = rng_matrix(6, 4, 51);
        let v = rng_matrix(6, 4, 52);
        let mut mask = AttentionMask::new_allowed(3, 6);
        mask.deny(1, 4);
        let spec = AttentionSpec {
            num_heads: 2,
            head_dim: 2,
            mask: Some(mask.clone()),
        };
        let base = multi_head_attention(&q, &k, &v, &spec).unwrap();

        let perm = [3usize, 0, 5, 1, 4, 2];
        let mut kp = Matrix::zeros(6, 4);
        let mut vp = Matrix::zeros(6, 4);
        let mut maskp = AttentionMask::new_denied(3, 6);
        for (new_j, &old_j) in perm.iter().enumerate() {
            for c in 0..4 {
                kp.set(new_j, c, k.get(old_j, c));
                vp.set(new_j, c, v.get(old_j, c));
            }
            for qrow in 0..3 {
                if mask.is_allowed(qrow, old_j) {
                    maskp.allow(qrow, new_j);
                }
            }
        }
        let spec_p = AttentionSpec {
            num_heads: 2,
            head_dim: 2,
            mask: Some(maskp),
        };
        let permuted = multi_head_attention(&q, &kp, &vp, &spec_p).unwrap();
        for i in 0..3 {
            for c in 0..4 {
                assert!((base.get(i, c) - permuted.get(i, c)).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn layer_norm_per_row_affine_invariance() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..20 {
            let x = rng_matrix(3, 8, rng.random());
            let mut shifted = x.clone();
            for r in 0..3 {
                let c: f32 = rng.random_range(0.5..4.0);
                let d: f32 = rng.random_range(-2.0..2.0);
                for col in 0..8 {
                    shifted.set(r, col, x.get(r, col) * c + d);
                }
            }
            let a = layer_norm(&x, &[1.0; 8], &[0.0; 8], 1e-7).unwrap();
            let b = layer_norm(&shifted, &[1.0; 8], &[0.0; 8], 1e-7).unwrap();
            for r in 0..3 {
                for col in 0..8 {
                    assert!((a.get(r, col) - b.get(r, col)).abs() <= 1e-5);
                }
            }
        }
    }

    #[test]
    fn relu_clamps_negatives() {
        let x = Matrix::from_vec(1, 4, vec![-1.0, 0.0, 0.5, 2.0]).unwrap();
        assert_eq!(relu(&x).as_slice(), &[0.0, 0.0, 0.5, 2.0]);
    }
}
