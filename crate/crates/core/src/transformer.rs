//! Offline transformer encoder stack and the masked offline reference that
//! replays block-processing attention patterns without streaming.
//!
//! Layer arrangement is pre-norm: LayerNorm -> attention -> residual,
//! LayerNorm -> FFN -> residual. One additional stack-level LayerNorm is
//! applied after the final layer so the input cannot reach the output purely
//! through residual paths.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::emformer::EmformerConfig;
use crate::error::{EncoderError, Result};
use crate::numerics::{multi_head_attention, relu, AttentionMask, AttentionSpec, Matrix};
use crate::weights::{LayerNormParams, Linear, WeightSet};

/// All parameters of one transformer layer.
#[derive(Debug, Clone)]
pub struct TransformerLayerWeights {
    pub ln1: LayerNormParams,
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    pub ln2: LayerNormParams,
    pub ffn1: Linear,
    pub ffn2: Linear,
}

impl TransformerLayerWeights {
    /// Builds from tensors under `<prefix>.` (attn.{q,k,v,out}, ln1, ln2,
    /// ffn1, ffn2).
    pub fn from_set(
        set: &WeightSet,
        prefix: &str,
        model_dim: usize,
        ffn_dim: usize,
    ) -> Result<Self> {
        Ok(TransformerLayerWeights {
            ln1: LayerNormParams::from_set(set, &format!("{prefix}.ln1"), model_dim)?,
            wq: Linear::from_set(set, &format!("{prefix}.attn.q"), model_dim, model_dim)?,
            wk: Linear::from_set(set, &format!("{prefix}.attn.k"), model_dim, model_dim)?,
            wv: Linear::from_set(set, &format!("{prefix}.attn.v"), model_dim, model_dim)?,
            wo: Linear::from_set(set, &format!("{prefix}.attn.out"), model_dim, model_dim)?,
            ln2: LayerNormParams::from_set(set, &format!("{prefix}.ln2"), model_dim)?,
            ffn1: Linear::from_set(set, &format!("{prefix}.ffn1"), model_dim, ffn_dim)?,
            ffn2: Linear::from_set(set, &format!("{prefix}.ffn2"), ffn_dim, model_dim)?,
        })
    }

    /// One pre-norm layer: attention with residual, then FFN with residual.
    /// The stack-level output norm is *not* applied here.
    pub fn forward(
        &self,
        x: &Matrix,
        num_heads: usize,
        head_dim: usize,
        mask: Option<&AttentionMask>,
    ) -> Result<Matrix> {
        let xh = self.ln1.apply(x)?;
        let q = self.wq.forward(&xh)?;
        let k = self.wk.forward(&xh)?;
        let v = self.wv.forward(&xh)?;
        let spec = AttentionSpec {
            num_heads,
            head_dim,
            mask: mask.cloned(),
        };
        let att = multi_head_attention(&q, &k, &v, &spec)?;
        let z = self.wo.forward(&att)?.add(x)?;
        let zh = self.ln2.apply(&z)?;
        self.ffn2.forward(&relu(&self.ffn1.forward(&zh)?))?.add(&z)
    }
}

/// A stack of transformer layers plus the trailing stack-level LayerNorm.
#[derive(Debug, Clone)]
pub struct TransformerStack {
    pub layers: Vec<TransformerLayerWeights>,
    pub final_ln: LayerNormParams,
    pub num_heads: usize,
    pub head_dim: usize,
}

impl TransformerStack {
    /// Builds from tensors named `enc.<i>.*` and `enc.final_ln.*`.
    pub fn from_set(
        set: &WeightSet,
        num_layers: usize,
        model_dim: usize,
        num_heads: usize,
        head_dim: usize,
        ffn_dim: usize,
    ) -> Result<Self> {
        if num_heads * head_dim != model_dim {
            return Err(EncoderError::Config(format!(
                "{num_heads} heads x {head_dim} != model dim {model_dim}"
            )));
        }
        let mut layers = Vec::with_capacity(num_layers);
        for i in 0..num_layers {
            layers.push(TransformerLayerWeights::from_set(
                set,
                &format!("enc.{i}"),
                model_dim,
                ffn_dim,
            )?);
        }
        Ok(TransformerStack {
            layers,
            final_ln: LayerNormParams::from_set(set, "enc.final_ln", model_dim)?,
            num_heads,
            head_dim,
        })
    }

    pub fn model_dim(&self) -> usize {
        self.num_heads * self.head_dim
    }

    /// Runs every layer without the stack-level output norm.
    pub fn forward_layers(&self, x: &Matrix, mask: Option<&AttentionMask>) -> Result<Matrix> {
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = layer.forward(&cur, self.num_heads, self.head_dim, mask)?;
        }
        Ok(cur)
    }

    /// Full offline encoder: all layers, then the stack-level LayerNorm.
    pub fn forward(&self, x: &Matrix, mask: Option<&AttentionMask>) -> Result<Matrix> {
        self.final_ln.apply(&self.forward_layers(x, mask)?)
    }
}

/// Role of one row in the expanded (block-replay) sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameRole {
    Center,
    RightCopy,
}

/// One row of the expanded sequence: which original frame it copies, which
/// segment it belongs to, and its role there.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExpandedFrame {
    pub orig: usize,
    pub segment: usize,
    pub role: FrameRole,
}

/// Expanded index ranges for one segment, plus the producing-segment window
/// whose memory slots its queries may attend.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSpan {
    pub center: Range<usize>,
    pub right: Range<usize>,
    pub memory_from: Range<usize>,
}

/// Block-processing attention pattern laid out offline.
///
/// Original frames are expanded so that each segment owns hard copies of its
/// right-context frames: a physical frame appears once as a center row and
/// possibly again as a right-copy of the previous segment, because the two
/// roles produce different representations. Every query of segment `k`
/// (center and right-copy rows alike) may attend its segment's center and
/// right rows, the last `left_frames` center rows before the segment, and up
/// to `max_memory` memory slots produced by segments `k - max_memory .. k`.
#[derive(Debug, Clone)]
pub struct MaskPlan {
    pub frames: Vec<ExpandedFrame>,
    pub segments: Vec<SegmentSpan>,
    pub mask: AttentionMask,
}

impl MaskPlan {
    pub fn build(
        total_frames: usize,
        center: usize,
        right: usize,
        left: usize,
        max_memory: usize,
    ) -> Result<MaskPlan> {
        if center == 0 {
            return Err(EncoderError::Config("center must be >= 1 frame".into()));
        }
        if total_frames == 0 {
            return Err(EncoderError::Config("empty sequence".into()));
        }
        let mut frames = Vec::new();
        let mut segments = Vec::new();
        let mut k = 0;
        while k * center < total_frames {
            let c_start = k * center;
            let c_end = (c_start + center).min(total_frames);
            let r_end = (c_end + right).min(total_frames);
            let center_lo = frames.len();
            for orig in c_start..c_end {
                frames.push(ExpandedFrame {
                    orig,
                    segment: k,
                    role: FrameRole::Center,
                });
            }
            let right_lo = frames.len();
            for orig in c_end..r_end {
                frames.push(ExpandedFrame {
                    orig,
                    segment: k,
                    role: FrameRole::RightCopy,
                });
            }
            segments.push(SegmentSpan {
                center: center_lo..right_lo,
                right: right_lo..frames.len(),
                memory_from: k.saturating_sub(max_memory)..k,
            });
            k += 1;
        }

        let n = frames.len();
        let mut mask = AttentionMask::new_denied(n, n);
        for (k, span) in segments.iter().enumerate() {
            let c_start = k * center;
            let left_lo = c_start.saturating_sub(left);
            for q in span.center.clone().chain(span.right.clone()) {
                // Own segment rows.
                for key in span.center.clone().chain(span.right.clone()) {
                    mask.allow(q, key);
                }
                // Previous center frames within the left-context window.
                for (key, frame) in frames.iter().enumerate() {
                    if frame.role == FrameRole::Center
                        && frame.orig >= left_lo
                        && frame.orig < c_start
                    {
                        mask.allow(q, key);
                    }
                }
            }
        }
        Ok(MaskPlan {
            frames,
            segments,
            mask,
        })
    }

    /// Expanded input built by copying original rows per the plan.
    pub fn expand(&self, seq: &Matrix) -> Matrix {
        let mut data = Vec::with_capacity(self.frames.len() * seq.cols());
        for f in &self.frames {
            data.extend_from_slice(seq.row(f.orig));
        }
        Matrix::from_raw(self.frames.len(), seq.cols(), data)
    }

    /// Expanded key indices one of segment `k`'s queries may attend
    /// (identical for every query row of the segment).
    pub fn allowed_keys(&self, k: usize) -> Vec<usize> {
        let q = self.segments[k]
            .center
            .clone()
            .chain(self.segments[k].right.clone())
            .next()
            .expect("segment has at least one center row");
        (0..self.frames.len())
            .filter(|&key| self.mask.is_allowed(q, key))
            .collect()
    }
}

fn gather_rows(m: &Matrix, idx: &[usize]) -> Matrix {
    let mut data = Vec::with_capacity(idx.len() * m.cols());
    for &i in idx {
        data.extend_from_slice(m.row(i));
    }
    Matrix::from_raw(idx.len(), m.cols(), data)
}

fn mean_rows(m: &Matrix, range: Range<usize>) -> Matrix {
    let n = range.len() as f32;
    let mut acc = vec![0.0f32; m.cols()];
    for r in range {
        for (a, &v) in acc.iter_mut().zip(m.row(r)) {
            *a += v;
        }
    }
    for a in acc.iter_mut() {
        *a /= n;
    }
    Matrix::from_raw(1, m.cols(), acc)
}

/// Offline replay of the streaming block-processing encoder.
///
/// Runs the whole utterance through the stack at once, but restricts
/// attention with a [`MaskPlan`] so every segment sees exactly what the
/// streaming pass sees: its own (center, right) block, the trailing
/// `left_frames` center rows, and the memory slots carried from earlier
/// segments one layer below. Returns one output row per original frame.
/// Must agree with the streaming implementation to within float
/// reassociation noise.
pub fn offline_emformer_oracle(
    seq: &Matrix,
    cfg: &EmformerConfig,
    stack: &TransformerStack,
) -> Result<Matrix> {
    cfg.validate()?;
    if seq.cols() != stack.model_dim() {
        return Err(EncoderError::Shape(format!(
            "sequence dim {} vs model dim {}",
            seq.cols(),
            stack.model_dim()
        )));
    }
    let plan = MaskPlan::build(
        seq.rows(),
        cfg.center_frames,
        cfg.right_frames,
        cfg.left_frames,
        cfg.max_memory,
    )?;
    let num_layers = stack.layers.len();
    let mut x = plan.expand(seq);
    // Memory vectors available to the *current* layer, one slot per segment.
    // Layer 0 never has any; layer n's slots were produced at layer n-1.
    let mut mem: Vec<Option<Matrix>> = vec![None; plan.segments.len()];

    for (n, layer) in stack.layers.iter().enumerate() {
        let xh = layer.ln1.apply(&x)?;
        let q_all = layer.wq.forward(&xh)?;
        let k_frames = layer.wk.forward(&xh)?;
        let v_frames = layer.wv.forward(&xh)?;

        let mut out = Matrix::zeros(x.rows(), x.cols());
        let mut next_mem: Vec<Option<Matrix>> = vec![None; plan.segments.len()];
        for (k, span) in plan.segments.iter().enumerate() {
            let q_idx: Vec<usize> = span.center.clone().chain(span.right.clone()).collect();
            let keys = plan.allowed_keys(k);

            let mut k_parts = vec![gather_rows(&k_frames, &keys)];
            let mut v_parts = vec![gather_rows(&v_frames, &keys)];
            for j in span.memory_from.clone() {
                if let Some(m) = &mem[j] {
                    k_parts.push(layer.wk.forward(m)?);
                    v_parts.push(layer.wv.forward(m)?);
                }
            }
            let k_refs: Vec<&Matrix> = k_parts.iter().collect();
            let v_refs: Vec<&Matrix> = v_parts.iter().collect();
            let k_all = Matrix::vstack(&k_refs)?;
            let v_all = Matrix::vstack(&v_refs)?;

            let q = gather_rows(&q_all, &q_idx);
            let att = multi_head_attention(
                &q,
                &k_all,
                &v_all,
                &AttentionSpec::unmasked(stack.num_heads, stack.head_dim),
            )?;
            let projected = layer.wo.forward(&att)?;
            for (qi, &row) in q_idx.iter().enumerate() {
                for c in 0..x.cols() {
                    out.set(row, c, projected.get(qi, c) + x.get(row, c));
                }
            }

            if cfg.max_memory > 0 && n + 1 < num_layers {
                let pooled = mean_rows(&xh, span.center.clone());
                let qm = layer.wq.forward(&pooled)?;
                // Memory-vector attention excludes the memory slots.
                let kp = gather_rows(&k_frames, &keys);
                let vp = gather_rows(&v_frames, &keys);
                let am = multi_head_attention(
                    &qm,
                    &kp,
                    &vp,
                    &AttentionSpec::unmasked(stack.num_heads, stack.head_dim),
                )?;
                next_mem[k] = Some(layer.wo.forward(&am)?);
            }
        }

        let zh = layer.ln2.apply(&out)?;
        x = layer
            .ffn2
            .forward(&relu(&layer.ffn1.forward(&zh)?))?
            .add(&out)?;
        mem = next_mem;
    }

    // Gather center rows back into original frame order and apply the
    // stack-level norm.
    let mut centers = Vec::with_capacity(plan.segments.len());
    for span in &plan.segments {
        centers.push(x.slice_rows(span.center.clone()));
    }
    let refs: Vec<&Matrix> = centers.iter().collect();
    stack.final_ln.apply(&Matrix::vstack(&refs)?)
}
