//! Streaming Emformer forward pass and the AM-TRF block-processing
//! reference.
//!
//! Both encoders process one (center, right) block at a time. The Emformer
//! queries only the normalized [center, right] rows and assembles keys and
//! values as [cached left keys, projected center, projected right, projected
//! memory bank]: left-context embeddings are never recomputed, which is the
//! whole saving. The AM-TRF reference instead re-runs every layer over the
//! full [left, center, right] block, so its per-segment attention cost
//! carries the extra `left` query rows; both paths report instrumented
//! attention FLOP counts for the comparison.
//!
//! Memory handling follows the block-processing recurrences: the Emformer's
//! memory vector computed at layer `n`, segment `k` joins the bank that
//! layer `n+1` reads from segment `k+1` on (layer 0's bank stays empty);
//! AM-TRF inserts the vector into the same layer's bank for the next
//! segment.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{EncoderError, Result};
use crate::numerics::{multi_head_attention, relu, AttentionSpec, Matrix};
use crate::transformer::{TransformerLayerWeights, TransformerStack};
use crate::weights::WeightSet;

/// Geometry and architecture of one Emformer (or AM-TRF) encoder. Frame
/// counts are in post-frontend frames.
#[derive(Debug, Clone, PartialEq)]
pub struct EmformerConfig {
    pub layers: usize,
    pub model_dim: usize,
    pub num_heads: usize,
    pub head_dim: usize,
    pub ffn_dim: usize,
    pub center_frames: usize,
    pub right_frames: usize,
    pub left_frames: usize,
    pub max_memory: usize,
}

impl EmformerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.center_frames == 0 {
            return Err(EncoderError::Config("center must be >= 1 frame".into()));
        }
        if self.num_heads * self.head_dim != self.model_dim {
            return Err(EncoderError::Config(alloc::format!(
                "{} heads x {} != model dim {}",
                self.num_heads,
                self.head_dim,
                self.model_dim
            )));
        }
        if self.layers == 0 {
            return Err(EncoderError::Config("need >= 1 layer".into()));
        }
        Ok(())
    }
}

/// Whether left context comes from the key/value cache or is re-projected
/// from retained normalized center inputs. The two must agree exactly; the
/// recompute path exists to validate the cache.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeftContextMode {
    Cached,
    RecomputeFromHistory,
}

#[derive(Debug, Clone)]
struct EmformerLayerState {
    key_cache: Matrix,
    val_cache: Matrix,
    /// Normalized center inputs of prior segments (RecomputeFromHistory).
    norm_center_history: Matrix,
    mem_bank: Matrix,
}

/// Per-stream Emformer state: per-layer caches and memory banks plus the
/// segment counter.
#[derive(Debug, Clone)]
pub struct EmformerStreamState {
    layers: Vec<EmformerLayerState>,
    segment_index: usize,
}

impl EmformerStreamState {
    pub fn segment_index(&self) -> usize {
        self.segment_index
    }

    /// Cached key rows for one layer (for inspection in tests).
    pub fn cached_keys(&self, layer: usize) -> &Matrix {
        &self.layers[layer].key_cache
    }

    pub fn memory_rows(&self, layer: usize) -> usize {
        self.layers[layer].mem_bank.rows()
    }
}

/// Instrumented multiply-add counts for one segment's attention work.
/// `segment_attention` covers the [center, right] (plus left for AM-TRF)
/// query block; `memory_attention` covers the pooled-query memory vectors.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SegmentStats {
    pub segment_attention_flops: u64,
    pub memory_attention_flops: u64,
}

impl SegmentStats {
    pub fn total(&self) -> u64 {
        self.segment_attention_flops + self.memory_attention_flops
    }
}

fn attn_flops(q_rows: usize, k_rows: usize, model_dim: usize) -> u64 {
    // Score matmul + weighted sum, one multiply and one add each.
    4 * (q_rows as u64) * (k_rows as u64) * (model_dim as u64)
}

/// Keeps the newest `limit` rows of `base` extended by `extra`.
pub fn update_kv_cache(base: &Matrix, extra: &Matrix, limit: usize) -> Result<Matrix> {
    let joined = Matrix::vstack(&[base, extra])?;
    if joined.rows() <= limit {
        return Ok(joined);
    }
    Ok(joined.slice_rows(joined.rows() - limit..joined.rows()))
}

fn mean_rows(m: &Matrix, rows: usize) -> Matrix {
    let n = rows as f32;
    let mut acc = vec![0.0f32; m.cols()];
    for r in 0..rows {
        for (a, &v) in acc.iter_mut().zip(m.row(r)) {
            *a += v;
        }
    }
    for a in acc.iter_mut() {
        *a /= n;
    }
    Matrix::from_raw(1, m.cols(), acc)
}

/// Memory vector for the next layer's bank: average-pool the normalized
/// center rows, project to a query, and attend over the given keys/values
/// (which must already exclude memory rows).
pub fn compute_memory_vector(
    layer: &TransformerLayerWeights,
    num_heads: usize,
    head_dim: usize,
    norm_center: &Matrix,
    keys_no_mem: &Matrix,
    vals_no_mem: &Matrix,
) -> Result<Matrix> {
    if norm_center.rows() == 0 {
        return Err(EncoderError::EmptyCenter);
    }
    let pooled = mean_rows(norm_center, norm_center.rows());
    let qm = layer.wq.forward(&pooled)?;
    let att = multi_head_attention(
        &qm,
        keys_no_mem,
        vals_no_mem,
        &AttentionSpec::unmasked(num_heads, head_dim),
    )?;
    layer.wo.forward(&att)
}

/// Streaming Emformer encoder.
#[derive(Debug, Clone)]
pub struct EmformerEncoder {
    stack: TransformerStack,
    cfg: EmformerConfig,
    mode: LeftContextMode,
}

impl EmformerEncoder {
    pub fn new(stack: TransformerStack, cfg: EmformerConfig) -> Result<Self> {
        cfg.validate()?;
        if stack.layers.len() != cfg.layers || stack.model_dim() != cfg.model_dim {
            return Err(EncoderError::Config(
                "weight stack does not match encoder config".into(),
            ));
        }
        Ok(EmformerEncoder {
            stack,
            cfg,
            mode: LeftContextMode::Cached,
        })
    }

    pub fn from_set(set: &WeightSet, cfg: &EmformerConfig) -> Result<Self> {
        let stack = TransformerStack::from_set(
            set,
            cfg.layers,
            cfg.model_dim,
            cfg.num_heads,
            cfg.head_dim,
            cfg.ffn_dim,
        )?;
        EmformerEncoder::new(stack, cfg.clone())
    }

    pub fn with_mode(mut self, mode: LeftContextMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn config(&self) -> &EmformerConfig {
        &self.cfg
    }

    pub fn stack(&self) -> &TransformerStack {
        &self.stack
    }

    pub fn init_state(&self) -> EmformerStreamState {
        EmformerStreamState {
            layers: (0..self.cfg.layers)
                .map(|_| EmformerLayerState {
                    key_cache: Matrix::zeros(0, self.cfg.model_dim),
                    val_cache: Matrix::zeros(0, self.cfg.model_dim),
                    norm_center_history: Matrix::zeros(0, self.cfg.model_dim),
                    mem_bank: Matrix::zeros(0, self.cfg.model_dim),
                })
                .collect(),
            segment_index: 0,
        }
    }

    /// Processes one (center, right) block. The right block may be shorter
    /// than the configured lookahead (or empty) at the end of the stream.
    /// Returns the center outputs after the stack-level norm, plus the
    /// attention cost of this segment.
    pub fn forward_segment(
        &self,
        center: &Matrix,
        right: &Matrix,
        state: &mut EmformerStreamState,
    ) -> Result<(Matrix, SegmentStats)> {
        if center.rows() == 0 {
            return Err(EncoderError::EmptyCenter);
        }
        if center.cols() != self.cfg.model_dim
            || (right.rows() > 0 && right.cols() != self.cfg.model_dim)
        {
            return Err(EncoderError::Shape(alloc::format!(
                "segment dim {} vs model dim {}",
                center.cols(),
                self.cfg.model_dim
            )));
        }
        let c_len = center.rows();
        let num_layers = self.cfg.layers;
        let mut x = Matrix::vstack(&[center, right])?;
        let mut staged_mem: Vec<Option<Matrix>> = vec![None; num_layers];
        let mut stats = SegmentStats::default();

        for n in 0..num_layers {
            let layer = &self.stack.layers[n];
            let xh = layer.ln1.apply(&x)?;
            let q = layer.wq.forward(&xh)?;
            let k_cr = layer.wk.forward(&xh)?;
            let v_cr = layer.wv.forward(&xh)?;

            let st = &state.layers[n];
            let (k_left, v_left) = match self.mode {
                LeftContextMode::Cached => (st.key_cache.clone(), st.val_cache.clone()),
                LeftContextMode::RecomputeFromHistory => (
                    layer.wk.forward(&st.norm_center_history)?,
                    layer.wv.forward(&st.norm_center_history)?,
                ),
            };
            let (k_mem, v_mem) = if st.mem_bank.rows() > 0 {
                (
                    layer.wk.forward(&st.mem_bank)?,
                    layer.wv.forward(&st.mem_bank)?,
                )
            } else {
                (
                    Matrix::zeros(0, self.cfg.model_dim),
                    Matrix::zeros(0, self.cfg.model_dim),
                )
            };
            let k_all = Matrix::vstack(&[&k_left, &k_cr, &k_mem])?;
            let v_all = Matrix::vstack(&[&v_left, &v_cr, &v_mem])?;

            let att = multi_head_attention(
                &q,
                &k_all,
                &v_all,
                &AttentionSpec::unmasked(self.cfg.num_heads, self.cfg.head_dim),
            )?;
            stats.segment_attention_flops +=
                attn_flops(q.rows(), k_all.rows(), self.cfg.model_dim);
            let z = layer.wo.forward(&att)?.add(&x)?;

            // Memory vector emitted for layer n+1's bank at the next segment.
            if self.cfg.max_memory > 0 && n + 1 < num_layers {
                let kp = Matrix::vstack(&[&k_left, &k_cr])?;
                let vp = Matrix::vstack(&[&v_left, &v_cr])?;
                let m = compute_memory_vector(
                    layer,
                    self.cfg.num_heads,
                    self.cfg.head_dim,
                    &xh.slice_rows(0..c_len),
                    &kp,
                    &vp,
                )?;
                stats.memory_attention_flops += attn_flops(1, kp.rows(), self.cfg.model_dim);
                staged_mem[n + 1] = Some(m);
            }

            // Only center keys/values enter the cache.
            let st = &mut state.layers[n];
            st.key_cache = update_kv_cache(
                &st.key_cache,
                &k_cr.slice_rows(0..c_len),
                self.cfg.left_frames,
            )?;
            st.val_cache = update_kv_cache(
                &st.val_cache,
                &v_cr.slice_rows(0..c_len),
                self.cfg.left_frames,
            )?;
            st.norm_center_history = update_kv_cache(
                &st.norm_center_history,
                &xh.slice_rows(0..c_len),
                self.cfg.left_frames,
            )?;

            let zh = layer.ln2.apply(&z)?;
            x = layer.ffn2.forward(&relu(&layer.ffn1.forward(&zh)?))?.add(&z)?;
        }

        // Banks update at the segment boundary: a vector staged for layer
        // n+1 must not be visible within the segment that produced it.
        for (n, staged) in staged_mem.into_iter().enumerate() {
            if let Some(m) = staged {
                let st = &mut state.layers[n];
                st.mem_bank = update_kv_cache(&st.mem_bank, &m, self.cfg.max_memory)?;
            }
        }
        state.segment_index += 1;

        let centers = x.slice_rows(0..c_len);
        Ok((self.stack.final_ln.apply(&centers)?, stats))
    }
}

/// Per-stream AM-TRF state: raw left-context frames plus one same-layer
/// memory bank per layer.
#[derive(Debug, Clone)]
pub struct AmtrfStreamState {
    left_frames: Matrix,
    mem_banks: Vec<Matrix>,
}

/// Block-processing transformer that recomputes left-context embeddings
/// every segment. Kept as a cost/equivalence reference for the Emformer.
#[derive(Debug, Clone)]
pub struct AmtrfEncoder {
    stack: TransformerStack,
    cfg: EmformerConfig,
}

impl AmtrfEncoder {
    pub fn new(stack: TransformerStack, cfg: EmformerConfig) -> Result<Self> {
        cfg.validate()?;
        if stack.layers.len() != cfg.layers || stack.model_dim() != cfg.model_dim {
            return Err(EncoderError::Config(
                "weight stack does not match encoder config".into(),
            ));
        }
        Ok(AmtrfEncoder { stack, cfg })
    }

    pub fn from_set(set: &WeightSet, cfg: &EmformerConfig) -> Result<Self> {
        let stack = TransformerStack::from_set(
            set,
            cfg.layers,
            cfg.model_dim,
            cfg.num_heads,
            cfg.head_dim,
            cfg.ffn_dim,
        )?;
        AmtrfEncoder::new(stack, cfg.clone())
    }

    pub fn config(&self) -> &EmformerConfig {
        &self.cfg
    }

    pub fn init_state(&self) -> AmtrfStreamState {
        AmtrfStreamState {
            left_frames: Matrix::zeros(0, self.cfg.model_dim),
            mem_banks: vec![Matrix::zeros(0, self.cfg.model_dim); self.cfg.layers],
        }
    }

    /// Processes one segment with the caller-carried raw left context: every
    /// layer runs over the full [left, center, right] block, so left-context
    /// embeddings are recomputed from scratch each step.
    pub fn forward_segment(
        &self,
        center: &Matrix,
        right: &Matrix,
        state: &mut AmtrfStreamState,
    ) -> Result<(Matrix, SegmentStats)> {
        if center.rows() == 0 {
            return Err(EncoderError::EmptyCenter);
        }
        let l_len = state.left_frames.rows();
        let c_len = center.rows();
        let mut x = Matrix::vstack(&[&state.left_frames, center, right])?;
        let mut staged_mem: Vec<Option<Matrix>> = vec![None; self.cfg.layers];
        let mut stats = SegmentStats::default();

        for (n, layer) in self.stack.layers.iter().enumerate() {
            let xh = layer.ln1.apply(&x)?;
            let q = layer.wq.forward(&xh)?;
            let k_x = layer.wk.forward(&xh)?;
            let v_x = layer.wv.forward(&xh)?;
            let bank = &state.mem_banks[n];
            let (k_mem, v_mem) = if bank.rows() > 0 {
                (layer.wk.forward(bank)?, layer.wv.forward(bank)?)
            } else {
                (
                    Matrix::zeros(0, self.cfg.model_dim),
                    Matrix::zeros(0, self.cfg.model_dim),
                )
            };
            let k_all = Matrix::vstack(&[&k_x, &k_mem])?;
            let v_all = Matrix::vstack(&[&v_x, &v_mem])?;
            let att = multi_head_attention(
                &q,
                &k_all,
                &v_all,
                &AttentionSpec::unmasked(self.cfg.num_heads, self.cfg.head_dim),
            )?;
            stats.segment_attention_flops +=
                attn_flops(q.rows(), k_all.rows(), self.cfg.model_dim);
            let z = layer.wo.forward(&att)?.add(&x)?;

            // Same-layer memory carry: the vector joins this layer's bank
            // for the next segment.
            if self.cfg.max_memory > 0 {
                let m = compute_memory_vector(
                    layer,
                    self.cfg.num_heads,
                    self.cfg.head_dim,
                    &xh.slice_rows(l_len..l_len + c_len),
                    &k_x,
                    &v_x,
                )?;
                stats.memory_attention_flops += attn_flops(1, k_x.rows(), self.cfg.model_dim);
                staged_mem[n] = Some(m);
            }

            let zh = layer.ln2.apply(&z)?;
            x = layer.ffn2.forward(&relu(&layer.ffn1.forward(&zh)?))?.add(&z)?;
        }

        for (n, staged) in staged_mem.into_iter().enumerate() {
            if let Some(m) = staged {
                state.mem_banks[n] =
                    update_kv_cache(&state.mem_banks[n], &m, self.cfg.max_memory)?;
            }
        }
        state.left_frames =
            update_kv_cache(&state.left_frames, center, self.cfg.left_frames)?;

        let centers = x.slice_rows(l_len..l_len + c_len);
        Ok((self.stack.final_ln.apply(&centers)?, stats))
    }
}

/// Convenience driver: segments a whole post-frontend utterance and streams
/// it through an Emformer, returning concatenated center outputs and summed
/// stats. The final segment may carry a truncated (possibly empty) right
/// block.
pub fn emformer_forward_utterance(
    encoder: &EmformerEncoder,
    seq: &Matrix,
) -> Result<(Matrix, SegmentStats)> {
    let cfg = encoder.config();
    let mut state = encoder.init_state();
    let mut outputs = Vec::new();
    let mut total = SegmentStats::default();
    let mut at = 0;
    while at < seq.rows() {
        let c_end = (at + cfg.center_frames).min(seq.rows());
        let r_end = (c_end + cfg.right_frames).min(seq.rows());
        let (out, stats) = encoder.forward_segment(
            &seq.slice_rows(at..c_end),
            &seq.slice_rows(c_end..r_end),
            &mut state,
        )?;
        total.segment_attention_flops += stats.segment_attention_flops;
        total.memory_attention_flops += stats.memory_attention_flops;
        outputs.push(out);
        at = c_end;
    }
    let refs: Vec<&Matrix> = outputs.iter().collect();
    Ok((Matrix::vstack(&refs)?, total))
}
