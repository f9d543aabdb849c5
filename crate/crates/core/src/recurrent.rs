//! Recurrent encoders: the LSTM cell, the streaming unidirectional LSTM
//! stack, and latency-controlled bidirectional LSTM (LCBLSTM) block
//! processing.
//!
//! The unidirectional stack carries (h, c) across arbitrary chunk
//! boundaries, so streaming output is bit-identical to a whole-sequence
//! pass. LCBLSTM processes non-overlapping center segments with a
//! right-context block: the left-to-right direction resumes from the state
//! saved at the last frame of the previous *center* (right-context frames
//! never influence the carried state), while the right-to-left direction
//! restarts from zero over each [center, right] block.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{EncoderError, Result};
use crate::numerics::{sigmoid, tanh, Matrix};
use crate::weights::{Linear, WeightSet};

/// Combined gate parameters for one LSTM layer: a single 4H x (D+H) matrix
/// plus a 4H bias, gate order [input, forget, cell, output].
#[derive(Debug, Clone)]
pub struct LstmLayerWeights {
    gates: Linear,
    input_dim: usize,
    hidden_dim: usize,
}

impl LstmLayerWeights {
    pub fn new(gates: Linear, input_dim: usize, hidden_dim: usize) -> Result<Self> {
        if gates.out_dim() != 4 * hidden_dim || gates.in_dim() != input_dim + hidden_dim {
            return Err(EncoderError::Shape(format!(
                "lstm layer expects gates {}x{}, got {}x{}",
                4 * hidden_dim,
                input_dim + hidden_dim,
                gates.out_dim(),
                gates.in_dim()
            )));
        }
        Ok(LstmLayerWeights {
            gates,
            input_dim,
            hidden_dim,
        })
    }

    pub fn from_set(
        set: &WeightSet,
        prefix: &str,
        input_dim: usize,
        hidden_dim: usize,
    ) -> Result<Self> {
        let gates = Linear::from_set(set, prefix, input_dim + hidden_dim, 4 * hidden_dim)?;
        LstmLayerWeights::new(gates, input_dim, hidden_dim)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }
}

/// Hidden and cell state of one LSTM layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCellState {
    pub h: Vec<f32>,
    pub c: Vec<f32>,
}

impl LstmCellState {
    pub fn zeros(hidden_dim: usize) -> Self {
        LstmCellState {
            h: vec![0.0; hidden_dim],
            c: vec![0.0; hidden_dim],
        }
    }
}

/// One LSTM recurrence step. Returns the output (the new hidden state) and
/// the updated state.
pub fn lstm_cell_step(
    x: &[f32],
    state: &LstmCellState,
    w: &LstmLayerWeights,
) -> Result<(Vec<f32>, LstmCellState)> {
    if x.len() != w.input_dim {
        return Err(EncoderError::Shape(format!(
            "lstm input length {} vs {}",
            x.len(),
            w.input_dim
        )));
    }
    let h = w.hidden_dim;
    let mut xh = Vec::with_capacity(x.len() + h);
    xh.extend_from_slice(x);
    xh.extend_from_slice(&state.h);
    let z = w.gates.forward_row(&xh)?;

    let mut new_c = Vec::with_capacity(h);
    let mut new_h = Vec::with_capacity(h);
    for j in 0..h {
        let i_g = sigmoid(z[j]);
        let f_g = sigmoid(z[h + j]);
        let g = tanh(z[2 * h + j]);
        let o_g = sigmoid(z[3 * h + j]);
        let c = f_g * state.c[j] + i_g * g;
        new_h.push(o_g * tanh(c));
        new_c.push(c);
    }
    let new_state = LstmCellState {
        h: new_h.clone(),
        c: new_c,
    };
    Ok((new_h, new_state))
}

/// Inter-layer frame decimation: after `after_layer`'s output, keep every
/// `factor`-th frame (phase 0 relative to the start of the stream).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubsampleSpec {
    pub after_layer: usize,
    pub factor: usize,
}

/// Streaming state for [`LstmEncoder`]: per-layer (h, c), plus the frame
/// counter at each decimation point so the kept-frame phase survives chunk
/// boundaries.
#[derive(Debug, Clone)]
pub struct LstmStreamState {
    cells: Vec<LstmCellState>,
    decim_seen: Vec<usize>,
}

/// Unidirectional multi-layer LSTM with optional inter-layer decimation.
#[derive(Debug, Clone)]
pub struct LstmEncoder {
    layers: Vec<LstmLayerWeights>,
    subsample: Vec<SubsampleSpec>,
}

impl LstmEncoder {
    pub fn new(layers: Vec<LstmLayerWeights>, subsample: Vec<SubsampleSpec>) -> Result<Self> {
        if layers.is_empty() {
            return Err(EncoderError::Config("lstm encoder needs >= 1 layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[1].input_dim != pair[0].hidden_dim {
                return Err(EncoderError::Shape(format!(
                    "lstm layer chain mismatch: {} outputs vs {} inputs",
                    pair[0].hidden_dim, pair[1].input_dim
                )));
            }
        }
        for s in &subsample {
            if s.factor < 2 || s.after_layer >= layers.len() {
                return Err(EncoderError::Config(format!(
                    "bad subsample spec (after layer {}, factor {})",
                    s.after_layer, s.factor
                )));
            }
        }
        Ok(LstmEncoder { layers, subsample })
    }

    /// Builds from tensors named `lstm.<i>.weight` / `lstm.<i>.bias`.
    pub fn from_set(
        set: &WeightSet,
        num_layers: usize,
        input_dim: usize,
        hidden_dim: usize,
        subsample: Vec<SubsampleSpec>,
    ) -> Result<Self> {
        let mut layers = Vec::with_capacity(num_layers);
        for i in 0..num_layers {
            let in_dim = if i == 0 { input_dim } else { hidden_dim };
            layers.push(LstmLayerWeights::from_set(
                set,
                &format!("lstm.{i}"),
                in_dim,
                hidden_dim,
            )?);
        }
        LstmEncoder::new(layers, subsample)
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().hidden_dim
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn init_state(&self) -> LstmStreamState {
        LstmStreamState {
            cells: self
                .layers
                .iter()
                .map(|l| LstmCellState::zeros(l.hidden_dim))
                .collect(),
            decim_seen: vec![0; self.subsample.len()],
        }
    }

    /// Processes a chunk of frames, updating the stream state. Any chunking
    /// of the same sequence produces bit-identical concatenated output.
    pub fn forward_chunk(&self, chunk: &Matrix, state: &mut LstmStreamState) -> Result<Matrix> {
        let mut current = chunk.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::with_capacity(current.rows() * layer.hidden_dim);
            for t in 0..current.rows() {
                let (y, ns) = lstm_cell_step(current.row(t), &state.cells[l], layer)?;
                state.cells[l] = ns;
                out.extend_from_slice(&y);
            }
            current = Matrix::from_raw(current.rows(), layer.hidden_dim, out);
            for (si, spec) in self.subsample.iter().enumerate() {
                if spec.after_layer != l {
                    continue;
                }
                let seen = state.decim_seen[si];
                let mut kept = Vec::new();
                let mut kept_rows = 0;
                for t in 0..current.rows() {
                    if (seen + t).is_multiple_of(spec.factor) {
                        kept.extend_from_slice(current.row(t));
                        kept_rows += 1;
                    }
                }
                state.decim_seen[si] = seen + current.rows();
                current = Matrix::from_raw(kept_rows, current.cols(), kept);
            }
        }
        Ok(current)
    }
}

/// LCBLSTM geometry: segment sizes are in post-frontend frames at the
/// encoder input rate.
#[derive(Debug, Clone, PartialEq)]
pub struct LcblstmConfig {
    pub layers: usize,
    pub hidden_per_direction: usize,
    pub center_frames: usize,
    pub right_frames: usize,
    pub subsample: Vec<SubsampleSpec>,
}

impl LcblstmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.hidden_per_direction == 0 {
            return Err(EncoderError::Config("lcblstm needs layers and cells".into()));
        }
        if self.center_frames == 0 {
            return Err(EncoderError::Config("lcblstm center must be >= 1 frame".into()));
        }
        for s in &self.subsample {
            if s.factor < 2 || s.after_layer >= self.layers {
                return Err(EncoderError::Config(format!(
                    "bad subsample spec (after layer {}, factor {})",
                    s.after_layer, s.factor
                )));
            }
        }
        Ok(())
    }
}

/// Forward- and backward-direction weights for one LCBLSTM layer.
#[derive(Debug, Clone)]
pub struct LcblstmLayerWeights {
    pub fwd: LstmLayerWeights,
    pub bwd: LstmLayerWeights,
}

/// Carried stream state: the forward direction's (h, c) per layer, taken at
/// the last frame of the previous center segment.
#[derive(Debug, Clone)]
pub struct LcblstmStreamState {
    fwd: Vec<LstmCellState>,
}

/// Per-layer intermediates captured during a segment, for the
/// carried-state equivalence oracle: the center rows fed to each layer and
/// the forward-direction outputs over those rows.
#[derive(Debug, Clone, Default)]
pub struct LcblstmSegmentTrace {
    pub center_inputs: Vec<Matrix>,
    pub fwd_center_outputs: Vec<Matrix>,
}

/// Latency-controlled BLSTM encoder.
#[derive(Debug, Clone)]
pub struct LcblstmEncoder {
    layers: Vec<LcblstmLayerWeights>,
    subsample: Vec<SubsampleSpec>,
}

impl LcblstmEncoder {
    pub fn new(layers: Vec<LcblstmLayerWeights>, subsample: Vec<SubsampleSpec>) -> Result<Self> {
        if layers.is_empty() {
            return Err(EncoderError::Config("lcblstm needs >= 1 layer".into()));
        }
        Ok(LcblstmEncoder { layers, subsample })
    }

    /// Builds from tensors named `lcblstm.<i>.fwd.*` / `lcblstm.<i>.bwd.*`.
    pub fn from_set(set: &WeightSet, input_dim: usize, cfg: &LcblstmConfig) -> Result<Self> {
        cfg.validate()?;
        let h = cfg.hidden_per_direction;
        let mut layers = Vec::with_capacity(cfg.layers);
        for i in 0..cfg.layers {
            let in_dim = if i == 0 { input_dim } else { 2 * h };
            layers.push(LcblstmLayerWeights {
                fwd: LstmLayerWeights::from_set(set, &format!("lcblstm.{i}.fwd"), in_dim, h)?,
                bwd: LstmLayerWeights::from_set(set, &format!("lcblstm.{i}.bwd"), in_dim, h)?,
            });
        }
        LcblstmEncoder::new(layers, cfg.subsample.clone())
    }

    pub fn out_dim(&self) -> usize {
        2 * self.layers.last().unwrap().fwd.hidden_dim()
    }

    /// The left-to-right weights of one layer (for the full-sequence
    /// equivalence oracle).
    pub fn layer_forward_weights(&self, layer: usize) -> &LstmLayerWeights {
        &self.layers[layer].fwd
    }

    pub fn init_state(&self) -> LcblstmStreamState {
        LcblstmStreamState {
            fwd: self
                .layers
                .iter()
                .map(|l| LstmCellState::zeros(l.fwd.hidden_dim()))
                .collect(),
        }
    }

    /// Processes one (center, right) block through every layer. Returns the
    /// doubled-dim center and right outputs; the carried state advances to
    /// the forward state at the last center frame.
    pub fn forward_segment(
        &self,
        center: &Matrix,
        right: &Matrix,
        state: &mut LcblstmStreamState,
    ) -> Result<(Matrix, Matrix)> {
        self.forward_segment_inner(center, right, state, None)
    }

    /// Same as [`Self::forward_segment`] but records per-layer center
    /// inputs/outputs for the full-sequence equivalence oracle.
    pub fn forward_segment_traced(
        &self,
        center: &Matrix,
        right: &Matrix,
        state: &mut LcblstmStreamState,
        trace: &mut LcblstmSegmentTrace,
    ) -> Result<(Matrix, Matrix)> {
        self.forward_segment_inner(center, right, state, Some(trace))
    }

    fn forward_segment_inner(
        &self,
        center: &Matrix,
        right: &Matrix,
        state: &mut LcblstmStreamState,
        mut trace: Option<&mut LcblstmSegmentTrace>,
    ) -> Result<(Matrix, Matrix)> {
        if center.rows() == 0 {
            return Err(EncoderError::EmptyCenter);
        }
        let mut cur_c = center.clone();
        let mut cur_r = right.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let c_len = cur_c.rows();
            let joint = Matrix::vstack(&[&cur_c, &cur_r])?;
            let h = layer.fwd.hidden_dim();

            // Left-to-right over [C, R] from the carried state; the state
            // saved for the next segment is the one at the last C frame.
            let mut fwd_rows = Vec::with_capacity(joint.rows() * h);
            let mut fwd_state = state.fwd[l].clone();
            let mut carried = None;
            for t in 0..joint.rows() {
                let (y, ns) = lstm_cell_step(joint.row(t), &fwd_state, &layer.fwd)?;
                fwd_state = ns;
                fwd_rows.extend_from_slice(&y);
                if t + 1 == c_len {
                    carried = Some(fwd_state.clone());
                }
            }
            state.fwd[l] = carried.expect("center is non-empty");
            let fwd_out = Matrix::from_raw(joint.rows(), h, fwd_rows);

            // Right-to-left over the same block from zero state.
            let mut bwd_rows = vec![0.0f32; joint.rows() * h];
            let mut bwd_state = LstmCellState::zeros(h);
            for t in (0..joint.rows()).rev() {
                let (y, ns) = lstm_cell_step(joint.row(t), &bwd_state, &layer.bwd)?;
                bwd_state = ns;
                bwd_rows[t * h..(t + 1) * h].copy_from_slice(&y);
            }
            let bwd_out = Matrix::from_raw(joint.rows(), h, bwd_rows);

            if let Some(t) = trace.as_deref_mut() {
                t.center_inputs.push(cur_c.clone());
                t.fwd_center_outputs.push(fwd_out.slice_rows(0..c_len));
            }

            let mut next = fwd_out.hstack(&bwd_out)?;
            let mut next_c_len = c_len;
            for spec in &self.subsample {
                if spec.after_layer != l {
                    continue;
                }
                let mut kept = Vec::new();
                let mut kept_rows = 0;
                let mut kept_c = 0;
                for t in 0..next.rows() {
                    if t % spec.factor == 0 {
                        kept.extend_from_slice(next.row(t));
                        kept_rows += 1;
                        if t < next_c_len {
                            kept_c += 1;
                        }
                    }
                }
                next = Matrix::from_raw(kept_rows, next.cols(), kept);
                next_c_len = kept_c;
            }
            cur_c = next.slice_rows(0..next_c_len);
            cur_r = next.slice_rows(next_c_len..next.rows());
        }
        Ok((cur_c, cur_r))
    }
}

#[cfg(test)]
mod tests {
    // Reference oracles below are written with explicit index loops on
    // purpose.
    #![allow(clippy::needless_range_loop)]

    use super::*;
    use crate::weights::Tensor;
    use rand::{Rng, SeedableRng};

    fn rng_vec(n: usize, rng: &mut impl Rng, lim: f32) -> Vec<f32> {
        (0..n).map(|_| rng.random_range(-lim..lim)).collect()
    }

    fn rng_layer(input: usize, hidden: usize, seed: u64) -> LstmLayerWeights {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let w = Matrix::from_raw(
            4 * hidden,
            input + hidden,
            rng_vec(4 * hidden * (input + hidden), &mut rng, 0.4),
        );
        let b = rng_vec(4 * hidden, &mut rng, 0.1);
        LstmLayerWeights::new(Linear::new(Tensor::F32(w), b).unwrap(), input, hidden).unwrap()
    }

    fn rng_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_raw(rows, cols, rng_vec(rows * cols, &mut rng, 1.0))
    }

    /// Independent scalar LSTM step in f64 with explicit gate arithmetic.
    fn scalar_cell_oracle(
        x: &[f32],
        h_prev: &[f32],
        c_prev: &[f32],
        w: &Matrix,
        b: &[f32],
        hidden: usize,
    ) -> (Vec<f32>, Vec<f32>) {
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let mut xh: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        xh.extend(h_prev.iter().map(|&v| v as f64));
        let gate = |row: usize| -> f64 {
            let mut acc = b[row] as f64;
            for (col, &v) in xh.iter().enumerate() {
                acc += w.get(row, col) as f64 * v;
            }
            acc
        };
        let mut h_out = Vec::new();
        let mut c_out = Vec::new();
        for j in 0..hidden {
            let i_g = sig(gate(j));
            let f_g = sig(gate(hidden + j));
            let g = gate(2 * hidden + j).tanh();
            let o_g = sig(gate(3 * hidden + j));
            let c = f_g * c_prev[j] as f64 + i_g * g;
            h_out.push((o_g * c.tanh()) as f32);
            c_out.push(c as f32);
        }
        (h_out, c_out)
    }

    #[test]
    fn zero_weights_are_a_fixed_point() {
        let w = LstmLayerWeights::new(
            Linear::new(Tensor::F32(Matrix::zeros(8, 5)), vec![0.0; 8]).unwrap(),
            3,
            2,
        )
        .unwrap();
        let state = LstmCellState::zeros(2);
        let (y, ns) = lstm_cell_step(&[1.0, -2.0, 0.5], &state, &w).unwrap();
        assert_eq!(y, vec![0.0, 0.0]);
        assert_eq!(ns.c, vec![0.0, 0.0]);
    }

    #[test]
    fn saturated_forget_gate_preserves_cell() {
        // Zero weight matrix; forget bias very positive, input bias very
        // negative: c' = 1*c + 0*g = c.
        let hidden = 3;
        let mut bias = vec![0.0f32; 4 * hidden];
        for j in 0..hidden {
            bias[j] = -50.0; // input gate -> 0
            bias[hidden + j] = 50.0; // forget gate -> 1
        }
        let w = LstmLayerWeights::new(
            Linear::new(Tensor::F32(Matrix::zeros(4 * hidden, 2 + hidden)), bias).unwrap(),
            2,
            hidden,
        )
        .unwrap();
        let state = LstmCellState {
            h: vec![0.1, -0.2, 0.3],
            c: vec![0.7, -0.4, 0.9],
        };
        let (_, ns) = lstm_cell_step(&[1.0, 1.0], &state, &w).unwrap();
        for (a, b) in ns.c.iter().zip(&state.c) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn cell_step_matches_scalar_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let w_mat = Matrix::from_raw(16, 8, rng_vec(16 * 8, &mut rng, 0.5));
        let bias = rng_vec(16, &mut rng, 0.2);
        let w = LstmLayerWeights::new(
            Linear::new(Tensor::F32(w_mat.clone()), bias.clone()).unwrap(),
            4,
            4,
        )
        .unwrap();
        let state = LstmCellState {
            h: rng_vec(4, &mut rng, 0.5),
            c: rng_vec(4, &mut rng, 0.5),
        };
        let x = rng_vec(4, &mut rng, 1.0);
        let (y, ns) = lstm_cell_step(&x, &state, &w).unwrap();
        let (oy, oc) = scalar_cell_oracle(&x, &state.h, &state.c, &w_mat, &bias, 4);
        for j in 0..4 {
            assert!((y[j] - oy[j]).abs() < 1e-6);
            assert!((ns.c[j] - oc[j]).abs() < 1e-6);
        }
    }

    #[test]
    fn chunked_streaming_is_bitwise_identical() {
        let enc = LstmEncoder::new(
            vec![rng_layer(6, 5, 1), rng_layer(5, 5, 2)],
            vec![SubsampleSpec {
                after_layer: 0,
                factor: 4,
            }],
        )
        .unwrap();
        let seq = rng_matrix(50, 6, 3);

        let mut full_state = enc.init_state();
        let full = enc.forward_chunk(&seq, &mut full_state).unwrap();

        let mut chunk_state = enc.init_state();
        let mut parts = Vec::new();
        let mut at = 0;
        for take in [3usize, 10, 1, 7, 10, 10, 9] {
            parts.push(
                enc.forward_chunk(&seq.slice_rows(at..at + take), &mut chunk_state)
                    .unwrap(),
            );
            at += take;
        }
        assert_eq!(at, 50);
        let refs: Vec<&Matrix> = parts.iter().collect();
        let chunked = Matrix::vstack(&refs).unwrap();
        assert_eq!(full.as_slice(), chunked.as_slice());
        assert_eq!(full_state.cells[0], chunk_state.cells[0]);
        assert_eq!(full_state.cells[1], chunk_state.cells[1]);
    }

    #[test]
    fn empty_chunk_is_a_no_op() {
        let enc = LstmEncoder::new(vec![rng_layer(4, 3, 5)], vec![]).unwrap();
        let mut state = enc.init_state();
        enc.forward_chunk(&rng_matrix(5, 4, 6), &mut state).unwrap();
        let before = state.cells[0].clone();
        let out = enc.forward_chunk(&Matrix::zeros(0, 4), &mut state).unwrap();
        assert_eq!(out.rows(), 0);
        assert_eq!(state.cells[0], before);
    }

    #[test]
    fn lcblstm_degenerate_single_segment_forward_half_is_unidirectional() {
        let fwd = rng_layer(5, 4, 10);
        let enc = LcblstmEncoder::new(
            vec![LcblstmLayerWeights {
                fwd: fwd.clone(),
                bwd: rng_layer(5, 4, 11),
            }],
            vec![],
        )
        .unwrap();
        let seq = rng_matrix(12, 5, 12);
        let mut state = enc.init_state();
        let (c_out, r_out) = enc
            .forward_segment(&seq, &Matrix::zeros(0, 5), &mut state)
            .unwrap();
        assert_eq!(r_out.rows(), 0);

        let uni = LstmEncoder::new(vec![fwd], vec![]).unwrap();
        let mut uni_state = uni.init_state();
        let uni_out = uni.forward_chunk(&seq, &mut uni_state).unwrap();
        for t in 0..12 {
            assert_eq!(&c_out.row(t)[..4], uni_out.row(t));
        }
    }

    #[test]
    fn lcblstm_forward_direction_matches_full_sequence_lstm() {
        // Multi-segment, multi-layer, with 2:1 decimation: for every layer,
        // the forward-direction outputs over centers must equal an
        // unsegmented pass over that layer's concatenated center inputs.
        let cfg = LcblstmConfig {
            layers: 2,
            hidden_per_direction: 4,
            center_frames: 6,
            right_frames: 3,
            subsample: vec![SubsampleSpec {
                after_layer: 0,
                factor: 2,
            }],
        };
        let layers = vec![
            LcblstmLayerWeights {
                fwd: rng_layer(5, 4, 20),
                bwd: rng_layer(5, 4, 21),
            },
            LcblstmLayerWeights {
                fwd: rng_layer(8, 4, 22),
                bwd: rng_layer(8, 4, 23),
            },
        ];
        let enc = LcblstmEncoder::new(layers.clone(), cfg.subsample.clone()).unwrap();
        let seq = rng_matrix(30, 5, 24);

        let mut state = enc.init_state();
        let mut traces: Vec<LcblstmSegmentTrace> = Vec::new();
        let mut at = 0;
        while at < seq.rows() {
            let c_end = (at + cfg.center_frames).min(seq.rows());
            let r_end = (c_end + cfg.right_frames).min(seq.rows());
            let mut trace = LcblstmSegmentTrace::default();
            enc.forward_segment_traced(
                &seq.slice_rows(at..c_end),
                &seq.slice_rows(c_end..r_end),
                &mut state,
                &mut trace,
            )
            .unwrap();
            traces.push(trace);
            at = c_end;
        }

        for l in 0..2 {
            let inputs: Vec<&Matrix> = traces.iter().map(|t| &t.center_inputs[l]).collect();
            let outputs: Vec<&Matrix> = traces.iter().map(|t| &t.fwd_center_outputs[l]).collect();
            let full_in = Matrix::vstack(&inputs).unwrap();
            let expected = Matrix::vstack(&outputs).unwrap();
            let uni = LstmEncoder::new(vec![layers[l].fwd.clone()], vec![]).unwrap();
            let mut uni_state = uni.init_state();
            let got = uni.forward_chunk(&full_in, &mut uni_state).unwrap();
            assert_eq!(got.rows(), expected.rows());
            for (a, b) in got.as_slice().iter().zip(expected.as_slice()) {
                assert!((a - b).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn lcblstm_backward_half_is_segment_local() {
        let enc = LcblstmEncoder::new(
            vec![LcblstmLayerWeights {
                fwd: rng_layer(3, 4, 30),
                bwd: rng_layer(3, 4, 31),
            }],
            vec![],
        )
        .unwrap();
        let seq = rng_matrix(20, 3, 32);
        let c = seq.slice_rows(4..8);
        let r = seq.slice_rows(8..10);

        let run = |prefix: &Matrix| {
            let mut state = enc.init_state();
            enc.forward_segment(prefix, &Matrix::zeros(0, 3), &mut state)
                .unwrap();
            let (c_out, _) = enc.forward_segment(&c, &r, &mut state).unwrap();
            c_out
        };
        let base = run(&seq.slice_rows(0..4));
        // Mutate everything outside [C, R]: different prefix, and the frames
        // after R are never delivered at all.
        let mutated = run(&rng_matrix(4, 3, 33));
        for t in 0..base.rows() {
            // Backward half (columns 4..8) depends only on [C, R].
            assert_eq!(&base.row(t)[4..], &mutated.row(t)[4..]);
        }
    }

    #[test]
    fn lcblstm_rejects_empty_center() {
        let enc = LcblstmEncoder::new(
            vec![LcblstmLayerWeights {
                fwd: rng_layer(3, 2, 40),
                bwd: rng_layer(3, 2, 41),
            }],
            vec![],
        )
        .unwrap();
        let mut state = enc.init_state();
        let err = enc
            .forward_segment(&Matrix::zeros(0, 3), &rng_matrix(2, 3, 42), &mut state)
            .unwrap_err();
        assert_eq!(err, EncoderError::EmptyCenter);
    }
}
