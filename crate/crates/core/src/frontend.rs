//! Feature frontends: turning 80-dim log-Mel frames at 10 ms into the
//! stacked/subsampled/projected sequences each encoder family consumes.
//!
//! Three arrangements are supported:
//! - project each frame then stack `n` consecutive frames (attention
//!   encoders; multiplies the frame period by `n`),
//! - stack only,
//! - stack each frame with `k` future frames, keeping the frame rate
//!   (unidirectional LSTM lookahead).
//!
//! Stacking drops a trailing partial group; lookahead stacking zero-pads at
//! the end of the sequence. [`StreamingFrontend`] produces bit-identical
//! output to the batch path when fed incrementally.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{EncoderError, Result};
use crate::numerics::Matrix;
use crate::weights::{Linear, WeightSet};

/// Tensor name prefix for the optional frontend projection.
pub const FRONTEND_PROJ: &str = "frontend.proj";

/// A frames-by-dim feature matrix with frame-rate metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    frame_rate_ms: u32,
    data: Matrix,
}

impl FeatureSequence {
    pub fn new(data: Matrix, frame_rate_ms: u32) -> Result<Self> {
        if frame_rate_ms == 0 {
            return Err(EncoderError::Config("frame rate must be positive".into()));
        }
        Ok(FeatureSequence {
            frame_rate_ms,
            data,
        })
    }

    pub fn frames(&self) -> usize {
        self.data.rows()
    }

    pub fn dim(&self) -> usize {
        self.data.cols()
    }

    pub fn frame_rate_ms(&self) -> u32 {
        self.frame_rate_ms
    }

    pub fn data(&self) -> &Matrix {
        &self.data
    }

    pub fn into_data(self) -> Matrix {
        self.data
    }
}

/// How raw frames are arranged before the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrontendOrder {
    /// Per-frame linear projection, then stack `stack` consecutive frames.
    ProjectThenStack,
    /// Stack `stack` consecutive frames, no projection.
    StackOnly,
    /// Stack each frame with `lookahead_stack` future frames; rate unchanged.
    LookaheadThenPassthrough,
}

/// Frontend arrangement for one encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontendConfig {
    pub order: FrontendOrder,
    /// Projection output dim; weights live at `frontend.proj.*`.
    pub projection: Option<usize>,
    pub stack: usize,
    pub lookahead_stack: usize,
}

impl FrontendConfig {
    /// Pass-through frontend: no projection, no stacking.
    pub fn identity() -> Self {
        FrontendConfig {
            order: FrontendOrder::StackOnly,
            projection: None,
            stack: 1,
            lookahead_stack: 0,
        }
    }

    pub fn project_then_stack(proj_dim: usize, stack: usize) -> Self {
        FrontendConfig {
            order: FrontendOrder::ProjectThenStack,
            projection: Some(proj_dim),
            stack,
            lookahead_stack: 0,
        }
    }

    pub fn lookahead(frames: usize) -> Self {
        FrontendConfig {
            order: FrontendOrder::LookaheadThenPassthrough,
            projection: None,
            stack: 1,
            lookahead_stack: frames,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stack == 0 {
            return Err(EncoderError::Config("frontend stack must be >= 1".into()));
        }
        if matches!(self.order, FrontendOrder::ProjectThenStack) && self.projection.is_none() {
            return Err(EncoderError::Config(
                "project_then_stack frontend needs a projection dim".into(),
            ));
        }
        Ok(())
    }

    /// Feature dim after the frontend.
    pub fn out_dim(&self, in_dim: usize) -> usize {
        match self.order {
            FrontendOrder::ProjectThenStack => self.projection.unwrap_or(in_dim) * self.stack,
            FrontendOrder::StackOnly => in_dim * self.stack,
            FrontendOrder::LookaheadThenPassthrough => in_dim * (self.lookahead_stack + 1),
        }
    }

    /// Frame period after the frontend.
    pub fn out_rate_ms(&self, in_rate_ms: u32) -> u32 {
        match self.order {
            FrontendOrder::ProjectThenStack | FrontendOrder::StackOnly => {
                in_rate_ms * self.stack as u32
            }
            FrontendOrder::LookaheadThenPassthrough => in_rate_ms,
        }
    }

    /// Latency contributed by lookahead stacking.
    pub fn lookahead_ms(&self, in_rate_ms: u32) -> u32 {
        self.lookahead_stack as u32 * in_rate_ms
    }

    /// Loads the projection layer this frontend needs, if any.
    pub fn load_projection(&self, in_dim: usize, weights: &WeightSet) -> Result<Option<Linear>> {
        match (self.order, self.projection) {
            (FrontendOrder::ProjectThenStack, Some(out)) => {
                Ok(Some(Linear::from_set(weights, FRONTEND_PROJ, in_dim, out)?))
            }
            _ => Ok(None),
        }
    }
}

fn stack_groups(frames: &Matrix, stack: usize) -> Matrix {
    let groups = frames.rows() / stack;
    let dim = frames.cols();
    let mut data = Vec::with_capacity(groups * stack * dim);
    for g in 0..groups {
        for f in 0..stack {
            data.extend_from_slice(frames.row(g * stack + f));
        }
    }
    Matrix::from_raw(groups, dim * stack, data)
}

/// Stacks each frame with `future` following frames, zero-padding past the
/// end of the sequence. Frame count and rate are unchanged.
pub fn lstm_lookahead_stack(seq: &FeatureSequence, future: usize) -> FeatureSequence {
    let frames = seq.frames();
    let dim = seq.dim();
    let mut data = Vec::with_capacity(frames * dim * (future + 1));
    for t in 0..frames {
        for dt in 0..=future {
            if t + dt < frames {
                data.extend_from_slice(seq.data().row(t + dt));
            } else {
                data.extend(core::iter::repeat_n(0.0, dim));
            }
        }
    }
    FeatureSequence {
        frame_rate_ms: seq.frame_rate_ms,
        data: Matrix::from_raw(frames, dim * (future + 1), data),
    }
}

/// Whole-sequence frontend application.
pub fn apply_frontend(
    seq: &FeatureSequence,
    cfg: &FrontendConfig,
    weights: &WeightSet,
) -> Result<FeatureSequence> {
    cfg.validate()?;
    match cfg.order {
        FrontendOrder::LookaheadThenPassthrough => {
            Ok(lstm_lookahead_stack(seq, cfg.lookahead_stack))
        }
        FrontendOrder::StackOnly | FrontendOrder::ProjectThenStack => {
            let projected = match cfg.load_projection(seq.dim(), weights)? {
                Some(proj) => proj.forward(seq.data())?,
                None => seq.data().clone(),
            };
            let stacked = stack_groups(&projected, cfg.stack);
            FeatureSequence::new(stacked, seq.frame_rate_ms * cfg.stack as u32)
        }
    }
}

/// Incremental frontend with the same output as [`apply_frontend`].
///
/// Lookahead frames are emitted only once their future context has arrived;
/// `flush` zero-pads whatever is still pending. Group stacking drops a
/// trailing partial group at flush, matching the batch path.
#[derive(Debug)]
pub struct StreamingFrontend {
    cfg: FrontendConfig,
    projection: Option<Linear>,
    in_dim: usize,
    pending: Matrix,
}

impl StreamingFrontend {
    pub fn new(cfg: FrontendConfig, in_dim: usize, weights: &WeightSet) -> Result<Self> {
        cfg.validate()?;
        let projection = cfg.load_projection(in_dim, weights)?;
        Self::with_projection(cfg, in_dim, projection)
    }

    /// Builds from an already-extracted projection layer.
    pub fn with_projection(
        cfg: FrontendConfig,
        in_dim: usize,
        projection: Option<Linear>,
    ) -> Result<Self> {
        cfg.validate()?;
        if matches!(cfg.order, FrontendOrder::ProjectThenStack) && projection.is_none() {
            return Err(EncoderError::Config(
                "projection weights required for this frontend".into(),
            ));
        }
        Ok(StreamingFrontend {
            cfg,
            projection,
            in_dim,
            pending: Matrix::zeros(0, 0),
        })
    }

    pub fn out_dim(&self) -> usize {
        self.cfg.out_dim(self.in_dim)
    }

    /// Feeds raw frames, returning whatever post-frontend frames are now
    /// complete.
    pub fn push(&mut self, frames: &Matrix) -> Result<Matrix> {
        if frames.rows() > 0 && frames.cols() != self.in_dim {
            return Err(EncoderError::Shape(format!(
                "frontend expects dim {}, got {}",
                self.in_dim,
                frames.cols()
            )));
        }
        let incoming = match &self.projection {
            Some(proj) => proj.forward(frames)?,
            None => frames.clone(),
        };
        self.pending = if self.pending.rows() == 0 {
            incoming
        } else {
            Matrix::vstack(&[&self.pending, &incoming])?
        };

        match self.cfg.order {
            FrontendOrder::StackOnly | FrontendOrder::ProjectThenStack => {
                let groups = self.pending.rows() / self.cfg.stack;
                if groups == 0 {
                    return Ok(Matrix::zeros(0, self.out_dim()));
                }
                let ready = self.pending.slice_rows(0..groups * self.cfg.stack);
                self.pending = self
                    .pending
                    .slice_rows(groups * self.cfg.stack..self.pending.rows());
                Ok(stack_groups(&ready, self.cfg.stack))
            }
            FrontendOrder::LookaheadThenPassthrough => {
                let future = self.cfg.lookahead_stack;
                let total = self.pending.rows();
                if total <= future {
                    return Ok(Matrix::zeros(0, self.out_dim()));
                }
                let emit = total - future;
                let mut data = Vec::with_capacity(emit * self.out_dim());
                for t in 0..emit {
                    for dt in 0..=future {
                        data.extend_from_slice(self.pending.row(t + dt));
                    }
                }
                self.pending = self.pending.slice_rows(emit..total);
                Ok(Matrix::from_raw(emit, self.out_dim(), data))
            }
        }
    }

    /// Drains pending frames at end of stream.
    pub fn flush(&mut self) -> Result<Matrix> {
        match self.cfg.order {
            // Partial trailing group is dropped, same as the batch path.
            FrontendOrder::StackOnly | FrontendOrder::ProjectThenStack => {
                self.pending = Matrix::zeros(0, 0);
                Ok(Matrix::zeros(0, self.out_dim()))
            }
            FrontendOrder::LookaheadThenPassthrough => {
                let future = self.cfg.lookahead_stack;
                let total = self.pending.rows();
                let dim = if total > 0 { self.pending.cols() } else { self.in_dim };
                let mut data = Vec::with_capacity(total * self.out_dim());
                for t in 0..total {
                    for dt in 0..=future {
                        if t + dt < total {
                            data.extend_from_slice(self.pending.row(t + dt));
                        } else {
                            data.extend(core::iter::repeat_n(0.0, dim));
                        }
                    }
                }
                self.pending = Matrix::zeros(0, 0);
                Ok(Matrix::from_raw(total, self.out_dim(), data))
            }
        }
    }
}
