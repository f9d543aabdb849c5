//! Stream orchestration: encoder configuration, the named presets,
//! encoder-induced latency (EIL) accounting, parameter counting, and
//! [`StreamSession`] which segments incoming features into (center, right)
//! blocks and dispatches them to the configured encoder family.

mod presets;
mod session;

pub use presets::{load_preset, preset_names};
pub use session::{build_encoder, run_utterance, BuiltEncoder, StreamSession};

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::emformer::EmformerConfig;
use crate::error::{EncoderError, Result};
use crate::frontend::FrontendConfig;
use crate::recurrent::{LcblstmConfig, SubsampleSpec};
use crate::weights::{TensorSpec, WeightSet};

/// Encoder families the session layer can drive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderFamily {
    Lstm,
    Lcblstm,
    TransformerOffline,
    Emformer,
    Amtrf,
}

impl EncoderFamily {
    pub fn as_str(&self) -> &'static str {
        match self {
            EncoderFamily::Lstm => "lstm",
            EncoderFamily::Lcblstm => "lcblstm",
            EncoderFamily::TransformerOffline => "transformer_offline",
            EncoderFamily::Emformer => "emformer",
            EncoderFamily::Amtrf => "amtrf",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "lstm" => EncoderFamily::Lstm,
            "lcblstm" => EncoderFamily::Lcblstm,
            "transformer_offline" => EncoderFamily::TransformerOffline,
            "emformer" => EncoderFamily::Emformer,
            "amtrf" => EncoderFamily::Amtrf,
            other => {
                return Err(EncoderError::Config(format!("unknown family: {other}")))
            }
        })
    }
}

/// Full architectural description of one encoder. Geometry is given in
/// milliseconds and must divide evenly by the post-frontend frame period.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub name: String,
    pub family: EncoderFamily,
    pub frontend: FrontendConfig,
    pub input_dim: usize,
    pub input_frame_rate_ms: u32,
    /// Block geometry (attention and LCBLSTM families).
    pub center_ms: u32,
    pub right_ms: u32,
    pub left_ms: u32,
    pub max_memory: usize,
    /// Architecture.
    pub layers: usize,
    /// LSTM cells / LCBLSTM cells per direction.
    pub hidden: usize,
    /// Frames grouped per forward for the unidirectional LSTM.
    pub batch_frames: usize,
    pub subsample: Vec<SubsampleSpec>,
    pub num_heads: usize,
    pub head_dim: usize,
    pub ffn_dim: usize,
    /// Classification layer size (e.g. chenone inventory), counted
    /// separately from the encoder.
    pub output_units: Option<usize>,
    pub quantized: bool,
}

impl EncoderConfig {
    pub fn is_attention_family(&self) -> bool {
        matches!(
            self.family,
            EncoderFamily::TransformerOffline | EncoderFamily::Emformer | EncoderFamily::Amtrf
        )
    }

    pub fn model_dim(&self) -> usize {
        self.num_heads * self.head_dim
    }

    pub fn post_frontend_rate_ms(&self) -> u32 {
        self.frontend.out_rate_ms(self.input_frame_rate_ms)
    }

    pub fn post_frontend_dim(&self) -> usize {
        self.frontend.out_dim(self.input_dim)
    }

    fn ms_to_frames(&self, ms: u32, what: &str) -> Result<usize> {
        let rate = self.post_frontend_rate_ms();
        if !ms.is_multiple_of(rate) {
            return Err(EncoderError::Config(format!(
                "{what} of {ms} ms is not divisible by the {rate} ms frame period"
            )));
        }
        Ok((ms / rate) as usize)
    }

    pub fn center_frames(&self) -> Result<usize> {
        self.ms_to_frames(self.center_ms, "center segment")
    }

    pub fn right_frames(&self) -> Result<usize> {
        self.ms_to_frames(self.right_ms, "right context")
    }

    pub fn left_frames(&self) -> Result<usize> {
        self.ms_to_frames(self.left_ms, "left context")
    }

    /// Encoder output feature size.
    pub fn output_dim(&self) -> usize {
        match self.family {
            EncoderFamily::Lstm => self.hidden,
            EncoderFamily::Lcblstm => 2 * self.hidden,
            _ => self.model_dim(),
        }
    }

    /// Frame period of the emitted embeddings.
    pub fn output_frame_rate_ms(&self) -> u32 {
        let mut rate = self.post_frontend_rate_ms();
        if matches!(self.family, EncoderFamily::Lstm | EncoderFamily::Lcblstm) {
            for s in &self.subsample {
                rate *= s.factor as u32;
            }
        }
        rate
    }

    pub fn validate(&self) -> Result<()> {
        self.frontend.validate()?;
        if self.input_dim == 0 || self.input_frame_rate_ms == 0 {
            return Err(EncoderError::Config("input dim/rate must be set".into()));
        }
        if self.layers == 0 {
            return Err(EncoderError::Config("layer count must be >= 1".into()));
        }
        match self.family {
            EncoderFamily::Lstm => {
                if self.hidden == 0 || self.batch_frames == 0 {
                    return Err(EncoderError::Config(
                        "lstm family needs hidden cells and batch_frames".into(),
                    ));
                }
            }
            EncoderFamily::Lcblstm => {
                if self.hidden == 0 {
                    return Err(EncoderError::Config("lcblstm needs hidden cells".into()));
                }
                if self.center_frames()? == 0 {
                    return Err(EncoderError::Config("lcblstm needs a center segment".into()));
                }
                self.right_frames()?;
                self.lcblstm_config()?.validate()?;
            }
            EncoderFamily::Emformer | EncoderFamily::Amtrf => {
                self.emformer_config()?.validate()?;
                if self.post_frontend_dim() != self.model_dim() {
                    return Err(EncoderError::Config(format!(
                        "frontend output dim {} vs model dim {}",
                        self.post_frontend_dim(),
                        self.model_dim()
                    )));
                }
            }
            EncoderFamily::TransformerOffline => {
                if self.model_dim() == 0 || self.ffn_dim == 0 {
                    return Err(EncoderError::Config(
                        "transformer needs heads, head_dim and ffn_dim".into(),
                    ));
                }
                if self.post_frontend_dim() != self.model_dim() {
                    return Err(EncoderError::Config(format!(
                        "frontend output dim {} vs model dim {}",
                        self.post_frontend_dim(),
                        self.model_dim()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn emformer_config(&self) -> Result<EmformerConfig> {
        Ok(EmformerConfig {
            layers: self.layers,
            model_dim: self.model_dim(),
            num_heads: self.num_heads,
            head_dim: self.head_dim,
            ffn_dim: self.ffn_dim,
            center_frames: self.center_frames()?,
            right_frames: self.right_frames()?,
            left_frames: self.left_frames()?,
            max_memory: self.max_memory,
        })
    }

    pub fn lcblstm_config(&self) -> Result<LcblstmConfig> {
        Ok(LcblstmConfig {
            layers: self.layers,
            hidden_per_direction: self.hidden,
            center_frames: self.center_frames()?,
            right_frames: self.right_frames()?,
            subsample: self.subsample.clone(),
        })
    }

    /// Every tensor this configuration requires, in manifest order.
    pub fn required_tensors(&self) -> Vec<TensorSpec> {
        let mut specs = Vec::new();
        if matches!(
            self.frontend.order,
            crate::frontend::FrontendOrder::ProjectThenStack
        ) {
            if let Some(proj) = self.frontend.projection {
                specs.push(TensorSpec::matrix(
                    "frontend.proj.weight".into(),
                    proj,
                    self.input_dim,
                ));
                specs.push(TensorSpec::bias("frontend.proj.bias".into(), proj));
            }
        }
        let post_dim = self.post_frontend_dim();
        match self.family {
            EncoderFamily::Lstm => {
                for i in 0..self.layers {
                    let in_dim = if i == 0 { post_dim } else { self.hidden };
                    specs.push(TensorSpec::matrix(
                        format!("lstm.{i}.weight"),
                        4 * self.hidden,
                        in_dim + self.hidden,
                    ));
                    specs.push(TensorSpec::bias(format!("lstm.{i}.bias"), 4 * self.hidden));
                }
            }
            EncoderFamily::Lcblstm => {
                for i in 0..self.layers {
                    let in_dim = if i == 0 { post_dim } else { 2 * self.hidden };
                    for dir in ["fwd", "bwd"] {
                        specs.push(TensorSpec::matrix(
                            format!("lcblstm.{i}.{dir}.weight"),
                            4 * self.hidden,
                            in_dim + self.hidden,
                        ));
                        specs.push(TensorSpec::bias(
                            format!("lcblstm.{i}.{dir}.bias"),
                            4 * self.hidden,
                        ));
                    }
                }
            }
            EncoderFamily::TransformerOffline | EncoderFamily::Emformer | EncoderFamily::Amtrf => {
                let d = self.model_dim();
                for i in 0..self.layers {
                    specs.push(TensorSpec::gain(format!("enc.{i}.ln1.gain"), d));
                    specs.push(TensorSpec::bias(format!("enc.{i}.ln1.bias"), d));
                    for p in ["q", "k", "v", "out"] {
                        specs.push(TensorSpec::matrix(format!("enc.{i}.attn.{p}.weight"), d, d));
                        specs.push(TensorSpec::bias(format!("enc.{i}.attn.{p}.bias"), d));
                    }
                    specs.push(TensorSpec::gain(format!("enc.{i}.ln2.gain"), d));
                    specs.push(TensorSpec::bias(format!("enc.{i}.ln2.bias"), d));
                    specs.push(TensorSpec::matrix(
                        format!("enc.{i}.ffn1.weight"),
                        self.ffn_dim,
                        d,
                    ));
                    specs.push(TensorSpec::bias(format!("enc.{i}.ffn1.bias"), self.ffn_dim));
                    specs.push(TensorSpec::matrix(
                        format!("enc.{i}.ffn2.weight"),
                        d,
                        self.ffn_dim,
                    ));
                    specs.push(TensorSpec::bias(format!("enc.{i}.ffn2.bias"), d));
                }
                specs.push(TensorSpec::gain("enc.final_ln.gain".into(), d));
                specs.push(TensorSpec::bias("enc.final_ln.bias".into(), d));
            }
        }
        specs
    }

    /// Checks that a weight set carries every tensor the config requires,
    /// with matching shapes.
    pub fn check_weights(&self, weights: &WeightSet) -> Result<()> {
        for spec in self.required_tensors() {
            let t = weights.require(&spec.name)?;
            if t.rows() != spec.rows || t.cols() != spec.cols {
                return Err(EncoderError::Shape(format!(
                    "tensor {}: expected {}x{}, got {}x{}",
                    spec.name,
                    spec.rows,
                    spec.cols,
                    t.rows(),
                    t.cols()
                )));
            }
        }
        Ok(())
    }
}

/// Encoder-induced latency and its breakdown. All terms are milliseconds;
/// the total is always the sum of the three parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EilReport {
    pub eil_ms: f64,
    pub right_context_ms: f64,
    pub half_center_ms: f64,
    pub frontend_lookahead_ms: f64,
}

/// Algorithmic latency assuming infinitely fast compute: the right context
/// plus half the center segment, plus any frontend lookahead. For the
/// unidirectional LSTM the "center" is the frame batch grouped per forward.
pub fn compute_eil(cfg: &EncoderConfig) -> Result<EilReport> {
    let lookahead = cfg.frontend.lookahead_ms(cfg.input_frame_rate_ms) as f64;
    let (right, half_center) = match cfg.family {
        EncoderFamily::Lstm => {
            if cfg.batch_frames == 0 {
                return Err(EncoderError::Config("lstm batch_frames not set".into()));
            }
            let batch_ms = cfg.batch_frames as f64 * cfg.post_frontend_rate_ms() as f64;
            (0.0, batch_ms / 2.0)
        }
        EncoderFamily::TransformerOffline => {
            return Err(EncoderError::Config(
                "offline transformer has no streaming latency geometry".into(),
            ))
        }
        _ => {
            if cfg.center_ms == 0 {
                return Err(EncoderError::Config("center segment not set".into()));
            }
            (cfg.right_ms as f64, cfg.center_ms as f64 / 2.0)
        }
    };
    Ok(EilReport {
        eil_ms: right + half_center + lookahead,
        right_context_ms: right,
        half_center_ms: half_center,
        frontend_lookahead_ms: lookahead,
    })
}

/// Encoder parameter count, with the classification output layer (when the
/// preset names one) kept separate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamCount {
    pub encoder: u64,
    pub output_layer: Option<u64>,
}

impl ParamCount {
    pub fn total(&self) -> u64 {
        self.encoder + self.output_layer.unwrap_or(0)
    }
}

/// Counts parameters from the tensor directory the config induces, plus the
/// output layer implied by `output_units`.
pub fn parameter_count(cfg: &EncoderConfig) -> ParamCount {
    let encoder = cfg
        .required_tensors()
        .iter()
        .map(TensorSpec::num_params)
        .sum();
    let output_layer = cfg
        .output_units
        .map(|units| (cfg.output_dim() * units + units) as u64);
    ParamCount {
        encoder,
        output_layer,
    }
}
