//! Named encoder presets.
//!
//! Geometry and sizes follow the production configurations these encoders
//! ship with: the assistant presets pair a 5x1200 LSTM (7-frame lookahead,
//! 4:1 stride after the first layer, 100 ms batching, ~65M parameters with
//! its 8K-way output layer) against 18-layer Emformers at 140/80 ms EIL
//! (~60M parameters); the video presets are deeper Emformers (26 or 36
//! layers, memory bank 4) and a 6x1000 LCBLSTM with stride 8.

use alloc::vec;

use super::{EncoderConfig, EncoderFamily};
use crate::error::{EncoderError, Result};
use crate::frontend::FrontendConfig;
use crate::recurrent::SubsampleSpec;

const PRESET_NAMES: &[&str] = &[
    "assistant-lstm",
    "assistant-emformer-140",
    "assistant-emformer-80",
    "video-vi-emformer",
    "video-de-es-emformer",
    "video-en-emformer-stride8",
    "video-en-lcblstm",
];

/// Stable public preset identifiers.
pub fn preset_names() -> &'static [&'static str] {
    PRESET_NAMES
}

fn base(name: &str, family: EncoderFamily) -> EncoderConfig {
    EncoderConfig {
        name: name.into(),
        family,
        frontend: FrontendConfig::identity(),
        input_dim: 80,
        input_frame_rate_ms: 10,
        center_ms: 0,
        right_ms: 0,
        left_ms: 0,
        max_memory: 0,
        layers: 0,
        hidden: 0,
        batch_frames: 0,
        subsample: vec![],
        num_heads: 0,
        head_dim: 0,
        ffn_dim: 0,
        output_units: None,
        quantized: false,
    }
}

fn emformer_512(name: &str, layers: usize) -> EncoderConfig {
    EncoderConfig {
        frontend: FrontendConfig::project_then_stack(128, 4),
        layers,
        num_heads: 8,
        head_dim: 64,
        ffn_dim: 2048,
        left_ms: 800,
        ..base(name, EncoderFamily::Emformer)
    }
}

/// Returns the named configuration.
pub fn load_preset(name: &str) -> Result<EncoderConfig> {
    let cfg = match name {
        "assistant-lstm" => EncoderConfig {
            frontend: FrontendConfig::lookahead(7),
            layers: 5,
            hidden: 1200,
            batch_frames: 10,
            subsample: vec![SubsampleSpec {
                after_layer: 0,
                factor: 4,
            }],
            output_units: Some(8000),
            ..base(name, EncoderFamily::Lstm)
        },
        "assistant-emformer-140" => EncoderConfig {
            center_ms: 120,
            right_ms: 80,
            output_units: Some(8000),
            ..emformer_512(name, 18)
        },
        "assistant-emformer-80" => EncoderConfig {
            center_ms: 80,
            right_ms: 40,
            output_units: Some(8000),
            ..emformer_512(name, 18)
        },
        "video-vi-emformer" => EncoderConfig {
            center_ms: 1480,
            right_ms: 320,
            max_memory: 4,
            ..emformer_512(name, 26)
        },
        "video-de-es-emformer" => EncoderConfig {
            center_ms: 800,
            right_ms: 320,
            max_memory: 4,
            ..emformer_512(name, 26)
        },
        "video-en-emformer-stride8" => EncoderConfig {
            frontend: FrontendConfig::project_then_stack(64, 8),
            center_ms: 800,
            right_ms: 320,
            max_memory: 4,
            ..emformer_512(name, 36)
        },
        "video-en-lcblstm" => EncoderConfig {
            layers: 6,
            hidden: 1000,
            center_ms: 800,
            right_ms: 320,
            subsample: vec![
                SubsampleSpec {
                    after_layer: 0,
                    factor: 2,
                },
                SubsampleSpec {
                    after_layer: 1,
                    factor: 2,
                },
                SubsampleSpec {
                    after_layer: 2,
                    factor: 2,
                },
            ],
            ..base(name, EncoderFamily::Lcblstm)
        },
        other => return Err(EncoderError::UnknownPreset(other.into())),
    };
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assistant_emformer_140_shape() {
        let cfg = load_preset("assistant-emformer-140").unwrap();
        assert_eq!(cfg.layers, 18);
        assert_eq!(cfg.model_dim(), 512);
        assert_eq!((cfg.num_heads, cfg.head_dim, cfg.ffn_dim), (8, 64, 2048));
        assert_eq!((cfg.center_ms, cfg.right_ms, cfg.left_ms), (120, 80, 800));
        assert_eq!(cfg.max_memory, 0);
        assert_eq!(cfg.post_frontend_rate_ms(), 40);
        assert_eq!(cfg.center_frames().unwrap(), 3);
        assert_eq!(cfg.left_frames().unwrap(), 20);
    }

    #[test]
    fn video_vi_emformer_geometry() {
        let cfg = load_preset("video-vi-emformer").unwrap();
        assert_eq!(cfg.layers, 26);
        assert_eq!((cfg.center_ms, cfg.right_ms), (1480, 320));
        assert_eq!(cfg.max_memory, 4);
        assert_eq!(cfg.center_frames().unwrap(), 37);
    }

    #[test]
    fn video_en_stride8_runs_at_80ms_frames() {
        let cfg = load_preset("video-en-emformer-stride8").unwrap();
        assert_eq!(cfg.layers, 36);
        assert_eq!(cfg.post_frontend_rate_ms(), 80);
        assert_eq!(cfg.post_frontend_dim(), 512);
        assert_eq!(cfg.center_frames().unwrap(), 10);
        assert_eq!(cfg.right_frames().unwrap(), 4);
    }

    #[test]
    fn video_en_lcblstm_is_stride_8() {
        let cfg = load_preset("video-en-lcblstm").unwrap();
        assert_eq!(cfg.layers, 6);
        assert_eq!(cfg.hidden, 1000);
        assert_eq!(cfg.subsample.len(), 3);
        assert_eq!(cfg.output_frame_rate_ms(), 80);
        assert_eq!(cfg.output_dim(), 2000);
    }
}
