//! Seeded synthesis of weights and feature sequences.
//!
//! Random weights stand in for trained checkpoints everywhere correctness is
//! established by equivalence (streaming vs offline, cached vs recomputed,
//! quantized vs float): the properties hold for any finite parameters, so a
//! reproducible ChaCha-seeded draw is enough.

use anyhow::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use streamenc_core::frontend::FeatureSequence;
use streamenc_core::numerics::Matrix;
use streamenc_core::quant::quantize_per_channel;
use streamenc_core::streamer::EncoderConfig;
use streamenc_core::weights::{Tensor, TensorRole, WeightSet};

/// Draws every tensor the configuration requires. Weight matrices use a
/// fan-in-scaled uniform range, biases are small, norm gains sit near 1.
pub fn synth_weights(cfg: &EncoderConfig, seed: u64) -> WeightSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = WeightSet::new();
    for spec in cfg.required_tensors() {
        let data: Vec<f32> = match spec.role {
            TensorRole::WeightMatrix => {
                let scale = 1.0 / (spec.cols as f32).sqrt();
                (0..spec.rows * spec.cols)
                    .map(|_| rng.random_range(-scale..scale))
                    .collect()
            }
            TensorRole::Bias => (0..spec.rows * spec.cols)
                .map(|_| rng.random_range(-0.05f32..0.05))
                .collect(),
            TensorRole::Gain => (0..spec.rows * spec.cols)
                .map(|_| 1.0 + rng.random_range(-0.05f32..0.05))
                .collect(),
        };
        set.insert(
            spec.name.clone(),
            Tensor::F32(Matrix::from_vec(spec.rows, spec.cols, data).expect("finite by construction")),
        );
    }
    set
}

/// Quantizes every weight matrix of a float set to per-channel INT8; biases
/// and norm parameters stay f32.
pub fn quantize_weight_set(cfg: &EncoderConfig, weights: &WeightSet) -> Result<WeightSet> {
    let mut out = WeightSet::new();
    for spec in cfg.required_tensors() {
        let tensor = weights
            .require(&spec.name)
            .map_err(|e| crate::formats::format_err(e.to_string()))?;
        let converted = match (spec.role, tensor) {
            (TensorRole::WeightMatrix, Tensor::F32(m)) => {
                Tensor::I8PerChannel(quantize_per_channel(m).map_err(|e| {
                    crate::formats::format_err(format!("{}: {e}", spec.name))
                })?)
            }
            _ => tensor.clone(),
        };
        out.insert(spec.name.clone(), converted);
    }
    Ok(out)
}

/// Synthetic log-Mel-like features: smooth random walks per dimension,
/// bounded and deterministic in the seed.
pub fn synth_features(frames: usize, dim: usize, frame_rate_ms: u32, seed: u64) -> FeatureSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(frames * dim);
    let mut state: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    for _ in 0..frames {
        for s in state.iter_mut() {
            *s = (*s + rng.random_range(-0.25f32..0.25)).clamp(-2.0, 2.0);
            data.push(*s);
        }
    }
    FeatureSequence::new(
        Matrix::from_vec(frames, dim, data).expect("finite by construction"),
        frame_rate_ms,
    )
    .expect("positive rate")
}

#[cfg(test)]
mod tests {
    use super::*;
    use streamenc_core::streamer::load_preset;

    #[test]
    fn synthesis_is_deterministic_in_the_seed() {
        let mut cfg = load_preset("video-en-lcblstm").unwrap();
        cfg.layers = 1;
        cfg.hidden = 4;
        cfg.subsample = vec![];
        let a = synth_weights(&cfg, 7);
        let b = synth_weights(&cfg, 7);
        for (name, t) in a.iter() {
            assert_eq!(b.get(name).unwrap(), t);
        }
        let c = synth_weights(&cfg, 8);
        assert_ne!(
            c.get("lcblstm.0.fwd.weight").unwrap(),
            a.get("lcblstm.0.fwd.weight").unwrap()
        );
    }

    #[test]
    fn synthesized_sets_satisfy_the_tensor_directory() {
        let mut cfg = load_preset("assistant-emformer-80").unwrap();
        cfg.layers = 1; // keep the test light; shapes are what matters
        let set = synth_weights(&cfg, 3);
        cfg.check_weights(&set).unwrap();
    }

    #[test]
    fn features_are_bounded_and_seeded() {
        let a = synth_features(50, 80, 10, 11);
        let b = synth_features(50, 80, 10, 11);
        assert_eq!(a, b);
        assert!(a.data().as_slice().iter().all(|v| v.abs() <= 2.0));
    }
}
