//! Shared helpers for the property suites: seeded weight synthesis and
//! matrix generation over the public API.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use streamenc_core::numerics::Matrix;
use streamenc_core::weights::{Tensor, TensorRole, TensorSpec, WeightSet};

pub fn synth_weight_set(specs: &[TensorSpec], seed: u64) -> WeightSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = WeightSet::new();
    for spec in specs {
        let scale = match spec.role {
            TensorRole::WeightMatrix => 1.0 / (spec.cols as f32).sqrt(),
            TensorRole::Bias => 0.05,
            TensorRole::Gain => 0.0,
        };
        let data: Vec<f32> = (0..spec.rows * spec.cols)
            .map(|_| {
                if spec.role == TensorRole::Gain {
                    1.0 + rng.random_range(-0.05f32..0.05)
                } else {
                    rng.random_range(-scale..scale)
                }
            })
            .collect();
        set.insert(
            spec.name.clone(),
            Tensor::F32(Matrix::from_vec(spec.rows, spec.cols, data).unwrap()),
        );
    }
    set
}

pub fn rng_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-1.0f32..1.0))
        .collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f32 {
    assert_eq!(a.rows(), b.rows());
    assert_eq!(a.cols(), b.cols());
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f32::max)
}

/// Relative disagreement with a unit floor, so near-zero entries compare
/// absolutely.
pub fn max_rel_err(a: &Matrix, b: &Matrix) -> f32 {
    assert_eq!(a.rows(), b.rows());
    assert_eq!(a.cols(), b.cols());
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs() / f32::max(1.0, y.abs()))
        .fold(0.0, f32::max)
}
