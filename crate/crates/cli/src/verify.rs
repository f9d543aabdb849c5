//! Cross-module property verification: the suite behind `streamenc verify`.
//!
//! Each property synthesizes weights from the given seed, runs an
//! independent pair of computation paths, and reports the worst observed
//! disagreement against a pinned tolerance. Architecture-level checks
//! (parameter counts, the EIL table) run on the preset as-is; the oracle
//! equivalences run on the preset's block geometry with a thinned stack
//! plus a spread of randomized small configurations, since the properties
//! are independent of layer width.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use streamenc_core::emformer::{
    emformer_forward_utterance, EmformerEncoder, LeftContextMode,
};
use streamenc_core::frontend::FrontendConfig;
use streamenc_core::numerics::Matrix;
use streamenc_core::quant::{dequantize, quantize_per_channel, quantized_matvec};
use streamenc_core::recurrent::{
    LcblstmEncoder, LcblstmSegmentTrace, LstmEncoder, SubsampleSpec,
};
use streamenc_core::streamer::{
    compute_eil, load_preset, parameter_count, run_utterance, build_encoder, EncoderConfig,
    EncoderFamily,
};
use streamenc_core::transformer::offline_emformer_oracle;

use crate::synth::synth_weights;

/// Outcome of one verification property.
#[derive(Debug, Clone)]
pub struct PropertyResult {
    pub name: &'static str,
    pub max_err: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub detail: String,
}

impl PropertyResult {
    fn new(name: &'static str, max_err: f64, tolerance: f64, detail: String) -> Self {
        PropertyResult {
            name,
            max_err,
            tolerance,
            pass: max_err <= tolerance,
            detail,
        }
    }
}

fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs() as f64)
        .fold(0.0, f64::max)
}

fn max_rel_err(a: &Matrix, b: &Matrix) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| ((x - y).abs() / f32::max(1.0, y.abs())) as f64)
        .fold(0.0, f64::max)
}

fn rng_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-1.0f32..1.0))
        .collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// A bare block-processing encoder config: identity frontend feeding the
/// model dimension directly at the given frame period.
#[allow(clippy::too_many_arguments)]
fn raw_attention_cfg(
    family: EncoderFamily,
    layers: usize,
    heads: usize,
    head_dim: usize,
    ffn_dim: usize,
    rate_ms: u32,
    center_ms: u32,
    right_ms: u32,
    left_ms: u32,
    memory: usize,
) -> EncoderConfig {
    EncoderConfig {
        name: "probe".into(),
        family,
        frontend: FrontendConfig::identity(),
        input_dim: heads * head_dim,
        input_frame_rate_ms: rate_ms,
        center_ms,
        right_ms,
        left_ms,
        max_memory: memory,
        layers,
        hidden: 0,
        batch_frames: 0,
        subsample: vec![],
        num_heads: heads,
        head_dim,
        ffn_dim,
        output_units: None,
        quantized: false,
    }
}

fn raw_lstm_cfg(layers: usize, input_dim: usize, hidden: usize, subsample: Vec<SubsampleSpec>) -> EncoderConfig {
    EncoderConfig {
        name: "probe".into(),
        family: EncoderFamily::Lstm,
        frontend: FrontendConfig::identity(),
        input_dim,
        input_frame_rate_ms: 10,
        center_ms: 0,
        right_ms: 0,
        left_ms: 0,
        max_memory: 0,
        layers,
        hidden,
        batch_frames: 10,
        subsample,
        num_heads: 0,
        head_dim: 0,
        ffn_dim: 0,
        output_units: None,
        quantized: false,
    }
}

fn raw_lcblstm_cfg(
    layers: usize,
    input_dim: usize,
    hidden: usize,
    center_ms: u32,
    right_ms: u32,
    subsample: Vec<SubsampleSpec>,
) -> EncoderConfig {
    EncoderConfig {
        name: "probe".into(),
        family: EncoderFamily::Lcblstm,
        frontend: FrontendConfig::identity(),
        input_dim,
        input_frame_rate_ms: 10,
        center_ms,
        right_ms,
        left_ms: 0,
        max_memory: 0,
        layers,
        hidden,
        batch_frames: 0,
        subsample,
        num_heads: 0,
        head_dim: 0,
        ffn_dim: 0,
        output_units: None,
        quantized: false,
    }
}

fn check_eil_table() -> PropertyResult {
    let expected = [
        ("assistant-emformer-140", 140.0),
        ("assistant-emformer-80", 80.0),
        ("video-vi-emformer", 1060.0),
        ("video-de-es-emformer", 720.0),
        ("assistant-lstm", 120.0),
    ];
    let mut max_err = 0.0f64;
    let mut parts = Vec::new();
    for (name, want) in expected {
        let got = match load_preset(name).and_then(|cfg| compute_eil(&cfg)) {
            Ok(report) => report.eil_ms,
            Err(_) => f64::INFINITY,
        };
        max_err = max_err.max((got - want).abs());
        parts.push(format!("{name}={got}ms"));
    }
    PropertyResult::new("eil-table", max_err, 0.0, parts.join(" "))
}

fn check_param_counts() -> PropertyResult {
    let targets = [
        ("assistant-emformer-140", 60.0e6),
        ("assistant-lstm", 65.0e6),
    ];
    let mut max_err = 0.0f64;
    let mut parts = Vec::new();
    for (name, target) in targets {
        let cfg = load_preset(name).unwrap();
        let total = parameter_count(&cfg).total() as f64;
        let rel = (total - target).abs() / target;
        max_err = max_err.max(rel);
        parts.push(format!("{name}={:.2}M", total / 1.0e6));
    }
    PropertyResult::new("param-count", max_err, 0.05, parts.join(" "))
}

fn check_lstm_chunking(seed: u64) -> PropertyResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_err = 0.0f64;
    for trial in 0..10 {
        let input_dim = rng.random_range(2..6);
        let hidden = rng.random_range(2..8);
        let layers = rng.random_range(1..3);
        let factor = [1usize, 2, 4][rng.random_range(0..3)];
        let subsample = if factor > 1 {
            vec![SubsampleSpec { after_layer: 0, factor }]
        } else {
            vec![]
        };
        let cfg = raw_lstm_cfg(layers, input_dim, hidden, subsample.clone());
        let weights = synth_weights(&cfg, seed.wrapping_add(trial));
        let enc = LstmEncoder::from_set(&weights, layers, input_dim, hidden, subsample).unwrap();
        let frames = rng.random_range(10..40);
        let seq = rng_matrix(&mut rng, frames, input_dim);

        let mut full_state = enc.init_state();
        let full = enc.forward_chunk(&seq, &mut full_state).unwrap();

        let mut state = enc.init_state();
        let mut parts = Vec::new();
        let mut at = 0;
        while at < frames {
            let take = rng.random_range(1..8).min(frames - at);
            parts.push(enc.forward_chunk(&seq.slice_rows(at..at + take), &mut state).unwrap());
            at += take;
        }
        let refs: Vec<&Matrix> = parts.iter().collect();
        let chunked = Matrix::vstack(&refs).unwrap();
        // Bitwise contract: any nonzero difference fails.
        let exact = full.as_slice() == chunked.as_slice();
        if !exact {
            max_err = max_err.max(max_abs_diff(&full, &chunked).max(f64::MIN_POSITIVE));
        }
    }
    PropertyResult::new("lstm-chunking", max_err, 0.0, "10 random triples, bitwise".into())
}

fn check_lcblstm_forward_oracle(seed: u64) -> PropertyResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1111);
    let mut max_err = 0.0f64;
    for trial in 0..10 {
        let input_dim = rng.random_range(2..5);
        let hidden = rng.random_range(2..5);
        let layers = rng.random_range(1..3);
        let c_frames = rng.random_range(2..6) * 2; // keep centers even for 2:1
        let r_frames = rng.random_range(0..4);
        let subsample = if rng.random_bool(0.5) && layers > 0 {
            vec![SubsampleSpec { after_layer: 0, factor: 2 }]
        } else {
            vec![]
        };
        let cfg = raw_lcblstm_cfg(
            layers,
            input_dim,
            hidden,
            c_frames as u32 * 10,
            r_frames as u32 * 10,
            subsample.clone(),
        );
        let weights = synth_weights(&cfg, seed.wrapping_add(100 + trial));
        let enc = LcblstmEncoder::from_set(&weights, input_dim, &cfg.lcblstm_config().unwrap())
            .unwrap();
        let frames = rng.random_range(12..36);
        let seq = rng_matrix(&mut rng, frames, input_dim);

        let mut state = enc.init_state();
        let mut traces: Vec<LcblstmSegmentTrace> = Vec::new();
        let mut at = 0;
        while at < frames {
            let c_end = (at + c_frames).min(frames);
            let r_end = (c_end + r_frames).min(frames);
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

        for l in 0..layers {
            let inputs: Vec<&Matrix> = traces.iter().map(|t| &t.center_inputs[l]).collect();
            let expected: Vec<&Matrix> =
                traces.iter().map(|t| &t.fwd_center_outputs[l]).collect();
            let full_in = Matrix::vstack(&inputs).unwrap();
            let expected = Matrix::vstack(&expected).unwrap();
            let layer_weights = enc.layer_forward_weights(l).clone();
            let uni = LstmEncoder::new(vec![layer_weights], vec![]).unwrap();
            let mut uni_state = uni.init_state();
            let got = uni.forward_chunk(&full_in, &mut uni_state).unwrap();
            max_err = max_err.max(max_abs_diff(&got, &expected));
        }
    }
    PropertyResult::new(
        "lcblstm-forward-oracle",
        max_err,
        1e-6,
        "10 random configs vs unsegmented pass".into(),
    )
}

fn emformer_probe_cfgs(preset: &EncoderConfig, seed: u64) -> Vec<EncoderConfig> {
    let mut cfgs = Vec::new();
    if preset.is_attention_family() && preset.center_ms > 0 {
        // Preset geometry, thinned stack: the equivalences do not depend on
        // width or depth, so probe with 2 layers at dim 32.
        let rate = preset.post_frontend_rate_ms();
        cfgs.push(raw_attention_cfg(
            EncoderFamily::Emformer,
            2,
            4,
            8,
            64,
            rate,
            preset.center_ms,
            preset.right_ms,
            preset.left_ms,
            preset.max_memory,
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x2222);
    for _ in 0..8 {
        let heads = rng.random_range(1..3);
        let head_dim = rng.random_range(2..5);
        cfgs.push(raw_attention_cfg(
            EncoderFamily::Emformer,
            rng.random_range(1..4),
            heads,
            head_dim,
            heads * head_dim * 2,
            10,
            rng.random_range(1..5) * 10,
            rng.random_range(0..4) * 10,
            rng.random_range(0..7) * 10,
            rng.random_range(0..4),
        ));
    }
    cfgs
}

fn check_emformer_oracle(preset: &EncoderConfig, seed: u64) -> (PropertyResult, PropertyResult) {
    let mut oracle_err = 0.0f64;
    let mut cache_err = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x3333);
    let cfgs = emformer_probe_cfgs(preset, seed);
    let count = cfgs.len();
    for (i, cfg) in cfgs.into_iter().enumerate() {
        let weights = synth_weights(&cfg, seed.wrapping_add(1000 + i as u64));
        let ecfg = cfg.emformer_config().unwrap();
        let enc = EmformerEncoder::from_set(&weights, &ecfg).unwrap();
        let frames = rng.random_range(1..=ecfg.center_frames * 5 + 3);
        let seq = rng_matrix(&mut rng, frames, ecfg.model_dim);

        let (streamed, _) = emformer_forward_utterance(&enc, &seq).unwrap();
        let oracle = offline_emformer_oracle(&seq, &ecfg, enc.stack()).unwrap();
        oracle_err = oracle_err.max(max_rel_err(&streamed, &oracle));

        let recompute = EmformerEncoder::from_set(&weights, &ecfg)
            .unwrap()
            .with_mode(LeftContextMode::RecomputeFromHistory);
        let (recomputed, _) = emformer_forward_utterance(&recompute, &seq).unwrap();
        cache_err = cache_err.max(max_abs_diff(&streamed, &recomputed));
    }
    (
        PropertyResult::new(
            "emformer-oracle",
            oracle_err,
            1e-4,
            format!("{count} configs (preset geometry + random), relative"),
        ),
        PropertyResult::new(
            "cache-recompute",
            cache_err,
            1e-6,
            format!("{count} configs, cached vs reprojected history"),
        ),
    )
}

fn check_quant_bounds(seed: u64) -> PropertyResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x4444);
    let mut max_excess = 0.0f64;
    for _ in 0..500 {
        let rows = rng.random_range(1..8);
        let cols = rng.random_range(1..16);
        let w = rng_matrix(&mut rng, rows, cols);
        let q = quantize_per_channel(&w).unwrap();
        let back = dequantize(&q);
        for r in 0..rows {
            let bound = (q.scales()[r] / 2.0) as f64 + 1e-9;
            for c in 0..cols {
                let err = (back.get(r, c) - w.get(r, c)).abs() as f64;
                max_excess = max_excess.max(err - bound);
            }
        }
        let x: Vec<f32> = (0..cols).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        let quant = quantized_matvec(&q, &x).unwrap();
        let x_l1: f32 = x.iter().map(|v| v.abs()).sum();
        for (r, &qv) in quant.iter().enumerate() {
            let float: f32 = w.row(r).iter().zip(&x).map(|(a, b)| a * b).sum();
            let bound = (x_l1 * q.scales()[r] / 2.0) as f64 + 1e-6;
            let err = (qv - float).abs() as f64;
            max_excess = max_excess.max(err - bound);
        }
    }
    PropertyResult::new(
        "quant-bounds",
        max_excess.max(0.0),
        0.0,
        "500 matrices, round-trip + matvec, excess over analytic bound".into(),
    )
}

fn check_streaming_causality(seed: u64) -> PropertyResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5555);
    let mut max_err = 0.0f64;
    for trial in 0..10 {
        let cfg = raw_attention_cfg(
            EncoderFamily::Emformer,
            2,
            1,
            4,
            8,
            10,
            rng.random_range(1..4) * 10,
            rng.random_range(0..3) * 10,
            40,
            1,
        );
        let weights = synth_weights(&cfg, seed.wrapping_add(2000 + trial));
        let encoder = build_encoder(&cfg, &weights).unwrap();
        let frames = rng.random_range(10..30);
        let prefix_len = rng.random_range(5..frames);
        let seq = rng_matrix(&mut rng, frames, cfg.input_dim);

        let mut a = encoder.session().unwrap();
        let early_a = a.push(&seq.slice_rows(0..prefix_len)).unwrap();

        let mut b = encoder.session().unwrap();
        let early_b = b.push(&seq.slice_rows(0..prefix_len)).unwrap();
        // Deliver a completely different future to stream b.
        b.push(&rng_matrix(&mut rng, frames - prefix_len, cfg.input_dim))
            .unwrap();

        if early_a.len() != early_b.len() {
            max_err = f64::INFINITY;
            continue;
        }
        for (x, y) in early_a.iter().zip(&early_b) {
            if x.as_slice() != y.as_slice() {
                max_err = max_err.max(max_abs_diff(x, y).max(f64::MIN_POSITIVE));
            }
        }
    }
    PropertyResult::new(
        "streaming-causality",
        max_err,
        0.0,
        "10 random streams, emitted blocks vs mutated future".into(),
    )
}

fn check_streaming_batch_equality(preset: &EncoderConfig, seed: u64) -> PropertyResult {
    // Run the preset's family with a thinned architecture through the
    // session layer: one-chunk delivery vs frame-at-a-time must agree
    // bitwise.
    let cfg = match preset.family {
        EncoderFamily::Lstm => raw_lstm_cfg(2, 6, 5, vec![SubsampleSpec { after_layer: 0, factor: 4 }]),
        EncoderFamily::Lcblstm => raw_lcblstm_cfg(2, 6, 4, 60, 30, vec![]),
        _ => raw_attention_cfg(
            EncoderFamily::Emformer,
            2,
            2,
            4,
            16,
            preset.post_frontend_rate_ms(),
            preset.center_ms.max(preset.post_frontend_rate_ms()),
            preset.right_ms,
            preset.left_ms,
            preset.max_memory,
        ),
    };
    let weights = synth_weights(&cfg, seed ^ 0x6666);
    let encoder = build_encoder(&cfg, &weights).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7777);
    let mut max_err = 0.0f64;
    for _ in 0..5 {
        let frames = rng.random_range(8..40);
        let seq = rng_matrix(&mut rng, frames, cfg.input_dim);
        let batch = run_utterance(&encoder, &seq).unwrap();
        let mut session = encoder.session().unwrap();
        let mut blocks = Vec::new();
        for t in 0..frames {
            blocks.extend(session.push(&seq.slice_rows(t..t + 1)).unwrap());
        }
        blocks.extend(session.flush().unwrap());
        let refs: Vec<&Matrix> = blocks.iter().collect();
        let streamed = if refs.is_empty() {
            Matrix::zeros(0, encoder.out_dim())
        } else {
            Matrix::vstack(&refs).unwrap()
        };
        if batch.as_slice() != streamed.as_slice() {
            max_err = max_err.max(max_abs_diff(&batch, &streamed).max(f64::MIN_POSITIVE));
        }
    }
    PropertyResult::new(
        "streaming-batch-equality",
        max_err,
        0.0,
        "5 utterances, one-chunk vs frame-at-a-time, bitwise".into(),
    )
}

/// Runs the whole suite for a preset and seed.
pub fn run_suite(preset: &EncoderConfig, seed: u64) -> Vec<PropertyResult> {
    let mut results = vec![
        check_eil_table(),
        check_param_counts(),
        check_lstm_chunking(seed),
        check_lcblstm_forward_oracle(seed),
    ];
    let (oracle, cache) = check_emformer_oracle(preset, seed);
    results.push(oracle);
    results.push(cache);
    results.push(check_quant_bounds(seed));
    results.push(check_streaming_causality(seed));
    results.push(check_streaming_batch_equality(preset, seed));
    results
}
