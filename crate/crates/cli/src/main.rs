//! `streamenc`: run, verify, benchmark and quantize streaming acoustic
//! encoders over the bundle/feature file formats.
//!
//! Exit codes: 0 on success, 1 when a verification property fails, 2 on
//! usage or format errors.

use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use streamenc_cli::bench::{measure_rtf, BenchTarget};
use streamenc_cli::formats::{
    exit_code_for, format_err, read_feature_file, read_model_bundle, write_feature_file,
    write_model_bundle, CliError,
};
use streamenc_cli::synth::{quantize_weight_set, synth_features, synth_weights};
use streamenc_cli::verify::run_suite;
use streamenc_core::frontend::FeatureSequence;
use streamenc_core::numerics::Matrix;
use streamenc_core::streamer::{build_encoder, compute_eil, load_preset, parameter_count};
use streamenc_core::weights::{Tensor, TensorRole};

#[derive(Parser)]
#[command(
    name = "streamenc",
    about = "Streaming acoustic encoder inference toolkit",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Encode a feature file with a model bundle and write the embeddings.
    Run(RunArgs),
    /// Run the cross-module property suite with synthesized weights.
    Verify(VerifyArgs),
    /// Measure real-time factors over a corpus of feature files.
    Bench(BenchArgs),
    /// Print the encoder-induced latency breakdown for a preset or bundle.
    Eil(EilArgs),
    /// Convert a float bundle to per-channel INT8 weights.
    Quantize(QuantizeArgs),
    /// Write a model bundle with seeded random weights for a preset.
    SynthModel(SynthModelArgs),
    /// Write a synthetic feature file.
    SynthFeatures(SynthFeaturesArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    features: PathBuf,
    /// Deliver frames one at a time.
    #[arg(long, conflicts_with = "batch")]
    streaming: bool,
    /// Deliver the whole utterance as one chunk.
    #[arg(long)]
    batch: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    preset: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    model: PathBuf,
    /// Directory of .fea feature files.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 10)]
    concurrency: usize,
    #[arg(long, default_value_t = 2)]
    workers_per_stream: usize,
    /// Require INT8 weights and mark the report accordingly.
    #[arg(long)]
    quantized: bool,
    /// Delivery granularity in milliseconds of audio.
    #[arg(long, default_value_t = 100)]
    chunk_ms: u32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EilArgs {
    #[arg(long, conflicts_with = "model")]
    preset: Option<String>,
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args)]
struct QuantizeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct SynthModelArgs {
    #[arg(long)]
    preset: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    quantized: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthFeaturesArgs {
    #[arg(long)]
    frames: usize,
    #[arg(long, default_value_t = 80)]
    dim: usize,
    #[arg(long, default_value_t = 10)]
    rate_ms: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = dispatch(cli.command) {
        eprintln!("error: {err:#}");
        std::process::exit(exit_code_for(&err));
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run(args) => cmd_run(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Eil(args) => cmd_eil(args),
        Command::Quantize(args) => cmd_quantize(args),
        Command::SynthModel(args) => cmd_synth_model(args),
        Command::SynthFeatures(args) => cmd_synth_features(args),
    }
}

fn cmd_run(args: RunArgs) -> Result<()> {
    if !args.streaming && !args.batch {
        return Err(format_err("pass exactly one of --streaming or --batch"));
    }
    let (cfg, weights) = read_model_bundle(&args.model)?;
    let encoder = build_encoder(&cfg, &weights).map_err(|e| format_err(e.to_string()))?;
    let features = read_feature_file(&args.features)?;
    if features.frame_rate_ms() != cfg.input_frame_rate_ms {
        return Err(format_err(format!(
            "feature rate {} ms vs model input rate {} ms",
            features.frame_rate_ms(),
            cfg.input_frame_rate_ms
        )));
    }

    let mut session = encoder.session().map_err(|e| format_err(e.to_string()))?;
    let mut blocks = Vec::new();
    let frames = features.frames();
    if args.streaming {
        for t in 0..frames {
            blocks.extend(
                session
                    .push(&features.data().slice_rows(t..t + 1))
                    .map_err(|e| format_err(e.to_string()))?,
            );
        }
    } else {
        blocks.extend(
            session
                .push(features.data())
                .map_err(|e| format_err(e.to_string()))?,
        );
    }
    blocks.extend(session.flush().map_err(|e| format_err(e.to_string()))?);

    let refs: Vec<&Matrix> = blocks.iter().collect();
    let out = if refs.is_empty() {
        Matrix::zeros(0, encoder.out_dim())
    } else {
        Matrix::vstack(&refs).map_err(|e| format_err(e.to_string()))?
    };
    let rows = out.rows();
    let seq = FeatureSequence::new(out, encoder.out_frame_rate_ms())
        .map_err(|e| format_err(e.to_string()))?;
    write_feature_file(&args.out, &seq)?;
    println!(
        "encoded {} frames -> {} embeddings of dim {} at {} ms ({})",
        frames,
        rows,
        encoder.out_dim(),
        encoder.out_frame_rate_ms(),
        if args.streaming { "streaming" } else { "batch" }
    );
    Ok(())
}

fn cmd_verify(args: VerifyArgs) -> Result<()> {
    let preset = load_preset(&args.preset).map_err(|e| format_err(e.to_string()))?;
    let results = run_suite(&preset, args.seed);
    let mut passed = 0;
    for r in &results {
        println!(
            "property {:<26} max_err {:>10.3e}  tol {:>8.1e}  {}  ({})",
            r.name,
            r.max_err,
            r.tolerance,
            if r.pass { "PASS" } else { "FAIL" },
            r.detail
        );
        if r.pass {
            passed += 1;
        }
    }
    println!(
        "verify: {passed}/{} properties passed (preset {}, seed {})",
        results.len(),
        args.preset,
        args.seed
    );
    if passed != results.len() {
        return Err(anyhow::Error::new(CliError::Verification(format!(
            "{} of {} properties failed",
            results.len() - passed,
            results.len()
        ))));
    }
    Ok(())
}

fn load_corpus(dir: &Path) -> Result<Vec<(String, FeatureSequence)>> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| format_err(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "fea"))
        .collect();
    entries.sort();
    let mut corpus = Vec::new();
    for path in entries {
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        corpus.push((name, read_feature_file(&path)?));
    }
    if corpus.is_empty() {
        return Err(format_err(format!(
            "no .fea files found in {}",
            dir.display()
        )));
    }
    Ok(corpus)
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let (cfg, weights) = read_model_bundle(&args.model)?;
    if args.quantized {
        let missing: Vec<String> = cfg
            .required_tensors()
            .iter()
            .filter(|spec| {
                spec.role == TensorRole::WeightMatrix
                    && !matches!(weights.get(&spec.name), Some(Tensor::I8PerChannel(_)))
            })
            .map(|spec| spec.name.clone())
            .collect();
        if !missing.is_empty() {
            return Err(format_err(format!(
                "--quantized requires i8-perchan weights; still f32: {}",
                missing.join(", ")
            )));
        }
    }
    let encoder = build_encoder(&cfg, &weights).map_err(|e| format_err(e.to_string()))?;
    let corpus = load_corpus(&args.corpus)?;
    let chunk_frames = (args.chunk_ms / cfg.input_frame_rate_ms).max(1) as usize;
    let outcome = measure_rtf(
        &BenchTarget::Encoder(&encoder),
        &corpus,
        args.concurrency,
        args.workers_per_stream,
        chunk_frames,
        &cfg.name,
        args.quantized,
    )?;
    std::fs::write(&args.out, outcome.report.render())
        .map_err(|e| format_err(format!("{}: {e}", args.out.display())))?;
    println!(
        "bench: {} utterances, concurrency {}, mean rtf {:.4} (report: {})",
        outcome.report.rows.len(),
        outcome.report.concurrency,
        outcome.report.mean_rtf,
        args.out.display()
    );
    Ok(())
}

fn cmd_eil(args: EilArgs) -> Result<()> {
    let cfg = match (&args.preset, &args.model) {
        (Some(name), None) => load_preset(name).map_err(|e| format_err(e.to_string()))?,
        (None, Some(path)) => read_model_bundle(path)?.0,
        _ => return Err(format_err("pass exactly one of --preset or --model")),
    };
    let report = compute_eil(&cfg).map_err(|e| format_err(e.to_string()))?;
    let params = parameter_count(&cfg);
    println!("config {}", cfg.name);
    println!("eil_ms {}", report.eil_ms);
    println!("right_context_ms {}", report.right_context_ms);
    println!("half_center_ms {}", report.half_center_ms);
    println!("frontend_lookahead_ms {}", report.frontend_lookahead_ms);
    println!("encoder_params {}", params.encoder);
    match params.output_layer {
        Some(p) => println!("output_layer_params {p}"),
        None => println!("output_layer_params -"),
    }
    Ok(())
}

fn cmd_quantize(args: QuantizeArgs) -> Result<()> {
    let (mut cfg, weights) = read_model_bundle(&args.input)?;
    let quantized = quantize_weight_set(&cfg, &weights)?;
    cfg.quantized = true;
    write_model_bundle(&args.output, &cfg, &quantized)?;
    println!(
        "quantized {} weight tensors -> {}",
        cfg.required_tensors()
            .iter()
            .filter(|s| s.role == TensorRole::WeightMatrix)
            .count(),
        args.output.display()
    );
    Ok(())
}

fn cmd_synth_model(args: SynthModelArgs) -> Result<()> {
    let mut cfg = load_preset(&args.preset).map_err(|e| format_err(e.to_string()))?;
    let mut weights = synth_weights(&cfg, args.seed);
    if args.quantized {
        weights = quantize_weight_set(&cfg, &weights)?;
        cfg.quantized = true;
    }
    write_model_bundle(&args.out, &cfg, &weights)?;
    println!(
        "wrote {} ({} tensors, {} encoder params)",
        args.out.display(),
        weights.len(),
        parameter_count(&cfg).encoder
    );
    Ok(())
}

fn cmd_synth_features(args: SynthFeaturesArgs) -> Result<()> {
    let seq = synth_features(args.frames, args.dim, args.rate_ms, args.seed);
    write_feature_file(&args.out, &seq)?;
    println!(
        "wrote {} ({} frames x {} dims @ {} ms)",
        args.out.display(),
        args.frames,
        args.dim,
        args.rate_ms
    );
    Ok(())
}
