//! Real-time-factor measurement harness.
//!
//! Utterances are decoded at a fixed concurrency; each utterance gets two
//! workers, one forwarding frames through the encoder session and one
//! consumer draining the emitted blocks over a bounded queue (the slot a
//! search pass would occupy in a full recognizer). Wall time runs from the
//! first chunk delivery until the consumer has received the final flush
//! emission. Timing never feeds back into the math: benchmarked emissions
//! are bit-identical to a plain run.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use anyhow::Result;
use streamenc_core::frontend::FeatureSequence;
use streamenc_core::numerics::Matrix;
use streamenc_core::streamer::BuiltEncoder;

use crate::formats::format_err;

/// What the harness drives: a real encoder, or a calibrated stub that burns
/// a fixed wall-time per frame and passes frames through unchanged (for
/// validating the measurement itself).
pub enum BenchTarget<'a> {
    Encoder(&'a BuiltEncoder),
    Stub { per_frame: Duration },
}

/// One utterance's measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceRow {
    pub name: String,
    pub audio_ms: f64,
    pub wall_ms: f64,
    pub rtf: f64,
}

/// Full benchmark result: per-utterance rows plus aggregate statistics that
/// are always recomputable from the rows.
#[derive(Debug, Clone)]
pub struct RtfReport {
    pub preset: String,
    pub concurrency: usize,
    pub workers_per_stream: usize,
    pub quantized: bool,
    pub rows: Vec<UtteranceRow>,
    pub mean_rtf: f64,
    pub p50_rtf: f64,
    pub p95_rtf: f64,
}

/// Nearest-rank percentile over a sorted slice.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub fn aggregate(rows: &[UtteranceRow]) -> (f64, f64, f64) {
    let mut rtfs: Vec<f64> = rows.iter().map(|r| r.rtf).collect();
    rtfs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mean = rtfs.iter().sum::<f64>() / rtfs.len() as f64;
    (mean, percentile(&rtfs, 0.50), percentile(&rtfs, 0.95))
}

impl RtfReport {
    /// Line-oriented rendering: one record per utterance, then the
    /// aggregate block. Field names are stable.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str("rtf-report v1\n");
        out.push_str(&format!("preset {}\n", self.preset));
        out.push_str(&format!("concurrency {}\n", self.concurrency));
        out.push_str(&format!("workers_per_stream {}\n", self.workers_per_stream));
        out.push_str(&format!("quantized {}\n", self.quantized));
        for row in &self.rows {
            out.push_str(&format!(
                "utterance {} audio_ms {:.3} wall_ms {:.3} rtf {:.6}\n",
                row.name, row.audio_ms, row.wall_ms, row.rtf
            ));
        }
        out.push_str(&format!(
            "aggregate utterances {} mean_rtf {:.6} p50_rtf {:.6} p95_rtf {:.6}\n",
            self.rows.len(),
            self.mean_rtf,
            self.p50_rtf,
            self.p95_rtf
        ));
        out
    }
}

/// Benchmark result plus the concatenated emissions per utterance, so
/// callers can assert the harness did not perturb the outputs.
#[derive(Debug)]
pub struct BenchOutcome {
    pub report: RtfReport,
    pub emissions: Vec<Matrix>,
}

fn spin_for(duration: Duration) {
    let deadline = Instant::now() + duration;
    while Instant::now() < deadline {
        std::hint::spin_loop();
    }
}

struct UtteranceResult {
    row: UtteranceRow,
    emission: Matrix,
}

fn drive_utterance(
    target: &BenchTarget,
    name: &str,
    seq: &FeatureSequence,
    workers_per_stream: usize,
    chunk_frames: usize,
) -> Result<UtteranceResult> {
    let frames = seq.frames();
    let audio_ms = frames as f64 * seq.frame_rate_ms() as f64;

    let produce = |mut sink: Box<dyn FnMut(Matrix)>| -> Result<()> {
        match target {
            BenchTarget::Encoder(encoder) => {
                let mut session = encoder
                    .session()
                    .map_err(|e| format_err(e.to_string()))?;
                let mut at = 0;
                while at < frames {
                    let take = chunk_frames.min(frames - at);
                    let blocks = session
                        .push(&seq.data().slice_rows(at..at + take))
                        .map_err(|e| format_err(e.to_string()))?;
                    for b in blocks {
                        sink(b);
                    }
                    at += take;
                }
                for b in session.flush().map_err(|e| format_err(e.to_string()))? {
                    sink(b);
                }
                Ok(())
            }
            BenchTarget::Stub { per_frame } => {
                let mut at = 0;
                while at < frames {
                    let take = chunk_frames.min(frames - at);
                    spin_for(*per_frame * take as u32);
                    sink(seq.data().slice_rows(at..at + take));
                    at += take;
                }
                Ok(())
            }
        }
    };

    let start = Instant::now();
    let blocks: Vec<Matrix> = if workers_per_stream >= 2 {
        // Encoder worker feeds a bounded queue; the consumer worker drains
        // it (the slot search would occupy).
        let (tx, rx) = mpsc::sync_channel::<Matrix>(8);
        let consumer = std::thread::spawn(move || {
            let mut collected = Vec::new();
            while let Ok(block) = rx.recv() {
                collected.push(block);
            }
            collected
        });
        produce(Box::new(move |b| {
            tx.send(b).expect("consumer alive until sender drops");
        }))?;
        consumer.join().expect("consumer thread panicked")
    } else {
        let collected = std::sync::Arc::new(Mutex::new(Vec::new()));
        let sink_ref = collected.clone();
        produce(Box::new(move |b| sink_ref.lock().unwrap().push(b)))?;
        std::sync::Arc::try_unwrap(collected)
            .expect("single owner")
            .into_inner()
            .unwrap()
    };
    let wall_ms = start.elapsed().as_secs_f64() * 1000.0;

    let refs: Vec<&Matrix> = blocks.iter().collect();
    let emission = if refs.is_empty() {
        Matrix::zeros(0, 0)
    } else {
        Matrix::vstack(&refs).map_err(|e| format_err(e.to_string()))?
    };
    Ok(UtteranceResult {
        row: UtteranceRow {
            name: name.to_string(),
            audio_ms,
            wall_ms,
            rtf: wall_ms / audio_ms,
        },
        emission,
    })
}

/// Streams every corpus utterance through the target at the given
/// concurrency and reports per-utterance and aggregate RTF.
pub fn measure_rtf(
    target: &BenchTarget,
    corpus: &[(String, FeatureSequence)],
    concurrency: usize,
    workers_per_stream: usize,
    chunk_frames: usize,
    preset: &str,
    quantized: bool,
) -> Result<BenchOutcome> {
    if corpus.is_empty() {
        return Err(format_err("empty corpus"));
    }
    if concurrency == 0 || chunk_frames == 0 {
        return Err(format_err("concurrency and chunk size must be >= 1"));
    }

    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<UtteranceResult>>> =
        corpus.iter().map(|_| Mutex::new(None)).collect();
    let errors: Mutex<Vec<String>> = Mutex::new(Vec::new());

    std::thread::scope(|scope| {
        for _ in 0..concurrency.min(corpus.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= corpus.len() {
                    break;
                }
                let (name, seq) = &corpus[i];
                match drive_utterance(target, name, seq, workers_per_stream, chunk_frames) {
                    Ok(result) => *slots[i].lock().unwrap() = Some(result),
                    Err(e) => errors.lock().unwrap().push(format!("{name}: {e}")),
                }
            });
        }
    });

    let errors = errors.into_inner().unwrap();
    if let Some(first) = errors.first() {
        return Err(format_err(first.clone()));
    }
    let mut rows = Vec::with_capacity(corpus.len());
    let mut emissions = Vec::with_capacity(corpus.len());
    for slot in slots {
        let result = slot.into_inner().unwrap().expect("all utterances ran");
        rows.push(result.row);
        emissions.push(result.emission);
    }
    let (mean_rtf, p50_rtf, p95_rtf) = aggregate(&rows);
    Ok(BenchOutcome {
        report: RtfReport {
            preset: preset.to_string(),
            concurrency,
            workers_per_stream,
            quantized,
            rows,
            mean_rtf,
            p50_rtf,
            p95_rtf,
        },
        emissions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::synth_features;

    fn stub_corpus(n: usize, frames: usize) -> Vec<(String, FeatureSequence)> {
        (0..n)
            .map(|i| (format!("utt{i}"), synth_features(frames, 8, 10, i as u64)))
            .collect()
    }

    #[test]
    fn accounting_is_internally_consistent() {
        let corpus = stub_corpus(3, 40);
        let outcome = measure_rtf(
            &BenchTarget::Stub {
                per_frame: Duration::from_micros(200),
            },
            &corpus,
            1,
            2,
            10,
            "stub",
            false,
        )
        .unwrap();
        let report = &outcome.report;
        assert_eq!(report.rows.len(), 3);
        for row in &report.rows {
            assert!(row.rtf > 0.0);
            assert!((row.rtf - row.wall_ms / row.audio_ms).abs() < 1e-12);
            assert_eq!(row.audio_ms, 400.0);
        }
        let (mean, p50, p95) = aggregate(&report.rows);
        assert_eq!(mean, report.mean_rtf);
        assert_eq!(p50, report.p50_rtf);
        assert_eq!(p95, report.p95_rtf);
    }

    #[test]
    fn stub_rtf_is_close_to_the_analytic_value() {
        // 2 ms per frame on 50 frames of 10 ms audio: expected rtf = 0.2.
        let corpus = stub_corpus(2, 50);
        let outcome = measure_rtf(
            &BenchTarget::Stub {
                per_frame: Duration::from_millis(2),
            },
            &corpus,
            1,
            2,
            10,
            "stub",
            false,
        )
        .unwrap();
        for row in &outcome.report.rows {
            assert!(
                (row.rtf - 0.2).abs() / 0.2 <= 0.2,
                "rtf {} too far from 0.2",
                row.rtf
            );
        }
    }

    #[test]
    fn stub_passthrough_emissions_match_input() {
        let corpus = stub_corpus(1, 25);
        let outcome = measure_rtf(
            &BenchTarget::Stub {
                per_frame: Duration::from_micros(50),
            },
            &corpus,
            1,
            1,
            7,
            "stub",
            false,
        )
        .unwrap();
        assert_eq!(
            outcome.emissions[0].as_slice(),
            corpus[0].1.data().as_slice()
        );
    }

    #[test]
    fn float_and_quantized_paths_bench_separately_with_close_outputs() {
        use crate::synth::{quantize_weight_set, synth_weights};
        use streamenc_core::frontend::FrontendConfig;
        use streamenc_core::streamer::{build_encoder, EncoderConfig, EncoderFamily};

        let cfg = EncoderConfig {
            name: "bench-tiny".into(),
            family: EncoderFamily::Emformer,
            frontend: FrontendConfig::identity(),
            input_dim: 8,
            input_frame_rate_ms: 10,
            center_ms: 20,
            right_ms: 10,
            left_ms: 40,
            max_memory: 1,
            layers: 2,
            hidden: 0,
            batch_frames: 0,
            subsample: vec![],
            num_heads: 2,
            head_dim: 4,
            ffn_dim: 16,
            output_units: None,
            quantized: false,
        };
        let float_weights = synth_weights(&cfg, 5);
        let quant_weights = quantize_weight_set(&cfg, &float_weights).unwrap();
        let float_enc = build_encoder(&cfg, &float_weights).unwrap();
        let quant_enc = build_encoder(&cfg, &quant_weights).unwrap();
        let corpus = stub_corpus(2, 30);

        let f = measure_rtf(
            &BenchTarget::Encoder(&float_enc),
            &corpus, 1, 2, 10, "bench-tiny", false,
        )
        .unwrap();
        let q = measure_rtf(
            &BenchTarget::Encoder(&quant_enc),
            &corpus, 1, 2, 10, "bench-tiny", true,
        )
        .unwrap();

        // Separate rtf entries per path, same shape of report.
        assert!(!f.report.quantized);
        assert!(q.report.quantized);
        assert_eq!(f.report.rows.len(), q.report.rows.len());

        // Outputs differ only by weight rounding.
        for (a, b) in f.emissions.iter().zip(&q.emissions) {
            assert_eq!(a.rows(), b.rows());
            let max_diff = a
                .as_slice()
                .iter()
                .zip(b.as_slice())
                .map(|(x, y)| (x - y).abs())
                .fold(0.0f32, f32::max);
            assert!(max_diff > 0.0, "quantization should perturb something");
            assert!(max_diff < 0.5, "quantized drift too large: {max_diff}");
        }
    }

    #[test]
    fn empty_corpus_is_rejected() {
        let err = measure_rtf(
            &BenchTarget::Stub {
                per_frame: Duration::from_micros(1),
            },
            &[],
            1,
            2,
            10,
            "stub",
            false,
        )
        .unwrap_err();
        assert!(format!("{err}").contains("empty corpus"));
    }

    #[test]
    fn report_renders_one_line_per_utterance_plus_aggregate() {
        let corpus = stub_corpus(4, 20);
        let outcome = measure_rtf(
            &BenchTarget::Stub {
                per_frame: Duration::from_micros(100),
            },
            &corpus,
            2,
            2,
            5,
            "stub",
            true,
        )
        .unwrap();
        let text = outcome.report.render();
        assert_eq!(text.lines().filter(|l| l.starts_with("utterance ")).count(), 4);
        assert_eq!(text.lines().filter(|l| l.starts_with("aggregate ")).count(), 1);
        assert!(text.contains("quantized true"));
    }
}
