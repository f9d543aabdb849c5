//! On-disk formats: feature files and model bundles.
//!
//! Both formats are little-endian and fully specified in `docs/FORMATS.md`.
//! A feature file is a 16-byte header (`FEA1`, frames, dim, frame rate)
//! followed by row-major f32 frames. A model bundle is a human-readable
//! manifest (config fields plus a tensor directory with byte offsets),
//! a `%%` separator line, and one binary blob holding every tensor in
//! manifest order.

use std::fmt;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use streamenc_core::frontend::{FeatureSequence, FrontendConfig, FrontendOrder};
use streamenc_core::numerics::Matrix;
use streamenc_core::quant::QuantizedMatrix;
use streamenc_core::recurrent::SubsampleSpec;
use streamenc_core::streamer::{EncoderConfig, EncoderFamily};
use streamenc_core::weights::{Tensor, WeightSet};

pub const FEATURE_MAGIC: &[u8; 4] = b"FEA1";
pub const BUNDLE_MAGIC: &str = "MDL1";
const BLOB_SEPARATOR: &str = "%%";

/// Errors that map to specific process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Malformed input files or incompatible requests: exit code 2.
    Format(String),
    /// A verification property failed: exit code 1.
    Verification(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Format(msg) => write!(f, "{msg}"),
            CliError::Verification(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for CliError {}

pub fn format_err(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(CliError::Format(msg.into()))
}

/// Maps a command error to the documented exit code: verification failures
/// exit 1, everything else (usage, format, IO) exits 2.
pub fn exit_code_for(err: &anyhow::Error) -> i32 {
    match err.downcast_ref::<CliError>() {
        Some(CliError::Verification(_)) => 1,
        _ => 2,
    }
}

// ---------------------------------------------------------------------------
// Feature files
// ---------------------------------------------------------------------------

pub fn write_feature_file(path: &Path, seq: &FeatureSequence) -> Result<()> {
    let mut bytes = Vec::with_capacity(16 + seq.frames() * seq.dim() * 4);
    bytes.extend_from_slice(FEATURE_MAGIC);
    bytes.extend_from_slice(&(seq.frames() as u32).to_le_bytes());
    bytes.extend_from_slice(&(seq.dim() as u32).to_le_bytes());
    bytes.extend_from_slice(&seq.frame_rate_ms().to_le_bytes());
    for v in seq.data().as_slice() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_feature_file(path: &Path) -> Result<FeatureSequence> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    parse_feature_bytes(&bytes).map_err(|e| format_err(format!("{}: {e}", path.display())))
}

fn parse_feature_bytes(bytes: &[u8]) -> std::result::Result<FeatureSequence, String> {
    if bytes.len() < 16 {
        return Err(format!("truncated header: {} bytes", bytes.len()));
    }
    if &bytes[0..4] != FEATURE_MAGIC {
        return Err(format!(
            "bad magic at offset 0: expected \"FEA1\", got {:02x?}",
            &bytes[0..4]
        ));
    }
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
    let frames = u32_at(4) as usize;
    let dim = u32_at(8) as usize;
    let rate = u32_at(12);
    let need = 16 + frames * dim * 4;
    if bytes.len() != need {
        return Err(format!(
            "payload length mismatch at offset 16: header wants {need} total bytes, file has {}",
            bytes.len()
        ));
    }
    let mut data = Vec::with_capacity(frames * dim);
    for i in 0..frames * dim {
        let off = 16 + i * 4;
        data.push(f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()));
    }
    let matrix = Matrix::from_vec(frames, dim, data).map_err(|e| e.to_string())?;
    FeatureSequence::new(matrix, rate).map_err(|e| e.to_string())
}

// ---------------------------------------------------------------------------
// Model bundles
// ---------------------------------------------------------------------------

fn order_str(order: FrontendOrder) -> &'static str {
    match order {
        FrontendOrder::ProjectThenStack => "project_then_stack",
        FrontendOrder::StackOnly => "stack_only",
        FrontendOrder::LookaheadThenPassthrough => "lookahead_then_passthrough",
    }
}

fn parse_order(s: &str) -> std::result::Result<FrontendOrder, String> {
    Ok(match s {
        "project_then_stack" => FrontendOrder::ProjectThenStack,
        "stack_only" => FrontendOrder::StackOnly,
        "lookahead_then_passthrough" => FrontendOrder::LookaheadThenPassthrough,
        other => return Err(format!("unknown frontend order: {other}")),
    })
}

fn opt_usize(v: Option<usize>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "-".into())
}

fn parse_opt_usize(s: &str) -> std::result::Result<Option<usize>, String> {
    if s == "-" {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|_| format!("bad integer: {s}"))
}

fn subsample_str(specs: &[SubsampleSpec]) -> String {
    if specs.is_empty() {
        return "-".into();
    }
    specs
        .iter()
        .map(|s| format!("{}:{}", s.after_layer, s.factor))
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_subsample(s: &str) -> std::result::Result<Vec<SubsampleSpec>, String> {
    if s == "-" {
        return Ok(vec![]);
    }
    s.split(',')
        .map(|pair| {
            let (layer, factor) = pair
                .split_once(':')
                .ok_or_else(|| format!("bad subsample entry: {pair}"))?;
            Ok(SubsampleSpec {
                after_layer: layer.parse().map_err(|_| format!("bad layer: {layer}"))?,
                factor: factor.parse().map_err(|_| format!("bad factor: {factor}"))?,
            })
        })
        .collect()
}

fn manifest_config_lines(cfg: &EncoderConfig) -> String {
    let mut s = String::new();
    s.push_str(&format!("name {}\n", cfg.name));
    s.push_str(&format!("family {}\n", cfg.family.as_str()));
    s.push_str(&format!("frontend.order {}\n", order_str(cfg.frontend.order)));
    s.push_str(&format!(
        "frontend.projection {}\n",
        opt_usize(cfg.frontend.projection)
    ));
    s.push_str(&format!("frontend.stack {}\n", cfg.frontend.stack));
    s.push_str(&format!(
        "frontend.lookahead_stack {}\n",
        cfg.frontend.lookahead_stack
    ));
    s.push_str(&format!("input.dim {}\n", cfg.input_dim));
    s.push_str(&format!("input.rate_ms {}\n", cfg.input_frame_rate_ms));
    s.push_str(&format!("geometry.center_ms {}\n", cfg.center_ms));
    s.push_str(&format!("geometry.right_ms {}\n", cfg.right_ms));
    s.push_str(&format!("geometry.left_ms {}\n", cfg.left_ms));
    s.push_str(&format!("geometry.memory {}\n", cfg.max_memory));
    s.push_str(&format!("arch.layers {}\n", cfg.layers));
    s.push_str(&format!("arch.hidden {}\n", cfg.hidden));
    s.push_str(&format!("arch.batch_frames {}\n", cfg.batch_frames));
    s.push_str(&format!("arch.subsample {}\n", subsample_str(&cfg.subsample)));
    s.push_str(&format!("arch.heads {}\n", cfg.num_heads));
    s.push_str(&format!("arch.head_dim {}\n", cfg.head_dim));
    s.push_str(&format!("arch.ffn_dim {}\n", cfg.ffn_dim));
    s.push_str(&format!(
        "arch.output_units {}\n",
        opt_usize(cfg.output_units)
    ));
    s.push_str(&format!("quantized {}\n", cfg.quantized));
    s
}

fn tensor_payload_len(t: &Tensor) -> usize {
    match t {
        Tensor::F32(m) => m.rows() * m.cols() * 4,
        // Row-major i8 payload followed by one f32 scale per row.
        Tensor::I8PerChannel(q) => q.rows() * q.cols() + q.rows() * 4,
    }
}

fn tensor_dtype(t: &Tensor) -> &'static str {
    match t {
        Tensor::F32(_) => "f32",
        Tensor::I8PerChannel(_) => "i8-perchan",
    }
}

fn append_tensor_payload(blob: &mut Vec<u8>, t: &Tensor) {
    match t {
        Tensor::F32(m) => {
            for v in m.as_slice() {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
        Tensor::I8PerChannel(q) => {
            blob.extend(q.values().iter().map(|&v| v as u8));
            for s in q.scales() {
                blob.extend_from_slice(&s.to_le_bytes());
            }
        }
    }
}

/// Writes config + tensors as one artifact. Tensors are laid out in the
/// configuration's canonical directory order with ascending, packed offsets.
pub fn write_model_bundle(path: &Path, cfg: &EncoderConfig, weights: &WeightSet) -> Result<()> {
    cfg.validate().map_err(|e| format_err(e.to_string()))?;
    cfg.check_weights(weights)
        .map_err(|e| format_err(e.to_string()))?;

    let mut manifest = String::new();
    manifest.push_str(BUNDLE_MAGIC);
    manifest.push('\n');
    manifest.push_str(&manifest_config_lines(cfg));

    let mut blob = Vec::new();
    let mut tensor_lines = String::new();
    for spec in cfg.required_tensors() {
        let tensor = weights.require(&spec.name).expect("checked above");
        let offset = blob.len();
        let len = tensor_payload_len(tensor);
        tensor_lines.push_str(&format!(
            "tensor {} {} {}x{} {} {}\n",
            spec.name,
            tensor_dtype(tensor),
            tensor.rows(),
            tensor.cols(),
            offset,
            len
        ));
        append_tensor_payload(&mut blob, tensor);
    }
    manifest.push_str(&tensor_lines);
    manifest.push_str(BLOB_SEPARATOR);
    manifest.push('\n');

    let mut bytes = manifest.into_bytes();
    bytes.extend_from_slice(&blob);
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

struct TensorEntry {
    name: String,
    dtype: String,
    rows: usize,
    cols: usize,
    offset: usize,
    len: usize,
}

fn parse_tensor_line(line: &str) -> std::result::Result<TensorEntry, String> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 6 || fields[0] != "tensor" {
        return Err(format!("bad tensor line: {line}"));
    }
    let (rows, cols) = fields[3]
        .split_once('x')
        .ok_or_else(|| format!("bad shape: {}", fields[3]))?;
    Ok(TensorEntry {
        name: fields[1].into(),
        dtype: fields[2].into(),
        rows: rows.parse().map_err(|_| format!("bad rows: {rows}"))?,
        cols: cols.parse().map_err(|_| format!("bad cols: {cols}"))?,
        offset: fields[4]
            .parse()
            .map_err(|_| format!("bad offset: {}", fields[4]))?,
        len: fields[5]
            .parse()
            .map_err(|_| format!("bad length: {}", fields[5]))?,
    })
}

/// Reads a model bundle back into its configuration and weight set.
pub fn read_model_bundle(path: &Path) -> Result<(EncoderConfig, WeightSet)> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    parse_model_bundle(&bytes).map_err(|e| format_err(format!("{}: {e}", path.display())))
}

fn parse_model_bundle(bytes: &[u8]) -> std::result::Result<(EncoderConfig, WeightSet), String> {
    // The manifest ends at the first "\n%%\n"; the blob follows it.
    let sep = b"\n%%\n";
    let sep_pos = bytes
        .windows(sep.len())
        .position(|w| w == sep)
        .ok_or("missing %% blob separator")?;
    let manifest = std::str::from_utf8(&bytes[..sep_pos + 1])
        .map_err(|_| "manifest is not UTF-8".to_string())?;
    let blob = &bytes[sep_pos + sep.len()..];

    let mut lines = manifest.lines();
    let magic = lines.next().ok_or("empty manifest")?;
    if magic != BUNDLE_MAGIC {
        return Err(format!(
            "bad magic at offset 0: expected \"{BUNDLE_MAGIC}\", got \"{magic}\""
        ));
    }

    let mut kv = std::collections::BTreeMap::new();
    let mut tensors = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        if line.starts_with("tensor ") {
            tensors.push(parse_tensor_line(line)?);
        } else {
            let (k, v) = line
                .split_once(' ')
                .ok_or_else(|| format!("bad manifest line: {line}"))?;
            kv.insert(k.to_string(), v.to_string());
        }
    }

    let get = |k: &str| -> std::result::Result<&str, String> {
        kv.get(k)
            .map(|s| s.as_str())
            .ok_or_else(|| format!("manifest missing key: {k}"))
    };
    let get_usize = |k: &str| -> std::result::Result<usize, String> {
        get(k)?.parse().map_err(|_| format!("bad integer for {k}"))
    };

    let cfg = EncoderConfig {
        name: get("name")?.into(),
        family: EncoderFamily::parse(get("family")?).map_err(|e| e.to_string())?,
        frontend: FrontendConfig {
            order: parse_order(get("frontend.order")?)?,
            projection: parse_opt_usize(get("frontend.projection")?)?,
            stack: get_usize("frontend.stack")?,
            lookahead_stack: get_usize("frontend.lookahead_stack")?,
        },
        input_dim: get_usize("input.dim")?,
        input_frame_rate_ms: get_usize("input.rate_ms")? as u32,
        center_ms: get_usize("geometry.center_ms")? as u32,
        right_ms: get_usize("geometry.right_ms")? as u32,
        left_ms: get_usize("geometry.left_ms")? as u32,
        max_memory: get_usize("geometry.memory")?,
        layers: get_usize("arch.layers")?,
        hidden: get_usize("arch.hidden")?,
        batch_frames: get_usize("arch.batch_frames")?,
        subsample: parse_subsample(get("arch.subsample")?)?,
        num_heads: get_usize("arch.heads")?,
        head_dim: get_usize("arch.head_dim")?,
        ffn_dim: get_usize("arch.ffn_dim")?,
        output_units: parse_opt_usize(get("arch.output_units")?)?,
        quantized: get("quantized")? == "true",
    };

    let mut weights = WeightSet::new();
    let mut cursor = 0usize;
    for entry in &tensors {
        if entry.offset != cursor {
            return Err(format!(
                "tensor {}: offset {} is not packed/ascending (expected {cursor})",
                entry.name, entry.offset
            ));
        }
        let end = entry.offset + entry.len;
        if end > blob.len() {
            return Err(format!(
                "tensor {}: payload [{}, {end}) exceeds blob of {} bytes",
                entry.name,
                entry.offset,
                blob.len()
            ));
        }
        let payload = &blob[entry.offset..end];
        let tensor = decode_tensor(entry, payload)?;
        weights.insert(entry.name.clone(), tensor);
        cursor = end;
    }
    if cursor != blob.len() {
        return Err(format!(
            "blob has {} trailing bytes after the last tensor",
            blob.len() - cursor
        ));
    }
    Ok((cfg, weights))
}

fn decode_tensor(entry: &TensorEntry, payload: &[u8]) -> std::result::Result<Tensor, String> {
    let n = entry.rows * entry.cols;
    match entry.dtype.as_str() {
        "f32" => {
            if payload.len() != n * 4 {
                return Err(format!(
                    "tensor {}: f32 payload of {} bytes, expected {}",
                    entry.name,
                    payload.len(),
                    n * 4
                ));
            }
            let mut data = Vec::with_capacity(n);
            for i in 0..n {
                data.push(f32::from_le_bytes(
                    payload[i * 4..i * 4 + 4].try_into().unwrap(),
                ));
            }
            Matrix::from_vec(entry.rows, entry.cols, data)
                .map(Tensor::F32)
                .map_err(|e| format!("tensor {}: {e}", entry.name))
        }
        "i8-perchan" => {
            let expect = n + entry.rows * 4;
            if payload.len() != expect {
                return Err(format!(
                    "tensor {}: i8-perchan payload of {} bytes, expected {expect}",
                    entry.name,
                    payload.len()
                ));
            }
            let values: Vec<i8> = payload[..n].iter().map(|&b| b as i8).collect();
            let mut scales = Vec::with_capacity(entry.rows);
            for r in 0..entry.rows {
                let off = n + r * 4;
                scales.push(f32::from_le_bytes(payload[off..off + 4].try_into().unwrap()));
            }
            QuantizedMatrix::from_parts(entry.rows, entry.cols, values, scales)
                .map(Tensor::I8PerChannel)
                .map_err(|e| format!("tensor {}: {e}", entry.name))
        }
        other => Err(format!("tensor {}: unknown dtype {other}", entry.name)),
    }
}
