//! Streaming acoustic encoder inference.
//!
//! This crate implements the compute side of a block-processing speech
//! encoder stack: dense math kernels, feature frontends, unidirectional and
//! latency-controlled bidirectional LSTMs, an offline transformer stack, the
//! Emformer streaming transformer with key/value caching and a memory bank,
//! per-channel INT8 weight quantization, and the session/latency machinery
//! that ties them together.
//!
//! Everything here is deterministic: fixed accumulation orders make repeated
//! runs bit-identical, which is what the equivalence oracles in the test
//! suite rely on. The crate is `no_std` (with `alloc`); file formats, the
//! CLI and the RTF benchmark harness live in the companion `streamenc-cli`
//! crate.

#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod emformer;
pub mod error;
pub mod frontend;
pub mod numerics;
pub mod quant;
pub mod recurrent;
pub mod streamer;
pub mod transformer;
pub mod weights;

pub use error::{EncoderError, Result};
pub use numerics::Matrix;
