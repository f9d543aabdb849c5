//! IO and tooling around `streamenc-core`: the feature-file and model-bundle
//! formats, weight synthesis, the property verification suite, and the RTF
//! benchmark harness. The `streamenc` binary wires these into subcommands.

pub mod bench;
pub mod formats;
pub mod synth;
pub mod verify;
