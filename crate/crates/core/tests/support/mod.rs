//! Oracles and random instance generators shared by the integration tests
//! and the acceptance harness.
#![allow(dead_code)]

pub mod fixtures;
pub mod gen;
pub mod oracles;

use std::path::PathBuf;

/// The bundled data directory at the workspace root.
pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}
