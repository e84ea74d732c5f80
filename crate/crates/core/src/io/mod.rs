//! File formats: PLY point clouds, PGM depth/mask images, frame sidecars and
//! JSON documents.

pub mod frames;
pub mod pgm;
pub mod ply;

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub use frames::{read_frame, read_frame_dir, write_frame, FrameSidecar};
pub use pgm::Greymap;
pub use ply::{read_cloud, write_cloud, ScalarKind, VertexTable};

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))
}

/// Pretty-printed with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::parse("JSON", e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
