//! Splat persistence: PLY interchange and the compressed container.

mod compressed;
mod ply;

use std::path::Path;

pub use compressed::{
    decode, export_compressed, size_estimate, CompressionLevel, CONTAINER_MAGIC, CONTAINER_VERSION,
};
pub use ply::{export_ply, import_ply, read_ply, write_ply, PLY_PROPERTIES};

use crate::error::{Error, Result};
use crate::model::GaussianCloud;

/// Reads either a PLY file or a compressed container, by magic bytes.
pub fn load_splats(path: &Path) -> Result<GaussianCloud<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(CONTAINER_MAGIC) {
        decode(&bytes)
    } else {
        read_ply(&mut std::io::Cursor::new(bytes)).map_err(|e| match e {
            Error::Ply(m) => Error::Ply(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}
