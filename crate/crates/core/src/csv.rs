//! Fixed numeric text format shared by every CSV the crate writes.

use std::path::Path;

use crate::error::{Error, Result};

/// 17 significant digits, exponent form; round-trips every `f64`.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}
