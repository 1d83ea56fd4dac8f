//! Shared helpers for file output.

use std::fs;
use std::path::Path;

use crate::error::Result;

/// Formats an `f64` with 17 significant digits, enough for `str::parse` to
/// recover the exact bit pattern.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `contents` through a sibling temp file plus rename, so the
/// destination never holds a partial write.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".to_string());
    let tmp = path.with_file_name(format!(".{file_name}.tmp"));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt_f64_roundtrips_exactly() {
        for x in [
            0.1,
            -0.0,
            1.0 / 3.0,
            std::f64::consts::PI,
            1e-300,
            -123456.789e210,
        ] {
            let s = fmt_f64(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "string was {s}");
        }
    }
}
