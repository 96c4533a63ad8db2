//! Table and file helpers shared by the commands.
//!
//! Every data table is UTF-8, comma-separated, one header row, 6-decimal
//! reals, LF line endings.

use crate::error::Result;
use std::path::Path;

pub fn fmt_real(x: f64) -> String {
    format!("{x:.6}")
}

/// Write text to a file, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, text.as_bytes())?;
    Ok(())
}

/// Assemble a CSV from a header and stringly rows.
pub fn csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_uses_lf_and_six_decimals() {
        let table = csv(
            &["a", "b"],
            &[vec!["1".into(), fmt_real(0.5)], vec!["2".into(), fmt_real(1.0 / 3.0)]],
        );
        assert_eq!(table, "a,b\n1,0.500000\n2,0.333333\n");
        assert!(!table.contains('\r'));
    }
}
