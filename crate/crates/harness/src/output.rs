//! File writing and small CSV helpers.

use std::path::Path;

use crate::error::Result;

/// Writes `(file name, contents)` pairs under `dir`, creating it if needed.
pub fn write_outputs(dir: &Path, files: &[(String, String)]) -> Result<()> {
    for (name, contents) in files {
        sms_core::io::write_file(&dir.join(name), contents)?;
    }
    Ok(())
}

/// Quotes a CSV field when it contains a separator, quote or newline.
pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Shortest round-trip decimal form; empty for NaN.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map_or_else(String::new, num)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quoting() {
        assert_eq!(csv_field("plain"), "plain");
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
    }

    #[test]
    fn numbers() {
        assert_eq!(num(0.1), "0.1");
        assert_eq!(num(f64::NAN), "");
        assert_eq!(opt_num(None), "");
    }
}
