//! Flat `key=value` manifests and config texts.

use std::io::Write;
use std::path::Path;

use super::{DataError, Result};

/// Parses `key=value` lines; blank lines and `#` comments are skipped.
/// Returned in file order; duplicate keys keep both entries (consumers
/// decide whether that is an error).
pub fn parse_kv_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        match trimmed.split_once('=') {
            Some((k, v)) => out.push((k.trim().to_string(), v.trim().to_string())),
            None => {
                return Err(DataError::BadManifestLine {
                    line: line_no + 1,
                    content: trimmed.to_string(),
                })
            }
        }
    }
    Ok(out)
}

pub fn read_manifest(path: &Path) -> Result<Vec<(String, String)>> {
    parse_kv_text(&std::fs::read_to_string(path)?)
}

pub fn write_manifest(path: &Path, entries: &[(String, String)]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for (k, v) in entries {
        writeln!(out, "{k}={v}")?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_skips_and_errors() {
        let entries = parse_kv_text("a=1\n\n# comment\n b = two \n").unwrap();
        assert_eq!(
            entries,
            vec![
                ("a".to_string(), "1".to_string()),
                ("b".to_string(), "two".to_string())
            ]
        );
        assert!(matches!(
            parse_kv_text("oops"),
            Err(DataError::BadManifestLine { line: 1, .. })
        ));
    }

    #[test]
    fn manifest_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.txt");
        let entries = vec![
            ("kind".to_string(), "toy".to_string()),
            ("seed".to_string(), "7".to_string()),
        ];
        write_manifest(&path, &entries).unwrap();
        assert_eq!(read_manifest(&path).unwrap(), entries);
    }
}
