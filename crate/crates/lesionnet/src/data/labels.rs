//! Label CSV ingestion: `case_id,MGMT_value` with one row per case.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const LABELS_HEADER: &str = "case_id,MGMT_value";

/// Parse a label file into an ordered case -> label map. Rows must carry
/// exactly the two header columns, values restricted to 0/1, ids unique;
/// violations are rejected with their row number.
pub fn load_labels(path: &Path) -> Result<BTreeMap<String, u8>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let Some((_, header)) = lines.next() else {
        return Err(Error::data("label file is empty, expected a header row"));
    };
    if header.trim() != LABELS_HEADER {
        return Err(Error::data(format!(
            "row 1: expected header {LABELS_HEADER:?}, got {header:?}"
        )));
    }
    let mut labels = BTreeMap::new();
    for (idx, line) in lines {
        let row = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 2 {
            return Err(Error::data(format!(
                "row {row}: expected 2 columns (case_id,MGMT_value), got {}",
                fields.len()
            )));
        }
        let case_id = fields[0].trim();
        if case_id.is_empty() {
            return Err(Error::data(format!("row {row}: empty case id")));
        }
        let value = match fields[1].trim() {
            "0" => 0u8,
            "1" => 1u8,
            other => {
                return Err(Error::data(format!(
                    "row {row}: MGMT_value must be 0 or 1, got {other:?}"
                )))
            }
        };
        if labels.insert(case_id.to_string(), value).is_some() {
            return Err(Error::data(format!(
                "row {row}: duplicate case id {case_id:?}"
            )));
        }
    }
    Ok(labels)
}

pub fn save_labels(labels: &BTreeMap<String, u8>, path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{LABELS_HEADER}")?;
    for (id, label) in labels {
        writeln!(w, "{id},{label}")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<BTreeMap<String, u8>> {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.csv");
        std::fs::write(&path, text).unwrap();
        load_labels(&path)
    }

    #[test]
    fn single_row_parses() {
        let labels = parse("case_id,MGMT_value\n00001,1\n").unwrap();
        assert_eq!(labels.get("00001"), Some(&1));
        assert_eq!(labels.len(), 1);
    }

    #[test]
    fn non_binary_value_rejected_with_row() {
        let err = parse("case_id,MGMT_value\n00001,1\n00002,2\n").unwrap_err();
        assert!(err.to_string().contains("row 3"), "got: {err}");
    }

    #[test]
    fn duplicate_id_rejected_with_row() {
        let err = parse("case_id,MGMT_value\n00001,1\n00001,0\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("duplicate") && msg.contains("row 3"), "got: {msg}");
    }

    #[test]
    fn missing_column_rejected() {
        let err = parse("case_id,MGMT_value\n00001\n").unwrap_err();
        assert!(err.to_string().contains("row 2"), "got: {err}");
        assert!(parse("case_id\n00001,1\n").is_err());
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.csv");
        let mut labels = BTreeMap::new();
        labels.insert("00001".to_string(), 1u8);
        labels.insert("00002".to_string(), 0u8);
        save_labels(&labels, &path).unwrap();
        assert_eq!(load_labels(&path).unwrap(), labels);
    }
}
