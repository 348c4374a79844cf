//! CSV output shared by training curves and evaluation reports.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// Serializes `rows` as CSV with a header row taken from the field names.
pub fn to_csv_string<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn write_csv<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let text = to_csv_string(rows)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
