use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::datagen::record::InteractionRecord;
use crate::error::{Error, Result};

/// Parses JSON lines; blank lines are skipped and errors carry 1-based line numbers.
pub fn parse_jsonl(reader: impl BufRead) -> Result<Vec<InteractionRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: InteractionRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        rec.validate().map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_jsonl(path: &Path) -> Result<Vec<InteractionRecord>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_jsonl(BufReader::new(f))
}

pub fn write_jsonl(dataset: &[InteractionRecord], path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for r in dataset {
        r.validate()?;
        serde_json::to_writer(&mut w, r).expect("records always serialize");
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::record::DomainIds;
    use proptest::prelude::*;

    #[test]
    fn empty_input_is_empty_dataset() {
        assert!(parse_jsonl("".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn purchase_without_click_rejected_with_line() {
        let good = r#"{"timestamp":1,"user_id":1,"item_id":2,"domain_ids":{"scene":1,"region":2,"period":3},"feature_ids":[1,2],"click":1,"purchase":1}"#;
        let bad = r#"{"timestamp":2,"user_id":1,"item_id":2,"domain_ids":{"scene":1,"region":2,"period":3},"feature_ids":[],"click":0,"purchase":1}"#;
        let text = format!("{good}\n{bad}\n");
        match parse_jsonl(text.as_bytes()) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("purchase"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_line_reports_number() {
        let text = "\n{not json}\n";
        assert!(matches!(parse_jsonl(text.as_bytes()), Err(Error::Parse { line: 2, .. })));
    }

    fn arb_record() -> impl Strategy<Value = InteractionRecord> {
        (
            any::<i64>(),
            any::<u32>(),
            any::<u32>(),
            (any::<u32>(), any::<u32>(), any::<u32>()),
            prop::collection::vec(any::<u32>(), 0..10),
            0u8..=1,
            0u8..=1,
        )
            .prop_map(|(timestamp, user_id, item_id, (scene, region, period), feature_ids, click, p)| {
                InteractionRecord {
                    timestamp,
                    user_id,
                    item_id,
                    domain_ids: DomainIds { scene, region, period },
                    feature_ids,
                    click,
                    purchase: p & click,
                }
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn write_then_read_is_identity(recs in prop::collection::vec(arb_record(), 1000)) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("d.jsonl");
            write_jsonl(&recs, &path).unwrap();
            let back = read_jsonl(&path).unwrap();
            prop_assert_eq!(back, recs);
        }
    }
}
