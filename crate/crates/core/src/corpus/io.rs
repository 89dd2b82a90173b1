use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{ProcessedDocument, RawDocument};
use crate::{Error, Result};

/// Reads `id,text` CSV (with header) or JSONL `{"id", "text"}` records.
/// The format is chosen by extension: `.jsonl`/`.json` is JSONL, anything
/// else is CSV.
pub fn read_documents(path: &Path) -> Result<Vec<RawDocument>> {
    read_documents_inner(path).map_err(|e| e.at_path(path))
}

fn is_jsonl(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("jsonl" | "json" | "ndjson")
    )
}

fn read_documents_inner(path: &Path) -> Result<Vec<RawDocument>> {
    if is_jsonl(path) {
        let reader = BufReader::new(File::open(path)?);
        let mut docs = Vec::new();
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            docs.push(serde_json::from_str(&line)?);
        }
        Ok(docs)
    } else {
        let mut reader = csv::Reader::from_path(path)?;
        let headers = reader.headers()?.clone();
        let id_col = headers.iter().position(|h| h == "id");
        let text_col = headers.iter().position(|h| h == "text");
        let (Some(id_col), Some(text_col)) = (id_col, text_col) else {
            return Err(Error::InvalidParameter(
                "CSV input needs an `id,text` header".into(),
            ));
        };
        let mut docs = Vec::new();
        for record in reader.records() {
            let record = record?;
            docs.push(RawDocument::new(&record[id_col], &record[text_col]));
        }
        Ok(docs)
    }
}

pub fn write_processed_jsonl(path: &Path, docs: &[ProcessedDocument]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for d in docs {
        serde_json::to_writer(&mut w, d)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_processed_jsonl(path: &Path) -> Result<Vec<ProcessedDocument>> {
    let reader = BufReader::new(File::open(path).map_err(|e| Error::from(e).at_path(path))?);
    let mut docs = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            docs.push(serde_json::from_str(&line).map_err(|e| Error::from(e).at_path(path))?);
        }
    }
    Ok(docs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_quoted_csv_and_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let csv_path = dir.path().join("in.csv");
        std::fs::write(&csv_path, "id,text\nt1,\"hello, \"\"world\"\"\"\nt2,plain\n").unwrap();
        let docs = read_documents(&csv_path).unwrap();
        assert_eq!(docs[0], RawDocument::new("t1", "hello, \"world\""));
        assert_eq!(docs[1].text, "plain");

        let jsonl = dir.path().join("in.jsonl");
        std::fs::write(&jsonl, "{\"id\":\"a\",\"text\":\"x y\"}\n\n{\"id\":\"b\",\"text\":\"z\"}\n").unwrap();
        let docs = read_documents(&jsonl).unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[1].id, "b");
    }

    #[test]
    fn csv_without_header_columns_fails() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "a,b\n1,2\n").unwrap();
        assert!(read_documents(&p).is_err());
    }

    #[test]
    fn processed_jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("tokens.jsonl");
        let docs = vec![ProcessedDocument {
            id: "a".into(),
            tokens: vec!["love".into(), "smile".into()],
        }];
        write_processed_jsonl(&p, &docs).unwrap();
        assert_eq!(
            std::fs::read_to_string(&p).unwrap(),
            "{\"id\":\"a\",\"tokens\":[\"love\",\"smile\"]}\n"
        );
        assert_eq!(read_processed_jsonl(&p).unwrap(), docs);
    }
}
