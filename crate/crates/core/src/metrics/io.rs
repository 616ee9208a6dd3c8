//! Readers for embedding exports and ranking runs.
//!
//! - embeddings: one JSON object per line, `{"id": ..., "length": ..., "vector": [...]}`
//! - runs: `qid Q0 docid rank score tag`
//! - qrels: `qid 0 docid rel`, relevant when `rel > 0`
//! - doc lengths: `docid length`
//!
//! Blank lines are skipped. Errors carry 1-based line numbers.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::BufRead;
use std::str::FromStr;

use super::{EmbeddingRecord, MetricsError, RankedDoc};

fn lines<R: BufRead>(reader: R) -> impl Iterator<Item = Result<(usize, String), MetricsError>> {
    reader
        .lines()
        .enumerate()
        .map(|(i, l)| l.map(|l| (i + 1, l)).map_err(MetricsError::from))
        .filter(|r| !matches!(r, Ok((_, l)) if l.trim().is_empty()))
}

fn parse_err(line: usize, message: impl Into<String>) -> MetricsError {
    MetricsError::Parse {
        line,
        message: message.into(),
    }
}

fn field<T: FromStr>(line: usize, name: &str, raw: &str) -> Result<T, MetricsError> {
    raw.parse().map_err(|_| parse_err(line, format!("cannot parse {name} from {raw:?}")))
}

fn columns(line: usize, text: &str, expected: usize, format: &str) -> Result<Vec<String>, MetricsError> {
    let cols: Vec<String> = text.split_whitespace().map(str::to_string).collect();
    if cols.len() != expected {
        return Err(parse_err(
            line,
            format!("expected {expected} fields ({format}), found {}", cols.len()),
        ));
    }
    Ok(cols)
}

/// Reads JSON-lines embeddings, rejecting any record whose dimension differs
/// from the first one.
pub fn read_embeddings<R: BufRead>(reader: R) -> Result<Vec<EmbeddingRecord>, MetricsError> {
    let mut records: Vec<EmbeddingRecord> = Vec::new();
    for item in lines(reader) {
        let (line, text) = item?;
        let record: EmbeddingRecord =
            serde_json::from_str(&text).map_err(|e| parse_err(line, format!("malformed JSON: {e}")))?;
        record.validate()?;
        if let Some(first) = records.first() {
            if first.vector.len() != record.vector.len() {
                return Err(MetricsError::DimensionMismatch {
                    id: record.id,
                    expected: first.vector.len(),
                    found: record.vector.len(),
                });
            }
        }
        records.push(record);
    }
    Ok(records)
}

pub fn read_run<R: BufRead>(reader: R) -> Result<BTreeMap<String, Vec<RankedDoc>>, MetricsError> {
    let mut out: BTreeMap<String, Vec<RankedDoc>> = BTreeMap::new();
    for item in lines(reader) {
        let (line, text) = item?;
        let cols = columns(line, &text, 6, "qid Q0 docid rank score tag")?;
        let doc = RankedDoc {
            doc_id: cols[2].clone(),
            rank: field(line, "rank", &cols[3])?,
            score: field(line, "score", &cols[4])?,
        };
        out.entry(cols[0].clone()).or_default().push(doc);
    }
    Ok(out)
}

pub fn read_qrels<R: BufRead>(reader: R) -> Result<BTreeMap<String, BTreeSet<String>>, MetricsError> {
    let mut out: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for item in lines(reader) {
        let (line, text) = item?;
        let cols = columns(line, &text, 4, "qid 0 docid rel")?;
        let rel: i64 = field(line, "relevance", &cols[3])?;
        if rel > 0 {
            out.entry(cols[0].clone()).or_default().insert(cols[2].clone());
        }
    }
    Ok(out)
}

pub fn read_doc_lengths<R: BufRead>(reader: R) -> Result<HashMap<String, usize>, MetricsError> {
    let mut out = HashMap::new();
    for item in lines(reader) {
        let (line, text) = item?;
        let cols = columns(line, &text, 2, "docid length")?;
        out.insert(cols[0].clone(), field(line, "length", &cols[1])?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embeddings_parse_and_report_lines() {
        let ok = "{\"id\":\"a\",\"length\":3,\"vector\":[1,2]}\n\n{\"id\":\"b\",\"length\":4,\"vector\":[0.5,-1]}\n";
        let recs = read_embeddings(ok.as_bytes()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[1].vector, vec![0.5, -1.0]);

        let bad = "{\"id\":\"a\",\"length\":3,\"vector\":[1,2]}\n{\"id\": \"b\", \n";
        match read_embeddings(bad.as_bytes()) {
            Err(MetricsError::Parse { line: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }

        let mismatch = "{\"id\":\"a\",\"length\":3,\"vector\":[1,2]}\n{\"id\":\"b\",\"length\":3,\"vector\":[1]}\n";
        match read_embeddings(mismatch.as_bytes()) {
            Err(MetricsError::DimensionMismatch { id, .. }) => assert_eq!(id, "b"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn run_qrels_lengths() {
        let run = read_run("q1 Q0 d2 2 0.5 sys\nq1 Q0 d1 1 0.9 sys\n".as_bytes()).unwrap();
        assert_eq!(run["q1"].len(), 2);
        let qrels = read_qrels("q1 0 d1 1\nq1 0 d2 0\n".as_bytes()).unwrap();
        assert_eq!(qrels["q1"].len(), 1);
        let lengths = read_doc_lengths("d1 120\nd2 7\n".as_bytes()).unwrap();
        assert_eq!(lengths["d2"], 7);

        match read_run("q1 Q0 d2 two 0.5 sys\n".as_bytes()) {
            Err(MetricsError::Parse { line: 1, message }) => assert!(message.contains("rank")),
            other => panic!("unexpected {other:?}"),
        }
        assert!(read_doc_lengths("d1\n".as_bytes()).is_err());
    }
}
