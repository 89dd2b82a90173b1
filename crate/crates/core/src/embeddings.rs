//! Sentence embeddings supplied by an external provider.
//!
//! Two file encodings are accepted. TBEM is little-endian binary:
//!
//! ```text
//! "TBEM" | version: u32 = 1 | count: u32 | dim: u32
//! count × dim f32, row-major
//! count × (len: u16, UTF-8 id bytes)
//! ```
//!
//! The JSONL form has one `{"id": "...", "vector": [...]}` object per line.
//! Embedding servers speak `POST {endpoint}/embed` with `{"texts": [...]}`
//! and answer `{"dim": d, "vectors": [[...], ...]}`.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;
use std::time::Duration;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::corpus::RawDocument;
use crate::{Error, Result};

pub const TBEM_MAGIC: &[u8; 4] = b"TBEM";
pub const TBEM_VERSION: u32 = 1;
pub const ENDPOINT_ENV: &str = "TBERT_EMBED_ENDPOINT";

/// n×d matrix of f32 embeddings with one id per row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    ids: Vec<String>,
    data: Array2<f32>,
}

impl EmbeddingMatrix {
    pub fn new(ids: Vec<String>, data: Array2<f32>) -> Result<Self> {
        if ids.len() != data.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "{} ids for {} rows",
                ids.len(),
                data.nrows()
            )));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            let row = pos / data.ncols().max(1);
            return Err(Error::NonFinite(format!("embedding row {row} (`{}`)", ids[row])));
        }
        let mut seen = HashSet::with_capacity(ids.len());
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        Ok(EmbeddingMatrix { ids, data })
    }

    pub fn empty() -> Self {
        EmbeddingMatrix {
            ids: Vec::new(),
            data: Array2::zeros((0, 0)),
        }
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn data(&self) -> &Array2<f32> {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f32> {
        self.data.row(i)
    }

    /// Rows widened to f64 for downstream arithmetic.
    pub fn to_f64(&self) -> Array2<f64> {
        self.data.mapv(f64::from)
    }

    /// Rows reordered to follow `ids`. Every requested id must be present.
    pub fn select(&self, ids: &[String]) -> Result<EmbeddingMatrix> {
        let pos: HashMap<&str, usize> = self
            .ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let missing: Vec<String> = ids
            .iter()
            .filter(|id| !pos.contains_key(id.as_str()))
            .cloned()
            .collect();
        if !missing.is_empty() {
            return Err(Error::IdMismatch(missing));
        }
        let rows: Vec<usize> = ids.iter().map(|id| pos[id.as_str()]).collect();
        EmbeddingMatrix::new(ids.to_vec(), self.data.select(Axis(0), &rows))
    }
}

/// Writes the TBEM binary encoding.
pub fn write_tbem(path: &Path, m: &EmbeddingMatrix) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::from(e).at_path(path))?;
    let mut w = BufWriter::new(file);
    w.write_all(&tbem_bytes(m)?)?;
    w.flush()?;
    Ok(())
}

pub fn tbem_bytes(m: &EmbeddingMatrix) -> Result<Vec<u8>> {
    let count = u32::try_from(m.len()).map_err(|_| Error::Format("too many rows".into()))?;
    let dim = u32::try_from(m.dim()).map_err(|_| Error::Format("dimension too large".into()))?;
    let mut out = Vec::with_capacity(16 + m.data.len() * 4 + m.len() * 8);
    out.extend_from_slice(TBEM_MAGIC);
    out.extend_from_slice(&TBEM_VERSION.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    out.extend_from_slice(&dim.to_le_bytes());
    for x in m.data.iter() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    for id in &m.ids {
        let len = u16::try_from(id.len())
            .map_err(|_| Error::Format(format!("id longer than 65535 bytes: `{id}`")))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(id.as_bytes());
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format(format!(
                "truncated payload while reading {what} at byte {}",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

pub fn parse_tbem(bytes: &[u8]) -> Result<EmbeddingMatrix> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    if c.take(4, "magic")? != TBEM_MAGIC {
        return Err(Error::Format("magic mismatch (expected `TBEM`)".into()));
    }
    let version = c.u32("version")?;
    if version != TBEM_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let count = c.u32("count")? as usize;
    let dim = c.u32("dim")? as usize;
    let n_floats = count
        .checked_mul(dim)
        .ok_or_else(|| Error::Format("count × dim overflows".into()))?;
    let payload = c.take(n_floats.saturating_mul(4), "vector payload")?;
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
        .collect();
    let mut ids = Vec::with_capacity(count);
    for _ in 0..count {
        let len = u16::from_le_bytes(c.take(2, "id length")?.try_into().expect("2 bytes"));
        let raw = c.take(len as usize, "id bytes")?;
        let id = std::str::from_utf8(raw)
            .map_err(|_| Error::Format("id is not valid UTF-8".into()))?;
        ids.push(id.to_owned());
    }
    if c.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after id records",
            bytes.len() - c.pos
        )));
    }
    let data = Array2::from_shape_vec((count, dim), data).expect("length checked");
    EmbeddingMatrix::new(ids, data)
}

#[derive(Serialize, Deserialize)]
struct JsonlRow {
    id: String,
    vector: Vec<f32>,
}

pub fn write_jsonl(path: &Path, m: &EmbeddingMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::from(e).at_path(path))?);
    for (i, id) in m.ids.iter().enumerate() {
        let row = JsonlRow {
            id: id.clone(),
            vector: m.data.row(i).to_vec(),
        };
        serde_json::to_writer(&mut w, &row)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn parse_jsonl(reader: impl BufRead) -> Result<EmbeddingMatrix> {
    let mut ids = Vec::new();
    let mut flat = Vec::new();
    let mut dim = None;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: JsonlRow = serde_json::from_str(&line)?;
        match dim {
            None => dim = Some(row.vector.len()),
            Some(d) if d != row.vector.len() => {
                return Err(Error::Format(format!(
                    "line {}: vector has {} entries, expected {d}",
                    lineno + 1,
                    row.vector.len()
                )))
            }
            _ => {}
        }
        ids.push(row.id);
        flat.extend(row.vector);
    }
    let dim = dim.unwrap_or(0);
    let data = Array2::from_shape_vec((ids.len(), dim), flat).expect("rows checked");
    EmbeddingMatrix::new(ids, data)
}

/// Loads TBEM or JSONL embeddings, sniffing the format from the first bytes.
pub fn load_embeddings(path: &Path) -> Result<EmbeddingMatrix> {
    let bytes = std::fs::read(path).map_err(|e| Error::from(e).at_path(path))?;
    let first = bytes.iter().find(|b| !b.is_ascii_whitespace());
    let result = if bytes.starts_with(TBEM_MAGIC) {
        parse_tbem(&bytes)
    } else if first == Some(&b'{') {
        parse_jsonl(bytes.as_slice())
    } else if bytes.is_empty() {
        Err(Error::Format("empty file".into()))
    } else {
        Err(Error::Format("magic mismatch (expected `TBEM` or JSONL)".into()))
    };
    result.map_err(|e| e.at_path(path))
}

/// Divides every nonzero row by its Euclidean norm. Returns the indices of
/// rows that were all zero and therefore left untouched.
pub fn l2_normalize(m: &EmbeddingMatrix) -> (EmbeddingMatrix, Vec<usize>) {
    let mut data = m.data.clone();
    let mut zero_rows = Vec::new();
    for (i, mut row) in data.rows_mut().into_iter().enumerate() {
        let norm = row.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
        if norm == 0.0 {
            zero_rows.push(i);
        } else {
            row.mapv_inplace(|x| (f64::from(x) / norm) as f32);
        }
    }
    if !zero_rows.is_empty() {
        log::warn!("{} zero embedding rows left unnormalized", zero_rows.len());
    }
    (
        EmbeddingMatrix {
            ids: m.ids.clone(),
            data,
        },
        zero_rows,
    )
}

/// Column mean of a T×d matrix of token vectors.
pub fn mean_pool(token_vectors: &Array2<f64>) -> Result<Array1<f64>> {
    token_vectors
        .mean_axis(Axis(0))
        .ok_or_else(|| Error::InvalidParameter("cannot mean-pool zero token vectors".into()))
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    dim: usize,
    vectors: Vec<Vec<f32>>,
}

#[derive(Deserialize)]
struct ErrorBody {
    error: String,
}

/// Endpoint from `TBERT_EMBED_ENDPOINT`, if set.
pub fn default_endpoint() -> Option<String> {
    std::env::var(ENDPOINT_ENV).ok().filter(|s| !s.is_empty())
}

/// Blocking client for an embedding server.
pub struct EmbedClient {
    url: String,
    agent: ureq::Agent,
}

impl EmbedClient {
    pub fn new(endpoint: &str) -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(300)))
            .build();
        EmbedClient {
            url: format!("{}/embed", endpoint.trim_end_matches('/')),
            agent: config.into(),
        }
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<(usize, Vec<Vec<f32>>)> {
        let mut resp = self
            .agent
            .post(&self.url)
            .send_json(EmbedRequest { texts })
            .map_err(|e| Error::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Error::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            let message = serde_json::from_str::<ErrorBody>(&body)
                .map(|b| b.error)
                .unwrap_or(body);
            return Err(Error::HttpStatus { status, message });
        }
        let parsed: EmbedResponse = serde_json::from_str(&body)?;
        if parsed.vectors.len() != texts.len() {
            return Err(Error::CountMismatch {
                expected: texts.len(),
                found: parsed.vectors.len(),
            });
        }
        if let Some(v) = parsed.vectors.iter().find(|v| v.len() != parsed.dim) {
            return Err(Error::DimMismatch {
                expected: parsed.dim,
                found: v.len(),
            });
        }
        Ok((parsed.dim, parsed.vectors))
    }

    /// Embeds `texts` in batches of `batch_size`; rows follow input order.
    pub fn embed(&self, texts: &[&str], batch_size: usize) -> Result<Array2<f32>> {
        if batch_size == 0 {
            return Err(Error::InvalidParameter("batch_size must be at least 1".into()));
        }
        if texts.is_empty() {
            return Ok(Array2::zeros((0, 0)));
        }
        let mut dim = None;
        let mut flat = Vec::new();
        for chunk in texts.chunks(batch_size) {
            let (d, vectors) = self.embed_batch(chunk)?;
            match dim {
                None => dim = Some(d),
                Some(expected) if expected != d => {
                    return Err(Error::DimMismatch { expected, found: d })
                }
                _ => {}
            }
            flat.extend(vectors.into_iter().flatten());
        }
        let dim = dim.expect("at least one batch");
        Ok(Array2::from_shape_vec((texts.len(), dim), flat).expect("counts checked"))
    }
}

/// Fetches one embedding per document from `{endpoint}/embed`.
pub fn fetch_embeddings(
    endpoint: &str,
    docs: &[RawDocument],
    batch_size: usize,
) -> Result<EmbeddingMatrix> {
    let texts: Vec<&str> = docs.iter().map(|d| d.text.as_str()).collect();
    let data = EmbedClient::new(endpoint).embed(&texts, batch_size)?;
    if docs.is_empty() {
        return Ok(EmbeddingMatrix::empty());
    }
    EmbeddingMatrix::new(docs.iter().map(|d| d.id.clone()).collect(), data)
}
