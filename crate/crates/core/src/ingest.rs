//! Loading and validation of corpora, queries, relevance judgments, and
//! precomputed embeddings.
//!
//! Embeddings are always inputs here, never computed: the engine is
//! retriever-agnostic and treats encoder outputs as opaque vectors. Text
//! data uses JSONL (one object per line); embeddings additionally support
//! a compact binary format (`HIVEEMB1`) because JSON floats are slow and
//! bulky at scale.
//!
//! Binary embedding layout, all integers little-endian:
//!
//! ```text
//! magic    8 bytes   "HIVEEMB1"
//! dim      u32
//! count    u64
//! then per record:
//!   id_len u32
//!   id     id_len bytes of UTF-8
//!   values dim * f32
//! ```

use crate::error::{HiveError, Result};
use crate::vector_index::EmbeddingVector;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

/// One corpus passage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentRecord {
    #[serde(rename = "id")]
    pub doc_id: String,
    pub text: String,
}

/// One multimodal query: text plus the caption standing in for its image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    #[serde(rename = "id")]
    pub query_id: String,
    pub text: String,
    #[serde(default)]
    pub image_caption: String,
    #[serde(default, rename = "image", skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
    #[serde(default = "default_domain")]
    pub domain: String,
}

fn default_domain() -> String {
    "default".to_string()
}

/// Graded relevance judgments: (query_id, doc_id) -> grade >= 0.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QrelsTable {
    pub entries: BTreeMap<String, BTreeMap<String, u32>>,
}

impl QrelsTable {
    pub fn grade(&self, query_id: &str, doc_id: &str) -> u32 {
        self.entries
            .get(query_id)
            .and_then(|m| m.get(doc_id))
            .copied()
            .unwrap_or(0)
    }

    pub fn for_query(&self, query_id: &str) -> Option<&BTreeMap<String, u32>> {
        self.entries.get(query_id)
    }

    /// A query is evaluable when it has at least one positive grade.
    pub fn is_evaluable(&self, query_id: &str) -> bool {
        self.entries
            .get(query_id)
            .map(|m| m.values().any(|&g| g > 0))
            .unwrap_or(false)
    }

    pub fn insert(&mut self, query_id: String, doc_id: String, grade: u32) -> Option<u32> {
        self.entries
            .entry(query_id)
            .or_default()
            .insert(doc_id, grade)
    }
}

/// Whether a store holds document or query vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StoreKind {
    Document,
    Query,
}

/// Uniform-dimension id -> vector map preserving input order.
///
/// Query stores key entries by `<query_id>::<variant>`, where variant is
/// `original` or `compensatory:<hash>`; see [`query_variant_key`]. Document
/// stores key by plain doc id.
#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    kind: StoreKind,
    ids: Vec<String>,
    vectors: Vec<EmbeddingVector>,
    by_id: HashMap<String, usize>,
    dim: usize,
}

/// Canonical key for a query-embedding variant.
pub fn query_variant_key(query_id: &str, variant: &str) -> String {
    format!("{query_id}::{variant}")
}

impl EmbeddingStore {
    pub fn new(kind: StoreKind) -> Self {
        Self {
            kind,
            ids: Vec::new(),
            vectors: Vec::new(),
            by_id: HashMap::new(),
            dim: 0,
        }
    }

    pub fn kind(&self) -> StoreKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.ids.iter().map(String::as_str)
    }

    pub fn insert(&mut self, id: String, vector: EmbeddingVector) -> Result<()> {
        if !vector.is_finite() {
            return Err(HiveError::NonFiniteVector { id });
        }
        if self.ids.is_empty() {
            if vector.dim() == 0 {
                return Err(HiveError::DimensionMismatch {
                    expected: 1,
                    got: 0,
                    context: format!("embedding '{id}' is empty"),
                });
            }
            self.dim = vector.dim();
        } else if vector.dim() != self.dim {
            return Err(HiveError::DimensionMismatch {
                expected: self.dim,
                got: vector.dim(),
                context: format!("embedding '{id}'"),
            });
        }
        if self.by_id.contains_key(&id) {
            return Err(HiveError::DuplicateId {
                id,
                what: "embedding store".to_string(),
            });
        }
        self.by_id.insert(id.clone(), self.vectors.len());
        self.ids.push(id);
        self.vectors.push(vector);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&EmbeddingVector> {
        self.by_id.get(id).map(|&i| &self.vectors[i])
    }

    /// Look up a query variant, falling back to the bare id for `original`
    /// so plain third-party embedding files work unchanged.
    pub fn get_query_variant(&self, query_id: &str, variant: &str) -> Option<&EmbeddingVector> {
        self.get(&query_variant_key(query_id, variant)).or_else(|| {
            if variant == "original" {
                self.get(query_id)
            } else {
                None
            }
        })
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &EmbeddingVector)> {
        self.ids.iter().map(String::as_str).zip(self.vectors.iter())
    }
}

fn open_lines(path: &Path) -> Result<impl Iterator<Item = std::io::Result<String>>> {
    let file = std::fs::File::open(path)
        .map_err(|e| HiveError::io(format!("opening {}", path.display()), e))?;
    Ok(BufReader::new(file).lines())
}

/// Load a JSONL corpus with fields `id` and `text`.
pub fn load_corpus(path: &Path) -> Result<Vec<DocumentRecord>> {
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, line) in open_lines(path)?.enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| HiveError::io(format!("reading {}", path.display()), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: DocumentRecord =
            serde_json::from_str(&line).map_err(|e| HiveError::ParseLine {
                path: path.to_path_buf(),
                line: lineno,
                message: format!("bad document record: {e}"),
            })?;
        if doc.doc_id.is_empty() {
            return Err(HiveError::ParseLine {
                path: path.to_path_buf(),
                line: lineno,
                message: "empty document id".to_string(),
            });
        }
        if !seen.insert(doc.doc_id.clone()) {
            return Err(HiveError::DuplicateId {
                id: doc.doc_id,
                what: format!("corpus {}", path.display()),
            });
        }
        docs.push(doc);
    }
    if docs.is_empty() {
        log::warn!("corpus {} is empty", path.display());
    }
    Ok(docs)
}

/// Load a JSONL query set with fields `id`, `text`, and optional
/// `image_caption`, `image`, `domain`.
pub fn load_queries(path: &Path) -> Result<Vec<QueryRecord>> {
    let mut queries = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, line) in open_lines(path)?.enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| HiveError::io(format!("reading {}", path.display()), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let query: QueryRecord = serde_json::from_str(&line).map_err(|e| HiveError::ParseLine {
            path: path.to_path_buf(),
            line: lineno,
            message: format!("bad query record: {e}"),
        })?;
        if query.query_id.is_empty() {
            return Err(HiveError::ParseLine {
                path: path.to_path_buf(),
                line: lineno,
                message: "empty query id".to_string(),
            });
        }
        if !seen.insert(query.query_id.clone()) {
            return Err(HiveError::DuplicateId {
                id: query.query_id,
                what: format!("query set {}", path.display()),
            });
        }
        queries.push(query);
    }
    Ok(queries)
}

/// Load TSV qrels: `query_id<TAB>doc_id<TAB>grade`. Lines starting with `#`
/// are comments. A repeated (query, doc) pair overwrites the earlier grade
/// with a warning.
pub fn load_qrels(path: &Path) -> Result<QrelsTable> {
    let mut table = QrelsTable::default();
    for (lineno, line) in open_lines(path)?.enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| HiveError::io(format!("reading {}", path.display()), e))?;
        let trimmed = line.trim_end();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split('\t').collect();
        if fields.len() != 3 {
            return Err(HiveError::ParseLine {
                path: path.to_path_buf(),
                line: lineno,
                message: format!("expected 3 tab-separated columns, got {}", fields.len()),
            });
        }
        let grade: u32 = fields[2].parse().map_err(|_| HiveError::ParseLine {
            path: path.to_path_buf(),
            line: lineno,
            message: format!("grade '{}' is not a non-negative integer", fields[2]),
        })?;
        if let Some(old) = table.insert(fields[0].to_string(), fields[1].to_string(), grade) {
            log::warn!(
                "{}:{}: duplicate qrel ({}, {}); grade {} overwrites {}",
                path.display(),
                lineno,
                fields[0],
                fields[1],
                grade,
                old
            );
        }
    }
    Ok(table)
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonlEmbedding {
    id: String,
    vector: Vec<f32>,
}

const EMB_MAGIC: &[u8; 8] = b"HIVEEMB1";
const MAX_ID_BYTES: u32 = 64 * 1024;

/// Load embeddings from either JSONL (`{"id": ..., "vector": [...]}`) or the
/// binary `HIVEEMB1` format; the format is sniffed from the leading bytes.
pub fn load_embeddings(path: &Path, kind: StoreKind) -> Result<EmbeddingStore> {
    let file = std::fs::File::open(path)
        .map_err(|e| HiveError::io(format!("opening {}", path.display()), e))?;
    let mut reader = BufReader::new(file);
    let mut head = [0u8; 8];
    let n = read_up_to(&mut reader, &mut head)
        .map_err(|e| HiveError::io(format!("reading {}", path.display()), e))?;
    if n == 8 && &head == EMB_MAGIC {
        return read_embeddings_binary(reader, path, kind);
    }
    drop(reader);
    load_embeddings_jsonl(path, kind)
}

fn read_up_to<R: Read>(reader: &mut R, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        let n = reader.read(&mut buf[filled..])?;
        if n == 0 {
            break;
        }
        filled += n;
    }
    Ok(filled)
}

fn load_embeddings_jsonl(path: &Path, kind: StoreKind) -> Result<EmbeddingStore> {
    let mut store = EmbeddingStore::new(kind);
    for (lineno, line) in open_lines(path)?.enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| HiveError::io(format!("reading {}", path.display()), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: JsonlEmbedding =
            serde_json::from_str(&line).map_err(|e| HiveError::ParseLine {
                path: path.to_path_buf(),
                line: lineno,
                message: format!("bad embedding record: {e}"),
            })?;
        store.insert(record.id, EmbeddingVector::new(record.vector))?;
    }
    Ok(store)
}

fn read_embeddings_binary<R: Read>(
    mut reader: R,
    path: &Path,
    kind: StoreKind,
) -> Result<EmbeddingStore> {
    let truncated = |message: &str| HiveError::TruncatedPayload {
        path: path.to_path_buf(),
        message: message.to_string(),
    };

    let mut u32buf = [0u8; 4];
    let mut u64buf = [0u8; 8];
    reader
        .read_exact(&mut u32buf)
        .map_err(|_| truncated("missing dimension header"))?;
    let dim = u32::from_le_bytes(u32buf) as usize;
    reader
        .read_exact(&mut u64buf)
        .map_err(|_| truncated("missing count header"))?;
    let count = u64::from_le_bytes(u64buf);
    if dim == 0 {
        return Err(truncated("dimension 0 in header"));
    }

    let mut store = EmbeddingStore::new(kind);
    for i in 0..count {
        reader
            .read_exact(&mut u32buf)
            .map_err(|_| truncated(&format!("record {i}: missing id length")))?;
        let id_len = u32::from_le_bytes(u32buf);
        if id_len == 0 || id_len > MAX_ID_BYTES {
            return Err(truncated(&format!(
                "record {i}: implausible id length {id_len}"
            )));
        }
        let mut id_bytes = vec![0u8; id_len as usize];
        reader
            .read_exact(&mut id_bytes)
            .map_err(|_| truncated(&format!("record {i}: short id")))?;
        let id = String::from_utf8(id_bytes)
            .map_err(|_| truncated(&format!("record {i}: id is not UTF-8")))?;
        let mut values = vec![0f32; dim];
        for value in values.iter_mut() {
            reader
                .read_exact(&mut u32buf)
                .map_err(|_| truncated(&format!("record {i} ('{id}'): short vector")))?;
            *value = f32::from_le_bytes(u32buf);
        }
        store.insert(id, EmbeddingVector::new(values))?;
    }
    Ok(store)
}

/// Write a store in the binary `HIVEEMB1` format, preserving entry order.
pub fn save_embeddings_binary(store: &EmbeddingStore, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)
        .map_err(|e| HiveError::io(format!("creating {}", path.display()), e))?;
    let mut writer = BufWriter::new(file);
    let io_err = |e| HiveError::io(format!("writing {}", path.display()), e);
    writer.write_all(EMB_MAGIC).map_err(io_err)?;
    writer
        .write_all(&(store.dim() as u32).to_le_bytes())
        .map_err(io_err)?;
    writer
        .write_all(&(store.len() as u64).to_le_bytes())
        .map_err(io_err)?;
    for (id, vector) in store.entries() {
        writer
            .write_all(&(id.len() as u32).to_le_bytes())
            .map_err(io_err)?;
        writer.write_all(id.as_bytes()).map_err(io_err)?;
        for &value in &vector.values {
            writer.write_all(&value.to_le_bytes()).map_err(io_err)?;
        }
    }
    writer.flush().map_err(io_err)
}

/// Write a store as JSONL, preserving entry order.
pub fn save_embeddings_jsonl(store: &EmbeddingStore, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)
        .map_err(|e| HiveError::io(format!("creating {}", path.display()), e))?;
    let mut writer = BufWriter::new(file);
    for (id, vector) in store.entries() {
        let record = JsonlEmbedding {
            id: id.to_string(),
            vector: vector.values.clone(),
        };
        let line = serde_json::to_string(&record).map_err(|e| HiveError::Json {
            context: format!("serializing embedding '{id}'"),
            source: e,
        })?;
        writeln!(writer, "{line}")
            .map_err(|e| HiveError::io(format!("writing {}", path.display()), e))?;
    }
    writer
        .flush()
        .map_err(|e| HiveError::io(format!("writing {}", path.display()), e))
}

/// One referential-integrity violation found by [`validate_references`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub kind: String,
    pub detail: String,
}

/// Cross-check qrels against the corpus and query set. Violations are
/// reported, never silently dropped.
pub fn validate_references(
    docs: &[DocumentRecord],
    queries: &[QueryRecord],
    qrels: &QrelsTable,
) -> Vec<Violation> {
    let doc_ids: HashSet<&str> = docs.iter().map(|d| d.doc_id.as_str()).collect();
    let query_ids: HashSet<&str> = queries.iter().map(|q| q.query_id.as_str()).collect();
    let mut violations = Vec::new();
    for (query_id, docs_for_query) in &qrels.entries {
        if !query_ids.contains(query_id.as_str()) {
            violations.push(Violation {
                kind: "unknown_query".to_string(),
                detail: format!("qrels reference query '{query_id}' not in the query set"),
            });
        }
        for doc_id in docs_for_query.keys() {
            if !doc_ids.contains(doc_id.as_str()) {
                violations.push(Violation {
                    kind: "unknown_doc".to_string(),
                    detail: format!(
                        "qrels ({query_id}, {doc_id}) references a doc not in the corpus"
                    ),
                });
            }
        }
    }
    violations
}
