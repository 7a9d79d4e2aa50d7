//! Embedding tables, annotated corpora and synthetic dataset generation.
//!
//! Embedding files use the plain-text interchange layout: a `"V n"` header
//! followed by `V` lines of `token f_1 .. f_n`. Corpora are one JSON record
//! per line with keys `tokens` (or `vectors` for pre-embedded payloads),
//! optional `rationale` and `label`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use indexmap::IndexMap;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm, normalize};
use crate::rng::{standard_normal, substream};

/// Vectors with a norm below this are rejected at ingestion; cosine
/// similarity is undefined for them.
pub const EPS_NORM: f64 = 1e-12;

/// Token string to dense vector map. Entry order is insertion order, so
/// files round-trip byte-identically.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    entries: IndexMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be >= 1".into()));
        }
        Ok(EmbeddingTable {
            dim,
            entries: IndexMap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Inserts a token vector, rejecting duplicates, wrong dimensions and
    /// near-zero vectors.
    pub fn insert(&mut self, token: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        let token = token.into();
        if vector.len() != self.dim {
            return Err(Error::Dimension(format!(
                "token '{}' has {} components, table dimension is {}",
                token,
                vector.len(),
                self.dim
            )));
        }
        if norm(&vector) < EPS_NORM {
            return Err(Error::Numeric(format!(
                "token '{token}' has a near-zero vector; cosine similarity would be undefined"
            )));
        }
        if self.entries.contains_key(&token) {
            return Err(Error::Config(format!("duplicate token '{token}'")));
        }
        self.entries.insert(token, vector);
        Ok(())
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.entries.get(token).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }
}

/// One classified input: resolved token vectors, aligned rationale flags and
/// a label. `rationale[j] == 1` marks token `j` as annotator-relevant.
#[derive(Clone, Debug, PartialEq)]
pub struct Document {
    pub tokens: Vec<String>,
    pub vectors: Vec<Vec<f64>>,
    pub rationale: Vec<u8>,
    pub label: usize,
}

impl Document {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn has_annotations(&self) -> bool {
        self.rationale.iter().any(|&r| r != 0)
    }
}

/// A labelled document collection.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub num_classes: usize,
    /// Class index used for F1 reporting.
    pub positive_class: Option<usize>,
    pub provenance: String,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// Document count per class label.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for d in &self.documents {
            counts[d.label] += 1;
        }
        counts
    }
}

/// Counters produced while loading a corpus.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct IngestReport {
    pub records_read: usize,
    pub records_rejected: usize,
    pub oov_dropped: usize,
    pub empty_documents: usize,
    /// (1-based line, reason) for each rejected record.
    pub rejections: Vec<(usize, String)>,
}

/// Loads a `"V n"`-headed embedding file.
pub fn load_embedding_table(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let file = File::open(path.as_ref())?;
    let mut lines = BufReader::new(file).lines();

    let header = lines
        .next()
        .ok_or_else(|| Error::parse(1, "missing header line"))??;
    let mut parts = header.split_whitespace();
    let vocab: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::parse(1, format!("malformed header '{header}'")))?;
    let dim: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::parse(1, format!("malformed header '{header}'")))?;
    if parts.next().is_some() {
        return Err(Error::parse(1, format!("malformed header '{header}'")));
    }

    let mut table =
        EmbeddingTable::new(dim).map_err(|_| Error::parse(1, "dimension must be >= 1"))?;
    let mut lineno = 1;
    for line in lines {
        let line = line?;
        lineno += 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let token = fields.next().unwrap();
        let vector: Vec<f64> = fields
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| Error::parse(lineno, format!("bad float '{s}'")))
            })
            .collect::<Result<_>>()?;
        if vector.len() != dim {
            return Err(Error::parse(
                lineno,
                format!("expected {dim} components, got {}", vector.len()),
            ));
        }
        if table.get(token).is_some() {
            return Err(Error::parse(lineno, format!("duplicate token '{token}'")));
        }
        table.insert(token, vector).map_err(|e| match e {
            Error::Numeric(msg) => Error::parse(lineno, msg),
            other => other,
        })?;
    }

    if table.len() != vocab {
        return Err(Error::parse(
            lineno,
            format!(
                "header declared {vocab} tokens, file contains {}",
                table.len()
            ),
        ));
    }
    Ok(table)
}

/// Writes a table in the same layout `load_embedding_table` reads.
pub fn write_embedding_table(table: &EmbeddingTable, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    writeln!(out, "{} {}", table.len(), table.dim())?;
    for (token, vector) in table.iter() {
        if token.chars().any(char::is_whitespace) || token.is_empty() {
            return Err(Error::Config(format!(
                "token '{token}' cannot be written: empty or contains whitespace"
            )));
        }
        write!(out, "{token}")?;
        for v in vector {
            write!(out, " {v}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct RawRecord {
    tokens: Option<Vec<String>>,
    vectors: Option<Vec<Vec<f64>>>,
    rationale: Option<Vec<u8>>,
    label: i64,
}

#[derive(Serialize)]
struct OutRecord<'a> {
    tokens: &'a [String],
    rationale: &'a [u8],
    label: usize,
}

/// Loads a one-record-per-line corpus. Tokens absent from the table are
/// dropped together with their rationale flags; malformed records are
/// rejected and counted rather than aborting the load.
pub fn load_corpus(
    path: impl AsRef<Path>,
    table: &EmbeddingTable,
    num_classes: usize,
) -> Result<(Corpus, IngestReport)> {
    if num_classes < 2 {
        return Err(Error::Config("num_classes must be >= 2".into()));
    }
    let file = File::open(path.as_ref())?;
    let reader = BufReader::new(file);

    let mut report = IngestReport::default();
    let mut documents = Vec::new();

    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        report.records_read += 1;
        match parse_record(&line, table, num_classes, &mut report) {
            Ok(doc) => {
                if doc.is_empty() {
                    report.empty_documents += 1;
                }
                documents.push(doc);
            }
            Err(reason) => {
                report.records_rejected += 1;
                report.rejections.push((lineno, reason));
            }
        }
    }

    let corpus = Corpus {
        documents,
        num_classes,
        positive_class: None,
        provenance: format!("loaded from {}", path.as_ref().display()),
    };
    Ok((corpus, report))
}

fn parse_record(
    line: &str,
    table: &EmbeddingTable,
    num_classes: usize,
    report: &mut IngestReport,
) -> std::result::Result<Document, String> {
    let raw: RawRecord =
        serde_json::from_str(line).map_err(|e| format!("unparseable record: {e}"))?;

    if raw.label < 0 || raw.label as usize >= num_classes {
        return Err(format!(
            "label {} out of range for {num_classes} classes",
            raw.label
        ));
    }
    let label = raw.label as usize;

    if let Some(vectors) = raw.vectors {
        // Pre-embedded payload: one vector per occurrence, no OOV handling.
        let count = vectors.len();
        let tokens = match raw.tokens {
            Some(t) if t.len() != count => {
                return Err(format!(
                    "tokens length {} does not match vectors length {count}",
                    t.len()
                ))
            }
            Some(t) => t,
            None => vec![String::new(); count],
        };
        let rationale = match raw.rationale {
            Some(r) if r.len() != count => {
                return Err(format!(
                    "rationale length {} does not match vectors length {count}",
                    r.len()
                ))
            }
            Some(r) => r,
            None => vec![0; count],
        };
        if rationale.iter().any(|&r| r > 1) {
            return Err("rationale entries must be 0 or 1".into());
        }
        for v in &vectors {
            if v.len() != table.dim() {
                return Err(format!(
                    "vector has {} components, expected {}",
                    v.len(),
                    table.dim()
                ));
            }
            if norm(v) < EPS_NORM {
                return Err("near-zero vector".into());
            }
        }
        return Ok(Document {
            tokens,
            vectors,
            rationale,
            label,
        });
    }

    let tokens_in = raw
        .tokens
        .ok_or_else(|| "record has neither 'tokens' nor 'vectors'".to_string())?;
    let rationale_in = match raw.rationale {
        Some(r) if r.len() != tokens_in.len() => {
            return Err(format!(
                "rationale length {} does not match token length {}",
                r.len(),
                tokens_in.len()
            ))
        }
        Some(r) => r,
        None => vec![0; tokens_in.len()],
    };
    if rationale_in.iter().any(|&r| r > 1) {
        return Err("rationale entries must be 0 or 1".into());
    }

    let mut tokens = Vec::new();
    let mut vectors = Vec::new();
    let mut rationale = Vec::new();
    for (token, &flag) in tokens_in.iter().zip(&rationale_in) {
        match table.get(token) {
            Some(v) => {
                tokens.push(token.clone());
                vectors.push(v.to_vec());
                rationale.push(flag);
            }
            None => report.oov_dropped += 1,
        }
    }

    Ok(Document {
        tokens,
        vectors,
        rationale,
        label,
    })
}

/// Writes a corpus as one JSON record per line (tokens, rationale, label).
pub fn write_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    for doc in &corpus.documents {
        let record = OutRecord {
            tokens: &doc.tokens,
            rationale: &doc.rationale,
            label: doc.label,
        };
        serde_json::to_writer(&mut out, &record)
            .map_err(|e| Error::Config(format!("serialize record: {e}")))?;
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// Parameters of the planted-concept synthetic task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub dim: usize,
    pub num_classes: usize,
    /// Planted concept tokens per class, each a random unit direction.
    pub concepts_per_class: usize,
    /// Size of the shared noise-token pool.
    pub noise_tokens: usize,
    pub docs_per_class: usize,
    pub tokens_per_doc: usize,
    /// Probability that a position carries a planted token of the
    /// document's class.
    pub planted_rate: f64,
    /// Probability that a planted token is rationale-flagged.
    pub rationale_rate: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            dim: 16,
            num_classes: 2,
            concepts_per_class: 2,
            noise_tokens: 20,
            docs_per_class: 50,
            tokens_per_doc: 10,
            planted_rate: 0.2,
            rationale_rate: 1.0,
        }
    }
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config(
                "synthetic spec needs at least 2 classes".into(),
            ));
        }
        if self.dim == 0 {
            return Err(Error::Config("synthetic spec needs dim >= 1".into()));
        }
        if self.concepts_per_class == 0 || self.noise_tokens == 0 {
            return Err(Error::Config(
                "synthetic spec needs at least one concept and one noise token".into(),
            ));
        }
        if self.docs_per_class == 0 || self.tokens_per_doc == 0 {
            return Err(Error::Config(
                "synthetic spec needs at least one document and one token per document".into(),
            ));
        }
        for (name, rate) in [
            ("planted_rate", self.planted_rate),
            ("rationale_rate", self.rationale_rate),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        Ok(())
    }

    /// Name of the `i`-th planted token of class `c`.
    pub fn concept_token(c: usize, i: usize) -> String {
        format!("concept_c{c}_{i}")
    }
}

/// Generates a desk-scale planted-concept dataset. Pure function of
/// (spec, seed): every document of class `c` contains at least one planted
/// token of class `c` whenever `planted_rate > 0`, and rationale flags are
/// set only on planted tokens.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<(EmbeddingTable, Corpus)> {
    spec.validate()?;

    let mut vocab_rng = substream(seed, "synth-vocab");
    let mut table = EmbeddingTable::new(spec.dim)?;
    let mut concepts: Vec<Vec<String>> = Vec::with_capacity(spec.num_classes);
    for c in 0..spec.num_classes {
        let mut class_tokens = Vec::with_capacity(spec.concepts_per_class);
        for i in 0..spec.concepts_per_class {
            let token = SyntheticSpec::concept_token(c, i);
            table.insert(&token, random_unit(spec.dim, &mut vocab_rng))?;
            class_tokens.push(token);
        }
        concepts.push(class_tokens);
    }
    let mut noise = Vec::with_capacity(spec.noise_tokens);
    for i in 0..spec.noise_tokens {
        let token = format!("noise_{i}");
        table.insert(&token, random_unit(spec.dim, &mut vocab_rng))?;
        noise.push(token);
    }

    let mut doc_rng = substream(seed, "synth-docs");
    let mut documents = Vec::with_capacity(spec.num_classes * spec.docs_per_class);
    for (c, class_concepts) in concepts.iter().enumerate() {
        for _ in 0..spec.docs_per_class {
            let mut tokens = Vec::with_capacity(spec.tokens_per_doc);
            let mut planted = Vec::with_capacity(spec.tokens_per_doc);
            for _ in 0..spec.tokens_per_doc {
                if doc_rng.gen::<f64>() < spec.planted_rate {
                    let i = doc_rng.gen_range(0..spec.concepts_per_class);
                    tokens.push(class_concepts[i].clone());
                    planted.push(true);
                } else {
                    let i = doc_rng.gen_range(0..spec.noise_tokens);
                    tokens.push(noise[i].clone());
                    planted.push(false);
                }
            }
            if spec.planted_rate > 0.0 && !planted.iter().any(|&p| p) {
                let pos = doc_rng.gen_range(0..spec.tokens_per_doc);
                let i = doc_rng.gen_range(0..spec.concepts_per_class);
                tokens[pos] = class_concepts[i].clone();
                planted[pos] = true;
            }
            let rationale: Vec<u8> = planted
                .iter()
                .map(|&p| u8::from(p && doc_rng.gen::<f64>() < spec.rationale_rate))
                .collect();
            let vectors = tokens
                .iter()
                .map(|t| table.get(t).expect("generated token is in table").to_vec())
                .collect();
            documents.push(Document {
                tokens,
                vectors,
                rationale,
                label: c,
            });
        }
    }

    let corpus = Corpus {
        documents,
        num_classes: spec.num_classes,
        positive_class: Some(1),
        provenance: format!("synthetic seed={seed}"),
    };
    Ok((table, corpus))
}

fn random_unit(dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..dim).map(|_| standard_normal(rng)).collect();
        if norm(&v) > EPS_NORM {
            normalize(&mut v);
            return v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn tiny_table() -> EmbeddingTable {
        let mut t = EmbeddingTable::new(3).unwrap();
        t.insert("alice", vec![1.0, 0.0, 0.0]).unwrap();
        t.insert("married", vec![0.0, 1.0, 0.0]).unwrap();
        t.insert("bob", vec![0.0, 0.0, 1.0]).unwrap();
        t
    }

    #[test]
    fn load_table_two_entries() {
        let f = write_temp("2 3\ncat 1 0 0\ndog 0 1 0\n");
        let table = load_embedding_table(f.path()).unwrap();
        assert_eq!(table.dim(), 3);
        assert_eq!(table.len(), 2);
        assert_eq!(table.get("cat"), Some(&[1.0, 0.0, 0.0][..]));
    }

    #[test]
    fn load_table_dimension_mismatch() {
        let f = write_temp("1 2\na 1 0 0\n");
        let err = load_embedding_table(f.path()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn load_table_duplicate_token() {
        let f = write_temp("2 2\na 1 0\na 0 1\n");
        let err = load_embedding_table(f.path()).unwrap_err();
        assert!(err.to_string().contains("duplicate token 'a'"), "{err}");
    }

    #[test]
    fn load_table_vocab_count_mismatch() {
        let f = write_temp("3 2\na 1 0\nb 0 1\n");
        let err = load_embedding_table(f.path()).unwrap_err();
        assert!(err.to_string().contains("declared 3"), "{err}");
    }

    #[test]
    fn load_table_malformed_header() {
        let f = write_temp("two 3\ncat 1 0 0\n");
        assert!(matches!(
            load_embedding_table(f.path()).unwrap_err(),
            Error::Parse { line: 1, .. }
        ));
    }

    #[test]
    fn load_table_rejects_zero_vector() {
        let f = write_temp("1 2\nz 0 0\n");
        let err = load_embedding_table(f.path()).unwrap_err();
        assert!(err.to_string().contains("near-zero"), "{err}");
    }

    #[test]
    fn load_corpus_direct_mapping() {
        let f = write_temp(r#"{"tokens":["alice","married","bob"],"rationale":[0,1,0],"label":1}"#);
        let (corpus, report) = load_corpus(f.path(), &tiny_table(), 2).unwrap();
        assert_eq!(corpus.len(), 1);
        assert_eq!(corpus.documents[0].vectors.len(), 3);
        assert_eq!(corpus.documents[0].rationale, vec![0, 1, 0]);
        assert_eq!(report.records_read, 1);
        assert_eq!(report.oov_dropped, 0);
    }

    #[test]
    fn load_corpus_drops_oov_with_flags() {
        let f = write_temp(r#"{"tokens":["alice","zzz"],"rationale":[0,1],"label":0}"#);
        let (corpus, report) = load_corpus(f.path(), &tiny_table(), 2).unwrap();
        assert_eq!(corpus.documents[0].tokens, vec!["alice"]);
        assert_eq!(corpus.documents[0].rationale, vec![0]);
        assert_eq!(report.oov_dropped, 1);
    }

    #[test]
    fn load_corpus_rejects_rationale_mismatch() {
        let f = write_temp(r#"{"tokens":["a"],"rationale":[0,1],"label":0}"#);
        let (corpus, report) = load_corpus(f.path(), &tiny_table(), 2).unwrap();
        assert_eq!(corpus.len(), 0);
        assert_eq!(report.records_rejected, 1);
        assert!(report.rejections[0].1.contains("rationale length"));
    }

    #[test]
    fn load_corpus_rejects_label_out_of_range() {
        let f = write_temp(r#"{"tokens":["alice"],"label":5}"#);
        let (_, report) = load_corpus(f.path(), &tiny_table(), 2).unwrap();
        assert_eq!(report.records_rejected, 1);
        assert!(report.rejections[0].1.contains("out of range"));
    }

    #[test]
    fn load_corpus_flags_emptied_documents() {
        let f = write_temp(r#"{"tokens":["zzz","qqq"],"label":0}"#);
        let (corpus, report) = load_corpus(f.path(), &tiny_table(), 2).unwrap();
        assert_eq!(corpus.len(), 1);
        assert!(corpus.documents[0].is_empty());
        assert_eq!(report.empty_documents, 1);
        assert_eq!(report.oov_dropped, 2);
    }

    #[test]
    fn load_corpus_inline_vectors() {
        let f =
            write_temp(r#"{"vectors":[[1.0,0.0,0.0],[0.0,2.0,0.0]],"rationale":[1,0],"label":1}"#);
        let (corpus, _) = load_corpus(f.path(), &tiny_table(), 2).unwrap();
        assert_eq!(corpus.documents[0].vectors.len(), 2);
        assert_eq!(corpus.documents[0].vectors[1], vec![0.0, 2.0, 0.0]);
    }

    #[test]
    fn oov_dropping_preserves_order() {
        let f = write_temp(r#"{"tokens":["bob","zzz","alice","qqq","married"],"label":0}"#);
        let (corpus, _) = load_corpus(f.path(), &tiny_table(), 2).unwrap();
        assert_eq!(corpus.documents[0].tokens, vec!["bob", "alice", "married"]);
    }

    #[test]
    fn synthetic_counts_match_spec() {
        let spec = SyntheticSpec::default();
        let (table, corpus) = generate_synthetic(&spec, 7).unwrap();
        assert_eq!(corpus.len(), 100);
        assert_eq!(corpus.class_counts(), vec![50, 50]);
        assert_eq!(table.len(), 2 * 2 + 20);
        for doc in &corpus.documents {
            assert_eq!(doc.len(), 10);
        }
    }

    #[test]
    fn synthetic_is_deterministic() {
        let spec = SyntheticSpec::default();
        let a = generate_synthetic(&spec, 7).unwrap();
        let b = generate_synthetic(&spec, 7).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        let c = generate_synthetic(&spec, 8).unwrap();
        assert_ne!(a.1, c.1);
    }

    #[test]
    fn synthetic_plants_at_least_one_concept_per_doc() {
        let spec = SyntheticSpec {
            planted_rate: 0.05,
            ..SyntheticSpec::default()
        };
        let (_, corpus) = generate_synthetic(&spec, 3).unwrap();
        for doc in &corpus.documents {
            let prefix = format!("concept_c{}_", doc.label);
            assert!(
                doc.tokens.iter().any(|t| t.starts_with(&prefix)),
                "doc of class {} lacks a planted token",
                doc.label
            );
        }
    }

    #[test]
    fn synthetic_rationale_only_on_planted_tokens() {
        let (_, corpus) = generate_synthetic(&SyntheticSpec::default(), 11).unwrap();
        for doc in &corpus.documents {
            for (token, &flag) in doc.tokens.iter().zip(&doc.rationale) {
                if flag == 1 {
                    assert!(token.starts_with("concept_"), "flag on noise token {token}");
                }
            }
        }
    }

    #[test]
    fn synthetic_rejects_invalid_spec() {
        let spec = SyntheticSpec {
            num_classes: 0,
            ..SyntheticSpec::default()
        };
        assert!(generate_synthetic(&spec, 1).is_err());
        let spec = SyntheticSpec {
            dim: 0,
            ..SyntheticSpec::default()
        };
        assert!(generate_synthetic(&spec, 1).is_err());
    }

    #[test]
    fn round_trip_table_and_corpus() {
        let (table, corpus) = generate_synthetic(&SyntheticSpec::default(), 42).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let table_path = dir.path().join("emb.txt");
        let corpus_path = dir.path().join("corpus.jsonl");
        write_embedding_table(&table, &table_path).unwrap();
        write_corpus(&corpus, &corpus_path).unwrap();

        let table2 = load_embedding_table(&table_path).unwrap();
        assert_eq!(table, table2);
        let (corpus2, report) = load_corpus(&corpus_path, &table2, 2).unwrap();
        assert_eq!(report.records_rejected, 0);
        assert_eq!(report.oov_dropped, 0);
        assert_eq!(corpus.documents, corpus2.documents);
        assert_eq!(corpus.num_classes, corpus2.num_classes);
    }
}
