//! Frozen text embedding providers and cosine similarity.
//!
//! An [`EmbeddingSpace`] maps text to unit vectors in `R^d` and never changes
//! after construction. Three providers are supported:
//!
//! - word-vector files (word2vec-style text format) pooled by unweighted
//!   token mean,
//! - sentence caches (line-delimited JSON records) looked up verbatim,
//! - a hash-synthetic space that derives a deterministic unit vector from the
//!   token multiset, so the full pipeline runs without any data files.
//!
//! Vectors are stored and pooled in `f64`; rewards downstream stay well below
//! any tolerance of interest.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::Rng;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("duplicate entry '{text}' at line {line} with a different vector")]
    DuplicateConflict { line: usize, text: String },
    #[error("embedding file contains no vectors")]
    EmptySpace,
    #[error("no embedding stored for text: {text:?}")]
    MissingEmbedding { text: String },
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("dimension mismatch: {lhs} vs {rhs}")]
    DimensionMismatch { lhs: usize, rhs: usize },
}

pub type Result<T> = std::result::Result<T, EmbeddingError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProviderKind {
    WordVectorFile,
    SentenceCache,
    HashSynthetic,
}

impl fmt::Display for ProviderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ProviderKind::WordVectorFile => "word-vector-file",
            ProviderKind::SentenceCache => "sentence-cache",
            ProviderKind::HashSynthetic => "hash-synthetic",
        };
        f.write_str(s)
    }
}

/// An L2-normalized sentence vector, or the all-zero fallback for text with
/// no known tokens (which scores cosine 0 against everything).
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceVector {
    values: Vec<f64>,
    normalized: bool,
}

impl SentenceVector {
    /// Normalizes `values` to unit length. Falls back to the zero vector if
    /// the input has zero norm.
    pub fn unit(mut values: Vec<f64>) -> Self {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Self {
                values,
                normalized: false,
            };
        }
        for v in &mut values {
            *v /= norm;
        }
        Self {
            values,
            normalized: true,
        }
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            values: vec![0.0; dim],
            normalized: false,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }
}

/// Cosine similarity of two (normalized or zero-fallback) sentence vectors.
pub fn cosine(a: &SentenceVector, b: &SentenceVector) -> Result<f64> {
    if a.dimension() != b.dimension() {
        return Err(EmbeddingError::DimensionMismatch {
            lhs: a.dimension(),
            rhs: b.dimension(),
        });
    }
    // Identical vectors score exactly 1 (or 0 for the zero fallback), so
    // self-similarity is not subject to rounding.
    if a.values == b.values {
        return Ok(if a.normalized { 1.0 } else { 0.0 });
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    Ok(dot.clamp(-1.0, 1.0))
}

#[derive(Debug)]
enum Provider {
    /// Token table in insertion order, so writing a loaded space reproduces
    /// the source file.
    WordVectors {
        tokens: Vec<String>,
        index: HashMap<String, usize>,
        vectors: Vec<Vec<f64>>,
        had_header: bool,
    },
    SentenceCache {
        texts: Vec<String>,
        index: HashMap<String, usize>,
        vectors: Vec<Vec<f64>>,
    },
    HashSynthetic {
        seed: u64,
    },
}

/// Frozen map from text to unit vectors in `R^d`.
#[derive(Debug)]
pub struct EmbeddingSpace {
    dimension: usize,
    provider: Provider,
}

impl EmbeddingSpace {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn provider_kind(&self) -> ProviderKind {
        match self.provider {
            Provider::WordVectors { .. } => ProviderKind::WordVectorFile,
            Provider::SentenceCache { .. } => ProviderKind::SentenceCache,
            Provider::HashSynthetic { .. } => ProviderKind::HashSynthetic,
        }
    }

    /// Number of stored entries (0 for the hash-synthetic provider).
    pub fn len(&self) -> usize {
        match &self.provider {
            Provider::WordVectors { tokens, .. } => tokens.len(),
            Provider::SentenceCache { texts, .. } => texts.len(),
            Provider::HashSynthetic { .. } => 0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Deterministic test-double space: every token maps to a pseudo-random
    /// unit vector derived from `seed` and the token bytes.
    pub fn hash_synthetic(dimension: usize, seed: u64) -> Self {
        Self {
            dimension,
            provider: Provider::HashSynthetic { seed },
        }
    }

    /// Builds a word-vector space from in-memory pairs.
    pub fn from_word_vectors(entries: Vec<(String, Vec<f64>)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(EmbeddingError::EmptySpace);
        }
        let dimension = entries[0].1.len();
        let mut tokens = Vec::with_capacity(entries.len());
        let mut index = HashMap::new();
        let mut vectors = Vec::with_capacity(entries.len());
        for (line, (token, vector)) in entries.into_iter().enumerate() {
            if vector.len() != dimension {
                return Err(EmbeddingError::Parse {
                    line: line + 1,
                    msg: format!(
                        "vector for '{token}' has {} values, expected {dimension}",
                        vector.len()
                    ),
                });
            }
            match index.get(&token) {
                Some(&at) if vectors[at] != vector => {
                    return Err(EmbeddingError::DuplicateConflict {
                        line: line + 1,
                        text: token,
                    });
                }
                Some(_) => continue,
                None => {
                    index.insert(token.clone(), tokens.len());
                    tokens.push(token);
                    vectors.push(vector);
                }
            }
        }
        Ok(Self {
            dimension,
            provider: Provider::WordVectors {
                tokens,
                index,
                vectors,
                had_header: true,
            },
        })
    }

    /// Loads a word2vec-style text file: an optional `count dim` header line,
    /// then one `token v1 ... vd` row per line.
    pub fn load_word_vectors(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let content = fs::read_to_string(path).map_err(|source| EmbeddingError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse_word_vectors(&content)
    }

    pub fn parse_word_vectors(content: &str) -> Result<Self> {
        let mut tokens: Vec<String> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut vectors: Vec<Vec<f64>> = Vec::new();
        let mut dimension: Option<usize> = None;
        let mut declared: Option<(usize, usize)> = None;
        let mut had_header = false;

        for (i, raw) in content.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim_end();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_ascii_whitespace().collect();
            if i == 0 && fields.len() == 2 {
                if let (Ok(count), Ok(dim)) =
                    (fields[0].parse::<usize>(), fields[1].parse::<usize>())
                {
                    declared = Some((count, dim));
                    dimension = Some(dim);
                    had_header = true;
                    continue;
                }
            }
            if fields.len() < 2 {
                return Err(EmbeddingError::Parse {
                    line: line_no,
                    msg: format!("expected 'token v1 ... vd', got {:?}", line),
                });
            }
            let token = fields[0].to_string();
            let values: Vec<f64> = fields[1..]
                .iter()
                .map(|f| {
                    f.parse::<f64>().map_err(|_| EmbeddingError::Parse {
                        line: line_no,
                        msg: format!("'{f}' is not a number"),
                    })
                })
                .collect::<Result<_>>()?;
            let dim = *dimension.get_or_insert(values.len());
            if values.len() != dim {
                return Err(EmbeddingError::Parse {
                    line: line_no,
                    msg: format!("row has {} values, expected {}", values.len(), dim),
                });
            }
            match index.get(&token) {
                Some(&at) if vectors[at] != values => {
                    return Err(EmbeddingError::DuplicateConflict {
                        line: line_no,
                        text: token,
                    });
                }
                Some(_) => {}
                None => {
                    index.insert(token.clone(), tokens.len());
                    tokens.push(token);
                    vectors.push(values);
                }
            }
        }
        if tokens.is_empty() {
            return Err(EmbeddingError::EmptySpace);
        }
        if let Some((count, _)) = declared {
            if count != tokens.len() {
                return Err(EmbeddingError::Parse {
                    line: 1,
                    msg: format!("header declares {count} rows, file has {}", tokens.len()),
                });
            }
        }
        Ok(Self {
            dimension: dimension.unwrap(),
            provider: Provider::WordVectors {
                tokens,
                index,
                vectors,
                had_header,
            },
        })
    }

    /// Writes a word-vector space back to the text format, preserving entry
    /// order and header presence, so a loaded file round-trips up to float
    /// formatting.
    pub fn write_word_vectors(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io_err = |source| EmbeddingError::Io {
            path: path.display().to_string(),
            source,
        };
        match &self.provider {
            Provider::WordVectors {
                tokens,
                vectors,
                had_header,
                ..
            } => {
                let mut out = String::new();
                if *had_header {
                    out.push_str(&format!("{} {}\n", tokens.len(), self.dimension));
                }
                for (token, vec) in tokens.iter().zip(vectors) {
                    out.push_str(token);
                    for v in vec {
                        out.push(' ');
                        out.push_str(&v.to_string());
                    }
                    out.push('\n');
                }
                fs::write(path, out).map_err(io_err)
            }
            _ => Err(EmbeddingError::Parse {
                line: 0,
                msg: "write_word_vectors requires a word-vector space".into(),
            }),
        }
    }

    /// Loads a sentence cache: one JSON record per line with fields `text`
    /// and `vector`.
    pub fn load_sentence_cache(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let content = fs::read_to_string(path).map_err(|source| EmbeddingError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse_sentence_cache(&content)
    }

    pub fn parse_sentence_cache(content: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Record {
            text: String,
            vector: Vec<f64>,
        }
        let mut texts: Vec<String> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut vectors: Vec<Vec<f64>> = Vec::new();
        let mut dimension: Option<usize> = None;
        for (i, raw) in content.lines().enumerate() {
            let line_no = i + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let rec: Record = serde_json::from_str(raw).map_err(|e| EmbeddingError::Parse {
                line: line_no,
                msg: e.to_string(),
            })?;
            let dim = *dimension.get_or_insert(rec.vector.len());
            if rec.vector.len() != dim {
                return Err(EmbeddingError::Parse {
                    line: line_no,
                    msg: format!("vector has {} values, expected {}", rec.vector.len(), dim),
                });
            }
            match index.get(&rec.text) {
                Some(&at) if vectors[at] != rec.vector => {
                    return Err(EmbeddingError::DuplicateConflict {
                        line: line_no,
                        text: rec.text,
                    });
                }
                Some(_) => {}
                None => {
                    index.insert(rec.text.clone(), texts.len());
                    texts.push(rec.text);
                    vectors.push(rec.vector);
                }
            }
        }
        if texts.is_empty() {
            return Err(EmbeddingError::EmptySpace);
        }
        Ok(Self {
            dimension: dimension.unwrap(),
            provider: Provider::SentenceCache {
                texts,
                index,
                vectors,
            },
        })
    }

    /// Writes a sentence cache back to line-delimited JSON in entry order.
    pub fn write_sentence_cache(&self, path: impl AsRef<Path>) -> Result<()> {
        #[derive(Serialize)]
        struct Record<'a> {
            text: &'a str,
            vector: &'a [f64],
        }
        let path = path.as_ref();
        let io_err = |source| EmbeddingError::Io {
            path: path.display().to_string(),
            source,
        };
        match &self.provider {
            Provider::SentenceCache { texts, vectors, .. } => {
                let mut file = fs::File::create(path).map_err(io_err)?;
                for (text, vector) in texts.iter().zip(vectors) {
                    let rec = Record { text, vector };
                    let line = serde_json::to_string(&rec).expect("serializable record");
                    writeln!(file, "{line}").map_err(|source| EmbeddingError::Io {
                        path: path.display().to_string(),
                        source,
                    })?;
                }
                Ok(())
            }
            _ => Err(EmbeddingError::Parse {
                line: 0,
                msg: "write_sentence_cache requires a sentence-cache space".into(),
            }),
        }
    }

    /// Raw stored vector for a token or cached text, if present.
    pub fn stored_vector(&self, key: &str) -> Option<&[f64]> {
        match &self.provider {
            Provider::WordVectors { index, vectors, .. } => {
                index.get(key).map(|&i| vectors[i].as_slice())
            }
            Provider::SentenceCache { index, vectors, .. } => {
                index.get(key).map(|&i| vectors[i].as_slice())
            }
            Provider::HashSynthetic { .. } => None,
        }
    }

    /// Embeds text into a sentence vector.
    ///
    /// Word-vector provider: lowercase, strip punctuation, split on
    /// whitespace, mean the known token vectors, L2-normalize. Texts with no
    /// known tokens embed to the zero fallback. Sentence-cache provider:
    /// verbatim lookup, then L2-normalize. Hash-synthetic: deterministic unit
    /// vector from the token multiset.
    pub fn embed(&self, text: &str) -> Result<SentenceVector> {
        if text.trim().is_empty() {
            return Err(EmbeddingError::EmptyText);
        }
        match &self.provider {
            Provider::WordVectors { index, vectors, .. } => {
                let mut tokens = embed_tokenize(text);
                // Pool in sorted order so permuting the token multiset gives
                // a bitwise-identical vector.
                tokens.sort_unstable();
                let mut sum = vec![0.0; self.dimension];
                let mut known = 0usize;
                for tok in &tokens {
                    if let Some(&i) = index.get(tok.as_str()) {
                        for (s, v) in sum.iter_mut().zip(&vectors[i]) {
                            *s += v;
                        }
                        known += 1;
                    }
                }
                if known == 0 {
                    return Ok(SentenceVector::zero(self.dimension));
                }
                for s in &mut sum {
                    *s /= known as f64;
                }
                Ok(SentenceVector::unit(sum))
            }
            Provider::SentenceCache { index, vectors, .. } => match index.get(text) {
                Some(&i) => Ok(SentenceVector::unit(vectors[i].clone())),
                None => Err(EmbeddingError::MissingEmbedding {
                    text: text.to_string(),
                }),
            },
            Provider::HashSynthetic { seed } => {
                let mut tokens = embed_tokenize(text);
                tokens.sort_unstable();
                if tokens.is_empty() {
                    return Ok(SentenceVector::zero(self.dimension));
                }
                let mut sum = vec![0.0; self.dimension];
                for tok in &tokens {
                    let mut rng = Rng::new(seed ^ fnv1a(tok.as_bytes()));
                    for s in sum.iter_mut() {
                        *s += rng.normal();
                    }
                }
                for s in &mut sum {
                    *s /= tokens.len() as f64;
                }
                Ok(SentenceVector::unit(sum))
            }
        }
    }
}

/// Embedding-side tokenization: lowercase, keep alphanumerics and in-word
/// apostrophes, treat everything else as a separator. Decoupled from the
/// policy tokenizer on purpose.
pub fn embed_tokenize(text: &str) -> Vec<String> {
    let lowered = text.to_lowercase();
    let mut tokens = Vec::new();
    let mut cur = String::new();
    for ch in lowered.chars() {
        if ch.is_alphanumeric() || ch == '\'' {
            cur.push(ch);
        } else if !cur.is_empty() {
            tokens.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        tokens.push(cur);
    }
    // Trim apostrophes that were quoting rather than contracting.
    tokens
        .into_iter()
        .map(|t| t.trim_matches('\'').to_string())
        .filter(|t| !t.is_empty())
        .collect()
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_space() -> EmbeddingSpace {
        EmbeddingSpace::parse_word_vectors("2 3\nred 1 0 0\nblue 0 1 0").unwrap()
    }

    #[test]
    fn parses_header_and_rows() {
        let space = tiny_space();
        assert_eq!(space.dimension(), 3);
        assert_eq!(space.len(), 2);
        assert_eq!(space.provider_kind(), ProviderKind::WordVectorFile);
        assert_eq!(space.stored_vector("red").unwrap(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn parses_without_header() {
        let space = EmbeddingSpace::parse_word_vectors("red 1 0\nblue 0 1").unwrap();
        assert_eq!(space.dimension(), 2);
        assert_eq!(space.len(), 2);
    }

    #[test]
    fn rejects_inconsistent_row_width() {
        let err = EmbeddingSpace::parse_word_vectors("3 3\nred 1 0 0\nblue 0 1").unwrap_err();
        match err {
            EmbeddingError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected: {other}"),
        }
    }

    #[test]
    fn rejects_empty_file() {
        assert!(matches!(
            EmbeddingSpace::parse_word_vectors("").unwrap_err(),
            EmbeddingError::EmptySpace
        ));
    }

    #[test]
    fn rejects_header_count_mismatch() {
        let err = EmbeddingSpace::parse_word_vectors("3 2\nred 1 0\nblue 0 1").unwrap_err();
        assert!(matches!(err, EmbeddingError::Parse { line: 1, .. }));
    }

    #[test]
    fn word_vector_roundtrip() {
        let dir = std::env::temp_dir().join("pgsrm-emb-roundtrip");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("vectors.txt");
        let source = "red 1.5 -0.25 0\nblue 0 1 0.125\n";
        let space = EmbeddingSpace::parse_word_vectors(source).unwrap();
        space.write_word_vectors(&path).unwrap();
        // These values format identically, so the file reproduces exactly.
        assert_eq!(std::fs::read_to_string(&path).unwrap(), source);
        let again = EmbeddingSpace::load_word_vectors(&path).unwrap();
        assert_eq!(again.len(), 2);
        assert_eq!(again.stored_vector("red").unwrap(), &[1.5, -0.25, 0.0]);
        assert_eq!(again.stored_vector("blue").unwrap(), &[0.0, 1.0, 0.125]);

        // Written bytes parse back to the identical file on a second write.
        let path2 = dir.join("vectors2.txt");
        again.write_word_vectors(&path2).unwrap();
        assert_eq!(
            std::fs::read_to_string(&path).unwrap(),
            std::fs::read_to_string(&path2).unwrap()
        );
    }

    #[test]
    fn sentence_cache_lookup_and_roundtrip() {
        let content = concat!(
            "{\"text\":\"I feel empty today.\",\"vector\":[0.0,2.0]}\n",
            "{\"text\":\"a \\\"quoted\\\" one\",\"vector\":[1.0,0.0]}\n",
            "{\"text\":\"third\",\"vector\":[0.5,0.5]}\n"
        );
        let space = EmbeddingSpace::parse_sentence_cache(content).unwrap();
        assert_eq!(space.len(), 3);
        assert_eq!(space.provider_kind(), ProviderKind::SentenceCache);
        let v = space.embed("I feel empty today.").unwrap();
        assert_eq!(v.values(), &[0.0, 1.0]);

        let dir = std::env::temp_dir().join("pgsrm-cache-roundtrip");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("cache.jsonl");
        space.write_sentence_cache(&path).unwrap();
        let again = EmbeddingSpace::load_sentence_cache(&path).unwrap();
        assert_eq!(again.len(), 3);
        assert_eq!(
            again.embed("a \"quoted\" one").unwrap().values(),
            &[1.0, 0.0]
        );
    }

    #[test]
    fn sentence_cache_miss_is_an_error() {
        let space = EmbeddingSpace::parse_sentence_cache("{\"text\":\"a\",\"vector\":[1]}").unwrap();
        assert!(matches!(
            space.embed("missing").unwrap_err(),
            EmbeddingError::MissingEmbedding { .. }
        ));
    }

    #[test]
    fn sentence_cache_conflict_is_an_error() {
        let content = "{\"text\":\"a\",\"vector\":[1,0]}\n{\"text\":\"a\",\"vector\":[0,1]}";
        assert!(matches!(
            EmbeddingSpace::parse_sentence_cache(content).unwrap_err(),
            EmbeddingError::DuplicateConflict { line: 2, .. }
        ));
    }

    #[test]
    fn sentence_cache_dimension_drift_is_an_error() {
        let content = "{\"text\":\"a\",\"vector\":[1,0]}\n{\"text\":\"b\",\"vector\":[1]}";
        assert!(matches!(
            EmbeddingSpace::parse_sentence_cache(content).unwrap_err(),
            EmbeddingError::Parse { line: 2, .. }
        ));
    }

    #[test]
    fn embeds_single_known_token() {
        let space = tiny_space();
        let v = space.embed("red").unwrap();
        assert!(v.is_normalized());
        assert_eq!(v.values(), &[1.0, 0.0, 0.0]);
        // Case and punctuation fold away.
        assert_eq!(space.embed("Red!").unwrap().values(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn embeds_mean_of_two_tokens() {
        let space = tiny_space();
        let v = space.embed("red blue").unwrap();
        let e = std::f64::consts::FRAC_1_SQRT_2;
        assert!((v.values()[0] - e).abs() < 1e-12);
        assert!((v.values()[1] - e).abs() < 1e-12);
        assert!(v.values()[2].abs() < 1e-12);
    }

    #[test]
    fn unknown_text_falls_back_to_zero() {
        let space = tiny_space();
        let v = space.embed("zebra crossing").unwrap();
        assert!(!v.is_normalized());
        assert!(v.values().iter().all(|&x| x == 0.0));
        let r = space.embed("red").unwrap();
        assert_eq!(cosine(&v, &r).unwrap(), 0.0);
    }

    #[test]
    fn empty_text_is_an_error() {
        let space = tiny_space();
        assert!(matches!(
            space.embed("   ").unwrap_err(),
            EmbeddingError::EmptyText
        ));
    }

    #[test]
    fn cosine_basics() {
        let e1 = SentenceVector::unit(vec![1.0, 0.0]);
        let e2 = SentenceVector::unit(vec![0.0, 1.0]);
        let e3 = SentenceVector::unit(vec![-1.0, 0.0]);
        assert_eq!(cosine(&e1, &e1).unwrap(), 1.0);
        assert_eq!(cosine(&e1, &e2).unwrap(), 0.0);
        assert_eq!(cosine(&e1, &e3).unwrap(), -1.0);
        assert!(matches!(
            cosine(&e1, &SentenceVector::zero(3)).unwrap_err(),
            EmbeddingError::DimensionMismatch { lhs: 2, rhs: 3 }
        ));
    }

    #[test]
    fn hash_space_is_deterministic_and_order_invariant() {
        let space = EmbeddingSpace::hash_synthetic(32, 7);
        let a = space.embed("green and gold").unwrap();
        let b = space.embed("green and gold").unwrap();
        assert_eq!(a, b);
        // Mean pooling ignores token order.
        let c = space.embed("gold and green").unwrap();
        assert_eq!(a, c);
        // Different multisets give different vectors.
        let d = space.embed("green and silver").unwrap();
        assert!(cosine(&a, &d).unwrap() < 0.999);
        assert!(a.is_normalized());
        let norm: f64 = a.values().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
    }

    #[test]
    fn embed_tokenizer_strips_punctuation() {
        assert_eq!(
            embed_tokenize("The opposite of 'hot' is "),
            vec!["the", "opposite", "of", "hot", "is"]
        );
        assert_eq!(embed_tokenize("I'm fine."), vec!["i'm", "fine"]);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(200))]

            #[test]
            fn cosine_symmetric_and_bounded(
                a in proptest::collection::vec(-10.0f64..10.0, 4),
                b in proptest::collection::vec(-10.0f64..10.0, 4),
            ) {
                let ea = SentenceVector::unit(a);
                let eb = SentenceVector::unit(b);
                let ab = cosine(&ea, &eb).unwrap();
                let ba = cosine(&eb, &ea).unwrap();
                prop_assert!((-1.0..=1.0).contains(&ab));
                prop_assert_eq!(ab, ba);
            }

            #[test]
            fn pooling_is_order_invariant(perm in 0usize..6) {
                let space = EmbeddingSpace::parse_word_vectors(
                    "red 1 0 0\nblue 0 1 0\ngreen 0 0 1",
                ).unwrap();
                let orders = [
                    "red blue green", "red green blue", "blue red green",
                    "blue green red", "green red blue", "green blue red",
                ];
                let base = space.embed(orders[0]).unwrap();
                let other = space.embed(orders[perm]).unwrap();
                prop_assert_eq!(base, other);
            }
        }
    }
}
