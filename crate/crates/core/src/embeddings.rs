//! Word-embedding matrix aligned to a vocabulary, cosine similarity,
//! exact nearest-neighbor search, and signed vector-sum query composition.
//!
//! Only the word2vec *text* format is accepted: a `V D` header line, then
//! one `word f1 ... fD` row per line. Vectors are used exactly as stored;
//! nothing is re-normalized.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{hex_digest, Vocabulary, WordId};

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("embedding dimension must be >= 1")]
    ZeroDim,
    #[error("undefined cosine: zero vector")]
    ZeroVector,
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("no candidates")]
    NoCandidates,
    #[error("word {0:?} has no embedding")]
    Uncovered(String),
    #[error("query terms missing from the embedding matrix: {}", .0.join(", "))]
    MissingTerms(Vec<String>),
    #[error("bad query expression: {0}")]
    BadExpr(String),
}

/// One D-dimensional vector per covered vocabulary word, rows aligned to
/// word ids. Words absent from the embedding file stay uncovered.
#[derive(Debug, Clone)]
pub struct EmbeddingMatrix {
    dim: usize,
    data: Vec<f64>,
    covered: Vec<bool>,
    n_covered: usize,
}

impl EmbeddingMatrix {
    /// Loads a word2vec text file and aligns it to `vocab`. File words
    /// absent from the vocabulary are ignored; vocabulary words absent
    /// from the file are left uncovered.
    pub fn load(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<Self, EmbeddingError> {
        let file = File::open(path.as_ref())?;
        let mut lines = BufReader::new(file).lines();
        let header = lines
            .next()
            .ok_or(EmbeddingError::Parse {
                line: 1,
                msg: "missing header line".to_string(),
            })??;
        let mut parts = header.split_whitespace();
        let declared: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or(EmbeddingError::Parse {
                line: 1,
                msg: "header must be `V D`".to_string(),
            })?;
        let dim: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or(EmbeddingError::Parse {
                line: 1,
                msg: "header must be `V D`".to_string(),
            })?;
        if dim == 0 {
            return Err(EmbeddingError::ZeroDim);
        }

        let mut m = EmbeddingMatrix {
            dim,
            data: vec![0.0; vocab.len() * dim],
            covered: vec![false; vocab.len()],
            n_covered: 0,
        };
        let mut rows = 0usize;
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            let lineno = lineno + 2;
            if line.trim().is_empty() {
                continue;
            }
            rows += 1;
            let mut parts = line.split_whitespace();
            let word = parts.next().expect("non-empty line has a first field");
            let values: Vec<f64> = parts
                .map(|s| {
                    s.parse::<f64>().map_err(|_| EmbeddingError::Parse {
                        line: lineno,
                        msg: format!("bad float {s:?}"),
                    })
                })
                .collect::<Result<_, _>>()?;
            if values.len() != dim {
                return Err(EmbeddingError::Parse {
                    line: lineno,
                    msg: format!("expected {dim} values, got {}", values.len()),
                });
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(EmbeddingError::Parse {
                    line: lineno,
                    msg: "non-finite value".to_string(),
                });
            }
            if let Some(id) = vocab.id(word) {
                m.set_row(id, &values);
            }
        }
        if rows != declared {
            return Err(EmbeddingError::Parse {
                line: rows + 1,
                msg: format!("header declared {declared} rows, file has {rows}"),
            });
        }
        Ok(m)
    }

    /// Builds a matrix directly from `(word id, vector)` pairs.
    pub fn from_vectors(
        dim: usize,
        vocab_size: usize,
        entries: impl IntoIterator<Item = (WordId, Vec<f64>)>,
    ) -> Result<Self, EmbeddingError> {
        if dim == 0 {
            return Err(EmbeddingError::ZeroDim);
        }
        let mut m = EmbeddingMatrix {
            dim,
            data: vec![0.0; vocab_size * dim],
            covered: vec![false; vocab_size],
            n_covered: 0,
        };
        for (id, v) in entries {
            if v.len() != dim {
                return Err(EmbeddingError::DimMismatch(v.len(), dim));
            }
            m.set_row(id, &v);
        }
        Ok(m)
    }

    fn set_row(&mut self, id: WordId, values: &[f64]) {
        if !self.covered[id] {
            self.n_covered += 1;
        }
        self.covered[id] = true;
        self.data[id * self.dim..(id + 1) * self.dim].copy_from_slice(values);
    }

    /// Writes the covered rows in word2vec text format.
    pub fn save(&self, path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<(), EmbeddingError> {
        let mut out = BufWriter::new(File::create(path.as_ref())?);
        writeln!(out, "{} {}", self.n_covered, self.dim)?;
        for id in 0..self.covered.len() {
            if !self.covered[id] {
                continue;
            }
            write!(out, "{}", vocab.word(id).expect("covered id in vocab"))?;
            for v in self.vector(id).expect("covered row") {
                write!(out, " {v}")?;
            }
            writeln!(out)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_covered(&self, id: WordId) -> bool {
        self.covered.get(id).copied().unwrap_or(false)
    }

    pub fn coverage_count(&self) -> usize {
        self.n_covered
    }

    /// Row of a covered word; `None` when uncovered or out of range.
    pub fn vector(&self, id: WordId) -> Option<&[f64]> {
        if self.is_covered(id) {
            Some(&self.data[id * self.dim..(id + 1) * self.dim])
        } else {
            None
        }
    }

    /// Mean of all covered rows; `None` when nothing is covered.
    pub fn centroid(&self) -> Option<Vec<f64>> {
        if self.n_covered == 0 {
            return None;
        }
        let mut sum = vec![0.0; self.dim];
        for id in 0..self.covered.len() {
            if let Some(row) = self.vector(id) {
                for (s, v) in sum.iter_mut().zip(row) {
                    *s += v;
                }
            }
        }
        for s in &mut sum {
            *s /= self.n_covered as f64;
        }
        Some(sum)
    }

    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.dim as u64).to_le_bytes());
        for id in 0..self.covered.len() {
            if let Some(row) = self.vector(id) {
                h.update((id as u64).to_le_bytes());
                for v in row {
                    h.update(v.to_le_bytes());
                }
            }
        }
        hex_digest(h)
    }
}

/// A query composed from a signed word-vector expression.
#[derive(Debug, Clone)]
pub struct QueryVector {
    pub values: Vec<f64>,
    /// The expression this vector was composed from.
    pub source: String,
}

/// Cosine similarity. Errors on zero vectors, where it is undefined.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, EmbeddingError> {
    if u.len() != v.len() {
        return Err(EmbeddingError::DimMismatch(u.len(), v.len()));
    }
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(EmbeddingError::ZeroVector);
    }
    Ok(dot / (nu.sqrt() * nv.sqrt()))
}

/// Index of the cosine-closest candidate; ties break to the lowest index.
pub fn nearest<'a>(
    query: &[f64],
    candidates: impl IntoIterator<Item = &'a [f64]>,
) -> Result<usize, EmbeddingError> {
    let mut best: Option<(usize, f64)> = None;
    for (i, cand) in candidates.into_iter().enumerate() {
        let sim = cosine(query, cand)?;
        match best {
            Some((_, b)) if sim <= b => {}
            _ => best = Some((i, sim)),
        }
    }
    best.map(|(i, _)| i).ok_or(EmbeddingError::NoCandidates)
}

/// Composes `term (± term)*` into a signed vector sum; the leading term is
/// implicitly `+`. Reports every missing term, not just the first.
pub fn compose_query(
    expr: &str,
    matrix: &EmbeddingMatrix,
    vocab: &Vocabulary,
) -> Result<QueryVector, EmbeddingError> {
    let tokens: Vec<&str> = expr.split_whitespace().collect();
    if tokens.is_empty() {
        return Err(EmbeddingError::BadExpr("empty expression".to_string()));
    }
    // First pass: collect (sign, term) pairs and every unusable term.
    let mut terms: Vec<(f64, &str)> = Vec::new();
    let mut missing: Vec<String> = Vec::new();
    let mut sign = Some(1.0);
    for tok in &tokens {
        match (*tok, sign) {
            ("+", None) => sign = Some(1.0),
            ("-", None) => sign = Some(-1.0),
            ("+" | "-", Some(_)) => {
                return Err(EmbeddingError::BadExpr(format!(
                    "operator {tok:?} where a term was expected"
                )))
            }
            (term, Some(s)) => {
                match vocab.id(term) {
                    Some(id) if matrix.is_covered(id) => terms.push((s, term)),
                    _ => missing.push(term.to_string()),
                }
                sign = None;
            }
            (term, None) => {
                return Err(EmbeddingError::BadExpr(format!(
                    "term {term:?} where an operator was expected"
                )))
            }
        }
    }
    if sign.is_some() {
        return Err(EmbeddingError::BadExpr(
            "expression ends with an operator".to_string(),
        ));
    }
    if !missing.is_empty() {
        return Err(EmbeddingError::MissingTerms(missing));
    }
    let mut values = vec![0.0; matrix.dim()];
    for (s, term) in terms {
        let id = vocab.id(term).expect("checked above");
        let row = matrix.vector(id).expect("checked above");
        for (acc, v) in values.iter_mut().zip(row) {
            *acc += s * v;
        }
    }
    Ok(QueryVector {
        values,
        source: expr.to_string(),
    })
}
