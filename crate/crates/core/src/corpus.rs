//! Pre-tokenized segmented corpus and its vocabulary.
//!
//! The corpus file format is one segment per line, `segment_id<TAB>token
//! token token`, UTF-8, blank lines ignored. Tokenization, lemmatization and
//! any other pretreatment happen upstream; the loader trusts its input and
//! performs no normalization.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

/// Dense word id, contiguous `0..V`.
pub type WordId = usize;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: duplicate segment id {id:?}")]
    DuplicateSegment { line: usize, id: String },
    #[error("no segments")]
    Empty,
    #[error("unknown word id {0}")]
    UnknownWord(WordId),
}

/// Bijection between surface forms and dense word ids, built in
/// first-occurrence order.
#[derive(Debug, Clone, Default)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, WordId>,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Id of a surface form, if present.
    pub fn id(&self, word: &str) -> Option<WordId> {
        self.index.get(word).copied()
    }

    /// Surface form of an id, if in range.
    pub fn word(&self, id: WordId) -> Option<&str> {
        self.words.get(id).map(|w| w.as_str())
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(|w| w.as_str())
    }

    fn get_or_insert(&mut self, word: &str) -> WordId {
        if let Some(&id) = self.index.get(word) {
            return id;
        }
        let id = self.words.len();
        self.words.push(word.to_string());
        self.index.insert(word.to_string(), id);
        id
    }
}

/// One retained segment: a non-empty token sequence with a unique id.
#[derive(Debug, Clone)]
pub struct Segment {
    pub id: String,
    pub tokens: Vec<WordId>,
}

/// Immutable segmented corpus plus its vocabulary.
#[derive(Debug, Clone)]
pub struct Corpus {
    vocab: Vocabulary,
    segments: Vec<Segment>,
    segment_index: HashMap<String, usize>,
    total_tokens: usize,
    /// Ids of segments dropped for being empty after pretreatment.
    dropped_segments: Vec<String>,
}

impl Corpus {
    /// Loads a corpus file, building the vocabulary in first-occurrence
    /// order. Empty segments are dropped (the model cannot host a
    /// zero-length document); their ids are kept for reporting.
    pub fn load(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
        let file = File::open(path.as_ref())?;
        let reader = BufReader::new(file);
        let mut raw = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = lineno + 1;
            if line.trim().is_empty() {
                continue;
            }
            let (id, rest) = line.split_once('\t').ok_or_else(|| CorpusError::Parse {
                line: lineno,
                msg: "expected `segment_id<TAB>tokens`".to_string(),
            })?;
            if id.is_empty() {
                return Err(CorpusError::Parse {
                    line: lineno,
                    msg: "empty segment id".to_string(),
                });
            }
            let tokens: Vec<String> = rest.split_whitespace().map(String::from).collect();
            raw.push((lineno, id.to_string(), tokens));
        }
        Self::build(raw)
    }

    /// Builds a corpus from in-memory segments; the same construction path
    /// as [`Corpus::load`], so ids and ordering behave identically.
    pub fn from_segments<S: AsRef<str>>(
        segments: impl IntoIterator<Item = (String, Vec<S>)>,
    ) -> Result<Corpus, CorpusError> {
        let raw: Vec<(usize, String, Vec<S>)> = segments
            .into_iter()
            .enumerate()
            .map(|(i, (id, toks))| (i + 1, id, toks))
            .collect();
        Self::build(raw)
    }

    fn build<S: AsRef<str>>(raw: Vec<(usize, String, Vec<S>)>) -> Result<Corpus, CorpusError> {
        let mut vocab = Vocabulary::default();
        let mut segments = Vec::new();
        let mut segment_index = HashMap::new();
        let mut dropped = Vec::new();
        let mut total = 0usize;
        for (lineno, id, tokens) in raw {
            if segment_index.contains_key(&id) || dropped.contains(&id) {
                return Err(CorpusError::DuplicateSegment { line: lineno, id });
            }
            if tokens.is_empty() {
                dropped.push(id);
                continue;
            }
            let tokens: Vec<WordId> = tokens
                .iter()
                .map(|t| vocab.get_or_insert(t.as_ref()))
                .collect();
            total += tokens.len();
            segment_index.insert(id.clone(), segments.len());
            segments.push(Segment { id, tokens });
        }
        if segments.is_empty() {
            return Err(CorpusError::Empty);
        }
        Ok(Corpus {
            vocab,
            segments,
            segment_index,
            total_tokens: total,
            dropped_segments: dropped,
        })
    }

    /// Writes the corpus back in the line format read by [`Corpus::load`].
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        let mut out = BufWriter::new(File::create(path.as_ref())?);
        for seg in &self.segments {
            write!(out, "{}\t", seg.id)?;
            for (i, &w) in seg.tokens.iter().enumerate() {
                if i > 0 {
                    write!(out, " ")?;
                }
                write!(out, "{}", self.vocab.word(w).expect("token id in vocab"))?;
            }
            writeln!(out)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment(&self, index: usize) -> &Segment {
        &self.segments[index]
    }

    pub fn segment_index(&self, id: &str) -> Option<usize> {
        self.segment_index.get(id).copied()
    }

    pub fn num_segments(&self) -> usize {
        self.segments.len()
    }

    pub fn total_tokens(&self) -> usize {
        self.total_tokens
    }

    pub fn dropped_segments(&self) -> &[String] {
        &self.dropped_segments
    }

    /// Keyword heuristic: every segment with at least one token of the word.
    pub fn segments_containing(&self, word: WordId) -> Result<BTreeSet<String>, CorpusError> {
        if word >= self.vocab.len() {
            return Err(CorpusError::UnknownWord(word));
        }
        let mut out = BTreeSet::new();
        for seg in &self.segments {
            if seg.tokens.contains(&word) {
                out.insert(seg.id.clone());
            }
        }
        Ok(out)
    }

    /// Content digest used to bind model snapshots to the corpus they were
    /// trained on.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for seg in &self.segments {
            h.update(seg.id.as_bytes());
            h.update([0u8]);
            for &w in &seg.tokens {
                h.update((w as u64).to_le_bytes());
            }
            h.update([1u8]);
        }
        hex_digest(h)
    }
}

pub(crate) fn hex_digest(h: Sha256) -> String {
    let bytes = h.finalize();
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}
