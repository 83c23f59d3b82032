//! Model snapshot directory: `meta.json` (hyperparameters, dims, digests,
//! count totals), `assignments.tsv` (`segment_id<TAB>token_index<TAB>
//! word_id<TAB>z<TAB>c`), and `concepts.tsv` (`c<TAB>f1 ... fD`).
//!
//! Assignments are the source of truth. Counts are rebuilt on load and
//! checked against the cached totals, so a tampered assignment file is
//! rejected rather than silently accepted.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::embeddings::EmbeddingMatrix;
use crate::lctm::{LctmHyperparams, LctmModel, ModelError};

pub(crate) const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct LctmMeta {
    format_version: u32,
    model_type: String,
    hyperparams: LctmHyperparams,
    dim: usize,
    num_segments: usize,
    vocab_size: usize,
    total_tokens: usize,
    corpus_digest: String,
    embeddings_digest: String,
    n_topic_totals: Vec<u32>,
    n_concept_totals: Vec<u32>,
}

/// Writes a model snapshot into `dir`, creating it if needed.
pub fn save_model(model: &LctmModel, dir: impl AsRef<Path>) -> Result<(), ModelError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let state = model.state();
    let hp = model.hp();
    let corpus = model.corpus();

    let meta = LctmMeta {
        format_version: FORMAT_VERSION,
        model_type: "lctm".to_string(),
        hyperparams: hp.clone(),
        dim: state.dim(),
        num_segments: corpus.num_segments(),
        vocab_size: corpus.vocab().len(),
        total_tokens: state.num_tokens(),
        corpus_digest: corpus.digest(),
        embeddings_digest: model.matrix().digest(),
        n_topic_totals: (0..hp.num_topics).map(|k| state.topic_count(k)).collect(),
        n_concept_totals: (0..hp.num_concepts).map(|c| state.concept_count(c)).collect(),
    };
    let meta_json = serde_json::to_string_pretty(&meta)
        .map_err(|e| ModelError::Corrupt(format!("meta serialization: {e}")))?;
    std::fs::write(dir.join("meta.json"), meta_json)?;

    let mut out = BufWriter::new(File::create(dir.join("assignments.tsv"))?);
    let z = state.topic_assignments();
    let c = state.concept_assignments();
    for (doc, seg) in corpus.segments().iter().enumerate() {
        let start = state.doc_start(doc);
        for idx in 0..seg.tokens.len() {
            let pos = start + idx;
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                seg.id, idx, seg.tokens[idx], z[pos], c[pos]
            )?;
        }
    }
    out.flush()?;

    let mut out = BufWriter::new(File::create(dir.join("concepts.tsv"))?);
    for concept in 0..hp.num_concepts {
        write!(out, "{concept}\t")?;
        for (d, v) in model.concept_mean(concept).iter().enumerate() {
            if d > 0 {
                write!(out, " ")?;
            }
            write!(out, "{v}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// Loads a snapshot against the corpus and embeddings it was trained on.
/// Digests must match, counts rebuilt from the assignments must match the
/// cached totals, and the stored concept means must agree with the
/// recomputed ones.
pub fn load_model(
    dir: impl AsRef<Path>,
    corpus: &Arc<Corpus>,
    matrix: &Arc<EmbeddingMatrix>,
) -> Result<LctmModel, ModelError> {
    let dir = dir.as_ref();
    let meta_path = dir.join("meta.json");
    if !meta_path.exists() {
        return Err(ModelError::Corrupt(format!(
            "missing meta file {}",
            meta_path.display()
        )));
    }
    let meta: LctmMeta = serde_json::from_str(&std::fs::read_to_string(&meta_path)?)
        .map_err(|e| ModelError::Corrupt(format!("meta parse: {e}")))?;
    if meta.format_version != FORMAT_VERSION {
        return Err(ModelError::VersionMismatch {
            found: meta.format_version,
            expected: FORMAT_VERSION,
        });
    }
    if meta.model_type != "lctm" {
        return Err(ModelError::Corrupt(format!(
            "snapshot holds a {:?} model",
            meta.model_type
        )));
    }
    if meta.corpus_digest != corpus.digest() {
        return Err(ModelError::Corrupt(
            "corpus digest does not match the snapshot".to_string(),
        ));
    }
    if meta.embeddings_digest != matrix.digest() {
        return Err(ModelError::Corrupt(
            "embeddings digest does not match the snapshot".to_string(),
        ));
    }

    let (z, c) = read_assignments(
        &dir.join("assignments.tsv"),
        corpus,
        meta.total_tokens,
        true,
    )?;
    let c = c.expect("concept column requested");
    let model = LctmModel::from_assignments(corpus, matrix, &meta.hyperparams, &z, &c)?;

    let state = model.state();
    for k in 0..meta.hyperparams.num_topics {
        if state.topic_count(k) != meta.n_topic_totals[k] {
            return Err(ModelError::Corrupt(format!(
                "topic {k} count {} does not match cached total {}",
                state.topic_count(k),
                meta.n_topic_totals[k]
            )));
        }
    }
    for concept in 0..meta.hyperparams.num_concepts {
        if state.concept_count(concept) != meta.n_concept_totals[concept] {
            return Err(ModelError::Corrupt(format!(
                "concept {concept} count {} does not match cached total {}",
                state.concept_count(concept),
                meta.n_concept_totals[concept]
            )));
        }
    }

    check_concept_means(&dir.join("concepts.tsv"), &model)?;
    Ok(model)
}

/// Parses an assignments file into flat (topic, concept) vectors aligned to
/// the corpus token order. `with_concepts` selects the five-column LCTM
/// layout over the four-column topic-only layout.
pub(crate) fn read_assignments(
    path: &Path,
    corpus: &Corpus,
    expected_tokens: usize,
    with_concepts: bool,
) -> Result<(Vec<usize>, Option<Vec<usize>>), ModelError> {
    let file = File::open(path)?;
    let mut z = vec![usize::MAX; expected_tokens];
    let mut c = vec![usize::MAX; expected_tokens];
    let mut doc_start = Vec::with_capacity(corpus.num_segments() + 1);
    let mut acc = 0;
    for seg in corpus.segments() {
        doc_start.push(acc);
        acc += seg.tokens.len();
    }
    if acc != expected_tokens {
        return Err(ModelError::Corrupt(format!(
            "snapshot expects {expected_tokens} tokens, corpus has {acc}"
        )));
    }
    let mut seen = 0usize;
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| ModelError::Corrupt(format!("assignments line {lineno}: {msg}"));
        let fields: Vec<&str> = line.split('\t').collect();
        let expected_cols = if with_concepts { 5 } else { 4 };
        if fields.len() != expected_cols {
            return Err(err(format!(
                "expected {expected_cols} columns, got {}",
                fields.len()
            )));
        }
        let doc = corpus
            .segment_index(fields[0])
            .ok_or_else(|| err(format!("unknown segment {:?}", fields[0])))?;
        let idx: usize = fields[1]
            .parse()
            .map_err(|_| err("bad token index".to_string()))?;
        if idx >= corpus.segment(doc).tokens.len() {
            return Err(err(format!("token index {idx} out of range")));
        }
        let word: usize = fields[2]
            .parse()
            .map_err(|_| err("bad word id".to_string()))?;
        if corpus.segment(doc).tokens[idx] != word {
            return Err(err(format!(
                "word id {word} does not match the corpus token"
            )));
        }
        let pos = doc_start[doc] + idx;
        if z[pos] != usize::MAX {
            return Err(err("duplicate token row".to_string()));
        }
        z[pos] = fields[3]
            .parse()
            .map_err(|_| err("bad topic assignment".to_string()))?;
        if with_concepts {
            c[pos] = fields[4]
                .parse()
                .map_err(|_| err("bad concept assignment".to_string()))?;
        }
        seen += 1;
    }
    if seen != expected_tokens {
        return Err(ModelError::Corrupt(format!(
            "assignments cover {seen} tokens, expected {expected_tokens}"
        )));
    }
    Ok((z, if with_concepts { Some(c) } else { None }))
}

fn check_concept_means(path: &Path, model: &LctmModel) -> Result<(), ModelError> {
    let file = File::open(path)?;
    let mut seen = 0usize;
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| ModelError::Corrupt(format!("concepts line {lineno}: {msg}"));
        let (id, rest) = line
            .split_once('\t')
            .ok_or_else(|| err("expected `c<TAB>values`".to_string()))?;
        let concept: usize = id.parse().map_err(|_| err("bad concept id".to_string()))?;
        if concept >= model.hp().num_concepts {
            return Err(err(format!("concept id {concept} out of range")));
        }
        let values: Vec<f64> = rest
            .split_whitespace()
            .map(|s| s.parse::<f64>().map_err(|_| err(format!("bad float {s:?}"))))
            .collect::<Result<_, _>>()?;
        if values.len() != model.dim() {
            return Err(err(format!(
                "expected {} values, got {}",
                model.dim(),
                values.len()
            )));
        }
        for (a, b) in values.iter().zip(model.concept_mean(concept)) {
            if (a - b).abs() > 1e-6 {
                return Err(err(format!(
                    "stored mean {a} disagrees with recomputed {b}"
                )));
            }
        }
        seen += 1;
    }
    if seen != model.hp().num_concepts {
        return Err(ModelError::Corrupt(format!(
            "concepts file lists {seen} concepts, expected {}",
            model.hp().num_concepts
        )));
    }
    Ok(())
}
