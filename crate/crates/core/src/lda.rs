//! Collapsed-Gibbs LDA baseline and its two concept-extension heuristics:
//! top-30 topic-word association and concrete-assignment extension.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::corpus::{Corpus, WordId};
use crate::lctm::snapshot::{read_assignments, FORMAT_VERSION};
use crate::lctm::{ModelError, TokenRef};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LdaHyperparams {
    pub num_topics: usize,
    /// Symmetric Dirichlet on the document-topic distributions.
    pub alpha: f64,
    /// Symmetric Dirichlet on the topic-word distributions.
    pub beta_w: f64,
    pub sweeps: usize,
    pub seed: u64,
}

impl LdaHyperparams {
    pub fn new(num_topics: usize) -> Self {
        LdaHyperparams {
            num_topics,
            alpha: 50.0 / num_topics.max(1) as f64,
            beta_w: 0.01,
            sweeps: 500,
            seed: 42,
        }
    }

    fn validate(&self) -> Result<(), ModelError> {
        if self.num_topics == 0 {
            return Err(ModelError::InvalidHyperparams("K must be >= 1".to_string()));
        }
        if self.alpha <= 0.0 || self.beta_w <= 0.0 {
            return Err(ModelError::InvalidHyperparams(
                "alpha and beta_w must be strictly positive".to_string(),
            ));
        }
        Ok(())
    }
}

/// Frozen collapsed-Gibbs LDA sample.
#[derive(Debug, Clone)]
pub struct LdaModel {
    hp: LdaHyperparams,
    corpus: Arc<Corpus>,
    tokens: Vec<TokenRef>,
    doc_start: Vec<usize>,
    z: Vec<usize>,
    n_doc_topic: Vec<u32>,
    n_topic_word: Vec<u32>,
    n_topic: Vec<u32>,
}

impl LdaModel {
    fn empty(corpus: &Arc<Corpus>, hp: &LdaHyperparams) -> Self {
        let mut tokens = Vec::with_capacity(corpus.total_tokens());
        let mut doc_start = Vec::with_capacity(corpus.num_segments() + 1);
        for (doc, seg) in corpus.segments().iter().enumerate() {
            doc_start.push(tokens.len());
            for &word in &seg.tokens {
                tokens.push(TokenRef { doc, word });
            }
        }
        doc_start.push(tokens.len());
        let n = tokens.len();
        LdaModel {
            hp: hp.clone(),
            corpus: Arc::clone(corpus),
            tokens,
            doc_start,
            z: vec![0; n],
            n_doc_topic: vec![0; corpus.num_segments() * hp.num_topics],
            n_topic_word: vec![0; hp.num_topics * corpus.vocab().len()],
            n_topic: vec![0; hp.num_topics],
        }
    }

    pub fn from_assignments(
        corpus: &Arc<Corpus>,
        hp: &LdaHyperparams,
        z: &[usize],
    ) -> Result<Self, ModelError> {
        hp.validate()?;
        if z.len() != corpus.total_tokens() {
            return Err(ModelError::Mismatch(format!(
                "{} assignments for {} tokens",
                z.len(),
                corpus.total_tokens()
            )));
        }
        let mut model = Self::empty(corpus, hp);
        for pos in 0..model.tokens.len() {
            if z[pos] >= hp.num_topics {
                return Err(ModelError::OutOfRange(format!(
                    "topic {} at position {pos}",
                    z[pos]
                )));
            }
            model.increment(pos, z[pos]);
        }
        Ok(model)
    }

    fn increment(&mut self, pos: usize, k: usize) {
        let tok = self.tokens[pos];
        self.z[pos] = k;
        self.n_doc_topic[tok.doc * self.hp.num_topics + k] += 1;
        self.n_topic_word[k * self.corpus.vocab().len() + tok.word] += 1;
        self.n_topic[k] += 1;
    }

    fn decrement(&mut self, pos: usize) {
        let tok = self.tokens[pos];
        let k = self.z[pos];
        self.n_doc_topic[tok.doc * self.hp.num_topics + k] -= 1;
        self.n_topic_word[k * self.corpus.vocab().len() + tok.word] -= 1;
        self.n_topic[k] -= 1;
    }

    pub fn hp(&self) -> &LdaHyperparams {
        &self.hp
    }

    pub fn corpus(&self) -> &Arc<Corpus> {
        &self.corpus
    }

    pub fn num_tokens(&self) -> usize {
        self.tokens.len()
    }

    pub fn topic_assignments(&self) -> &[usize] {
        &self.z
    }

    pub fn doc_topic_count(&self, doc: usize, k: usize) -> u32 {
        self.n_doc_topic[doc * self.hp.num_topics + k]
    }

    pub fn topic_word_count(&self, k: usize, w: WordId) -> u32 {
        self.n_topic_word[k * self.corpus.vocab().len() + w]
    }

    pub fn topic_count(&self, k: usize) -> u32 {
        self.n_topic[k]
    }

    pub fn reassign(&mut self, pos: usize, k: usize) -> Result<(), ModelError> {
        if pos >= self.tokens.len() || k >= self.hp.num_topics {
            return Err(ModelError::OutOfRange(format!(
                "reassign({pos}, {k})"
            )));
        }
        self.decrement(pos);
        self.increment(pos, k);
        Ok(())
    }

    /// Full conditional over topics for the token at `pos`, with its current
    /// assignment excluded:
    /// p(k) ∝ (n_{i,k}+α)·(n_{k,w}+β_w)/(n_{k,·}+Vβ_w).
    pub fn topic_conditional(&self, pos: usize) -> Vec<f64> {
        let tok = self.tokens[pos];
        let v = self.corpus.vocab().len();
        let cur = self.z[pos];
        let mut out = Vec::with_capacity(self.hp.num_topics);
        for k in 0..self.hp.num_topics {
            let held = (k == cur) as u32;
            let n_ik = (self.n_doc_topic[tok.doc * self.hp.num_topics + k] - held) as f64;
            let n_kw = (self.n_topic_word[k * v + tok.word] - held) as f64;
            let n_k = (self.n_topic[k] - held) as f64;
            out.push(
                (n_ik + self.hp.alpha) * (n_kw + self.hp.beta_w)
                    / (n_k + v as f64 * self.hp.beta_w),
            );
        }
        let total: f64 = out.iter().sum();
        for w in &mut out {
            *w /= total;
        }
        out
    }

    /// Collapsed log joint p(z, w): Dirichlet-multinomial terms for the
    /// doc-topic and topic-word count matrices.
    pub fn log_joint(&self) -> f64 {
        let k_count = self.hp.num_topics;
        let v = self.corpus.vocab().len();
        let sum_alpha = self.hp.alpha * k_count as f64;
        let sum_beta = self.hp.beta_w * v as f64;
        let mut total = 0.0;
        for doc in 0..self.corpus.num_segments() {
            let n_i = (self.doc_start[doc + 1] - self.doc_start[doc]) as f64;
            total += ln_gamma(sum_alpha) - ln_gamma(n_i + sum_alpha);
            for k in 0..k_count {
                let n = self.n_doc_topic[doc * k_count + k] as f64;
                total += ln_gamma(n + self.hp.alpha) - ln_gamma(self.hp.alpha);
            }
        }
        for k in 0..k_count {
            total += ln_gamma(sum_beta) - ln_gamma(self.n_topic[k] as f64 + sum_beta);
            for w in 0..v {
                let n = self.n_topic_word[k * v + w] as f64;
                total += ln_gamma(n + self.hp.beta_w) - ln_gamma(self.hp.beta_w);
            }
        }
        total
    }

    pub fn check_invariants(&self) -> Result<(), String> {
        let k_count = self.hp.num_topics;
        let v = self.corpus.vocab().len();
        let mut doc_topic = vec![0u32; self.n_doc_topic.len()];
        let mut topic_word = vec![0u32; self.n_topic_word.len()];
        let mut topic = vec![0u32; k_count];
        for (pos, tok) in self.tokens.iter().enumerate() {
            doc_topic[tok.doc * k_count + self.z[pos]] += 1;
            topic_word[self.z[pos] * v + tok.word] += 1;
            topic[self.z[pos]] += 1;
        }
        if doc_topic != self.n_doc_topic || topic_word != self.n_topic_word || topic != self.n_topic
        {
            return Err("counts disagree with assignments".to_string());
        }
        for k in 0..k_count {
            let row: u32 = self.n_topic_word[k * v..(k + 1) * v].iter().sum();
            if row != self.n_topic[k] {
                return Err(format!("topic {k} word row does not sum to its total"));
            }
        }
        Ok(())
    }

    /// Words of one topic ordered by φ̂ descending, ties by word id
    /// ascending; `n` is truncated to the vocabulary size.
    pub fn top_words(&self, k: usize, n: usize) -> Vec<WordId> {
        let v = self.corpus.vocab().len();
        let mut ids: Vec<WordId> = (0..v).collect();
        // symmetric beta_w makes the φ̂ order the count order
        ids.sort_by(|&a, &b| {
            self.n_topic_word[k * v + b]
                .cmp(&self.n_topic_word[k * v + a])
                .then(a.cmp(&b))
        });
        ids.truncate(n.min(v));
        ids
    }

    /// Segments where any topic that lists `word` among its top 30 words is
    /// assigned to at least one token.
    pub fn top30_extension(&self, word: WordId) -> BTreeSet<String> {
        let active: Vec<usize> = (0..self.hp.num_topics)
            .filter(|&k| self.top_words(k, 30).contains(&word))
            .collect();
        self.segments_with_topics(&active)
    }

    /// Segments where any topic assigned at the word's own tokens is
    /// assigned; the LDA mirror of a word→topic→document chain.
    pub fn concrete_extension(&self, word: WordId) -> BTreeSet<String> {
        let mut topics = BTreeSet::new();
        for (pos, tok) in self.tokens.iter().enumerate() {
            if tok.word == word {
                topics.insert(self.z[pos]);
            }
        }
        let topics: Vec<usize> = topics.into_iter().collect();
        self.segments_with_topics(&topics)
    }

    fn segments_with_topics(&self, topics: &[usize]) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        if topics.is_empty() {
            return out;
        }
        for (pos, tok) in self.tokens.iter().enumerate() {
            if topics.contains(&self.z[pos]) {
                out.insert(self.corpus.segment(tok.doc).id.clone());
            }
        }
        out
    }

    /// Snapshot mirroring the LCTM layout minus the concept files.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), ModelError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let meta = LdaMeta {
            format_version: FORMAT_VERSION,
            model_type: "lda".to_string(),
            hyperparams: self.hp.clone(),
            num_segments: self.corpus.num_segments(),
            vocab_size: self.corpus.vocab().len(),
            total_tokens: self.tokens.len(),
            corpus_digest: self.corpus.digest(),
            n_topic_totals: self.n_topic.clone(),
        };
        let meta_json = serde_json::to_string_pretty(&meta)
            .map_err(|e| ModelError::Corrupt(format!("meta serialization: {e}")))?;
        std::fs::write(dir.join("meta.json"), meta_json)?;
        let mut out = String::new();
        for (doc, seg) in self.corpus.segments().iter().enumerate() {
            let start = self.doc_start[doc];
            for idx in 0..seg.tokens.len() {
                out.push_str(&format!(
                    "{}\t{}\t{}\t{}\n",
                    seg.id,
                    idx,
                    seg.tokens[idx],
                    self.z[start + idx]
                ));
            }
        }
        std::fs::write(dir.join("assignments.tsv"), out)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>, corpus: &Arc<Corpus>) -> Result<Self, ModelError> {
        let dir = dir.as_ref();
        let meta_path = dir.join("meta.json");
        if !meta_path.exists() {
            return Err(ModelError::Corrupt(format!(
                "missing meta file {}",
                meta_path.display()
            )));
        }
        let meta: LdaMeta = serde_json::from_str(&std::fs::read_to_string(&meta_path)?)
            .map_err(|e| ModelError::Corrupt(format!("meta parse: {e}")))?;
        if meta.format_version != FORMAT_VERSION {
            return Err(ModelError::VersionMismatch {
                found: meta.format_version,
                expected: FORMAT_VERSION,
            });
        }
        if meta.model_type != "lda" {
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
        let (z, _) = read_assignments(
            &dir.join("assignments.tsv"),
            corpus,
            meta.total_tokens,
            false,
        )?;
        let model = Self::from_assignments(corpus, &meta.hyperparams, &z)?;
        if model.n_topic != meta.n_topic_totals {
            return Err(ModelError::Corrupt(
                "topic totals do not match cached totals".to_string(),
            ));
        }
        Ok(model)
    }
}

#[derive(Serialize, Deserialize)]
struct LdaMeta {
    format_version: u32,
    model_type: String,
    hyperparams: LdaHyperparams,
    num_segments: usize,
    vocab_size: usize,
    total_tokens: usize,
    corpus_digest: String,
    n_topic_totals: Vec<u32>,
}

/// Trains LDA by collapsed Gibbs sampling from a seeded random init.
pub fn train_lda(corpus: &Arc<Corpus>, hp: &LdaHyperparams) -> Result<LdaModel, ModelError> {
    train_lda_with_progress(corpus, hp, |_, _| {})
}

/// [`train_lda`] with a callback invoked as `(sweep, log_joint)` every 100
/// sweeps and at the start and end of the run.
pub fn train_lda_with_progress(
    corpus: &Arc<Corpus>,
    hp: &LdaHyperparams,
    mut progress: impl FnMut(usize, f64),
) -> Result<LdaModel, ModelError> {
    hp.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut model = LdaModel::empty(corpus, hp);
    for pos in 0..model.tokens.len() {
        let k = rng.random_range(0..hp.num_topics);
        model.increment(pos, k);
    }
    progress(0, model.log_joint());
    let mut weights = vec![0.0; hp.num_topics];
    let v = corpus.vocab().len() as f64;
    for sweep in 1..=hp.sweeps {
        for pos in 0..model.tokens.len() {
            model.decrement(pos);
            let tok = model.tokens[pos];
            for (k, w) in weights.iter_mut().enumerate() {
                let n_ik = model.n_doc_topic[tok.doc * hp.num_topics + k] as f64;
                let n_kw =
                    model.n_topic_word[k * corpus.vocab().len() + tok.word] as f64;
                let n_k = model.n_topic[k] as f64;
                *w = (n_ik + hp.alpha) * (n_kw + hp.beta_w) / (n_k + v * hp.beta_w);
            }
            let total: f64 = weights.iter().sum();
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = hp.num_topics - 1;
            for (k, w) in weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    pick = k;
                    break;
                }
            }
            model.increment(pos, pick);
        }
        if sweep % 100 == 0 || sweep == hp.sweeps {
            progress(sweep, model.log_joint());
        }
    }
    Ok(model)
}
