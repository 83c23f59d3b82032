//! Synthetic corpora drawn from the model's own generative story, used for
//! recovery tests and for the end-to-end simulated concept-detection
//! experiment.
//!
//! Word identity is the quantization of each sampled token vector onto a
//! pre-drawn codebook of `vocab_size` type vectors (nearest neighbor in
//! Euclidean distance, matching the Gaussian noise model), so word types
//! repeat. Type vectors are drawn from the mixture itself (uniform concept,
//! then N(μ_c, σ²I)), so each concept owns a small cluster of word types:
//! a most-frequent canonical word plus same-cluster siblings.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::corpus::{Corpus, WordId};
use crate::embeddings::EmbeddingMatrix;
use crate::eval::{write_gold, GoldRecord};
use crate::lctm::{LctmHyperparams, ModelError};

/// A corpus drawn from the generative story, with its ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub corpus: Arc<Corpus>,
    pub matrix: Arc<EmbeddingMatrix>,
    /// True topic per token, flat in corpus order.
    pub true_z: Vec<usize>,
    /// True concept per token, flat in corpus order.
    pub true_c: Vec<usize>,
    /// Sampled θ_i rows.
    pub theta: Vec<Vec<f64>>,
    /// Sampled φ_k rows.
    pub phi: Vec<Vec<f64>>,
    /// Sampled concept vectors μ_c.
    pub concept_means: Vec<Vec<f64>>,
    /// Cluster concept of each vocabulary word's type vector.
    pub word_concepts: Vec<usize>,
}

fn sample_dirichlet(rng: &mut impl Rng, alpha: &[f64]) -> Vec<f64> {
    let mut draws: Vec<f64> = alpha
        .iter()
        .map(|&a| {
            let g = Gamma::new(a, 1.0).expect("positive shape");
            // Gamma draws for tiny shapes can underflow to zero; a floor
            // keeps the normalization finite without visibly biasing it.
            g.sample(rng).max(1e-300)
        })
        .collect();
    let total: f64 = draws.iter().sum();
    for d in &mut draws {
        *d /= total;
    }
    draws
}

fn sample_categorical(rng: &mut impl Rng, probs: &[f64]) -> usize {
    let u = rng.random::<f64>();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

fn sample_gaussian(rng: &mut impl Rng, mean: &[f64], var: f64) -> Vec<f64> {
    let sd = var.sqrt();
    mean.iter()
        .map(|&m| {
            let e: f64 = StandardNormal.sample(rng);
            m + sd * e
        })
        .collect()
}

fn nearest_euclidean(v: &[f64], codebook: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, t) in codebook.iter().enumerate() {
        let d: f64 = v.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Draws a corpus from the generative story: φ_k ~ Dir(β), μ_c ~ N(μ, σ₀²I),
/// θ_i ~ Dir(α), then per token z ~ Cat(θ_i), c ~ Cat(φ_z), v ~ N(μ_c, σ²I),
/// quantized onto the type codebook.
pub fn generate_synthetic(
    hp: &LctmHyperparams,
    dim: usize,
    num_docs: usize,
    doc_len: usize,
    vocab_size: usize,
) -> Result<SyntheticData, ModelError> {
    if vocab_size < 2 {
        return Err(ModelError::InvalidHyperparams(
            "vocab_size must be >= 2".to_string(),
        ));
    }
    if num_docs == 0 || doc_len == 0 {
        return Err(ModelError::InvalidHyperparams(
            "document count and length must be positive".to_string(),
        ));
    }
    hp.validate(dim)?;
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let k = hp.num_topics;
    let c_count = hp.num_concepts;

    let phi: Vec<Vec<f64>> = (0..k).map(|_| sample_dirichlet(&mut rng, &hp.beta)).collect();
    let concept_means: Vec<Vec<f64>> = (0..c_count)
        .map(|_| sample_gaussian(&mut rng, &hp.prior_mean, hp.sigma2_0))
        .collect();

    // Type codebook drawn from the mixture; every concept keeps at least
    // one type of its own so each cluster is representable.
    let mut codebook = Vec::with_capacity(vocab_size);
    let mut type_concepts = Vec::with_capacity(vocab_size);
    for c in 0..c_count.min(vocab_size) {
        codebook.push(sample_gaussian(&mut rng, &concept_means[c], hp.sigma2));
        type_concepts.push(c);
    }
    while codebook.len() < vocab_size {
        let c = rng.random_range(0..c_count);
        codebook.push(sample_gaussian(&mut rng, &concept_means[c], hp.sigma2));
        type_concepts.push(c);
    }

    let mut theta = Vec::with_capacity(num_docs);
    let mut true_z = Vec::with_capacity(num_docs * doc_len);
    let mut true_c = Vec::with_capacity(num_docs * doc_len);
    let width = (num_docs.max(vocab_size) as f64).log10().ceil().max(4.0) as usize;
    let mut segments: Vec<(String, Vec<String>)> = Vec::with_capacity(num_docs);
    for i in 0..num_docs {
        let th = sample_dirichlet(&mut rng, &hp.alpha);
        let mut tokens = Vec::with_capacity(doc_len);
        for _ in 0..doc_len {
            let z = sample_categorical(&mut rng, &th);
            let c = sample_categorical(&mut rng, &phi[z]);
            let v = sample_gaussian(&mut rng, &concept_means[c], hp.sigma2);
            let t = nearest_euclidean(&v, &codebook);
            true_z.push(z);
            true_c.push(c);
            tokens.push(format!("w{t:0width$}"));
        }
        theta.push(th);
        segments.push((format!("d{i:0width$}"), tokens));
    }

    let corpus = Corpus::from_segments(
        segments
            .into_iter()
            .map(|(id, toks)| (id, toks.into_iter().collect::<Vec<String>>())),
    )
    .map_err(|e| ModelError::Mismatch(format!("generated corpus invalid: {e}")))?;

    // Embeddings and cluster concepts over the words that actually occur.
    let mut entries = Vec::new();
    let mut word_concepts = vec![0usize; corpus.vocab().len()];
    for (id, word) in corpus.vocab().words().enumerate() {
        let t: usize = word[1..].parse().expect("synthetic word name");
        entries.push((id, codebook[t].clone()));
        word_concepts[id] = type_concepts[t];
    }
    let matrix = EmbeddingMatrix::from_vectors(dim, corpus.vocab().len(), entries)
        .map_err(|e| ModelError::Mismatch(format!("generated embeddings invalid: {e}")))?;

    Ok(SyntheticData {
        corpus: Arc::new(corpus),
        matrix: Arc::new(matrix),
        true_z,
        true_c,
        theta,
        phi,
        concept_means,
        word_concepts,
    })
}

/// Generation and keyword-replacement settings for the simulated experiment.
#[derive(Debug, Clone)]
pub struct SimulateConfig {
    pub num_docs: usize,
    pub doc_len: usize,
    pub num_topics: usize,
    pub num_concepts: usize,
    pub dim: usize,
    pub vocab_size: usize,
    /// Symmetric Dirichlet on θ; small values give near-single-topic
    /// documents.
    pub alpha: f64,
    /// Symmetric Dirichlet on φ; small values give topics over few concepts.
    pub beta: f64,
    pub sigma2: f64,
    pub sigma2_0: f64,
    /// Fraction of positive segments whose canonical word is swapped for a
    /// same-concept sibling, exercising presence without the keyword.
    pub replace_frac: f64,
    pub seed: u64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            num_docs: 300,
            doc_len: 40,
            num_topics: 12,
            num_concepts: 20,
            dim: 10,
            vocab_size: 240,
            alpha: 0.05,
            beta: 0.01,
            sigma2: 0.04,
            sigma2_0: 1.0,
            replace_frac: 0.5,
            seed: 42,
        }
    }
}

impl SimulateConfig {
    pub fn hyperparams(&self) -> LctmHyperparams {
        let mut hp = LctmHyperparams::new(self.num_topics, self.num_concepts, self.dim);
        hp.alpha = vec![self.alpha; self.num_topics];
        hp.beta = vec![self.beta; self.num_concepts];
        hp.sigma2 = self.sigma2;
        hp.sigma2_0 = self.sigma2_0;
        hp.seed = self.seed;
        hp
    }
}

/// One gold-standard query concept in the simulated experiment.
#[derive(Debug, Clone)]
pub struct TargetConcept {
    pub concept: usize,
    /// Query tag: the concept's canonical surface form.
    pub tag: String,
    /// Segment ids where the concept is truly present.
    pub positive_segments: BTreeSet<String>,
    /// Positive segments that no longer contain the canonical word.
    pub keyword_free: usize,
}

/// A generated corpus with keyword replacement applied and a gold standard
/// derived from the true concept assignments.
#[derive(Debug, Clone)]
pub struct SimulatedExperiment {
    pub data: SyntheticData,
    pub gold: Vec<GoldRecord>,
    pub targets: Vec<TargetConcept>,
}

impl SimulatedExperiment {
    /// Mean fraction of positive segments lacking their concept's canonical
    /// word, over all targets.
    pub fn keyword_free_fraction(&self) -> f64 {
        let mut frac = 0.0;
        let mut n = 0usize;
        for t in &self.targets {
            if !t.positive_segments.is_empty() {
                frac += t.keyword_free as f64 / t.positive_segments.len() as f64;
                n += 1;
            }
        }
        if n == 0 {
            0.0
        } else {
            frac / n as f64
        }
    }

    /// Writes corpus, embeddings, true assignments, and gold files.
    pub fn write_files(&self, dir: impl AsRef<Path>) -> Result<SimulatedPaths, ModelError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let paths = SimulatedPaths {
            corpus: dir.join("corpus.tsv"),
            embeddings: dir.join("embeddings.txt"),
            truth: dir.join("truth.tsv"),
            gold: dir.join("gold.tsv"),
        };
        self.data
            .corpus
            .save(&paths.corpus)
            .map_err(|e| ModelError::Mismatch(format!("corpus write: {e}")))?;
        self.data
            .matrix
            .save(&paths.embeddings, self.data.corpus.vocab())
            .map_err(|e| ModelError::Mismatch(format!("embeddings write: {e}")))?;
        let mut truth = String::new();
        let mut pos = 0usize;
        for seg in self.data.corpus.segments() {
            for (idx, &w) in seg.tokens.iter().enumerate() {
                truth.push_str(&format!(
                    "{}\t{}\t{}\t{}\t{}\n",
                    seg.id, idx, w, self.data.true_z[pos], self.data.true_c[pos]
                ));
                pos += 1;
            }
        }
        std::fs::write(&paths.truth, truth)?;
        write_gold(&paths.gold, &self.gold).map_err(|e| ModelError::Mismatch(e.to_string()))?;
        Ok(paths)
    }
}

#[derive(Debug, Clone)]
pub struct SimulatedPaths {
    pub corpus: PathBuf,
    pub embeddings: PathBuf,
    pub truth: PathBuf,
    pub gold: PathBuf,
}

// Targets need enough positive segments to be scoreable; concepts that
// surface only through stray mixture tails fall below this.
const MIN_POSITIVES: usize = 12;

/// Draws a synthetic corpus, swaps the canonical word for a same-concept
/// sibling in a `replace_frac` fraction of each target concept's positive
/// segments, and derives a two-annotator gold standard (one expert, one
/// not) from the true concept assignments.
pub fn simulate(cfg: &SimulateConfig) -> Result<SimulatedExperiment, ModelError> {
    let gen = generate_synthetic(
        &cfg.hyperparams(),
        cfg.dim,
        cfg.num_docs,
        cfg.doc_len,
        cfg.vocab_size,
    )?;
    let corpus = &gen.corpus;
    let vocab_len = corpus.vocab().len();

    // Token ids per segment, mutable for replacement.
    let mut seg_tokens: Vec<Vec<WordId>> =
        corpus.segments().iter().map(|s| s.tokens.clone()).collect();

    // Word frequencies within each concept's true token set.
    let mut word_freq = vec![vec![0usize; vocab_len]; cfg.num_concepts];
    let mut positives: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); cfg.num_concepts];
    let mut pos = 0usize;
    for (doc, seg) in corpus.segments().iter().enumerate() {
        for &w in &seg.tokens {
            let c = gen.true_c[pos];
            word_freq[c][w] += 1;
            positives[c].insert(doc);
            pos += 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5157_u64));
    let mut targets = Vec::new();
    for concept in 0..cfg.num_concepts {
        if positives[concept].len() < MIN_POSITIVES {
            continue;
        }
        // Canonical word: most frequent type among the concept's tokens.
        // Siblings: every other occurring type from the same cluster.
        let mut by_freq: Vec<(usize, WordId)> = word_freq[concept]
            .iter()
            .enumerate()
            .filter(|&(w, &f)| f > 0 && gen.word_concepts[w] == concept)
            .map(|(w, &f)| (f, w))
            .collect();
        by_freq.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        if by_freq.len() < 2 {
            continue; // no sibling word to replace with
        }
        let canonical = by_freq[0].1;
        let siblings: Vec<WordId> = by_freq[1..].iter().map(|&(_, w)| w).collect();

        for &doc in &positives[concept] {
            if rng.random::<f64>() < cfg.replace_frac {
                for w in &mut seg_tokens[doc] {
                    if *w == canonical {
                        *w = siblings[rng.random_range(0..siblings.len())];
                    }
                }
            }
        }
        targets.push((concept, canonical));
    }

    // Rebuild the corpus from surface forms; replacement may have removed
    // words entirely, so every id-indexed artifact is re-derived.
    let new_corpus = Corpus::from_segments(corpus.segments().iter().enumerate().map(
        |(doc, seg)| {
            let toks: Vec<String> = seg_tokens[doc]
                .iter()
                .map(|&w| corpus.vocab().word(w).expect("in vocab").to_string())
                .collect();
            (seg.id.clone(), toks)
        },
    ))
    .map_err(|e| ModelError::Mismatch(format!("replaced corpus invalid: {e}")))?;
    let mut entries = Vec::new();
    let mut word_concepts = vec![0usize; new_corpus.vocab().len()];
    for (id, word) in new_corpus.vocab().words().enumerate() {
        let old = corpus.vocab().id(word).expect("surface form existed");
        entries.push((id, gen.matrix.vector(old).expect("covered").to_vec()));
        word_concepts[id] = gen.word_concepts[old];
    }
    let new_matrix =
        EmbeddingMatrix::from_vectors(cfg.dim, new_corpus.vocab().len(), entries)
            .map_err(|e| ModelError::Mismatch(format!("replaced embeddings invalid: {e}")))?;

    // Gold: every (target, segment) pair, rated by one expert and one
    // non-expert annotator; present = the concept's tokens appear.
    let mut gold = Vec::new();
    let mut final_targets = Vec::new();
    for (concept, canonical) in targets {
        let tag = corpus.vocab().word(canonical).expect("in vocab").to_string();
        let positive_ids: BTreeSet<String> = positives[concept]
            .iter()
            .map(|&doc| corpus.segment(doc).id.clone())
            .collect();
        let canonical_new = new_corpus.vocab().id(&tag);
        let mut keyword_free = 0usize;
        for &doc in &positives[concept] {
            let has_kw = match canonical_new {
                Some(w) => new_corpus.segment(doc).tokens.contains(&w),
                None => false,
            };
            if !has_kw {
                keyword_free += 1;
            }
        }
        for seg in new_corpus.segments() {
            let present = positive_ids.contains(&seg.id);
            let rating = if present { 3 } else { 1 };
            for (annotator, expert) in [("sim-expert", true), ("sim-crowd", false)] {
                gold.push(GoldRecord {
                    segment_id: seg.id.clone(),
                    concept_tag: tag.clone(),
                    rating,
                    annotator_id: annotator.to_string(),
                    expert,
                });
            }
        }
        final_targets.push(TargetConcept {
            concept,
            tag,
            positive_segments: positive_ids,
            keyword_free,
        });
    }

    Ok(SimulatedExperiment {
        data: SyntheticData {
            corpus: Arc::new(new_corpus),
            matrix: Arc::new(new_matrix),
            true_z: gen.true_z,
            true_c: gen.true_c,
            theta: gen.theta,
            phi: gen.phi,
            concept_means: gen.concept_means,
            word_concepts,
        },
        gold,
        targets: final_targets,
    })
}
