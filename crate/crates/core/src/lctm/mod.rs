//! Latent concept topic model: topics are distributions over concepts, and
//! concepts are Gaussian-distributed points in the word-embedding space.
//!
//! Inference is collapsed Gibbs sampling. The document-topic and
//! topic-concept multinomials and the per-concept Gaussian means are all
//! integrated out; each sweep resamples the per-token topic assignment from
//!
//! ```text
//! p(z_w = k) ∝ (n_{i,k} + α_k) · (n_{k,c} + β_c) / (n_{k,·} + Σβ)
//! ```
//!
//! and the per-token concept assignment from
//!
//! ```text
//! p(c_w = c) ∝ (n_{c,k} + β_c) · N(v_w | μ̄_c, σ_c² I)
//! ```
//!
//! with all counts taken excluding the token being resampled. The Gaussian
//! factor is the conjugate posterior predictive with spherical covariance:
//! σ̂² = 1/(1/σ₀² + n/σ²), μ̄_c = σ̂²(μ/σ₀² + s_c/σ²), σ_c² = σ̂² + σ².

pub(crate) mod snapshot;
mod synthetic;

pub use snapshot::{load_model, save_model};
pub use synthetic::{
    generate_synthetic, simulate, SimulateConfig, SimulatedExperiment, SyntheticData,
    TargetConcept,
};

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::corpus::Corpus;
use crate::embeddings::EmbeddingMatrix;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
    #[error("token word {0:?} has no embedding")]
    UncoveredWord(String),
    #[error("{0} out of range")]
    OutOfRange(String),
    #[error("inconsistent model inputs: {0}")]
    Mismatch(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("snapshot corrupt: {0}")]
    Corrupt(String),
    #[error("snapshot format version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
}

/// Priors, variances, and run parameters for LCTM training.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct LctmHyperparams {
    pub num_topics: usize,
    pub num_concepts: usize,
    /// Dirichlet prior on the per-document topic distribution, length K.
    pub alpha: Vec<f64>,
    /// Dirichlet prior on the per-topic concept distribution, length C.
    pub beta: Vec<f64>,
    /// Word-generation variance σ².
    pub sigma2: f64,
    /// Concept-prior variance σ₀².
    pub sigma2_0: f64,
    /// Concept-prior mean μ, length D.
    pub prior_mean: Vec<f64>,
    pub sweeps: usize,
    pub seed: u64,
    /// Use σ² instead of σ̂² + σ² as the predictive variance.
    pub fixed_predictive_variance: bool,
}

impl LctmHyperparams {
    /// Symmetric defaults: α = 50/K, β = 0.1, σ² = 0.5, σ₀² = 1.0, zero
    /// prior mean.
    pub fn new(num_topics: usize, num_concepts: usize, dim: usize) -> Self {
        LctmHyperparams {
            num_topics,
            num_concepts,
            alpha: vec![50.0 / num_topics.max(1) as f64; num_topics],
            beta: vec![0.1; num_concepts],
            sigma2: 0.5,
            sigma2_0: 1.0,
            prior_mean: vec![0.0; dim],
            sweeps: 500,
            seed: 42,
            fixed_predictive_variance: false,
        }
    }

    /// Defaults with the prior mean centered on the embedding centroid,
    /// which keeps the concept prior on the data manifold.
    pub fn for_matrix(num_topics: usize, num_concepts: usize, matrix: &EmbeddingMatrix) -> Self {
        let mut hp = Self::new(num_topics, num_concepts, matrix.dim());
        if let Some(c) = matrix.centroid() {
            hp.prior_mean = c;
        }
        hp
    }

    pub fn dim(&self) -> usize {
        self.prior_mean.len()
    }

    pub fn sum_alpha(&self) -> f64 {
        self.alpha.iter().sum()
    }

    pub fn sum_beta(&self) -> f64 {
        self.beta.iter().sum()
    }

    pub fn validate(&self, dim: usize) -> Result<(), ModelError> {
        if self.num_topics == 0 || self.num_concepts == 0 {
            return Err(ModelError::InvalidHyperparams(
                "K and C must be >= 1".to_string(),
            ));
        }
        if self.alpha.len() != self.num_topics || self.alpha.iter().any(|&a| a <= 0.0) {
            return Err(ModelError::InvalidHyperparams(
                "alpha must have K strictly positive entries".to_string(),
            ));
        }
        if self.beta.len() != self.num_concepts || self.beta.iter().any(|&b| b <= 0.0) {
            return Err(ModelError::InvalidHyperparams(
                "beta must have C strictly positive entries".to_string(),
            ));
        }
        if self.sigma2 <= 0.0 || self.sigma2_0 <= 0.0 {
            return Err(ModelError::InvalidHyperparams(
                "variances must be strictly positive".to_string(),
            ));
        }
        if self.prior_mean.len() != dim {
            return Err(ModelError::InvalidHyperparams(format!(
                "prior mean has dimension {}, embeddings have {}",
                self.prior_mean.len(),
                dim
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenRef {
    pub doc: usize,
    pub word: usize,
}

/// Mutable sampler state: per-token assignments plus every sufficient
/// statistic the conditionals need.
#[derive(Debug, Clone)]
pub struct LctmState {
    num_docs: usize,
    num_topics: usize,
    num_concepts: usize,
    dim: usize,
    tokens: Vec<TokenRef>,
    doc_start: Vec<usize>,
    z: Vec<usize>,
    c: Vec<usize>,
    /// M×K: n_{i,k}
    n_doc_topic: Vec<u32>,
    /// K×C: n_{k,c}
    n_topic_concept: Vec<u32>,
    /// K: n_{k,·}
    n_topic: Vec<u32>,
    /// C: tokens per concept
    n_concept: Vec<u32>,
    /// C×D: elementwise sums of assigned embeddings s_c
    concept_sum: Vec<f64>,
}

impl LctmState {
    fn new(corpus: &Corpus, hp: &LctmHyperparams, dim: usize) -> Self {
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
        LctmState {
            num_docs: corpus.num_segments(),
            num_topics: hp.num_topics,
            num_concepts: hp.num_concepts,
            dim,
            tokens,
            doc_start,
            z: vec![0; n],
            c: vec![0; n],
            n_doc_topic: vec![0; corpus.num_segments() * hp.num_topics],
            n_topic_concept: vec![0; hp.num_topics * hp.num_concepts],
            n_topic: vec![0; hp.num_topics],
            n_concept: vec![0; hp.num_concepts],
            concept_sum: vec![0.0; hp.num_concepts * dim],
        }
    }

    pub fn num_tokens(&self) -> usize {
        self.tokens.len()
    }

    pub fn num_docs(&self) -> usize {
        self.num_docs
    }

    pub fn num_topics(&self) -> usize {
        self.num_topics
    }

    pub fn num_concepts(&self) -> usize {
        self.num_concepts
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn token(&self, pos: usize) -> TokenRef {
        self.tokens[pos]
    }

    pub fn tokens(&self) -> &[TokenRef] {
        &self.tokens
    }

    /// Flat position of the first token of a document.
    pub fn doc_start(&self, doc: usize) -> usize {
        self.doc_start[doc]
    }

    pub fn doc_len(&self, doc: usize) -> usize {
        self.doc_start[doc + 1] - self.doc_start[doc]
    }

    pub fn topic_assignments(&self) -> &[usize] {
        &self.z
    }

    pub fn concept_assignments(&self) -> &[usize] {
        &self.c
    }

    pub fn doc_topic_count(&self, doc: usize, k: usize) -> u32 {
        self.n_doc_topic[doc * self.num_topics + k]
    }

    pub fn topic_concept_count(&self, k: usize, c: usize) -> u32 {
        self.n_topic_concept[k * self.num_concepts + c]
    }

    pub fn topic_count(&self, k: usize) -> u32 {
        self.n_topic[k]
    }

    pub fn concept_count(&self, c: usize) -> u32 {
        self.n_concept[c]
    }

    pub fn concept_sum(&self, c: usize) -> &[f64] {
        &self.concept_sum[c * self.dim..(c + 1) * self.dim]
    }

    fn increment(&mut self, pos: usize, z: usize, c: usize, v: &[f64]) {
        let doc = self.tokens[pos].doc;
        self.z[pos] = z;
        self.c[pos] = c;
        self.n_doc_topic[doc * self.num_topics + z] += 1;
        self.n_topic_concept[z * self.num_concepts + c] += 1;
        self.n_topic[z] += 1;
        self.n_concept[c] += 1;
        for (s, x) in self.concept_sum[c * self.dim..(c + 1) * self.dim]
            .iter_mut()
            .zip(v)
        {
            *s += x;
        }
    }

    fn decrement(&mut self, pos: usize, v: &[f64]) {
        let doc = self.tokens[pos].doc;
        let z = self.z[pos];
        let c = self.c[pos];
        self.n_doc_topic[doc * self.num_topics + z] -= 1;
        self.n_topic_concept[z * self.num_concepts + c] -= 1;
        self.n_topic[z] -= 1;
        self.n_concept[c] -= 1;
        for (s, x) in self.concept_sum[c * self.dim..(c + 1) * self.dim]
            .iter_mut()
            .zip(v)
        {
            *s -= x;
        }
    }

    /// Moves one token to a new (topic, concept) pair, keeping every count
    /// consistent.
    pub fn reassign(
        &mut self,
        matrix: &EmbeddingMatrix,
        pos: usize,
        new_z: usize,
        new_c: usize,
    ) -> Result<(), ModelError> {
        if pos >= self.tokens.len() {
            return Err(ModelError::OutOfRange(format!("token position {pos}")));
        }
        if new_z >= self.num_topics || new_c >= self.num_concepts {
            return Err(ModelError::OutOfRange(format!(
                "assignment ({new_z}, {new_c})"
            )));
        }
        let v = matrix
            .vector(self.tokens[pos].word)
            .ok_or_else(|| ModelError::Mismatch("token word uncovered".to_string()))?
            .to_vec();
        self.decrement(pos, &v);
        self.increment(pos, new_z, new_c, &v);
        Ok(())
    }

    /// Recomputes every concept-sum row from the assignments.
    pub fn rebuild_concept_sums(&self, matrix: &EmbeddingMatrix) -> Vec<f64> {
        let mut sums = vec![0.0; self.num_concepts * self.dim];
        for (pos, tok) in self.tokens.iter().enumerate() {
            let v = matrix.vector(tok.word).expect("covered token");
            let c = self.c[pos];
            for (s, x) in sums[c * self.dim..(c + 1) * self.dim].iter_mut().zip(v) {
                *s += x;
            }
        }
        sums
    }

    /// Checks every count against a from-scratch rebuild. `sum_tol` bounds
    /// the allowed elementwise drift of the incremental concept sums.
    pub fn check_invariants(
        &self,
        matrix: &EmbeddingMatrix,
        sum_tol: f64,
    ) -> Result<(), String> {
        let total: u32 = self.n_concept.iter().sum();
        if total as usize != self.tokens.len() {
            return Err(format!(
                "concept counts sum to {total}, expected {}",
                self.tokens.len()
            ));
        }
        let mut doc_topic = vec![0u32; self.n_doc_topic.len()];
        let mut topic_concept = vec![0u32; self.n_topic_concept.len()];
        let mut topic = vec![0u32; self.num_topics];
        let mut concept = vec![0u32; self.num_concepts];
        for (pos, tok) in self.tokens.iter().enumerate() {
            doc_topic[tok.doc * self.num_topics + self.z[pos]] += 1;
            topic_concept[self.z[pos] * self.num_concepts + self.c[pos]] += 1;
            topic[self.z[pos]] += 1;
            concept[self.c[pos]] += 1;
        }
        if doc_topic != self.n_doc_topic {
            return Err("doc-topic counts disagree with assignments".to_string());
        }
        if topic_concept != self.n_topic_concept {
            return Err("topic-concept counts disagree with assignments".to_string());
        }
        if topic != self.n_topic {
            return Err("topic totals disagree with assignments".to_string());
        }
        if concept != self.n_concept {
            return Err("concept totals disagree with assignments".to_string());
        }
        for doc in 0..self.num_docs {
            let row: u32 = self.n_doc_topic[doc * self.num_topics..(doc + 1) * self.num_topics]
                .iter()
                .sum();
            if row as usize != self.doc_len(doc) {
                return Err(format!("doc {doc} topic row does not sum to its length"));
            }
        }
        for k in 0..self.num_topics {
            let row: u32 = self.n_topic_concept[k * self.num_concepts..(k + 1) * self.num_concepts]
                .iter()
                .sum();
            if row != self.n_topic[k] {
                return Err(format!("topic {k} concept row does not sum to its total"));
            }
        }
        let rebuilt = self.rebuild_concept_sums(matrix);
        for (i, (a, b)) in self.concept_sum.iter().zip(&rebuilt).enumerate() {
            if (a - b).abs() > sum_tol {
                return Err(format!(
                    "concept sum entry {i} drifted: incremental {a}, rebuilt {b}"
                ));
            }
        }
        Ok(())
    }
}

/// Draws uniform random topic and concept assignments for every token.
/// Every token's word must be embedding-covered.
pub fn init_state(
    corpus: &Corpus,
    matrix: &EmbeddingMatrix,
    hp: &LctmHyperparams,
) -> Result<LctmState, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    init_state_with_rng(corpus, matrix, hp, &mut rng)
}

fn init_state_with_rng(
    corpus: &Corpus,
    matrix: &EmbeddingMatrix,
    hp: &LctmHyperparams,
    rng: &mut impl Rng,
) -> Result<LctmState, ModelError> {
    hp.validate(matrix.dim())?;
    for seg in corpus.segments() {
        for &w in &seg.tokens {
            if !matrix.is_covered(w) {
                let word = corpus.vocab().word(w).unwrap_or("?").to_string();
                return Err(ModelError::UncoveredWord(word));
            }
        }
    }
    let mut state = LctmState::new(corpus, hp, matrix.dim());
    for pos in 0..state.tokens.len() {
        let z = rng.random_range(0..hp.num_topics);
        let c = rng.random_range(0..hp.num_concepts);
        let v = matrix.vector(state.tokens[pos].word).expect("covered");
        // increment reads from state, so copy the row out first
        let v = v.to_vec();
        state.increment(pos, z, c, &v);
    }
    Ok(state)
}

/// Posterior mean and predictive variance of one concept's Gaussian,
/// optionally excluding one token position. With no assigned vectors this
/// is the prior predictive (μ, σ₀² + σ²).
pub fn concept_posterior(
    state: &LctmState,
    matrix: &EmbeddingMatrix,
    hp: &LctmHyperparams,
    concept: usize,
    exclude: Option<usize>,
) -> (Vec<f64>, f64) {
    let (minus_n, minus_vec) = match exclude {
        Some(pos) if state.c[pos] == concept => {
            (1u32, matrix.vector(state.tokens[pos].word))
        }
        _ => (0, None),
    };
    let n = (state.n_concept[concept] - minus_n) as f64;
    let posterior_var = 1.0 / (1.0 / hp.sigma2_0 + n / hp.sigma2);
    let mut mean = Vec::with_capacity(state.dim);
    let sum = state.concept_sum(concept);
    for d in 0..state.dim {
        let s = sum[d] - minus_vec.map_or(0.0, |v| v[d]);
        mean.push(posterior_var * (hp.prior_mean[d] / hp.sigma2_0 + s / hp.sigma2));
    }
    let predictive = if hp.fixed_predictive_variance {
        hp.sigma2
    } else {
        posterior_var + hp.sigma2
    };
    (mean, predictive)
}

// Log predictive density of `v` under one concept, with `minus_n` tokens and
// `minus_vec` removed from that concept's statistics. Allocation-free so the
// sweep can call it per (token, concept).
fn concept_log_predictive(
    state: &LctmState,
    hp: &LctmHyperparams,
    concept: usize,
    v: &[f64],
    minus_n: u32,
    minus_vec: Option<&[f64]>,
) -> f64 {
    let n = (state.n_concept[concept] - minus_n) as f64;
    let posterior_var = 1.0 / (1.0 / hp.sigma2_0 + n / hp.sigma2);
    let predictive = if hp.fixed_predictive_variance {
        hp.sigma2
    } else {
        posterior_var + hp.sigma2
    };
    let sum = state.concept_sum(concept);
    let mut sq = 0.0;
    for d in 0..state.dim {
        let s = sum[d] - minus_vec.map_or(0.0, |m| m[d]);
        let mean = posterior_var * (hp.prior_mean[d] / hp.sigma2_0 + s / hp.sigma2);
        let diff = v[d] - mean;
        sq += diff * diff;
    }
    -0.5 * state.dim as f64 * (2.0 * std::f64::consts::PI * predictive).ln()
        - 0.5 * sq / predictive
}

// Unnormalized topic weights for a token of document `doc` whose concept is
// `concept`. `excluded_topic` subtracts the token's own contribution when it
// is still counted.
fn topic_weights_into(
    state: &LctmState,
    hp: &LctmHyperparams,
    doc: usize,
    concept: usize,
    excluded_topic: Option<usize>,
    out: &mut [f64],
) {
    let sum_beta = hp.sum_beta();
    let beta_c = hp.beta[concept];
    for k in 0..state.num_topics {
        let held = (excluded_topic == Some(k)) as u32;
        let n_ik = (state.n_doc_topic[doc * state.num_topics + k] - held) as f64;
        let n_kc = (state.n_topic_concept[k * state.num_concepts + concept] - held) as f64;
        let n_k = (state.n_topic[k] - held) as f64;
        out[k] = (n_ik + hp.alpha[k]) * (n_kc + beta_c) / (n_k + sum_beta);
    }
}

// Log-space concept weights for a token with vector `v` under topic `topic`.
// `excluded` carries the token's current concept and vector when it is still
// counted.
fn concept_log_weights_into(
    state: &LctmState,
    hp: &LctmHyperparams,
    topic: usize,
    v: &[f64],
    excluded: Option<(usize, &[f64])>,
    out: &mut [f64],
) {
    for c in 0..state.num_concepts {
        let (minus_n, minus_vec) = match excluded {
            Some((ec, ev)) if ec == c => (1u32, Some(ev)),
            _ => (0, None),
        };
        let held = minus_n;
        let n_ck = (state.n_topic_concept[topic * state.num_concepts + c] - held) as f64;
        out[c] = (n_ck + hp.beta[c]).ln()
            + concept_log_predictive(state, hp, c, v, minus_n, minus_vec);
    }
}

fn normalize(weights: &mut [f64]) {
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }
}

// Max-shift exponentiation: log weights to normalized probabilities.
fn log_normalize(weights: &mut [f64]) {
    let max = weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    for w in weights.iter_mut() {
        *w = (*w - max).exp();
    }
    normalize(weights);
}

/// Full conditional over topics for the token at `pos`, with that token's
/// current assignment excluded from every count.
pub fn topic_conditional(state: &LctmState, hp: &LctmHyperparams, pos: usize) -> Vec<f64> {
    let tok = state.tokens[pos];
    let mut out = vec![0.0; state.num_topics];
    topic_weights_into(state, hp, tok.doc, state.c[pos], Some(state.z[pos]), &mut out);
    normalize(&mut out);
    out
}

/// Full conditional over concepts for the token at `pos`, with that token's
/// current assignment excluded from every count. Densities are computed in
/// log space and normalized by max-shift exponentiation.
pub fn concept_conditional(
    state: &LctmState,
    matrix: &EmbeddingMatrix,
    hp: &LctmHyperparams,
    pos: usize,
) -> Vec<f64> {
    let tok = state.tokens[pos];
    let v = matrix.vector(tok.word).expect("covered token");
    let mut out = vec![0.0; state.num_concepts];
    concept_log_weights_into(state, hp, state.z[pos], v, Some((state.c[pos], v)), &mut out);
    log_normalize(&mut out);
    out
}

fn sample_index(rng: &mut impl Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// One full Gibbs sweep: every token position is visited in order; at each,
/// the topic is resampled given the current concept, then the concept given
/// the new topic.
pub fn gibbs_sweep(
    state: &mut LctmState,
    matrix: &EmbeddingMatrix,
    hp: &LctmHyperparams,
    rng: &mut impl Rng,
) {
    let mut topic_w = vec![0.0; state.num_topics];
    let mut concept_w = vec![0.0; state.num_concepts];
    let mut v = vec![0.0; state.dim];
    for pos in 0..state.tokens.len() {
        v.copy_from_slice(matrix.vector(state.tokens[pos].word).expect("covered"));
        let doc = state.tokens[pos].doc;
        let cur_c = state.c[pos];
        state.decrement(pos, &v);

        topic_weights_into(state, hp, doc, cur_c, None, &mut topic_w);
        let new_z = sample_index(rng, &topic_w);

        concept_log_weights_into(state, hp, new_z, &v, None, &mut concept_w);
        let max = concept_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for w in concept_w.iter_mut() {
            *w = (*w - max).exp();
        }
        let new_c = sample_index(rng, &concept_w);

        state.increment(pos, new_z, new_c, &v);
    }
}

/// Collapsed log joint density log p(z, c, v): Dirichlet-multinomial terms
/// for the count matrices plus, per concept, the Gaussian marginal of its
/// assigned vectors computed by sequential predictive factorization.
pub fn log_joint(state: &LctmState, matrix: &EmbeddingMatrix, hp: &LctmHyperparams) -> f64 {
    let mut total = 0.0;
    let sum_alpha = hp.sum_alpha();
    let sum_beta = hp.sum_beta();

    for doc in 0..state.num_docs {
        total += ln_gamma(sum_alpha) - ln_gamma(state.doc_len(doc) as f64 + sum_alpha);
        for k in 0..state.num_topics {
            let n = state.n_doc_topic[doc * state.num_topics + k] as f64;
            total += ln_gamma(n + hp.alpha[k]) - ln_gamma(hp.alpha[k]);
        }
    }

    for k in 0..state.num_topics {
        total += ln_gamma(sum_beta) - ln_gamma(state.n_topic[k] as f64 + sum_beta);
        for c in 0..state.num_concepts {
            let n = state.n_topic_concept[k * state.num_concepts + c] as f64;
            total += ln_gamma(n + hp.beta[c]) - ln_gamma(hp.beta[c]);
        }
    }

    // Marginal likelihood of the assigned vectors, one predictive factor per
    // token against the running statistics of its concept.
    let mut run_n = vec![0u32; state.num_concepts];
    let mut run_sum = vec![0.0; state.num_concepts * state.dim];
    for pos in 0..state.tokens.len() {
        let c = state.c[pos];
        let v = matrix.vector(state.tokens[pos].word).expect("covered");
        let n = run_n[c] as f64;
        let posterior_var = 1.0 / (1.0 / hp.sigma2_0 + n / hp.sigma2);
        let predictive = if hp.fixed_predictive_variance {
            hp.sigma2
        } else {
            posterior_var + hp.sigma2
        };
        let sum = &run_sum[c * state.dim..(c + 1) * state.dim];
        let mut sq = 0.0;
        for d in 0..state.dim {
            let mean = posterior_var * (hp.prior_mean[d] / hp.sigma2_0 + sum[d] / hp.sigma2);
            let diff = v[d] - mean;
            sq += diff * diff;
        }
        total += -0.5 * state.dim as f64 * (2.0 * std::f64::consts::PI * predictive).ln()
            - 0.5 * sq / predictive;
        run_n[c] += 1;
        for (s, x) in run_sum[c * state.dim..(c + 1) * state.dim]
            .iter_mut()
            .zip(v)
        {
            *s += x;
        }
    }
    total
}

/// A trained model: frozen state, hyperparameters, cached concept posterior
/// means, and the corpus/embeddings it was trained against.
#[derive(Debug, Clone)]
pub struct LctmModel {
    hp: LctmHyperparams,
    state: LctmState,
    concept_means: Vec<f64>,
    corpus: Arc<Corpus>,
    matrix: Arc<EmbeddingMatrix>,
}

impl LctmModel {
    fn from_state(
        state: LctmState,
        hp: LctmHyperparams,
        corpus: Arc<Corpus>,
        matrix: Arc<EmbeddingMatrix>,
    ) -> Self {
        let mut means = Vec::with_capacity(hp.num_concepts * state.dim());
        for c in 0..hp.num_concepts {
            let (mean, _) = concept_posterior(&state, &matrix, &hp, c, None);
            means.extend(mean);
        }
        LctmModel {
            hp,
            state,
            concept_means: means,
            corpus,
            matrix,
        }
    }

    /// Rebuilds a model from explicit per-token assignments; counts are
    /// derived and validated.
    pub fn from_assignments(
        corpus: &Arc<Corpus>,
        matrix: &Arc<EmbeddingMatrix>,
        hp: &LctmHyperparams,
        z: &[usize],
        c: &[usize],
    ) -> Result<Self, ModelError> {
        hp.validate(matrix.dim())?;
        if z.len() != corpus.total_tokens() || c.len() != corpus.total_tokens() {
            return Err(ModelError::Mismatch(format!(
                "{} topic and {} concept assignments for {} tokens",
                z.len(),
                c.len(),
                corpus.total_tokens()
            )));
        }
        let mut state = LctmState::new(corpus, hp, matrix.dim());
        for pos in 0..state.tokens.len() {
            if z[pos] >= hp.num_topics || c[pos] >= hp.num_concepts {
                return Err(ModelError::OutOfRange(format!(
                    "assignment ({}, {}) at position {pos}",
                    z[pos], c[pos]
                )));
            }
            let word = state.tokens[pos].word;
            let v = matrix
                .vector(word)
                .ok_or_else(|| {
                    let w = corpus.vocab().word(word).unwrap_or("?").to_string();
                    ModelError::UncoveredWord(w)
                })?
                .to_vec();
            state.increment(pos, z[pos], c[pos], &v);
        }
        Ok(Self::from_state(
            state,
            hp.clone(),
            Arc::clone(corpus),
            Arc::clone(matrix),
        ))
    }

    pub fn hp(&self) -> &LctmHyperparams {
        &self.hp
    }

    pub fn state(&self) -> &LctmState {
        &self.state
    }

    pub fn corpus(&self) -> &Arc<Corpus> {
        &self.corpus
    }

    pub fn matrix(&self) -> &Arc<EmbeddingMatrix> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.state.dim()
    }

    /// Cached posterior mean μ̄_c of one concept.
    pub fn concept_mean(&self, c: usize) -> &[f64] {
        &self.concept_means[c * self.state.dim()..(c + 1) * self.state.dim()]
    }

    /// Smoothed point estimate θ̂_i over topics for one document.
    pub fn estimate_theta(&self, doc: usize) -> Result<Vec<f64>, ModelError> {
        if doc >= self.state.num_docs {
            return Err(ModelError::OutOfRange(format!("document {doc}")));
        }
        let n_i = self.state.doc_len(doc) as f64;
        let denom = n_i + self.hp.sum_alpha();
        Ok((0..self.hp.num_topics)
            .map(|k| (self.state.doc_topic_count(doc, k) as f64 + self.hp.alpha[k]) / denom)
            .collect())
    }

    /// Smoothed point estimate φ̂_k over concepts for one topic.
    pub fn estimate_phi(&self, k: usize) -> Result<Vec<f64>, ModelError> {
        if k >= self.hp.num_topics {
            return Err(ModelError::OutOfRange(format!("topic {k}")));
        }
        let denom = self.state.topic_count(k) as f64 + self.hp.sum_beta();
        Ok((0..self.hp.num_concepts)
            .map(|c| (self.state.topic_concept_count(k, c) as f64 + self.hp.beta[c]) / denom)
            .collect())
    }
}

/// Trains an LCTM by collapsed Gibbs sampling: uniform random init, then
/// `hp.sweeps` sweeps, all randomness drawn from one stream seeded with
/// `hp.seed`. The final sample is frozen into the model.
pub fn train(
    corpus: &Arc<Corpus>,
    matrix: &Arc<EmbeddingMatrix>,
    hp: &LctmHyperparams,
) -> Result<LctmModel, ModelError> {
    train_with_progress(corpus, matrix, hp, |_, _| {})
}

/// [`train`] with a callback invoked as `(sweep, log_joint)` every 100
/// sweeps and at the start and end of the run.
pub fn train_with_progress(
    corpus: &Arc<Corpus>,
    matrix: &Arc<EmbeddingMatrix>,
    hp: &LctmHyperparams,
    mut progress: impl FnMut(usize, f64),
) -> Result<LctmModel, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut state = init_state_with_rng(corpus, matrix, hp, &mut rng)?;
    progress(0, log_joint(&state, matrix, hp));
    for sweep in 1..=hp.sweeps {
        gibbs_sweep(&mut state, matrix, hp, &mut rng);
        if sweep % 100 == 0 || sweep == hp.sweeps {
            progress(sweep, log_joint(&state, matrix, hp));
        }
    }
    Ok(LctmModel::from_state(
        state,
        hp.clone(),
        Arc::clone(corpus),
        Arc::clone(matrix),
    ))
}
