//! Independent oracles and fixture builders shared by the integration
//! suites. Everything here re-derives its answer from corpus, assignments,
//! and hyperparameters with plain nested loops, separate from the library's
//! implementation paths.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

use lctm_core::corpus::Corpus;
use lctm_core::embeddings::EmbeddingMatrix;
use lctm_core::lctm::{LctmHyperparams, LctmModel};
use lctm_core::lda::LdaHyperparams;

/// Flat (doc, word) token table straight off the corpus.
pub fn flat_tokens(corpus: &Corpus) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(corpus.total_tokens());
    for (doc, seg) in corpus.segments().iter().enumerate() {
        for &w in &seg.tokens {
            out.push((doc, w));
        }
    }
    out
}

/// Collapsed LDA log joint computed from scratch: Dirichlet-multinomial
/// terms for counts accumulated here, not taken from any model.
pub fn lda_log_joint_oracle(corpus: &Corpus, hp: &LdaHyperparams, z: &[usize]) -> f64 {
    let k_count = hp.num_topics;
    let v = corpus.vocab().len();
    let tokens = flat_tokens(corpus);
    let mut n_doc_topic = vec![0u64; corpus.num_segments() * k_count];
    let mut n_topic_word = vec![0u64; k_count * v];
    let mut n_topic = vec![0u64; k_count];
    for (pos, &(doc, w)) in tokens.iter().enumerate() {
        n_doc_topic[doc * k_count + z[pos]] += 1;
        n_topic_word[z[pos] * v + w] += 1;
        n_topic[z[pos]] += 1;
    }
    let sum_alpha = hp.alpha * k_count as f64;
    let sum_beta = hp.beta_w * v as f64;
    let mut total = 0.0;
    for (doc, seg) in corpus.segments().iter().enumerate() {
        total += ln_gamma(sum_alpha) - ln_gamma(seg.tokens.len() as f64 + sum_alpha);
        for k in 0..k_count {
            total +=
                ln_gamma(n_doc_topic[doc * k_count + k] as f64 + hp.alpha) - ln_gamma(hp.alpha);
        }
    }
    for k in 0..k_count {
        total += ln_gamma(sum_beta) - ln_gamma(n_topic[k] as f64 + sum_beta);
        for w in 0..v {
            total += ln_gamma(n_topic_word[k * v + w] as f64 + hp.beta_w) - ln_gamma(hp.beta_w);
        }
    }
    total
}

fn oracle_cosine(u: &[f64], v: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    dot / (nu.sqrt() * nv.sqrt())
}

/// Concept posterior means from the conjugate formula, re-derived per
/// concept with a fresh scan over all tokens.
pub fn oracle_concept_means(
    corpus: &Corpus,
    matrix: &EmbeddingMatrix,
    hp: &LctmHyperparams,
    c_assign: &[usize],
) -> Vec<Vec<f64>> {
    let tokens = flat_tokens(corpus);
    let dim = matrix.dim();
    let mut means = Vec::with_capacity(hp.num_concepts);
    for concept in 0..hp.num_concepts {
        let mut n = 0usize;
        let mut s = vec![0.0; dim];
        for (pos, &(_, w)) in tokens.iter().enumerate() {
            if c_assign[pos] == concept {
                n += 1;
                for (acc, x) in s.iter_mut().zip(matrix.vector(w).unwrap()) {
                    *acc += x;
                }
            }
        }
        let post_var = 1.0 / (1.0 / hp.sigma2_0 + n as f64 / hp.sigma2);
        let mean: Vec<f64> = (0..dim)
            .map(|d| post_var * (hp.prior_mean[d] / hp.sigma2_0 + s[d] / hp.sigma2))
            .collect();
        means.push(mean);
    }
    means
}

/// Brute-force chain executor: walks the chain string itself and re-derives
/// every hop with nested loops over segments and token positions.
pub fn oracle_chain_execute(
    chain: &str,
    word: Option<usize>,
    qvec: Option<&[f64]>,
    corpus: &Corpus,
    matrix: &EmbeddingMatrix,
    hp: &LctmHyperparams,
    z: &[usize],
    c: &[usize],
) -> BTreeSet<String> {
    let tokens = flat_tokens(corpus);
    let chars: Vec<char> = chain.chars().collect();
    let value = |pos: usize, kind: char| -> usize {
        match kind {
            'w' => tokens[pos].1,
            'c' => c[pos],
            'z' => z[pos],
            'd' => tokens[pos].0,
            _ => panic!("no position value for {kind}"),
        }
    };

    let mut kind = chars[0];
    let mut items: BTreeSet<usize> = BTreeSet::new();
    if kind == 'w' {
        items.insert(word.expect("word query"));
    }
    let mut i = 1;
    while i < chars.len() {
        let trans = chars[i];
        let next = chars[i + 1];
        match trans {
            'E' => {
                let query: Vec<f64> = match kind {
                    'w' => matrix.vector(word.unwrap()).unwrap().to_vec(),
                    'q' => qvec.expect("vector query").to_vec(),
                    _ => panic!("E from {kind}"),
                };
                let means = oracle_concept_means(corpus, matrix, hp, c);
                let mut best = 0;
                let mut best_sim = f64::NEG_INFINITY;
                for (idx, mean) in means.iter().enumerate() {
                    let sim = oracle_cosine(&query, mean);
                    if sim > best_sim {
                        best_sim = sim;
                        best = idx;
                    }
                }
                items = BTreeSet::from([best]);
            }
            'A' => {
                let mut out = BTreeSet::new();
                for x in &items {
                    for pos in 0..tokens.len() {
                        if value(pos, kind) == *x {
                            out.insert(value(pos, next));
                        }
                    }
                }
                items = out;
            }
            _ => panic!("bad transition {trans}"),
        }
        kind = next;
        i += 2;
    }
    items
        .into_iter()
        .map(|doc| corpus.segment(doc).id.clone())
        .collect()
}

/// Chance-corrected clustering agreement between two labelings.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let ka = a.iter().max().map_or(0, |&m| m + 1);
    let kb = b.iter().max().map_or(0, |&m| m + 1);
    let mut table = vec![0u64; ka * kb];
    let mut rows = vec![0u64; ka];
    let mut cols = vec![0u64; kb];
    for (&x, &y) in a.iter().zip(b) {
        table[x * kb + y] += 1;
        rows[x] += 1;
        cols[y] += 1;
    }
    let comb2 = |n: u64| n as f64 * (n as f64 - 1.0) / 2.0;
    let sum_ij: f64 = table.iter().map(|&n| comb2(n)).sum();
    let sum_a: f64 = rows.iter().map(|&n| comb2(n)).sum();
    let sum_b: f64 = cols.iter().map(|&n| comb2(n)).sum();
    let total = comb2(a.len() as u64);
    let expected = sum_a * sum_b / total;
    let max = 0.5 * (sum_a + sum_b);
    if (max - expected).abs() < 1e-12 {
        return 1.0;
    }
    (sum_ij - expected) / (max - expected)
}

/// A random tiny corpus + covered embeddings + hyperparameters + uniform
/// random assignments, for the oracle-equivalence and chain suites.
pub struct RandomFixture {
    pub corpus: Arc<Corpus>,
    pub matrix: Arc<EmbeddingMatrix>,
    pub hp: LctmHyperparams,
    pub z: Vec<usize>,
    pub c: Vec<usize>,
}

pub struct FixtureShape {
    pub max_segments: usize,
    pub max_seg_len: usize,
    pub num_words: usize,
    pub num_topics: usize,
    pub num_concepts: usize,
    pub dim: usize,
}

pub fn random_fixture(rng: &mut ChaCha8Rng, shape: &FixtureShape) -> RandomFixture {
    let nseg = rng.random_range(1..=shape.max_segments);
    let segments: Vec<(String, Vec<String>)> = (0..nseg)
        .map(|i| {
            let len = rng.random_range(1..=shape.max_seg_len);
            let toks = (0..len)
                .map(|_| format!("t{}", rng.random_range(0..shape.num_words)))
                .collect();
            (format!("s{i}"), toks)
        })
        .collect();
    let corpus = Arc::new(Corpus::from_segments(segments).unwrap());
    let entries: Vec<(usize, Vec<f64>)> = (0..corpus.vocab().len())
        .map(|id| {
            let v: Vec<f64> = (0..shape.dim)
                .map(|_| rng.random::<f64>() * 4.0 - 2.0)
                .collect();
            (id, v)
        })
        .collect();
    let matrix = Arc::new(
        EmbeddingMatrix::from_vectors(shape.dim, corpus.vocab().len(), entries).unwrap(),
    );
    let mut hp = LctmHyperparams::new(shape.num_topics, shape.num_concepts, shape.dim);
    hp.alpha = (0..shape.num_topics)
        .map(|_| rng.random::<f64>() * 1.5 + 0.05)
        .collect();
    hp.beta = (0..shape.num_concepts)
        .map(|_| rng.random::<f64>() * 1.5 + 0.05)
        .collect();
    hp.sigma2 = rng.random::<f64>() + 0.2;
    hp.sigma2_0 = rng.random::<f64>() + 0.5;
    hp.prior_mean = (0..shape.dim)
        .map(|_| rng.random::<f64>() * 2.0 - 1.0)
        .collect();
    let total = corpus.total_tokens();
    let z: Vec<usize> = (0..total)
        .map(|_| rng.random_range(0..shape.num_topics))
        .collect();
    let c: Vec<usize> = (0..total)
        .map(|_| rng.random_range(0..shape.num_concepts))
        .collect();
    RandomFixture {
        corpus,
        matrix,
        hp,
        z,
        c,
    }
}

impl RandomFixture {
    pub fn model(&self) -> LctmModel {
        LctmModel::from_assignments(&self.corpus, &self.matrix, &self.hp, &self.z, &self.c)
            .unwrap()
    }
}
