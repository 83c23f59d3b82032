//! Concept detection over a latent concept topic model.
//!
//! The pipeline: ingest a pre-tokenized segmented corpus and a word2vec
//! text embedding matrix, train an LCTM (or a collapsed-Gibbs LDA baseline),
//! run concept-extension chains such as `wAzAd` or `qEcAzAd` against the
//! frozen sample, and score the resulting segment sets against human
//! annotations with the Matthews correlation coefficient.

pub mod chains;
pub mod corpus;
pub mod embeddings;
pub mod eval;
pub mod lctm;
pub mod lda;

pub use corpus::{Corpus, CorpusError, Vocabulary, WordId};
pub use embeddings::{compose_query, cosine, nearest, EmbeddingError, EmbeddingMatrix, QueryVector};
pub use lctm::{LctmHyperparams, LctmModel, LctmState, ModelError};
pub use lda::{train_lda, LdaHyperparams, LdaModel};
