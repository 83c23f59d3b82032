//! Concept-extension chains: pipelines over word → concept → topic →
//! document relations defined by a frozen model's assignments.
//!
//! Notation: `w`, `q`, `c`, `z`, `d` name word, vector query, concept,
//! topic, and document nodes. `xAy` collects every y co-assigned at a token
//! position carrying x; `xEy` hops to the single concept whose mean vector
//! is cosine-closest to x's vector. Chains start at `w` or `q`, end at `d`,
//! and only the eleven canonical spellings are admissible.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::corpus::WordId;
use crate::embeddings::{self, EmbeddingError, QueryVector};
use crate::lctm::LctmModel;

/// The eleven admissible chains: eight word-query forms and three
/// vector-query forms.
pub const ADMISSIBLE_CHAINS: [&str; 11] = [
    "wAcAd",
    "wAcAzAcAd",
    "wAcAzAd",
    "wAzAcAd",
    "wAzAd",
    "wEcAd",
    "wEcAzAcAd",
    "wEcAzAd",
    "qEcAd",
    "qEcAzAcAd",
    "qEcAzAd",
];

#[derive(Debug, Error)]
pub enum ChainError {
    #[error("chain parse error: {0}")]
    Parse(String),
    #[error("invalid assignment step {0} -> {1}")]
    InvalidStep(NodeKind, NodeKind),
    #[error("{0}")]
    QueryMismatch(String),
    #[error("word id {0} outside the vocabulary")]
    UnknownWord(WordId),
    #[error("word {0:?} has no embedding, required by an E chain")]
    Uncovered(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Word,
    QueryVec,
    Concept,
    Topic,
    Document,
}

impl NodeKind {
    fn symbol(self) -> char {
        match self {
            NodeKind::Word => 'w',
            NodeKind::QueryVec => 'q',
            NodeKind::Concept => 'c',
            NodeKind::Topic => 'z',
            NodeKind::Document => 'd',
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transition {
    /// Co-assignment hop over token positions.
    Assign,
    /// Embedding hop to the cosine-nearest concept.
    Embed,
}

/// A parsed, admissible chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chain {
    nodes: Vec<NodeKind>,
    transitions: Vec<Transition>,
}

impl Chain {
    pub fn nodes(&self) -> &[NodeKind] {
        &self.nodes
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn starts_with_vector(&self) -> bool {
        self.nodes[0] == NodeKind::QueryVec
    }

    /// The canonical spelling, one of [`ADMISSIBLE_CHAINS`].
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        s.push(self.nodes[0].symbol());
        for (t, n) in self.transitions.iter().zip(&self.nodes[1..]) {
            s.push(match t {
                Transition::Assign => 'A',
                Transition::Embed => 'E',
            });
            s.push(n.symbol());
        }
        s
    }
}

impl fmt::Display for Chain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.canonical())
    }
}

const A_STEPS: [(NodeKind, NodeKind); 6] = [
    (NodeKind::Word, NodeKind::Concept),
    (NodeKind::Word, NodeKind::Topic),
    (NodeKind::Concept, NodeKind::Topic),
    (NodeKind::Topic, NodeKind::Concept),
    (NodeKind::Concept, NodeKind::Document),
    (NodeKind::Topic, NodeKind::Document),
];

/// Parses and validates a chain string against the canonical set.
pub fn parse_chain(s: &str) -> Result<Chain, ChainError> {
    let err = |msg: String| Err(ChainError::Parse(msg));
    let chars: Vec<char> = s.chars().collect();
    if chars.is_empty() {
        return err("empty chain".to_string());
    }
    if chars.len() % 2 == 0 {
        return err(format!("{s:?} ends in the middle of a transition"));
    }
    let node_of = |ch: char| match ch {
        'w' => Some(NodeKind::Word),
        'q' => Some(NodeKind::QueryVec),
        'c' => Some(NodeKind::Concept),
        'z' => Some(NodeKind::Topic),
        'd' => Some(NodeKind::Document),
        _ => None,
    };
    let mut nodes = Vec::new();
    let mut transitions = Vec::new();
    for (i, &ch) in chars.iter().enumerate() {
        if i % 2 == 0 {
            match node_of(ch) {
                Some(n) => nodes.push(n),
                None => return err(format!("unknown symbol {ch:?} in {s:?}")),
            }
        } else {
            match ch {
                'A' => transitions.push(Transition::Assign),
                'E' => transitions.push(Transition::Embed),
                _ => return err(format!("unknown transition {ch:?} in {s:?}")),
            }
        }
    }
    if !matches!(nodes[0], NodeKind::Word | NodeKind::QueryVec) {
        return err(format!("{s:?} must start with 'w' or 'q'"));
    }
    if *nodes.last().unwrap() != NodeKind::Document {
        return err(format!("{s:?} must end with 'd'"));
    }
    for (i, pair) in nodes.windows(2).enumerate() {
        let (from, to) = (pair[0], pair[1]);
        if i > 0 && matches!(from, NodeKind::Document) {
            return err(format!("'d' can only terminate a chain in {s:?}"));
        }
        if i > 0 && matches!(to, NodeKind::Word | NodeKind::QueryVec) {
            return err(format!("'{to}' can only start a chain in {s:?}"));
        }
        match transitions[i] {
            Transition::Embed => {
                if i != 0 || to != NodeKind::Concept {
                    return err(format!(
                        "'E' only steps from the query word or vector into a concept, in {s:?}"
                    ));
                }
            }
            Transition::Assign => {
                if from == NodeKind::QueryVec {
                    return err(format!(
                        "'q' carries no assignments; it must use 'E', in {s:?}"
                    ));
                }
                if !A_STEPS.contains(&(from, to)) {
                    return err(format!("'{from}A{to}' is not a defined step, in {s:?}"));
                }
            }
        }
    }
    let chain = Chain { nodes, transitions };
    if !ADMISSIBLE_CHAINS.contains(&chain.canonical().as_str()) {
        return err(format!(
            "{s:?} loops outside the {} admissible chains",
            ADMISSIBLE_CHAINS.len()
        ));
    }
    Ok(chain)
}

/// A chain query: a vocabulary word or a composed vector.
#[derive(Debug, Clone)]
pub enum Query {
    Word(WordId),
    Vector(QueryVector),
}

/// The segment set a chain yields for one query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extension {
    pub segment_ids: BTreeSet<String>,
    /// Chain spelling plus the query it was run with.
    pub provenance: String,
    pub warning: Option<String>,
}

// Value a token position carries for each node kind.
fn value_at(model: &LctmModel, pos: usize, kind: NodeKind) -> usize {
    let state = model.state();
    match kind {
        NodeKind::Word => state.token(pos).word,
        NodeKind::Concept => state.concept_assignments()[pos],
        NodeKind::Topic => state.topic_assignments()[pos],
        NodeKind::Document => state.token(pos).doc,
        NodeKind::QueryVec => unreachable!("query vectors carry no position value"),
    }
}

/// Co-assignment hop: for every item x, collect the `to` value at each token
/// position where x occurs.
pub fn a_step(
    from: NodeKind,
    items: &BTreeSet<usize>,
    to: NodeKind,
    model: &LctmModel,
) -> Result<BTreeSet<usize>, ChainError> {
    if !A_STEPS.contains(&(from, to)) {
        return Err(ChainError::InvalidStep(from, to));
    }
    let mut out = BTreeSet::new();
    for pos in 0..model.state().num_tokens() {
        if items.contains(&value_at(model, pos, from)) {
            out.insert(value_at(model, pos, to));
        }
    }
    Ok(out)
}

/// Embedding hop: the single concept whose posterior mean is cosine-closest
/// to the query vector.
pub fn e_step(query: &[f64], model: &LctmModel) -> Result<usize, ChainError> {
    let means = (0..model.hp().num_concepts).map(|c| model.concept_mean(c));
    Ok(embeddings::nearest(query, means)?)
}

/// Runs a chain left to right from the query, returning the extension.
pub fn execute(chain: &Chain, query: &Query, model: &LctmModel) -> Result<Extension, ChainError> {
    let corpus = model.corpus();
    let mut warning = None;
    let provenance_query = match query {
        Query::Word(w) => corpus
            .vocab()
            .word(*w)
            .ok_or(ChainError::UnknownWord(*w))?
            .to_string(),
        Query::Vector(qv) => qv.source.clone(),
    };

    // Resolve the first node into a working (kind, id set).
    let mut kind = chain.nodes[0];
    let mut items: BTreeSet<usize> = match (kind, query) {
        (NodeKind::Word, Query::Word(w)) => {
            if corpus.vocab().word(*w).is_none() {
                return Err(ChainError::UnknownWord(*w));
            }
            BTreeSet::from([*w])
        }
        (NodeKind::QueryVec, Query::Vector(_)) => BTreeSet::new(),
        (NodeKind::Word, Query::Vector(_)) => {
            return Err(ChainError::QueryMismatch(
                "chain starts with 'w' but a vector query was given".to_string(),
            ))
        }
        (NodeKind::QueryVec, Query::Word(_)) => {
            return Err(ChainError::QueryMismatch(
                "chain starts with 'q' but a word query was given".to_string(),
            ))
        }
        _ => unreachable!("parser enforces the start node"),
    };

    for (i, t) in chain.transitions.iter().enumerate() {
        let next = chain.nodes[i + 1];
        match t {
            Transition::Embed => {
                let concept = match query {
                    Query::Word(w) => {
                        let v = model.matrix().vector(*w).ok_or_else(|| {
                            let name = corpus.vocab().word(*w).unwrap_or("?").to_string();
                            ChainError::Uncovered(name)
                        })?;
                        e_step(v, model)?
                    }
                    Query::Vector(qv) => e_step(&qv.values, model)?,
                };
                items = BTreeSet::from([concept]);
            }
            Transition::Assign => {
                if i == 0 {
                    // a word with no tokens can reach nothing by assignment
                    if let Query::Word(w) = query {
                        let occurs =
                            model.state().tokens().iter().any(|tok| tok.word == *w);
                        if !occurs {
                            warning = Some(format!(
                                "word {provenance_query:?} has no tokens in the corpus"
                            ));
                        }
                    }
                }
                items = a_step(kind, &items, next, model)?;
            }
        }
        kind = next;
    }

    let segment_ids = items
        .into_iter()
        .map(|doc| corpus.segment(doc).id.clone())
        .collect();
    Ok(Extension {
        segment_ids,
        provenance: format!("{} {}", chain.canonical(), provenance_query),
        warning,
    })
}
