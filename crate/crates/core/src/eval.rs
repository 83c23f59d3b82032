//! Gold-standard ingestion, presence-label aggregation, Matthews correlation
//! scoring, and the two experiment harnesses (single-word and compound
//! queries).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::chains::{execute, parse_chain, Query};
use crate::corpus::Corpus;
use crate::embeddings::compose_query;
use crate::lctm::LctmModel;
use crate::lda::LdaModel;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// One annotation: how strongly a concept is present in a segment, rated 1
/// (completely absent) to 4 (highly present).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldRecord {
    pub segment_id: String,
    pub concept_tag: String,
    pub rating: u8,
    pub annotator_id: String,
    pub expert: bool,
}

/// Parsed annotations with segment ids resolved against the corpus;
/// unresolvable records are dropped and counted.
#[derive(Debug, Clone)]
pub struct GoldStandard {
    pub records: Vec<GoldRecord>,
    pub dropped_unknown_segments: usize,
}

/// Loads a gold TSV: `segment_id<TAB>concept_tag<TAB>rating<TAB>
/// annotator_id<TAB>expert(0|1)`.
pub fn load_gold(path: impl AsRef<Path>, corpus: &Corpus) -> Result<GoldStandard, EvalError> {
    let file = File::open(path.as_ref())?;
    let mut records = Vec::new();
    let mut dropped = 0usize;
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(EvalError::Parse {
                line: lineno,
                msg: format!("expected 5 columns, got {}", fields.len()),
            });
        }
        let rating: u8 = fields[2].parse().map_err(|_| EvalError::Parse {
            line: lineno,
            msg: format!("bad rating {:?}", fields[2]),
        })?;
        if !(1..=4).contains(&rating) {
            return Err(EvalError::Parse {
                line: lineno,
                msg: format!("rating {rating} outside 1..=4"),
            });
        }
        let expert = match fields[4] {
            "0" => false,
            "1" => true,
            other => {
                return Err(EvalError::Parse {
                    line: lineno,
                    msg: format!("bad expert flag {other:?}"),
                })
            }
        };
        if corpus.segment_index(fields[0]).is_none() {
            dropped += 1;
            continue;
        }
        records.push(GoldRecord {
            segment_id: fields[0].to_string(),
            concept_tag: fields[1].to_string(),
            rating,
            annotator_id: fields[3].to_string(),
            expert,
        });
    }
    Ok(GoldStandard {
        records,
        dropped_unknown_segments: dropped,
    })
}

pub fn write_gold(path: impl AsRef<Path>, records: &[GoldRecord]) -> Result<(), EvalError> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    for r in records {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            r.segment_id,
            r.concept_tag,
            r.rating,
            r.annotator_id,
            if r.expert { 1 } else { 0 }
        )?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Group {
    Expert,
    NonExpert,
}

impl Group {
    pub const ALL: [Group; 2] = [Group::Expert, Group::NonExpert];
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Group::Expert => write!(f, "expert"),
            Group::NonExpert => write!(f, "non-expert"),
        }
    }
}

/// Binary presence labels per (concept tag, segment) pair, split by
/// annotator group.
#[derive(Debug, Clone, Default)]
pub struct LabeledPairs {
    expert: BTreeMap<(String, String), bool>,
    non_expert: BTreeMap<(String, String), bool>,
}

impl LabeledPairs {
    pub fn group(&self, group: Group) -> &BTreeMap<(String, String), bool> {
        match group {
            Group::Expert => &self.expert,
            Group::NonExpert => &self.non_expert,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.expert.is_empty() && self.non_expert.is_empty()
    }
}

/// Derives presence labels: an annotation votes present iff its rating is at
/// least 2, and a pair is present iff at least half of its annotations vote
/// present (ties go to present).
pub fn aggregate_labels(gold: &GoldStandard) -> LabeledPairs {
    let mut votes: BTreeMap<(bool, String, String), (usize, usize)> = BTreeMap::new();
    for r in &gold.records {
        let e = votes
            .entry((r.expert, r.concept_tag.clone(), r.segment_id.clone()))
            .or_insert((0, 0));
        if r.rating >= 2 {
            e.0 += 1;
        }
        e.1 += 1;
    }
    let mut out = LabeledPairs::default();
    for ((expert, tag, seg), (present, total)) in votes {
        let label = 2 * present >= total;
        let map = if expert {
            &mut out.expert
        } else {
            &mut out.non_expert
        };
        map.insert((tag, seg), label);
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn add(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn mcc(&self) -> f64 {
        mcc(self.tp, self.fp, self.fn_, self.tn)
    }
}

/// Matthews correlation coefficient; 0.0 whenever a denominator factor is
/// zero.
pub fn mcc(tp: u64, fp: u64, fn_: u64, tn: u64) -> f64 {
    let (tp, fp, fn_, tn) = (tp as f64, fp as f64, fn_ as f64, tn as f64);
    let denom = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    if denom == 0.0 {
        return 0.0;
    }
    (tp * tn - fp * fn_) / denom.sqrt()
}

#[derive(Debug, Clone)]
pub struct TagOutcome {
    pub tag: String,
    pub counts: ConfusionCounts,
    pub mcc: f64,
}

/// One method × group row: pooled confusion counts over every labeled pair
/// whose query was evaluable, plus the per-tag breakdown.
#[derive(Debug, Clone)]
pub struct MethodGroupReport {
    pub method: String,
    pub group: Group,
    pub counts: ConfusionCounts,
    pub mcc: f64,
    /// Mean of the per-tag MCCs, the macro-averaged companion number.
    pub macro_mcc: f64,
    pub skipped: usize,
    pub per_tag: Vec<TagOutcome>,
    pub skipped_tags: Vec<String>,
}

/// Scores one extension method against one group's labeled pairs. The
/// extension is computed once per distinct tag; tags whose query errors are
/// skipped and counted rather than treated as all-negative.
pub fn evaluate_method(
    method: &str,
    group: Group,
    pairs: &BTreeMap<(String, String), bool>,
    run: &mut dyn FnMut(&str) -> Result<BTreeSet<String>, String>,
) -> MethodGroupReport {
    let tags: BTreeSet<&str> = pairs.keys().map(|(tag, _)| tag.as_str()).collect();
    let mut pooled = ConfusionCounts::default();
    let mut per_tag = Vec::new();
    let mut skipped_tags = Vec::new();
    for tag in tags {
        let extension = match run(tag) {
            Ok(ext) => ext,
            Err(_) => {
                skipped_tags.push(tag.to_string());
                continue;
            }
        };
        let mut counts = ConfusionCounts::default();
        for ((t, seg), &present) in pairs {
            if t == tag {
                counts.add(extension.contains(seg), present);
            }
        }
        pooled.tp += counts.tp;
        pooled.fp += counts.fp;
        pooled.fn_ += counts.fn_;
        pooled.tn += counts.tn;
        per_tag.push(TagOutcome {
            tag: tag.to_string(),
            mcc: counts.mcc(),
            counts,
        });
    }
    let macro_mcc = if per_tag.is_empty() {
        0.0
    } else {
        per_tag.iter().map(|t| t.mcc).sum::<f64>() / per_tag.len() as f64
    };
    MethodGroupReport {
        method: method.to_string(),
        group,
        mcc: pooled.mcc(),
        counts: pooled,
        macro_mcc,
        skipped: skipped_tags.len(),
        per_tag,
        skipped_tags,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    /// Eight word chains plus the keyword heuristic and two LDA baselines.
    SingleWord,
    /// Three vector chains plus the conjunctive keyword baseline.
    Compound,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub rows: Vec<MethodGroupReport>,
}

const WORD_CHAINS: [&str; 8] = [
    "wAcAd", "wAcAzAcAd", "wAcAzAd", "wAzAcAd", "wAzAd", "wEcAd", "wEcAzAcAd", "wEcAzAd",
];
const VECTOR_CHAINS: [&str; 3] = ["qEcAd", "qEcAzAcAd", "qEcAzAd"];

// Content words of a compound tag; operators are dropped.
fn content_words(tag: &str) -> Vec<&str> {
    tag.split_whitespace()
        .filter(|t| *t != "+" && *t != "-")
        .collect()
}

// A compound tag becomes a composition expression: taken verbatim when it
// already carries operators, otherwise the sum of its content words.
fn expr_of(tag: &str) -> String {
    if tag.split_whitespace().any(|t| t == "+" || t == "-") {
        tag.to_string()
    } else {
        content_words(tag).join(" + ")
    }
}

/// Runs every method of the requested mode against both annotator groups.
/// Groups without labeled pairs produce no rows, so an empty gold standard
/// yields an empty report.
pub fn run_experiment(
    lctm: &LctmModel,
    lda: Option<&LdaModel>,
    labels: &LabeledPairs,
    mode: EvalMode,
) -> EvalReport {
    let corpus = lctm.corpus();
    let mut rows = Vec::new();
    for group in Group::ALL {
        let pairs = labels.group(group);
        if pairs.is_empty() {
            continue;
        }
        match mode {
            EvalMode::SingleWord => {
                rows.push(evaluate_method("keyword", group, pairs, &mut |tag| {
                    let w = corpus
                        .vocab()
                        .id(tag)
                        .ok_or_else(|| format!("word {tag:?} not in vocabulary"))?;
                    corpus.segments_containing(w).map_err(|e| e.to_string())
                }));
                if let Some(lda) = lda {
                    rows.push(evaluate_method("LDA-Top30", group, pairs, &mut |tag| {
                        let w = corpus
                            .vocab()
                            .id(tag)
                            .ok_or_else(|| format!("word {tag:?} not in vocabulary"))?;
                        Ok(lda.top30_extension(w))
                    }));
                    rows.push(evaluate_method("Gibbs-LDA", group, pairs, &mut |tag| {
                        let w = corpus
                            .vocab()
                            .id(tag)
                            .ok_or_else(|| format!("word {tag:?} not in vocabulary"))?;
                        Ok(lda.concrete_extension(w))
                    }));
                }
                for chain_str in WORD_CHAINS {
                    let chain = parse_chain(chain_str).expect("canonical chain");
                    rows.push(evaluate_method(chain_str, group, pairs, &mut |tag| {
                        let w = corpus
                            .vocab()
                            .id(tag)
                            .ok_or_else(|| format!("word {tag:?} not in vocabulary"))?;
                        execute(&chain, &Query::Word(w), lctm)
                            .map(|ext| ext.segment_ids)
                            .map_err(|e| e.to_string())
                    }));
                }
            }
            EvalMode::Compound => {
                rows.push(evaluate_method("keyword", group, pairs, &mut |tag| {
                    // conjunctive containment of every content word
                    let words = content_words(tag);
                    if words.is_empty() {
                        return Err("empty tag".to_string());
                    }
                    let mut acc: Option<BTreeSet<String>> = None;
                    for word in words {
                        let w = corpus
                            .vocab()
                            .id(word)
                            .ok_or_else(|| format!("word {word:?} not in vocabulary"))?;
                        let segs = corpus.segments_containing(w).map_err(|e| e.to_string())?;
                        acc = Some(match acc {
                            None => segs,
                            Some(prev) => prev.intersection(&segs).cloned().collect(),
                        });
                    }
                    Ok(acc.unwrap_or_default())
                }));
                for chain_str in VECTOR_CHAINS {
                    let chain = parse_chain(chain_str).expect("canonical chain");
                    rows.push(evaluate_method(chain_str, group, pairs, &mut |tag| {
                        let qv = compose_query(&expr_of(tag), lctm.matrix(), corpus.vocab())
                            .map_err(|e| e.to_string())?;
                        execute(&chain, &Query::Vector(qv), lctm)
                            .map(|ext| ext.segment_ids)
                            .map_err(|e| e.to_string())
                    }));
                }
            }
        }
    }
    EvalReport { rows }
}

impl EvalReport {
    pub fn row(&self, method: &str, group: Group) -> Option<&MethodGroupReport> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.group == group)
    }

    /// `method<TAB>group<TAB>tp<TAB>fp<TAB>fn<TAB>tn<TAB>mcc<TAB>skipped`.
    pub fn write_tsv(&self, path: impl AsRef<Path>) -> Result<(), EvalError> {
        let mut out = BufWriter::new(File::create(path.as_ref())?);
        writeln!(out, "method\tgroup\ttp\tfp\tfn\ttn\tmcc\tskipped")?;
        for r in &self.rows {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{:.6}\t{}",
                r.method, r.group, r.counts.tp, r.counts.fp, r.counts.fn_, r.counts.tn, r.mcc,
                r.skipped
            )?;
        }
        out.flush()?;
        Ok(())
    }

    /// Per-tag breakdown, `method,group,tag,tp,fp,fn,tn,mcc`.
    pub fn write_per_tag_csv(&self, path: impl AsRef<Path>) -> Result<(), EvalError> {
        let mut out = BufWriter::new(File::create(path.as_ref())?);
        writeln!(out, "method,group,tag,tp,fp,fn,tn,mcc")?;
        for r in &self.rows {
            for t in &r.per_tag {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{:.6}",
                    csv_field(&r.method),
                    r.group,
                    csv_field(&t.tag),
                    t.counts.tp,
                    t.counts.fp,
                    t.counts.fn_,
                    t.counts.tn,
                    t.mcc
                )?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// MCC between two annotators' presence votes over the pairs they both
/// rated; `None` without overlap. A small agreement utility, not a full
/// inter-annotator suite.
pub fn pairwise_annotator_mcc(gold: &GoldStandard, a: &str, b: &str) -> Option<f64> {
    let votes = |annotator: &str| -> BTreeMap<(String, String), bool> {
        gold.records
            .iter()
            .filter(|r| r.annotator_id == annotator)
            .map(|r| {
                (
                    (r.concept_tag.clone(), r.segment_id.clone()),
                    r.rating >= 2,
                )
            })
            .collect()
    };
    let va = votes(a);
    let vb = votes(b);
    let mut counts = ConfusionCounts::default();
    for (pair, &pa) in &va {
        if let Some(&pb) = vb.get(pair) {
            counts.add(pb, pa);
        }
    }
    if counts.total() == 0 {
        None
    } else {
        Some(counts.mcc())
    }
}
