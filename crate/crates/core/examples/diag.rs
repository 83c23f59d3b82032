//! Scratch diagnostics for the simulated experiment regime.

use std::collections::BTreeSet;

use lctm_core::chains::{execute, parse_chain, Query};
use lctm_core::eval::{aggregate_labels, run_experiment, EvalMode, GoldStandard, Group};
use lctm_core::lctm::{simulate, train, LctmHyperparams, SimulateConfig};

fn ari(a: &[usize], b: &[usize]) -> f64 {
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
    let c2 = |n: u64| n as f64 * (n as f64 - 1.0) / 2.0;
    let sij: f64 = table.iter().map(|&n| c2(n)).sum();
    let sa: f64 = rows.iter().map(|&n| c2(n)).sum();
    let sb: f64 = cols.iter().map(|&n| c2(n)).sum();
    let tot = c2(a.len() as u64);
    let exp = sa * sb / tot;
    (sij - exp) / (0.5 * (sa + sb) - exp)
}

fn main() {
    let seed: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(1);
    let sweeps: usize = std::env::args()
        .nth(2)
        .and_then(|s| s.parse().ok())
        .unwrap_or(300);
    let alpha: f64 = std::env::args()
        .nth(3)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0.1);
    let cfg = SimulateConfig {
        seed,
        ..SimulateConfig::default()
    };
    let exp = simulate(&cfg).unwrap();
    let mut hp = LctmHyperparams::for_matrix(cfg.num_topics, 300, &exp.data.matrix);
    hp.alpha = vec![alpha; cfg.num_topics];
    hp.beta = vec![0.05; 300];
    hp.sigma2 = 0.002;
    hp.sigma2_0 = cfg.sigma2_0;
    hp.sweeps = sweeps;
    hp.seed = seed + 2000;
    let model = train(&exp.data.corpus, &exp.data.matrix, &hp).unwrap();

    println!(
        "topic ARI {:.3}, concept ARI {:.3}",
        ari(model.state().topic_assignments(), &exp.data.true_z),
        ari(model.state().concept_assignments(), &exp.data.true_c)
    );
    let used_topics = (0..hp.num_topics)
        .filter(|&k| model.state().topic_count(k) > 0)
        .count();
    let used_concepts = (0..hp.num_concepts)
        .filter(|&c| model.state().concept_count(c) > 0)
        .count();
    println!(
        "used topics {used_topics}/{}, used concepts {used_concepts}/300, word types {}",
        hp.num_topics,
        exp.data.corpus.vocab().len()
    );

    // how many word types share a concept
    let mut type_concepts: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); hp.num_concepts];
    for (pos, tok) in model.state().tokens().iter().enumerate() {
        type_concepts[model.state().concept_assignments()[pos]].insert(tok.word);
    }
    let multi = type_concepts.iter().filter(|s| s.len() > 1).count();
    println!("concepts holding >1 word type: {multi}");

    let gold = GoldStandard {
        records: exp.gold.clone(),
        dropped_unknown_segments: 0,
    };
    let labels = aggregate_labels(&gold);
    let report = run_experiment(&model, None, &labels, EvalMode::SingleWord);
    for row in report.rows.iter().filter(|r| r.group == Group::Expert) {
        println!(
            "{:>10} mcc {:.3} (tp {} fp {} fn {} tn {} skipped {})",
            row.method, row.mcc, row.counts.tp, row.counts.fp, row.counts.fn_, row.counts.tn,
            row.skipped
        );
    }

    // per-target detail for the first few targets
    let wazad = parse_chain("wAzAd").unwrap();
    let wacad = parse_chain("wAcAd").unwrap();
    for t in exp.targets.iter().take(6) {
        let w = exp.data.corpus.vocab().id(&t.tag).unwrap();
        let za = execute(&wazad, &Query::Word(w), &model).unwrap().segment_ids;
        let ca = execute(&wacad, &Query::Word(w), &model).unwrap().segment_ids;
        let kw = exp.data.corpus.segments_containing(w).unwrap();
        // topics collected by w->z
        let mut topics = BTreeSet::new();
        for (pos, tok) in model.state().tokens().iter().enumerate() {
            if tok.word == w {
                topics.insert(model.state().topic_assignments()[pos]);
            }
        }
        println!(
            "target c{} tag {}: positives {}, keyword {}, wAcAd {}, wAzAd {} via {} topics",
            t.concept,
            t.tag,
            t.positive_segments.len(),
            kw.len(),
            ca.len(),
            za.len(),
            topics.len()
        );
    }
}
