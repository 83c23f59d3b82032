//! keyword-free diagnostics at zero replacement
use lctm_core::lctm::{simulate, SimulateConfig};

fn main() {
    let cfg = SimulateConfig { replace_frac: 0.0, seed: 11, ..SimulateConfig::default() };
    let exp = simulate(&cfg).unwrap();
    println!("targets {}", exp.targets.len());
    for t in &exp.targets {
        let w = exp.data.corpus.vocab().id(&t.tag).unwrap();
        let kw = exp.data.corpus.segments_containing(w).unwrap();
        // count canonical tokens globally and within positives
        let mut canon_tokens = 0usize;
        let mut fam_tokens = 0usize;
        let mut pos = 0usize;
        for seg in exp.data.corpus.segments() {
            for (idx, &tok) in seg.tokens.iter().enumerate() {
                let _ = idx;
                if tok == w { canon_tokens += 1; }
                if exp.data.word_concepts[tok] == t.concept { fam_tokens += 1; }
            }
            let _ = &mut pos;
        }
        println!(
            "c{:2} tag {}: positives {:3}, kw-containing {:3}, free {:.2}, canon tokens {:4}, family tokens {:4}",
            t.concept, t.tag, t.positive_segments.len(), kw.len(),
            t.keyword_free as f64 / t.positive_segments.len() as f64,
            canon_tokens, fam_tokens
        );
    }
    println!("mean free {:.3}", exp.keyword_free_fraction());
}
