//! Preprocessing examples and the brute-force TF-IDF oracle.

use std::collections::HashMap;

use infodemic::features::{build_vocab, tfidf_vector};
use infodemic::preprocess::{clean, remove_stopwords, stem, stem_word, tokenize, Preprocessor, PreprocessConfig, Stoplist, TokenSequence};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SAMPLE: &str = "Our daily update is published. States reported 734k tests 39k new cases and 532 deaths. Current hospitalizations fell below 30k for the first time since June 22. https://t.co/wzSYMe0Sht";
pub const AFTER_STOPWORDS: &str = "daily update published states reported 734k tests 39k new cases 532 deaths current hospitalizations fell 30k first time since june 22";
pub const AFTER_STEMMING: &str = "daili updat publish state report test new case death current hospit fell first time sinc june";

/// Descriptions of every worked example the pipeline fails to reproduce exactly.
pub fn preprocessing_mismatches() -> Vec<String> {
    let mut bad = Vec::new();
    let stop = Stoplist::english();
    let after_stop = remove_stopwords(&tokenize(&clean(SAMPLE)), &stop).joined();
    if after_stop != AFTER_STOPWORDS {
        bad.push(format!("stopword stage gave `{after_stop}`"));
    }
    let stemmed = stem(&tokenize(AFTER_STOPWORDS), true).joined();
    if stemmed != AFTER_STEMMING {
        bad.push(format!("stemming stage gave `{stemmed}`"));
    }
    let swim = stem_word("swimming");
    if swim != "swim" {
        bad.push(format!("swimming stemmed to `{swim}`"));
    }
    let full = Preprocessor::new(PreprocessConfig::default()).unwrap().run(SAMPLE).joined();
    if full != AFTER_STEMMING {
        bad.push(format!("full pipeline gave `{full}`"));
    }
    bad
}

/// Largest gap between `tfidf_vector` and count/|d| * ln(N/df) computed by hand, on a random
/// corpus of at most 10 documents over at most 20 terms.
pub fn tfidf_oracle_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_docs = rng.random_range(1..=10);
    let n_terms = rng.random_range(1..=20);
    let docs: Vec<TokenSequence> = (0..n_docs)
        .map(|_| {
            let len = rng.random_range(1..=12);
            (0..len).map(|_| format!("t{}", rng.random_range(0..n_terms))).collect()
        })
        .collect();
    let vocab = build_vocab(&docs, 1).unwrap();
    let mut df: HashMap<&str, usize> = HashMap::new();
    for d in &docs {
        let mut seen: Vec<&str> = d.iter().collect();
        seen.sort_unstable();
        seen.dedup();
        for t in seen {
            *df.entry(t).or_default() += 1;
        }
    }
    let mut worst = 0.0f64;
    for d in &docs {
        let v = tfidf_vector(d, &vocab);
        for (term, &f) in &df {
            let count = d.iter().filter(|t| t == term).count() as f64;
            let expected = count / d.len() as f64 * (n_docs as f64 / f as f64).ln();
            let got = v.get(vocab.index_of(term).expect("term in vocabulary"));
            worst = worst.max((got - expected).abs());
        }
        // Nothing outside the vocabulary may carry weight.
        if v.iter().any(|(i, _)| i >= vocab.len()) {
            return f64::INFINITY;
        }
    }
    worst
}
