//! Seeded synthetic corpus and embedding table for running the pipeline without the dataset.
//!
//! Documents mix words from a shared pool with class-biased keywords, plus the noise real
//! posts carry (links, numbers, capitals, punctuation, stopwords). The embedding table gives
//! each keyword a vector leaning along a class direction, so pooled and sequence features
//! carry signal too.

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, DatasetSplit, Label, LabeledDocument, SplitName};
use crate::error::{Error, Result};
use crate::features::EmbeddingTable;
use crate::seeding::{derive_seed, rng_for, streams};

/// Full dataset sizes: train, validation, test as (real, fake).
pub const FULL_SIZES: [(usize, usize); 3] = [(3360, 3060), (1120, 1020), (1120, 1020)];

const SYLLABLES: [&str; 24] = [
    "ba", "ko", "ri", "ten", "ma", "lu", "sor", "vi", "pe", "dan", "gro", "mi", "zal", "fu", "ne", "tra", "bol", "ki", "ves",
    "ru", "pan", "do", "lek", "sa",
];

const FILLERS: [&str; 12] = ["the", "and", "is", "of", "to", "in", "for", "on", "with", "this", "a", "be"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    /// Total documents over the three splits.
    pub total: usize,
    pub vocab: usize,
    /// Keywords per class.
    pub keywords: usize,
    /// Chance that a token is drawn from the document's class keywords.
    pub keyword_rate: f64,
    /// Chance that a token is drawn from the other class's keywords.
    pub cross_rate: f64,
    pub min_len: usize,
    pub max_len: usize,
    pub embedding_dim: usize,
    /// Share of words left out of the embedding table.
    pub oov_rate: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            total: 10_700,
            vocab: 800,
            keywords: 60,
            keyword_rate: 0.25,
            cross_rate: 0.05,
            min_len: 6,
            max_len: 30,
            embedding_dim: 50,
            oov_rate: 0.1,
        }
    }
}

impl SyntheticConfig {
    pub fn with_total(total: usize) -> Self {
        SyntheticConfig {
            total,
            ..SyntheticConfig::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.total < 3 {
            return Err(Error::Config("a synthetic corpus needs at least 3 documents".into()));
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(Error::Config("synthetic document lengths must satisfy 1 <= min <= max".into()));
        }
        if self.vocab < 2 * self.keywords + 1 || self.keywords == 0 {
            return Err(Error::Config("vocabulary must hold both keyword sets and some shared words".into()));
        }
        if !(self.keyword_rate >= 0.0 && self.cross_rate >= 0.0 && self.keyword_rate + self.cross_rate <= 1.0) {
            return Err(Error::Config("keyword rates must be non-negative and sum to at most 1".into()));
        }
        if self.embedding_dim == 0 {
            return Err(Error::Config("embedding dimension must be at least 1".into()));
        }
        Ok(())
    }
}

/// (real, fake) counts per split, keeping the full dataset's 3:1:1 split and class balance.
pub fn split_sizes(total: usize) -> [(usize, usize); 3] {
    let full: usize = FULL_SIZES.iter().map(|(r, f)| r + f).sum();
    let train = (total as f64 * 6420.0 / full as f64).round() as usize;
    let validation = (total as f64 * 2140.0 / full as f64).round() as usize;
    let test = total - train - validation;
    [train, validation, test].map(|n| {
        let real = (n as f64 * 3360.0 / 6420.0).round() as usize;
        (real, n - real)
    })
}

/// Deterministic pseudo-words; distinct by construction.
fn word_list(n: usize) -> Vec<String> {
    let s = SYLLABLES.len();
    (0..n)
        .map(|i| {
            let mut w = String::new();
            let mut k = i;
            loop {
                w.push_str(SYLLABLES[k % s]);
                k /= s;
                if k == 0 {
                    break;
                }
                k -= 1;
            }
            // Two-syllable minimum keeps words clear of the stoplist.
            if i < s {
                w.push_str("ta");
            }
            w
        })
        .collect()
}

struct Lexicon {
    words: Vec<String>,
    /// Keyword ranges per label index.
    keywords: [std::ops::Range<usize>; 2],
    shared: std::ops::Range<usize>,
}

impl Lexicon {
    fn new(cfg: &SyntheticConfig) -> Self {
        let k = cfg.keywords;
        Lexicon {
            words: word_list(cfg.vocab),
            keywords: [k..2 * k, 0..k],
            shared: 2 * k..cfg.vocab,
        }
    }
}

fn noise_token(rng: &mut ChaCha8Rng) -> String {
    match rng.random_range(0..4) {
        0 => format!("https://t.co/{:08x}", rng.random::<u32>()),
        1 => format!("{}k", rng.random_range(1..999)),
        2 => rng.random_range(1..1000).to_string(),
        _ => FILLERS.choose(rng).unwrap().to_string(),
    }
}

fn document(cfg: &SyntheticConfig, lex: &Lexicon, label: Label, rng: &mut ChaCha8Rng) -> String {
    let len = rng.random_range(cfg.min_len..=cfg.max_len);
    let own = &lex.keywords[label.index()];
    let other = &lex.keywords[1 - label.index()];
    let mut tokens = Vec::with_capacity(len + 2);
    for _ in 0..len {
        let u: f64 = rng.random();
        let idx = if u < cfg.keyword_rate {
            rng.random_range(own.clone())
        } else if u < cfg.keyword_rate + cfg.cross_rate {
            rng.random_range(other.clone())
        } else {
            // Squaring skews shared words towards the front of the pool, a rough Zipf shape.
            let r: f64 = rng.random();
            lex.shared.start + ((r * r) * lex.shared.len() as f64) as usize
        };
        let mut w = lex.words[idx].clone();
        if rng.random_bool(0.05) {
            w = w.to_uppercase();
        }
        if rng.random_bool(0.08) {
            w.push_str([",", ".", "!", "?"].choose(rng).unwrap());
        }
        tokens.push(w);
        if rng.random_bool(0.15) {
            tokens.push(noise_token(rng));
        }
    }
    tokens.join(" ")
}

/// Generates three splits with the full dataset's proportions.
pub fn generate_corpus(cfg: &SyntheticConfig, seed: u64) -> Result<Corpus> {
    cfg.validate()?;
    let lex = Lexicon::new(cfg);
    let sizes = split_sizes(cfg.total);
    let mut splits = SplitName::ALL.iter().zip(sizes).enumerate().map(|(s, (&name, (real, fake)))| {
        let mut rng = rng_for(derive_seed(seed, streams::SYNTHETIC), s as u64);
        let mut labels: Vec<Label> = std::iter::repeat_n(Label::Real, real)
            .chain(std::iter::repeat_n(Label::Fake, fake))
            .collect();
        // Interleave classes the way an exported file would.
        for i in (1..labels.len()).rev() {
            labels.swap(i, rng.random_range(0..=i));
        }
        let documents = labels
            .into_iter()
            .enumerate()
            .map(|(i, label)| LabeledDocument {
                id: format!("{}-{:05}", name.as_str(), i + 1),
                text: document(cfg, &lex, label, &mut rng),
                label,
            })
            .collect();
        DatasetSplit { name, documents }
    });
    Ok(Corpus {
        train: splits.next().unwrap(),
        validation: splits.next().unwrap(),
        test: splits.next().unwrap(),
    })
}

/// Embedding table over the synthetic words (lowercased surface forms) and fillers.
pub fn synthetic_embeddings(cfg: &SyntheticConfig, seed: u64) -> Result<EmbeddingTable> {
    cfg.validate()?;
    let lex = Lexicon::new(cfg);
    let mut rng = rng_for(derive_seed(seed, streams::SYNTHETIC), 100);
    let dim = cfg.embedding_dim;
    let direction: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    let mut table = EmbeddingTable::new(dim);
    for (i, w) in lex.words.iter().enumerate() {
        if rng.random_bool(cfg.oov_rate) {
            continue;
        }
        let lean = if lex.keywords[1].contains(&i) {
            1.0
        } else if lex.keywords[0].contains(&i) {
            -1.0
        } else {
            0.0
        };
        let v: Vec<f64> = direction
            .iter()
            .map(|d| 0.6 * lean * d / norm * (dim as f64).sqrt() * 0.5 + rng.random_range(-0.5..0.5))
            .collect();
        table.insert(w, &v)?;
    }
    for w in FILLERS {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-0.5..0.5)).collect();
        table.insert(w, &v)?;
    }
    Ok(table)
}
