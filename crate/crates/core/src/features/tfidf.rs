//! Vocabulary construction and TF-IDF weighting.
//!
//! TF(d, t) = count(t in d) / |d|, IDF(t) = ln(N / f(t)) with N the number of training
//! documents and f(t) the number of training documents containing t. No smoothing:
//! terms absent from the training vocabulary are dropped at transform time.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};

use sha2::{Digest, Sha256};

use super::SparseVector;
use crate::error::{Error, Result};
use crate::preprocess::TokenSequence;

/// Training-split term index with document frequencies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    terms: Vec<String>,
    term_to_index: HashMap<String, usize>,
    doc_freq: Vec<usize>,
    n_docs: usize,
}

impl Vocabulary {
    fn from_parts(terms: Vec<String>, doc_freq: Vec<usize>, n_docs: usize) -> Self {
        let term_to_index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary {
            terms,
            term_to_index,
            doc_freq,
            n_docs,
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.term_to_index.get(term).copied()
    }

    pub fn term(&self, index: usize) -> Option<&str> {
        self.terms.get(index).map(String::as_str)
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn doc_freq(&self, term: &str) -> Option<usize> {
        self.index_of(term).map(|i| self.doc_freq[i])
    }

    pub fn doc_freq_at(&self, index: usize) -> usize {
        self.doc_freq[index]
    }

    /// IDF by column index.
    pub fn idf_at(&self, index: usize) -> f64 {
        (self.n_docs as f64 / self.doc_freq[index] as f64).ln()
    }

    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(format!("n_docs={}\n", self.n_docs));
        for (term, df) in self.terms.iter().zip(&self.doc_freq) {
            hasher.update(format!("{term}\t{df}\n"));
        }
        hex::encode(hasher.finalize())
    }

    /// Text form: a `#n_docs` header line, then `term<TAB>doc_freq` per line in index order.
    pub fn write_to<W: Write>(&self, mut writer: W) -> std::io::Result<()> {
        writeln!(writer, "#n_docs\t{}", self.n_docs)?;
        for (term, df) in self.terms.iter().zip(&self.doc_freq) {
            writeln!(writer, "{term}\t{df}")?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .transpose()
            .map_err(|e| Error::io("<vocabulary>", e))?
            .ok_or_else(|| Error::Config("vocabulary file is empty".into()))?;
        let n_docs = header
            .strip_prefix("#n_docs\t")
            .and_then(|n| n.trim().parse().ok())
            .ok_or_else(|| Error::Config(format!("bad vocabulary header `{header}`")))?;
        let mut terms = Vec::new();
        let mut doc_freq = Vec::new();
        for line in lines {
            let line = line.map_err(|e| Error::io("<vocabulary>", e))?;
            let (term, df) = line
                .split_once('\t')
                .and_then(|(t, d)| d.trim().parse::<usize>().ok().map(|d| (t, d)))
                .ok_or_else(|| Error::Config(format!("bad vocabulary line `{line}`")))?;
            terms.push(term.to_string());
            doc_freq.push(df);
        }
        Ok(Vocabulary::from_parts(terms, doc_freq, n_docs))
    }
}

/// Builds the vocabulary from training documents; indices follow lexicographic term order.
pub fn build_vocab(train_docs: &[TokenSequence], min_df: usize) -> Result<Vocabulary> {
    if train_docs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in train_docs {
        let distinct: HashSet<&str> = doc.iter().collect();
        for term in distinct {
            *counts.entry(term).or_insert(0) += 1;
        }
    }
    let min_df = min_df.max(1);
    let (terms, doc_freq): (Vec<String>, Vec<usize>) = counts
        .into_iter()
        .filter(|&(_, df)| df >= min_df)
        .map(|(t, df)| (t.to_string(), df))
        .unzip();
    Ok(Vocabulary::from_parts(terms, doc_freq, train_docs.len()))
}

/// Share of `doc` occupied by `term`.
pub fn term_frequency(doc: &TokenSequence, term: &str) -> Result<f64> {
    if doc.is_empty() {
        return Err(Error::EmptyDocument);
    }
    let count = doc.iter().filter(|t| *t == term).count();
    Ok(count as f64 / doc.len() as f64)
}

pub fn inverse_doc_frequency(vocab: &Vocabulary, term: &str) -> Result<f64> {
    vocab
        .index_of(term)
        .map(|i| vocab.idf_at(i))
        .ok_or_else(|| Error::UnknownTerm(term.to_string()))
}

/// TF-IDF row for one document. Zero weights (ubiquitous terms) are not stored.
pub fn tfidf_vector(doc: &TokenSequence, vocab: &Vocabulary) -> SparseVector {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for token in doc.iter() {
        if let Some(index) = vocab.index_of(token) {
            *counts.entry(index).or_insert(0) += 1;
        }
    }
    let doc_len = doc.len() as f64;
    let mut indices = Vec::with_capacity(counts.len());
    let mut values = Vec::with_capacity(counts.len());
    for (index, count) in counts {
        let weight = count as f64 / doc_len * vocab.idf_at(index);
        if weight != 0.0 {
            indices.push(index as u32);
            values.push(weight);
        }
    }
    SparseVector::from_sorted(vocab.len(), indices, values)
}

/// TF-IDF featurizer with optional L2 row normalization (off by default).
#[derive(Debug, Clone)]
pub struct TfidfVectorizer {
    pub vocab: Vocabulary,
    pub l2_normalize: bool,
}

impl TfidfVectorizer {
    pub fn new(vocab: Vocabulary, l2_normalize: bool) -> Self {
        TfidfVectorizer { vocab, l2_normalize }
    }

    pub fn dim(&self) -> usize {
        self.vocab.len()
    }

    pub fn transform(&self, doc: &TokenSequence) -> SparseVector {
        let mut row = tfidf_vector(doc, &self.vocab);
        if self.l2_normalize {
            row.l2_normalize();
        }
        row
    }

    pub fn transform_all(&self, docs: &[TokenSequence]) -> Vec<SparseVector> {
        use rayon::prelude::*;
        docs.par_iter().map(|d| self.transform(d)).collect()
    }
}
