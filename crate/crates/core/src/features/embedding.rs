//! Pretrained word-vector tables, mean pooling and padded index sequences.
//!
//! Row 0 of the embedding matrix is the padding vector; word `i` of the table is
//! stored at matrix row `i + 1`.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::preprocess::TokenSequence;

pub const PADDING_INDEX: u32 = 0;

/// Word to vector lookup with a fixed dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    words: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LineIssueKind {
    WrongComponentCount { expected: usize, found: usize },
    NonFinite,
    Unparseable,
    Duplicate,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineIssue {
    pub line: usize,
    pub kind: LineIssueKind,
}

impl fmt::Display for LineIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            LineIssueKind::WrongComponentCount { expected, found } => {
                write!(f, "line {}: expected {expected} components, found {found}", self.line)
            }
            LineIssueKind::NonFinite => write!(f, "line {}: non-finite component", self.line),
            LineIssueKind::Unparseable => write!(f, "line {}: unparseable component", self.line),
            LineIssueKind::Duplicate => write!(f, "line {}: duplicate word, first entry kept", self.line),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadedEmbeddings {
    pub table: EmbeddingTable,
    pub issues: Vec<LineIssue>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable {
            dim,
            words: Vec::new(),
            index: HashMap::new(),
            vectors: Vec::new(),
        }
    }

    /// Adds a word; returns false (and keeps the old vector) if it was already present.
    pub fn insert(&mut self, word: &str, vector: &[f64]) -> Result<bool> {
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: vector.len(),
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("embedding for `{word}`")));
        }
        if self.index.contains_key(word) {
            return Ok(false);
        }
        self.index.insert(word.to_string(), self.words.len());
        self.words.push(word.to_string());
        self.vectors.extend_from_slice(vector);
        Ok(true)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.index.get(word).map(|&i| self.row(i))
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    /// Matrix row of `word` (padding occupies row 0).
    pub fn token_index(&self, word: &str) -> Option<u32> {
        self.index.get(word).map(|&i| i as u32 + 1)
    }

    /// Rows in the embedding matrix, padding included.
    pub fn matrix_rows(&self) -> usize {
        self.len() + 1
    }

    /// Row-major `(len + 1) x dim` matrix whose first row is zero.
    pub fn embedding_matrix(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        m.extend_from_slice(&self.vectors);
        m
    }

    /// Keeps only words that appear in `docs`, preserving table order.
    pub fn restrict_to<'a>(&self, docs: impl IntoIterator<Item = &'a TokenSequence>) -> EmbeddingTable {
        let mut keep = vec![false; self.len()];
        for doc in docs {
            for token in doc.iter() {
                if let Some(&i) = self.index.get(token) {
                    keep[i] = true;
                }
            }
        }
        let mut out = EmbeddingTable::new(self.dim);
        for (i, word) in self.words.iter().enumerate() {
            if keep[i] {
                out.insert(word, self.row(i)).expect("row already validated");
            }
        }
        out
    }

    pub fn cosine(&self, a: &str, b: &str) -> Option<f64> {
        Some(cosine(self.get(a)?, self.get(b)?))
    }

    /// Candidate with the highest cosine similarity to `word`.
    pub fn nearest_among<'c>(&self, word: &str, candidates: &[&'c str]) -> Option<(&'c str, f64)> {
        let target = self.get(word)?;
        candidates
            .iter()
            .filter_map(|&c| self.get(c).map(|v| (c, cosine(target, v))))
            .fold(None, |best: Option<(&str, f64)>, (c, s)| match best {
                Some((_, b)) if b >= s => best,
                _ => Some((c, s)),
            })
    }

    /// The `k` most similar words to `word`, excluding itself.
    pub fn most_similar(&self, word: &str, k: usize) -> Vec<(String, f64)> {
        let Some(target) = self.get(word) else {
            return Vec::new();
        };
        let mut scored: Vec<(usize, f64)> = (0..self.len())
            .filter(|&i| self.words[i] != word)
            .map(|i| (i, cosine(target, self.row(i))))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        scored
            .into_iter()
            .take(k)
            .map(|(i, s)| (self.words[i].clone(), s))
            .collect()
    }

    /// Writes the table in the same text format it is read from.
    pub fn write_to<W: Write>(&self, mut writer: W) -> std::io::Result<()> {
        for (i, word) in self.words.iter().enumerate() {
            write!(writer, "{word}")?;
            for v in self.row(i) {
                write!(writer, " {v}")?;
            }
            writeln!(writer)?;
        }
        Ok(())
    }

    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(format!("dim={}\n", self.dim));
        for (i, word) in self.words.iter().enumerate() {
            hasher.update(word.as_bytes());
            for v in self.row(i) {
                hasher.update(v.to_le_bytes());
            }
        }
        hex::encode(hasher.finalize())
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Parses `word v1 .. vd` lines. Bad lines are reported and skipped.
pub fn read_embeddings<R: BufRead>(reader: R, expected_dim: usize) -> Result<LoadedEmbeddings> {
    let mut table = EmbeddingTable::new(expected_dim);
    let mut issues = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<embeddings>", e))?;
        let line_no = n + 1;
        let mut parts = line.split_whitespace();
        let Some(word) = parts.next() else {
            continue;
        };
        let fields: Vec<&str> = parts.collect();
        if fields.len() != expected_dim {
            issues.push(LineIssue {
                line: line_no,
                kind: LineIssueKind::WrongComponentCount {
                    expected: expected_dim,
                    found: fields.len(),
                },
            });
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        let Ok(vector) = parsed else {
            issues.push(LineIssue {
                line: line_no,
                kind: LineIssueKind::Unparseable,
            });
            continue;
        };
        if vector.iter().any(|v| !v.is_finite()) {
            issues.push(LineIssue {
                line: line_no,
                kind: LineIssueKind::NonFinite,
            });
            continue;
        }
        if !table.insert(word, &vector)? {
            issues.push(LineIssue {
                line: line_no,
                kind: LineIssueKind::Duplicate,
            });
        }
    }
    if table.is_empty() {
        log::warn!("embedding table is empty");
    }
    Ok(LoadedEmbeddings { table, issues })
}

pub fn load_embeddings(path: &Path, expected_dim: usize) -> Result<LoadedEmbeddings> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_embeddings(BufReader::new(file), expected_dim)
}

/// Mean of the in-table token vectors; zero vector when none are found.
pub fn embed_mean(doc: &TokenSequence, table: &EmbeddingTable) -> Vec<f64> {
    let mut sum = vec![0.0; table.dim()];
    let mut found = 0usize;
    for v in doc.iter().filter_map(|t| table.get(t)) {
        sum.iter_mut().zip(v).for_each(|(s, x)| *s += x);
        found += 1;
    }
    if found > 0 {
        sum.iter_mut().for_each(|s| *s /= found as f64);
    }
    sum
}

/// Fixed-length token indices, right-padded with the padding index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexSequence {
    pub indices: Vec<u32>,
    pub true_length: usize,
}

/// Maps the first `max_len` in-table tokens to matrix rows; out-of-table tokens are skipped.
pub fn encode_sequence(doc: &TokenSequence, table: &EmbeddingTable, max_len: usize) -> IndexSequence {
    let mut indices: Vec<u32> = doc.iter().filter_map(|t| table.token_index(t)).take(max_len).collect();
    let true_length = indices.len();
    indices.resize(max_len, PADDING_INDEX);
    IndexSequence { indices, true_length }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(words: &[&str]) -> TokenSequence {
        words.iter().copied().collect()
    }

    fn table(entries: &[(&str, &[f64])]) -> EmbeddingTable {
        let mut t = EmbeddingTable::new(entries[0].1.len());
        for (w, v) in entries {
            t.insert(w, v).unwrap();
        }
        t
    }

    #[test]
    fn parse_two_dim_line() {
        let loaded = read_embeddings("hello 0.1 0.2\n".as_bytes(), 2).unwrap();
        assert_eq!(loaded.table.get("hello"), Some(&[0.1, 0.2][..]));
        assert!(loaded.issues.is_empty());
    }

    #[test]
    fn empty_file_gives_empty_table() {
        let loaded = read_embeddings("".as_bytes(), 50).unwrap();
        assert!(loaded.table.is_empty());
    }

    #[test]
    fn bad_lines_reported() {
        let text = "a 1 2\nb 1\nc 1 nan\nd 1 x\na 3 4\ne 5 6\n";
        let loaded = read_embeddings(text.as_bytes(), 2).unwrap();
        assert_eq!(loaded.table.words(), &["a", "e"]);
        assert_eq!(loaded.table.get("a"), Some(&[1.0, 2.0][..]));
        let kinds: Vec<_> = loaded.issues.iter().map(|i| (i.line, i.kind.clone())).collect();
        assert_eq!(
            kinds,
            vec![
                (2, LineIssueKind::WrongComponentCount { expected: 2, found: 1 }),
                (3, LineIssueKind::NonFinite),
                (4, LineIssueKind::Unparseable),
                (5, LineIssueKind::Duplicate),
            ]
        );
    }

    #[test]
    fn mean_pooling() {
        let t = table(&[("w1", &[0.0, 0.0]), ("w2", &[2.0, 4.0])]);
        assert_eq!(embed_mean(&seq(&["w2"]), &t), vec![2.0, 4.0]);
        assert_eq!(embed_mean(&seq(&["w1", "w2"]), &t), vec![1.0, 2.0]);
        assert_eq!(embed_mean(&seq(&["oov"]), &t), vec![0.0, 0.0]);
    }

    #[test]
    fn sequences() {
        let t = table(&[("a", &[1.0]), ("b", &[2.0]), ("c", &[3.0])]);
        let s = encode_sequence(&seq(&["a", "b"]), &t, 4);
        assert_eq!(s.indices, vec![1, 2, 0, 0]);
        assert_eq!(s.true_length, 2);
        let long = encode_sequence(&seq(&["a", "b", "c", "a"]), &t, 3);
        assert_eq!(long.indices, vec![1, 2, 3]);
        assert_eq!(long.true_length, 3);
        let empty = encode_sequence(&seq(&[]), &t, 2);
        assert_eq!(empty.indices, vec![0, 0]);
        assert_eq!(empty.true_length, 0);
        assert_eq!(encode_sequence(&seq(&["x", "c"]), &t, 2).indices, vec![3, 0]);
    }

    #[test]
    fn nearest_neighbour_by_cosine() {
        let t = table(&[
            ("king", &[0.9, 0.8, 0.1]),
            ("queen", &[0.85, 0.9, 0.15]),
            ("book", &[-0.2, 0.1, 0.95]),
        ]);
        assert_eq!(t.nearest_among("king", &["book", "queen"]).unwrap().0, "queen");
        assert_eq!(t.most_similar("king", 1)[0].0, "queen");
    }

    #[test]
    fn matrix_has_padding_row() {
        let t = table(&[("a", &[1.0, 2.0])]);
        assert_eq!(t.embedding_matrix(), vec![0.0, 0.0, 1.0, 2.0]);
        assert_eq!(t.matrix_rows(), 2);
        let r = t.restrict_to([&seq(&["zzz"])]);
        assert!(r.is_empty());
    }

    #[test]
    fn write_round_trip() {
        let t = table(&[("a", &[1.5, -2.0]), ("b", &[0.25, 3.0])]);
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        let back = read_embeddings(buf.as_slice(), 2).unwrap().table;
        assert_eq!(back, t);
        assert_eq!(back.fingerprint(), t.fingerprint());
    }
}
