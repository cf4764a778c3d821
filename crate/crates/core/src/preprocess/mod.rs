//! Text preprocessing: cleaning, tokenization, stopword removal and stemming.
//!
//! `pipeline` composes the stages in order:
//! `stem(remove_stopwords(tokenize(clean(text))))`.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub mod snowball;

pub use snowball::stem_word;

const DEFAULT_STOPWORDS: &str = include_str!("../../data/stopwords_en.txt");

/// Ordered tokens produced by the preprocessing stages.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct TokenSequence {
    pub tokens: Vec<String>,
}

impl TokenSequence {
    pub fn new(tokens: Vec<String>) -> Self {
        TokenSequence { tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(String::as_str)
    }

    pub fn joined(&self) -> String {
        self.tokens.join(" ")
    }
}

impl<S: Into<String>> FromIterator<S> for TokenSequence {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        TokenSequence {
            tokens: iter.into_iter().map(Into::into).collect(),
        }
    }
}

/// A set of lowercase stopwords.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stoplist {
    words: BTreeSet<String>,
}

impl Stoplist {
    /// The bundled 179-word English list.
    pub fn english() -> Self {
        Self::parse(DEFAULT_STOPWORDS)
    }

    /// One word per line; blank lines ignored, entries lowercased.
    pub fn parse(contents: &str) -> Self {
        let words = contents
            .lines()
            .map(|l| l.trim().to_lowercase())
            .filter(|l| !l.is_empty())
            .collect();
        Stoplist { words }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let contents = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&contents))
    }

    pub fn empty() -> Self {
        Stoplist {
            words: BTreeSet::new(),
        }
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str)
    }
}

fn url_pattern() -> &'static Regex {
    static URL: OnceLock<Regex> = OnceLock::new();
    URL.get_or_init(|| Regex::new(r"(?i)(?:https?://|www\.|\bt\.co/)\S*").expect("valid url regex"))
}

/// Lowercases, strips URLs, drops every character outside `[a-z0-9]` and whitespace,
/// and collapses whitespace runs to single spaces.
pub fn clean(text: &str) -> String {
    let lowered = text.to_lowercase();
    let without_urls = url_pattern().replace_all(&lowered, " ");
    let mut out = String::with_capacity(without_urls.len());
    let mut pending_space = false;
    for ch in without_urls.chars() {
        if ch.is_whitespace() {
            pending_space = !out.is_empty();
        } else if ch.is_ascii_lowercase() || ch.is_ascii_digit() {
            if pending_space {
                out.push(' ');
                pending_space = false;
            }
            out.push(ch);
        }
    }
    out
}

/// Splits cleaned text on whitespace runs.
pub fn tokenize(text: &str) -> TokenSequence {
    text.split_whitespace().collect()
}

/// Order-preserving removal of stoplist entries.
pub fn remove_stopwords(tokens: &TokenSequence, stoplist: &Stoplist) -> TokenSequence {
    tokens.iter().filter(|t| !stoplist.contains(t)).collect()
}

/// Snowball-stems each token; with `drop_numeric` tokens containing a digit are removed first.
pub fn stem(tokens: &TokenSequence, drop_numeric: bool) -> TokenSequence {
    tokens
        .iter()
        .filter(|t| !(drop_numeric && t.bytes().any(|b| b.is_ascii_digit())))
        .map(stem_word)
        .collect()
}

/// Serializable preprocessing settings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub drop_numeric: bool,
    pub stem: bool,
    pub stoplist_path: Option<PathBuf>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            drop_numeric: true,
            stem: true,
            stoplist_path: None,
        }
    }
}

/// A ready-to-run pipeline: configuration plus the resolved stoplist.
#[derive(Debug, Clone)]
pub struct Preprocessor {
    config: PreprocessConfig,
    stoplist: Stoplist,
}

impl Preprocessor {
    pub fn new(config: PreprocessConfig) -> Result<Self> {
        let stoplist = match &config.stoplist_path {
            Some(path) => Stoplist::from_file(path)?,
            None => Stoplist::english(),
        };
        Ok(Preprocessor { config, stoplist })
    }

    pub fn with_stoplist(config: PreprocessConfig, stoplist: Stoplist) -> Self {
        Preprocessor { config, stoplist }
    }

    pub fn config(&self) -> &PreprocessConfig {
        &self.config
    }

    pub fn stoplist(&self) -> &Stoplist {
        &self.stoplist
    }

    pub fn run(&self, text: &str) -> TokenSequence {
        let filtered = remove_stopwords(&tokenize(&clean(text)), &self.stoplist);
        if self.config.stem {
            stem(&filtered, self.config.drop_numeric)
        } else if self.config.drop_numeric {
            filtered
                .iter()
                .filter(|t| !t.bytes().any(|b| b.is_ascii_digit()))
                .collect()
        } else {
            filtered
        }
    }

    /// Hash over the flags and the stoplist contents; the path itself is not hashed.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(format!(
            "drop_numeric={};stem={};",
            self.config.drop_numeric, self.config.stem
        ));
        for word in self.stoplist.words() {
            hasher.update(word.as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }
}

/// Runs the full pipeline with the given configuration.
pub fn pipeline(text: &str, preprocessor: &Preprocessor) -> TokenSequence {
    preprocessor.run(text)
}
