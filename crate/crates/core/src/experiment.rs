//! End-to-end runs: cached preparation, feature views, grid cells, evaluation and prediction.
//!
//! [`prepare`] turns the three splits into token sequences, a vocabulary and an embedding
//! table, and caches them under a key hashed from every input that shapes them. Everything
//! downstream reads the prepared data, never the raw files.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classic::{ClassifierModel, Predictions};
use crate::config::RunConfig;
use crate::container::{Container, PipelineHashes, StoredModel};
use crate::corpus::{class_distribution, load_split, read_unlabeled, save_split, DatasetSplit, SplitName};
use crate::error::{Error, Result};
use crate::evaluation::{
    comparison_table, render_top_features, top_features, write_metrics_csv, write_timings_csv, EvalReport, TableStyle,
};
use crate::features::{
    build_vocab, embed_mean, encode_sequence, load_embeddings, EmbeddingTable, FeatureMatrix, IndexSequence,
    SparseVector, TfidfVectorizer, Vocabulary,
};
use crate::kinds::{FeaturizerKind, ModelKind};
use crate::neural::{train, InputSpec, LabeledInputs, NeuralInputs};
use crate::preprocess::{PreprocessConfig, Preprocessor, TokenSequence};
use crate::rmdl::{train_ensemble, EnsembleData, LoadedEnsemble, SplitInputs};
use crate::seeding::{derive_seed, streams};
use crate::synthetic::{generate_corpus, synthetic_embeddings};

const CACHE_FORMAT: u32 = 1;
const TOP_FEATURES: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub name: SplitName,
    pub documents: usize,
    pub real: usize,
    pub fake: usize,
    /// Input rows dropped by the loader (bad label, empty text, duplicate id).
    pub skipped_rows: usize,
    /// Documents left with no tokens after preprocessing.
    pub empty_after_preprocessing: usize,
}

/// What `prepare` produced, stored as `manifest.json` in the cache directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepareManifest {
    pub format: u32,
    pub key: String,
    pub source: String,
    pub splits: Vec<SplitSummary>,
    pub vocabulary_size: usize,
    pub embedding_words: Option<usize>,
    /// Share of surface tokens over all splits found in the embedding table.
    pub embedding_coverage: Option<f64>,
    pub preprocess_hash: String,
    pub surface_hash: String,
    pub vocabulary_hash: String,
    pub embedding_hash: Option<String>,
    pub warnings: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct CachedDoc {
    id: String,
    label: usize,
    tokens: Vec<String>,
    surface: Vec<String>,
}

/// One split after preprocessing. `stemmed` feeds TF-IDF; `surface` (unstemmed) feeds embeddings.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PreparedSplit {
    pub ids: Vec<String>,
    pub labels: Vec<usize>,
    pub stemmed: Vec<TokenSequence>,
    pub surface: Vec<TokenSequence>,
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub manifest: PrepareManifest,
    /// Train, validation, test.
    pub splits: [PreparedSplit; 3],
    pub vocab: Vocabulary,
    pub embeddings: Option<EmbeddingTable>,
    pub cache_hit: bool,
    pub dir: PathBuf,
    stemmer: Preprocessor,
    surface: Preprocessor,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

fn preprocessors(config: &RunConfig) -> Result<(Preprocessor, Preprocessor)> {
    let stemmer = Preprocessor::new(config.preprocess())?;
    let surface = Preprocessor::new(PreprocessConfig {
        stem: false,
        ..config.preprocess()
    })?;
    Ok((stemmer, surface))
}

fn hash_file(hasher: &mut Sha256, path: &Path) -> Result<()> {
    let mut f = File::open(path).map_err(io_err(path))?;
    std::io::copy(&mut f, hasher).map_err(io_err(path))?;
    Ok(())
}

/// Cache key over the data source, preprocessing, vocabulary threshold and embedding source.
fn cache_key(config: &RunConfig, stemmer: &Preprocessor, surface: &Preprocessor) -> Result<(String, String)> {
    let mut h = Sha256::new();
    h.update(format!("format={CACHE_FORMAT};min_df={};dim={};", config.min_df, config.embedding_dim));
    h.update(stemmer.fingerprint());
    h.update(surface.fingerprint());
    let source = match config.synthetic {
        Some(n) => {
            h.update(format!("synthetic={n};seed={}", config.seed));
            format!("synthetic corpus of {n} documents, seed {}", config.seed)
        }
        None => {
            h.update(format!("{:?}", config.table_options()));
            for path in [&config.train_path, &config.validation_path, &config.test_path] {
                hash_file(&mut h, path)?;
            }
            h.update(b"embeddings:");
            if config.embeddings_path.exists() {
                hash_file(&mut h, &config.embeddings_path)?;
            }
            format!(
                "{}, {}, {}",
                config.train_path.display(),
                config.validation_path.display(),
                config.test_path.display()
            )
        }
    };
    Ok((source, hex::encode(h.finalize())))
}

/// Loads or builds the prepared splits. A cache whose key matches is reused as is.
pub fn prepare(config: &RunConfig) -> Result<Prepared> {
    config.validate()?;
    let (stemmer, surface) = preprocessors(config)?;
    let (source, key) = cache_key(config, &stemmer, &surface)?;
    let dir = config.cache_dir.clone();
    match load_cache(&dir, &key, config.embedding_dim) {
        Ok(Some((manifest, splits, vocab, embeddings))) => {
            log::info!("cache hit in {}", dir.display());
            return Ok(Prepared {
                manifest,
                splits,
                vocab,
                embeddings,
                cache_hit: true,
                dir,
                stemmer,
                surface,
            });
        }
        Ok(None) => {}
        Err(e) => log::warn!("ignoring unreadable cache in {}: {e}", dir.display()),
    }
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;

    let mut warnings = Vec::new();
    let (splits, skipped, embeddings): (Vec<DatasetSplit>, Vec<usize>, Option<EmbeddingTable>) = match config.synthetic_config() {
        Some(cfg) => {
            let corpus = generate_corpus(&cfg, config.seed)?;
            let opts = config.table_options();
            let splits = vec![corpus.train, corpus.validation, corpus.test];
            for s in &splits {
                save_split(s, &dir.join(format!("{}.csv", s.name.as_str())), &opts)?;
            }
            (splits, vec![0; 3], Some(synthetic_embeddings(&cfg, config.seed)?))
        }
        None => {
            let opts = config.table_options();
            let mut splits = Vec::new();
            let mut skipped = Vec::new();
            for (name, path) in SplitName::ALL.into_iter().zip([&config.train_path, &config.validation_path, &config.test_path]) {
                let loaded = load_split(path, name, &opts)?;
                if !loaded.issues.is_empty() {
                    warnings.push(format!("{}: skipped {} malformed rows", path.display(), loaded.issues.len()));
                }
                skipped.push(loaded.issues.len());
                splits.push(loaded.split);
            }
            let embeddings = if config.embeddings_path.exists() {
                let loaded = load_embeddings(&config.embeddings_path, config.embedding_dim)?;
                if !loaded.issues.is_empty() {
                    warnings.push(format!(
                        "{}: skipped {} malformed lines",
                        config.embeddings_path.display(),
                        loaded.issues.len()
                    ));
                }
                Some(loaded.table)
            } else {
                warnings.push(format!(
                    "embedding file {} not found; embedding cells will fail (run fetch-embeddings or set embeddings_path)",
                    config.embeddings_path.display()
                ));
                None
            };
            (splits, skipped, embeddings)
        }
    };
    if splits[0].is_empty() {
        return Err(Error::EmptyCorpus);
    }

    let prepared: Vec<PreparedSplit> = splits
        .iter()
        .map(|s| {
            let (stemmed, surf) = s
                .documents
                .par_iter()
                .map(|d| (stemmer.run(&d.text), surface.run(&d.text)))
                .unzip();
            PreparedSplit {
                ids: s.documents.iter().map(|d| d.id.clone()).collect(),
                labels: s.documents.iter().map(|d| d.label.index()).collect(),
                stemmed,
                surface: surf,
            }
        })
        .collect();
    let vocab = build_vocab(&prepared[0].stemmed, config.min_df)?;
    let all_surface = || prepared.iter().flat_map(|p| &p.surface);
    let embeddings = embeddings.map(|t| t.restrict_to(all_surface()));
    let coverage = embeddings.as_ref().map(|t| {
        let total: usize = all_surface().map(|d| d.len()).sum();
        let found: usize = all_surface().map(|d| d.iter().filter(|w| t.get(w).is_some()).count()).sum();
        found as f64 / total.max(1) as f64
    });

    let summaries = splits
        .iter()
        .zip(&prepared)
        .zip(skipped)
        .map(|((s, p), skipped_rows)| {
            let d = class_distribution(s);
            SplitSummary {
                name: s.name,
                documents: s.len(),
                real: d.real,
                fake: d.fake,
                skipped_rows,
                empty_after_preprocessing: p.stemmed.iter().filter(|t| t.is_empty()).count(),
            }
        })
        .collect();
    let manifest = PrepareManifest {
        format: CACHE_FORMAT,
        key,
        source,
        splits: summaries,
        vocabulary_size: vocab.len(),
        embedding_words: embeddings.as_ref().map(EmbeddingTable::len),
        embedding_coverage: coverage,
        preprocess_hash: stemmer.fingerprint(),
        surface_hash: surface.fingerprint(),
        vocabulary_hash: vocab.fingerprint(),
        embedding_hash: embeddings.as_ref().map(EmbeddingTable::fingerprint),
        warnings,
    };
    let splits: [PreparedSplit; 3] = prepared.try_into().expect("three splits");
    write_cache(&dir, &manifest, &splits, &vocab, embeddings.as_ref())?;
    Ok(Prepared {
        manifest,
        splits,
        vocab,
        embeddings,
        cache_hit: false,
        dir,
        stemmer,
        surface,
    })
}

fn write_cache(
    dir: &Path,
    manifest: &PrepareManifest,
    splits: &[PreparedSplit; 3],
    vocab: &Vocabulary,
    embeddings: Option<&EmbeddingTable>,
) -> Result<()> {
    // The manifest goes last so an interrupted write never looks like a hit.
    let manifest_path = dir.join("manifest.json");
    let _ = fs::remove_file(&manifest_path);
    for (name, split) in SplitName::ALL.iter().zip(splits) {
        let path = dir.join(format!("{}.jsonl", name.as_str()));
        let mut w = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
        for i in 0..split.ids.len() {
            let doc = CachedDoc {
                id: split.ids[i].clone(),
                label: split.labels[i],
                tokens: split.stemmed[i].tokens.clone(),
                surface: split.surface[i].tokens.clone(),
            };
            serde_json::to_writer(&mut w, &doc)?;
            w.write_all(b"\n").map_err(io_err(&path))?;
        }
        w.flush().map_err(io_err(&path))?;
    }
    let path = dir.join("vocabulary.tsv");
    vocab
        .write_to(BufWriter::new(File::create(&path).map_err(io_err(&path))?))
        .map_err(io_err(&path))?;
    if let Some(table) = embeddings {
        let path = dir.join("embeddings.txt");
        table
            .write_to(BufWriter::new(File::create(&path).map_err(io_err(&path))?))
            .map_err(io_err(&path))?;
    }
    fs::write(&manifest_path, serde_json::to_string_pretty(manifest)?).map_err(io_err(&manifest_path))
}

type CacheContents = (PrepareManifest, [PreparedSplit; 3], Vocabulary, Option<EmbeddingTable>);

fn load_cache(dir: &Path, key: &str, dim: usize) -> Result<Option<CacheContents>> {
    let manifest_path = dir.join("manifest.json");
    let Ok(text) = fs::read_to_string(&manifest_path) else {
        return Ok(None);
    };
    let manifest: PrepareManifest = serde_json::from_str(&text)?;
    if manifest.key != key || manifest.format != CACHE_FORMAT {
        return Ok(None);
    }
    let mut splits: [PreparedSplit; 3] = Default::default();
    for (name, split) in SplitName::ALL.iter().zip(&mut splits) {
        let path = dir.join(format!("{}.jsonl", name.as_str()));
        let reader = BufReader::new(File::open(&path).map_err(io_err(&path))?);
        for line in reader.lines() {
            let doc: CachedDoc = serde_json::from_str(&line.map_err(io_err(&path))?)?;
            split.ids.push(doc.id);
            split.labels.push(doc.label);
            split.stemmed.push(TokenSequence::new(doc.tokens));
            split.surface.push(TokenSequence::new(doc.surface));
        }
    }
    let path = dir.join("vocabulary.tsv");
    let vocab = Vocabulary::read_from(BufReader::new(File::open(&path).map_err(io_err(&path))?))?;
    let embeddings = match &manifest.embedding_hash {
        Some(_) => Some(load_embeddings(&dir.join("embeddings.txt"), dim)?.table),
        None => None,
    };
    let consistent = vocab.fingerprint() == manifest.vocabulary_hash
        && embeddings.as_ref().map(EmbeddingTable::fingerprint) == manifest.embedding_hash;
    if !consistent {
        return Ok(None);
    }
    Ok(Some((manifest, splits, vocab, embeddings)))
}

/// Every representation of a set of documents that some cell reads.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureView {
    pub tfidf: Vec<SparseVector>,
    pub tfidf_dim: usize,
    /// Mean embedding per document.
    pub pooled: Option<Vec<Vec<f64>>>,
    /// Embedding-row indices, padded to the configured maximum length.
    pub sequences: Option<Vec<IndexSequence>>,
    pub embedding_dim: usize,
}

fn missing_embeddings() -> Error {
    Error::InvalidArgument("no embedding table is prepared; run fetch-embeddings or set embeddings_path".into())
}

impl FeatureView {
    pub fn len(&self) -> usize {
        self.tfidf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tfidf.is_empty()
    }

    pub fn classic_matrix(&self, featurizer: FeaturizerKind) -> Result<FeatureMatrix> {
        match featurizer {
            FeaturizerKind::Tfidf => FeatureMatrix::sparse(self.tfidf_dim, self.tfidf.clone()),
            FeaturizerKind::Embedding => {
                let rows = self.pooled.as_ref().ok_or_else(missing_embeddings)?;
                FeatureMatrix::from_dense_rows(self.embedding_dim, rows)
            }
        }
    }

    /// Inputs matching a network's input mode; sequences are cut to the network's length.
    pub fn neural_inputs(&self, input: &InputSpec) -> Result<NeuralInputs> {
        match input {
            InputSpec::TfidfVector { .. } | InputSpec::TfidfSequence { .. } => Ok(NeuralInputs::Tfidf(self.tfidf.clone())),
            InputSpec::EmbeddingSequence { max_len, .. } => {
                let seqs = self.sequences.as_ref().ok_or_else(missing_embeddings)?;
                let have = seqs.first().map_or(*max_len, |s| s.indices.len());
                if have < *max_len {
                    return Err(Error::Shape(format!(
                        "model reads {max_len} tokens per document but the pipeline pads to {have}"
                    )));
                }
                Ok(NeuralInputs::Sequences(seqs.clone()).truncated(*max_len))
            }
        }
    }

    fn embedding_inputs(&self) -> Result<NeuralInputs> {
        Ok(NeuralInputs::Sequences(self.sequences.clone().ok_or_else(missing_embeddings)?))
    }
}

impl Prepared {
    /// Stemmed and surface tokens for new text, using the cached pipeline settings.
    pub fn tokenize(&self, texts: &[String]) -> (Vec<TokenSequence>, Vec<TokenSequence>) {
        texts
            .par_iter()
            .map(|t| (self.stemmer.run(t), self.surface.run(t)))
            .unzip()
    }

    pub fn featurize(&self, stemmed: &[TokenSequence], surface: &[TokenSequence], config: &RunConfig) -> FeatureView {
        let vectorizer = TfidfVectorizer::new(self.vocab.clone(), config.l2_normalize);
        let table = self.embeddings.as_ref();
        FeatureView {
            tfidf: vectorizer.transform_all(stemmed),
            tfidf_dim: vectorizer.dim(),
            pooled: table.map(|t| surface.par_iter().map(|d| embed_mean(d, t)).collect()),
            sequences: table.map(|t| surface.iter().map(|d| encode_sequence(d, t, config.max_len)).collect()),
            embedding_dim: config.embedding_dim,
        }
    }

    /// Hashes a model trained on `featurizer` must carry to be used with this pipeline.
    pub fn hashes(&self, featurizer: FeaturizerKind, config: &RunConfig) -> Result<PipelineHashes> {
        Ok(match featurizer {
            FeaturizerKind::Tfidf => PipelineHashes {
                vocabulary: format!("{}{}", self.manifest.vocabulary_hash, if config.l2_normalize { "+l2" } else { "" }),
                preprocess: self.manifest.preprocess_hash.clone(),
            },
            FeaturizerKind::Embedding => PipelineHashes {
                vocabulary: self.manifest.embedding_hash.clone().ok_or_else(missing_embeddings)?,
                preprocess: self.manifest.surface_hash.clone(),
            },
        })
    }

    /// Hashes for a featurizer whose table may be missing; used when saving ensembles.
    fn hashes_or_empty(&self, featurizer: FeaturizerKind, config: &RunConfig) -> PipelineHashes {
        self.hashes(featurizer, config).unwrap_or_default()
    }

    pub fn summary(&self) -> String {
        let m = &self.manifest;
        let mut out = format!("source: {}\n", m.source);
        for s in &m.splits {
            out.push_str(&format!(
                "  {:<10} {:>6} documents ({} real, {} fake), {} rows skipped, {} empty after preprocessing\n",
                s.name.as_str(),
                s.documents,
                s.real,
                s.fake,
                s.skipped_rows,
                s.empty_after_preprocessing
            ));
        }
        out.push_str(&format!("  vocabulary {} terms\n", m.vocabulary_size));
        match (m.embedding_words, m.embedding_coverage) {
            (Some(words), Some(cov)) => {
                out.push_str(&format!("  embeddings {words} words, {:.1}% token coverage\n", 100.0 * cov))
            }
            _ => out.push_str("  embeddings none\n"),
        }
        for w in &m.warnings {
            out.push_str(&format!("  warning: {w}\n"));
        }
        out.push_str(if self.cache_hit { "  (cache hit)\n" } else { "  (cache written)\n" });
        out
    }
}

/// Feature views and labels for the three prepared splits.
#[derive(Debug, Clone)]
pub struct FeatureSet {
    pub views: [FeatureView; 3],
    pub labels: [Vec<usize>; 3],
    /// Pretrained rows for embedding layers, padding row first.
    pub embedding_matrix: Option<Vec<f64>>,
    pub embedding_rows: usize,
}

impl FeatureSet {
    pub fn build(prepared: &Prepared, config: &RunConfig) -> Self {
        let views = prepared
            .splits
            .each_ref()
            .map(|s| prepared.featurize(&s.stemmed, &s.surface, config));
        let table = prepared.embeddings.as_ref();
        FeatureSet {
            views,
            labels: prepared.splits.each_ref().map(|s| s.labels.clone()),
            embedding_matrix: table.map(EmbeddingTable::embedding_matrix),
            embedding_rows: table.map_or(0, EmbeddingTable::matrix_rows),
        }
    }
}

/// Seed of one grid cell, fixed by the master seed and the cell's position in the grid.
pub fn cell_seed(master: u64, kind: ModelKind, featurizer: Option<FeaturizerKind>) -> u64 {
    let k = ModelKind::ALL.iter().position(|&m| m == kind).unwrap_or(0) as u64;
    let f = featurizer.map_or(2, |f| FeaturizerKind::ALL.iter().position(|&x| x == f).unwrap_or(0) as u64);
    derive_seed(master, streams::CELL + 4 * k + f)
}

pub fn cell_name(kind: ModelKind, featurizer: Option<FeaturizerKind>) -> String {
    match featurizer {
        Some(f) => format!("{kind}-{f}"),
        None => kind.to_string(),
    }
}

/// Grid cells in table order, optionally filtered by model name.
pub fn grid_cells(only: &[String]) -> Result<Vec<(ModelKind, Option<FeaturizerKind>)>> {
    let wanted: Vec<ModelKind> = only.iter().map(|s| s.trim().parse()).collect::<Result<_>>()?;
    let mut cells = Vec::new();
    for kind in ModelKind::ALL {
        if !wanted.is_empty() && !wanted.contains(&kind) {
            continue;
        }
        if kind == ModelKind::Rmdl {
            cells.push((kind, None));
        } else {
            cells.extend(FeaturizerKind::ALL.into_iter().filter(|&f| kind.supports(f)).map(|f| (kind, Some(f))));
        }
    }
    Ok(cells)
}

fn unsupported_pair(kind: ModelKind, featurizer: FeaturizerKind) -> Error {
    Error::Unsupported(format!(
        "{kind} cannot be trained on {featurizer}: multinomial naive Bayes models non-negative term counts, \
         and word-embedding features are signed"
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellOutcome {
    pub report: EvalReport,
    pub warnings: Vec<String>,
    pub dir: PathBuf,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(io_err(path))
}

/// Trains one cell on the training split (validation split for model selection where used),
/// evaluates on the test split and writes everything under `out/cells/<cell>/`.
pub fn run_cell(
    config: &RunConfig,
    prepared: &Prepared,
    features: &FeatureSet,
    kind: ModelKind,
    featurizer: Option<FeaturizerKind>,
    out: &Path,
) -> Result<CellOutcome> {
    let dir = out.join("cells").join(cell_name(kind, featurizer));
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let seed = cell_seed(config.seed, kind, featurizer);
    let [train_view, val_view, test_view] = &features.views;
    let [y_train, y_val, y_test] = &features.labels;
    let start = Instant::now();
    let mut warnings = Vec::new();

    let report = match (kind, featurizer) {
        (ModelKind::Rmdl, _) => {
            let matrix = features.embedding_matrix.as_deref().ok_or_else(missing_embeddings)?;
            let tf = features.views.each_ref().map(|v| NeuralInputs::Tfidf(v.tfidf.clone()));
            let emb = [train_view.embedding_inputs()?, val_view.embedding_inputs()?, test_view.embedding_inputs()?];
            let data = EnsembleData {
                tfidf: SplitInputs {
                    train: &tf[0],
                    validation: Some(&tf[1]),
                    test: &tf[2],
                },
                embedding: SplitInputs {
                    train: &emb[0],
                    validation: Some(&emb[1]),
                    test: &emb[2],
                },
                embedding_matrix: Some(matrix),
                train_labels: y_train,
                validation_labels: Some(y_val),
                test_labels: y_test,
            };
            let model = train_ensemble(&config.ensemble(), &data, config.embedding_dim, seed)?;
            let report = EvalReport::new(kind, None, y_test, &model.test_predictions, start.elapsed().as_secs_f64(), seed)?;
            model.save(
                &dir,
                &prepared.hashes_or_empty(FeaturizerKind::Tfidf, config),
                &prepared.hashes_or_empty(FeaturizerKind::Embedding, config),
            )?;
            warnings.extend(model.warnings.iter().cloned());
            report
        }
        (_, None) => return Err(Error::InvalidArgument(format!("{kind} needs a featurizer"))),
        (_, Some(f)) if !kind.supports(f) => return Err(unsupported_pair(kind, f)),
        (_, Some(f)) if kind.is_classic() => {
            let x = train_view.classic_matrix(f)?;
            let (model, fit) = ClassifierModel::fit(kind, f, &x, y_train, &config.classic(), seed)?;
            let pred = model.predict(&test_view.classic_matrix(f)?)?;
            let report = EvalReport::new(kind, Some(f), y_test, &pred.labels, start.elapsed().as_secs_f64(), seed)?;
            write_text(&dir.join("fit.json"), &serde_json::to_string_pretty(&fit)?)?;
            warnings.extend(fit.warnings.iter().cloned());
            if f == FeaturizerKind::Tfidf && kind != ModelKind::Knn {
                let top = top_features(&model, &prepared.vocab, TOP_FEATURES)?;
                write_text(&dir.join("top_features.txt"), &render_top_features(&top))?;
            }
            Container::new(f, StoredModel::Classic(model), prepared.hashes(f, config)?).save(&dir.join("model.ifdm"))?;
            report
        }
        (_, Some(f)) => {
            let neural = config.neural();
            let seq_len = neural.sequence_len(kind, config.max_len);
            let input = neural.input_for(kind, f, train_view.tfidf_dim, features.embedding_rows, config.embedding_dim, seq_len);
            let inputs = [
                train_view.neural_inputs(&input)?,
                val_view.neural_inputs(&input)?,
                test_view.neural_inputs(&input)?,
            ];
            let spec = neural.build(kind, input)?;
            let mut tc = neural.train_config(kind, seed);
            tc.precision = config.precision;
            let embedding = match f {
                FeaturizerKind::Embedding => Some(features.embedding_matrix.as_deref().ok_or_else(missing_embeddings)?),
                FeaturizerKind::Tfidf => None,
            };
            let (net, history) = train(
                spec,
                embedding,
                LabeledInputs {
                    inputs: &inputs[0],
                    labels: y_train,
                },
                Some(LabeledInputs {
                    inputs: &inputs[1],
                    labels: y_val,
                }),
                &tc,
            )?;
            let pred = net.predict(&inputs[2], tc.batch_size)?;
            let report = EvalReport::new(kind, Some(f), y_test, &pred.labels, start.elapsed().as_secs_f64(), seed)?;
            let path = dir.join("history.csv");
            history
                .write_csv(BufWriter::new(File::create(&path).map_err(io_err(&path))?))
                .map_err(io_err(&path))?;
            Container::new(f, StoredModel::Neural(net), prepared.hashes(f, config)?).save(&dir.join("model.ifdm"))?;
            report
        }
    };
    write_text(&dir.join("report.txt"), &report.render())?;
    write_text(&dir.join("report.json"), &serde_json::to_string_pretty(&report)?)?;
    for w in &warnings {
        log::warn!("{}: {w}", cell_name(kind, featurizer));
    }
    Ok(CellOutcome { report, warnings, dir })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub cell: String,
    pub error: String,
}

/// TF-IDF against embedding accuracy for one conventional model.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalCheck {
    pub model: ModelKind,
    pub tfidf: f64,
    pub embedding: f64,
}

impl DirectionalCheck {
    pub fn holds(&self) -> bool {
        self.tfidf >= self.embedding
    }

    pub fn describe(&self) -> String {
        format!(
            "{}: TF-IDF {:.2}% {} embedding {:.2}%",
            self.model.display_name(),
            self.tfidf,
            if self.holds() { ">=" } else { "<" },
            self.embedding
        )
    }
}

/// Expected pattern: TF-IDF beats pooled embeddings for the forest, neighbours and boosting.
pub fn directional_checks(reports: &[EvalReport]) -> Vec<DirectionalCheck> {
    let acc = |m, f| {
        reports
            .iter()
            .find(|r| r.model == m && r.featurizer == Some(f))
            .map(|r| r.accuracy)
    };
    [ModelKind::RandomForest, ModelKind::Knn, ModelKind::GradientBoost]
        .into_iter()
        .filter_map(|m| {
            Some(DirectionalCheck {
                model: m,
                tfidf: acc(m, FeaturizerKind::Tfidf)?,
                embedding: acc(m, FeaturizerKind::Embedding)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOutcome {
    /// Successful cells in grid order.
    pub reports: Vec<EvalReport>,
    pub failures: Vec<CellFailure>,
    pub warnings: Vec<String>,
}

/// Runs every selected cell, up to `config.workers` at a time, and writes the grid reports.
/// A failing cell is recorded and the rest still run.
pub fn run_grid(config: &RunConfig, prepared: &Prepared, out: &Path) -> Result<GridOutcome> {
    let cells = grid_cells(&config.only)?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let features = FeatureSet::build(prepared, config);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let results: Vec<Result<CellOutcome>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(kind, f)| {
                log::info!("training {}", cell_name(kind, f));
                run_cell(config, prepared, &features, kind, f, out)
            })
            .collect()
    });

    let mut reports = Vec::new();
    let mut failures = Vec::new();
    let mut warnings = Vec::new();
    for (&(kind, f), result) in cells.iter().zip(results) {
        match result {
            Ok(cell) => {
                warnings.extend(cell.warnings.iter().map(|w| format!("{}: {w}", cell_name(kind, f))));
                reports.push(cell.report);
            }
            Err(e) => {
                log::error!("{} failed: {e}", cell_name(kind, f));
                failures.push(CellFailure {
                    cell: cell_name(kind, f),
                    error: e.to_string(),
                });
            }
        }
    }
    for check in directional_checks(&reports).iter().filter(|c| !c.holds()) {
        warnings.push(format!("expected TF-IDF to lead: {}", check.describe()));
    }
    write_grid_reports(out, &reports, &failures, &warnings)?;
    Ok(GridOutcome {
        reports,
        failures,
        warnings,
    })
}

fn write_grid_reports(out: &Path, reports: &[EvalReport], failures: &[CellFailure], warnings: &[String]) -> Result<()> {
    let path = out.join("metrics.csv");
    write_metrics_csv(reports, File::create(&path).map_err(io_err(&path))?)?;
    let path = out.join("timings.csv");
    write_timings_csv(reports, File::create(&path).map_err(io_err(&path))?)?;
    write_text(&out.join("table.txt"), &render_report(reports, TableStyle::Plain))?;
    write_text(&out.join("table.md"), &render_report(reports, TableStyle::Markdown))?;
    let mut text = String::new();
    for f in failures {
        text.push_str(&format!("{}: {}\n", f.cell, f.error));
    }
    write_text(&out.join("failures.txt"), &text)?;
    write_text(&out.join("warnings.txt"), &warnings.iter().map(|w| format!("{w}\n")).collect::<String>())
}

/// The comparison table followed by the directional checks.
pub fn render_report(reports: &[EvalReport], style: TableStyle) -> String {
    let mut out = comparison_table(reports, style);
    let checks = directional_checks(reports);
    if !checks.is_empty() {
        out.push_str("\nTF-IDF versus embeddings:\n");
        for c in checks {
            out.push_str(&format!("  {}{}\n", c.describe(), if c.holds() { "" } else { "  (warning)" }));
        }
    }
    out
}

/// Reads `cells/*/report.json` under a run directory, in grid order.
pub fn collect_reports(run_dir: &Path) -> Result<Vec<EvalReport>> {
    let cells_dir = run_dir.join("cells");
    let mut reports = Vec::new();
    for (kind, f) in grid_cells(&[])? {
        let path = cells_dir.join(cell_name(kind, f)).join("report.json");
        if path.exists() {
            let text = fs::read_to_string(&path).map_err(io_err(&path))?;
            reports.push(serde_json::from_str(&text)?);
        }
    }
    Ok(reports)
}

/// A saved model: a single container or an ensemble directory.
#[derive(Debug, Clone)]
pub enum LoadedModel {
    Single(Box<Container>),
    Ensemble(LoadedEnsemble),
}

impl LoadedModel {
    /// Loads a model and refuses it unless its hashes match the prepared pipeline.
    /// A cell directory resolves to the model inside it.
    pub fn load(path: &Path, prepared: &Prepared, config: &RunConfig) -> Result<Self> {
        if path.is_dir() {
            if path.join("manifest.json").exists() {
                return Ok(LoadedModel::Ensemble(LoadedEnsemble::load(
                    path,
                    &prepared.hashes_or_empty(FeaturizerKind::Tfidf, config),
                    &prepared.hashes_or_empty(FeaturizerKind::Embedding, config),
                )?));
            }
            return Self::load(&path.join("model.ifdm"), prepared, config);
        }
        let c = Container::load(path)?;
        c.verify(&prepared.hashes(c.featurizer, config)?)?;
        Ok(LoadedModel::Single(Box::new(c)))
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            LoadedModel::Single(c) => c.kind,
            LoadedModel::Ensemble(_) => ModelKind::Rmdl,
        }
    }

    pub fn featurizer(&self) -> Option<FeaturizerKind> {
        match self {
            LoadedModel::Single(c) => Some(c.featurizer),
            LoadedModel::Ensemble(_) => None,
        }
    }

    pub fn predict(&self, view: &FeatureView, batch_size: usize) -> Result<Predictions> {
        match self {
            LoadedModel::Single(c) => match &c.model {
                StoredModel::Classic(m) => m.predict(&view.classic_matrix(c.featurizer)?),
                StoredModel::Neural(net) => net.predict(&view.neural_inputs(&net.spec.input)?, batch_size),
            },
            LoadedModel::Ensemble(e) => {
                e.predict(&NeuralInputs::Tfidf(view.tfidf.clone()), &view.embedding_inputs()?, batch_size)
            }
        }
    }
}

/// Scores a saved model on the prepared test split.
pub fn evaluate_model(config: &RunConfig, prepared: &Prepared, path: &Path) -> Result<EvalReport> {
    let model = LoadedModel::load(path, prepared, config)?;
    let test = &prepared.splits[2];
    let view = prepared.featurize(&test.stemmed, &test.surface, config);
    let start = Instant::now();
    let pred = model.predict(&view, config.batch_size)?;
    EvalReport::new(
        model.kind(),
        model.featurizer(),
        &test.labels,
        &pred.labels,
        start.elapsed().as_secs_f64(),
        config.seed,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PredictSummary {
    pub written: usize,
    /// Malformed input rows left out of the output.
    pub skipped: usize,
}

/// Writes `id,predicted_label,score` for every well-formed row of `input`. The score is the
/// model's probability for the predicted label.
pub fn predict_file<W: Write>(
    config: &RunConfig,
    prepared: &Prepared,
    model: &LoadedModel,
    input: &Path,
    output: W,
) -> Result<PredictSummary> {
    let bytes = fs::read(input).map_err(io_err(input))?;
    let mut wtr = csv::Writer::from_writer(output);
    wtr.write_record(["id", "predicted_label", "score"])?;
    if bytes.iter().all(u8::is_ascii_whitespace) {
        wtr.flush().map_err(io_err(input))?;
        return Ok(PredictSummary { written: 0, skipped: 0 });
    }
    let (rows, issues) = read_unlabeled(&bytes[..], &config.table_options())?;
    for issue in &issues {
        log::warn!("{}: skipped {issue}", input.display());
    }
    let texts: Vec<String> = rows.iter().map(|r| r.text.clone()).collect();
    let (stemmed, surface) = prepared.tokenize(&texts);
    let view = prepared.featurize(&stemmed, &surface, config);
    let pred = if rows.is_empty() {
        Predictions::default()
    } else {
        model.predict(&view, config.batch_size)?
    };
    for (i, row) in rows.iter().enumerate() {
        let label = if pred.labels[i] == 1 { "real" } else { "fake" };
        wtr.write_record([row.id.as_str(), label, &format!("{:.6}", pred.confidence(i))])?;
    }
    wtr.flush().map_err(io_err(input))?;
    Ok(PredictSummary {
        written: rows.len(),
        skipped: issues.len(),
    })
}
