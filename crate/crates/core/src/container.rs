//! The `IFDM` model container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "IFDM" | version: u8 | section count: u8 | sections...
//! section = tag: u8 | byte length: u64 | payload
//! ```
//!
//! Sections: 1 header (JSON: model kind, featurizer, architecture or classic settings),
//! 2 tensors, 3 vocabulary hash, 4 preprocessing hash. A tensor is
//! `name length: u16 | name | dtype: u8 | rank: u8 | dims: u64 each | payload`.
//! Learned parameters are stored as f32; integer tables as u32. The one f64 payload is the
//! nearest-neighbour training set, which is data rather than a learned parameter and is kept
//! exact so neighbour order survives a round trip.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classic::tree::Tree;
use crate::classic::{ClassifierModel, GradientBoosting, Knn, KnnMetric, MultinomialNb, RandomForest};
use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, SparseVector};
use crate::kinds::{FeaturizerKind, ModelKind};
use crate::neural::{ArchitectureSpec, Cell, LayerSpec, Network};
use crate::tensor::{ParamStore, Tensor};

pub const MAGIC: &[u8; 4] = b"IFDM";
pub const VERSION: u8 = 1;

const TAG_HEADER: u8 = 1;
const TAG_TENSORS: u8 = 2;
const TAG_VOCAB_HASH: u8 = 3;
const TAG_PREPROCESS_HASH: u8 = 4;

/// Fingerprints of the pipeline a model was trained behind.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PipelineHashes {
    /// TF-IDF vocabulary or embedding table, whichever the model reads.
    pub vocabulary: String,
    pub preprocess: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ClassicHeader {
    NaiveBayes { alpha: f64 },
    Knn { k: usize, metric: KnnMetric, sparse: bool, dim: usize },
    RandomForest { dim: usize, n_trees: usize },
    GradientBoost { dim: usize, init: f64, learning_rate: f64, n_trees: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub kind: ModelKind,
    pub featurizer: FeaturizerKind,
    pub architecture: Option<ArchitectureSpec>,
    pub classic: Option<ClassicHeader>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StoredModel {
    Classic(ClassifierModel),
    Neural(Network),
}

impl StoredModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            StoredModel::Classic(m) => m.kind(),
            StoredModel::Neural(n) => {
                let mut kind = ModelKind::Dnn;
                for layer in &n.spec.layers {
                    match layer {
                        LayerSpec::Recurrent { cell: Cell::Gru, .. } => return ModelKind::Gru,
                        LayerSpec::Recurrent { cell: Cell::Lstm, .. } => return ModelKind::Lstm,
                        LayerSpec::Concat { .. } | LayerSpec::Conv1d { .. } => kind = ModelKind::Cnn,
                        _ => {}
                    }
                }
                kind
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub kind: ModelKind,
    pub featurizer: FeaturizerKind,
    pub model: StoredModel,
    pub hashes: PipelineHashes,
}

#[derive(Debug, Clone, PartialEq)]
enum Payload {
    F32(Vec<f32>),
    U32(Vec<u32>),
    F64(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
struct NamedTensor {
    name: String,
    shape: Vec<usize>,
    payload: Payload,
}

impl NamedTensor {
    fn f32(name: impl Into<String>, shape: Vec<usize>, data: &[f64]) -> Self {
        NamedTensor {
            name: name.into(),
            shape,
            payload: Payload::F32(data.iter().map(|&v| v as f32).collect()),
        }
    }

    fn len(&self) -> usize {
        match &self.payload {
            Payload::F32(v) => v.len(),
            Payload::U32(v) => v.len(),
            Payload::F64(v) => v.len(),
        }
    }

    fn floats(&self) -> Result<Vec<f64>> {
        match &self.payload {
            Payload::F32(v) => Ok(v.iter().map(|&x| x as f64).collect()),
            Payload::F64(v) => Ok(v.clone()),
            Payload::U32(_) => Err(Error::Container(format!("tensor `{}` holds integers", self.name))),
        }
    }

    fn ints(&self) -> Result<&[u32]> {
        match &self.payload {
            Payload::U32(v) => Ok(v),
            _ => Err(Error::Container(format!("tensor `{}` holds floats", self.name))),
        }
    }
}

fn tensors_of(model: &StoredModel) -> (Option<ClassicHeader>, Vec<NamedTensor>) {
    match model {
        StoredModel::Neural(net) => {
            let tensors = net
                .store
                .params()
                .iter()
                .map(|p| NamedTensor::f32(format!("{}/{}", p.layer, p.name), p.value.shape().to_vec(), p.value.data()))
                .collect();
            (None, tensors)
        }
        StoredModel::Classic(ClassifierModel::NaiveBayes(nb)) => {
            let mut table = nb.feature_log_prob(0).to_vec();
            table.extend_from_slice(nb.feature_log_prob(1));
            (
                Some(ClassicHeader::NaiveBayes { alpha: nb.alpha() }),
                vec![
                    NamedTensor::f32("class_log_prior", vec![2], &nb.class_log_prior()),
                    NamedTensor::f32("feature_log_prob", vec![2, nb.dim()], &table),
                ],
            )
        }
        StoredModel::Classic(ClassifierModel::RandomForest(rf)) => {
            let mut tensors = tree_tensors(rf.trees());
            tensors.push(NamedTensor::f32("importances", vec![rf.dim()], rf.importances()));
            (
                Some(ClassicHeader::RandomForest {
                    dim: rf.dim(),
                    n_trees: rf.trees().len(),
                }),
                tensors,
            )
        }
        StoredModel::Classic(ClassifierModel::GradientBoost(gb)) => {
            let mut tensors = tree_tensors(gb.trees());
            tensors.push(NamedTensor::f32("importances", vec![gb.dim()], gb.importances()));
            (
                Some(ClassicHeader::GradientBoost {
                    dim: gb.dim(),
                    init: gb.init(),
                    learning_rate: gb.learning_rate(),
                    n_trees: gb.trees().len(),
                }),
                tensors,
            )
        }
        StoredModel::Classic(ClassifierModel::Knn(knn)) => {
            let labels = NamedTensor {
                name: "labels".into(),
                shape: vec![knn.train_labels().len()],
                payload: Payload::U32(knn.train_labels().iter().map(|&l| l as u32).collect()),
            };
            let mut tensors = vec![labels];
            let train = knn.train_matrix();
            match train {
                FeatureMatrix::Sparse { rows, .. } => {
                    let mut indptr = vec![0u32];
                    let (mut indices, mut values) = (Vec::new(), Vec::new());
                    for r in rows {
                        indices.extend_from_slice(r.indices());
                        values.extend_from_slice(r.values());
                        indptr.push(indices.len() as u32);
                    }
                    tensors.push(NamedTensor {
                        name: "indptr".into(),
                        shape: vec![indptr.len()],
                        payload: Payload::U32(indptr),
                    });
                    tensors.push(NamedTensor {
                        name: "indices".into(),
                        shape: vec![indices.len()],
                        payload: Payload::U32(indices),
                    });
                    tensors.push(NamedTensor {
                        name: "values".into(),
                        shape: vec![values.len()],
                        payload: Payload::F64(values),
                    });
                }
                FeatureMatrix::Dense { dim, data } => tensors.push(NamedTensor {
                    name: "data".into(),
                    shape: vec![train.n_rows(), *dim],
                    payload: Payload::F64(data.clone()),
                }),
            }
            (
                Some(ClassicHeader::Knn {
                    k: knn.k(),
                    metric: knn.metric(),
                    sparse: train.is_sparse(),
                    dim: train.dim(),
                }),
                tensors,
            )
        }
    }
}

fn tree_tensors(trees: &[Tree]) -> Vec<NamedTensor> {
    trees
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let flat = t.to_flat();
            NamedTensor {
                name: format!("tree.{i}"),
                shape: vec![flat.len() / 5, 5],
                payload: Payload::F32(flat),
            }
        })
        .collect()
}

fn trees_from(tensors: &[NamedTensor], n: usize) -> Result<Vec<Tree>> {
    (0..n)
        .map(|i| {
            let t = find(tensors, &format!("tree.{i}"))?;
            match &t.payload {
                Payload::F32(flat) => Tree::from_flat(flat).ok_or_else(|| Error::Container(format!("tree {i} is malformed"))),
                _ => Err(Error::Container(format!("tree {i} is not f32"))),
            }
        })
        .collect()
}

fn find<'a>(tensors: &'a [NamedTensor], name: &str) -> Result<&'a NamedTensor> {
    tensors
        .iter()
        .find(|t| t.name == name)
        .ok_or_else(|| Error::Container(format!("missing tensor `{name}`")))
}

fn rebuild(header: &Header, tensors: &[NamedTensor]) -> Result<StoredModel> {
    if let Some(spec) = &header.architecture {
        let mut store = ParamStore::new();
        for t in tensors {
            let (layer, name) = t
                .name
                .split_once('/')
                .ok_or_else(|| Error::Container(format!("parameter `{}` lacks a layer prefix", t.name)))?;
            store.add(layer, name, Tensor::new(t.shape.clone(), t.floats()?)?);
        }
        return Ok(StoredModel::Neural(Network::from_parts(spec.clone(), store)?));
    }
    let classic = header
        .classic
        .as_ref()
        .ok_or_else(|| Error::Container("header names neither an architecture nor a classic model".into()))?;
    let model = match classic {
        ClassicHeader::NaiveBayes { alpha } => {
            let prior = find(tensors, "class_log_prior")?.floats()?;
            let table = find(tensors, "feature_log_prob")?.floats()?;
            if prior.len() != 2 || table.len() % 2 != 0 {
                return Err(Error::Container("naive Bayes tables have the wrong shape".into()));
            }
            let (a, b) = table.split_at(table.len() / 2);
            ClassifierModel::NaiveBayes(MultinomialNb::from_parts(*alpha, [prior[0], prior[1]], [a.to_vec(), b.to_vec()])?)
        }
        ClassicHeader::RandomForest { dim, n_trees } => ClassifierModel::RandomForest(RandomForest::from_parts(
            *dim,
            trees_from(tensors, *n_trees)?,
            find(tensors, "importances")?.floats()?,
        )?),
        ClassicHeader::GradientBoost {
            dim,
            init,
            learning_rate,
            n_trees,
        } => ClassifierModel::GradientBoost(GradientBoosting::from_parts(
            *dim,
            *init,
            *learning_rate,
            trees_from(tensors, *n_trees)?,
            find(tensors, "importances")?.floats()?,
        )?),
        ClassicHeader::Knn { k, metric, sparse, dim } => {
            let labels: Vec<usize> = find(tensors, "labels")?.ints()?.iter().map(|&l| l as usize).collect();
            let x = if *sparse {
                let indptr = find(tensors, "indptr")?.ints()?;
                let indices = find(tensors, "indices")?.ints()?;
                let values = find(tensors, "values")?.floats()?;
                if indptr.len() != labels.len() + 1 || indices.len() != values.len() {
                    return Err(Error::Container("sparse training set has inconsistent lengths".into()));
                }
                let mut rows = Vec::with_capacity(labels.len());
                for w in indptr.windows(2) {
                    let (a, b) = (w[0] as usize, w[1] as usize);
                    if a > b || b > indices.len() {
                        return Err(Error::Container("sparse row pointers out of order".into()));
                    }
                    let pairs = indices[a..b].iter().copied().zip(values[a..b].iter().copied()).collect();
                    rows.push(SparseVector::from_pairs(*dim, pairs)?);
                }
                FeatureMatrix::sparse(*dim, rows)?
            } else {
                FeatureMatrix::dense(*dim, find(tensors, "data")?.floats()?)?
            };
            ClassifierModel::Knn(Knn::fit(&x, &labels, *k, *metric)?)
        }
    };
    Ok(StoredModel::Classic(model))
}

fn put_section(out: &mut Vec<u8>, tag: u8, payload: &[u8]) {
    out.push(tag);
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(payload);
}

fn encode_tensors(tensors: &[NamedTensor]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        let dtype = match t.payload {
            Payload::F32(_) => 0u8,
            Payload::U32(_) => 1,
            Payload::F64(_) => 2,
        };
        out.push(dtype);
        out.push(t.shape.len() as u8);
        for &d in &t.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        match &t.payload {
            Payload::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            Payload::U32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            Payload::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
    }
    out
}

/// Bounds-checked little-endian reader over a byte slice.
struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Container("unexpected end of data".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

fn decode_tensors(bytes: &[u8]) -> Result<Vec<NamedTensor>> {
    let mut c = Cursor { bytes, pos: 0 };
    let count = c.u32()? as usize;
    let mut out = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let name_len = c.u16()? as usize;
        let name = String::from_utf8(c.take(name_len)?.to_vec())
            .map_err(|_| Error::Container("tensor name is not UTF-8".into()))?;
        let dtype = c.u8()?;
        let rank = c.u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(usize::try_from(c.u64()?).map_err(|_| Error::Container("tensor dimension overflows".into()))?);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Container(format!("tensor `{name}` is too large")))?;
        let width = match dtype {
            0 | 1 => 4,
            2 => 8,
            other => return Err(Error::Container(format!("unknown dtype {other} for `{name}`"))),
        };
        let raw = c.take(n.checked_mul(width).ok_or_else(|| Error::Container("tensor too large".into()))?)?;
        let payload = match dtype {
            0 => Payload::F32(raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect()),
            1 => Payload::U32(raw.chunks_exact(4).map(|b| u32::from_le_bytes(b.try_into().unwrap())).collect()),
            _ => Payload::F64(raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect()),
        };
        let t = NamedTensor { name, shape, payload };
        debug_assert_eq!(t.len(), n);
        out.push(t);
    }
    if !c.done() {
        return Err(Error::Container("trailing bytes after the last tensor".into()));
    }
    Ok(out)
}

impl Container {
    pub fn new(featurizer: FeaturizerKind, model: StoredModel, hashes: PipelineHashes) -> Self {
        Container {
            kind: model.kind(),
            featurizer,
            model,
            hashes,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let (classic, tensors) = tensors_of(&self.model);
        let header = Header {
            kind: self.kind,
            featurizer: self.featurizer,
            architecture: match &self.model {
                StoredModel::Neural(n) => Some(n.spec.clone()),
                StoredModel::Classic(_) => None,
            },
            classic,
        };
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(4);
        put_section(&mut out, TAG_HEADER, &serde_json::to_vec(&header)?);
        put_section(&mut out, TAG_TENSORS, &encode_tensors(&tensors));
        put_section(&mut out, TAG_VOCAB_HASH, self.hashes.vocabulary.as_bytes());
        put_section(&mut out, TAG_PREPROCESS_HASH, self.hashes.preprocess.as_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut c = Cursor { bytes, pos: 0 };
        if c.take(4).ok() != Some(MAGIC.as_slice()) {
            return Err(Error::Container("not an IFDM file (bad magic)".into()));
        }
        let version = c.u8()?;
        if version != VERSION {
            return Err(Error::Container(format!("unsupported format version {version}")));
        }
        let count = c.u8()?;
        let (mut header, mut tensors, mut vocab, mut prep) = (None, None, None, None);
        for _ in 0..count {
            let tag = c.u8()?;
            let len = usize::try_from(c.u64()?).map_err(|_| Error::Container("section too large".into()))?;
            let body = c.take(len)?;
            let text = || String::from_utf8(body.to_vec()).map_err(|_| Error::Container("hash is not UTF-8".into()));
            match tag {
                TAG_HEADER => header = Some(serde_json::from_slice::<Header>(body)?),
                TAG_TENSORS => tensors = Some(decode_tensors(body)?),
                TAG_VOCAB_HASH => vocab = Some(text()?),
                TAG_PREPROCESS_HASH => prep = Some(text()?),
                other => return Err(Error::Container(format!("unknown section tag {other}"))),
            }
        }
        if !c.done() {
            return Err(Error::Container("trailing bytes after the last section".into()));
        }
        let missing = |what: &str| Error::Container(format!("missing {what} section"));
        let header = header.ok_or_else(|| missing("header"))?;
        let tensors = tensors.ok_or_else(|| missing("tensor"))?;
        let model = rebuild(&header, &tensors)?;
        if model.kind() != header.kind {
            return Err(Error::Container(format!("header says {}, payload is {}", header.kind, model.kind())));
        }
        Ok(Container {
            kind: header.kind,
            featurizer: header.featurizer,
            model,
            hashes: PipelineHashes {
                vocabulary: vocab.ok_or_else(|| missing("vocabulary hash"))?,
                preprocess: prep.ok_or_else(|| missing("preprocessing hash"))?,
            },
        })
    }

    /// Errors unless both hashes match the active pipeline.
    pub fn verify(&self, active: &PipelineHashes) -> Result<()> {
        if self.hashes.preprocess != active.preprocess {
            return Err(Error::HashMismatch {
                what: "preprocessing",
                expected: self.hashes.preprocess.clone(),
                found: active.preprocess.clone(),
            });
        }
        if self.hashes.vocabulary != active.vocabulary {
            return Err(Error::HashMismatch {
                what: "vocabulary",
                expected: self.hashes.vocabulary.clone(),
                found: active.vocabulary.clone(),
            });
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        w.write_all(&bytes).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut bytes = Vec::new();
        BufReader::new(file).read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Loads and checks the hashes against the active pipeline.
    pub fn load_verified(path: &Path, active: &PipelineHashes) -> Result<Self> {
        let c = Self::load(path)?;
        c.verify(active)?;
        Ok(c)
    }
}
