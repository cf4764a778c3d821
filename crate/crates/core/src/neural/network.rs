//! Parameter allocation and the forward pass for an [`ArchitectureSpec`].

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::spec::{ArchitectureSpec, Cell, InputSpec, LayerSpec};
use crate::classic::Predictions;
use crate::error::{Error, Result};
use crate::features::{IndexSequence, SparseVector};
use crate::seeding::{derive_seed, rng_for, streams};
use crate::tensor::init::{uniform_fan_in, RELU_GAIN};
use crate::tensor::{softmax_rows, Gradients, Graph, NodeId, ParamId, ParamStore, Tensor};

/// Featurized documents in the form a network's input expects.
#[derive(Debug, Clone, PartialEq)]
pub enum NeuralInputs {
    Tfidf(Vec<SparseVector>),
    Sequences(Vec<IndexSequence>),
}

impl NeuralInputs {
    pub fn len(&self) -> usize {
        match self {
            NeuralInputs::Tfidf(rows) => rows.len(),
            NeuralInputs::Sequences(seqs) => seqs.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn batch(&self, rows: &[usize]) -> Batch {
        match self {
            NeuralInputs::Tfidf(all) => Batch::Sparse(rows.iter().map(|&i| all[i].clone()).collect()),
            NeuralInputs::Sequences(all) => Batch::Tokens {
                indices: rows.iter().flat_map(|&i| all[i].indices.iter().copied()).collect(),
                lengths: rows.iter().map(|&i| all[i].true_length).collect(),
                batch: rows.len(),
            },
        }
    }

    /// Copy with every token sequence cut to at most `max_len` positions; TF-IDF rows pass through.
    pub fn truncated(&self, max_len: usize) -> NeuralInputs {
        match self {
            NeuralInputs::Tfidf(rows) => NeuralInputs::Tfidf(rows.clone()),
            NeuralInputs::Sequences(seqs) => NeuralInputs::Sequences(
                seqs.iter()
                    .map(|s| IndexSequence {
                        indices: s.indices.iter().copied().take(max_len).collect(),
                        true_length: s.true_length.min(max_len),
                    })
                    .collect(),
            ),
        }
    }

    /// Errors unless the inputs fit `spec`'s input mode.
    pub fn check(&self, spec: &InputSpec) -> Result<()> {
        match (self, spec) {
            (NeuralInputs::Tfidf(rows), InputSpec::TfidfVector { dim } | InputSpec::TfidfSequence { dim, .. }) => {
                match rows.iter().find(|r| r.dim() != *dim) {
                    Some(bad) => Err(Error::DimensionMismatch {
                        expected: *dim,
                        got: bad.dim(),
                    }),
                    None => Ok(()),
                }
            }
            (NeuralInputs::Sequences(seqs), InputSpec::EmbeddingSequence { vocab, max_len, .. }) => {
                for s in seqs {
                    if s.indices.len() != *max_len {
                        return Err(Error::DimensionMismatch {
                            expected: *max_len,
                            got: s.indices.len(),
                        });
                    }
                    if let Some(&i) = s.indices.iter().find(|&&i| i as usize >= *vocab) {
                        return Err(Error::Shape(format!("token index {i} outside an embedding of {vocab} rows")));
                    }
                }
                Ok(())
            }
            _ => Err(Error::Unsupported(
                "the featurized input does not match the network's input mode".into(),
            )),
        }
    }
}

/// One mini-batch of inputs.
#[derive(Debug, Clone)]
pub enum Batch {
    Sparse(Vec<SparseVector>),
    Tokens {
        indices: Vec<u32>,
        lengths: Vec<usize>,
        batch: usize,
    },
}

impl Batch {
    pub fn len(&self) -> usize {
        match self {
            Batch::Sparse(rows) => rows.len(),
            Batch::Tokens { batch, .. } => *batch,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// An architecture together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub spec: ArchitectureSpec,
    pub store: ParamStore,
}

enum Value {
    Sparse(Vec<SparseVector>),
    Tokens(Vec<u32>),
    Node(NodeId),
}

struct Forward<'a, 'g, 'p> {
    g: &'g mut Graph<'p>,
    cursor: usize,
    train: bool,
    rng: &'a mut ChaCha8Rng,
    batch: usize,
    lengths: Option<Vec<usize>>,
}

impl Forward<'_, '_, '_> {
    fn next_param(&mut self) -> NodeId {
        let id = ParamId(self.cursor);
        self.cursor += 1;
        self.g.param(id)
    }

    fn node(&mut self, v: Value, layer: &LayerSpec) -> Result<NodeId> {
        match v {
            Value::Node(n) => Ok(n),
            _ => Err(Error::Shape(format!("{} layer needs a dense input", layer.kind_name()))),
        }
    }

    fn chain(&mut self, layers: &[LayerSpec], mut v: Value) -> Result<Value> {
        for layer in layers {
            v = self.layer(layer, v)?;
        }
        Ok(v)
    }

    fn layer(&mut self, layer: &LayerSpec, v: Value) -> Result<Value> {
        Ok(Value::Node(match layer {
            LayerSpec::Dense { relu, .. } => {
                let (w, b) = (self.next_param(), self.next_param());
                match v {
                    Value::Sparse(rows) => self.g.sparse_dense(rows, w, b, *relu)?,
                    other => {
                        let x = self.node(other, layer)?;
                        self.g.dense(x, w, b, *relu)?
                    }
                }
            }
            LayerSpec::Dropout { rate } => {
                let x = self.node(v, layer)?;
                self.g.dropout(x, *rate, self.train, self.rng)?
            }
            LayerSpec::Embedding { .. } => {
                let Value::Tokens(indices) = v else {
                    return Err(Error::Shape("embedding layer needs token indices".into()));
                };
                let table = self.next_param();
                self.g.embedding(indices, self.batch, table, Some(0))?
            }
            LayerSpec::Reshape { time, channels } => match v {
                Value::Sparse(rows) => {
                    let width = time * channels;
                    let mut data = vec![0.0; rows.len() * width];
                    for (r, row) in rows.iter().enumerate() {
                        for (j, value) in row.iter() {
                            data[r * width + j] = value;
                        }
                    }
                    self.g.input(Tensor::new(vec![rows.len(), *time, *channels], data)?)
                }
                other => {
                    let x = self.node(other, layer)?;
                    self.g.reshape(x, vec![self.batch, *time, *channels])?
                }
            },
            LayerSpec::Conv1d { .. } => {
                let x = self.node(v, layer)?;
                let (k, b) = (self.next_param(), self.next_param());
                self.lengths = None;
                self.g.conv1d(x, k, b)?
            }
            LayerSpec::AvgPool { window } => {
                let x = self.node(v, layer)?;
                let pool = match window {
                    None => crate::tensor::Pool::Global,
                    Some(k) => crate::tensor::Pool::Fixed(*k),
                };
                self.lengths = None;
                self.g.avg_pool(x, pool)?
            }
            LayerSpec::Recurrent {
                cell, return_sequence, ..
            } => {
                let x = self.node(v, layer)?;
                let (wx, wh, b) = (self.next_param(), self.next_param(), self.next_param());
                let lengths = self.lengths.clone();
                match cell {
                    Cell::Gru => self.g.gru(x, wx, wh, b, lengths, *return_sequence)?,
                    Cell::Lstm => self.g.lstm(x, wx, wh, b, lengths, *return_sequence)?,
                }
            }
            LayerSpec::Flatten => match v {
                Value::Sparse(rows) => return Ok(Value::Sparse(rows)),
                other => {
                    let x = self.node(other, layer)?;
                    self.g.flatten(x)?
                }
            },
            LayerSpec::Concat { branches } => {
                let saved = self.lengths.clone();
                let mut parts = Vec::with_capacity(branches.len());
                for branch in branches {
                    self.lengths = saved.clone();
                    let input = match &v {
                        Value::Sparse(rows) => Value::Sparse(rows.clone()),
                        Value::Tokens(t) => Value::Tokens(t.clone()),
                        Value::Node(n) => Value::Node(*n),
                    };
                    let out = self.chain(branch, input)?;
                    parts.push(self.node(out, layer)?);
                }
                self.lengths = None;
                self.g.concat(parts)?
            }
            LayerSpec::Softmax => return Ok(v),
        }))
    }
}

/// Builds the forward graph for `batch` and returns the logits node. Parameters are taken
/// from the store in allocation order.
pub fn logits(
    spec: &ArchitectureSpec,
    g: &mut Graph,
    batch: &Batch,
    train: bool,
    rng: &mut ChaCha8Rng,
) -> Result<NodeId> {
    let (input, lengths) = match batch {
        Batch::Sparse(rows) => (Value::Sparse(rows.clone()), None),
        Batch::Tokens { indices, lengths, .. } => (Value::Tokens(indices.clone()), Some(lengths.clone())),
    };
    let mut fwd = Forward {
        g,
        cursor: 0,
        train,
        rng,
        batch: batch.len(),
        lengths,
    };
    let out = fwd.chain(&spec.layers, input)?;
    match out {
        Value::Node(n) => Ok(n),
        _ => Err(Error::Shape("network produced no dense output".into())),
    }
}

/// Mean cross-entropy of `labels` and its gradient with respect to every parameter.
pub fn loss_and_gradients(
    spec: &ArchitectureSpec,
    store: &ParamStore,
    batch: &Batch,
    labels: &[usize],
    train: bool,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, Gradients, Vec<f64>)> {
    let mut g = Graph::new(store);
    let out = logits(spec, &mut g, batch, train, rng)?;
    let probs = softmax_rows(g.value(out).data(), 2);
    let loss = g.softmax_cross_entropy(out, labels)?;
    let value = g.value(loss).item();
    Ok((value, g.backward(loss)?, probs))
}

fn add_params(
    layers: &[LayerSpec],
    in_shape: super::spec::Shape,
    store: &mut ParamStore,
    rng: &mut ChaCha8Rng,
    embedding: &mut Option<&[f64]>,
    counter: &mut usize,
) -> Result<super::spec::Shape> {
    use super::spec::Shape;
    let mut shape = in_shape;
    for layer in layers {
        let name = format!("{}_{}", layer.kind_name(), *counter);
        *counter += 1;
        let width_of = |s: Shape| match s {
            Shape::Sparse(n) | Shape::Flat(n) | Shape::Tokens(n) => n,
            Shape::Seq(_, c) => c,
        };
        match layer {
            LayerSpec::Dense { units, relu } => {
                let fan_in = width_of(shape);
                let gain = if *relu { RELU_GAIN } else { 1.0 };
                store.add(&name, "W", uniform_fan_in(rng, &[fan_in, *units], fan_in, gain));
                store.add(&name, "b", Tensor::zeros(&[*units]));
            }
            LayerSpec::Embedding { vocab, dim } => {
                let table = match embedding.take() {
                    Some(values) => {
                        if values.len() != vocab * dim {
                            return Err(Error::Shape(format!(
                                "pretrained table has {} values, layer needs {vocab} x {dim}",
                                values.len()
                            )));
                        }
                        Tensor::new(vec![*vocab, *dim], values.to_vec())?
                    }
                    None => {
                        let mut t = Tensor::new(
                            vec![*vocab, *dim],
                            (0..vocab * dim).map(|_| rng.random_range(-0.05..0.05)).collect(),
                        )?;
                        t.data_mut()[..*dim].iter_mut().for_each(|v| *v = 0.0);
                        t
                    }
                };
                store.add(&name, "E", table);
            }
            LayerSpec::Conv1d { width, filters } => {
                let ch = width_of(shape);
                let fan_in = width * ch;
                store.add(&name, "K", uniform_fan_in(rng, &[*width, ch, *filters], fan_in, RELU_GAIN));
                store.add(&name, "b", Tensor::zeros(&[*filters]));
            }
            LayerSpec::Recurrent { cell, hidden, .. } => {
                let inp = width_of(shape);
                let cols = cell.gates() * hidden;
                store.add(&name, "Wx", uniform_fan_in(rng, &[inp, cols], inp, 1.0));
                store.add(&name, "Wh", uniform_fan_in(rng, &[*hidden, cols], *hidden, 1.0));
                let mut b = Tensor::zeros(&[cols]);
                if *cell == Cell::Lstm {
                    // Forget-gate block starts open.
                    b.data_mut()[*hidden..2 * hidden].iter_mut().for_each(|v| *v = 1.0);
                }
                store.add(&name, "b", b);
            }
            LayerSpec::Concat { branches } => {
                for branch in branches {
                    add_params(branch, shape, store, rng, embedding, counter)?;
                }
            }
            _ => {}
        }
        if !matches!(layer, LayerSpec::Softmax) {
            shape = super::spec::infer_shape(layer, shape)?;
        }
    }
    Ok(shape)
}

impl Network {
    /// Allocates parameters with seeded uniform fan-in initialization. `embedding` optionally
    /// supplies the pretrained `[vocab, dim]` table for the embedding layer.
    pub fn init(spec: ArchitectureSpec, seed: u64, embedding: Option<&[f64]>) -> Result<Self> {
        spec.validate()?;
        let mut store = ParamStore::new();
        let mut rng = rng_for(derive_seed(seed, streams::NEURAL_INIT), 0);
        let mut embedding = embedding;
        let mut counter = 0;
        add_params(spec.body(), spec.input_shape(), &mut store, &mut rng, &mut embedding, &mut counter)?;
        Ok(Network { spec, store })
    }

    /// Rebuilds a network from stored parameters, checking every shape against the spec.
    pub fn from_parts(spec: ArchitectureSpec, store: ParamStore) -> Result<Self> {
        let fresh = Network::init(spec.clone(), 0, None)?;
        if fresh.store.len() != store.len() {
            return Err(Error::Container(format!(
                "architecture needs {} parameter tensors, found {}",
                fresh.store.len(),
                store.len()
            )));
        }
        for (a, b) in fresh.store.params().iter().zip(store.params()) {
            if a.value.shape() != b.value.shape() {
                return Err(Error::Container(format!(
                    "parameter {}/{} has shape {:?}, architecture needs {:?}",
                    b.layer,
                    b.name,
                    b.value.shape(),
                    a.value.shape()
                )));
            }
        }
        Ok(Network { spec, store })
    }

    pub fn parameter_count(&self) -> usize {
        self.store.size()
    }

    /// Eval-mode class probabilities `[P(fake), P(real)]`, computed `batch_size` rows at a time.
    pub fn predict_proba(&self, inputs: &NeuralInputs, batch_size: usize) -> Result<Vec<[f64; 2]>> {
        inputs.check(&self.spec.input)?;
        let mut rng = rng_for(0, 0);
        let mut out = Vec::with_capacity(inputs.len());
        let rows: Vec<usize> = (0..inputs.len()).collect();
        for chunk in rows.chunks(batch_size.max(1)) {
            let batch = inputs.batch(chunk);
            let mut g = Graph::new(&self.store);
            let l = logits(&self.spec, &mut g, &batch, false, &mut rng)?;
            let probs = softmax_rows(g.value(l).data(), 2);
            out.extend(probs.chunks_exact(2).map(|p| [p[0], p[1]]));
        }
        Ok(out)
    }

    /// Argmax labels (ties go to fake) and the probability of the real class.
    pub fn predict(&self, inputs: &NeuralInputs, batch_size: usize) -> Result<Predictions> {
        let proba = self.predict_proba(inputs, batch_size)?;
        Ok(Predictions {
            labels: proba.iter().map(|p| usize::from(p[1] > p[0])).collect(),
            prob_real: proba.iter().map(|p| p[1]).collect(),
        })
    }
}
