//! Dense tensors and a tape-based reverse-mode differentiation engine.
//!
//! A [`Graph`] borrows a [`ParamStore`] for one forward/backward pass. Operations are
//! coarse (a dense layer with its bias and activation is one node) so the tape stays
//! short and each backward rule is written out by hand.

use rand::Rng;

use crate::error::{Error, Result};
use crate::features::SparseVector;

pub mod adam;
pub mod gradcheck;
pub mod init;
pub mod linalg;
mod recurrent;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{grad_check, GradCheckReport, ParamCheck};

use linalg::{gemm, gemm_strided};

/// Row-major n-dimensional array of `f64`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![],
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn item(&self) -> f64 {
        self.data[0]
    }

    pub fn reshaped(mut self, shape: Vec<usize>) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::Shape(format!("cannot reshape {:?} to {shape:?}", self.shape)));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub layer: String,
    pub name: String,
    pub value: Tensor,
}

/// Named trainable tensors, grouped by layer.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, layer: &str, name: &str, value: Tensor) -> ParamId {
        self.params.push(Param {
            layer: layer.to_string(),
            name: name.to_string(),
            value,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn param(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn size(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Rounds every value to the nearest `f32`, emulating single-precision storage.
    pub fn round_to_f32(&mut self) {
        for p in &mut self.params {
            p.value.data.iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
    }
}

/// Gradient buffers aligned with a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    grads: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Gradients {
            grads: store.params.iter().map(|p| vec![0.0; p.value.len()]).collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.grads[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.grads[id.0]
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn global_norm(&self) -> f64 {
        self.grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt()
    }

    /// Rescales all gradients so their global norm is at most `max_norm`; returns the norm before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm.is_finite() {
            let scale = max_norm / norm;
            self.grads.iter_mut().flatten().for_each(|g| *g *= scale);
        }
        norm
    }

    pub fn check_finite(&self, store: &ParamStore) -> Result<()> {
        for (g, p) in self.grads.iter().zip(&store.params) {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of {}.{}", p.layer, p.name)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pool {
    Fixed(usize),
    Global,
}

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    Dense {
        x: NodeId,
        w: NodeId,
        b: NodeId,
        relu: bool,
    },
    SparseDense {
        rows: Vec<SparseVector>,
        w: NodeId,
        b: NodeId,
        relu: bool,
    },
    Dropout {
        x: NodeId,
        mask: Vec<f64>,
    },
    Embedding {
        indices: Vec<u32>,
        table: NodeId,
        padding: Option<u32>,
    },
    Conv1d {
        x: NodeId,
        k: NodeId,
        b: NodeId,
    },
    AvgPool {
        x: NodeId,
        pool: Pool,
    },
    Reshape {
        x: NodeId,
    },
    Concat {
        parts: Vec<NodeId>,
    },
    Gru {
        x: NodeId,
        wx: NodeId,
        wh: NodeId,
        b: NodeId,
        lengths: Option<Vec<usize>>,
        return_sequence: bool,
        cache: recurrent::GruCache,
    },
    Lstm {
        x: NodeId,
        wx: NodeId,
        wh: NodeId,
        b: NodeId,
        lengths: Option<Vec<usize>>,
        return_sequence: bool,
        cache: recurrent::LstmCache,
    },
    SoftmaxCe {
        logits: NodeId,
        labels: Vec<usize>,
        probs: Vec<f64>,
    },
    WeightedSum {
        x: NodeId,
        weights: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// One forward pass over borrowed parameters, recorded for backpropagation.
pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

fn expect_rank(t: &Tensor, rank: usize, what: &str) -> Result<()> {
    if t.shape.len() != rank {
        return Err(Error::Shape(format!(
            "{what}: expected rank {rank}, got shape {:?}",
            t.shape
        )));
    }
    Ok(())
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Graph {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        match self.nodes[id.0].op {
            Op::Param(p) => self.params.get(p),
            _ => &self.nodes[id.0].value,
        }
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> NodeId {
        self.nodes.push(Node { value, op, needs_grad });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Input, false)
    }

    pub fn param(&mut self, id: ParamId) -> NodeId {
        self.push(Tensor::default(), Op::Param(id), true)
    }

    /// `x W + b` over `x: [batch, in]`, `W: [in, out]`, `b: [out]`, optionally followed by ReLU.
    pub fn dense(&mut self, x: NodeId, w: NodeId, b: NodeId, relu: bool) -> Result<NodeId> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        expect_rank(xv, 2, "dense input")?;
        expect_rank(wv, 2, "dense weight")?;
        let (batch, inp, out) = (xv.shape[0], xv.shape[1], wv.shape[1]);
        if wv.shape[0] != inp || bv.shape != [out] {
            return Err(Error::Shape(format!(
                "dense: input {:?}, weight {:?}, bias {:?}",
                xv.shape, wv.shape, bv.shape
            )));
        }
        let mut y = Vec::with_capacity(batch * out);
        for _ in 0..batch {
            y.extend_from_slice(&bv.data);
        }
        gemm(batch, inp, out, &xv.data, false, &wv.data, false, 1.0, &mut y);
        if relu {
            y.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        let needs = self.needs(x) || self.needs(w) || self.needs(b);
        Ok(self.push(Tensor::new(vec![batch, out], y)?, Op::Dense { x, w, b, relu }, needs))
    }

    /// Dense layer whose input rows are sparse vectors of dimension `W.shape[0]`.
    pub fn sparse_dense(&mut self, rows: Vec<SparseVector>, w: NodeId, b: NodeId, relu: bool) -> Result<NodeId> {
        let (wv, bv) = (self.value(w), self.value(b));
        expect_rank(wv, 2, "sparse dense weight")?;
        let (inp, out) = (wv.shape[0], wv.shape[1]);
        if bv.shape != [out] {
            return Err(Error::Shape(format!("sparse dense: bias {:?} for {out} outputs", bv.shape)));
        }
        if let Some(bad) = rows.iter().find(|r| r.dim() != inp) {
            return Err(Error::DimensionMismatch {
                expected: inp,
                got: bad.dim(),
            });
        }
        let mut y = Vec::with_capacity(rows.len() * out);
        for row in &rows {
            let start = y.len();
            y.extend_from_slice(&bv.data);
            let dst = &mut y[start..];
            for (i, v) in row.iter() {
                let wr = &wv.data[i * out..(i + 1) * out];
                dst.iter_mut().zip(wr).for_each(|(d, w)| *d += v * w);
            }
            if relu {
                dst.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        let batch = rows.len();
        let needs = self.needs(w) || self.needs(b);
        Ok(self.push(Tensor::new(vec![batch, out], y)?, Op::SparseDense { rows, w, b, relu }, needs))
    }

    /// Inverted dropout. Identity when `train` is false or `rate` is zero.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: NodeId, rate: f64, train: bool, rng: &mut R) -> Result<NodeId> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidArgument(format!("dropout rate {rate} outside [0, 1)")));
        }
        if !train || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 - rate;
        let xv = self.value(x);
        let mask: Vec<f64> = (0..xv.len())
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { 1.0 / keep })
            .collect();
        let y: Vec<f64> = xv.data.iter().zip(&mask).map(|(a, m)| a * m).collect();
        let shape = xv.shape.clone();
        let needs = self.needs(x);
        Ok(self.push(Tensor::new(shape, y)?, Op::Dropout { x, mask }, needs))
    }

    /// Gathers rows of `table: [vocab, dim]` for `indices` laid out as `[batch, time]`.
    /// Positions holding `padding` read as zeros and send no gradient to the table.
    pub fn embedding(
        &mut self,
        indices: Vec<u32>,
        batch: usize,
        table: NodeId,
        padding: Option<u32>,
    ) -> Result<NodeId> {
        let tv = self.value(table);
        expect_rank(tv, 2, "embedding table")?;
        let (vocab, dim) = (tv.shape[0], tv.shape[1]);
        if batch == 0 || indices.len() % batch != 0 {
            return Err(Error::Shape(format!(
                "{} indices cannot form {batch} equal rows",
                indices.len()
            )));
        }
        let time = indices.len() / batch;
        let mut y = Vec::with_capacity(indices.len() * dim);
        for &i in &indices {
            let i = i as usize;
            if i >= vocab {
                return Err(Error::Shape(format!("embedding index {i} out of range for {vocab} rows")));
            }
            if Some(i as u32) == padding {
                y.extend(std::iter::repeat_n(0.0, dim));
            } else {
                y.extend_from_slice(&tv.data[i * dim..(i + 1) * dim]);
            }
        }
        let needs = self.needs(table);
        Ok(self.push(
            Tensor::new(vec![batch, time, dim], y)?,
            Op::Embedding {
                indices,
                table,
                padding,
            },
            needs,
        ))
    }

    /// Valid cross-correlation over time with bias and ReLU.
    /// `x: [batch, time, ch]`, `k: [width, ch, filters]`, `b: [filters]`.
    pub fn conv1d(&mut self, x: NodeId, k: NodeId, b: NodeId) -> Result<NodeId> {
        let (xv, kv, bv) = (self.value(x), self.value(k), self.value(b));
        expect_rank(xv, 3, "conv1d input")?;
        expect_rank(kv, 3, "conv1d kernel")?;
        let (batch, time, ch) = (xv.shape[0], xv.shape[1], xv.shape[2]);
        let (width, filters) = (kv.shape[0], kv.shape[2]);
        if kv.shape[1] != ch || bv.shape != [filters] {
            return Err(Error::Shape(format!(
                "conv1d: input {:?}, kernel {:?}, bias {:?}",
                xv.shape, kv.shape, bv.shape
            )));
        }
        if time < width {
            return Err(Error::Shape(format!("conv1d: kernel width {width} exceeds sequence length {time}")));
        }
        let steps = time - width + 1;
        let mut y = Vec::with_capacity(batch * steps * filters);
        for _ in 0..batch * steps {
            y.extend_from_slice(&bv.data);
        }
        for bi in 0..batch {
            let xs = &xv.data[bi * time * ch..(bi + 1) * time * ch];
            let ys = &mut y[bi * steps * filters..(bi + 1) * steps * filters];
            // Window t starts at t*ch and spans width*ch contiguous values.
            gemm_strided(
                steps,
                width * ch,
                filters,
                1.0,
                xs,
                (ch, 1),
                &kv.data,
                (filters, 1),
                1.0,
                ys,
                (filters, 1),
            );
        }
        y.iter_mut().for_each(|v| *v = v.max(0.0));
        let needs = self.needs(x) || self.needs(k) || self.needs(b);
        Ok(self.push(Tensor::new(vec![batch, steps, filters], y)?, Op::Conv1d { x, k, b }, needs))
    }

    /// Mean pooling over time: non-overlapping windows of size `k`, or one global mean.
    pub fn avg_pool(&mut self, x: NodeId, pool: Pool) -> Result<NodeId> {
        let xv = self.value(x);
        expect_rank(xv, 3, "avgpool input")?;
        let (batch, time, ch) = (xv.shape[0], xv.shape[1], xv.shape[2]);
        let (window, out_time) = match pool {
            Pool::Global => (time, 1),
            Pool::Fixed(k) => {
                if k == 0 || time < k {
                    return Err(Error::Shape(format!("avgpool: window {k} for sequence length {time}")));
                }
                (k, time / k)
            }
        };
        if window == 0 {
            return Err(Error::Shape("avgpool over an empty sequence".into()));
        }
        let mut y = vec![0.0; batch * out_time * ch];
        let inv = 1.0 / window as f64;
        for bi in 0..batch {
            for o in 0..out_time {
                let dst = &mut y[(bi * out_time + o) * ch..(bi * out_time + o + 1) * ch];
                for t in o * window..(o + 1) * window {
                    let src = &xv.data[(bi * time + t) * ch..(bi * time + t + 1) * ch];
                    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s * inv);
                }
            }
        }
        let shape = match pool {
            Pool::Global => vec![batch, ch],
            Pool::Fixed(_) => vec![batch, out_time, ch],
        };
        let needs = self.needs(x);
        Ok(self.push(Tensor::new(shape, y)?, Op::AvgPool { x, pool }, needs))
    }

    pub fn reshape(&mut self, x: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        let value = self.value(x).clone().reshaped(shape)?;
        let needs = self.needs(x);
        Ok(self.push(value, Op::Reshape { x }, needs))
    }

    /// Flattens everything after the batch axis.
    pub fn flatten(&mut self, x: NodeId) -> Result<NodeId> {
        let shape = self.value(x).shape.clone();
        if shape.len() == 2 {
            return Ok(x);
        }
        let batch = shape.first().copied().unwrap_or(1);
        let rest = shape.iter().skip(1).product();
        self.reshape(x, vec![batch, rest])
    }

    /// Concatenates `[batch, f_i]` tensors along the feature axis.
    pub fn concat(&mut self, parts: Vec<NodeId>) -> Result<NodeId> {
        let Some(&first) = parts.first() else {
            return Err(Error::Shape("concat of no tensors".into()));
        };
        let batch = self.value(first).shape[0];
        let mut widths = Vec::with_capacity(parts.len());
        for &p in &parts {
            let v = self.value(p);
            expect_rank(v, 2, "concat part")?;
            if v.shape[0] != batch {
                return Err(Error::Shape(format!("concat: batch {} vs {batch}", v.shape[0])));
            }
            widths.push(v.shape[1]);
        }
        let total: usize = widths.iter().sum();
        let mut y = Vec::with_capacity(batch * total);
        for bi in 0..batch {
            for (&p, &w) in parts.iter().zip(&widths) {
                y.extend_from_slice(&self.value(p).data[bi * w..(bi + 1) * w]);
            }
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(Tensor::new(vec![batch, total], y)?, Op::Concat { parts }, needs))
    }

    fn recurrent_dims(
        &self,
        x: NodeId,
        wx: NodeId,
        wh: NodeId,
        b: NodeId,
        gates: usize,
        lengths: &Option<Vec<usize>>,
    ) -> Result<(usize, usize, usize, usize)> {
        let (xv, wxv, whv, bv) = (self.value(x), self.value(wx), self.value(wh), self.value(b));
        expect_rank(xv, 3, "recurrent input")?;
        expect_rank(wxv, 2, "recurrent input weight")?;
        expect_rank(whv, 2, "recurrent hidden weight")?;
        let (batch, time, inp) = (xv.shape[0], xv.shape[1], xv.shape[2]);
        let hidden = whv.shape[0];
        if wxv.shape != [inp, gates * hidden] || whv.shape != [hidden, gates * hidden] || bv.shape != [gates * hidden]
        {
            return Err(Error::Shape(format!(
                "recurrent: input {:?}, Wx {:?}, Wh {:?}, b {:?}",
                xv.shape, wxv.shape, whv.shape, bv.shape
            )));
        }
        if let Some(l) = lengths {
            if l.len() != batch {
                return Err(Error::Shape(format!("{} lengths for batch {batch}", l.len())));
            }
        }
        Ok((batch, time, inp, hidden))
    }

    /// GRU over `x: [batch, time, in]` with gate blocks ordered (update, reset, candidate).
    /// Steps at or beyond a row's length carry the state forward unchanged.
    #[allow(clippy::too_many_arguments)]
    pub fn gru(
        &mut self,
        x: NodeId,
        wx: NodeId,
        wh: NodeId,
        b: NodeId,
        lengths: Option<Vec<usize>>,
        return_sequence: bool,
    ) -> Result<NodeId> {
        let dims = self.recurrent_dims(x, wx, wh, b, 3, &lengths)?;
        let (batch, time, _, hidden) = dims;
        let cache = recurrent::gru_forward(
            dims,
            &self.value(x).data,
            &self.value(wx).data,
            &self.value(wh).data,
            &self.value(b).data,
            lengths.as_deref(),
        );
        let out = recurrent::collect_output(&cache.hs, batch, time, hidden, return_sequence);
        let needs = [x, wx, wh, b].iter().any(|&n| self.needs(n));
        Ok(self.push(
            out,
            Op::Gru {
                x,
                wx,
                wh,
                b,
                lengths,
                return_sequence,
                cache,
            },
            needs,
        ))
    }

    /// LSTM with gate blocks ordered (input, forget, cell, output).
    #[allow(clippy::too_many_arguments)]
    pub fn lstm(
        &mut self,
        x: NodeId,
        wx: NodeId,
        wh: NodeId,
        b: NodeId,
        lengths: Option<Vec<usize>>,
        return_sequence: bool,
    ) -> Result<NodeId> {
        let dims = self.recurrent_dims(x, wx, wh, b, 4, &lengths)?;
        let (batch, time, _, hidden) = dims;
        let cache = recurrent::lstm_forward(
            dims,
            &self.value(x).data,
            &self.value(wx).data,
            &self.value(wh).data,
            &self.value(b).data,
            lengths.as_deref(),
        );
        let out = recurrent::collect_output(&cache.hs, batch, time, hidden, return_sequence);
        let needs = [x, wx, wh, b].iter().any(|&n| self.needs(n));
        Ok(self.push(
            out,
            Op::Lstm {
                x,
                wx,
                wh,
                b,
                lengths,
                return_sequence,
                cache,
            },
            needs,
        ))
    }

    /// Mean negative log-likelihood of `labels` under the row softmax of `logits: [batch, classes]`.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
        let lv = self.value(logits);
        expect_rank(lv, 2, "logits")?;
        let (batch, classes) = (lv.shape[0], lv.shape[1]);
        if labels.len() != batch {
            return Err(Error::Shape(format!("{} labels for batch {batch}", labels.len())));
        }
        if batch == 0 {
            return Err(Error::Shape("cross-entropy over an empty batch".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::LabelOutOfRange(bad));
        }
        let probs = softmax_rows(&lv.data, classes);
        let mut loss = 0.0;
        for (bi, &label) in labels.iter().enumerate() {
            let row = &lv.data[bi * classes..(bi + 1) * classes];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - row[label];
        }
        loss /= batch as f64;
        if !loss.is_finite() {
            return Err(Error::NonFinite("cross-entropy loss".into()));
        }
        let needs = self.needs(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCe {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            needs,
        ))
    }

    /// `sum(x * weights)`, a scalar probe for gradient checks.
    pub fn weighted_sum(&mut self, x: NodeId, weights: Vec<f64>) -> Result<NodeId> {
        let xv = self.value(x);
        if xv.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: xv.len(),
                got: weights.len(),
            });
        }
        let s = xv.data.iter().zip(&weights).map(|(a, w)| a * w).sum();
        let needs = self.needs(x);
        Ok(self.push(Tensor::scalar(s), Op::WeightedSum { x, weights }, needs))
    }

    /// Backpropagates from the scalar node `root`, returning parameter gradients.
    pub fn backward(&self, root: NodeId) -> Result<Gradients> {
        let mut out = Gradients::zeros_like(self.params);
        if self.value(root).len() != 1 {
            return Err(Error::Shape("backward root must be a scalar".into()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(vec![1.0]);
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            self.backward_node(node, &g, &mut grads, &mut out);
        }
        Ok(out)
    }

    fn accumulate<F: FnOnce(&mut [f64])>(&self, grads: &mut [Option<Vec<f64>>], id: NodeId, f: F) {
        if !self.needs(id) {
            return;
        }
        let len = self.value(id).len();
        let slot = grads[id.0].get_or_insert_with(|| vec![0.0; len]);
        f(slot);
    }

    fn backward_node(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>], out: &mut Gradients) {
        match &node.op {
            Op::Input => {}
            Op::Param(p) => {
                out.get_mut(*p).iter_mut().zip(g).for_each(|(a, b)| *a += b);
            }
            Op::Dense { x, w, b, relu } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let (batch, inp, outd) = (xv.shape[0], xv.shape[1], wv.shape[1]);
                let gz = relu_mask(g, &node.value.data, *relu);
                self.accumulate(grads, *w, |dw| gemm(inp, batch, outd, &xv.data, true, &gz, false, 1.0, dw));
                self.accumulate(grads, *b, |db| col_sum_into(&gz, outd, db));
                self.accumulate(grads, *x, |dx| gemm(batch, outd, inp, &gz, false, &wv.data, true, 1.0, dx));
            }
            Op::SparseDense { rows, w, b, relu } => {
                let outd = self.value(*w).shape[1];
                let gz = relu_mask(g, &node.value.data, *relu);
                self.accumulate(grads, *w, |dw| {
                    for (r, row) in rows.iter().enumerate() {
                        let gr = &gz[r * outd..(r + 1) * outd];
                        for (i, v) in row.iter() {
                            dw[i * outd..(i + 1) * outd]
                                .iter_mut()
                                .zip(gr)
                                .for_each(|(d, g)| *d += v * g);
                        }
                    }
                });
                self.accumulate(grads, *b, |db| col_sum_into(&gz, outd, db));
            }
            Op::Dropout { x, mask } => {
                self.accumulate(grads, *x, |dx| {
                    dx.iter_mut().zip(g.iter().zip(mask)).for_each(|(d, (g, m))| *d += g * m)
                });
            }
            Op::Embedding {
                indices,
                table,
                padding,
            } => {
                let dim = self.value(*table).shape[1];
                self.accumulate(grads, *table, |dt| {
                    for (pos, &i) in indices.iter().enumerate() {
                        if Some(i) == *padding {
                            continue;
                        }
                        let i = i as usize;
                        dt[i * dim..(i + 1) * dim]
                            .iter_mut()
                            .zip(&g[pos * dim..(pos + 1) * dim])
                            .for_each(|(d, g)| *d += g);
                    }
                });
            }
            Op::Conv1d { x, k, b } => {
                let (xv, kv) = (self.value(*x), self.value(*k));
                let (batch, time, ch) = (xv.shape[0], xv.shape[1], xv.shape[2]);
                let (width, filters) = (kv.shape[0], kv.shape[2]);
                let steps = time - width + 1;
                let gz = relu_mask(g, &node.value.data, true);
                self.accumulate(grads, *k, |dk| {
                    for bi in 0..batch {
                        let xs = &xv.data[bi * time * ch..(bi + 1) * time * ch];
                        let gs = &gz[bi * steps * filters..(bi + 1) * steps * filters];
                        // dK[l, f] += sum_t X[t*ch + l] * G[t, f]
                        gemm_strided(
                            width * ch,
                            steps,
                            filters,
                            1.0,
                            xs,
                            (1, ch),
                            gs,
                            (filters, 1),
                            1.0,
                            dk,
                            (filters, 1),
                        );
                    }
                });
                self.accumulate(grads, *b, |db| col_sum_into(&gz, filters, db));
                self.accumulate(grads, *x, |dx| {
                    let mut cols = vec![0.0; steps * width * ch];
                    for bi in 0..batch {
                        let gs = &gz[bi * steps * filters..(bi + 1) * steps * filters];
                        gemm(steps, filters, width * ch, gs, false, &kv.data, true, 0.0, &mut cols);
                        let dxs = &mut dx[bi * time * ch..(bi + 1) * time * ch];
                        for t in 0..steps {
                            dxs[t * ch..t * ch + width * ch]
                                .iter_mut()
                                .zip(&cols[t * width * ch..(t + 1) * width * ch])
                                .for_each(|(d, c)| *d += c);
                        }
                    }
                });
            }
            Op::AvgPool { x, pool } => {
                let xv = self.value(*x);
                let (batch, time, ch) = (xv.shape[0], xv.shape[1], xv.shape[2]);
                let (window, out_time) = match pool {
                    Pool::Global => (time, 1),
                    Pool::Fixed(k) => (*k, time / k),
                };
                let inv = 1.0 / window as f64;
                self.accumulate(grads, *x, |dx| {
                    for bi in 0..batch {
                        for o in 0..out_time {
                            let src = &g[(bi * out_time + o) * ch..(bi * out_time + o + 1) * ch];
                            for t in o * window..(o + 1) * window {
                                dx[(bi * time + t) * ch..(bi * time + t + 1) * ch]
                                    .iter_mut()
                                    .zip(src)
                                    .for_each(|(d, s)| *d += s * inv);
                            }
                        }
                    }
                });
            }
            Op::Reshape { x } => {
                self.accumulate(grads, *x, |dx| dx.iter_mut().zip(g).for_each(|(d, g)| *d += g));
            }
            Op::Concat { parts } => {
                let total = node.value.shape[1];
                let batch = node.value.shape[0];
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).shape[1];
                    self.accumulate(grads, p, |dp| {
                        for bi in 0..batch {
                            dp[bi * w..(bi + 1) * w]
                                .iter_mut()
                                .zip(&g[bi * total + offset..bi * total + offset + w])
                                .for_each(|(d, g)| *d += g);
                        }
                    });
                    offset += w;
                }
            }
            Op::Gru {
                x,
                wx,
                wh,
                b,
                lengths,
                return_sequence,
                cache,
            } => {
                let xv = self.value(*x);
                let hidden = self.value(*wh).shape[0];
                let dims = (xv.shape[0], xv.shape[1], xv.shape[2], hidden);
                let dh_ext = recurrent::spread_output_grad(g, dims.0, dims.1, hidden, *return_sequence);
                let rg = recurrent::gru_backward(
                    dims,
                    cache,
                    &xv.data,
                    &self.value(*wx).data,
                    &self.value(*wh).data,
                    lengths.as_deref(),
                    &dh_ext,
                    self.needs(*x),
                );
                self.apply_recurrent_grads(grads, [*x, *wx, *wh, *b], rg);
            }
            Op::Lstm {
                x,
                wx,
                wh,
                b,
                lengths,
                return_sequence,
                cache,
            } => {
                let xv = self.value(*x);
                let hidden = self.value(*wh).shape[0];
                let dims = (xv.shape[0], xv.shape[1], xv.shape[2], hidden);
                let dh_ext = recurrent::spread_output_grad(g, dims.0, dims.1, hidden, *return_sequence);
                let rg = recurrent::lstm_backward(
                    dims,
                    cache,
                    &xv.data,
                    &self.value(*wx).data,
                    &self.value(*wh).data,
                    lengths.as_deref(),
                    &dh_ext,
                    self.needs(*x),
                );
                self.apply_recurrent_grads(grads, [*x, *wx, *wh, *b], rg);
            }
            Op::SoftmaxCe { logits, labels, probs } => {
                let classes = self.value(*logits).shape[1];
                let scale = g[0] / labels.len() as f64;
                self.accumulate(grads, *logits, |dl| {
                    for (bi, &label) in labels.iter().enumerate() {
                        for c in 0..classes {
                            let onehot = if c == label { 1.0 } else { 0.0 };
                            dl[bi * classes + c] += scale * (probs[bi * classes + c] - onehot);
                        }
                    }
                });
            }
            Op::WeightedSum { x, weights } => {
                self.accumulate(grads, *x, |dx| {
                    dx.iter_mut().zip(weights).for_each(|(d, w)| *d += g[0] * w)
                });
            }
        }
    }

    fn apply_recurrent_grads(&self, grads: &mut [Option<Vec<f64>>], ids: [NodeId; 4], rg: recurrent::RecurrentGrads) {
        let add = |dst: &mut [f64], src: &[f64]| dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
        if let Some(dx) = &rg.dx {
            self.accumulate(grads, ids[0], |d| add(d, dx));
        }
        self.accumulate(grads, ids[1], |d| add(d, &rg.dwx));
        self.accumulate(grads, ids[2], |d| add(d, &rg.dwh));
        self.accumulate(grads, ids[3], |d| add(d, &rg.db));
    }
}

fn relu_mask(g: &[f64], y: &[f64], relu: bool) -> Vec<f64> {
    if relu {
        g.iter().zip(y).map(|(g, y)| if *y > 0.0 { *g } else { 0.0 }).collect()
    } else {
        g.to_vec()
    }
}

fn col_sum_into(m: &[f64], cols: usize, dst: &mut [f64]) {
    for row in m.chunks_exact(cols) {
        dst.iter_mut().zip(row).for_each(|(d, v)| *d += v);
    }
}

/// Row-wise softmax of a row-major matrix with `cols` columns.
pub fn softmax_rows(data: &[f64], cols: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(data.len());
    for row in data.chunks_exact(cols) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let start = out.len();
        out.extend(row.iter().map(|v| (v - max).exp()));
        let sum: f64 = out[start..].iter().sum();
        out[start..].iter_mut().for_each(|v| *v /= sum);
    }
    out
}

#[cfg(test)]
mod tests;
