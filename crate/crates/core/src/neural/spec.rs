//! Layer lists and the builders for the four deep architectures.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a document reaches the first layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum InputSpec {
    /// One sparse TF-IDF row of width `dim`.
    TfidfVector { dim: usize },
    /// A TF-IDF row cut into `ceil(dim / chunk)` pseudo time steps of `chunk` values,
    /// the last one zero-padded.
    TfidfSequence { dim: usize, chunk: usize },
    /// Token indices into an embedding table of `vocab` rows (row 0 is padding).
    EmbeddingSequence { vocab: usize, dim: usize, max_len: usize },
}

impl InputSpec {
    pub fn is_tfidf(&self) -> bool {
        !matches!(self, InputSpec::EmbeddingSequence { .. })
    }

    /// Steps of a TF-IDF sequence input.
    pub fn chunks(dim: usize, chunk: usize) -> usize {
        dim.div_ceil(chunk)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cell {
    Gru,
    Lstm,
}

impl Cell {
    pub fn gates(self) -> usize {
        match self {
            Cell::Gru => 3,
            Cell::Lstm => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LayerSpec {
    Dense { units: usize, relu: bool },
    Dropout { rate: f64 },
    Embedding { vocab: usize, dim: usize },
    /// Turns the sparse TF-IDF row into `[time, channels]`.
    Reshape { time: usize, channels: usize },
    Conv1d { width: usize, filters: usize },
    /// `window: None` pools over the whole time axis.
    AvgPool { window: Option<usize> },
    Recurrent { cell: Cell, hidden: usize, return_sequence: bool },
    Flatten,
    /// Parallel branches over the same input, joined along the feature axis.
    Concat { branches: Vec<Vec<LayerSpec>> },
    /// Output head marker: the preceding layer's values are the class logits.
    Softmax,
}

impl LayerSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Embedding { .. } => "embedding",
            LayerSpec::Reshape { .. } => "reshape",
            LayerSpec::Conv1d { .. } => "conv1d",
            LayerSpec::AvgPool { .. } => "avgpool1d",
            LayerSpec::Recurrent { cell: Cell::Gru, .. } => "gru",
            LayerSpec::Recurrent { cell: Cell::Lstm, .. } => "lstm",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Concat { .. } => "concat",
            LayerSpec::Softmax => "softmax",
        }
    }
}

/// Per-sample shape flowing between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    /// The raw sparse TF-IDF row.
    Sparse(usize),
    /// Token indices of a fixed length.
    Tokens(usize),
    Flat(usize),
    Seq(usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub name: String,
    pub input: InputSpec,
    pub layers: Vec<LayerSpec>,
}

fn shape_err(layer: &LayerSpec, shape: Shape) -> Error {
    Error::Shape(format!("{} layer cannot take input of shape {shape:?}", layer.kind_name()))
}

pub(crate) fn infer_shape(layer: &LayerSpec, shape: Shape) -> Result<Shape> {
    let positive = |v: usize, what: &str| {
        if v == 0 {
            Err(Error::Shape(format!("{} layer has zero {what}", layer.kind_name())))
        } else {
            Ok(())
        }
    };
    Ok(match (layer, shape) {
        (LayerSpec::Dense { units, .. }, Shape::Sparse(_) | Shape::Flat(_)) => {
            positive(*units, "units")?;
            Shape::Flat(*units)
        }
        (LayerSpec::Dropout { rate }, Shape::Flat(_) | Shape::Seq(..)) => {
            if !(0.0..1.0).contains(rate) {
                return Err(Error::Shape(format!("dropout rate {rate} outside [0, 1)")));
            }
            shape
        }
        (LayerSpec::Embedding { vocab, dim }, Shape::Tokens(t)) => {
            positive(*vocab, "vocabulary rows")?;
            positive(*dim, "dimensions")?;
            Shape::Seq(t, *dim)
        }
        (LayerSpec::Reshape { time, channels }, Shape::Sparse(d)) => {
            positive(*channels, "channels")?;
            if *time != InputSpec::chunks(d, *channels) {
                return Err(Error::Shape(format!(
                    "reshape to {time} x {channels} does not cover a row of {d} values"
                )));
            }
            Shape::Seq(*time, *channels)
        }
        (LayerSpec::Conv1d { width, filters }, Shape::Seq(t, _)) => {
            positive(*width, "kernel width")?;
            positive(*filters, "filters")?;
            if *width > t {
                return Err(Error::Shape(format!("kernel width {width} exceeds sequence length {t}")));
            }
            Shape::Seq(t - width + 1, *filters)
        }
        (LayerSpec::AvgPool { window: None }, Shape::Seq(_, c)) => Shape::Flat(c),
        (LayerSpec::AvgPool { window: Some(k) }, Shape::Seq(t, c)) => {
            positive(*k, "window")?;
            if *k > t {
                return Err(Error::Shape(format!("pool window {k} exceeds sequence length {t}")));
            }
            Shape::Seq(t / k, c)
        }
        (LayerSpec::Recurrent { hidden, return_sequence, .. }, Shape::Seq(t, _)) => {
            positive(*hidden, "hidden units")?;
            if *return_sequence {
                Shape::Seq(t, *hidden)
            } else {
                Shape::Flat(*hidden)
            }
        }
        (LayerSpec::Flatten, Shape::Sparse(_) | Shape::Flat(_)) => shape,
        (LayerSpec::Flatten, Shape::Seq(t, c)) => Shape::Flat(t * c),
        (LayerSpec::Concat { branches }, _) => {
            if branches.is_empty() {
                return Err(Error::Shape("concat layer has no branches".into()));
            }
            let mut total = 0;
            for branch in branches {
                match infer_chain(branch, shape)? {
                    Shape::Flat(n) => total += n,
                    other => return Err(Error::Shape(format!("concat branch ends in {other:?}, not a flat vector"))),
                }
            }
            Shape::Flat(total)
        }
        (layer, shape) => return Err(shape_err(layer, shape)),
    })
}

fn infer_chain(layers: &[LayerSpec], mut shape: Shape) -> Result<Shape> {
    for layer in layers {
        if matches!(layer, LayerSpec::Softmax) {
            return Err(Error::Shape("softmax may only close the network".into()));
        }
        shape = infer_shape(layer, shape)?;
    }
    Ok(shape)
}

impl ArchitectureSpec {
    pub fn input_shape(&self) -> Shape {
        match self.input {
            InputSpec::TfidfVector { dim } | InputSpec::TfidfSequence { dim, .. } => Shape::Sparse(dim),
            InputSpec::EmbeddingSequence { max_len, .. } => Shape::Tokens(max_len),
        }
    }

    /// Checks the shape chain and the two-way softmax head; returns the shape after every layer.
    pub fn validate(&self) -> Result<Vec<Shape>> {
        let Some((LayerSpec::Softmax, body)) = self.layers.split_last() else {
            return Err(Error::Shape(format!("{}: the last layer must be the softmax head", self.name)));
        };
        if !matches!(body.last(), Some(LayerSpec::Dense { units: 2, relu: false })) {
            return Err(Error::Shape(format!(
                "{}: the head must be a linear dense layer with 2 units",
                self.name
            )));
        }
        let mut shapes = Vec::with_capacity(body.len());
        let mut shape = self.input_shape();
        for layer in body {
            if matches!(layer, LayerSpec::Softmax) {
                return Err(Error::Shape("softmax may only close the network".into()));
            }
            shape = infer_shape(layer, shape)?;
            shapes.push(shape);
        }
        match (&self.input, body.first()) {
            (InputSpec::EmbeddingSequence { vocab, dim, .. }, Some(LayerSpec::Embedding { vocab: v, dim: d }))
                if v == vocab && d == dim => {}
            (InputSpec::EmbeddingSequence { .. }, _) => {
                return Err(Error::Shape("embedding input must open with a matching embedding layer".into()));
            }
            _ => {}
        }
        Ok(shapes)
    }

    /// Layers before the softmax head.
    pub fn body(&self) -> &[LayerSpec] {
        &self.layers[..self.layers.len().saturating_sub(1)]
    }
}

/// Opening layers turning the raw input into a sequence, when one is needed.
fn sequence_stem(input: InputSpec) -> Result<Vec<LayerSpec>> {
    match input {
        InputSpec::EmbeddingSequence { vocab, dim, .. } => Ok(vec![LayerSpec::Embedding { vocab, dim }]),
        InputSpec::TfidfSequence { dim, chunk } => Ok(vec![LayerSpec::Reshape {
            time: InputSpec::chunks(dim, chunk),
            channels: chunk,
        }]),
        InputSpec::TfidfVector { .. } => Err(Error::InvalidArgument(
            "sequence models take a TF-IDF sequence or embedding input".into(),
        )),
    }
}

fn head() -> [LayerSpec; 2] {
    [LayerSpec::Dense { units: 2, relu: false }, LayerSpec::Softmax]
}

/// Dense stack: flatten, then `[dense + relu, dropout]` per width, then the head.
pub fn build_dnn(input: InputSpec, widths: &[usize], dropout: f64) -> Result<ArchitectureSpec> {
    if widths.is_empty() {
        return Err(Error::InvalidArgument("a dense network needs at least one hidden layer".into()));
    }
    let mut layers = Vec::new();
    match input {
        InputSpec::TfidfVector { .. } => {}
        InputSpec::EmbeddingSequence { vocab, dim, .. } => layers.push(LayerSpec::Embedding { vocab, dim }),
        InputSpec::TfidfSequence { .. } => {
            return Err(Error::InvalidArgument("dense networks take the TF-IDF row directly".into()));
        }
    }
    layers.push(LayerSpec::Flatten);
    for &units in widths {
        layers.push(LayerSpec::Dense { units, relu: true });
        layers.push(LayerSpec::Dropout { rate: dropout });
    }
    layers.extend(head());
    let spec = ArchitectureSpec {
        name: "dnn".into(),
        input,
        layers,
    };
    spec.validate()?;
    Ok(spec)
}

/// Parallel convolution branches, each pooled over time, joined, then dropout and the head.
pub fn build_cnn(input: InputSpec, kernel_widths: &[usize], filters: usize, dropout: f64) -> Result<ArchitectureSpec> {
    if kernel_widths.is_empty() {
        return Err(Error::InvalidArgument("a convolutional network needs at least one branch".into()));
    }
    let mut layers = sequence_stem(input)?;
    let branches = kernel_widths
        .iter()
        .map(|&width| vec![LayerSpec::Conv1d { width, filters }, LayerSpec::AvgPool { window: None }])
        .collect();
    layers.push(LayerSpec::Concat { branches });
    layers.push(LayerSpec::Dropout { rate: dropout });
    layers.extend(head());
    let spec = ArchitectureSpec {
        name: "cnn".into(),
        input,
        layers,
    };
    spec.validate()?;
    Ok(spec)
}

/// Stacked recurrent layers, each followed by dropout; only the last returns its final state.
pub fn build_rnn(cell: Cell, input: InputSpec, hidden: usize, n_layers: usize, dropout: f64) -> Result<ArchitectureSpec> {
    if n_layers == 0 {
        return Err(Error::InvalidArgument("a recurrent network needs at least one layer".into()));
    }
    let mut layers = sequence_stem(input)?;
    for i in 0..n_layers {
        layers.push(LayerSpec::Recurrent {
            cell,
            hidden,
            return_sequence: i + 1 < n_layers,
        });
        layers.push(LayerSpec::Dropout { rate: dropout });
    }
    layers.extend(head());
    let spec = ArchitectureSpec {
        name: match cell {
            Cell::Gru => "gru".into(),
            Cell::Lstm => "lstm".into(),
        },
        input,
        layers,
    };
    spec.validate()?;
    Ok(spec)
}
