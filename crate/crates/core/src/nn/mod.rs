//! Relational GCN / GAT encoders and the pair-classification decoder.
//!
//! Parameters live in one flat, named tensor list ([`ModelParams`]); a
//! [`Layout`] records which entry plays which role. Forward passes bind
//! that list onto a [`Tape`](crate::tensor::Tape) and index it through the
//! layout, so training, inference and checkpointing share one ordering.

mod checkpoint;
mod decoder;
mod layers;

pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointError};
pub use decoder::decode_pairs;
pub use layers::{encode, hetero_layer, AttentionTrace, Encoded, GraphContext};

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::Features;
use crate::graph::{Direction, HeteroGraph, NodeType, Relation};
use crate::tensor::{Tape, Tensor, TensorError, Var};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("{node_type} features have dimension {found}, model expects {expected}")]
    FeatureDim {
        node_type: NodeType,
        expected: usize,
        found: usize,
    },
    #[error("{node_type} features have {found} rows, graph has {expected} nodes")]
    FeatureRows {
        node_type: NodeType,
        expected: usize,
        found: usize,
    },
    #[error("`{0}` is not a drug in this graph")]
    NotADrug(String),
    #[error("cannot score a drug against itself (`{0}`)")]
    SelfPair(String),
    #[error("no parameter named `{0}`")]
    UnknownParam(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Hgcn,
    Hgat,
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EncoderKind::Hgcn => "hgcn",
            EncoderKind::Hgat => "hgat",
        })
    }
}

impl FromStr for EncoderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hgcn" | "gcn" => Ok(EncoderKind::Hgcn),
            "hgat" | "gat" => Ok(EncoderKind::Hgat),
            other => Err(format!("unknown encoder `{other}` (expected hgcn or hgat)")),
        }
    }
}

/// A relation read from the receiving node's side.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Channel {
    pub relation: Relation,
    pub direction: Direction,
}

impl Channel {
    pub const ALL: [Channel; 5] = [
        Channel::new(Relation::Ddi, Direction::Forward),
        Channel::new(Relation::Sim, Direction::Forward),
        Channel::new(Relation::Dpi, Direction::Forward),
        Channel::new(Relation::Dpi, Direction::Reverse),
        Channel::new(Relation::Ppi, Direction::Forward),
    ];

    pub const fn new(relation: Relation, direction: Direction) -> Self {
        Self { relation, direction }
    }

    /// Node type whose rows are updated.
    pub fn receiver(self) -> NodeType {
        match self.direction {
            Direction::Forward => self.relation.src_type(),
            Direction::Reverse => self.relation.dst_type(),
        }
    }

    /// Node type the messages come from.
    pub fn sender(self) -> NodeType {
        match self.direction {
            Direction::Forward => self.relation.dst_type(),
            Direction::Reverse => self.relation.src_type(),
        }
    }

    pub fn name(self) -> &'static str {
        match (self.relation, self.direction) {
            (Relation::Ddi, _) => "ddi",
            (Relation::Sim, _) => "sim",
            (Relation::Dpi, Direction::Forward) => "dpi",
            (Relation::Dpi, Direction::Reverse) => "dpi_rev",
            (Relation::Ppi, _) => "ppi",
        }
    }
}

/// Shapes and fixed hyperparameters of a model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDims {
    pub drug_in: usize,
    pub protein_in: usize,
    pub hidden: usize,
    pub decoder_hidden: usize,
    pub class_count: usize,
    pub layers: usize,
    pub heads: usize,
    pub leaky_slope: f64,
    /// Use SIM edge weights as mean coefficients (GCN only).
    pub sim_weighting: bool,
}

impl ModelDims {
    pub fn new(drug_in: usize, protein_in: usize, class_count: usize) -> Self {
        Self {
            drug_in,
            protein_in,
            hidden: 64,
            decoder_hidden: 128,
            class_count,
            layers: 3,
            heads: 1,
            leaky_slope: 0.01,
            sim_weighting: true,
        }
    }

    pub fn input_dim(&self, t: NodeType) -> usize {
        match t {
            NodeType::Drug => self.drug_in,
            NodeType::Protein => self.protein_in,
        }
    }

    pub fn output_width(&self) -> usize {
        self.class_count + 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Init {
    Glorot,
    Zero,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelLayout {
    pub channel: Channel,
    /// One weight per attention head (a single entry for GCN).
    pub weights: Vec<usize>,
    /// One `[2·d_out × 1]` attention vector per head; empty for GCN.
    pub attention: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerLayout {
    pub in_dims: [usize; 2],
    pub out_dim: usize,
    pub self_weight: [usize; 2],
    pub bias: [usize; 2],
    pub channels: Vec<ChannelLayout>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecoderLayout {
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
    pub w3: usize,
    pub b3: usize,
}

/// Positions of every parameter in the flat list.
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    pub encoder: Vec<LayerLayout>,
    pub decoder: DecoderLayout,
    entries: Vec<(String, Vec<usize>, Init)>,
}

impl Layout {
    pub fn new(kind: EncoderKind, dims: &ModelDims) -> Self {
        let mut entries: Vec<(String, Vec<usize>, Init)> = Vec::new();
        let mut add = |name: String, shape: Vec<usize>, init: Init| {
            entries.push((name, shape, init));
            entries.len() - 1
        };
        let heads = match kind {
            EncoderKind::Hgcn => 1,
            EncoderKind::Hgat => dims.heads.max(1),
        };
        let mut encoder = Vec::with_capacity(dims.layers);
        for l in 0..dims.layers {
            let in_dims = if l == 0 {
                [dims.drug_in, dims.protein_in]
            } else {
                [dims.hidden, dims.hidden]
            };
            let out = dims.hidden;
            let self_weight = NodeType::ALL
                .map(|t| add(format!("encoder.{l}.self.{t}"), vec![in_dims[t.index()], out], Init::Glorot));
            let bias = NodeType::ALL.map(|t| add(format!("encoder.{l}.bias.{t}"), vec![out], Init::Zero));
            let channels = Channel::ALL
                .iter()
                .map(|&ch| {
                    let d_in = in_dims[ch.sender().index()];
                    let weights = (0..heads)
                        .map(|h| add(format!("encoder.{l}.{}.weight.{h}", ch.name()), vec![d_in, out], Init::Glorot))
                        .collect();
                    let attention = match kind {
                        EncoderKind::Hgcn => Vec::new(),
                        EncoderKind::Hgat => (0..heads)
                            .map(|h| add(format!("encoder.{l}.{}.attention.{h}", ch.name()), vec![2 * out, 1], Init::Glorot))
                            .collect(),
                    };
                    ChannelLayout {
                        channel: ch,
                        weights,
                        attention,
                    }
                })
                .collect();
            encoder.push(LayerLayout {
                in_dims,
                out_dim: out,
                self_weight,
                bias,
                channels,
            });
        }
        let (d, m, c) = (dims.hidden, dims.decoder_hidden, dims.output_width());
        let decoder = DecoderLayout {
            w1: add("decoder.w1".into(), vec![2 * d, m], Init::Glorot),
            b1: add("decoder.b1".into(), vec![m], Init::Zero),
            w2: add("decoder.w2".into(), vec![m, m], Init::Glorot),
            b2: add("decoder.b2".into(), vec![m], Init::Zero),
            w3: add("decoder.w3".into(), vec![m, c], Init::Glorot),
            b3: add("decoder.b3".into(), vec![c], Init::Zero),
        };
        Self {
            encoder,
            decoder,
            entries,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.entries[i].0
    }

    pub fn shape(&self, i: usize) -> &[usize] {
        &self.entries[i].1
    }

    pub fn is_bias(&self, i: usize) -> bool {
        self.entries[i].2 == Init::Zero
    }
}

/// Every learnable tensor of an encoder + decoder model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    kind: EncoderKind,
    dims: ModelDims,
    layout: Layout,
    tensors: Vec<Tensor>,
}

/// Half-width `sqrt(6 / (fan_in + fan_out))` of the Glorot-uniform range.
pub fn glorot_bound(shape: &[usize]) -> f64 {
    let (fan_in, fan_out) = match shape {
        [n] => (*n, 1),
        [a, b] => (*a, *b),
        _ => (shape.iter().product(), 1),
    };
    (6.0 / (fan_in + fan_out).max(1) as f64).sqrt()
}

impl ModelParams {
    /// Glorot-uniform weights, zero biases; deterministic per seed.
    pub fn init(kind: EncoderKind, dims: ModelDims, seed: u64) -> Self {
        let layout = Layout::new(kind, &dims);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = layout
            .entries
            .iter()
            .map(|(_, shape, init)| match init {
                Init::Zero => Tensor::zeros(shape),
                Init::Glorot => {
                    let s = glorot_bound(shape);
                    let n: usize = shape.iter().product();
                    let data = (0..n).map(|_| rng.random_range(-s..s)).collect();
                    Tensor::new(shape.clone(), data).expect("layout shape")
                }
            })
            .collect();
        Self {
            kind,
            dims,
            layout,
            tensors,
        }
    }

    pub(crate) fn from_parts(kind: EncoderKind, dims: ModelDims, tensors: Vec<Tensor>) -> Self {
        let layout = Layout::new(kind, &dims);
        Self {
            kind,
            dims,
            layout,
            tensors,
        }
    }

    pub fn kind(&self) -> EncoderKind {
        self.kind
    }

    pub fn dims(&self) -> &ModelDims {
        &self.dims
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        (0..self.layout.len()).map(|i| self.layout.name(i))
    }

    pub fn get(&self, name: &str) -> Result<&Tensor, ModelError> {
        let i = self.position(name)?;
        Ok(&self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor, ModelError> {
        let i = self.position(name)?;
        Ok(&mut self.tensors[i])
    }

    fn position(&self, name: &str) -> Result<usize, ModelError> {
        (0..self.layout.len())
            .find(|&i| self.layout.name(i) == name)
            .ok_or_else(|| ModelError::UnknownParam(name.to_string()))
    }

    /// Registers every tensor on `tape`, as gradient leaves if `trainable`.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        self.tensors.iter().map(|t| tape.leaf(t.clone(), trainable)).collect()
    }

    fn check_features(&self, g: &HeteroGraph, features: &Features) -> Result<(), ModelError> {
        for t in NodeType::ALL {
            let f = features.get(t).matrix();
            if f.rows() != g.node_count(t) {
                return Err(ModelError::FeatureRows {
                    node_type: t,
                    expected: g.node_count(t),
                    found: f.rows(),
                });
            }
            if f.rows() > 0 && f.cols() != self.dims.input_dim(t) {
                return Err(ModelError::FeatureDim {
                    node_type: t,
                    expected: self.dims.input_dim(t),
                    found: f.cols(),
                });
            }
        }
        Ok(())
    }

    /// Feature tensors shaped for the encoder (empty types get zero rows of
    /// the expected width).
    pub fn feature_leaves(&self, tape: &mut Tape, g: &HeteroGraph, features: &Features) -> Result<[Var; 2], ModelError> {
        self.check_features(g, features)?;
        Ok(NodeType::ALL.map(|t| {
            let f = features.get(t).matrix();
            let value = if f.rows() == 0 {
                Tensor::zeros(&[0, self.dims.input_dim(t)])
            } else {
                f.clone()
            };
            tape.constant(value)
        }))
    }

    /// Final drug and protein embeddings.
    pub fn embeddings(&self, ctx: &GraphContext, g: &HeteroGraph, features: &Features) -> Result<[Tensor; 2], ModelError> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, false);
        let h = self.feature_leaves(&mut tape, g, features)?;
        let enc = encode(&mut tape, ctx, h, self, &vars)?;
        Ok(enc.h.map(|v| tape.value(v).clone()))
    }

    /// Class probabilities for each pair, one row per pair.
    pub fn predict_pairs(
        &self,
        ctx: &GraphContext,
        g: &HeteroGraph,
        features: &Features,
        pairs: &[(usize, usize)],
    ) -> Result<Tensor, ModelError> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, false);
        let h = self.feature_leaves(&mut tape, g, features)?;
        let enc = encode(&mut tape, ctx, h, self, &vars)?;
        let us: Arc<[usize]> = pairs.iter().map(|p| p.0).collect();
        let vs: Arc<[usize]> = pairs.iter().map(|p| p.1).collect();
        let logits = decode_pairs(&mut tape, enc.h[NodeType::Drug.index()], us, vs, self, &vars)?;
        Ok(tape.value(logits).softmax_rows()?)
    }
}

/// Probability of each class `0..=C` for the drug pair `(u, v)`.
pub fn predict_edge(
    model: &ModelParams,
    g: &HeteroGraph,
    features: &Features,
    u: &str,
    v: &str,
) -> Result<Vec<f64>, ModelError> {
    let drugs = g.nodes(NodeType::Drug);
    let ui = drugs.get(u).ok_or_else(|| ModelError::NotADrug(u.to_string()))?;
    let vi = drugs.get(v).ok_or_else(|| ModelError::NotADrug(v.to_string()))?;
    if ui == vi {
        return Err(ModelError::SelfPair(u.to_string()));
    }
    let ctx = GraphContext::new(g, model.dims().sim_weighting);
    let probs = model.predict_pairs(&ctx, g, features, &[(ui, vi)])?;
    Ok(probs.into_data())
}
