use std::sync::Arc;

use crate::graph::{HeteroGraph, NodeType, Relation};
use crate::tensor::{SparseRows, Tape, TensorError, Var};

use super::{Channel, ChannelLayout, EncoderKind, LayerLayout, ModelError, ModelParams};

/// Per-channel aggregation matrices derived once from a graph.
#[derive(Clone, Debug)]
pub struct GraphContext {
    channels: Vec<ChannelAdjacency>,
    node_counts: [usize; 2],
}

#[derive(Clone, Debug)]
struct ChannelAdjacency {
    channel: Channel,
    /// Row-normalized weights: plain or weighted mean over neighbors.
    mean: Arc<SparseRows>,
    /// Unit weights; arc structure for attention.
    arcs: Arc<SparseRows>,
    arc_rows: Arc<[usize]>,
    arc_cols: Arc<[usize]>,
}

impl GraphContext {
    pub fn new(g: &HeteroGraph, sim_weighting: bool) -> Self {
        let channels = Channel::ALL
            .iter()
            .map(|&ch| {
                let adj = g.adjacency(ch.relation, ch.direction);
                let offsets = adj.offsets().to_vec();
                let cols = adj.cols().to_vec();
                let weighted = sim_weighting && ch.relation == Relation::Sim;
                let mut mean = vec![0.0; cols.len()];
                for v in 0..adj.n_rows() {
                    let range = offsets[v]..offsets[v + 1];
                    if range.is_empty() {
                        continue;
                    }
                    match adj.weights().filter(|_| weighted) {
                        Some(w) => {
                            let total: f64 = w[range.clone()].iter().sum();
                            for k in range {
                                mean[k] = w[k] / total;
                            }
                        }
                        None => {
                            let inv = 1.0 / range.len() as f64;
                            mean[range].iter_mut().for_each(|m| *m = inv);
                        }
                    }
                }
                let n_cols = adj.n_cols();
                let ones = vec![1.0; cols.len()];
                let mean = SparseRows::new(n_cols, offsets.clone(), cols.clone(), mean).expect("valid adjacency");
                let arcs = SparseRows::new(n_cols, offsets, cols.clone(), ones).expect("valid adjacency");
                let arc_rows: Arc<[usize]> = arcs.row_of_arcs().into();
                ChannelAdjacency {
                    channel: ch,
                    mean: Arc::new(mean),
                    arcs: Arc::new(arcs),
                    arc_rows,
                    arc_cols: cols.into(),
                }
            })
            .collect();
        Self {
            channels,
            node_counts: NodeType::ALL.map(|t| g.node_count(t)),
        }
    }

    pub fn node_count(&self, t: NodeType) -> usize {
        self.node_counts[t.index()]
    }

    /// Mean-aggregation matrix for `channel` (receivers × senders).
    pub fn mean_matrix(&self, channel: Channel) -> &Arc<SparseRows> {
        &self.get(channel).mean
    }

    /// Unit-weight arc structure for `channel`; entry positions are arc ids.
    pub fn arc_matrix(&self, channel: Channel) -> &Arc<SparseRows> {
        &self.get(channel).arcs
    }

    fn get(&self, channel: Channel) -> &ChannelAdjacency {
        self.channels
            .iter()
            .find(|c| c.channel == channel)
            .expect("context holds every channel")
    }
}

/// Attention coefficients of one head, one entry per arc of the channel.
#[derive(Clone, Copy, Debug)]
pub struct AttentionTrace {
    pub layer: usize,
    pub channel: Channel,
    pub head: usize,
    pub alpha: Var,
}

/// Output of [`encode`]: final embeddings per node type, indexed by
/// [`NodeType::index`], plus every intermediate layer output.
#[derive(Clone, Debug)]
pub struct Encoded {
    pub h: [Var; 2],
    pub layers: Vec<[Var; 2]>,
    pub attention: Vec<AttentionTrace>,
}

/// Runs every encoder layer of `params` on input features `h0`.
pub fn encode(
    tape: &mut Tape,
    ctx: &GraphContext,
    h0: [Var; 2],
    params: &ModelParams,
    vars: &[Var],
) -> Result<Encoded, ModelError> {
    let mut h = h0;
    let mut layers = Vec::new();
    let mut attention = Vec::new();
    for (l, layer) in params.layout().encoder.iter().enumerate() {
        let (out, traces) = hetero_layer(tape, ctx, h, layer, vars, params.kind(), params.dims().leaky_slope)?;
        attention.extend(traces.into_iter().map(|mut t| {
            t.layer = l;
            t
        }));
        layers.push(out);
        h = out;
    }
    Ok(Encoded { h, layers, attention })
}

/// One relational layer:
/// `h'_v = ReLU(W_self,t h_v + Σ_r AGG_r(v) + b_t)` for every node type `t`.
///
/// For [`EncoderKind::Hgcn`] `AGG_r` is the (weighted) neighbor mean of
/// `W_r h_u`; for [`EncoderKind::Hgat`] it is the attention-weighted sum,
/// averaged over heads. Channels with no arcs contribute nothing.
pub fn hetero_layer(
    tape: &mut Tape,
    ctx: &GraphContext,
    h: [Var; 2],
    layer: &LayerLayout,
    vars: &[Var],
    kind: EncoderKind,
    leaky_slope: f64,
) -> Result<([Var; 2], Vec<AttentionTrace>), TensorError> {
    let mut traces = Vec::new();
    let mut out = h;
    for t in NodeType::ALL {
        let self_proj = tape.matmul(h[t.index()], vars[layer.self_weight[t.index()]])?;
        let mut acc = self_proj;
        for cl in layer.channels.iter().filter(|c| c.channel.receiver() == t) {
            let adj = ctx.get(cl.channel);
            if adj.arcs.nnz() == 0 {
                continue;
            }
            let msg = match kind {
                EncoderKind::Hgcn => {
                    let z = tape.matmul(h[cl.channel.sender().index()], vars[cl.weights[0]])?;
                    tape.spmm(&adj.mean, z)?
                }
                EncoderKind::Hgat => gat_channel(tape, adj, cl, h, self_proj, vars, leaky_slope, &mut traces)?,
            };
            acc = tape.add(acc, msg)?;
        }
        let biased = tape.add_row(acc, vars[layer.bias[t.index()]])?;
        out[t.index()] = tape.relu(biased)?;
    }
    Ok((out, traces))
}

#[allow(clippy::too_many_arguments)]
fn gat_channel(
    tape: &mut Tape,
    adj: &ChannelAdjacency,
    cl: &ChannelLayout,
    h: [Var; 2],
    self_proj: Var,
    vars: &[Var],
    slope: f64,
    traces: &mut Vec<AttentionTrace>,
) -> Result<Var, TensorError> {
    let ch = cl.channel;
    let same_type = ch.sender() == ch.receiver();
    let mut sum = None;
    for (head, (&w, &a)) in cl.weights.iter().zip(&cl.attention).enumerate() {
        let z = tape.matmul(h[ch.sender().index()], vars[w])?;
        // The receiver's projection for the query side: W_r itself when both
        // ends share a type, otherwise the receiver's self weight.
        let q = if same_type { z } else { self_proj };
        let d = tape.value(z).cols();
        let a_dst = tape.slice_rows(vars[a], 0, d)?;
        let a_src = tape.slice_rows(vars[a], d, 2 * d)?;
        let s_dst = tape.matmul(q, a_dst)?;
        let s_src = tape.matmul(z, a_src)?;
        let e_dst = tape.gather_rows(s_dst, Arc::clone(&adj.arc_rows))?;
        let e_src = tape.gather_rows(s_src, Arc::clone(&adj.arc_cols))?;
        let e = tape.add(e_dst, e_src)?;
        let e = tape.leaky_relu(e, slope)?;
        let alpha = tape.segment_softmax(e, &adj.arcs)?;
        traces.push(AttentionTrace {
            layer: 0,
            channel: ch,
            head,
            alpha,
        });
        let agg = tape.edge_aggregate(alpha, z, &adj.arcs)?;
        sum = Some(match sum {
            None => agg,
            Some(s) => tape.add(s, agg)?,
        });
    }
    let sum = sum.expect("at least one head");
    let heads = cl.weights.len();
    if heads > 1 {
        tape.scale(sum, 1.0 / heads as f64)
    } else {
        Ok(sum)
    }
}
