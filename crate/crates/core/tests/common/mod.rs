//! Independent reference implementations shared by the integration and
//! acceptance tests. Nothing here calls the library's numeric kernels.
#![allow(dead_code)]

use hetlink::features::{Features, NodeFeatures};
use hetlink::graph::{Direction, EdgeRecord, EdgeValue, HeteroGraph, NodeTable, NodeType, Relation};
use hetlink::metrics::ConfusionMatrix;
use hetlink::nn::{Channel, EncoderKind, ModelParams};
use hetlink::tensor::{Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Mat = Vec<Vec<f64>>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

/// Like [`random_tensor`] but every entry has magnitude ≥ `gap`, keeping
/// inputs away from ReLU kinks.
pub fn random_tensor_away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize], gap: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.random_range(gap..1.0);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

pub fn to_mat(t: &Tensor) -> Mat {
    (0..t.rows()).map(|i| t.row(i).to_vec()).collect()
}

pub fn triple_loop_matmul(a: &Mat, b: &Mat) -> Mat {
    let n = b.first().map_or(0, |r| r.len());
    a.iter()
        .map(|row| {
            (0..n)
                .map(|j| {
                    let mut s = 0.0;
                    for (k, x) in row.iter().enumerate() {
                        s += x * b[k][j];
                    }
                    s
                })
                .collect()
        })
        .collect()
}

/// Max relative error between the tape gradient of `f(inputs)` and central
/// differences with step `h`. Entries where both values are below 1e-6 are
/// compared absolutely: at `h = 1e-5` the difference quotient carries about
/// 1e-11 of roundoff, so smaller gradients cannot be resolved to 1e-4.
pub fn gradient_check<F>(inputs: &[Tensor], h: f64, f: F) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let loss = f(&mut tape, &vars);
    let grads = tape.backward(loss).unwrap();

    let eval = |inputs: &[Tensor]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
        let loss = f(&mut tape, &vars);
        tape.value(loss).item().unwrap()
    };

    let mut worst: f64 = 0.0;
    for (i, input) in inputs.iter().enumerate() {
        let zeros = Tensor::zeros(input.shape());
        let analytic = grads.get(vars[i]).unwrap_or(&zeros);
        for j in 0..input.numel() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[j] += h;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[j] -= h;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
            let a = analytic.data()[j];
            let scale = a.abs().max(numeric.abs());
            let err = if scale < 1e-6 { (a - numeric).abs() } else { (a - numeric).abs() / scale };
            worst = worst.max(err);
        }
    }
    worst
}

/// `Σ out ⊙ R` for a fixed random `R`, turning any output into a scalar
/// whose gradient reaches every output entry.
pub fn weighted_sum(tape: &mut Tape, out: Var, seed: u64) -> Var {
    let shape = tape.value(out).shape().to_vec();
    let r = random_tensor(&mut rng(seed), &shape, 1.0);
    let r = tape.constant(r);
    let prod = tape.mul(out, r).unwrap();
    tape.sum(prod).unwrap()
}

pub fn scalar_cross_entropy(logits: &Mat, labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for (row, &y) in logits.iter().zip(labels) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|v| (v - m).exp()).sum();
        total += -(row[y] - m - z.ln());
    }
    total / labels.len() as f64
}

/// Random heterogeneous graph with every relation present (when sizes
/// allow), SIM weights in (0.7, 1] and DDI labels in `1..=classes`.
pub fn random_graph(seed: u64, n_drugs: usize, n_proteins: usize, classes: u16, density: f64) -> HeteroGraph {
    let mut r = rng(seed);
    let drugs = NodeTable::from_ids(NodeType::Drug, (0..n_drugs).map(|i| format!("d{i}"))).unwrap();
    let proteins = NodeTable::from_ids(NodeType::Protein, (0..n_proteins).map(|i| format!("p{i}"))).unwrap();
    let mut edges = Vec::new();
    for u in 0..n_drugs {
        for v in u + 1..n_drugs {
            if r.random_bool(density) {
                let label = r.random_range(1..=classes);
                edges.push(EdgeRecord::new(format!("d{u}"), format!("d{v}"), Relation::Ddi, EdgeValue::Label(label)));
            }
            if r.random_bool(density * 0.5) {
                let w = r.random_range(0.71..1.0);
                edges.push(EdgeRecord::new(format!("d{u}"), format!("d{v}"), Relation::Sim, EdgeValue::Weight(w)));
            }
        }
        for p in 0..n_proteins {
            if r.random_bool(density) {
                edges.push(EdgeRecord::new(format!("d{u}"), format!("p{p}"), Relation::Dpi, EdgeValue::None));
            }
        }
    }
    for a in 0..n_proteins {
        for b in a + 1..n_proteins {
            if r.random_bool(density) {
                edges.push(EdgeRecord::new(format!("p{a}"), format!("p{b}"), Relation::Ppi, EdgeValue::None));
            }
        }
    }
    HeteroGraph::build(drugs, proteins, &edges).unwrap()
}

pub fn random_features(seed: u64, g: &HeteroGraph, drug_dim: usize, protein_dim: usize) -> Features {
    let mut r = rng(seed);
    let mut make = |t: NodeType, d: usize| {
        let n = g.node_count(t);
        NodeFeatures::new(t, random_tensor_away_from_zero(&mut r, &[n, d], 0.05))
    };
    let drug = make(NodeType::Drug, drug_dim);
    let protein = make(NodeType::Protein, protein_dim);
    Features::new(drug, protein)
}

fn vec_mat(v: &[f64], w: &Tensor) -> Vec<f64> {
    let (rows, cols) = (w.rows(), w.cols());
    assert_eq!(v.len(), rows);
    (0..cols).map(|j| (0..rows).map(|i| v[i] * w.row(i)[j]).sum()).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn param<'a>(p: &'a ModelParams, name: &str) -> &'a Tensor {
    p.get(name).unwrap_or_else(|_| panic!("missing parameter {name}"))
}

fn channel_name(ch: Channel) -> &'static str {
    ch.name()
}

/// Neighbors of `v` on `channel` as `(u, weight)` pairs, read from the
/// graph's neighbor lists.
pub fn channel_neighbors(g: &HeteroGraph, ch: Channel, v: usize) -> Vec<(usize, f64)> {
    g.neighbors_dir(ch.relation, ch.direction, v).unwrap().iter().collect()
}

/// One encoder layer evaluated node by node.
pub fn reference_layer(g: &HeteroGraph, h: &[Mat; 2], p: &ModelParams, layer: usize) -> [Mat; 2] {
    reference_layer_ordered(g, h, p, layer, &mut |n| n)
}

/// [`reference_layer`] with each neighbor list passed through `order` first.
pub fn reference_layer_ordered(
    g: &HeteroGraph,
    h: &[Mat; 2],
    p: &ModelParams,
    layer: usize,
    order: &mut dyn FnMut(Vec<(usize, f64)>) -> Vec<(usize, f64)>,
) -> [Mat; 2] {
    let kind = p.kind();
    let slope = p.dims().leaky_slope;
    let sim_weighting = p.dims().sim_weighting;
    let heads = match kind {
        EncoderKind::Hgcn => 1,
        EncoderKind::Hgat => p.dims().heads,
    };
    let mut out: [Mat; 2] = [Vec::new(), Vec::new()];
    for t in NodeType::ALL {
        let w_self = param(p, &format!("encoder.{layer}.self.{t}"));
        let bias = param(p, &format!("encoder.{layer}.bias.{t}"));
        for v in 0..g.node_count(t) {
            let self_proj = vec_mat(&h[t.index()][v], w_self);
            let mut acc = self_proj.clone();
            for ch in Channel::ALL.iter().copied().filter(|c| c.receiver() == t) {
                let nbrs = order(channel_neighbors(g, ch, v));
                if nbrs.is_empty() {
                    continue;
                }
                let src = &h[ch.sender().index()];
                let mut msg = vec![0.0; acc.len()];
                for head in 0..heads {
                    let w = param(p, &format!("encoder.{layer}.{}.weight.{head}", channel_name(ch)));
                    let z: Vec<Vec<f64>> = nbrs.iter().map(|&(u, _)| vec_mat(&src[u], w)).collect();
                    let coef: Vec<f64> = match kind {
                        EncoderKind::Hgcn => {
                            let ws: Vec<f64> = nbrs
                                .iter()
                                .map(|&(_, wt)| if sim_weighting && ch.relation == Relation::Sim { wt } else { 1.0 })
                                .collect();
                            let total: f64 = ws.iter().sum();
                            ws.iter().map(|w| w / total).collect()
                        }
                        EncoderKind::Hgat => {
                            let a = param(p, &format!("encoder.{layer}.{}.attention.{head}", channel_name(ch)));
                            let d = z[0].len();
                            let q = if ch.sender() == ch.receiver() { vec_mat(&h[t.index()][v], w) } else { self_proj.clone() };
                            let logits: Vec<f64> = z
                                .iter()
                                .map(|zu| {
                                    let e = dot(&a.data()[..d], &q) + dot(&a.data()[d..], zu);
                                    if e > 0.0 {
                                        e
                                    } else {
                                        slope * e
                                    }
                                })
                                .collect();
                            let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                            let ex: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
                            let s: f64 = ex.iter().sum();
                            ex.iter().map(|e| e / s).collect()
                        }
                    };
                    for (zu, c) in z.iter().zip(&coef) {
                        for (m, x) in msg.iter_mut().zip(zu) {
                            *m += c * x / heads as f64;
                        }
                    }
                }
                for (a, m) in acc.iter_mut().zip(&msg) {
                    *a += m;
                }
            }
            let row = acc.iter().zip(bias.data()).map(|(a, b)| (a + b).max(0.0)).collect();
            out[t.index()].push(row);
        }
    }
    out
}

pub fn reference_encode(g: &HeteroGraph, f: &Features, p: &ModelParams) -> [Mat; 2] {
    let mut h = [to_mat(f.drug.matrix()), to_mat(f.protein.matrix())];
    for l in 0..p.dims().layers {
        h = reference_layer(g, &h, p, l);
    }
    h
}

/// Decoder logits for one pair, both branches evaluated separately.
pub fn reference_decode(h_u: &[f64], h_v: &[f64], p: &ModelParams) -> Vec<f64> {
    let mlp = |x: Vec<f64>| -> Vec<f64> {
        let layer = |x: &[f64], w: &str, b: &str, relu: bool| -> Vec<f64> {
            vec_mat(x, param(p, w))
                .iter()
                .zip(param(p, b).data())
                .map(|(a, b)| if relu { (a + b).max(0.0) } else { a + b })
                .collect()
        };
        let z1 = layer(&x, "decoder.w1", "decoder.b1", true);
        let z2 = layer(&z1, "decoder.w2", "decoder.b2", true);
        layer(&z2, "decoder.w3", "decoder.b3", false)
    };
    let uv = mlp([h_u, h_v].concat());
    let vu = mlp([h_v, h_u].concat());
    uv.iter().zip(&vu).map(|(a, b)| (a + b) / 2.0).collect()
}

/// Per-class scores recomputed cell by cell from the raw counts.
pub struct ScalarScores {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

pub fn scalar_class_scores(counts: &[Vec<u64>], class: usize) -> ScalarScores {
    let (mut tp, mut fp, mut fn_, mut tn) = (0u64, 0u64, 0u64, 0u64);
    for (t, row) in counts.iter().enumerate() {
        for (p, &n) in row.iter().enumerate() {
            match (t == class, p == class) {
                (true, true) => tp += n,
                (false, true) => fp += n,
                (true, false) => fn_ += n,
                (false, false) => tn += n,
            }
        }
    }
    let all = tp + fp + fn_ + tn;
    let div = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    ScalarScores {
        accuracy: if all == 0 { 1.0 } else { div(tp + tn, all) },
        precision: div(tp, tp + fp),
        recall: div(tp, tp + fn_),
        f1: div(2 * tp, 2 * tp + fp + fn_),
        support: tp + fn_,
    }
}

/// Support-weighted `(accuracy, precision, recall, f1)`.
pub fn scalar_weighted(counts: &[Vec<u64>], exclude_class0: bool) -> [f64; 4] {
    let first = usize::from(exclude_class0);
    let scores: Vec<ScalarScores> = (0..counts.len()).map(|i| scalar_class_scores(counts, i)).collect();
    let total: u64 = scores[first..].iter().map(|s| s.support).sum();
    let mut out = [0.0; 4];
    for s in &scores[first..] {
        let w = s.support as f64 / total as f64;
        out[0] += w * s.accuracy;
        out[1] += w * s.precision;
        out[2] += w * s.recall;
        out[3] += w * s.f1;
    }
    out
}

pub fn random_counts(rng: &mut ChaCha8Rng, max_class: usize, max_count: u64) -> Vec<Vec<u64>> {
    let c = rng.random_range(1..=max_class);
    let sparse = rng.random_bool(0.3);
    (0..=c)
        .map(|_| {
            (0..=c)
                .map(|_| if sparse && rng.random_bool(0.5) { 0 } else { rng.random_range(0..=max_count) })
                .collect()
        })
        .collect()
}

pub fn matrix_of(counts: &[Vec<u64>]) -> ConfusionMatrix {
    ConfusionMatrix::from_counts(counts).unwrap()
}

/// Every `(receiver, sender)` arc the encoder can read on the DDI channel.
pub fn ddi_arcs(g: &HeteroGraph) -> Vec<(usize, usize)> {
    let ch = Channel::new(Relation::Ddi, Direction::Forward);
    (0..g.node_count(NodeType::Drug))
        .flat_map(|v| channel_neighbors(g, ch, v).into_iter().map(move |(u, _)| (v, u)))
        .collect()
}
