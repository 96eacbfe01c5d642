mod common;

use std::sync::Arc;

use common::*;
use hetlink::features::{Features, NodeFeatures};
use hetlink::graph::{EdgeRecord, EdgeValue, HeteroGraph, NodeTable, NodeType, Relation};
use hetlink::nn::{
    decode_pairs, encode, hetero_layer, predict_edge, read_checkpoint, write_checkpoint, EncoderKind, GraphContext,
    ModelDims, ModelError, ModelParams,
};
use hetlink::tensor::{Tape, Tensor};
use rand::Rng;

fn small_dims(drug_in: usize, protein_in: usize, classes: usize) -> ModelDims {
    ModelDims {
        hidden: 5,
        decoder_hidden: 6,
        ..ModelDims::new(drug_in, protein_in, classes)
    }
}

fn layer_out(p: &ModelParams, g: &HeteroGraph, f: &Features, layer: usize) -> [Tensor; 2] {
    let ctx = GraphContext::new(g, p.dims().sim_weighting);
    let mut tape = Tape::new();
    let vars = p.bind(&mut tape, false);
    let h = p.feature_leaves(&mut tape, g, f).unwrap();
    let (out, _) = hetero_layer(
        &mut tape,
        &ctx,
        h,
        &p.layout().encoder[layer],
        &vars,
        p.kind(),
        p.dims().leaky_slope,
    )
    .unwrap();
    out.map(|v| tape.value(v).clone())
}

fn max_diff(t: &Tensor, m: &Mat) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, row) in m.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            worst = worst.max((t.row(i)[j] - v).abs());
        }
    }
    worst
}

#[test]
fn gcn_layer_matches_loop_reference() {
    for seed in 0..10 {
        let g = random_graph(seed, 4, 3, 2, 0.5);
        let f = random_features(seed + 50, &g, 3, 2);
        let p = ModelParams::init(EncoderKind::Hgcn, small_dims(3, 2, 2), seed);
        let got = layer_out(&p, &g, &f, 0);
        let want = reference_layer(&g, &[to_mat(f.drug.matrix()), to_mat(f.protein.matrix())], &p, 0);
        for t in 0..2 {
            assert!(max_diff(&got[t], &want[t]) < 1e-10, "seed {seed}");
        }
    }
}

#[test]
fn gat_layer_matches_loop_reference() {
    for seed in 0..10 {
        for heads in [1, 2] {
            let g = random_graph(seed, 5, 3, 3, 0.5);
            let f = random_features(seed + 70, &g, 3, 4);
            let dims = ModelDims {
                heads,
                ..small_dims(3, 4, 3)
            };
            let p = ModelParams::init(EncoderKind::Hgat, dims, seed);
            let got = layer_out(&p, &g, &f, 0);
            let want = reference_layer(&g, &[to_mat(f.drug.matrix()), to_mat(f.protein.matrix())], &p, 0);
            for t in 0..2 {
                assert!(max_diff(&got[t], &want[t]) < 1e-10, "seed {seed} heads {heads}");
            }
        }
    }
}

#[test]
fn encode_equals_layer_by_layer_application() {
    for kind in [EncoderKind::Hgcn, EncoderKind::Hgat] {
        let g = random_graph(4, 6, 4, 2, 0.4);
        let f = random_features(5, &g, 4, 3);
        let p = ModelParams::init(kind, small_dims(4, 3, 2), 9);
        let ctx = GraphContext::new(&g, true);
        let got = p.embeddings(&ctx, &g, &f).unwrap();
        let want = reference_encode(&g, &f, &p);
        for t in 0..2 {
            assert!(max_diff(&got[t], &want[t]) < 1e-10, "{kind}");
        }
    }
}

fn one_edge_graph() -> HeteroGraph {
    let drugs = NodeTable::from_ids(NodeType::Drug, ["a", "b"]).unwrap();
    let proteins = NodeTable::new(NodeType::Protein);
    HeteroGraph::build(drugs, proteins, &[EdgeRecord::new("a", "b", Relation::Ddi, EdgeValue::Label(1))]).unwrap()
}

fn features_of(drug: Tensor, protein_dim: usize) -> Features {
    Features::new(
        NodeFeatures::new(NodeType::Drug, drug),
        NodeFeatures::new(NodeType::Protein, Tensor::zeros(&[0, protein_dim])),
    )
}

#[test]
fn isolated_node_keeps_self_term() {
    let drugs = NodeTable::from_ids(NodeType::Drug, ["x"]).unwrap();
    let g = HeteroGraph::build(drugs, NodeTable::new(NodeType::Protein), &[]).unwrap();
    let f = features_of(Tensor::from_rows(&[[0.5, -1.0]]).unwrap(), 2);
    let p = ModelParams::init(EncoderKind::Hgcn, small_dims(2, 2, 1), 1);
    let got = layer_out(&p, &g, &f, 0);
    let w = p.get("encoder.0.self.drug").unwrap();
    let b = p.get("encoder.0.bias.drug").unwrap();
    let pre = Tensor::from_rows(&[[0.5, -1.0]]).unwrap().matmul(w).unwrap();
    for j in 0..5 {
        assert_eq!(got[0].row(0)[j], (pre.row(0)[j] + b.data()[j]).max(0.0));
    }
}

#[test]
fn identity_aggregation_copies_the_neighbor() {
    for kind in [EncoderKind::Hgcn, EncoderKind::Hgat] {
        let g = one_edge_graph();
        let dims = ModelDims {
            hidden: 3,
            ..small_dims(3, 3, 1)
        };
        let mut p = ModelParams::init(kind, dims, 2);
        *p.get_mut("encoder.0.self.drug").unwrap() = Tensor::zeros(&[3, 3]);
        *p.get_mut("encoder.0.ddi.weight.0").unwrap() = Tensor::identity(3);
        let f = features_of(Tensor::from_rows(&[[0.1, 0.2, 0.3], [0.7, 0.0, 1.5]]).unwrap(), 3);
        let got = layer_out(&p, &g, &f, 0);
        assert_eq!(got[0].row(0), &[0.7, 0.0, 1.5], "{kind}");
        assert_eq!(got[0].row(1), &[0.1, 0.2, 0.3], "{kind}");
    }
}

#[test]
fn zero_weights_give_relu_of_bias() {
    let g = random_graph(1, 4, 2, 2, 0.6);
    let f = random_features(2, &g, 3, 3);
    let mut p = ModelParams::init(EncoderKind::Hgcn, small_dims(3, 3, 2), 0);
    let n = p.len();
    for i in 0..n {
        let name = p.layout().name(i).to_string();
        let shape = p.layout().shape(i).to_vec();
        let value = if name.starts_with("encoder.2.bias") {
            Tensor::vector(vec![0.5, -0.25, 0.0, 2.0, -1.0])
        } else {
            Tensor::zeros(&shape)
        };
        *p.tensors_mut().get_mut(i).unwrap() = value;
    }
    let emb = p.embeddings(&GraphContext::new(&g, true), &g, &f).unwrap();
    for t in 0..2 {
        for i in 0..emb[t].rows() {
            assert_eq!(emb[t].row(i), &[0.5, 0.0, 0.0, 2.0, 0.0]);
        }
    }
}

#[test]
fn attention_of_single_and_twin_neighbors() {
    // a-b only: every alpha is 1. c has twins a and d with equal features.
    let drugs = NodeTable::from_ids(NodeType::Drug, ["a", "b", "c", "d"]).unwrap();
    let edges = [
        EdgeRecord::new("a", "b", Relation::Ddi, EdgeValue::Label(1)),
        EdgeRecord::new("c", "a", Relation::Sim, EdgeValue::Weight(0.8)),
        EdgeRecord::new("c", "d", Relation::Sim, EdgeValue::Weight(0.9)),
    ];
    let g = HeteroGraph::build(drugs, NodeTable::new(NodeType::Protein), &edges).unwrap();
    let f = features_of(
        Tensor::from_rows(&[[1.0, 2.0], [-3.0, 0.5], [0.2, 0.2], [1.0, 2.0]]).unwrap(),
        2,
    );
    let p = ModelParams::init(EncoderKind::Hgat, small_dims(2, 2, 1), 4);
    let ctx = GraphContext::new(&g, true);
    let mut tape = Tape::new();
    let vars = p.bind(&mut tape, false);
    let h = p.feature_leaves(&mut tape, &g, &f).unwrap();
    let enc = encode(&mut tape, &ctx, h, &p, &vars).unwrap();
    let first = |name: &str| {
        enc.attention
            .iter()
            .find(|a| a.layer == 0 && a.channel.name() == name)
            .map(|a| tape.value(a.alpha).data().to_vec())
            .unwrap()
    };
    assert_eq!(first("ddi"), vec![1.0, 1.0]);
    let sim = first("sim");
    let arcs = ctx.arc_matrix(hetlink::nn::Channel::ALL[1]);
    let c_row = arcs.range(2);
    assert_eq!(c_row.len(), 2);
    for k in c_row {
        assert!((sim[k] - 0.5).abs() < 1e-15);
    }
}

#[test]
fn decoder_matches_scalar_two_branch_average() {
    let mut r = rng(12);
    for seed in 0..10 {
        let p = ModelParams::init(EncoderKind::Hgcn, small_dims(2, 2, 3), seed);
        let h = random_tensor(&mut r, &[4, 5], 1.0);
        let pairs = [(0usize, 1usize), (2, 3), (3, 0), (1, 1)];
        let mut tape = Tape::new();
        let vars = p.bind(&mut tape, false);
        let hv = tape.constant(h.clone());
        let us: Arc<[usize]> = pairs.iter().map(|p| p.0).collect();
        let vs: Arc<[usize]> = pairs.iter().map(|p| p.1).collect();
        let logits = decode_pairs(&mut tape, hv, us, vs, &p, &vars).unwrap();
        let out = tape.value(logits);
        for (i, &(u, v)) in pairs.iter().enumerate() {
            let want = reference_decode(h.row(u), h.row(v), &p);
            for (a, b) in out.row(i).iter().zip(&want) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn zero_decoder_with_final_bias_outputs_the_bias() {
    let mut p = ModelParams::init(EncoderKind::Hgcn, small_dims(2, 2, 2), 0);
    for name in ["decoder.w1", "decoder.w2", "decoder.w3", "decoder.b1", "decoder.b2"] {
        let shape = p.get(name).unwrap().shape().to_vec();
        *p.get_mut(name).unwrap() = Tensor::zeros(&shape);
    }
    *p.get_mut("decoder.b3").unwrap() = Tensor::vector(vec![0.3, -1.0, 2.5]);
    let mut tape = Tape::new();
    let vars = p.bind(&mut tape, false);
    let h = tape.constant(random_tensor(&mut rng(1), &[3, 5], 1.0));
    let logits = decode_pairs(&mut tape, h, vec![0, 1].into(), vec![2, 0].into(), &p, &vars).unwrap();
    for i in 0..2 {
        assert_eq!(tape.value(logits).row(i), &[0.3, -1.0, 2.5]);
    }
}

#[test]
fn predict_edge_is_a_symmetric_distribution() {
    let g = random_graph(7, 6, 3, 3, 0.5);
    let f = random_features(8, &g, 4, 4);
    let p = ModelParams::init(EncoderKind::Hgat, small_dims(4, 4, 3), 1);
    let ab = predict_edge(&p, &g, &f, "d0", "d4").unwrap();
    let ba = predict_edge(&p, &g, &f, "d4", "d0").unwrap();
    assert_eq!(ab, ba);
    assert_eq!(ab.len(), 4);
    assert!((ab.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(matches!(predict_edge(&p, &g, &f, "d1", "d1"), Err(ModelError::SelfPair(_))));
    assert!(matches!(predict_edge(&p, &g, &f, "d1", "p0"), Err(ModelError::NotADrug(_))));
    assert!(matches!(predict_edge(&p, &g, &f, "zz", "d0"), Err(ModelError::NotADrug(_))));
}

#[test]
fn feature_dimension_mismatch_is_reported() {
    let g = random_graph(7, 3, 2, 1, 0.5);
    let f = random_features(8, &g, 4, 4);
    let p = ModelParams::init(EncoderKind::Hgcn, small_dims(5, 4, 1), 1);
    let err = p.embeddings(&GraphContext::new(&g, true), &g, &f).unwrap_err();
    assert!(matches!(err, ModelError::FeatureDim { expected: 5, found: 4, .. }), "{err}");
}

#[test]
fn encode_is_bit_identical_on_repeat() {
    let g = random_graph(3, 8, 5, 3, 0.4);
    let f = random_features(4, &g, 6, 3);
    let p = ModelParams::init(EncoderKind::Hgat, small_dims(6, 3, 3), 5);
    let ctx = GraphContext::new(&g, true);
    let a = p.embeddings(&ctx, &g, &f).unwrap();
    let b = p.embeddings(&ctx, &g, &f).unwrap();
    for t in 0..2 {
        assert!(a[t].data().iter().zip(b[t].data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn full_composition_gradient_check() {
    for (i, kind) in [EncoderKind::Hgcn, EncoderKind::Hgat].into_iter().enumerate() {
        let g = random_graph(20 + i as u64, 4, 3, 2, 0.5);
        let f = random_features(30, &g, 3, 2);
        let dims = ModelDims {
            hidden: 3,
            decoder_hidden: 4,
            ..ModelDims::new(3, 2, 2)
        };
        let mut p = ModelParams::init(kind, dims, 40);
        // Zero biases put dead units exactly on the ReLU kink.
        let mut r = rng(41);
        for t in p.tensors_mut() {
            *t = random_tensor(&mut r, &t.shape().to_vec(), 0.8);
        }
        let ctx = GraphContext::new(&g, true);
        let mut inputs: Vec<Tensor> = p.tensors().to_vec();
        inputs.push(f.drug.matrix().clone());
        inputs.push(f.protein.matrix().clone());
        let n = p.len();
        let err = gradient_check(&inputs, 1e-5, |tape, v| {
            let enc = encode(tape, &ctx, [v[n], v[n + 1]], &p, &v[..n]).unwrap();
            let logits = decode_pairs(tape, enc.h[0], vec![0, 1, 2].into(), vec![1, 3, 3].into(), &p, &v[..n]).unwrap();
            tape.cross_entropy(logits, vec![1, 0, 2].into()).unwrap()
        });
        assert!(err < 1e-4, "{kind}: {err}");
    }
}

#[test]
fn checkpoint_round_trip_preserves_predictions() {
    let g = random_graph(2, 5, 3, 2, 0.5);
    let f = random_features(3, &g, 3, 3);
    let p = ModelParams::init(EncoderKind::Hgat, small_dims(3, 3, 2), 6);
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, &p).unwrap();
    let q = read_checkpoint(buf.as_slice()).unwrap();
    assert_eq!(p, q);
    assert_eq!(
        predict_edge(&p, &g, &f, "d0", "d2").unwrap(),
        predict_edge(&q, &g, &f, "d0", "d2").unwrap()
    );
    let mut again = Vec::new();
    write_checkpoint(&mut again, &q).unwrap();
    assert_eq!(buf, again);
}

#[test]
fn removing_sim_edges_matches_a_graph_built_without_them() {
    for kind in [EncoderKind::Hgcn, EncoderKind::Hgat] {
        let g = random_graph(11, 6, 4, 2, 0.5);
        let stripped = g.without_relation(Relation::Sim);
        let records: Vec<EdgeRecord> = g
            .edge_records()
            .into_iter()
            .filter(|e| e.relation != Relation::Sim)
            .collect();
        let fresh = HeteroGraph::build(
            g.nodes(NodeType::Drug).clone(),
            g.nodes(NodeType::Protein).clone(),
            &records,
        )
        .unwrap();
        let f = random_features(12, &g, 3, 3);
        let p = ModelParams::init(kind, small_dims(3, 3, 2), 13);
        let a = p.embeddings(&GraphContext::new(&stripped, true), &stripped, &f).unwrap();
        let b = p.embeddings(&GraphContext::new(&fresh, true), &fresh, &f).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn random_small_graphs_have_expected_parameter_shapes() {
    let mut r = rng(5);
    for _ in 0..5 {
        let d = r.random_range(1..6);
        let q = r.random_range(1..6);
        let p = ModelParams::init(EncoderKind::Hgat, small_dims(d, q, 2), 0);
        assert_eq!(p.get("encoder.0.dpi.weight.0").unwrap().shape(), &[q, 5]);
        assert_eq!(p.get("encoder.0.dpi_rev.weight.0").unwrap().shape(), &[d, 5]);
        assert_eq!(p.get("encoder.1.ppi.attention.0").unwrap().shape(), &[10, 1]);
        assert_eq!(p.get("decoder.w1").unwrap().shape(), &[10, 6]);
    }
}
