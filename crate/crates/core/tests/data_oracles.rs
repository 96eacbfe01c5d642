mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use common::*;
use hetlink::features::{build_similarity_edges, read_fingerprints, tanimoto, Fingerprint};
use hetlink::graph::{
    read_edges, read_nodes, write_edges, write_nodes, Direction, EdgeRecord, EdgeValue, HeteroGraph, NodeTable,
    NodeType, Relation,
};
use hetlink::split::{
    read_split, sample_negatives, split_edges, write_split, LabeledEdgeSet, LabeledPair, NegativeRegime, Partition,
    SplitError,
};
use rand::Rng;

/// Neighbor lists rebuilt from the raw records with plain maps.
fn neighbor_oracle(records: &[EdgeRecord], drugs: &NodeTable, proteins: &NodeTable) -> HashMap<(Relation, bool, usize), BTreeSet<usize>> {
    let mut out: HashMap<(Relation, bool, usize), BTreeSet<usize>> = HashMap::new();
    let idx = |id: &str| drugs.get(id).or_else(|| proteins.get(id)).unwrap();
    for e in records {
        let (a, b) = (idx(&e.src), idx(&e.dst));
        match e.relation {
            Relation::Dpi => {
                let (d, p) = if drugs.get(&e.src).is_some() { (a, b) } else { (b, a) };
                out.entry((Relation::Dpi, true, d)).or_default().insert(p);
                out.entry((Relation::Dpi, false, p)).or_default().insert(d);
            }
            rel => {
                if a != b {
                    out.entry((rel, true, a)).or_default().insert(b);
                    out.entry((rel, true, b)).or_default().insert(a);
                }
            }
        }
    }
    out
}

#[test]
fn neighbor_queries_match_adjacency_list_oracle() {
    for seed in 0..15 {
        let g = random_graph(seed, 7, 5, 3, 0.35);
        let records = g.edge_records();
        let oracle = neighbor_oracle(&records, g.nodes(NodeType::Drug), g.nodes(NodeType::Protein));
        for rel in Relation::ALL {
            let dirs: &[(Direction, bool)] = if rel == Relation::Dpi {
                &[(Direction::Forward, true), (Direction::Reverse, false)]
            } else {
                &[(Direction::Forward, true)]
            };
            for &(dir, fwd) in dirs {
                let rows = g.adjacency(rel, dir).n_rows();
                for v in 0..rows {
                    let got: BTreeSet<usize> = g.neighbors_dir(rel, dir, v).unwrap().indices().iter().copied().collect();
                    let want = oracle.get(&(rel, fwd, v)).cloned().unwrap_or_default();
                    assert_eq!(got, want, "{rel:?} {dir:?} node {v}");
                }
            }
        }
    }
}

#[test]
fn edge_files_round_trip() {
    let g = random_graph(5, 6, 4, 4, 0.4);
    let mut nodes = Vec::new();
    write_nodes(&mut nodes, g.nodes(NodeType::Drug), g.nodes(NodeType::Protein)).unwrap();
    let mut edges = Vec::new();
    write_edges(&mut edges, &g.edge_records()).unwrap();
    let (drugs, proteins) = read_nodes(nodes.as_slice()).unwrap();
    let records = read_edges(edges.as_slice()).unwrap();
    let back = HeteroGraph::build(drugs, proteins, &records).unwrap();
    assert_eq!(back.edge_records(), g.edge_records());
}

fn fingerprint(r: &mut rand_chacha::ChaCha8Rng, id: usize, bits: usize) -> Fingerprint {
    let b: Vec<bool> = (0..bits).map(|_| r.random_bool(0.4)).collect();
    Fingerprint::from_bools(format!("m{id}"), &b)
}

fn brute_force_tanimoto(a: &Fingerprint, b: &Fingerprint) -> f64 {
    let (mut and, mut or) = (0, 0);
    for i in 0..a.len() {
        let (x, y) = (a.bit(i), b.bit(i));
        and += usize::from(x && y);
        or += usize::from(x || y);
    }
    if or == 0 {
        0.0
    } else {
        and as f64 / or as f64
    }
}

#[test]
fn similarity_edges_match_brute_force() {
    let mut r = rng(21);
    for round in 0..10 {
        let n = r.random_range(2..25);
        let bits = r.random_range(1..130);
        let mut fps: Vec<Fingerprint> = (0..n).map(|i| fingerprint(&mut r, i, bits)).collect();
        fps[n - 1] = Fingerprint::from_bools(format!("m{}", n - 1), &(0..bits).map(|i| fps[0].bit(i)).collect::<Vec<_>>());
        for tau in [0.1, 0.3, 0.5, 0.7, 1.0] {
            let got: BTreeMap<(String, String), f64> = build_similarity_edges(&fps, tau)
                .unwrap()
                .into_iter()
                .map(|e| ((e.src, e.dst), e.weight))
                .collect();
            let mut want = BTreeMap::new();
            for i in 0..n {
                for j in i + 1..n {
                    let s = brute_force_tanimoto(&fps[i], &fps[j]);
                    if s > tau {
                        want.insert((fps[i].id().to_string(), fps[j].id().to_string()), s);
                    }
                }
            }
            assert_eq!(got.len(), want.len(), "round {round} tau {tau}");
            for (k, w) in &want {
                assert!((got[k] - w).abs() < 1e-15);
            }
            let twin = (fps[0].id().to_string(), fps[n - 1].id().to_string());
            let twin_sim = tanimoto(&fps[0], &fps[n - 1]).unwrap();
            if tau < 1.0 && twin_sim == 1.0 {
                assert!(got.contains_key(&twin));
            }
            if tau == 1.0 {
                assert!(got.is_empty());
            }
        }
    }
}

#[test]
fn fingerprint_file_parses_bitstrings() {
    let text = "# id\tbits\nm1\t1100\nm2\t1010\n";
    let fps = read_fingerprints(text.as_bytes()).unwrap();
    assert_eq!(fps.len(), 2);
    assert!((tanimoto(&fps[0], &fps[1]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
}

fn graph_with_classes(supports: &[usize]) -> HeteroGraph {
    let total: usize = supports.iter().sum();
    let mut n = 2;
    while n * (n - 1) / 2 < total {
        n += 1;
    }
    let drugs = NodeTable::from_ids(NodeType::Drug, (0..n).map(|i| format!("d{i}"))).unwrap();
    let mut pairs = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v)));
    let mut edges = Vec::new();
    for (c, &s) in supports.iter().enumerate() {
        for _ in 0..s {
            let (u, v) = pairs.next().unwrap();
            edges.push(EdgeRecord::new(format!("d{u}"), format!("d{v}"), Relation::Ddi, EdgeValue::Label(c as u16 + 1)));
        }
    }
    HeteroGraph::build(drugs, NodeTable::new(NodeType::Protein), &edges).unwrap()
}

#[test]
fn stratified_split_counts_per_class() {
    let g = graph_with_classes(&[40, 30, 15, 10, 5]);
    let (train, test) = split_edges(&g, 0.2, 3).unwrap();
    let count = |set: &LabeledEdgeSet| {
        let mut m = BTreeMap::new();
        for p in set.pairs() {
            *m.entry(p.label).or_insert(0usize) += 1;
        }
        m
    };
    let test_counts: Vec<usize> = count(&test).into_values().collect();
    let train_counts: Vec<usize> = count(&train).into_values().collect();
    assert_eq!(test_counts, vec![8, 6, 3, 2, 1]);
    assert_eq!(train_counts, vec![32, 24, 12, 8, 4]);
}

#[test]
fn split_is_disjoint_and_complete() {
    for seed in 0..20 {
        let g = random_graph(seed, 12, 0, 4, 0.5);
        let (train, test) = split_edges(&g, 0.25, seed).unwrap();
        let a = train.keys();
        let b = test.keys();
        assert!(a.is_disjoint(&b));
        let all: HashSet<(usize, usize)> = g.ddi_pairs().into_iter().map(|(u, v, _)| (u, v)).collect();
        assert_eq!(a.union(&b).copied().collect::<HashSet<_>>(), all);
    }
}

#[test]
fn all_regime_enumerates_every_non_edge() {
    // 5 drugs, 3 DDI edges: 10 pairs, 7 non-edges.
    let drugs = NodeTable::from_ids(NodeType::Drug, ["a", "b", "c", "d", "e"]).unwrap();
    let edges = [
        EdgeRecord::new("a", "b", Relation::Ddi, EdgeValue::Label(1)),
        EdgeRecord::new("b", "c", Relation::Ddi, EdgeValue::Label(2)),
        EdgeRecord::new("d", "e", Relation::Ddi, EdgeValue::Label(1)),
    ];
    let g = HeteroGraph::build(drugs, NodeTable::new(NodeType::Protein), &edges).unwrap();
    let base = LabeledEdgeSet::new(Partition::Test, vec![LabeledPair::new(0, 1, 1)]).unwrap();
    let set = sample_negatives(&g, &base, NegativeRegime::All, 0).unwrap();
    assert_eq!(set.negative_count(), 7);
    let mut oracle = Vec::new();
    for u in 0..5 {
        for v in u + 1..5 {
            if g.ddi_label(u, v).is_none() {
                oracle.push((u, v));
            }
        }
    }
    let got: Vec<(usize, usize)> = set.pairs().iter().filter(|p| p.label == 0).map(|p| p.key()).collect();
    assert_eq!(got, oracle);
}

#[test]
fn fraction_regime_hits_requested_share() {
    for seed in 0..10 {
        let g = random_graph(seed, 40, 0, 3, 0.2);
        let (_, test) = split_edges(&g, 0.3, seed).unwrap();
        for rho in [0.05, 0.1, 0.25, 0.5] {
            let set = sample_negatives(&g, &test, NegativeRegime::Fraction(rho), seed).unwrap();
            let neg = set.negative_count();
            let want = (test.len() as f64 * rho / (1.0 - rho)).floor() as usize;
            assert!(neg == want || neg == want + 1, "{neg} vs {want}");
            let share = neg as f64 / set.len() as f64;
            assert!((share - rho).abs() <= 1.0 / set.len() as f64 + 1e-12);
            for p in set.pairs().iter().filter(|p| p.label == 0) {
                assert!(g.ddi_label(p.src, p.dst).is_none());
            }
        }
    }
}

#[test]
fn negatives_never_exceed_the_pool() {
    let g = graph_with_classes(&[9]);
    let n = g.node_count(NodeType::Drug);
    let (train, _) = split_edges(&g, 0.2, 0).unwrap();
    let pool = n * (n - 1) / 2 - 9;
    match sample_negatives(&g, &train, NegativeRegime::Fraction(0.9), 0) {
        Err(SplitError::Exhausted { available, .. }) => assert_eq!(available, pool),
        other => panic!("{other:?}"),
    }
}

#[test]
fn split_file_round_trip_preserves_labels() {
    let g = random_graph(2, 10, 0, 3, 0.4);
    let (train, test) = split_edges(&g, 0.3, 2).unwrap();
    let test = sample_negatives(&g, &test, NegativeRegime::Fraction(0.2), 2).unwrap();
    let mut buf = Vec::new();
    write_split(&mut buf, g.nodes(NodeType::Drug), &[&train, &test]).unwrap();
    let (a, b) = read_split(buf.as_slice(), g.nodes(NodeType::Drug)).unwrap();
    assert_eq!(a, train);
    assert_eq!(b, test);
}
