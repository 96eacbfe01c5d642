mod common;

use std::sync::Arc;

use common::*;
use hetlink::tensor::{SparseRows, Tape, Tensor, TensorError, Var};
use proptest::prelude::*;
use rand::Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

#[test]
fn matmul_matches_triple_loop() {
    let mut r = rng(3);
    for _ in 0..25 {
        let (m, k, n) = (r.random_range(1..7), r.random_range(1..7), r.random_range(1..7));
        let a = random_tensor(&mut r, &[m, k], 2.0);
        let b = random_tensor(&mut r, &[k, n], 2.0);
        let got = a.matmul(&b).unwrap();
        let want = triple_loop_matmul(&to_mat(&a), &to_mat(&b));
        for i in 0..m {
            for j in 0..n {
                assert!((got.row(i)[j] - want[i][j]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn cross_entropy_matches_scalar_formula() {
    let mut r = rng(8);
    for _ in 0..20 {
        let (n, c) = (r.random_range(1..6), r.random_range(2..6));
        let logits = random_tensor(&mut r, &[n, c], 30.0);
        let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..c)).collect();
        let mut tape = Tape::new();
        let x = tape.constant(logits.clone());
        let loss = tape.cross_entropy(x, labels.clone().into()).unwrap();
        let want = scalar_cross_entropy(&to_mat(&logits), &labels);
        assert!((tape.value(loss).item().unwrap() - want).abs() < 1e-12);
    }
}

#[test]
fn two_by_two_product() {
    let a = Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
    let b = Tensor::from_rows(&[[5.0, 6.0], [7.0, 8.0]]).unwrap();
    assert_eq!(a.matmul(&b).unwrap().data(), &[19.0, 22.0, 43.0, 50.0]);
}

#[test]
fn shape_errors_name_the_op() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::zeros(&[2, 3]));
    let b = tape.constant(Tensor::zeros(&[2, 3]));
    match tape.matmul(a, b) {
        Err(TensorError::ShapeMismatch { op, .. }) => assert_eq!(op, "matmul"),
        other => panic!("{other:?}"),
    }
}

fn random_sparse(r: &mut rand_chacha::ChaCha8Rng, rows: usize, cols: usize) -> Arc<SparseRows> {
    let mut offsets = vec![0];
    let mut idx = Vec::new();
    let mut w = Vec::new();
    for _ in 0..rows {
        for c in 0..cols {
            if r.random_bool(0.5) {
                idx.push(c);
                w.push(r.random_range(0.1..1.0));
            }
        }
        offsets.push(idx.len());
    }
    Arc::new(SparseRows::new(cols, offsets, idx, w).unwrap())
}

fn check(inputs: &[Tensor], seed: u64, f: impl Fn(&mut Tape, &[Var]) -> Var) {
    let err = gradient_check(inputs, H, |tape, v| {
        let out = f(tape, v);
        if tape.value(out).numel() == 1 && tape.value(out).shape().is_empty() {
            out
        } else {
            weighted_sum(tape, out, seed)
        }
    });
    assert!(err < TOL, "relative error {err}");
}

#[test]
fn every_op_matches_central_differences() {
    for seed in 0..20u64 {
        let mut r = rng(100 + seed);
        let (m, k, n) = (r.random_range(1..5), r.random_range(1..5), r.random_range(1..5));
        let a = random_tensor(&mut r, &[m, k], 1.0);
        let b = random_tensor(&mut r, &[k, n], 1.0);
        let c = random_tensor(&mut r, &[m, k], 1.0);
        let row = random_tensor(&mut r, &[k], 1.0);
        let kinked = random_tensor_away_from_zero(&mut r, &[m, k], 0.05);

        check(&[a.clone(), b.clone()], seed, |t, v| t.matmul(v[0], v[1]).unwrap());
        check(&[a.clone(), c.clone()], seed, |t, v| t.add(v[0], v[1]).unwrap());
        check(&[a.clone(), row.clone()], seed, |t, v| t.add_row(v[0], v[1]).unwrap());
        check(&[a.clone(), c.clone()], seed, |t, v| t.mul(v[0], v[1]).unwrap());
        check(&[a.clone()], seed, |t, v| t.scale(v[0], -1.7).unwrap());
        check(&[kinked.clone()], seed, |t, v| t.relu(v[0]).unwrap());
        check(&[kinked.clone()], seed, |t, v| t.leaky_relu(v[0], 0.2).unwrap());
        check(&[a.clone(), c.clone()], seed, |t, v| t.concat_cols(&[v[0], v[1]]).unwrap());
        let picks: Arc<[usize]> = (0..6).map(|_| r.random_range(0..m)).collect();
        check(&[a.clone()], seed, |t, v| t.gather_rows(v[0], Arc::clone(&picks)).unwrap());
        let start = r.random_range(0..m);
        let end = r.random_range(start + 1..=m);
        check(&[a.clone()], seed, |t, v| t.slice_rows(v[0], start, end).unwrap());
        check(&[a.clone()], seed, |t, v| t.mean_rows(v[0], Arc::clone(&picks)).unwrap());
        check(&[a.clone()], seed, |t, v| t.softmax_rows(v[0]).unwrap());
        check(&[a.clone()], seed, |t, v| t.sum(v[0]).unwrap());
        let labels: Arc<[usize]> = (0..m).map(|_| r.random_range(0..k)).collect();
        check(&[a.clone()], seed, |t, v| t.cross_entropy(v[0], Arc::clone(&labels)).unwrap());

        let adj_rows = r.random_range(1..5);
        let adj = random_sparse(&mut r, adj_rows, m);
        check(&[a.clone()], seed, |t, v| t.spmm(&adj, v[0]).unwrap());
        let scores = random_tensor(&mut r, &[adj.nnz().max(1), 1], 2.0);
        if adj.nnz() > 0 {
            check(&[scores.clone()], seed, |t, v| t.segment_softmax(v[0], &adj).unwrap());
            check(&[scores.clone(), a.clone()], seed, |t, v| {
                let alpha = t.segment_softmax(v[0], &adj).unwrap();
                t.edge_aggregate(alpha, v[1], &adj).unwrap()
            });
        }
    }
}

#[test]
fn finite_checks_can_be_disabled() {
    let mut tape = Tape::new().with_finite_checks(false);
    let x = tape.constant(Tensor::vector(vec![f64::MAX]));
    let y = tape.scale(x, 10.0).unwrap();
    assert!(tape.value(y).data()[0].is_infinite());
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::vector(vec![f64::MAX]));
    assert!(matches!(tape.scale(x, 10.0), Err(TensorError::NonFinite { .. })));
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions(data in prop::collection::vec(-50.0f64..50.0, 1..40), cols in 1usize..6) {
        let rows = data.len() / cols;
        prop_assume!(rows > 0);
        let t = Tensor::matrix(rows, cols, data[..rows * cols].to_vec()).unwrap();
        let s = t.softmax_rows().unwrap();
        for i in 0..rows {
            let total: f64 = s.row(i).iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!(s.row(i).iter().all(|&p| (0.0..=1.0).contains(&p)));
        }
    }

    #[test]
    fn matmul_distributes_over_addition(seed in 0u64..500) {
        let mut r = rng(seed);
        let (m, k, n) = (r.random_range(1..5), r.random_range(1..5), r.random_range(1..5));
        let a = random_tensor(&mut r, &[m, k], 1.0);
        let b = random_tensor(&mut r, &[k, n], 1.0);
        let c = random_tensor(&mut r, &[k, n], 1.0);
        let bc: Vec<f64> = b.data().iter().zip(c.data()).map(|(x, y)| x + y).collect();
        let bc = Tensor::matrix(k, n, bc).unwrap();
        let lhs = a.matmul(&bc).unwrap();
        let ab = a.matmul(&b).unwrap();
        let ac = a.matmul(&c).unwrap();
        for i in 0..lhs.numel() {
            prop_assert!((lhs.data()[i] - ab.data()[i] - ac.data()[i]).abs() < 1e-12);
        }
    }
}
