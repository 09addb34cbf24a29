use std::sync::Arc;

use maglev::tensor::{finite_diff_check, matmul, AdamState, Optimizer, Reduce, Tape, Tensor, Var};
use maglev::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
    Tensor::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// `Σ out ⊙ R` for a fixed random `R`, turning any op into a scalar loss.
fn project(t: &mut Tape, out: Var, seed: u64) -> maglev::Result<Var> {
    let (r, c) = t.value(out).shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = t.constant(random(&mut rng, r, c));
    let p = t.mul(out, w)?;
    Ok(t.sum_all(p))
}

#[test]
fn matmul_examples() {
    let m = Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
    assert_eq!(matmul(&Tensor::identity(2), &m).unwrap(), m);
    let v = Tensor::from_rows(&[[0.0], [1.0]]);
    assert_eq!(matmul(&m, &v).unwrap(), Tensor::from_rows(&[[2.0], [4.0]]));
    match matmul(&m, &Tensor::zeros(3, 1)) {
        Err(Error::Dimension { left, right, .. }) => {
            assert_eq!((left, right), ((2, 2), (3, 1)));
        }
        other => panic!("expected dimension error, got {other:?}"),
    }
}

#[test]
fn matmul_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let params = [random(&mut rng, 4, 3), random(&mut rng, 3, 5)];
    let check = finite_diff_check(
        |t, v| {
            let c = t.matmul(v[0], v[1])?;
            project(t, c, 2)
        },
        &params,
        1e-5,
    )
    .unwrap();
    assert!(check.max_rel_error < 1e-6, "{check:?}");
}

#[test]
fn relu_and_leaky_examples() {
    let mut t = Tape::new();
    let x = t.leaf(Tensor::from_rows(&[[-1.0, 0.0, 2.0]]));
    let r = t.relu(x);
    assert_eq!(t.value(r).data(), &[0.0, 0.0, 2.0]);
    let y = t.leaf(Tensor::from_rows(&[[-1.0, 2.0]]));
    let l = t.leaky_relu(y, 0.2);
    assert_eq!(t.value(l).data(), &[-0.2, 2.0]);

    let mut t = Tape::new();
    let x = t.leaf(Tensor::scalar(-3.0));
    let l = t.leaky_relu(x, 0.2);
    let g = t.backward(l).unwrap();
    assert_eq!(g.get(x).unwrap().item(), 0.2);
}

#[test]
fn concat_cols_examples() {
    let mut t = Tape::new();
    let a = t.leaf(Tensor::from_rows(&[[1.0]]));
    let b = t.leaf(Tensor::from_rows(&[[2.0]]));
    let c = t.concat_cols(a, b).unwrap();
    assert_eq!(t.value(c), &Tensor::from_rows(&[[1.0, 2.0]]));

    let empty = t.leaf(Tensor::zeros(3, 0));
    let rhs = Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]);
    let bv = t.leaf(rhs.clone());
    let c = t.concat_cols(empty, bv).unwrap();
    assert_eq!(t.value(c), &rhs);

    let short = t.leaf(Tensor::zeros(2, 1));
    assert!(matches!(t.concat_cols(short, bv), Err(Error::Dimension { .. })));
}

#[test]
fn concat_cols_gradient_splits() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let params = [random(&mut rng, 3, 2), random(&mut rng, 3, 4)];
    let check = finite_diff_check(
        |t, v| {
            let c = t.concat_cols(v[0], v[1])?;
            project(t, c, 4)
        },
        &params,
        1e-5,
    )
    .unwrap();
    assert!(check.max_rel_error < 1e-6, "{check:?}");
}

#[test]
fn gather_rows_examples() {
    let mut t = Tape::new();
    let x = t.leaf(Tensor::from_rows(&[[1.0, 2.0]]));
    let g = t.gather_rows(x, Arc::from(vec![0, 0])).unwrap();
    assert_eq!(t.value(g), &Tensor::from_rows(&[[1.0, 2.0], [1.0, 2.0]]));
    let e = t.gather_rows(x, Arc::from(Vec::new())).unwrap();
    assert_eq!(t.value(e).shape(), (0, 2));

    let s = t.sum_all(g);
    let grads = t.backward(s).unwrap();
    assert_eq!(grads.get(x).unwrap().data(), &[2.0, 2.0]);

    match t.gather_rows(x, Arc::from(vec![0, 3])) {
        Err(Error::Index { index, bound, position, .. }) => {
            assert_eq!((index, bound, position), (3, 1, 1));
        }
        other => panic!("expected index error, got {other:?}"),
    }
}

#[test]
fn segment_reduce_examples() {
    for mode in [Reduce::Sum, Reduce::Mean, Reduce::Max] {
        let mut t = Tape::new();
        let x = Tensor::from_rows(&[[1.0, -2.0], [3.0, 4.0]]);
        let v = t.leaf(x.clone());
        let r = t.segment_reduce(v, Arc::from(vec![0, 1]), 2, mode).unwrap();
        assert_eq!(t.value(r), &x, "{mode:?}");
    }

    let mut t = Tape::new();
    let v = t.leaf(Tensor::from_rows(&[[2.0], [4.0]]));
    let r = t.segment_reduce(v, Arc::from(vec![0, 0]), 1, Reduce::Mean).unwrap();
    assert_eq!(t.value(r).item(), 3.0);

    let mut t = Tape::new();
    let v = t.leaf(Tensor::from_rows(&[[5.0], [5.0]]));
    let r = t.segment_reduce(v, Arc::from(vec![0, 0]), 1, Reduce::Max).unwrap();
    let grads = t.backward(r).unwrap();
    assert_eq!(grads.get(v).unwrap().data(), &[1.0, 0.0]);

    let mut t = Tape::new();
    let v = t.leaf(Tensor::zeros(0, 3));
    let r = t.segment_reduce(v, Arc::from(Vec::new()), 2, Reduce::Max).unwrap();
    assert_eq!(t.value(r), &Tensor::zeros(2, 3));
}

#[test]
fn segment_softmax_examples() {
    let mut t = Tape::new();
    let s = t.leaf(Tensor::from_rows(&[[0.0], [3f64.ln()]]));
    let a = t.segment_softmax(s, Arc::from(vec![0, 0]), 1).unwrap();
    let got = t.value(a).data();
    assert!((got[0] - 0.25).abs() < 1e-15 && (got[1] - 0.75).abs() < 1e-15);

    let s = t.leaf(Tensor::filled(4, 1, 1.7));
    let a = t.segment_softmax(s, Arc::from(vec![0, 0, 0, 1]), 2).unwrap();
    assert_eq!(t.value(a).data()[..3], [1.0 / 3.0; 3]);
    assert_eq!(t.value(a).data()[3], 1.0);
}

#[test]
fn cross_entropy_examples() {
    for c in [2usize, 5, 289] {
        let mut t = Tape::new();
        let l = t.leaf(Tensor::zeros(3, c));
        let loss = t.softmax_cross_entropy(l, &[0, 1, 1], &[true, true, false]).unwrap();
        assert!((t.value(loss).item() - (c as f64).ln()).abs() < 1e-12);
    }
    let mut prev = f64::INFINITY;
    for margin in [1.0, 5.0, 20.0, 50.0] {
        let mut t = Tape::new();
        let l = t.leaf(Tensor::from_rows(&[[margin, 0.0, 0.0]]));
        let loss = t.softmax_cross_entropy(l, &[0], &[true]).unwrap();
        let v = t.value(loss).item();
        assert!(v < prev);
        prev = v;
    }
    assert!(prev < 1e-20);

    let mut t = Tape::new();
    let l = t.leaf(Tensor::zeros(2, 3));
    assert!(matches!(
        t.softmax_cross_entropy(l, &[0, 1], &[false, false]),
        Err(Error::InvalidBatch(_))
    ));
}

#[test]
fn cross_entropy_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let params = [random(&mut rng, 3, 5)];
    let check = finite_diff_check(
        |t, v| t.softmax_cross_entropy(v[0], &[4, 0, 2], &[true, true, true]),
        &params,
        1e-5,
    )
    .unwrap();
    assert!(check.max_rel_error < 1e-6, "{check:?}");
}

#[test]
fn finite_diff_on_linear_and_constant_maps() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let params = [random(&mut rng, 2, 3)];
    let lin = finite_diff_check(|t, v| project(t, v[0], 9), &params, 1e-5).unwrap();
    assert!(lin.max_rel_error < 1e-9, "{lin:?}");

    let constant = finite_diff_check(
        |t, _| Ok(t.constant(Tensor::scalar(4.0))),
        &params,
        1e-5,
    )
    .unwrap();
    assert_eq!(constant.max_rel_error, 0.0);
}

#[test]
fn adam_first_step_moves_by_learning_rate() {
    let mut opt = AdamState::new(5e-4);
    let mut p = vec![Tensor::scalar(1.0)];
    opt.step(&mut p, &[Tensor::scalar(1.0)]).unwrap();
    assert!((p[0].item() - (1.0 - 5e-4)).abs() < 1e-9);
    assert_eq!(opt.steps(), 1);
}

/// One differentiable op applied to random inputs, reduced to a scalar.
fn op_loss(op: usize, t: &mut Tape, v: &[Var]) -> maglev::Result<Var> {
    let dst: Arc<[usize]> = Arc::from(vec![0, 2, 0, 1, 2, 2]);
    let out = match op {
        0 => t.matmul(v[0], v[1])?,
        1 => t.add(v[0], v[2])?,
        2 => t.sub(v[0], v[2])?,
        3 => t.mul(v[0], v[2])?,
        4 => t.add_row(v[0], v[3])?,
        5 => t.scale(v[0], -1.7),
        6 => t.relu(v[0]),
        7 => t.leaky_relu(v[0], 0.2),
        8 => t.concat_cols(v[0], v[2])?,
        9 => t.concat_rows(&[v[0], v[2]])?,
        10 => t.gather_rows(v[0], Arc::from(vec![3, 0, 3, 5]))?,
        11 => t.segment_reduce(v[0], dst, 3, Reduce::Sum)?,
        12 => t.segment_reduce(v[0], dst, 3, Reduce::Mean)?,
        13 => t.segment_reduce(v[0], dst, 3, Reduce::Max)?,
        14 => t.segment_softmax(v[0], dst, 3)?,
        15 => t.head_dot(v[0], v[3], 2)?,
        16 => {
            let w = t.gather_rows(v[4], Arc::from(vec![0, 1, 0, 1, 0, 1]))?;
            t.mul_heads(v[0], w, 2)?
        }
        17 => return t.softmax_cross_entropy(v[0], &[0, 3, 1, 1, 2, 0], &[true, false, true, true, true, true]),
        _ => unreachable!(),
    };
    project(t, out, 77)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn every_op_passes_gradient_check(op in 0usize..18, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = [
            random(&mut rng, 6, 4),
            random(&mut rng, 4, 3),
            random(&mut rng, 6, 4),
            random(&mut rng, 1, 4),
            random(&mut rng, 2, 2),
        ];
        let check = finite_diff_check(|t, v| op_loss(op, t, v), &params, 1e-5).unwrap();
        prop_assert!(check.max_rel_error < 1e-4, "op {} {:?}", op, check);
    }

    #[test]
    fn segment_reduce_is_permutation_invariant(seed in any::<u64>(), e in 0usize..30, n in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let msgs = random(&mut rng, e, 3);
        let dst: Vec<usize> = (0..e).map(|_| rng.random_range(0..n)).collect();
        let mut perm: Vec<usize> = (0..e).collect();
        for i in (1..e).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let pm = Tensor::from_rows(&perm.iter().map(|&p| msgs.row(p).to_vec()).collect::<Vec<_>>());
        let pm = if e == 0 { Tensor::zeros(0, 3) } else { pm };
        let pd: Vec<usize> = perm.iter().map(|&p| dst[p]).collect();
        for mode in [Reduce::Sum, Reduce::Mean, Reduce::Max] {
            let mut t = Tape::new();
            let a = t.constant(msgs.clone());
            let b = t.constant(pm.clone());
            let ra = t.segment_reduce(a, Arc::from(dst.clone()), n, mode).unwrap();
            let rb = t.segment_reduce(b, Arc::from(pd.clone()), n, mode).unwrap();
            let diff = t.value(ra).max_abs_diff(t.value(rb));
            if mode == Reduce::Max {
                prop_assert_eq!(diff, 0.0);
            } else {
                prop_assert!(diff < 1e-12);
            }
        }
    }

    #[test]
    fn segment_softmax_sums_to_one(seed in any::<u64>(), e in 1usize..30, n in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scores = random(&mut rng, e, 2).map(|x| 30.0 * x);
        let dst: Vec<usize> = (0..e).map(|_| rng.random_range(0..n)).collect();
        let mut t = Tape::new();
        let s = t.constant(scores);
        let a = t.segment_softmax(s, Arc::from(dst.clone()), n).unwrap();
        let a = t.value(a);
        let mut sums = vec![0.0; n * 2];
        for (i, &d) in dst.iter().enumerate() {
            for c in 0..2 {
                prop_assert!(a.get(i, c) > 0.0);
                sums[d * 2 + c] += a.get(i, c);
            }
        }
        for d in 0..n {
            if dst.contains(&d) {
                prop_assert!((sums[d * 2] - 1.0).abs() < 1e-12);
                prop_assert!((sums[d * 2 + 1] - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn forward_and_backward_are_deterministic(seed in any::<u64>()) {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (a, b) = (random(&mut rng, 300, 8), random(&mut rng, 8, 5));
            let mut t = Tape::new();
            let (va, vb) = (t.leaf(a), t.leaf(b));
            let c = t.matmul(va, vb).unwrap();
            let c = t.relu(c);
            let s = t.sum_all(c);
            let g = t.backward(s).unwrap();
            (t.value(c).clone(), g.get(va).unwrap().clone(), g.get(vb).unwrap().clone())
        };
        prop_assert_eq!(run(), run());
    }
}
