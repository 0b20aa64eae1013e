use proptest::prelude::*;

use super::*;
use crate::gradcheck::{max_rel_err, numeric_grad};

fn t2(rows: &[&[f64]]) -> Tensor {
    Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
}

#[test]
fn matmul_identity() {
    let tape = Tape::new();
    let a = tape.constant(t2(&[&[1.0, 2.0], &[3.0, 4.0]]));
    let i = tape.constant(t2(&[&[1.0, 0.0], &[0.0, 1.0]]));
    assert_eq!(a.matmul(i).unwrap().value(), t2(&[&[1.0, 2.0], &[3.0, 4.0]]));
}

#[test]
fn matmul_shape_error_names_op_and_shapes() {
    let tape = Tape::new();
    let a = tape.constant(Tensor::zeros(&[2, 3]));
    let b = tape.constant(Tensor::zeros(&[2, 3]));
    let err = a.matmul(b).unwrap_err();
    assert_eq!(
        err,
        TensorError::ShapeMismatch {
            op: "matmul",
            lhs: vec![2, 3],
            rhs: vec![2, 3]
        }
    );
    assert!(err.to_string().contains("[2, 3]"));
}

#[test]
fn softplus_and_relu_values() {
    let tape = Tape::new();
    let z = tape.constant(Tensor::scalar(0.0));
    assert!((z.softplus().unwrap().item() - std::f64::consts::LN_2).abs() < 1e-15);
    let x = tape.constant(Tensor::new(vec![2], vec![-3.0, 3.0]).unwrap());
    assert_eq!(x.relu().unwrap().value().data(), &[0.0, 3.0]);
    // large arguments stay finite
    let big = tape.constant(Tensor::new(vec![2], vec![800.0, -800.0]).unwrap());
    let sp = big.softplus().unwrap().value();
    assert_eq!(sp.data()[0], 800.0);
    assert!(sp.data()[1] >= 0.0 && sp.data()[1] < 1e-300);
}

#[test]
fn square_gradient() {
    let tape = Tape::new();
    let x = tape.param(Tensor::scalar(3.0));
    let loss = x.mul(x).unwrap();
    tape.backward(loss).unwrap();
    assert_eq!(tape.grad(x).unwrap().item(), 6.0);
}

#[test]
fn sum_matmul_gradient_is_ones_times_bt() {
    let a0 = t2(&[&[0.3, -1.2, 0.5], &[2.0, 0.1, -0.7]]);
    let b0 = t2(&[&[1.0, 0.5], &[-0.4, 2.2], &[0.9, -1.1]]);
    let tape = Tape::new();
    let a = tape.param(a0.clone());
    let b = tape.constant(b0.clone());
    tape.backward(a.matmul(b).unwrap().sum().unwrap()).unwrap();
    let analytic = tape.grad(a).unwrap();
    let numeric = numeric_grad(
        |x| {
            let t = Tape::new();
            t.constant(x.clone())
                .matmul(t.constant(b0.clone()))
                .unwrap()
                .sum()
                .unwrap()
                .item()
        },
        &a0,
        1e-6,
    );
    assert!(max_rel_err(&analytic, &numeric, 1e-8) < 1e-6);
    // ones · Bᵀ: row sums of B in each column
    for i in 0..2 {
        for k in 0..3 {
            let expect: f64 = (0..2).map(|j| b0.at2(k, j)).sum();
            assert!((analytic.at2(i, k) - expect).abs() < 1e-12);
        }
    }
}

#[test]
fn nll_gradient_on_uniform_logits() {
    let tape = Tape::new();
    let logits = tape.param(Tensor::new(vec![1, 3], vec![0.0; 3]).unwrap());
    let nll = logits.log_softmax().unwrap().pick(&[0]).unwrap().neg().unwrap().sum().unwrap();
    tape.backward(nll).unwrap();
    let g = tape.grad(logits).unwrap();
    let expect = [-2.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0];
    for (a, b) in g.data().iter().zip(expect) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn backward_twice_is_an_error_until_reset() {
    let tape = Tape::new();
    let x = tape.param(Tensor::scalar(2.0));
    let y = x.square().unwrap();
    tape.backward(y).unwrap();
    assert_eq!(tape.backward(y), Err(TensorError::BackwardTwice));
    tape.reset_grads();
    tape.backward(y).unwrap();
    assert_eq!(tape.grad(x).unwrap().item(), 4.0);
}

#[test]
fn backward_rejects_non_scalar_and_detached_losses() {
    let tape = Tape::new();
    let x = tape.param(Tensor::zeros(&[2]));
    assert_eq!(tape.backward(x.relu().unwrap()), Err(TensorError::NonScalarLoss(vec![2])));
    let c = tape.constant(Tensor::scalar(1.0));
    assert_eq!(tape.backward(c.square().unwrap()), Err(TensorError::DetachedLoss));
}

#[test]
fn unreached_leaf_gets_zero_gradient() {
    let tape = Tape::new();
    let x = tape.param(Tensor::scalar(2.0));
    let unused = tape.param(Tensor::zeros(&[3]));
    tape.backward(x.square().unwrap()).unwrap();
    assert_eq!(tape.grad(unused).unwrap(), Tensor::zeros(&[3]));
}

#[test]
fn non_finite_output_is_an_error() {
    let tape = Tape::new();
    let z = tape.constant(Tensor::scalar(0.0));
    assert_eq!(z.log().unwrap_err(), TensorError::NonFinite { op: "log" });
    let big = tape.constant(Tensor::scalar(1000.0));
    assert!(big.exp().is_err());
}

#[test]
fn gradients_accumulate_over_reuse() {
    let tape = Tape::new();
    let x = tape.param(Tensor::scalar(1.5));
    // x + x + x·x
    let y = x.add(x).unwrap().add(x.mul(x).unwrap()).unwrap();
    tape.backward(y).unwrap();
    assert!((tape.grad(x).unwrap().item() - 5.0).abs() < 1e-15);
}

#[test]
fn broadcast_bias_add() {
    let tape = Tape::new();
    let x = tape.constant(Tensor::zeros(&[3, 2]));
    let b = tape.param(Tensor::new(vec![2], vec![1.0, -1.0]).unwrap());
    let y = x.add(b).unwrap();
    assert_eq!(y.value().data(), &[1.0, -1.0, 1.0, -1.0, 1.0, -1.0]);
    tape.backward(y.sum().unwrap()).unwrap();
    assert_eq!(tape.grad(b).unwrap().data(), &[3.0, 3.0]);
    let bad = tape.constant(Tensor::zeros(&[3]));
    assert!(x.add(bad).is_err());
}

#[test]
fn max_last_ties_and_exclusion() {
    let tape = Tape::new();
    let x = tape.constant(t2(&[&[2.0, 2.0, 1.0], &[0.0, 5.0, 5.0]]));
    let (_, arg) = x.max_last(None).unwrap();
    assert_eq!(arg, vec![0, 1]);
    let (v, arg) = x.max_last(Some(&[0, 1])).unwrap();
    assert_eq!(arg, vec![1, 2]);
    assert_eq!(v.value().data(), &[2.0, 5.0]);
}

#[test]
fn concat_narrow_roundtrip() {
    let tape = Tape::new();
    let a = tape.param(t2(&[&[1.0, 2.0]]));
    let b = tape.param(t2(&[&[3.0, 4.0], &[5.0, 6.0]]));
    let c = tape.concat(&[a, b], 0).unwrap();
    assert_eq!(c.shape(), vec![3, 2]);
    let back = c.narrow(0, 1, 2).unwrap();
    assert_eq!(back.value(), b.value());
    let cols = tape.concat(&[b, b], 1).unwrap();
    assert_eq!(cols.value().data(), &[3.0, 4.0, 3.0, 4.0, 5.0, 6.0, 5.0, 6.0]);
    tape.backward(cols.narrow(1, 1, 2).unwrap().sum().unwrap()).unwrap();
    assert_eq!(tape.grad(b).unwrap().data(), &[1.0, 1.0, 1.0, 1.0]);
}

#[test]
fn forward_is_bitwise_pure() {
    let x0 = Tensor::from_fn(&[4, 5], |i| (i as f64 * 0.37).sin());
    let run = || {
        let t = Tape::new();
        let x = t.constant(x0.clone());
        x.matmul_t(x)
            .unwrap()
            .softplus()
            .unwrap()
            .log_softmax()
            .unwrap()
            .value()
    };
    assert_eq!(run().data(), run().data());
}

/// Applies one named primitive to `x`, reduced to a scalar with a fixed
/// random weighting so every output element contributes.
fn apply<'a>(op: usize, t: &'a Tape, x: Var<'a>, aux: &Tensor) -> Var<'a> {
    let a = t.constant(aux.clone());
    let y = match op {
        0 => x.matmul_t(a).unwrap(),
        1 => a.matmul(x.reshape(&[3, 4]).unwrap()).unwrap(),
        2 => x.t_matmul(x).unwrap(),
        3 => x.add(a).unwrap(),
        4 => x.sub(a).unwrap(),
        5 => x.mul(a).unwrap(),
        6 => x.mul_scalar(-1.7).unwrap().add_scalar(0.3).unwrap(),
        7 => x.relu().unwrap(),
        8 => x.softplus().unwrap(),
        9 => x.square().unwrap().add_scalar(0.5).unwrap().sqrt().unwrap(),
        10 => x.exp().unwrap(),
        11 => x.square().unwrap().add_scalar(0.1).unwrap().log().unwrap(),
        12 => x.sum_axis(0).unwrap(),
        13 => x.sum_axis(1).unwrap(),
        14 => t.concat(&[x, a, x], 0).unwrap(),
        15 => x.narrow(1, 1, 2).unwrap(),
        16 => x.gather(&[3, 0, 0, 2, 1]).unwrap(),
        17 => x.log_softmax().unwrap(),
        18 => x.pick(&[1, 3, 0]).unwrap(),
        19 => x.max_last(Some(&[0, 1, 2])).unwrap().0,
        20 => x.scale_rows(&[0.5, -2.0, 3.0]).unwrap(),
        21 => x.mul(a.narrow(0, 0, 1).unwrap().reshape(&[4]).unwrap()).unwrap(),
        22 => x.mean().unwrap(),
        _ => unreachable!(),
    };
    let w = Tensor::from_fn(&y.shape(), |i| ((i * 7 + 3) % 11) as f64 / 11.0 - 0.4);
    y.mul(t.constant(w)).unwrap().sum().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn every_primitive_matches_finite_differences(
        op in 0usize..23,
        xs in proptest::collection::vec(-2.0f64..2.0, 12),
        aux in proptest::collection::vec(-2.0f64..2.0, 12),
    ) {
        // keep relu / max away from their kinks
        let xs: Vec<f64> = xs.iter().enumerate()
            .map(|(i, v)| if v.abs() < 0.05 { 0.05 + i as f64 * 0.01 } else { *v })
            .map(|v| v + (v * 1e3).fract() * 1e-3)
            .collect();
        let x0 = Tensor::new(vec![3, 4], xs).unwrap();
        let aux = if op == 1 {
            Tensor::new(vec![4, 3], aux).unwrap()
        } else {
            Tensor::new(vec![3, 4], aux).unwrap()
        };
        let tape = Tape::new();
        let x = tape.param(x0.clone());
        tape.backward(apply(op, &tape, x, &aux)).unwrap();
        let analytic = tape.grad(x).unwrap();
        let numeric = numeric_grad(|p| {
            let t = Tape::new();
            let v = t.constant(p.clone());
            apply(op, &t, v, &aux).item()
        }, &x0, 1e-5);
        let err = max_rel_err(&analytic, &numeric, 1e-3);
        prop_assert!(err < 1e-4, "op {} rel err {}", op, err);
    }

    #[test]
    fn gradient_of_sum_is_sum_of_gradients(
        xs in proptest::collection::vec(-1.0f64..1.0, 6),
    ) {
        let x0 = Tensor::new(vec![2, 3], xs).unwrap();
        let grad_of = |which: u8| {
            let t = Tape::new();
            let x = t.param(x0.clone());
            let f = x.softplus().unwrap().sum().unwrap();
            let g = x.square().unwrap().log_softmax().unwrap().sum().unwrap();
            let loss = match which {
                0 => f,
                1 => g,
                _ => f.add(g).unwrap(),
            };
            t.backward(loss).unwrap();
            t.grad(x).unwrap()
        };
        let (gf, gg, gsum) = (grad_of(0), grad_of(1), grad_of(2));
        for i in 0..6 {
            prop_assert!((gf.data()[i] + gg.data()[i] - gsum.data()[i]).abs() < 1e-12);
        }
    }
}
