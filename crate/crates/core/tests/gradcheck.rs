//! Finite-difference validation of every differentiable tape operation.
//!
//! Each case builds a scalar-valued graph from one or more inputs, runs the
//! reverse sweep, and compares every input gradient entry against a central
//! difference of the rebuilt forward value.

use dmatrack_core::autograd::{NodeId, Tape, Tensor};
use rand::Rng;

const FD_STEP: f64 = 1e-6;
const REL_TOL: f64 = 1e-4;
const ABS_TOL: f64 = 1e-7;

struct Input {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn input(shape: &[usize], data: Vec<f64>) -> Input {
    assert_eq!(shape.iter().product::<usize>(), data.len());
    Input { shape: shape.to_vec(), data }
}

fn random_input<R: Rng>(shape: &[usize], rng: &mut R) -> Input {
    let data = (0..shape.iter().product())
        .map(|_| rng.gen::<f64>() * 4.0 - 2.0)
        .collect();
    input(shape, data)
}

/// Evaluate the graph on the given input values and return the scalar output.
fn evaluate<F>(inputs: &[Input], build: &F) -> f64
where
    F: Fn(&mut Tape, &[NodeId]) -> NodeId,
{
    let mut tape = Tape::new();
    let nodes: Vec<NodeId> = inputs
        .iter()
        .map(|inp| tape.leaf_from(inp.shape.clone(), inp.data.clone()).unwrap())
        .collect();
    let out = build(&mut tape, &nodes);
    assert_eq!(tape.value(out).len(), 1, "gradcheck output must be scalar");
    tape.value(out)[0]
}

fn check_grads<F>(name: &str, inputs: Vec<Input>, build: F)
where
    F: Fn(&mut Tape, &[NodeId]) -> NodeId,
{
    // Analytic gradients: mark every input as a parameter leaf.
    let mut tape = Tape::new();
    let nodes: Vec<NodeId> = inputs
        .iter()
        .map(|inp| {
            let t = Tensor::param(inp.shape.clone(), inp.data.clone()).unwrap();
            tape.leaf(&t)
        })
        .collect();
    let out = build(&mut tape, &nodes);
    tape.backward(out).unwrap();
    let analytic: Vec<Vec<f64>> = nodes.iter().map(|&n| tape.grad(n).to_vec()).collect();

    for (which, inp) in inputs.iter().enumerate() {
        for k in 0..inp.data.len() {
            let mut plus: Vec<Input> =
                inputs.iter().map(|i| input(&i.shape, i.data.clone())).collect();
            plus[which].data[k] += FD_STEP;
            let mut minus: Vec<Input> =
                inputs.iter().map(|i| input(&i.shape, i.data.clone())).collect();
            minus[which].data[k] -= FD_STEP;
            let fd = (evaluate(&plus, &build) - evaluate(&minus, &build)) / (2.0 * FD_STEP);
            let got = analytic[which][k];
            let err = (got - fd).abs();
            let tol = ABS_TOL + REL_TOL * fd.abs().max(got.abs());
            assert!(
                err <= tol,
                "{name}: input {which} entry {k}: analytic {got}, finite difference {fd}"
            );
        }
    }
}

fn rng() -> impl Rng {
    dmatrack_core::rng::rng_from_seed(0x5eed)
}

#[test]
fn elementwise_binary_ops() {
    let mut r = rng();
    check_grads(
        "add",
        vec![random_input(&[2, 3], &mut r), random_input(&[2, 3], &mut r)],
        |t, n| {
            let s = t.add(n[0], n[1]).unwrap();
            t.sum(s)
        },
    );
    check_grads(
        "sub",
        vec![random_input(&[2, 3], &mut r), random_input(&[2, 3], &mut r)],
        |t, n| {
            let s = t.sub(n[0], n[1]).unwrap();
            let sq = t.square(s);
            t.sum(sq)
        },
    );
    check_grads(
        "mul",
        vec![random_input(&[3, 2], &mut r), random_input(&[3, 2], &mut r)],
        |t, n| {
            let s = t.mul(n[0], n[1]).unwrap();
            t.sum(s)
        },
    );
}

#[test]
fn scalar_and_broadcast_ops() {
    let mut r = rng();
    check_grads("add_scalar", vec![random_input(&[2, 2], &mut r)], |t, n| {
        let s = t.add_scalar(n[0], 1.7);
        let sq = t.square(s);
        t.sum(sq)
    });
    check_grads("scale", vec![random_input(&[2, 2], &mut r)], |t, n| {
        let s = t.scale(n[0], -0.6);
        let sq = t.square(s);
        t.sum(sq)
    });
    check_grads(
        "scale_by",
        vec![random_input(&[2, 3], &mut r), random_input(&[1], &mut r)],
        |t, n| {
            let s = t.scale_by(n[0], n[1]).unwrap();
            let sq = t.square(s);
            t.sum(sq)
        },
    );
    check_grads(
        "add_row",
        vec![random_input(&[3, 4], &mut r), random_input(&[4], &mut r)],
        |t, n| {
            let s = t.add_row(n[0], n[1]).unwrap();
            let sq = t.square(s);
            t.sum(sq)
        },
    );
    check_grads(
        "mul_row",
        vec![random_input(&[3, 4], &mut r), random_input(&[4], &mut r)],
        |t, n| {
            let s = t.mul_row(n[0], n[1]).unwrap();
            let sq = t.square(s);
            t.sum(sq)
        },
    );
}

#[test]
fn matrix_ops() {
    let mut r = rng();
    check_grads(
        "matmul",
        vec![random_input(&[2, 3], &mut r), random_input(&[3, 4], &mut r)],
        |t, n| {
            let s = t.matmul(n[0], n[1]).unwrap();
            let sq = t.square(s);
            t.sum(sq)
        },
    );
    check_grads("transpose", vec![random_input(&[2, 4], &mut r)], |t, n| {
        let s = t.transpose(n[0]).unwrap();
        let prod = t.matmul(n[0], s).unwrap();
        t.sum(prod)
    });
    check_grads("reshape", vec![random_input(&[2, 6], &mut r)], |t, n| {
        let s = t.reshape(n[0], vec![3, 4]).unwrap();
        let sq = t.square(s);
        t.sum(sq)
    });
}

#[test]
fn slicing_and_concatenation() {
    let mut r = rng();
    check_grads("slice_rows", vec![random_input(&[4, 3], &mut r)], |t, n| {
        let s = t.slice_rows(n[0], 1, 3).unwrap();
        let sq = t.square(s);
        t.sum(sq)
    });
    check_grads("slice_cols", vec![random_input(&[3, 5], &mut r)], |t, n| {
        let s = t.slice_cols(n[0], 2, 4).unwrap();
        let sq = t.square(s);
        t.sum(sq)
    });
    check_grads(
        "concat_rows",
        vec![random_input(&[2, 3], &mut r), random_input(&[1, 3], &mut r)],
        |t, n| {
            let s = t.concat_rows(&[n[0], n[1]]).unwrap();
            let sq = t.square(s);
            t.sum(sq)
        },
    );
    check_grads(
        "concat_cols",
        vec![random_input(&[2, 2], &mut r), random_input(&[2, 3], &mut r)],
        |t, n| {
            let s = t.concat_cols(&[n[0], n[1]]).unwrap();
            let sq = t.square(s);
            t.sum(sq)
        },
    );
}

#[test]
fn normalization_ops() {
    let mut r = rng();
    check_grads("softmax", vec![random_input(&[3, 4], &mut r)], |t, n| {
        let s = t.softmax(n[0]).unwrap();
        let sq = t.square(s);
        t.sum(sq)
    });
    check_grads("layer_norm", vec![random_input(&[3, 6], &mut r)], |t, n| {
        let s = t.layer_norm(n[0]).unwrap();
        let sq = t.square(s);
        t.sum(sq)
    });
    // Softmax composed downstream of other nodes.
    check_grads(
        "softmax_of_product",
        vec![random_input(&[2, 3], &mut r), random_input(&[3, 3], &mut r)],
        |t, n| {
            let prod = t.matmul(n[0], n[1]).unwrap();
            let s = t.softmax(prod).unwrap();
            let sq = t.square(s);
            t.sum(sq)
        },
    );
}

#[test]
fn pointwise_nonlinearities() {
    let mut r = rng();
    check_grads("gelu", vec![random_input(&[2, 5], &mut r)], |t, n| {
        let s = t.gelu(n[0]);
        t.sum(s)
    });
    check_grads("sigmoid", vec![random_input(&[2, 5], &mut r)], |t, n| {
        let s = t.sigmoid(n[0]);
        t.sum(s)
    });
    // ReLU away from the kink.
    let data: Vec<f64> = (0..6).map(|k| if k % 2 == 0 { 0.5 + k as f64 } else { -0.5 - k as f64 }).collect();
    check_grads("relu", vec![input(&[2, 3], data)], |t, n| {
        let s = t.relu(n[0]);
        t.sum(s)
    });
    check_grads("square", vec![random_input(&[3, 3], &mut r)], |t, n| {
        let s = t.square(n[0]);
        t.sum(s)
    });
    // Positive-domain ops.
    let pos: Vec<f64> = (0..6).map(|k| 0.3 + 0.4 * k as f64).collect();
    check_grads("sqrt", vec![input(&[2, 3], pos.clone())], |t, n| {
        let s = t.sqrt(n[0]).unwrap();
        t.sum(s)
    });
    check_grads("pow_scalar", vec![input(&[2, 3], pos)], |t, n| {
        let s = t.pow_scalar(n[0], 1.7).unwrap();
        t.sum(s)
    });
}

#[test]
fn reductions_and_composition() {
    let mut r = rng();
    check_grads("mean", vec![random_input(&[3, 4], &mut r)], |t, n| {
        let s = t.square(n[0]);
        t.mean(s)
    });
    // A miniature end-to-end network: linear, gelu, layer norm, softmax
    // attention-like mixing, Euclidean head.
    check_grads(
        "composite_network",
        vec![
            random_input(&[3, 4], &mut r),
            random_input(&[4, 4], &mut r),
            random_input(&[4], &mut r),
        ],
        |t, n| {
            let h = t.matmul(n[0], n[1]).unwrap();
            let h = t.add_row(h, n[2]).unwrap();
            let h = t.gelu(h);
            let h = t.layer_norm(h).unwrap();
            let ht = t.transpose(h).unwrap();
            let scores = t.matmul(h, ht).unwrap();
            let attn = t.softmax(scores).unwrap();
            let mixed = t.matmul(attn, h).unwrap();
            let sq = t.square(mixed);
            let ssq = t.sum(sq);
            t.sqrt(ssq).unwrap()
        },
    );
}

#[test]
fn fan_out_reuse() {
    let mut r = rng();
    // The same node feeds three consumers; gradients must accumulate.
    check_grads("fan_out", vec![random_input(&[2, 2], &mut r)], |t, n| {
        let a = t.square(n[0]);
        let b = t.scale(n[0], 3.0);
        let c = t.sigmoid(n[0]);
        let ab = t.add(a, b).unwrap();
        let abc = t.add(ab, c).unwrap();
        t.sum(abc)
    });
}
