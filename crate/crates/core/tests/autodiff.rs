use proptest::prelude::*;

use tmc_core::autodiff::{Graph, Var};

const WIDTH: usize = 3;

/// One instruction of a random program: an opcode and two operand picks.
#[derive(Debug, Clone)]
struct Instr {
    op: u8,
    a: usize,
    b: usize,
    c: f64,
}

fn instr() -> impl Strategy<Value = Instr> {
    (0u8..17, any::<usize>(), any::<usize>(), -2.0..2.0f64).prop_map(|(op, a, b, c)| Instr { op, a, b, c })
}

/// Replays the program on fresh leaves. Every produced node is squashed by
/// `tanh` so values stay bounded however deep the chain goes.
fn replay(leaves: &[Vec<f64>], matrix: &[f64], prog: &[Instr]) -> (Graph, Vec<Var>, Var, Var) {
    let mut g = Graph::new();
    let inputs: Vec<Var> = leaves.iter().map(|v| g.leaf(v.clone())).collect();
    let m = g.leaf(matrix.to_vec());
    let mut nodes = inputs.clone();
    for ins in prog {
        let a = nodes[ins.a % nodes.len()];
        let b = nodes[ins.b % nodes.len()];
        let raw = match ins.op {
            0 => g.add(a, b).unwrap(),
            1 => g.sub(a, b).unwrap(),
            2 => g.mul(a, b).unwrap(),
            3 => {
                let d = g.softplus(b);
                let d = g.shift(d, 0.5);
                g.div(a, d).unwrap()
            }
            4 => g.neg(a),
            5 => g.scale(a, ins.c),
            6 => g.shift(a, ins.c),
            7 => g.exp(a),
            8 => {
                let s = g.softplus(a);
                let s = g.shift(s, 0.1);
                g.log(s).unwrap()
            }
            9 => g.sin(a),
            10 => g.sigmoid(a),
            11 => g.softplus(a),
            12 => g.square(a),
            13 => {
                let s = g.softplus(a);
                let s = g.shift(s, 0.1);
                g.sqrt(s).unwrap()
            }
            14 => g.softmax(a),
            15 => {
                let both = g.concat(&[a, b]);
                g.slice(both, 1 + ins.b % WIDTH, WIDTH).unwrap()
            }
            _ => g.affine(m, a, b, WIDTH, WIDTH).unwrap(),
        };
        nodes.push(g.tanh(raw));
    }
    let all = g.concat(&nodes[inputs.len()..]);
    let d = g.dot(all, all).unwrap();
    let s = g.sum(all);
    let root = g.add(d, s).unwrap();
    (g, inputs, m, root)
}

fn close(a: f64, b: f64, rel: f64, abs: f64) -> bool {
    (a - b).abs() <= (rel * a.abs().max(b.abs())).max(abs)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_graph_adjoints_match_central_differences(
        leaves in prop::collection::vec(prop::collection::vec(-1.5..1.5f64, WIDTH), 1..4),
        matrix in prop::collection::vec(-1.0..1.0f64, WIDTH * WIDTH),
        prog in prop::collection::vec(instr(), 1..45),
    ) {
        let (g, inputs, m, root) = replay(&leaves, &matrix, &prog);
        prop_assert!(g.len() <= 200);
        let grads = g.backward(root).unwrap();
        let value = |leaves: &[Vec<f64>], matrix: &[f64]| {
            let (g, _, _, root) = replay(leaves, matrix, &prog);
            g.scalar(root)
        };
        let h = 1e-5;
        for (i, v) in inputs.iter().enumerate() {
            for k in 0..WIDTH {
                let mut up = leaves.clone();
                up[i][k] += h;
                let mut down = leaves.clone();
                down[i][k] -= h;
                let fd = (value(&up, &matrix) - value(&down, &matrix)) / (2.0 * h);
                let an = grads.get(*v)[k];
                prop_assert!(close(an, fd, 1e-4, 1e-7), "leaf {i}[{k}]: {an} vs {fd}");
            }
        }
        for k in 0..matrix.len() {
            let mut up = matrix.clone();
            up[k] += h;
            let mut down = matrix.clone();
            down[k] -= h;
            let fd = (value(&leaves, &up) - value(&leaves, &down)) / (2.0 * h);
            let an = grads.get(m)[k];
            prop_assert!(close(an, fd, 1e-4, 1e-7), "matrix[{k}]: {an} vs {fd}");
        }
    }

    #[test]
    fn forward_values_depend_only_on_inputs(
        leaves in prop::collection::vec(prop::collection::vec(-1.5..1.5f64, WIDTH), 1..4),
        matrix in prop::collection::vec(-1.0..1.0f64, WIDTH * WIDTH),
        prog in prop::collection::vec(instr(), 1..40),
    ) {
        let (g1, _, _, r1) = replay(&leaves, &matrix, &prog);
        let (g2, _, _, r2) = replay(&leaves, &matrix, &prog);
        prop_assert_eq!(g1.scalar(r1).to_bits(), g2.scalar(r2).to_bits());
    }

    #[test]
    fn repeated_backward_is_identical(
        leaves in prop::collection::vec(prop::collection::vec(-1.5..1.5f64, WIDTH), 1..4),
        matrix in prop::collection::vec(-1.0..1.0f64, WIDTH * WIDTH),
        prog in prop::collection::vec(instr(), 1..40),
    ) {
        let (g, inputs, m, root) = replay(&leaves, &matrix, &prog);
        let first = g.backward(root).unwrap();
        let second = g.backward(root).unwrap();
        for v in inputs.iter().chain([&m]) {
            prop_assert_eq!(first.get(*v), second.get(*v));
        }
    }
}

#[test]
fn piecewise_ops_away_from_kinks() {
    let x = [0.7, -0.4, 1.3, -2.0];
    let mut g = Graph::new();
    let v = g.leaf(x.to_vec());
    let r = g.relu(v);
    let c = g.clamp_min(v, -1.0);
    let both = g.concat(&[r, c]);
    let sq = g.square(both);
    let root = g.sum(sq);
    let grads = g.backward(root).unwrap();
    let expect: Vec<f64> = x
        .iter()
        .map(|&a| {
            let relu = if a > 0.0 { 2.0 * a } else { 0.0 };
            let clamp = if a > -1.0 { 2.0 * a } else { 0.0 };
            relu + clamp
        })
        .collect();
    assert_eq!(grads.get(v), expect.as_slice());
}
