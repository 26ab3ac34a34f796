//! Tape-based reverse-mode automatic differentiation over real vectors.
//!
//! Every forward pass records its operations on a fresh [`Graph`]. Nodes hold
//! dynamically sized vectors (a scalar is a vector of length one) and refer
//! only to nodes created before them, so the tape is topologically ordered by
//! construction and [`Graph::backward`] is a single reverse sweep.
//!
//! ```
//! use tmc_core::autodiff::Graph;
//!
//! let mut g = Graph::new();
//! let x = g.leaf(vec![3.0]);
//! let y = g.mul(x, x).unwrap();
//! let grads = g.backward(y).unwrap();
//! assert_eq!(grads.get(x), &[6.0]);
//! ```

use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Primitive recorded on the tape. Operands always precede the node.
#[derive(Debug, Clone)]
pub enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Neg(Var),
    /// Multiplication by a constant.
    Scale(Var, f64),
    /// Addition of a constant to every component.
    Shift(Var),
    /// Row-major `rows x cols` matrix times vector.
    MatVec { m: Var, v: Var, rows: usize, cols: usize },
    /// `m * v + b`, fused for the dense layers.
    Affine { m: Var, v: Var, b: Var, rows: usize, cols: usize },
    Dot(Var, Var),
    Concat(Vec<Var>),
    Slice { v: Var, start: usize },
    Sum(Var),
    Exp(Var),
    Log(Var),
    Sin(Var),
    Tanh(Var),
    Relu(Var),
    Sigmoid(Var),
    Softplus(Var),
    Square(Var),
    Sqrt(Var),
    Softmax(Var),
    /// Componentwise `max(v, floor)`.
    ClampMin(Var, f64),
}

#[derive(Debug, Clone)]
struct Node {
    value: Vec<f64>,
    op: Op,
}

/// Append-only computation tape.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Adjoints produced by one backward sweep.
#[derive(Debug, Clone)]
pub struct Gradients {
    adjoints: Vec<Vec<f64>>,
    shapes: Vec<usize>,
}

impl Gradients {
    /// Adjoint of `v`. Leaves the root does not depend on report zeros;
    /// use [`Gradients::to_vec`] for unreached interior nodes.
    pub fn get(&self, v: Var) -> &[f64] {
        &self.adjoints[v.0]
    }

    /// Owned adjoint with the node's full length.
    pub fn to_vec(&self, v: Var) -> Vec<f64> {
        let a = &self.adjoints[v.0];
        if a.is_empty() {
            vec![0.0; self.shapes[v.0]]
        } else {
            a.clone()
        }
    }
}

fn shape_err(op: &'static str, left: usize, right: usize) -> Error {
    Error::Shape { op, left, right }
}

/// Numerically safe `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    (-x.abs()).exp().ln_1p() + x.max(0.0)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            nodes: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    /// Value of a length-one node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn dim(&self, v: Var) -> usize {
        self.nodes[v.0].value.len()
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Input or parameter node. Constants are leaves whose adjoint is ignored.
    pub fn leaf(&mut self, value: Vec<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn constant(&mut self, value: Vec<f64>) -> Var {
        self.leaf(value)
    }

    fn same_len(&self, op: &'static str, a: Var, b: Var) -> Result<usize> {
        let (la, lb) = (self.dim(a), self.dim(b));
        if la != lb {
            return Err(shape_err(op, la, lb));
        }
        Ok(la)
    }

    fn zip(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, tag: Op) -> Result<Var> {
        self.same_len(op, a, b)?;
        let value = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(&x, &y)| f(x, y))
            .collect();
        Ok(self.push(value, tag))
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, tag: Op) -> Var {
        let value = self.nodes[a.0].value.iter().map(|&x| f(x)).collect();
        self.push(value, tag)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_len("div", a, b)?;
        if self.nodes[b.0].value.iter().any(|&x| x == 0.0) {
            return Err(Error::Domain { op: "div", value: 0.0 });
        }
        self.zip("div", a, b, |x, y| x / y, Op::Div(a, b))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.map(a, |x| -x, Op::Neg(a))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.map(a, |x| c * x, Op::Scale(a, c))
    }

    pub fn shift(&mut self, a: Var, c: f64) -> Var {
        self.map(a, |x| x + c, Op::Shift(a))
    }

    pub fn matvec(&mut self, m: Var, v: Var, rows: usize, cols: usize) -> Result<Var> {
        if self.dim(m) != rows * cols {
            return Err(shape_err("matvec", self.dim(m), rows * cols));
        }
        if self.dim(v) != cols {
            return Err(shape_err("matvec", cols, self.dim(v)));
        }
        let mv = &self.nodes[m.0].value;
        let vv = &self.nodes[v.0].value;
        let value = (0..rows)
            .map(|r| dot(&mv[r * cols..(r + 1) * cols], vv))
            .collect();
        Ok(self.push(value, Op::MatVec { m, v, rows, cols }))
    }

    pub fn affine(&mut self, m: Var, v: Var, b: Var, rows: usize, cols: usize) -> Result<Var> {
        if self.dim(m) != rows * cols {
            return Err(shape_err("affine", self.dim(m), rows * cols));
        }
        if self.dim(v) != cols {
            return Err(shape_err("affine", cols, self.dim(v)));
        }
        if self.dim(b) != rows {
            return Err(shape_err("affine", rows, self.dim(b)));
        }
        let mv = &self.nodes[m.0].value;
        let vv = &self.nodes[v.0].value;
        let bv = &self.nodes[b.0].value;
        let value = (0..rows)
            .map(|r| dot(&mv[r * cols..(r + 1) * cols], vv) + bv[r])
            .collect();
        Ok(self.push(value, Op::Affine { m, v, b, rows, cols }))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_len("dot", a, b)?;
        let value = dot(&self.nodes[a.0].value, &self.nodes[b.0].value);
        Ok(self.push(vec![value], Op::Dot(a, b)))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let mut value = Vec::with_capacity(parts.iter().map(|&p| self.dim(p)).sum());
        for &p in parts {
            value.extend_from_slice(&self.nodes[p.0].value);
        }
        self.push(value, Op::Concat(parts.to_vec()))
    }

    pub fn slice(&mut self, v: Var, start: usize, len: usize) -> Result<Var> {
        if start + len > self.dim(v) {
            return Err(shape_err("slice", start + len, self.dim(v)));
        }
        let value = self.nodes[v.0].value[start..start + len].to_vec();
        Ok(self.push(value, Op::Slice { v, start }))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].value.iter().sum();
        self.push(vec![s], Op::Sum(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.map(a, f64::exp, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        if let Some(&bad) = self.nodes[a.0].value.iter().find(|&&x| !(x > 0.0)) {
            return Err(Error::Domain { op: "log", value: bad });
        }
        Ok(self.map(a, f64::ln, Op::Log(a)))
    }

    pub fn sin(&mut self, a: Var) -> Var {
        self.map(a, f64::sin, Op::Sin(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, f64::tanh, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.map(a, softplus, Op::Softplus(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.map(a, |x| x * x, Op::Square(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        if let Some(&bad) = self.nodes[a.0].value.iter().find(|&&x| !(x > 0.0)) {
            return Err(Error::Domain { op: "sqrt", value: bad });
        }
        Ok(self.map(a, f64::sqrt, Op::Sqrt(a)))
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let value = softmax(&self.nodes[a.0].value);
        self.push(value, Op::Softmax(a))
    }

    pub fn clamp_min(&mut self, a: Var, floor: f64) -> Var {
        self.map(a, |x| x.max(floor), Op::ClampMin(a, floor))
    }

    /// Reverse sweep from a scalar root. The tape is left untouched, so
    /// calling this twice yields identical adjoints.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        if self.dim(root) != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar root, got length {}",
                self.dim(root)
            )));
        }
        let n = root.0 + 1;
        let mut adj: Vec<Vec<f64>> = vec![Vec::new(); self.nodes.len()];
        adj[root.0] = vec![1.0];

        for i in (0..n).rev() {
            if adj[i].is_empty() {
                continue;
            }
            let g = std::mem::take(&mut adj[i]);
            let node = &self.nodes[i];
            self.propagate(node, &g, &mut adj);
            adj[i] = g;
        }
        for (slot, node) in adj.iter_mut().zip(&self.nodes) {
            if slot.is_empty() && matches!(node.op, Op::Leaf) {
                *slot = vec![0.0; node.value.len()];
            }
        }
        Ok(Gradients {
            adjoints: adj,
            shapes: self.nodes.iter().map(|n| n.value.len()).collect(),
        })
    }

    fn propagate(&self, node: &Node, g: &[f64], adj: &mut [Vec<f64>]) {
        let val = |v: Var| -> &[f64] { &self.nodes[v.0].value };
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(adj, *a, val(*a).len(), |k| g[k]);
                acc(adj, *b, val(*b).len(), |k| g[k]);
            }
            Op::Sub(a, b) => {
                acc(adj, *a, g.len(), |k| g[k]);
                acc(adj, *b, g.len(), |k| -g[k]);
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                acc(adj, *a, g.len(), |k| g[k] * bv[k]);
                acc(adj, *b, g.len(), |k| g[k] * av[k]);
            }
            Op::Div(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                acc(adj, *a, g.len(), |k| g[k] / bv[k]);
                acc(adj, *b, g.len(), |k| -g[k] * av[k] / (bv[k] * bv[k]));
            }
            Op::Neg(a) => acc(adj, *a, g.len(), |k| -g[k]),
            Op::Scale(a, c) => acc(adj, *a, g.len(), |k| c * g[k]),
            Op::Shift(a) => acc(adj, *a, g.len(), |k| g[k]),
            Op::MatVec { m, v, rows, cols } => {
                matvec_backward(adj, g, *m, *v, val(*m), val(*v), *rows, *cols);
            }
            Op::Affine { m, v, b, rows, cols } => {
                matvec_backward(adj, g, *m, *v, val(*m), val(*v), *rows, *cols);
                acc(adj, *b, *rows, |k| g[k]);
            }
            Op::Dot(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                acc(adj, *a, av.len(), |k| g[0] * bv[k]);
                acc(adj, *b, bv.len(), |k| g[0] * av[k]);
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for &p in parts {
                    let len = val(p).len();
                    acc(adj, p, len, |k| g[off + k]);
                    off += len;
                }
            }
            Op::Slice { v, start } => {
                let len = val(*v).len();
                let (start, end) = (*start, *start + g.len());
                acc(adj, *v, len, |k| if k >= start && k < end { g[k - start] } else { 0.0 });
            }
            Op::Sum(a) => acc(adj, *a, val(*a).len(), |_| g[0]),
            Op::Exp(a) => {
                let y = &node.value;
                acc(adj, *a, g.len(), |k| g[k] * y[k]);
            }
            Op::Log(a) => {
                let x = val(*a);
                acc(adj, *a, g.len(), |k| g[k] / x[k]);
            }
            Op::Sin(a) => {
                let x = val(*a);
                acc(adj, *a, g.len(), |k| g[k] * x[k].cos());
            }
            Op::Tanh(a) => {
                let y = &node.value;
                acc(adj, *a, g.len(), |k| g[k] * (1.0 - y[k] * y[k]));
            }
            Op::Relu(a) => {
                let x = val(*a);
                acc(adj, *a, g.len(), |k| if x[k] > 0.0 { g[k] } else { 0.0 });
            }
            Op::Sigmoid(a) => {
                let y = &node.value;
                acc(adj, *a, g.len(), |k| g[k] * y[k] * (1.0 - y[k]));
            }
            Op::Softplus(a) => {
                let x = val(*a);
                acc(adj, *a, g.len(), |k| g[k] * sigmoid(x[k]));
            }
            Op::Square(a) => {
                let x = val(*a);
                acc(adj, *a, g.len(), |k| 2.0 * g[k] * x[k]);
            }
            Op::Sqrt(a) => {
                let y = &node.value;
                acc(adj, *a, g.len(), |k| 0.5 * g[k] / y[k]);
            }
            Op::Softmax(a) => {
                let y = &node.value;
                let gy: f64 = g.iter().zip(y).map(|(gk, yk)| gk * yk).sum();
                acc(adj, *a, g.len(), |k| y[k] * (g[k] - gy));
            }
            Op::ClampMin(a, floor) => {
                let x = val(*a);
                acc(adj, *a, g.len(), |k| if x[k] >= *floor { g[k] } else { 0.0 });
            }
        }
    }
}

#[inline]
fn acc(adj: &mut [Vec<f64>], target: Var, len: usize, f: impl Fn(usize) -> f64) {
    let slot = &mut adj[target.0];
    if slot.is_empty() {
        *slot = (0..len).map(f).collect();
    } else {
        for (k, s) in slot.iter_mut().enumerate() {
            *s += f(k);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn matvec_backward(
    adj: &mut [Vec<f64>],
    g: &[f64],
    m: Var,
    v: Var,
    mv: &[f64],
    vv: &[f64],
    rows: usize,
    cols: usize,
) {
    {
        let slot = &mut adj[m.0];
        if slot.is_empty() {
            *slot = vec![0.0; rows * cols];
        }
        for r in 0..rows {
            let gr = g[r];
            if gr == 0.0 {
                continue;
            }
            for (s, &x) in slot[r * cols..(r + 1) * cols].iter_mut().zip(vv) {
                *s += gr * x;
            }
        }
    }
    let slot = &mut adj[v.0];
    if slot.is_empty() {
        *slot = vec![0.0; cols];
    }
    for r in 0..rows {
        let gr = g[r];
        if gr == 0.0 {
            continue;
        }
        for (s, &w) in slot.iter_mut().zip(&mv[r * cols..(r + 1) * cols]) {
            *s += gr * w;
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|&v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gradient() {
        let mut g = Graph::new();
        let x = g.leaf(vec![3.0]);
        let y = g.mul(x, x).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(x), &[6.0]);
    }

    #[test]
    fn sin_at_zero() {
        let mut g = Graph::new();
        let x = g.leaf(vec![0.0]);
        let y = g.sin(x);
        assert_eq!(g.backward(y).unwrap().get(x), &[1.0]);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut g = Graph::new();
        let a = g.leaf(vec![1.0, 2.0]);
        let b = g.leaf(vec![1.0]);
        assert!(matches!(g.add(a, b), Err(Error::Shape { .. })));
        let m = g.leaf(vec![0.0; 6]);
        assert!(g.matvec(m, a, 3, 3).is_err());
    }

    #[test]
    fn log_and_sqrt_domain() {
        let mut g = Graph::new();
        let a = g.leaf(vec![1.0, 0.0]);
        assert!(matches!(g.log(a), Err(Error::Domain { .. })));
        let b = g.leaf(vec![-1.0]);
        assert!(matches!(g.sqrt(b), Err(Error::Domain { .. })));
    }

    #[test]
    fn non_scalar_root() {
        let mut g = Graph::new();
        let a = g.leaf(vec![1.0, 2.0]);
        let b = g.exp(a);
        assert!(matches!(g.backward(b), Err(Error::Contract(_))));
    }

    #[test]
    fn backward_is_idempotent() {
        let mut g = Graph::new();
        let a = g.leaf(vec![0.3, -1.2]);
        let b = g.tanh(a);
        let c = g.square(b);
        let s = g.sum(c);
        let g1 = g.backward(s).unwrap().to_vec(a);
        let g2 = g.backward(s).unwrap().to_vec(a);
        assert_eq!(g1, g2);
    }

    #[test]
    fn softplus_is_overflow_safe() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn unreached_nodes_have_zero_adjoint() {
        let mut g = Graph::new();
        let a = g.leaf(vec![1.0, 2.0, 3.0]);
        let b = g.leaf(vec![4.0]);
        let s = g.sum(b);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.to_vec(a), vec![0.0; 3]);
        assert_eq!(grads.get(a), &[0.0; 3]);
    }
}
