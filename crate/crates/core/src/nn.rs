//! Dense networks, a vanilla recurrent cell and the Adam optimizer.
//!
//! Parameters live in a flat [`ParamSet`]; networks only hold [`ParamId`]s.
//! A forward pass first binds the set onto a [`Graph`] (one leaf per tensor)
//! and evaluates against that binding, so gradients come back in the same
//! order as the tensors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::error::{contract, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TensorKind {
    Weight,
    Bias,
    /// Free parameter initialised at zero (e.g. initial label logits).
    Free,
}

/// Which half of the model a tensor belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Generative,
    Variational,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub kind: TensorKind,
    pub group: Group,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, rows: usize, cols: usize, kind: TensorKind, group: Group) -> ParamId {
        self.tensors.push(Tensor {
            name: name.into(),
            rows,
            cols,
            kind,
            group,
            data: vec![0.0; rows * cols],
        });
        ParamId(self.tensors.len() - 1)
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<ParamId> {
        self.tensors.iter().position(|t| t.name == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn zero(&mut self) {
        for t in &mut self.tensors {
            t.data.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases
    /// and free parameters. Reproducible for a given seed.
    pub fn init(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for t in &mut self.tensors {
            match t.kind {
                TensorKind::Weight => {
                    let limit = (6.0 / (t.rows + t.cols) as f64).sqrt();
                    for x in &mut t.data {
                        *x = rng.random_range(-limit..limit);
                    }
                }
                TensorKind::Bias | TensorKind::Free => t.data.iter_mut().for_each(|x| *x = 0.0),
            }
        }
    }

    /// Flattened copy of every parameter, in tensor order.
    pub fn flat(&self) -> Vec<f64> {
        self.tensors.iter().flat_map(|t| t.data.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.count() {
            return Err(contract(format!(
                "expected {} parameters, got {}",
                self.count(),
                values.len()
            )));
        }
        let mut off = 0;
        for t in &mut self.tensors {
            let n = t.data.len();
            t.data.copy_from_slice(&values[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// Places every tensor on the graph as a leaf.
    pub fn bind(&self, g: &mut Graph) -> Bound {
        Bound {
            vars: self.tensors.iter().map(|t| g.leaf(t.data.clone())).collect(),
        }
    }
}

/// A [`ParamSet`] placed on one graph.
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Linear {
    pub input: usize,
    pub output: usize,
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new(params: &mut ParamSet, name: &str, input: usize, output: usize, group: Group) -> Self {
        let weight = params.add(format!("{name}.w"), output, input, TensorKind::Weight, group);
        let bias = params.add(format!("{name}.b"), output, 1, TensorKind::Bias, group);
        Self {
            input,
            output,
            weight,
            bias,
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        g.affine(p.var(self.weight), x, p.var(self.bias), self.output, self.input)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    Linear,
    Softplus,
    Sigmoid,
}

/// Two rectified hidden layers followed by an output head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mlp2 {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub head: Head,
    layers: [Linear; 3],
}

impl Mlp2 {
    pub fn new(
        params: &mut ParamSet,
        name: &str,
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        head: Head,
        group: Group,
    ) -> Self {
        let layers = [
            Linear::new(params, &format!("{name}.l1"), input_dim, hidden_dim, group),
            Linear::new(params, &format!("{name}.l2"), hidden_dim, hidden_dim, group),
            Linear::new(params, &format!("{name}.out"), hidden_dim, output_dim, group),
        ];
        Self {
            input_dim,
            hidden_dim,
            output_dim,
            head,
            layers,
        }
    }

    pub fn layers(&self) -> &[Linear; 3] {
        &self.layers
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, input: Var) -> Result<Var> {
        if g.dim(input) != self.input_dim {
            return Err(contract(format!(
                "mlp expects input of length {}, got {}",
                self.input_dim,
                g.dim(input)
            )));
        }
        let h = self.layers[0].forward(g, p, input)?;
        let h = g.relu(h);
        let h = self.layers[1].forward(g, p, h)?;
        let h = g.relu(h);
        let out = self.layers[2].forward(g, p, h)?;
        Ok(match self.head {
            Head::Linear => out,
            Head::Softplus => g.softplus(out),
            Head::Sigmoid => g.sigmoid(out),
        })
    }
}

/// Vanilla cell `h' = tanh(W [input; h] + b)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RnnCell {
    pub input_dim: usize,
    pub state_dim: usize,
    lin: Linear,
}

impl RnnCell {
    pub fn new(params: &mut ParamSet, name: &str, input_dim: usize, state_dim: usize, group: Group) -> Self {
        Self {
            input_dim,
            state_dim,
            lin: Linear::new(params, name, input_dim + state_dim, state_dim, group),
        }
    }

    pub fn linear(&self) -> &Linear {
        &self.lin
    }

    pub fn step(&self, g: &mut Graph, p: &Bound, input: Var, state: Var) -> Result<Var> {
        if g.dim(input) != self.input_dim || g.dim(state) != self.state_dim {
            return Err(contract(format!(
                "rnn cell expects ({}, {}), got ({}, {})",
                self.input_dim,
                self.state_dim,
                g.dim(input),
                g.dim(state)
            )));
        }
        let joined = g.concat(&[input, state]);
        let pre = self.lin.forward(g, p, joined)?;
        Ok(g.tanh(pre))
    }
}

/// Bi-directional recurrent encoder producing one code per step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BiRnnEncoder {
    pub forward: RnnCell,
    pub backward: RnnCell,
    pub projection: Linear,
}

impl BiRnnEncoder {
    pub fn new(params: &mut ParamSet, name: &str, input_dim: usize, state_dim: usize, code_dim: usize, group: Group) -> Self {
        Self {
            forward: RnnCell::new(params, &format!("{name}.fwd"), input_dim, state_dim, group),
            backward: RnnCell::new(params, &format!("{name}.bwd"), input_dim, state_dim, group),
            projection: Linear::new(params, &format!("{name}.proj"), 2 * state_dim, code_dim, group),
        }
    }

    pub fn code_dim(&self) -> usize {
        self.projection.output
    }

    pub fn encode(&self, g: &mut Graph, p: &Bound, xs: &[Var]) -> Result<Vec<Var>> {
        if xs.is_empty() {
            return Err(contract("cannot encode an empty sequence"));
        }
        let n = xs.len();
        let mut fwd = Vec::with_capacity(n);
        let mut h = g.constant(vec![0.0; self.forward.state_dim]);
        for &x in xs {
            h = self.forward.step(g, p, x, h)?;
            fwd.push(h);
        }
        let mut bwd = vec![h; n];
        let mut h = g.constant(vec![0.0; self.backward.state_dim]);
        for t in (0..n).rev() {
            h = self.backward.step(g, p, xs[t], h)?;
            bwd[t] = h;
        }
        (0..n)
            .map(|t| {
                let both = g.concat(&[fwd[t], bwd[t]]);
                self.projection.forward(g, p, both)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    /// Steps rejected because of non-finite gradients.
    pub rejected: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &ParamSet, config: AdamConfig) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.data.len()]).collect();
        Self {
            config,
            step: 0,
            rejected: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// Applies one bias-corrected update. Tensors with `trainable[i] == false`
    /// are left alone. Returns `Ok(false)` and leaves everything untouched
    /// when any gradient is non-finite.
    pub fn step(&mut self, params: &mut ParamSet, grads: &[Vec<f64>], trainable: Option<&[bool]>) -> Result<bool> {
        if grads.len() != params.len() {
            return Err(contract(format!("{} gradients for {} tensors", grads.len(), params.len())));
        }
        for (gr, t) in grads.iter().zip(params.tensors()) {
            if gr.len() != t.data.len() {
                return Err(contract(format!("gradient shape mismatch for {}", t.name)));
            }
        }
        if grads.iter().flatten().any(|x| !x.is_finite()) {
            self.rejected += 1;
            log::warn!("adam: non-finite gradient, step rejected ({} so far)", self.rejected);
            return Ok(false);
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (i, t) in params.tensors_mut().iter_mut().enumerate() {
            if trainable.is_some_and(|mask| !mask[i]) {
                continue;
            }
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (k, w) in t.data.iter_mut().enumerate() {
                let gk = grads[i][k];
                m[k] = beta1 * m[k] + (1.0 - beta1) * gk;
                v[k] = beta2 * v[k] + (1.0 - beta2) * gk * gk;
                let mh = m[k] / bc1;
                let vh = v[k] / bc2;
                *w -= lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(true)
    }
}

/// Rescales gradients in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Vec<f64>], max_norm: f64) -> f64 {
    let norm = grads.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    if norm > max_norm && norm.is_finite() {
        let s = max_norm / norm;
        grads.iter_mut().flatten().for_each(|x| *x *= s);
    }
    norm
}
