//! Independent reference computations shared by the integration tests.
//!
//! Nothing here goes through the autodiff graph: networks and densities are
//! re-evaluated with plain floating-point loops over the stored tensors.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tmc_core::autodiff::Graph;
use tmc_core::data::LabeledSequence;
use tmc_core::inference::{build_elbo, ElboOptions};
use tmc_core::nn::ParamSet;
use tmc_core::oracle::DiscreteHmm;
use tmc_core::TmcModel;

pub const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_7;

fn tensor<'a>(params: &'a ParamSet, name: &str) -> &'a tmc_core::nn::Tensor {
    let id = params.by_name(name).unwrap_or_else(|| panic!("no tensor {name}"));
    params.get(id)
}

/// `W x + b` for the linear layer stored under `name`.
pub fn plain_linear(params: &ParamSet, name: &str, x: &[f64]) -> Vec<f64> {
    let w = tensor(params, &format!("{name}.w"));
    let b = tensor(params, &format!("{name}.b"));
    assert_eq!(w.cols, x.len(), "{name}: input width");
    (0..w.rows)
        .map(|r| (0..w.cols).map(|c| w.data[r * w.cols + c] * x[c]).sum::<f64>() + b.data[r])
        .collect()
}

pub fn plain_softplus(x: f64) -> f64 {
    (-x.abs()).exp().ln_1p() + x.max(0.0)
}

pub fn plain_sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Clone, Copy)]
pub enum PlainHead {
    Linear,
    Softplus,
    Sigmoid,
}

/// Two ReLU layers and a head.
pub fn plain_mlp(params: &ParamSet, name: &str, head: PlainHead, x: &[f64]) -> Vec<f64> {
    let relu = |v: Vec<f64>| v.into_iter().map(|a| a.max(0.0)).collect::<Vec<_>>();
    let h1 = relu(plain_linear(params, &format!("{name}.l1"), x));
    let h2 = relu(plain_linear(params, &format!("{name}.l2"), &h1));
    let out = plain_linear(params, &format!("{name}.out"), &h2);
    match head {
        PlainHead::Linear => out,
        PlainHead::Softplus => out.into_iter().map(plain_softplus).collect(),
        PlainHead::Sigmoid => out.into_iter().map(plain_sigmoid).collect(),
    }
}

/// `tanh(W [input; h] + b)`.
pub fn plain_rnn(params: &ParamSet, name: &str, input: &[f64], h: &[f64]) -> Vec<f64> {
    let mut x = input.to_vec();
    x.extend_from_slice(h);
    plain_linear(params, name, &x).into_iter().map(f64::tanh).collect()
}

/// Label probabilities from a one-unit sigmoid head.
pub fn plain_label(params: &ParamSet, name: &str, x: &[f64]) -> Vec<f64> {
    let rho = plain_mlp(params, name, PlainHead::Sigmoid, x)[0];
    vec![1.0 - rho, rho]
}

/// `(mean, std)` of a Gaussian head with output width `2d`.
pub fn plain_gaussian(params: &ParamSet, name: &str, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let out = plain_mlp(params, name, PlainHead::Linear, x);
    let d = out.len() / 2;
    let mean = out[..d].to_vec();
    let std = out[d..].iter().map(|&v| plain_softplus(v).max(1e-4)).collect();
    (mean, std)
}

pub fn plain_log_normal(mean: &[f64], std: &[f64], x: &[f64]) -> f64 {
    mean.iter()
        .zip(std)
        .zip(x)
        .map(|((m, s), v)| {
            let z = (v - m) / s;
            -0.5 * z * z - s.ln() - HALF_LOG_2PI
        })
        .sum()
}

pub fn plain_log_pmf(probs: &[f64], y: &[f64]) -> f64 {
    probs.iter().zip(y).map(|(p, c)| c * p.max(1e-12).ln()).sum()
}

pub fn cat(parts: &[&[f64]]) -> Vec<f64> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

pub fn one_hot(c: usize, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[c] = 1.0;
    v
}

/// Exact `log p(x, y, z)` of a d-mTMC trajectory from raw tensors.
pub fn plain_dmtmc_joint(model: &TmcModel, xs: &[Vec<f64>], ys: &[usize], zs: &[Vec<f64>]) -> f64 {
    let p = &model.params;
    let c = model.config.classes;
    let mut total = 0.0;
    for t in 0..xs.len() {
        let y = one_hot(ys[t], c);
        let py = if t == 0 {
            let l = tensor(p, "p_y0.logit").data[0];
            let r = plain_sigmoid(l);
            vec![1.0 - r, r]
        } else {
            plain_label(p, "psi_py", &one_hot(ys[t - 1], c))
        };
        total += plain_log_pmf(&py, &y);
        if model.config.d_z > 0 {
            let (m, s) = if t == 0 {
                (vec![0.0; model.config.d_z], vec![1.0; model.config.d_z])
            } else {
                plain_gaussian(p, "psi_pz", &zs[t - 1])
            };
            total += plain_log_normal(&m, &s, &zs[t]);
        }
        let (m, s) = plain_gaussian(p, "psi_px", &cat(&[&y, &zs[t]]));
        total += plain_log_normal(&m, &s, &xs[t]);
    }
    total
}

/// Exact `log p(x, y, z')` of an SVRNN trajectory from raw tensors.
pub fn plain_svrnn_joint(model: &TmcModel, xs: &[Vec<f64>], ys: &[usize], zs: &[Vec<f64>]) -> f64 {
    let p = &model.params;
    let cfg = &model.config;
    let mut h = vec![0.0; cfg.rnn_state_dim];
    let mut total = 0.0;
    for t in 0..xs.len() {
        let y = one_hot(ys[t], cfg.classes);
        total += plain_log_pmf(&plain_label(p, "psi_py", &h), &y);
        if cfg.d_z > 0 {
            let (m, s) = plain_gaussian(p, "psi_pz", &cat(&[&y, &h]));
            total += plain_log_normal(&m, &s, &zs[t]);
        }
        let (m, s) = plain_gaussian(p, "psi_px", &cat(&[&y, &zs[t], &h]));
        total += plain_log_normal(&m, &s, &xs[t]);
        h = plain_rnn(p, "f_theta", &cat(&[&zs[t], &y, &xs[t]]), &h);
    }
    total
}

/// Exact `log p(x, y, z)` of a VSL trajectory from raw tensors.
pub fn plain_vsl_joint(model: &TmcModel, xs: &[Vec<f64>], ys: &[usize], zs: &[Vec<f64>]) -> f64 {
    let p = &model.params;
    let cfg = &model.config;
    let mut total = 0.0;
    for t in 0..xs.len() {
        let (m, s) = if t == 0 {
            (vec![0.0; cfg.d_z], vec![1.0; cfg.d_z])
        } else {
            plain_gaussian(p, "psi_pz", &cat(&[&xs[t - 1], &zs[t - 1]]))
        };
        total += plain_log_normal(&m, &s, &zs[t]);
        total += plain_log_pmf(&plain_label(p, "psi_py", &zs[t]), &one_hot(ys[t], cfg.classes));
        let (m, s) = plain_gaussian(p, "psi_px", &zs[t]);
        total += plain_log_normal(&m, &s, &xs[t]);
    }
    total
}

/// Smoothed posteriors and `log p(x, y^L)` by summing over every label path.
pub fn brute_force_hmm(hmm: &DiscreteHmm, xs: &[f64], observed: &[Option<usize>]) -> (Vec<Vec<f64>>, f64) {
    let c = hmm.initial.len();
    let n = xs.len();
    let paths = c.pow(n as u32);
    let mut weights = Vec::with_capacity(paths);
    let mut labels = Vec::with_capacity(paths);
    for code in 0..paths {
        let mut rest = code;
        let path: Vec<usize> = (0..n)
            .map(|_| {
                let k = rest % c;
                rest /= c;
                k
            })
            .collect();
        if path.iter().zip(observed).any(|(&k, o)| o.is_some_and(|o| o != k)) {
            continue;
        }
        let mut w = 1.0;
        for t in 0..n {
            let prior = if t == 0 { hmm.initial[path[0]] } else { hmm.transition[path[t - 1]][path[t]] };
            let z = (xs[t] - hmm.means[path[t]]) / hmm.stds[path[t]];
            w *= prior * (-0.5 * z * z).exp() / (hmm.stds[path[t]] * (2.0 * std::f64::consts::PI).sqrt());
        }
        weights.push(w);
        labels.push(path);
    }
    let total: f64 = weights.iter().sum();
    let mut post = vec![vec![0.0; c]; n];
    for (w, path) in weights.iter().zip(&labels) {
        for t in 0..n {
            post[t][path[t]] += w / total;
        }
    }
    (post, total.ln())
}

pub fn random_hmm(rng: &mut impl Rng) -> DiscreteHmm {
    let row = |rng: &mut dyn rand::RngCore| {
        let a: f64 = rng.random_range(0.05..0.95);
        vec![a, 1.0 - a]
    };
    DiscreteHmm {
        initial: row(rng),
        transition: vec![row(rng), row(rng)],
        means: vec![rng.random_range(-2.0..0.0), rng.random_range(0.0..2.0)],
        stds: vec![rng.random_range(0.3..1.5), rng.random_range(0.3..1.5)],
    }
}

/// Random sequence of `len` steps with the given hidden positions.
pub fn random_sequence(rng: &mut impl Rng, len: usize, hidden: &[usize], classes: usize) -> LabeledSequence {
    let xs = (0..len).map(|_| vec![rng.random_range(-2.0..2.0)]).collect();
    let truth = (0..len).map(|_| rng.random_range(0..classes)).collect();
    let mask: Vec<bool> = (0..len).map(|t| hidden.contains(&t)).collect();
    LabeledSequence::from_truth(xs, truth, &mask, classes).unwrap()
}

/// Adds Gaussian noise of scale `sd` to every parameter so that no
/// pre-activation sits exactly on a ReLU kink (fresh biases are zero).
pub fn jitter(model: &mut TmcModel, sd: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in model.params.tensors_mut() {
        for v in &mut t.data {
            *v += sd * tmc_core::distributions::standard_normal(&mut rng, 1)[0];
        }
    }
}

pub fn rel_close(a: f64, b: f64, rel: f64, abs: f64) -> bool {
    (a - b).abs() <= (rel * a.abs().max(b.abs())).max(abs)
}

/// ELBO value under a fixed noise stream.
pub fn elbo_value(model: &TmcModel, seq: &LabeledSequence, noise_seed: u64, opts: &ElboOptions) -> f64 {
    let mut g = Graph::new();
    let p = model.params.bind(&mut g);
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let nodes = build_elbo(&mut g, &p, model, seq, &mut rng, opts).unwrap();
    g.scalar(nodes.total)
}

/// Analytic ELBO gradient vs central differences on `n` random scalar
/// parameters, all under the same noise stream. Returns `(analytic, numeric)`.
pub fn elbo_gradient_pairs(
    model: &TmcModel,
    seq: &LabeledSequence,
    noise_seed: u64,
    n: usize,
    pick_seed: u64,
) -> Vec<(f64, f64)> {
    let opts = ElboOptions::default();
    let mut g = Graph::new();
    let p = model.params.bind(&mut g);
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let nodes = build_elbo(&mut g, &p, model, seq, &mut rng, &opts).unwrap();
    let grads = g.backward(nodes.total).unwrap();

    let mut pick = ChaCha8Rng::seed_from_u64(pick_seed);
    let h = 1e-5;
    (0..n)
        .map(|_| {
            let tid = pick.random_range(0..model.params.len());
            let k = pick.random_range(0..model.params.tensors()[tid].data.len());
            let analytic = grads.get(p.vars()[tid])[k];
            let mut plus = model.clone();
            plus.params.tensors_mut()[tid].data[k] += h;
            let mut minus = model.clone();
            minus.params.tensors_mut()[tid].data[k] -= h;
            let numeric = (elbo_value(&plus, seq, noise_seed, &opts) - elbo_value(&minus, seq, noise_seed, &opts)) / (2.0 * h);
            (analytic, numeric)
        })
        .collect()
}
