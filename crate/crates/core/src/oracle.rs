//! Exact reference computations for small or degenerate instances.
//!
//! [`forward_backward`] smooths a discrete HMM with Gaussian emissions in the
//! log domain, [`enumerate_loglik`] sums a latent-free model over every
//! completion of the hidden labels, and [`hmm_as_dmtmc`] embeds an HMM into
//! the generative half of a d-mTMC so the two can be compared.

use serde::{Deserialize, Serialize};

use crate::autodiff::softplus;
use crate::data::LabeledSequence;
use crate::distributions::{gaussian_log_pdf, one_hot};
use crate::error::{contract, Error, Result};
use crate::models::{joint_log_likelihood, ModelKind, TmcConfig, TmcModel};

/// Largest number of hidden positions [`enumerate_loglik`] accepts.
pub const MAX_ENUMERATED: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteHmm {
    pub initial: Vec<f64>,
    /// Row `i` is `p(y_t | y_{t-1} = i)`.
    pub transition: Vec<Vec<f64>>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Smoothed {
    /// `p(y_t | x, y^L)` per step.
    pub posteriors: Vec<Vec<f64>>,
    /// `log p(x, y^L)`.
    pub log_evidence: f64,
}

impl Smoothed {
    /// Marginal MAP labels; ties resolve to the first class.
    pub fn map_labels(&self) -> Vec<usize> {
        self.posteriors.iter().map(|p| crate::distributions::argmax(p)).collect()
    }
}

impl DiscreteHmm {
    pub fn states(&self) -> usize {
        self.initial.len()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.states();
        let simplex = |row: &[f64]| row.len() == c && row.iter().all(|&p| p >= 0.0) && (row.iter().sum::<f64>() - 1.0).abs() < 1e-9;
        if c == 0 || !simplex(&self.initial) || self.transition.len() != c || !self.transition.iter().all(|r| simplex(r)) {
            return Err(contract("HMM initial / transition rows must be simplex points"));
        }
        if self.means.len() != c || self.stds.len() != c || self.stds.iter().any(|&s| !(s > 0.0)) {
            return Err(contract("HMM needs one emission mean and positive std per state"));
        }
        Ok(())
    }

    fn log_emission(&self, c: usize, x: f64) -> f64 {
        gaussian_log_pdf(self.means[c], self.stds[c], x)
    }

    /// Ancestral sample of `len` steps.
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R, len: usize) -> (Vec<usize>, Vec<f64>) {
        use rand_distr::{Distribution, StandardNormal};
        let mut ys = Vec::with_capacity(len);
        let mut xs = Vec::with_capacity(len);
        for t in 0..len {
            let probs = if t == 0 { &self.initial } else { &self.transition[ys[t - 1]] };
            let y = crate::distributions::sample_categorical(rng, probs);
            let e: f64 = StandardNormal.sample(rng);
            ys.push(y);
            xs.push(self.means[y] + self.stds[y] * e);
        }
        (ys, xs)
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn ln(p: f64) -> f64 {
    if p > 0.0 {
        p.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Exact smoothed posteriors `p(y_t | x, y^L)`; `observed[t] = Some(c)`
/// clamps step `t` to class `c`.
pub fn forward_backward(hmm: &DiscreteHmm, xs: &[f64], observed: &[Option<usize>]) -> Result<Smoothed> {
    hmm.validate()?;
    let (n, c) = (xs.len(), hmm.states());
    if n == 0 || observed.len() != n {
        return Err(contract("forward-backward needs a non-empty sequence with one constraint slot per step"));
    }
    if observed.iter().flatten().any(|&y| y >= c) {
        return Err(contract("observed label outside the state range"));
    }
    let log_a: Vec<Vec<f64>> = hmm.transition.iter().map(|r| r.iter().map(|&p| ln(p)).collect()).collect();
    let local = |t: usize, k: usize| -> f64 {
        match observed[t] {
            Some(o) if o != k => f64::NEG_INFINITY,
            _ => hmm.log_emission(k, xs[t]),
        }
    };

    // Normalized log forward variables; `scale[t]` = log p(x_t, y^L_t | past).
    let mut alpha = vec![vec![0.0; c]; n];
    let mut scale = vec![0.0; n];
    for t in 0..n {
        let mut row: Vec<f64> = (0..c)
            .map(|k| {
                let prior = if t == 0 {
                    ln(hmm.initial[k])
                } else {
                    let terms: Vec<f64> = (0..c).map(|j| alpha[t - 1][j] + log_a[j][k]).collect();
                    log_sum_exp(&terms)
                };
                prior + local(t, k)
            })
            .collect();
        let norm = log_sum_exp(&row);
        if !norm.is_finite() {
            return Err(Error::ZeroEvidence { t });
        }
        row.iter_mut().for_each(|v| *v -= norm);
        alpha[t] = row;
        scale[t] = norm;
    }

    let mut beta = vec![vec![0.0; c]; n];
    for t in (0..n - 1).rev() {
        let mut row: Vec<f64> = (0..c)
            .map(|j| {
                let terms: Vec<f64> = (0..c).map(|k| log_a[j][k] + local(t + 1, k) + beta[t + 1][k]).collect();
                log_sum_exp(&terms)
            })
            .collect();
        row.iter_mut().for_each(|v| *v -= scale[t + 1]);
        beta[t] = row;
    }

    let posteriors = (0..n)
        .map(|t| {
            let logs: Vec<f64> = (0..c).map(|k| alpha[t][k] + beta[t][k]).collect();
            let z = log_sum_exp(&logs);
            logs.iter().map(|v| (v - z).exp()).collect()
        })
        .collect();
    Ok(Smoothed {
        posteriors,
        log_evidence: scale.iter().sum(),
    })
}

/// Exact `log p(x, y^L)` for a model without continuous latents, by summing
/// the joint over every completion of the hidden labels.
pub fn enumerate_loglik(model: &TmcModel, seq: &LabeledSequence) -> Result<f64> {
    if model.config.d_z != 0 {
        return Err(contract("exact enumeration needs a model without continuous latents (d_z = 0)"));
    }
    seq.validate()?;
    let hidden = seq.unobserved();
    if hidden.len() > MAX_ENUMERATED {
        return Err(contract(format!("{} hidden labels exceed the enumeration limit {MAX_ENUMERATED}", hidden.len())));
    }
    let c = seq.classes;
    let combos = c.checked_pow(hidden.len() as u32).ok_or_else(|| contract("too many completions"))?;
    let zs = vec![Vec::new(); seq.len()];
    let mut ys: Vec<Vec<f64>> = seq
        .labels
        .iter()
        .map(|l| one_hot(l.unwrap_or(0), c))
        .collect();
    let mut lls = Vec::with_capacity(combos);
    for code in 0..combos {
        let mut rest = code;
        for &t in &hidden {
            ys[t] = one_hot(rest % c, c);
            rest /= c;
        }
        lls.push(joint_log_likelihood(model, &seq.xs, &ys, &zs)?);
    }
    Ok(log_sum_exp(&lls))
}

/// Inverse of softplus for positive `y`.
fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

/// A d-mTMC without continuous latent (`d_z = 0`) whose generative networks
/// reproduce `hmm` exactly. Requires one scalar emission per state and
/// `hidden_units >= states`. The variational networks keep a seeded
/// initialization.
pub fn hmm_as_dmtmc(hmm: &DiscreteHmm, hidden_units: usize, rnn_state_dim: usize, seed: u64) -> Result<TmcModel> {
    hmm.validate()?;
    let c = hmm.states();
    if c < 2 || hidden_units < c {
        return Err(contract("embedding needs at least two states and hidden_units >= states"));
    }
    let mut cfg = TmcConfig::preset(ModelKind::Dmtmc);
    cfg.d_z = 0;
    cfg.classes = c;
    cfg.hidden_units = hidden_units;
    cfg.rnn_state_dim = rnn_state_dim;
    let mut model = TmcModel::new(cfg, seed)?;
    let nets = model.dmtmc()?.clone();

    // Label parameterization: a single logit of the second class for two
    // states, log-probabilities otherwise.
    let encode = |row: &[f64]| -> Vec<f64> {
        if c == 2 {
            vec![ln(row[1]) - ln(row[0])]
        } else {
            row.iter().map(|&p| ln(p).max(-700.0)).collect()
        }
    };

    model.params.get_mut(nets.init_y).data = encode(&hmm.initial);

    // One-hot inputs pass unchanged through both ReLU layers; the output
    // layer then selects column `k` for input class `k`.
    let route = |model: &mut TmcModel, net: &crate::nn::Mlp2, columns: Vec<Vec<f64>>| {
        let [l1, l2, out] = net.layers().clone();
        for (layer, width) in [(&l1, l1.input), (&l2, hidden_units)] {
            let w = &mut model.params.get_mut(layer.weight).data;
            w.iter_mut().for_each(|v| *v = 0.0);
            for k in 0..width.min(c) {
                w[k * layer.input + k] = 1.0;
            }
            model.params.get_mut(layer.bias).data.iter_mut().for_each(|v| *v = 0.0);
        }
        let w = &mut model.params.get_mut(out.weight).data;
        w.iter_mut().for_each(|v| *v = 0.0);
        for (k, col) in columns.iter().enumerate() {
            for (r, &v) in col.iter().enumerate() {
                w[r * out.input + k] = v;
            }
        }
        model.params.get_mut(out.bias).data.iter_mut().for_each(|v| *v = 0.0);
    };

    let trans: Vec<Vec<f64>> = hmm.transition.iter().map(|r| encode(r)).collect();
    route(&mut model, &nets.py, trans);
    let emis: Vec<Vec<f64>> = (0..c).map(|k| vec![hmm.means[k], softplus_inv(hmm.stds[k])]).collect();
    route(&mut model, &nets.px, emis);
    debug_assert!((softplus(softplus_inv(hmm.stds[0])) - hmm.stds[0]).abs() < 1e-12);
    Ok(model)
}
