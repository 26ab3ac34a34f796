//! Diagonal Gaussians and categorical label distributions living on a graph.
//!
//! Sampling is reparameterized: callers draw the exogenous noise from their
//! own seeded generator ([`standard_normal`], [`gumbel_noise`]) and pass it in,
//! which keeps every function here pure.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{Graph, Var};
use crate::error::{contract, Result};

/// Lower bound on every standard deviation produced by a network head.
pub const STD_FLOOR: f64 = 1e-4;
/// Probabilities are clamped here before taking logs.
pub const PROB_EPS: f64 = 1e-12;

const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy)]
pub struct DiagGaussian {
    pub mean: Var,
    pub std: Var,
}

impl DiagGaussian {
    pub fn new(g: &Graph, mean: Var, std: Var) -> Result<Self> {
        if g.dim(mean) != g.dim(std) {
            return Err(contract(format!(
                "gaussian mean has length {} but std has {}",
                g.dim(mean),
                g.dim(std)
            )));
        }
        if let Some(s) = g.value(std).iter().find(|&&s| !(s > 0.0)) {
            return Err(contract(format!("gaussian std must be positive, got {s}")));
        }
        Ok(Self { mean, std })
    }

    pub fn standard(g: &mut Graph, dim: usize) -> Self {
        Self {
            mean: g.constant(vec![0.0; dim]),
            std: g.constant(vec![1.0; dim]),
        }
    }

    /// Splits a `2 * dim` head output into a linear mean and a floored
    /// softplus standard deviation.
    pub fn from_head(g: &mut Graph, out: Var, dim: usize) -> Result<Self> {
        if g.dim(out) != 2 * dim {
            return Err(contract(format!("gaussian head needs {} outputs, got {}", 2 * dim, g.dim(out))));
        }
        let mean = g.slice(out, 0, dim)?;
        let raw = g.slice(out, dim, dim)?;
        let sp = g.softplus(raw);
        let std = g.clamp_min(sp, STD_FLOOR);
        Ok(Self { mean, std })
    }

    pub fn dim(&self, g: &Graph) -> usize {
        g.dim(self.mean)
    }

    pub fn log_pdf(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let d = self.dim(g);
        if g.dim(x) != d {
            return Err(contract(format!("gaussian of dim {d} evaluated at length {}", g.dim(x))));
        }
        if d == 0 {
            return Ok(g.constant(vec![0.0]));
        }
        let diff = g.sub(x, self.mean)?;
        let z = g.div(diff, self.std)?;
        let z2 = g.square(z);
        let half = g.scale(z2, -0.5);
        let log_std = g.log(self.std)?;
        let per = g.sub(half, log_std)?;
        let s = g.sum(per);
        Ok(g.shift(s, -(d as f64) * HALF_LOG_2PI))
    }

    /// `mean + std * noise`.
    pub fn rsample(&self, g: &mut Graph, noise: &[f64]) -> Result<Var> {
        if noise.len() != self.dim(g) {
            return Err(contract(format!("noise of length {} for gaussian of dim {}", noise.len(), self.dim(g))));
        }
        let eps = g.constant(noise.to_vec());
        let scaled = g.mul(self.std, eps)?;
        g.add(self.mean, scaled)
    }

    /// Closed-form `KL(self || other)`.
    pub fn kl(&self, g: &mut Graph, other: &DiagGaussian) -> Result<Var> {
        let d = self.dim(g);
        if other.dim(g) != d {
            return Err(contract("kl between gaussians of different dimension"));
        }
        if d == 0 {
            return Ok(g.constant(vec![0.0]));
        }
        let log_sq = g.log(self.std)?;
        let log_sp = g.log(other.std)?;
        let log_ratio = g.sub(log_sp, log_sq)?;
        let var_q = g.square(self.std);
        let diff = g.sub(self.mean, other.mean)?;
        let diff2 = g.square(diff);
        let num = g.add(var_q, diff2)?;
        let var_p = g.square(other.std);
        let frac = g.div(num, var_p)?;
        let half = g.scale(frac, 0.5);
        let per = g.add(log_ratio, half)?;
        let s = g.sum(per);
        Ok(g.shift(s, -0.5 * d as f64))
    }
}

/// Plain-number Gaussian log density, used by the oracles and data code.
pub fn gaussian_log_pdf(mean: f64, std: f64, x: f64) -> f64 {
    let z = (x - mean) / std;
    -0.5 * z * z - std.ln() - HALF_LOG_2PI
}

#[derive(Debug, Clone, Copy)]
pub struct LabelDistribution {
    pub probs: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct RelaxedLabelSample {
    pub soft: Var,
    pub temperature: f64,
}

impl LabelDistribution {
    /// Bernoulli over two labels from a sigmoid output `rho = P(second label)`.
    pub fn from_sigmoid(g: &mut Graph, rho: Var) -> Result<Self> {
        if g.dim(rho) != 1 {
            return Err(contract("bernoulli head must have exactly one output"));
        }
        let neg = g.neg(rho);
        let first = g.shift(neg, 1.0);
        Ok(Self {
            probs: g.concat(&[first, rho]),
        })
    }

    pub fn from_logits(g: &mut Graph, logits: Var) -> Self {
        Self { probs: g.softmax(logits) }
    }

    pub fn num_labels(&self, g: &Graph) -> usize {
        g.dim(self.probs)
    }

    fn clamped_log(&self, g: &mut Graph) -> Result<Var> {
        let p = g.clamp_min(self.probs, PROB_EPS);
        g.log(p)
    }

    /// `sum_c y_c log p_c`; exact for one-hot `y`, linear in `y` otherwise.
    /// The second value reports whether a zero probability had to be clamped
    /// under positive label mass.
    pub fn log_pmf_flagged(&self, g: &mut Graph, y: Var) -> Result<(Var, bool)> {
        if g.dim(y) != self.num_labels(g) {
            return Err(contract(format!(
                "label of length {} for {} classes",
                g.dim(y),
                self.num_labels(g)
            )));
        }
        let clamped = g
            .value(self.probs)
            .iter()
            .zip(g.value(y))
            .any(|(&p, &yc)| p < PROB_EPS && yc > 0.0);
        if clamped {
            log::debug!("label log-pmf clamped at log {PROB_EPS}");
        }
        let lp = self.clamped_log(g)?;
        Ok((g.dot(y, lp)?, clamped))
    }

    pub fn log_pmf(&self, g: &mut Graph, y: Var) -> Result<Var> {
        Ok(self.log_pmf_flagged(g, y)?.0)
    }

    /// Gumbel-Softmax relaxation: `softmax((log p + gumbel) / temperature)`.
    pub fn gumbel_softmax(&self, g: &mut Graph, temperature: f64, gumbel: &[f64]) -> Result<RelaxedLabelSample> {
        if !(temperature > 0.0) {
            return Err(contract(format!("temperature must be positive, got {temperature}")));
        }
        if gumbel.len() != self.num_labels(g) {
            return Err(contract("gumbel noise length differs from label count"));
        }
        let lp = self.clamped_log(g)?;
        let noise = g.constant(gumbel.to_vec());
        let perturbed = g.add(lp, noise)?;
        let scaled = g.scale(perturbed, 1.0 / temperature);
        Ok(RelaxedLabelSample {
            soft: g.softmax(scaled),
            temperature,
        })
    }
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn one_hot(label: usize, classes: usize) -> Vec<f64> {
    let mut v = vec![0.0; classes];
    v[label] = 1.0;
    v
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

/// Standard Gumbel draws `-ln(-ln u)` with `u` uniform on the open interval.
pub fn gumbel_noise<R: Rng + ?Sized>(rng: &mut R, classes: usize) -> Vec<f64> {
    (0..classes)
        .map(|_| {
            let u: f64 = rng.random::<f64>().clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
            -(-u.ln()).ln()
        })
        .collect()
}

/// Categorical draw from plain probabilities.
pub fn sample_categorical<R: Rng + ?Sized>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}
