//! Single-trajectory Monte-Carlo ELBO graphs.
//!
//! Noise is consumed in a fixed order so that re-running with an identically
//! seeded generator reproduces the same draws (common random numbers): per
//! step, `C` Gumbel variates when the label is hidden, then `d_z` normals.
//! The VSL bound draws only the `d_z` normals.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::data::LabeledSequence;
use crate::distributions::{argmax, gumbel_noise, one_hot, standard_normal, LabelDistribution};
use crate::error::{contract, Result};
use crate::models::{ModelKind, Nets, TmcModel};
use crate::nn::Bound;

/// How hidden labels are sampled inside the bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSampling {
    /// Gumbel-Softmax relaxation (differentiable; the training default).
    #[default]
    Relaxed,
    /// Gumbel-max one-hot draw, i.e. an exact sample of `q(y_t | ...)`.
    Hard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElboOptions {
    pub temperature: f64,
    pub sampling: LabelSampling,
}

impl Default for ElboOptions {
    fn default() -> Self {
        Self {
            temperature: 0.5,
            sampling: LabelSampling::Relaxed,
        }
    }
}

/// Signed contributions; the bound is their plain sum.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ElboTerms {
    /// `log p(x_t | ...)` (scaled by `beta` for VSL).
    pub reconstruction: f64,
    /// `log p(z_t | ...) - log q(z_t | ...)` (scaled by `beta` for VSL).
    pub kl_or_prior: f64,
    /// Label log-likelihood at observed positions.
    pub label_supervised: f64,
    /// `log p(y_t | ...) - log q(y_t | ...)` at hidden positions.
    pub label_entropy: f64,
    /// SVRNN label penalization.
    pub penalty: f64,
}

impl ElboTerms {
    pub fn total(&self) -> f64 {
        self.reconstruction + self.kl_or_prior + self.label_supervised + self.label_entropy + self.penalty
    }

    pub fn as_array(&self) -> [f64; 5] {
        [
            self.reconstruction,
            self.kl_or_prior,
            self.label_supervised,
            self.label_entropy,
            self.penalty,
        ]
    }

    pub const NAMES: [&'static str; 5] = ["reconstruction", "kl_or_prior", "label_supervised", "label_entropy", "penalty"];

    fn scaled_add(&mut self, other: &ElboTerms, w: f64) {
        self.reconstruction += w * other.reconstruction;
        self.kl_or_prior += w * other.kl_or_prior;
        self.label_supervised += w * other.label_supervised;
        self.label_entropy += w * other.label_entropy;
        self.penalty += w * other.penalty;
    }
}

/// Graph nodes of one bound.
#[derive(Debug, Clone, Copy)]
pub struct ElboNodes {
    pub total: Var,
    pub reconstruction: Var,
    pub kl_or_prior: Var,
    pub label_supervised: Var,
    pub label_entropy: Var,
    pub penalty: Var,
}

impl ElboNodes {
    pub fn terms(&self, g: &Graph) -> ElboTerms {
        ElboTerms {
            reconstruction: g.scalar(self.reconstruction),
            kl_or_prior: g.scalar(self.kl_or_prior),
            label_supervised: g.scalar(self.label_supervised),
            label_entropy: g.scalar(self.label_entropy),
            penalty: g.scalar(self.penalty),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElboEstimate {
    pub total: f64,
    pub terms: ElboTerms,
    pub n_samples: usize,
    /// Standard error of `total` across samples (0 for one sample).
    pub std_error: f64,
    /// False when any sample produced a non-finite value.
    pub valid: bool,
}

/// Per-term scalar accumulators.
#[derive(Default)]
struct Acc {
    rec: Vec<Var>,
    kl: Vec<Var>,
    sup: Vec<Var>,
    ent: Vec<Var>,
    pen: Vec<Var>,
}

fn total_of(g: &mut Graph, parts: &[Var]) -> Var {
    if parts.is_empty() {
        return g.constant(vec![0.0]);
    }
    let v = g.concat(parts);
    g.sum(v)
}

impl Acc {
    fn finish(self, g: &mut Graph, rec_w: f64, kl_w: f64, pen_w: f64) -> Result<ElboNodes> {
        let reconstruction = total_of(g, &self.rec);
        let reconstruction = g.scale(reconstruction, rec_w);
        let kl_or_prior = total_of(g, &self.kl);
        let kl_or_prior = g.scale(kl_or_prior, kl_w);
        let label_supervised = total_of(g, &self.sup);
        let label_entropy = total_of(g, &self.ent);
        let penalty = total_of(g, &self.pen);
        let penalty = g.scale(penalty, pen_w);
        let total = g.concat(&[reconstruction, kl_or_prior, label_supervised, label_entropy, penalty]);
        let total = g.sum(total);
        Ok(ElboNodes {
            total,
            reconstruction,
            kl_or_prior,
            label_supervised,
            label_entropy,
            penalty,
        })
    }
}

fn check_sequence(model: &TmcModel, seq: &LabeledSequence) -> Result<()> {
    seq.validate()?;
    if seq.d_x() != model.config.d_x || seq.classes != model.config.classes {
        return Err(contract(format!(
            "sequence (d_x {}, {} classes) does not fit the model (d_x {}, {} classes)",
            seq.d_x(),
            seq.classes,
            model.config.d_x,
            model.config.classes
        )));
    }
    Ok(())
}

/// Observed label as a constant one-hot, or a draw from `q_y` at a hidden
/// position. Returns the label node and whether it was hidden.
fn label_input<R: Rng + ?Sized>(
    g: &mut Graph,
    q_y: &LabelDistribution,
    observed: Option<usize>,
    classes: usize,
    rng: &mut R,
    opts: &ElboOptions,
) -> Result<(Var, bool)> {
    if let Some(c) = observed {
        return Ok((g.constant(one_hot(c, classes)), false));
    }
    let noise = gumbel_noise(rng, classes);
    let y = match opts.sampling {
        LabelSampling::Relaxed => q_y.gumbel_softmax(g, opts.temperature, &noise)?.soft,
        LabelSampling::Hard => {
            let scores: Vec<f64> = g
                .value(q_y.probs)
                .iter()
                .zip(&noise)
                .map(|(&p, &n)| p.max(1e-300).ln() + n)
                .collect();
            g.constant(one_hot(argmax(&scores), classes))
        }
    };
    Ok((y, true))
}

/// Builds the model-appropriate bound for one sampled trajectory.
pub fn build_elbo<R: Rng + ?Sized>(
    g: &mut Graph,
    p: &Bound,
    model: &TmcModel,
    seq: &LabeledSequence,
    rng: &mut R,
    opts: &ElboOptions,
) -> Result<ElboNodes> {
    check_sequence(model, seq)?;
    if !(opts.temperature > 0.0) {
        return Err(contract("temperature must be positive"));
    }
    match model.kind() {
        ModelKind::Dmtmc => elbo_generic(g, p, model, seq, rng, opts),
        ModelKind::Svrnn => elbo_svrnn(g, p, model, seq, rng, opts),
        ModelKind::Vsl => elbo_vsl(g, p, model, seq, rng),
    }
}

/// Bound for the d-mTMC under `q(z_t | x_t, y_t, h~) q(y_t | x_t, h~)`.
pub fn elbo_generic<R: Rng + ?Sized>(
    g: &mut Graph,
    p: &Bound,
    model: &TmcModel,
    seq: &LabeledSequence,
    rng: &mut R,
    opts: &ElboOptions,
) -> Result<ElboNodes> {
    let Nets::Dmtmc(n) = &model.nets else {
        return Err(contract("generic bound expects a d-mTMC model"));
    };
    let cfg = &model.config;
    let mut acc = Acc::default();
    let mut h = n.initial_state(g, cfg);
    let mut prev: Option<(Var, Var)> = None;
    for t in 0..seq.len() {
        let x = g.constant(seq.xs[t].clone());
        let q_y = n.q_y(g, p, cfg, x, h)?;
        let (y, hidden) = label_input(g, &q_y, seq.labels[t], cfg.classes, rng, opts)?;
        let q_z = n.q_z(g, p, cfg, x, y, h)?;
        let z = match &q_z {
            Some(q) => {
                let eps = standard_normal(rng, cfg.d_z);
                q.rsample(g, &eps)?
            }
            None => g.constant(Vec::new()),
        };
        let terms = n.transition(g, p, cfg, prev, x, y, z)?;
        acc.rec.push(terms.log_px);
        if let (Some(q), Some(lp)) = (&q_z, terms.log_pz) {
            let lq = q.log_pdf(g, z)?;
            acc.kl.push(g.sub(lp, lq)?);
        }
        if hidden {
            let lq = q_y.log_pmf(g, y)?;
            acc.ent.push(g.sub(terms.log_py, lq)?);
        } else {
            acc.sup.push(terms.log_py);
        }
        h = n.advance(g, p, x, y, z, h)?;
        prev = Some((y, z));
    }
    acc.finish(g, 1.0, 1.0, 0.0)
}

/// Generic bound over the SVRNN factorization plus
/// `alpha * sum_{t in L} [log p(y_t | h_{t-1}) + log q(y_t | x_t, h_{t-1})]`.
pub fn elbo_svrnn<R: Rng + ?Sized>(
    g: &mut Graph,
    p: &Bound,
    model: &TmcModel,
    seq: &LabeledSequence,
    rng: &mut R,
    opts: &ElboOptions,
) -> Result<ElboNodes> {
    let Nets::Svrnn(n) = &model.nets else {
        return Err(contract("SVRNN bound expects an SVRNN model"));
    };
    let cfg = &model.config;
    let mut acc = Acc::default();
    let mut h = n.initial_state(g, cfg);
    for t in 0..seq.len() {
        let x = g.constant(seq.xs[t].clone());
        let q_y = n.q_y(g, p, cfg, x, h)?;
        let (y, hidden) = label_input(g, &q_y, seq.labels[t], cfg.classes, rng, opts)?;
        let q_z = n.q_z(g, p, cfg, x, y, h)?;
        let z = match &q_z {
            Some(q) => {
                let eps = standard_normal(rng, cfg.d_z);
                q.rsample(g, &eps)?
            }
            None => g.constant(Vec::new()),
        };
        let (terms, h_next) = n.transition(g, p, cfg, h, x, y, z)?;
        acc.rec.push(terms.log_px);
        if let (Some(q), Some(lp)) = (&q_z, terms.log_pz) {
            let lq = q.log_pdf(g, z)?;
            acc.kl.push(g.sub(lp, lq)?);
        }
        let lq_y = q_y.log_pmf(g, y)?;
        if hidden {
            acc.ent.push(g.sub(terms.log_py, lq_y)?);
        } else {
            acc.sup.push(terms.log_py);
            acc.pen.push(g.add(terms.log_py, lq_y)?);
        }
        h = h_next;
    }
    acc.finish(g, 1.0, 1.0, cfg.alpha)
}

/// `sum_{t in L} log p(y_t | z_t)
///  + beta * sum_t [log p(x_t | z_t) + log p(z_t | x_{t-1}, z_{t-1}) - log q(z_t | x)]`
/// with one reparameterized `z` draw per step.
pub fn elbo_vsl<R: Rng + ?Sized>(
    g: &mut Graph,
    p: &Bound,
    model: &TmcModel,
    seq: &LabeledSequence,
    rng: &mut R,
) -> Result<ElboNodes> {
    let Nets::Vsl(n) = &model.nets else {
        return Err(contract("VSL bound expects a VSL model"));
    };
    let cfg = &model.config;
    let xs: Vec<Var> = seq.xs.iter().map(|x| g.constant(x.clone())).collect();
    let q = n.variational(g, p, cfg, &xs)?;
    let mut acc = Acc::default();
    let mut prev: Option<(Var, Var)> = None;
    for t in 0..seq.len() {
        let eps = standard_normal(rng, cfg.d_z);
        let z = q[t].rsample(g, &eps)?;
        let pz = n.prior_z(g, p, cfg, prev)?;
        let lp = pz.log_pdf(g, z)?;
        let lq = q[t].log_pdf(g, z)?;
        acc.kl.push(g.sub(lp, lq)?);
        let px = n.emission(g, p, cfg, z)?;
        acc.rec.push(px.log_pdf(g, xs[t])?);
        if let Some(c) = seq.labels[t] {
            let y = g.constant(one_hot(c, cfg.classes));
            let py = n.label(g, p, cfg, z)?;
            acc.sup.push(py.log_pmf(g, y)?);
        }
        prev = Some((z, xs[t]));
    }
    acc.finish(g, cfg.beta, cfg.beta, 0.0)
}

/// Averages `n` independent single-trajectory bounds (no gradients).
pub fn estimate<R: Rng + ?Sized>(
    model: &TmcModel,
    seq: &LabeledSequence,
    rng: &mut R,
    opts: &ElboOptions,
    n: usize,
) -> Result<ElboEstimate> {
    if n == 0 {
        return Err(contract("need at least one sample"));
    }
    let mut terms = ElboTerms::default();
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    let mut valid = true;
    let w = 1.0 / n as f64;
    for _ in 0..n {
        let mut g = Graph::new();
        let p = model.params.bind(&mut g);
        let nodes = build_elbo(&mut g, &p, model, seq, rng, opts)?;
        let sample = nodes.terms(&g);
        let v = g.scalar(nodes.total);
        valid &= v.is_finite();
        sum += v;
        sum_sq += v * v;
        terms.scaled_add(&sample, w);
    }
    let mean = sum * w;
    let std_error = if n > 1 {
        ((sum_sq - n as f64 * mean * mean).max(0.0) / (n - 1) as f64 / n as f64).sqrt()
    } else {
        0.0
    };
    Ok(ElboEstimate {
        total: terms.total(),
        terms,
        n_samples: n,
        std_error,
        valid,
    })
}
