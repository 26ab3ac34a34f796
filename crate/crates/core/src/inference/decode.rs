//! Posterior label estimates from a trained model.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, Var};
use crate::data::LabeledSequence;
use crate::distributions::{argmax, one_hot, sample_categorical, standard_normal};
use crate::error::{contract, Result};
use crate::models::{Nets, TmcModel};

/// Estimated `p(y_t | x, y^L)` per step. Observed steps carry their label as
/// a one-hot row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelPosterior {
    pub probs: Vec<Vec<f64>>,
}

impl LabelPosterior {
    /// Per-step argmax; ties resolve to the first class.
    pub fn decode(&self) -> Vec<usize> {
        self.probs.iter().map(|p| argmax(p)).collect()
    }
}

/// Runs the variational recursion `n_samples` times and averages the label
/// posterior at every hidden step. Hidden labels along a trajectory are hard
/// draws from `q(y_t | ...)`; latents use the reparameterized draw. For VSL
/// the average is of `p(y_t | z_t)` with `z_t ~ q(z_t | x)`.
pub fn posterior_labels(model: &TmcModel, seq: &LabeledSequence, n_samples: usize, seed: u64) -> Result<LabelPosterior> {
    if n_samples < 1 {
        return Err(contract("posterior decoding needs at least one sample"));
    }
    seq.validate()?;
    let cfg = &model.config;
    if seq.d_x() != cfg.d_x || seq.classes != cfg.classes {
        return Err(contract("sequence does not fit the model"));
    }
    let c = cfg.classes;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sums = vec![vec![0.0; c]; seq.len()];

    for _ in 0..n_samples {
        let mut g = Graph::new();
        let p = model.params.bind(&mut g);
        match &model.nets {
            Nets::Dmtmc(n) => {
                let mut h = n.initial_state(&mut g, cfg);
                for t in 0..seq.len() {
                    let x = g.constant(seq.xs[t].clone());
                    let q_y = n.q_y(&mut g, &p, cfg, x, h)?;
                    let probs = g.value(q_y.probs).to_vec();
                    let label = seq.labels[t].unwrap_or_else(|| sample_categorical(&mut rng, &probs));
                    add(&mut sums[t], &probs);
                    let y = g.constant(one_hot(label, c));
                    let q_z = n.q_z(&mut g, &p, cfg, x, y, h)?;
                    let z = draw_z(&mut g, q_z, cfg.d_z, &mut rng)?;
                    h = n.advance(&mut g, &p, x, y, z, h)?;
                }
            }
            Nets::Svrnn(n) => {
                let mut h = n.initial_state(&mut g, cfg);
                for t in 0..seq.len() {
                    let x = g.constant(seq.xs[t].clone());
                    let q_y = n.q_y(&mut g, &p, cfg, x, h)?;
                    let probs = g.value(q_y.probs).to_vec();
                    let label = seq.labels[t].unwrap_or_else(|| sample_categorical(&mut rng, &probs));
                    add(&mut sums[t], &probs);
                    let y = g.constant(one_hot(label, c));
                    let q_z = n.q_z(&mut g, &p, cfg, x, y, h)?;
                    let z = draw_z(&mut g, q_z, cfg.d_z, &mut rng)?;
                    h = n.recur(&mut g, &p, z, y, x, h)?;
                }
            }
            Nets::Vsl(n) => {
                let xs: Vec<Var> = seq.xs.iter().map(|x| g.constant(x.clone())).collect();
                let q = n.variational(&mut g, &p, cfg, &xs)?;
                for t in 0..seq.len() {
                    let eps = standard_normal(&mut rng, cfg.d_z);
                    let z = q[t].rsample(&mut g, &eps)?;
                    let py = n.label(&mut g, &p, cfg, z)?;
                    add(&mut sums[t], g.value(py.probs));
                }
            }
        }
    }

    let probs = sums
        .into_iter()
        .enumerate()
        .map(|(t, s)| match seq.labels[t] {
            Some(label) => one_hot(label, c),
            None => s.iter().map(|v| v / n_samples as f64).collect(),
        })
        .collect();
    Ok(LabelPosterior { probs })
}

/// Argmax labels at hidden steps, observed labels elsewhere.
pub fn decode_labels(model: &TmcModel, seq: &LabeledSequence, n_samples: usize, seed: u64) -> Result<Vec<usize>> {
    Ok(posterior_labels(model, seq, n_samples, seed)?.decode())
}

fn add(acc: &mut [f64], v: &[f64]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += b;
    }
}

fn draw_z(
    g: &mut Graph,
    q: Option<crate::distributions::DiagGaussian>,
    d_z: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Var> {
    match q {
        Some(q) => {
            let eps = standard_normal(rng, d_z);
            q.rsample(g, &eps)
        }
        None => Ok(g.constant(Vec::new())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ModelKind, TmcConfig};

    fn seq() -> LabeledSequence {
        let truth: Vec<usize> = (0..20).map(|t| (t / 4) % 2).collect();
        let xs = truth.iter().map(|&y| vec![y as f64 - 0.5]).collect();
        let hidden: Vec<bool> = (0..20).map(|t| t % 2 == 1).collect();
        LabeledSequence::from_truth(xs, truth, &hidden, 2).unwrap()
    }

    #[test]
    fn simplex_rows_and_passthrough() {
        let s = seq();
        for kind in ModelKind::ALL {
            let m = TmcModel::new(TmcConfig::preset(kind), 6).unwrap();
            let post = posterior_labels(&m, &s, 3, 1).unwrap();
            for (t, row) in post.probs.iter().enumerate() {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
                if let Some(y) = s.labels[t] {
                    assert_eq!(row, &one_hot(y, 2));
                }
            }
            assert_eq!(post, posterior_labels(&m, &s, 3, 1).unwrap());
        }
    }

    #[test]
    fn needs_a_sample() {
        let m = TmcModel::new(TmcConfig::preset(ModelKind::Dmtmc), 6).unwrap();
        assert!(posterior_labels(&m, &seq(), 0, 1).is_err());
    }
}
