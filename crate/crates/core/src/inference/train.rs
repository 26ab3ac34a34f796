//! Adam on the negative Monte-Carlo bound.

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::elbo::{build_elbo, ElboOptions, ElboTerms, LabelSampling};
use crate::autodiff::Graph;
use crate::data::LabeledSequence;
use crate::error::{contract, Error, Result};
use crate::models::{TemperatureSchedule, TmcModel};
use crate::nn::{clip_global_norm, AdamConfig, AdamState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Trajectories averaged per gradient step.
    pub mc_samples: usize,
    pub seed: u64,
    /// Overrides the model's own schedule when set.
    pub temperature: Option<TemperatureSchedule>,
    /// Global gradient-norm ceiling.
    pub clip: f64,
    /// Only the variational networks move.
    pub freeze_generative: bool,
    /// Split the sequence into consecutive windows of this many steps, one
    /// gradient step per window (visited in shuffled order every epoch).
    /// `None` takes whole-sequence steps.
    pub window: Option<usize>,
    pub sampling: LabelSampling,
    /// Abort after more than this many consecutive rejected steps.
    pub max_skips: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            lr: 1e-3,
            mc_samples: 1,
            seed: 0,
            temperature: None,
            clip: 5.0,
            freeze_generative: false,
            window: None,
            sampling: LabelSampling::Relaxed,
            max_skips: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || self.mc_samples == 0 || !(self.clip > 0.0) {
            return Err(contract("lr, mc_samples and clip must be positive"));
        }
        if self.window == Some(0) {
            return Err(contract("window must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Bound summed over the epoch's windows (the whole sequence).
    pub elbo: f64,
    pub terms: ElboTerms,
    /// Wall-clock since training started.
    pub seconds: f64,
    pub skipped_steps: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub records: Vec<EpochRecord>,
    pub rejected_steps: usize,
}

impl TrainTrace {
    pub fn elbos(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.elbo).collect()
    }

    /// Comma-separated table with a header row.
    pub fn to_csv(&self, with_time: bool) -> String {
        let mut s = String::from("epoch,elbo");
        for name in ElboTerms::NAMES {
            s.push(',');
            s.push_str(name);
        }
        s.push_str(",skipped");
        if with_time {
            s.push_str(",seconds");
        }
        s.push('\n');
        for r in &self.records {
            write!(s, "{},{:?}", r.epoch, r.elbo).unwrap();
            for v in r.terms.as_array() {
                write!(s, ",{v:?}").unwrap();
            }
            write!(s, ",{}", r.skipped_steps).unwrap();
            if with_time {
                write!(s, ",{:.3}", r.seconds).unwrap();
            }
            s.push('\n');
        }
        s
    }
}

/// Trains `model` in place; reproducible given `cfg.seed`.
pub fn train(model: &mut TmcModel, seq: &LabeledSequence, cfg: &TrainConfig) -> Result<TrainTrace> {
    train_with(model, seq, cfg, |_| {})
}

/// As [`train`], calling `on_epoch` after every epoch.
pub fn train_with(
    model: &mut TmcModel,
    seq: &LabeledSequence,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainTrace> {
    cfg.validate()?;
    seq.validate()?;
    let windows: Vec<LabeledSequence> = match cfg.window {
        Some(w) if w < seq.len() => (0..seq.len())
            .step_by(w)
            .map(|s| seq.window(s..(s + w).min(seq.len())))
            .collect::<Result<_>>()?,
        _ => vec![seq.clone()],
    };
    let schedule = cfg.temperature.unwrap_or(model.config.temperature);
    let mask = model.trainable_mask(cfg.freeze_generative);
    let mut adam = AdamState::new(
        &model.params,
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
    );
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut trace = TrainTrace::default();
    let mut consecutive = 0;
    let start = Instant::now();

    for epoch in 0..cfg.epochs {
        let progress = if cfg.epochs > 1 { epoch as f64 / (cfg.epochs - 1) as f64 } else { 1.0 };
        let opts = ElboOptions {
            temperature: schedule.at(progress),
            sampling: cfg.sampling,
        };
        order.shuffle(&mut rng);
        let mut terms = ElboTerms::default();
        let mut skipped = 0;
        for &w in &order {
            let mut g = Graph::with_capacity(128 * windows[w].len() * cfg.mc_samples);
            let p = model.params.bind(&mut g);
            let mut totals = Vec::with_capacity(cfg.mc_samples);
            let mut step_terms = ElboTerms::default();
            for _ in 0..cfg.mc_samples {
                let nodes = build_elbo(&mut g, &p, model, &windows[w], &mut rng, &opts)?;
                let t = nodes.terms(&g);
                step_terms = add_terms(step_terms, t, 1.0 / cfg.mc_samples as f64);
                totals.push(nodes.total);
            }
            let stacked = g.concat(&totals);
            let sum = g.sum(stacked);
            let loss = g.scale(sum, -1.0 / cfg.mc_samples as f64);

            let mut accepted = g.scalar(loss).is_finite();
            if accepted {
                let grads = g.backward(loss)?;
                let mut gv: Vec<Vec<f64>> = p.vars().iter().map(|&v| grads.to_vec(v)).collect();
                clip_global_norm(&mut gv, cfg.clip);
                accepted = adam.step(&mut model.params, &gv, Some(&mask))?;
            } else {
                log::warn!("epoch {epoch}: non-finite bound, step skipped");
            }
            if accepted {
                consecutive = 0;
                terms = add_terms(terms, step_terms, 1.0);
            } else {
                skipped += 1;
                consecutive += 1;
                trace.rejected_steps += 1;
                if consecutive > cfg.max_skips {
                    return Err(Error::TrainingAborted { epoch, skips: consecutive });
                }
            }
        }
        let record = EpochRecord {
            epoch,
            elbo: terms.total(),
            terms,
            seconds: start.elapsed().as_secs_f64(),
            skipped_steps: skipped,
        };
        log::debug!("epoch {epoch}: elbo {:.3}", record.elbo);
        on_epoch(&record);
        trace.records.push(record);
    }
    Ok(trace)
}

fn add_terms(mut a: ElboTerms, b: ElboTerms, w: f64) -> ElboTerms {
    a.reconstruction += w * b.reconstruction;
    a.kl_or_prior += w * b.kl_or_prior;
    a.label_supervised += w * b.label_supervised;
    a.label_entropy += w * b.label_entropy;
    a.penalty += w * b.penalty;
    a
}
