//! One PASS / FAIL line per acceptance criterion.
//!
//! Run all: `cargo test -p tmc-core --test acceptance`
//! Run some: `cargo test -p tmc-core --test acceptance -- 1 3 5`
//!
//! Failures are reported but only fail the process when
//! `TMC_ACCEPTANCE_STRICT=1` is set.

mod common;

use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{
    brute_force_hmm, elbo_gradient_pairs, elbo_value, jitter, one_hot, plain_dmtmc_joint, random_hmm, random_sequence,
    rel_close,
};
use tmc_core::autodiff::Graph;
use tmc_core::data::{HilbertMap, LabeledSequence};
use tmc_core::distributions::{argmax, gaussian_log_pdf, gumbel_noise, standard_normal, DiagGaussian};
use tmc_core::eval::{error_rate, SegmentationResult};
use tmc_core::experiment::{run_cell, RunSpec, Scenario, DEFAULT_SIDE};
use tmc_core::inference::{decode_labels, estimate, train, ElboOptions, LabelSampling, TrainConfig};
use tmc_core::models::{ModelKind, TmcConfig, TmcModel};
use tmc_core::oracle::{enumerate_loglik, forward_backward, hmm_as_dmtmc, DiscreteHmm};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn main() {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(usize, &str, fn() -> Outcome); 8] = [
        (1, "ELBO gradients vs central differences", gradients),
        (2, "ELBO stays below the enumerated evidence", bound),
        (3, "fully observed bound equals the joint", exactness),
        (4, "smoothing oracle and embedded-chain decoding", oracle_agreement),
        (5, "Hilbert bijection and adjacency", hilbert),
        (6, "Gaussian KL and Gumbel-max sampling", distributions),
        (7, "segmentation error rates and model ordering", segmentation),
        (8, "factorization invariances", invariances),
    ];
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let out = run();
        let verdict = if out.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {id}: {verdict}  {name}  ({}; {:.1}s)",
            out.detail,
            start.elapsed().as_secs_f64()
        );
        failed += usize::from(!out.pass);
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        if std::env::var("TMC_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
            std::process::exit(1);
        }
    } else {
        println!("all criteria passed");
    }
}

fn preset(kind: ModelKind, d_z: usize, seed: u64) -> TmcModel {
    let mut cfg = TmcConfig::preset(kind);
    cfg.d_z = d_z;
    let mut m = TmcModel::new(cfg, seed).unwrap();
    jitter(&mut m, 0.1, seed + 17);
    m
}

/// 20 random scalar parameters per model kind, one fixed noise stream.
fn gradients() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    let mut bad = 0;
    for (i, kind) in ModelKind::ALL.into_iter().enumerate() {
        let m = preset(kind, 2, i as u64);
        let seq = random_sequence(&mut rng, 12, &[1, 2, 4, 7, 8, 11], 2);
        for (a, n) in elbo_gradient_pairs(&m, &seq, 100 + i as u64, 20, 200 + i as u64) {
            if !rel_close(a, n, 1e-3, 1e-6) {
                bad += 1;
            }
            if n.abs() > 1e-6 {
                worst = worst.max((a - n).abs() / a.abs().max(n.abs()));
            }
        }
    }
    let fast = start.elapsed() < Duration::from_secs(60);
    Outcome::new(bad == 0 && fast, format!("60 parameters, {bad} mismatches, worst rel. err {worst:.1e}"))
}

fn compact(seed: u64) -> TmcModel {
    let mut cfg = TmcConfig::preset(ModelKind::Dmtmc);
    cfg.d_z = 0;
    cfg.hidden_units = 8;
    cfg.rnn_state_dim = 6;
    let mut m = TmcModel::new(cfg, seed).unwrap();
    jitter(&mut m, 0.3, seed + 17);
    m
}

/// 20 random d-mTMC models without continuous latent, 6 steps, 3 hidden.
/// Hidden labels are exact draws from q so each sample is a true bound.
fn bound() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let opts = ElboOptions {
        sampling: LabelSampling::Hard,
        ..ElboOptions::default()
    };
    let n = 100_000;
    let mut violations = Vec::new();
    let mut worst_z = f64::NEG_INFINITY;
    for i in 0..20u64 {
        let m = compact(1000 + i);
        let mut hidden: Vec<usize> = (0..6).collect();
        for k in (1..6).rev() {
            hidden.swap(k, rng.random_range(0..=k));
        }
        hidden.truncate(3);
        let seq = random_sequence(&mut rng, 6, &hidden, 2);
        let exact = enumerate_loglik(&m, &seq).unwrap();
        let est = estimate(&m, &seq, &mut rng, &opts, n).unwrap();
        let (mean, se) = (est.total, est.std_error);
        let z = (mean - exact) / se.max(1e-300);
        worst_z = worst_z.max(z);
        if mean > exact + 3.0 * se {
            violations.push(i);
        }
    }
    let fast = start.elapsed() < Duration::from_secs(120);
    Outcome::new(
        violations.is_empty() && fast,
        format!(
            "20 models x 1e5 samples, largest (mean - log p) = {worst_z:.1} std errors, violations {violations:?}"
        ),
    )
}

/// 50 random instances with every label observed and no continuous latent.
fn exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for i in 0..50u64 {
        let m = preset(ModelKind::Dmtmc, 0, 2000 + i);
        let len = rng.random_range(1..=16);
        let seq = random_sequence(&mut rng, len, &[], 2);
        let ys: Vec<usize> = seq.labels.iter().map(|l| l.unwrap()).collect();
        let exact = plain_dmtmc_joint(&m, &seq.xs, &ys, &vec![Vec::new(); len]);
        let elbo = elbo_value(&m, &seq, i, &ElboOptions::default());
        worst = worst.max((elbo - exact).abs());
    }
    Outcome::new(worst <= 1e-10, format!("50 instances, max |ELBO - log p| = {worst:.1e}"))
}

fn oracle_agreement() -> Outcome {
    // Smoothing vs brute force over every label path of 7 steps.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let hmm = random_hmm(&mut rng);
        let (labels, xs) = hmm.sample(&mut rng, 7);
        let observed: Vec<Option<usize>> = labels
            .iter()
            .map(|&y| (rng.random::<f64>() < 0.3).then_some(y))
            .collect();
        let s = forward_backward(&hmm, &xs, &observed).unwrap();
        let (post, evidence) = brute_force_hmm(&hmm, &xs, &observed);
        worst = worst.max((s.log_evidence - evidence).abs());
        for (a, b) in s.posteriors.iter().zip(&post) {
            for (p, q) in a.iter().zip(b) {
                worst = worst.max((p - q).abs());
            }
        }
    }
    let exact_ok = worst <= 1e-10;

    // Known chain embedded as a d-mTMC; only the variational nets train.
    let hmm = DiscreteHmm {
        initial: vec![0.5, 0.5],
        transition: vec![vec![0.95, 0.05], vec![0.05, 0.95]],
        means: vec![-1.0, 1.0],
        stds: vec![1.0, 1.0],
    };
    let mut chain_rng = ChaCha8Rng::seed_from_u64(40);
    let (truth, xs) = hmm.sample(&mut chain_rng, 256);
    let hidden = tmc_core::data::mask_labels(256, 0.5, 41).unwrap();
    let seq = LabeledSequence::from_truth(xs.iter().map(|&x| vec![x]).collect(), truth.clone(), &hidden, 2).unwrap();
    let observed: Vec<Option<usize>> = seq.labels.clone();
    let map = forward_backward(&hmm, &xs, &observed).unwrap().map_labels();
    let score = |decoded: &[usize]| error_rate(&SegmentationResult::new(ModelKind::Dmtmc, decoded, &seq).unwrap()).unwrap();
    let er_map = score(&map);

    let mut model = hmm_as_dmtmc(&hmm, 25, 47, 42).unwrap();
    let cfg = TrainConfig {
        epochs: 1500,
        lr: 3e-3,
        seed: 43,
        freeze_generative: true,
        ..TrainConfig::default()
    };
    let frozen_before: Vec<f64> = generative_values(&model);
    train(&mut model, &seq, &cfg).unwrap();
    let frozen = generative_values(&model) == frozen_before;
    let decoded = decode_labels(&model, &seq, 16, 44).unwrap();
    let er_tmc = score(&decoded);
    let close = (er_tmc - er_map).abs() <= 0.02;
    Outcome::new(
        exact_ok && close && frozen,
        format!(
            "max deviation {worst:.1e}; chain of 256 steps: d-mTMC ER {:.2}% vs MAP {:.2}%",
            100.0 * er_tmc,
            100.0 * er_map
        ),
    )
}

fn generative_values(m: &TmcModel) -> Vec<f64> {
    m.params
        .tensors()
        .iter()
        .filter(|t| t.group == tmc_core::nn::Group::Generative)
        .flat_map(|t| t.data.iter().copied())
        .collect()
}

fn hilbert() -> Outcome {
    let start = Instant::now();
    let mut ok = true;
    for order in 1..=6 {
        let map = HilbertMap::new(order).unwrap();
        let side = map.side();
        let mut seen = vec![false; side * side];
        for i in 0..map.len() {
            let (r, c) = map.cell(i);
            ok &= r < side && c < side && !seen[r * side + c] && map.index(r, c) == i;
            seen[r * side + c] = true;
            if i > 0 {
                let (pr, pc) = map.cell(i - 1);
                ok &= pr.abs_diff(r) + pc.abs_diff(c) == 1;
            }
        }
        ok &= seen.iter().all(|&s| s);
    }
    let elapsed = start.elapsed();
    Outcome::new(
        ok && elapsed < Duration::from_secs(1),
        format!("orders 1-6 exhaustive in {:.1} ms", elapsed.as_secs_f64() * 1e3),
    )
}

fn distributions() -> Outcome {
    let (mq, sq) = ([0.4, -1.0, 0.2], [0.7, 1.6, 0.3]);
    let (mp, sp) = ([-0.2, 0.5, 0.0], [1.1, 0.9, 0.5]);
    let mut g = Graph::new();
    let q = {
        let m = g.constant(mq.to_vec());
        let s = g.constant(sq.to_vec());
        DiagGaussian::new(&g, m, s).unwrap()
    };
    let p = {
        let m = g.constant(mp.to_vec());
        let s = g.constant(sp.to_vec());
        DiagGaussian::new(&g, m, s).unwrap()
    };
    let kl_node = q.kl(&mut g, &p).unwrap();
    let kl = g.scalar(kl_node);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let n = 100_000;
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..n {
        let eps = standard_normal(&mut rng, 3);
        let d: f64 = (0..3)
            .map(|k| {
                let z = mq[k] + sq[k] * eps[k];
                gaussian_log_pdf(mq[k], sq[k], z) - gaussian_log_pdf(mp[k], sp[k], z)
            })
            .sum();
        sum += d;
        sum_sq += d * d;
    }
    let mean = sum / n as f64;
    let se = ((sum_sq / n as f64 - mean * mean) / n as f64).sqrt();
    let kl_ok = (mean - kl).abs() <= 3.0 * se;

    let probs: [f64; 3] = [0.1, 0.55, 0.35];
    let mut counts = [0usize; 3];
    for _ in 0..n {
        let noise = gumbel_noise(&mut rng, 3);
        let scores: Vec<f64> = probs.iter().zip(&noise).map(|(p, e)| p.ln() + e).collect();
        counts[argmax(&scores)] += 1;
    }
    let worst = counts
        .iter()
        .zip(probs)
        .map(|(&c, p)| (c as f64 / n as f64 - p).abs())
        .fold(0.0, f64::max);
    Outcome::new(
        kl_ok && worst <= 0.01,
        format!(
            "KL {kl:.4} vs MC {mean:.4} ± {se:.4}; Gumbel-max max frequency error {worst:.4}"
        ),
    )
}

fn invariances() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut ok = true;
    for i in 0..20u64 {
        let vsl = preset(ModelKind::Vsl, 2, 3000 + i);
        let n = vsl.vsl().unwrap();
        let cfg = vsl.config;
        let z_prev: Vec<f64> = standard_normal(&mut rng, 2);
        let z: Vec<f64> = standard_normal(&mut rng, 2);
        let (x_prev, x) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let soft: f64 = rng.random();
        let log_px = |y: Vec<f64>| {
            let mut g = Graph::new();
            let p = vsl.params.bind(&mut g);
            let zp = g.constant(z_prev.clone());
            let xp = g.constant(vec![x_prev]);
            let xv = g.constant(vec![x]);
            let yv = g.constant(y);
            let zv = g.constant(z.clone());
            let t = n.transition(&mut g, &p, &cfg, Some((zp, xp)), xv, yv, zv).unwrap();
            g.scalar(t.log_px).to_bits()
        };
        let base = log_px(one_hot(0, 2));
        ok &= base == log_px(one_hot(1, 2)) && base == log_px(vec![1.0 - soft, soft]);

        let tmc = preset(ModelKind::Dmtmc, 2, 4000 + i);
        let n = tmc.dmtmc().unwrap();
        let cfg = tmc.config;
        let y_prev = rng.random_range(0..2);
        let y = rng.random_range(0..2);
        let chain_terms = |x: f64| {
            let mut g = Graph::new();
            let p = tmc.params.bind(&mut g);
            let yp = g.constant(one_hot(y_prev, 2));
            let zp = g.constant(z_prev.clone());
            let xv = g.constant(vec![x]);
            let yv = g.constant(one_hot(y, 2));
            let zv = g.constant(z.clone());
            let t = n.transition(&mut g, &p, &cfg, Some((yp, zp)), xv, yv, zv).unwrap();
            (g.scalar(t.log_py).to_bits(), g.scalar(t.log_pz.unwrap()).to_bits())
        };
        let base = chain_terms(x);
        for _ in 0..5 {
            ok &= chain_terms(x + rng.random_range(-10.0..10.0)) == base;
        }
    }
    Outcome::new(ok, "20 random VSL and d-mTMC models, bitwise equality")
}

struct Cell {
    scenario: &'static str,
    kind: ModelKind,
    seed: u64,
}

/// Best-of-3 error rates on the side-64 scenarios, trained in parallel
/// across the available cores.
fn segmentation() -> Outcome {
    let mut cells = Vec::new();
    for (scenario, kinds) in [
        ("cattle-40", &[ModelKind::Dmtmc][..]),
        ("camel-40", &[ModelKind::Dmtmc, ModelKind::Svrnn, ModelKind::Vsl][..]),
        ("camel-60", &[ModelKind::Dmtmc, ModelKind::Svrnn][..]),
    ] {
        for &kind in kinds {
            for seed in 0..3 {
                cells.push(Cell { scenario, kind, seed });
            }
        }
    }
    let results: Mutex<Vec<(usize, f64, f64)>> = Mutex::new(Vec::new());
    let next = Mutex::new(0usize);
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(cells.len());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = {
                    let mut n = next.lock().unwrap();
                    let i = *n;
                    *n += 1;
                    i
                };
                let Some(cell) = cells.get(i) else { break };
                let (_, seq) = Scenario::preset(cell.scenario).unwrap().build(DEFAULT_SIDE, 0).unwrap();
                let out = run_cell(&seq, &RunSpec::preset(cell.kind, cell.seed)).unwrap();
                results.lock().unwrap().push((i, out.error_rate, out.result.seconds));
            });
        }
    });
    let results = results.into_inner().unwrap();
    let best = |scenario: &str, kind: ModelKind| {
        results
            .iter()
            .filter(|(i, _, _)| cells[*i].scenario == scenario && cells[*i].kind == kind)
            .map(|&(_, er, _)| er)
            .fold(f64::INFINITY, f64::min)
    };
    let slowest = results.iter().map(|r| r.2).fold(0.0, f64::max);
    let d_cattle = best("cattle-40", ModelKind::Dmtmc);
    let d40 = best("camel-40", ModelKind::Dmtmc);
    let s40 = best("camel-40", ModelKind::Svrnn);
    let v40 = best("camel-40", ModelKind::Vsl);
    let d60 = best("camel-60", ModelKind::Dmtmc);
    let s60 = best("camel-60", ModelKind::Svrnn);
    let checks = [
        d_cattle <= 0.06,
        d40 <= 0.08,
        d60 <= 0.12,
        d40 < s40 && s40 < v40,
        d60 < s60,
        slowest <= 15.0 * 60.0,
    ];
    let pct = |v: f64| format!("{:.2}%", 100.0 * v);
    Outcome::new(
        checks.iter().all(|&c| c),
        format!(
            "d-mTMC cattle-40 {} / camel-40 {} / camel-60 {}; camel-40 SVRNN {} VSL {}; camel-60 SVRNN {}; \
             checks [cattle, camel-40, camel-60, order-40, order-60, time] = {:?}; slowest run {:.0}s",
            pct(d_cattle),
            pct(d40),
            pct(d60),
            pct(s40),
            pct(v40),
            pct(s60),
            checks,
            slowest
        ),
    )
}
