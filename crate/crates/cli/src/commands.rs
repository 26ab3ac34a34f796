use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use anyhow::{Context, Result};
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use tmc_core::checkpoint::Checkpoint;
use tmc_core::data::{build_sequence, mask_labels, BinaryImage, GrayImage, HilbertMap, LabeledSequence};
use tmc_core::eval::{
    emit_table, error_rate, per_seed_csv, render_mask, render_observations, render_panel, render_segmentation, Decimal,
    SegmentationResult, TableEntry, TableOptions,
};
use tmc_core::experiment::{run_cell, RunSpec, Scenario};
use tmc_core::inference::{decode_labels, train_with, TrainConfig};
use tmc_core::models::{ModelKind, TmcModel};
use tmc_core::oracle::{forward_backward, hmm_as_dmtmc, DiscreteHmm};

use crate::config::RunConfig;
use crate::{Common, InputError};

const CONFIG_FILE: &str = "config.toml";
const ARCHIVE_FILE: &str = "archive.json";
const CHECKPOINT_FILE: &str = "checkpoint.json";
const TRACE_FILE: &str = "trace.csv";
const RESULTS_FILE: &str = "results.json";
const IMAGES_DIR: &str = "images";

fn load_config(common: &Common) -> Result<RunConfig> {
    match &common.config {
        Some(path) => RunConfig::load(path),
        None => Ok(RunConfig::default()),
    }
}

fn run_dir(common: &Common, cfg: &RunConfig, fallback: &str) -> Result<PathBuf> {
    let name = common.name.clone().unwrap_or_else(|| cfg.run_name(fallback));
    if name.is_empty() || name.contains(['/', '\\']) || name == ".." {
        return Err(InputError(format!("invalid run name '{name}'")).into());
    }
    Ok(common.out.join(name))
}

fn create_layout(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir.join(IMAGES_DIR)).with_context(|| format!("creating {}", dir.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn require(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(InputError(format!("{what} not found at {}", path.display())).into())
    }
}

fn load_archive(path: &Path) -> Result<LabeledSequence> {
    require(path, "sequence archive")?;
    LabeledSequence::load(path).with_context(|| format!("loading {}", path.display()))
}

fn curve_for(seq: &LabeledSequence) -> Option<HilbertMap> {
    let side = seq.provenance.side?;
    HilbertMap::for_side(side).ok().filter(|m| m.len() == seq.len())
}

pub fn gen_data(common: &Common) -> Result<()> {
    let mut cfg = load_config(common)?;
    if let Some(seed) = common.seed {
        cfg.data.seed = seed;
    }
    let scenario = cfg.scenario()?;
    let dir = run_dir(common, &cfg, &scenario.name)?;
    let (img, seq) = match &cfg.data.input {
        Some(path) => {
            require(path, "input bitmap")?;
            let img = BinaryImage::load(path).with_context(|| format!("loading {}", path.display()))?;
            let seed = cfg.data.seed;
            let seq = build_sequence(&img, &scenario.noise_spec(seed), scenario.fraction, seed.wrapping_add(1))?;
            (img, seq)
        }
        None => scenario.build(cfg.data.side, cfg.data.seed)?,
    };
    let map = HilbertMap::for_side(img.side())?;
    create_layout(&dir)?;
    write(&dir.join(CONFIG_FILE), &cfg.to_toml())?;
    seq.save(dir.join(ARCHIVE_FILE))?;
    let images = dir.join(IMAGES_DIR);
    img.save(images.join("truth.pbm"))?;
    render_observations(&seq, &map)?.save(images.join("observations.pgm"))?;
    render_mask(&seq, &map)?.save(images.join("mask.pgm"))?;
    info!(
        "{} steps, {} hidden labels -> {}",
        seq.len(),
        seq.unobserved().len(),
        dir.join(ARCHIVE_FILE).display()
    );
    Ok(())
}

/// Experiment defaults for `kind` overlaid with the config's model, train
/// and decode sections. Seeds derive from `seed` as in the table runs.
fn run_spec(cfg: &RunConfig, kind: ModelKind, seed: u64) -> RunSpec {
    let mut spec = RunSpec::preset(kind, seed);
    spec.model = cfg.model.config(kind);
    spec.train = TrainConfig {
        seed: spec.train.seed,
        ..cfg.train
    };
    spec.decode_samples = cfg.decode.samples;
    if let Some(s) = cfg.decode.seed {
        spec.decode_seed = s;
    }
    spec
}

fn check_compatible(model: &TmcModel, seq: &LabeledSequence) -> Result<()> {
    if model.config.d_x != seq.d_x() || model.config.classes != seq.classes {
        return Err(InputError(format!(
            "model expects d_x={} with {} classes, sequence has d_x={} with {} classes",
            model.config.d_x,
            model.config.classes,
            seq.d_x(),
            seq.classes
        ))
        .into());
    }
    Ok(())
}

pub fn train(common: &Common, archive: Option<PathBuf>) -> Result<()> {
    let cfg = load_config(common)?;
    let kind = cfg.model.kind;
    let seed = common.seed.unwrap_or(0);
    let dir = run_dir(common, &cfg, &format!("{}-{}", cfg.data.scenario, kind.slug()))?;
    let archive = archive.unwrap_or_else(|| dir.join(ARCHIVE_FILE));
    let seq = load_archive(&archive)?;
    let spec = run_spec(&cfg, kind, seed);
    let mut model = TmcModel::new(spec.model, spec.init_seed)?;
    check_compatible(&model, &seq)?;
    create_layout(&dir)?;
    write(&dir.join(CONFIG_FILE), &cfg.to_toml())?;
    let every = (spec.train.epochs / 10).max(1);
    let trace = train_with(&mut model, &seq, &spec.train, |r| {
        if (r.epoch + 1) % every == 0 {
            info!("epoch {} elbo {:.2}", r.epoch + 1, r.elbo);
        }
    })?;
    Checkpoint::from_model(&model, seed, spec.train.epochs as u64).save(dir.join(CHECKPOINT_FILE))?;
    write(&dir.join(TRACE_FILE), &trace.to_csv(false))?;
    info!("{} trained -> {}", kind.name(), dir.join(CHECKPOINT_FILE).display());
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct SegmentReport {
    error_rate: Option<f64>,
    result: SegmentationResult,
}

pub fn segment(
    common: &Common,
    checkpoint: Option<PathBuf>,
    archive: Option<PathBuf>,
    samples: Option<usize>,
) -> Result<()> {
    let cfg = load_config(common)?;
    let dir = run_dir(common, &cfg, &format!("{}-{}", cfg.data.scenario, cfg.model.kind.slug()))?;
    let ckpt_path = checkpoint.unwrap_or_else(|| dir.join(CHECKPOINT_FILE));
    require(&ckpt_path, "checkpoint")?;
    let ckpt = Checkpoint::load(&ckpt_path).with_context(|| format!("loading {}", ckpt_path.display()))?;
    let model = ckpt.to_model()?;
    let seq = load_archive(&archive.unwrap_or_else(|| dir.join(ARCHIVE_FILE)))?;
    check_compatible(&model, &seq)?;
    let seed = common.seed.unwrap_or(ckpt.seed);
    let spec = run_spec(&cfg, model.kind(), seed);
    let n = samples.unwrap_or(spec.decode_samples);
    if n == 0 {
        return Err(InputError("--samples must be positive".into()).into());
    }
    let decoded = decode_labels(&model, &seq, n, spec.decode_seed)?;
    create_layout(&dir)?;
    let (rate, result) = if seq.truth.is_some() {
        let mut r = SegmentationResult::new(model.kind(), &decoded, &seq)?;
        r.seed = seed;
        (Some(error_rate(&r)?), r)
    } else {
        let predicted: Vec<usize> = seq.labels.iter().zip(&decoded).map(|(l, &d)| l.unwrap_or(d)).collect();
        let r = SegmentationResult {
            kind: model.kind(),
            truth: predicted.clone(),
            predicted,
            hidden: seq.hidden_mask(),
            seed,
            epochs: 0,
            seconds: 0.0,
        };
        (None, r)
    };
    let report = SegmentReport {
        error_rate: rate,
        result: result.clone(),
    };
    write(&dir.join(RESULTS_FILE), &serde_json::to_string_pretty(&report)?)?;
    if let Some(map) = curve_for(&seq) {
        let images = dir.join(IMAGES_DIR);
        let seg = render_segmentation(&result, &map)?;
        seg.save(images.join(format!("segmentation-{}.pbm", model.kind().slug())))?;
        let mut slots = panel_base(&seq, &map)?;
        slots[3 + panel_slot(model.kind())] = Some(GrayImage::from_binary(&seg));
        render_panel(map.side(), &slots)?.save(images.join(format!("panel-{}.pgm", model.kind().slug())))?;
    }
    match rate {
        Some(r) => info!("{} error rate {:.2}% on {} hidden steps", model.kind().name(), 100.0 * r, result.hidden_count()),
        None => info!("{} decoded {} hidden steps (no ground truth)", model.kind().name(), result.hidden_count()),
    }
    Ok(())
}

fn panel_slot(kind: ModelKind) -> usize {
    match kind {
        ModelKind::Vsl => 0,
        ModelKind::Svrnn => 1,
        ModelKind::Dmtmc => 2,
    }
}

/// Observations, truth and mask slots; model slots left empty.
fn panel_base(seq: &LabeledSequence, map: &HilbertMap) -> Result<Vec<Option<GrayImage>>> {
    let mut slots = vec![None; 6];
    slots[0] = Some(render_observations(seq, map)?);
    if let Some(truth) = &seq.truth {
        slots[1] = Some(GrayImage::from_binary(&BinaryImage::from_sequence(truth, map)?));
    }
    slots[2] = Some(render_mask(seq, map)?);
    Ok(slots)
}

#[derive(Debug, Clone)]
struct CellJob {
    scenario: Scenario,
    kind: ModelKind,
    seed: u64,
    dir: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
struct CellRecord {
    scenario: String,
    label: String,
    kind: ModelKind,
    seed: u64,
    error_rate: f64,
    result: SegmentationResult,
}

fn run_table_cell(job: &CellJob, seq: &LabeledSequence, cfg: &RunConfig) -> Result<CellRecord> {
    let spec = run_spec(cfg, job.kind, job.seed);
    let out = run_cell(seq, &spec)?;
    fs::create_dir_all(&job.dir)?;
    Checkpoint::from_model(&out.model, job.seed, spec.train.epochs as u64).save(job.dir.join(CHECKPOINT_FILE))?;
    write(&job.dir.join(TRACE_FILE), &out.trace.to_csv(false))?;
    let record = CellRecord {
        scenario: job.scenario.name.clone(),
        label: job.scenario.label.clone(),
        kind: job.kind,
        seed: job.seed,
        error_rate: out.error_rate,
        result: out.result,
    };
    // Results last: their presence marks the cell complete.
    write(&job.dir.join(RESULTS_FILE), &serde_json::to_string_pretty(&record)?)?;
    Ok(record)
}

fn load_cell(path: &Path) -> Result<CellRecord> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn repro_table(common: &Common, jobs: usize) -> Result<()> {
    if jobs == 0 {
        return Err(InputError("--jobs must be positive".into()).into());
    }
    let mut cfg = load_config(common)?;
    if let Some(seed) = common.seed {
        cfg.data.seed = seed;
    }
    let dir = run_dir(common, &cfg, "table")?;
    create_layout(&dir)?;
    write(&dir.join(CONFIG_FILE), &cfg.to_toml())?;

    let mut sequences = Vec::new();
    for name in &cfg.table.scenarios {
        let scenario = Scenario::preset(name)?;
        let (_, seq) = scenario.build(cfg.data.side, cfg.data.seed)?;
        let sdir = dir.join("cells").join(&scenario.name);
        fs::create_dir_all(&sdir)?;
        seq.save(sdir.join(ARCHIVE_FILE))?;
        sequences.push((scenario, seq));
    }

    let mut pending = Vec::new();
    let mut records = Vec::new();
    for (si, (scenario, _)) in sequences.iter().enumerate() {
        for &kind in &cfg.table.models {
            for &seed in &cfg.table.seeds {
                let cdir = dir
                    .join("cells")
                    .join(&scenario.name)
                    .join(format!("{}-seed{seed}", kind.slug()));
                let results = cdir.join(RESULTS_FILE);
                if results.is_file() {
                    match load_cell(&results) {
                        Ok(r) => {
                            info!("{} {} seed {seed}: cached", scenario.name, kind.name());
                            records.push(r);
                            continue;
                        }
                        Err(e) => warn!("{}: unreadable ({e:#}), rerunning", results.display()),
                    }
                }
                pending.push((
                    si,
                    CellJob {
                        scenario: scenario.clone(),
                        kind,
                        seed,
                        dir: cdir,
                    },
                ));
            }
        }
    }

    let failures = Mutex::new(Vec::new());
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    let fresh: Vec<CellRecord> = pool.install(|| {
        pending
            .par_iter()
            .filter_map(|(si, job)| {
                let seq = &sequences[*si].1;
                match run_table_cell(job, seq, &cfg) {
                    Ok(r) => {
                        info!(
                            "{} {} seed {}: {:.2}% in {:.0}s",
                            job.scenario.name,
                            job.kind.name(),
                            job.seed,
                            100.0 * r.error_rate,
                            r.result.seconds
                        );
                        Some(r)
                    }
                    Err(e) => {
                        warn!("{} {} seed {} failed: {e:#}", job.scenario.name, job.kind.name(), job.seed);
                        failures.lock().unwrap().push(format!(
                            "{} {} seed {}: {e:#}",
                            job.scenario.name,
                            job.kind.name(),
                            job.seed
                        ));
                        None
                    }
                }
            })
            .collect()
    });
    records.extend(fresh);

    let entries: Vec<TableEntry> = records
        .iter()
        .map(|r| TableEntry {
            scenario: r.label.clone(),
            kind: r.kind,
            seed: r.seed,
            error_rate: r.error_rate,
        })
        .collect();
    let table = emit_table(&entries);
    let opts = TableOptions {
        decimal: if cfg.table.decimal_comma { Decimal::Comma } else { Decimal::Dot },
        reference: cfg.table.reference,
    };
    let text = table.to_text(opts);
    write(&dir.join("table.txt"), &text)?;
    write(&dir.join("table.csv"), &table.to_csv(opts))?;
    write(&dir.join("per_seed.csv"), &per_seed_csv(&entries))?;
    write_panels(&dir, &sequences, &records)?;
    println!("{text}");

    let failures = failures.into_inner().unwrap();
    if failures.is_empty() {
        Ok(())
    } else {
        anyhow::bail!("{} cell(s) failed:\n  {}", failures.len(), failures.join("\n  "))
    }
}

/// One panel per scenario and seed with every available model filled in.
fn write_panels(dir: &Path, sequences: &[(Scenario, LabeledSequence)], records: &[CellRecord]) -> Result<()> {
    let images = dir.join(IMAGES_DIR);
    for (scenario, seq) in sequences {
        let Some(map) = curve_for(seq) else { continue };
        let mut seeds: Vec<u64> = records.iter().filter(|r| r.scenario == scenario.name).map(|r| r.seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        for seed in seeds {
            let mut slots = panel_base(seq, &map)?;
            for r in records.iter().filter(|r| r.scenario == scenario.name && r.seed == seed) {
                let seg = render_segmentation(&r.result, &map)?;
                slots[3 + panel_slot(r.kind)] = Some(GrayImage::from_binary(&seg));
            }
            render_panel(map.side(), &slots)?.save(images.join(format!("{}-seed{seed}.pgm", scenario.name)))?;
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct OracleReport {
    length: usize,
    hidden: usize,
    log_evidence: f64,
    map_error_rate: f64,
    dmtmc_error_rate: f64,
    gap_points: f64,
}

pub fn oracle(common: &Common) -> Result<()> {
    use rand::SeedableRng;

    let cfg = load_config(common)?;
    let o = &cfg.oracle;
    let seed = common.seed.unwrap_or(cfg.data.seed);
    let dir = run_dir(common, &cfg, "oracle")?;
    let k = o.means.len();
    let off = (1.0 - o.persistence) / (k - 1) as f64;
    let hmm = DiscreteHmm {
        initial: vec![1.0 / k as f64; k],
        transition: (0..k)
            .map(|i| (0..k).map(|j| if i == j { o.persistence } else { off }).collect())
            .collect(),
        means: o.means.clone(),
        stds: vec![o.std; k],
    };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let (truth, xs) = hmm.sample(&mut rng, o.length);
    let hidden = mask_labels(o.length, o.fraction, seed.wrapping_add(1))?;
    let seq = LabeledSequence::from_truth(xs.iter().map(|&x| vec![x]).collect(), truth, &hidden, k)?;
    let smoothed = forward_backward(&hmm, &xs, &seq.labels)?;
    let map_result = SegmentationResult::new(ModelKind::Dmtmc, &smoothed.map_labels(), &seq)?;

    let dims = cfg.model.config(ModelKind::Dmtmc);
    let mut model = hmm_as_dmtmc(&hmm, dims.hidden_units, dims.rnn_state_dim, seed.wrapping_add(2))?;
    let train_cfg = TrainConfig {
        epochs: o.epochs,
        lr: o.lr,
        seed: seed.wrapping_add(3),
        freeze_generative: true,
        ..cfg.train
    };
    train_with(&mut model, &seq, &train_cfg, |_| {})?;
    let decoded = decode_labels(&model, &seq, cfg.decode.samples, seed.wrapping_add(4))?;
    let tmc_result = SegmentationResult::new(ModelKind::Dmtmc, &decoded, &seq)?;

    let map_er = error_rate(&map_result)?;
    let tmc_er = error_rate(&tmc_result)?;
    let report = OracleReport {
        length: o.length,
        hidden: seq.unobserved().len(),
        log_evidence: smoothed.log_evidence,
        map_error_rate: map_er,
        dmtmc_error_rate: tmc_er,
        gap_points: 100.0 * (tmc_er - map_er),
    };
    create_layout(&dir)?;
    write(&dir.join(CONFIG_FILE), &cfg.to_toml())?;
    seq.save(dir.join(ARCHIVE_FILE))?;
    write(&dir.join(RESULTS_FILE), &serde_json::to_string_pretty(&report)?)?;
    println!(
        "smoothing MAP {:.2}%  embedded d-mTMC {:.2}%  gap {:+.2} points  log p = {:.3}",
        100.0 * map_er,
        100.0 * tmc_er,
        report.gap_points,
        smoothed.log_evidence
    );
    Ok(())
}
