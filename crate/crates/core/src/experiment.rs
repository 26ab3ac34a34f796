//! Segmentation scenarios and the generate / train / decode pipeline for one
//! table cell.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{build_sequence, generate_shape, BinaryImage, LabeledSequence, NoiseKind, NoiseSpec, ShapeKind};
use crate::error::{contract, Result};
use crate::eval::{error_rate, SegmentationResult};
use crate::inference::{decode_labels, train, TrainConfig, TrainTrace};
use crate::models::{ModelKind, TmcConfig, TmcModel};

pub const DEFAULT_SIDE: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// Short identifier used in paths, e.g. `camel-40`.
    pub name: String,
    /// Table column label, e.g. `Camel 40%`.
    pub label: String,
    pub shape: ShapeKind,
    pub shape_seed: u64,
    pub noise: NoiseKind,
    /// Fraction of hidden labels.
    pub fraction: f64,
}

impl Scenario {
    pub fn preset(name: &str) -> Result<Self> {
        let (label, shape, shape_seed, noise, fraction) = match name {
            "cattle-40" => ("Cattle 40%", ShapeKind::Blob, 1, NoiseKind::CattleSin, 0.4),
            "camel-40" => ("Camel 40%", ShapeKind::Polygon, 2, NoiseKind::CamelMult, 0.4),
            "camel-60" => ("Camel 60%", ShapeKind::Polygon, 2, NoiseKind::CamelMult, 0.6),
            other => return Err(contract(format!("unknown scenario '{other}'"))),
        };
        Ok(Self {
            name: name.into(),
            label: label.into(),
            shape,
            shape_seed,
            noise,
            fraction,
        })
    }

    /// The three standard columns.
    pub fn standard() -> Vec<Self> {
        ["cattle-40", "camel-40", "camel-60"]
            .iter()
            .map(|n| Self::preset(n).unwrap())
            .collect()
    }

    pub fn noise_spec(&self, seed: u64) -> NoiseSpec {
        match self.noise {
            NoiseKind::CattleSin => NoiseSpec::cattle(seed),
            NoiseKind::CamelMult => NoiseSpec::camel(seed),
        }
    }

    /// Ground-truth image and the noisy, partially labeled sequence.
    pub fn build(&self, side: usize, data_seed: u64) -> Result<(BinaryImage, LabeledSequence)> {
        let img = generate_shape(self.shape, side, self.shape_seed)?;
        let mut seq = build_sequence(&img, &self.noise_spec(data_seed), self.fraction, data_seed.wrapping_add(1))?;
        seq.provenance.shape = Some(format!("{:?}", self.shape).to_lowercase());
        Ok((img, seq))
    }
}

/// Everything needed to train and score one model on one sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub model: TmcConfig,
    pub init_seed: u64,
    pub train: TrainConfig,
    pub decode_samples: usize,
    pub decode_seed: u64,
}

impl RunSpec {
    /// Experiment defaults for `kind` with every seed derived from `seed`.
    pub fn preset(kind: ModelKind, seed: u64) -> Self {
        Self {
            model: TmcConfig::preset(kind),
            init_seed: seed,
            train: TrainConfig {
                seed: seed.wrapping_add(1000),
                ..TrainConfig::default()
            },
            decode_samples: 16,
            decode_seed: seed.wrapping_add(2000),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub model: TmcModel,
    pub trace: TrainTrace,
    pub result: SegmentationResult,
    pub error_rate: f64,
}

/// Trains a fresh model on `seq`, decodes the hidden labels and scores them.
pub fn run_cell(seq: &LabeledSequence, spec: &RunSpec) -> Result<RunOutcome> {
    let start = Instant::now();
    let mut model = TmcModel::new(spec.model, spec.init_seed)?;
    let trace = train(&mut model, seq, &spec.train)?;
    let decoded = decode_labels(&model, seq, spec.decode_samples, spec.decode_seed)?;
    let mut result = SegmentationResult::new(model.kind(), &decoded, seq)?;
    result.seed = spec.init_seed;
    result.epochs = spec.train.epochs;
    result.seconds = start.elapsed().as_secs_f64();
    let error_rate = error_rate(&result)?;
    Ok(RunOutcome {
        model,
        trace,
        result,
        error_rate,
    })
}
