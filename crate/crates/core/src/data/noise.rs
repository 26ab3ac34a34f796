//! Observation noise for label sequences.
//!
//! * `cattle_sin`: `x_t ~ N(sin(a_{y_t} + x_{t-1}), sigma^2)` with `x_{-1} = 0`.
//! * `camel_mult`: `x_t = G_t * Z_t` with `G_t ~ N(a_{y_t}, b^2)`, `Z_t ~ N(0, 1)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    CattleSin,
    CamelMult,
}

impl std::str::FromStr for NoiseKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cattle_sin" => Ok(NoiseKind::CattleSin),
            "camel_mult" => Ok(NoiseKind::CamelMult),
            other => Err(contract(format!("unknown noise kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    /// Per-class location `a_c`.
    pub a: Vec<f64>,
    /// Per-class spread: `sigma_c` for `cattle_sin`, `b_c` for `camel_mult`.
    pub scale: Vec<f64>,
    pub seed: u64,
}

impl NoiseSpec {
    /// `a = (0, 0.4)`, `sigma^2 = 0.25`.
    pub fn cattle(seed: u64) -> Self {
        Self {
            kind: NoiseKind::CattleSin,
            a: vec![0.0, 0.4],
            scale: vec![0.5, 0.5],
            seed,
        }
    }

    /// `a = (0, 0.5)`, `b = 0.2`.
    pub fn camel(seed: u64) -> Self {
        Self {
            kind: NoiseKind::CamelMult,
            a: vec![0.0, 0.5],
            scale: vec![0.2, 0.2],
            seed,
        }
    }

    pub fn classes(&self) -> usize {
        self.a.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.a.is_empty() || self.a.len() != self.scale.len() {
            return Err(contract("noise spec needs one location and one scale per class"));
        }
        if self.scale.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(contract("noise scales must be positive and finite"));
        }
        if self.a.iter().any(|a| !a.is_finite()) {
            return Err(contract("noise locations must be finite"));
        }
        Ok(())
    }
}

/// One observation per label, reproducible from `spec.seed`.
pub fn synthesize_noise(labels: &[usize], spec: &NoiseSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    if let Some(&bad) = labels.iter().find(|&&l| l >= spec.classes()) {
        return Err(contract(format!("label {bad} outside the {} noise classes", spec.classes())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let mut xs = Vec::with_capacity(labels.len());
    match spec.kind {
        NoiseKind::CattleSin => {
            let mut prev = 0.0;
            for &y in labels {
                let x = (spec.a[y] + prev).sin() + spec.scale[y] * normal();
                xs.push(x);
                prev = x;
            }
        }
        NoiseKind::CamelMult => {
            for &y in labels {
                let gain = spec.a[y] + spec.scale[y] * normal();
                xs.push(gain * normal());
            }
        }
    }
    Ok(xs)
}
