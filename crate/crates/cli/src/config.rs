//! TOML run configuration. Every section is optional; unknown keys are
//! rejected.
//!
//! ```toml
//! name = "camel-40-dmtmc"
//!
//! [data]
//! scenario = "camel-40"      # preset: cattle-40, camel-40, camel-60
//! side = 64
//! seed = 0
//! # shape = "polygon"        # overrides the preset; or input = "truth.pbm"
//! # noise = "camel"          # cattle | camel
//! # fraction = 0.4
//!
//! [model]
//! kind = "dmtmc"             # dmtmc | svrnn | vsl
//! # d_z = 2, hidden_units, rnn_state_dim, code_dim, beta, alpha, temperature
//!
//! [train]                    # all fields of the core training config
//! epochs = 300
//! lr = 1e-3
//!
//! [decode]
//! samples = 16
//! seed = 2000
//!
//! [table]
//! scenarios = ["cattle-40", "camel-40", "camel-60"]
//! models = ["vsl", "svrnn", "dmtmc"]
//! seeds = [0, 1, 2]
//!
//! [oracle]
//! length = 256
//! fraction = 0.5
//! persistence = 0.95
//! means = [-1.0, 1.0]
//! std = 1.0
//! epochs = 1500
//! ```

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use tmc_core::data::{NoiseKind, ShapeKind};
use tmc_core::experiment::{Scenario, DEFAULT_SIDE};
use tmc_core::inference::TrainConfig;
use tmc_core::models::{ModelKind, TemperatureSchedule, TmcConfig};

use crate::InputError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub name: Option<String>,
    pub data: DataSection,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub decode: DecodeSection,
    pub table: TableSection,
    pub oracle: OracleSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub scenario: String,
    pub side: usize,
    pub seed: u64,
    pub shape: Option<ShapeKind>,
    pub shape_seed: Option<u64>,
    /// Ground-truth bitmap replacing the generated shape.
    pub input: Option<PathBuf>,
    pub noise: Option<NoiseChoice>,
    pub fraction: Option<f64>,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            scenario: "camel-40".into(),
            side: DEFAULT_SIDE,
            seed: 0,
            shape: None,
            shape_seed: None,
            input: None,
            noise: None,
            fraction: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseChoice {
    Cattle,
    Camel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    pub d_z: Option<usize>,
    pub hidden_units: Option<usize>,
    pub rnn_state_dim: Option<usize>,
    pub code_dim: Option<usize>,
    pub beta: Option<f64>,
    pub alpha: Option<f64>,
    pub temperature: Option<TemperatureSchedule>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            kind: ModelKind::Dmtmc,
            d_z: None,
            hidden_units: None,
            rnn_state_dim: None,
            code_dim: None,
            beta: None,
            alpha: None,
            temperature: None,
        }
    }
}

impl ModelSection {
    pub fn config(&self, kind: ModelKind) -> TmcConfig {
        let mut c = TmcConfig::preset(kind);
        c.d_z = self.d_z.unwrap_or(c.d_z);
        c.hidden_units = self.hidden_units.unwrap_or(c.hidden_units);
        c.rnn_state_dim = self.rnn_state_dim.unwrap_or(c.rnn_state_dim);
        c.code_dim = self.code_dim.unwrap_or(c.code_dim);
        c.beta = self.beta.unwrap_or(c.beta);
        c.alpha = self.alpha.unwrap_or(c.alpha);
        c.temperature = self.temperature.unwrap_or(c.temperature);
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeSection {
    pub samples: usize,
    pub seed: Option<u64>,
}

impl Default for DecodeSection {
    fn default() -> Self {
        Self { samples: 16, seed: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TableSection {
    pub scenarios: Vec<String>,
    pub models: Vec<ModelKind>,
    pub seeds: Vec<u64>,
    /// Also print the reference rates.
    pub reference: bool,
    pub decimal_comma: bool,
}

impl Default for TableSection {
    fn default() -> Self {
        Self {
            scenarios: Scenario::standard().into_iter().map(|s| s.name).collect(),
            models: ModelKind::ALL.to_vec(),
            seeds: vec![0, 1, 2],
            reference: true,
            decimal_comma: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    pub length: usize,
    pub fraction: f64,
    pub persistence: f64,
    pub means: Vec<f64>,
    pub std: f64,
    pub epochs: usize,
    pub lr: f64,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self {
            length: 256,
            fraction: 0.5,
            persistence: 0.95,
            means: vec![-1.0, 1.0],
            std: 1.0,
            epochs: 1500,
            lr: 3e-3,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| InputError(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| InputError(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| -> Result<()> { Err(InputError(m).into()) };
        Scenario::preset(&self.data.scenario).map_err(|e| InputError(e.to_string()))?;
        for s in &self.table.scenarios {
            Scenario::preset(s).map_err(|e| InputError(e.to_string()))?;
        }
        if let Some(f) = self.data.fraction {
            if !(0.0..=1.0).contains(&f) {
                return bad(format!("data.fraction must lie in [0, 1], got {f}"));
            }
        }
        if self.data.side == 0 || !self.data.side.is_power_of_two() {
            return bad(format!("data.side must be a power of two, got {}", self.data.side));
        }
        if self.decode.samples == 0 {
            return bad("decode.samples must be positive".into());
        }
        self.train.validate().map_err(|e| InputError(e.to_string()))?;
        for kind in ModelKind::ALL {
            self.model.config(kind).validate().map_err(|e| InputError(e.to_string()))?;
        }
        let o = &self.oracle;
        if o.length == 0 || !(0.0..=1.0).contains(&o.fraction) || !(0.0..1.0).contains(&o.persistence) {
            return bad("oracle: length > 0, fraction in [0, 1], persistence in [0, 1) required".into());
        }
        if o.means.len() < 2 || !(o.std > 0.0) || !(o.lr > 0.0) {
            return bad("oracle: at least two means, positive std and lr required".into());
        }
        Ok(())
    }

    /// Scenario preset with the data-section overrides applied.
    pub fn scenario(&self) -> Result<Scenario> {
        let mut s = Scenario::preset(&self.data.scenario)?;
        if let Some(shape) = self.data.shape {
            s.shape = shape;
        }
        if let Some(seed) = self.data.shape_seed {
            s.shape_seed = seed;
        }
        if let Some(n) = self.data.noise {
            s.noise = match n {
                NoiseChoice::Cattle => NoiseKind::CattleSin,
                NoiseChoice::Camel => NoiseKind::CamelMult,
            };
        }
        if let Some(f) = self.data.fraction {
            s.fraction = f;
        }
        Ok(s)
    }

    pub fn run_name(&self, fallback: &str) -> String {
        self.name.clone().unwrap_or_else(|| fallback.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
