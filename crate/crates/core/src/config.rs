//! Run configuration: one TOML (or JSON) document with `system`,
//! `discretization`, `solver`, `continuation` and `output` blocks.
//!
//! ```toml
//! [system]
//! masses = [1.0, 1.0]
//! dim = 2
//! alpha = 3.0
//! energy = 1.0
//!
//! [discretization]
//! harmonics = 32
//! nodes = 256
//!
//! [solver]
//! radius = 1.0
//! seed = 0
//!
//! [continuation]
//! radii = [1.0, 2.0, 4.0, 8.0, 16.0]
//! d1 = 1.1
//! d2 = 1.25
//! warm_start = true
//!
//! [output]
//! directory = "runs/pair"
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::continuation::{ContinuationSchedule, SweepMode};
use crate::error::{Error, Result};
use crate::loop_space::QuadratureGrid;
use crate::minimizer::SolveConfig;
use crate::model::BodySystem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Discretization {
    pub harmonics: usize,
    /// Grid size; defaults to the next power of two above `4(2K - 1)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nodes: Option<usize>,
}

impl Default for Discretization {
    fn default() -> Self {
        Self {
            harmonics: 32,
            nodes: None,
        }
    }
}

fn default_d1() -> f64 {
    1.1
}

fn default_d2() -> f64 {
    1.25
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuationBlock {
    pub radii: Vec<f64>,
    #[serde(default = "default_d1")]
    pub d1: f64,
    #[serde(default = "default_d2")]
    pub d2: f64,
    #[serde(default = "default_true")]
    pub warm_start: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub directory: Option<String>,
    /// Subset of `json`, `csv`; empty means both.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub formats: Vec<String>,
}

impl OutputBlock {
    pub fn wants(&self, format: &str) -> bool {
        self.formats.is_empty() || self.formats.iter().any(|f| f == format)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: BodySystem,
    #[serde(default)]
    pub discretization: Discretization,
    #[serde(default)]
    pub solver: SolveConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub continuation: Option<ContinuationBlock>,
    #[serde(default)]
    pub output: OutputBlock,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load by extension: `.json` is JSON, anything else TOML.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        }
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.solve_config().validate()?;
        self.grid()?;
        if let Some(c) = &self.continuation {
            ContinuationSchedule::new(c.radii.clone(), c.d1, c.d2)?;
        }
        for f in &self.output.formats {
            if f != "json" && f != "csv" {
                return Err(Error::Config(format!("unknown output format {f:?}")));
            }
        }
        Ok(())
    }

    pub fn solve_config(&self) -> SolveConfig {
        SolveConfig {
            harmonics: self.discretization.harmonics,
            ..self.solver.clone()
        }
    }

    pub fn grid(&self) -> Result<QuadratureGrid> {
        let k = self.discretization.harmonics;
        if k == 0 {
            return Err(Error::Validation("harmonics must be at least 1".into()));
        }
        let grid = match self.discretization.nodes {
            Some(n) => QuadratureGrid::new(n)?,
            None => QuadratureGrid::for_harmonics(k)?,
        };
        grid.check_harmonics(k)?;
        Ok(grid)
    }

    /// The continuation schedule, required for sweeps.
    pub fn schedule(&self) -> Result<ContinuationSchedule> {
        let c = self
            .continuation
            .as_ref()
            .ok_or_else(|| Error::Config("a sweep needs a [continuation] block".into()))?;
        ContinuationSchedule::new(c.radii.clone(), c.d1, c.d2)
    }

    pub fn sweep_mode(&self, threads: usize) -> SweepMode {
        match &self.continuation {
            Some(c) if !c.warm_start => SweepMode::Cold { threads },
            _ => SweepMode::Warm,
        }
    }
}
