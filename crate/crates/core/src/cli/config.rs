//! Run configuration: a single JSON document.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::asymptotics::CELLS_PER_SQRT_EPS;
use crate::diffusion::DiffusionField;
use crate::evolution::{AlphaProfile, Scenario, XDomain};
use crate::grid::BoxDomain;
use crate::landscape::{Potential, PotentialSpec, ValleyOptions};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub potential: PotentialSpec,
    /// Truncation box; builtins fall back to their own.
    #[serde(default, rename = "box")]
    pub domain: Option<BoxDomain>,
    /// Strictly decreasing.
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default = "default_cells")]
    pub cells_per_sqrt_eps: f64,
    /// Newton seed spacing; defaults to 1/20 of the largest box side.
    #[serde(default)]
    pub seed_spacing: Option<f64>,
    #[serde(default)]
    pub capacity: CapacityConfig,
    #[serde(default)]
    pub testfn: TestFnConfig,
    #[serde(default)]
    pub evolution: Option<EvolutionConfig>,
}

fn default_cells() -> f64 {
    CELLS_PER_SQRT_EPS
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacityConfig {
    /// Boundary values per valley; default runs linearly from 1 to -1.
    #[serde(default)]
    pub b: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestFnConfig {
    /// Sources per valley, summing to zero; default `e_1 - e_K`.
    #[serde(default)]
    pub c: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionConfig {
    /// Sweep list; defaults to the top-level list.
    #[serde(default)]
    pub epsilons: Option<Vec<f64>>,
    #[serde(default = "default_x")]
    pub x: XDomain,
    #[serde(default = "default_diffusion")]
    pub diffusion: DiffusionField,
    pub alpha0: Vec<AlphaProfile>,
    pub output_times: Vec<f64>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_true")]
    pub adapt_dt: bool,
}

fn default_x() -> XDomain {
    XDomain { length: 1.0, nodes: 1 }
}

fn default_diffusion() -> DiffusionField {
    DiffusionField::Zero
}

fn default_dt() -> f64 {
    0.01
}

fn default_true() -> bool {
    true
}

/// A configuration problem, anchored to a line of the file when possible.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match (self.line, self.column) {
            (Some(l), Some(c)) => write!(f, "line {l}, column {c}: {}", self.message),
            (Some(l), None) => write!(f, "line {l}: {}", self.message),
            _ => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// 1-based line of the first occurrence of `"key"`.
pub fn line_of(text: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
}

impl EvolutionConfig {
    pub fn scenario(&self, cells_per_sqrt_eps: f64) -> Scenario {
        Scenario {
            x: self.x.clone(),
            diffusion: self.diffusion.clone(),
            alpha0: self.alpha0.clone(),
            output_times: self.output_times.clone(),
            dt: self.dt,
            adapt_dt: self.adapt_dt,
            cells_per_sqrt_eps,
        }
    }
}

/// A parsed and validated configuration with its source text.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub text: String,
    pub potential: Potential,
    pub domain: BoxDomain,
}

impl LoadedConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let config: RunConfig = serde_json::from_str(text).map_err(|e| ConfigError {
            line: Some(e.line()),
            column: Some(e.column()),
            message: e.to_string(),
        })?;
        let at = |key: &str, message: String| ConfigError { line: line_of(text, key), column: None, message };
        let potential = Potential::from_spec(&config.potential).map_err(|e| at("potential", e.to_string()))?;
        let domain = match (&config.domain, potential.default_box()) {
            (Some(b), _) => b.clone(),
            (None, Some(b)) => b,
            (None, None) => return Err(at("potential", "no truncation box given and the potential has no default".into())),
        };
        if !domain.is_valid() || domain.lower.len() != domain.upper.len() {
            return Err(at("box", "box needs finite bounds with lower < upper on every axis".into()));
        }
        if domain.dim() != potential.dim() {
            return Err(at(
                "box",
                format!("box has dimension {} but the potential has dimension {}", domain.dim(), potential.dim()),
            ));
        }
        check_epsilons(&config.epsilons).map_err(|m| at("epsilons", m))?;
        if let Some(eta) = config.eta {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(at("eta", format!("eta must be positive, got {eta}")));
            }
        }
        // spacing sqrt(eps)/cells must stay below sqrt(eps)/4
        if !(config.cells_per_sqrt_eps >= 4.0 && config.cells_per_sqrt_eps.is_finite()) {
            return Err(at(
                "cells_per_sqrt_eps",
                format!("cells_per_sqrt_eps must be at least 4, got {}", config.cells_per_sqrt_eps),
            ));
        }
        if let Some(s) = config.seed_spacing {
            if !(s > 0.0 && s.is_finite()) {
                return Err(at("seed_spacing", format!("seed_spacing must be positive, got {s}")));
            }
        }
        if let Some(c) = &config.testfn.c {
            let sum: f64 = c.iter().sum();
            if sum.abs() > 1e-12 * c.iter().map(|v| v.abs()).sum::<f64>().max(1.0) {
                return Err(at("c", format!("test-function sources must sum to zero, got {sum}")));
            }
        }
        if let Some(ev) = &config.evolution {
            if let Some(list) = &ev.epsilons {
                check_epsilons(list).map_err(|m| at("evolution", m))?;
            }
            if domain.dim() != 1 {
                return Err(at("evolution", "evolution runs need a one-dimensional potential".into()));
            }
            ev.scenario(config.cells_per_sqrt_eps)
                .validate(ev.alpha0.len())
                .map_err(|e| at("evolution", e.to_string()))?;
        }
        Ok(Self { config, text: text.to_string(), potential, domain })
    }

    pub fn read(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            line: None,
            column: None,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::parse(&text)
    }

    /// SHA-256 of the raw config bytes.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.text.as_bytes()))
    }

    pub fn valley_options(&self) -> ValleyOptions {
        ValleyOptions { eta: self.config.eta, ..ValleyOptions::default() }
    }

    pub fn seed_spacing(&self) -> f64 {
        self.config.seed_spacing.unwrap_or(0.05 * self.domain.max_extent())
    }

    pub fn evolution_epsilons(&self) -> Vec<f64> {
        self.config
            .evolution
            .as_ref()
            .and_then(|e| e.epsilons.clone())
            .unwrap_or_else(|| self.config.epsilons.clone())
    }

    /// Capacity boundary data for `k` valleys.
    pub fn b(&self, k: usize) -> Result<Vec<f64>, ConfigError> {
        match &self.config.capacity.b {
            Some(b) if b.len() != k => Err(ConfigError {
                line: line_of(&self.text, "b"),
                column: None,
                message: format!("b has {} entries for {k} valleys", b.len()),
            }),
            Some(b) => Ok(b.clone()),
            None if k == 1 => Ok(vec![0.0]),
            None => Ok((0..k).map(|i| 1.0 - 2.0 * i as f64 / (k - 1) as f64).collect()),
        }
    }

    /// Test-function sources for `k` valleys.
    pub fn c(&self, k: usize) -> Result<Vec<f64>, ConfigError> {
        match &self.config.testfn.c {
            Some(c) if c.len() != k => Err(ConfigError {
                line: line_of(&self.text, "c"),
                column: None,
                message: format!("c has {} entries for {k} valleys", c.len()),
            }),
            Some(c) => Ok(c.clone()),
            None => {
                let mut c = vec![0.0; k];
                if k > 1 {
                    c[0] = 1.0;
                    c[k - 1] = -1.0;
                }
                Ok(c)
            }
        }
    }
}

fn check_epsilons(list: &[f64]) -> Result<(), String> {
    if list.is_empty() {
        return Err("epsilon list is empty".into());
    }
    if let Some(e) = list.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(format!("epsilon values must be positive, got {e}"));
    }
    if list.windows(2).any(|w| w[1] >= w[0]) {
        return Err("epsilon list must be strictly decreasing".into());
    }
    Ok(())
}
