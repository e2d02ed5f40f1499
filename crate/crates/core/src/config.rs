//! Solver parameters.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorKind {
    Identity,
    Mask,
    Subsample,
    Blur,
}

impl FromStr for OperatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Self::Identity),
            "mask" => Ok(Self::Mask),
            "subsample" => Ok(Self::Subsample),
            "blur" => Ok(Self::Blur),
            _ => Err(Error::param(format!("unknown operator '{s}'"))),
        }
    }
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Identity => "identity",
            Self::Mask => "mask",
            Self::Subsample => "subsample",
            Self::Blur => "blur",
        };
        f.write_str(s)
    }
}

/// How the image sequence is initialized before the alternating loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitKind {
    /// Frame-wise ROF (coupling weight zero).
    Rof,
    /// ROF with a quadratic penalty on the forward temporal difference.
    Smooth,
}

impl FromStr for InitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rof" => Ok(Self::Rof),
            "smooth" => Ok(Self::Smooth),
            _ => Err(Error::param(format!("unknown init '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    /// TV weight on the images.
    pub alpha: f64,
    /// TV weight on the flow components.
    pub beta: f64,
    /// Weight of the optical-flow coupling term.
    pub gamma: f64,
    /// Pyramid downsampling factor.
    pub eta: f64,
    pub n_warps: usize,
    /// Median filter window (odd).
    pub size_med: usize,
    pub eps_u: f64,
    pub eps_v: f64,
    pub eps_main: f64,
    /// Residual evaluation interval, in iterations.
    pub n_res: usize,
    pub iter_main_max: usize,
    /// Smallest allowed pyramid dimension, in pixels.
    pub min_scale_dim: usize,
    /// Pyramid presmoothing std-dev; `None` derives it from `eta`.
    pub sigma_d: Option<f64>,
    pub operator: OperatorKind,
    pub subsample_factor: usize,
    pub blur_sigma: f64,
    pub time_continuous: bool,
    pub init: InitKind,
    /// Weight of the temporal smoothness term used by [`InitKind::Smooth`].
    pub epsilon_t: f64,
    pub flow_iter_cap: usize,
    pub image_iter_cap: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            alpha: 0.02,
            beta: 0.02,
            gamma: 1.0,
            eta: 0.8,
            n_warps: 3,
            size_med: 5,
            eps_u: 1e-6,
            eps_v: 1e-6,
            eps_main: 1e-5,
            n_res: 100,
            iter_main_max: 10,
            min_scale_dim: 10,
            sigma_d: None,
            operator: OperatorKind::Identity,
            subsample_factor: 2,
            blur_sigma: 1.0,
            time_continuous: false,
            init: InitKind::Rof,
            epsilon_t: 0.01,
            flow_iter_cap: 10_000,
            image_iter_cap: 20_000,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(format!("{name} must be positive, got {v}")))
            }
        };
        positive("alpha", self.alpha)?;
        positive("beta", self.beta)?;
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::param(format!("gamma must be non-negative, got {}", self.gamma)));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::param(format!("eta must lie in (0, 1), got {}", self.eta)));
        }
        if self.n_warps == 0 {
            return Err(Error::param("n_warps must be at least 1"));
        }
        if self.size_med.is_multiple_of(2) {
            return Err(Error::param(format!("size_med must be odd, got {}", self.size_med)));
        }
        if self.n_res == 0 {
            return Err(Error::param("n_res must be at least 1"));
        }
        positive("eps_u", self.eps_u)?;
        positive("eps_v", self.eps_v)?;
        positive("eps_main", self.eps_main)?;
        positive("epsilon_t", self.epsilon_t)?;
        if let Some(s) = self.sigma_d {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::param(format!("sigma_d must be non-negative, got {s}")));
            }
        }
        if self.operator == OperatorKind::Subsample && self.subsample_factor == 0 {
            return Err(Error::param("subsample factor must be at least 1"));
        }
        if self.operator == OperatorKind::Blur {
            positive("blur_sigma", self.blur_sigma)?;
        }
        Ok(())
    }

    /// Flow TV radius once the flow problem is divided through by `gamma`.
    pub fn flow_weight(&self) -> f64 {
        if self.gamma > 0.0 {
            self.beta / self.gamma
        } else {
            self.beta
        }
    }

    /// Presmoothing used when building the pyramid.
    pub fn pyramid_sigma(&self) -> f64 {
        self.sigma_d
            .unwrap_or_else(|| 0.5 * (1.0 / (self.eta * self.eta) - 1.0).sqrt())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Parses either a JSON object or `key = value` lines (`#` starts a comment).
    pub fn parse(text: &str) -> Result<Self> {
        let trimmed = text.trim_start();
        let value = if trimmed.starts_with('{') {
            serde_json::from_str::<Value>(trimmed)
                .map_err(|e| Error::format("config", e.to_string()))?
        } else {
            let mut map = Map::new();
            for (lineno, line) in text.lines().enumerate() {
                let line = line.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (key, raw) = line.split_once('=').ok_or_else(|| {
                    Error::format("config", format!("line {}: expected key = value", lineno + 1))
                })?;
                let raw = raw.trim();
                let value = serde_json::from_str::<Value>(raw)
                    .unwrap_or_else(|_| Value::String(raw.to_string()));
                map.insert(key.trim().to_string(), value);
            }
            Value::Object(map)
        };
        let cfg: SolveConfig =
            serde_json::from_value(value).map_err(|e| Error::format("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
