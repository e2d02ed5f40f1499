use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use jointflow::config::{InitKind, OperatorKind, SolveConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OperatorArg {
    Identity,
    Mask,
    Subsample,
    Blur,
}

impl From<OperatorArg> for OperatorKind {
    fn from(a: OperatorArg) -> Self {
        match a {
            OperatorArg::Identity => OperatorKind::Identity,
            OperatorArg::Mask => OperatorKind::Mask,
            OperatorArg::Subsample => OperatorKind::Subsample,
            OperatorArg::Blur => OperatorKind::Blur,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    Rof,
    Smooth,
}

/// Solver settings. Flags override values read from `--config`.
#[derive(Debug, Clone, Default, Args)]
pub struct SolverArgs {
    /// Config file (JSON or `key = value` lines).
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Print the effective configuration as JSON and exit.
    #[arg(long)]
    pub dump_config: bool,
    /// TV weight on the images.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// TV weight on the flow.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Coupling weight.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Pyramid downsampling factor.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Warps per pyramid level.
    #[arg(long)]
    pub warps: Option<usize>,
    /// Median filter window (odd).
    #[arg(long)]
    pub median: Option<usize>,
    #[arg(long)]
    pub tol_u: Option<f64>,
    #[arg(long)]
    pub tol_v: Option<f64>,
    #[arg(long)]
    pub tol_main: Option<f64>,
    /// Maximum number of outer iterations.
    #[arg(long)]
    pub max_outer: Option<usize>,
    #[arg(long, value_enum)]
    pub operator: Option<OperatorArg>,
    /// Observation mask (nonzero pixels are observed). Implies `--operator mask`.
    #[arg(long, value_name = "FILE")]
    pub mask: Option<PathBuf>,
    /// Subsampling factor. Implies `--operator subsample`.
    #[arg(long, value_name = "FACTOR")]
    pub subsample: Option<usize>,
    /// Blur std-dev. Implies `--operator blur`.
    #[arg(long, value_name = "SIGMA")]
    pub blur_sigma: Option<f64>,
    /// Use the linearized (small-displacement) coupling.
    #[arg(long)]
    pub time_continuous: bool,
    #[arg(long, value_enum)]
    pub init: Option<InitArg>,
}

impl SolverArgs {
    pub fn resolve(&self) -> Result<SolveConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                SolveConfig::parse(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => SolveConfig::default(),
        };
        macro_rules! set {
            ($flag:ident => $field:ident) => {
                if let Some(v) = self.$flag {
                    cfg.$field = v;
                }
            };
        }
        set!(alpha => alpha);
        set!(beta => beta);
        set!(gamma => gamma);
        set!(eta => eta);
        set!(warps => n_warps);
        set!(median => size_med);
        set!(tol_u => eps_u);
        set!(tol_v => eps_v);
        set!(tol_main => eps_main);
        set!(max_outer => iter_main_max);
        if let Some(f) = self.subsample {
            cfg.subsample_factor = f;
            cfg.operator = OperatorKind::Subsample;
        }
        if let Some(s) = self.blur_sigma {
            cfg.blur_sigma = s;
            cfg.operator = OperatorKind::Blur;
        }
        if self.mask.is_some() {
            cfg.operator = OperatorKind::Mask;
        }
        if let Some(op) = self.operator {
            cfg.operator = op.into();
        }
        if self.time_continuous {
            cfg.time_continuous = true;
        }
        if let Some(init) = self.init {
            cfg.init = match init {
                InitArg::Rof => InitKind::Rof,
                InitArg::Smooth => InitKind::Smooth,
            };
        }
        cfg.validate()?;
        if cfg.operator == OperatorKind::Mask && self.mask.is_none() {
            bail!("the mask operator needs --mask FILE");
        }
        Ok(cfg)
    }

    pub fn mask_path(&self) -> Option<&Path> {
        self.mask.as_deref()
    }
}
