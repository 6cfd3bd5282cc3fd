//! TOML run configuration.
//!
//! ```toml
//! iterations = 20000
//! ensemble = 4
//! scheme = "joint"            # or "disjoint"
//! intensity = "total"         # or "singly"
//! seed = 7
//! output = "runs/demo"
//!
//! [inputs]
//! cost = "cost.csv"
//! log_attraction = "y.csv"
//! ground_truth = "table.csv"  # optional
//! constraints = "constraints.toml"
//!
//! [dynamics]
//! noise = "low"               # "high", or a number
//! ```
//!
//! Relative paths are taken from the directory of the config file.

use std::fs;
use std::path::{Path, PathBuf};

use odm_core::harris_wilson::DEFAULT_DT;
use odm_core::loss::{DEFAULT_SIGMA_L, DEFAULT_SIGMA_T};
use odm_core::nn::DEFAULT_HIDDEN;
use odm_core::pipeline::{kappa_for, PipelineConfig};
use odm_core::{
    AdamConfig, CalibrationProblem, ConstraintSet, ContingencyTable, CostMatrix, HwParams,
    IntensityModel, LossConfig, ObservedData, Scheme, Tractability,
};
use serde::{Deserialize, Serialize};

use crate::error::{EngineError, Result};
use crate::io::{self, ConstraintsFile, StreamFormat};

pub const LOW_NOISE: f64 = 0.014;
pub const HIGH_NOISE: f64 = 0.141;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeName {
    Joint,
    Disjoint,
}

impl From<SchemeName> for Scheme {
    fn from(s: SchemeName) -> Self {
        match s {
            SchemeName::Joint => Scheme::Joint,
            SchemeName::Disjoint => Scheme::Disjoint,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntensityName {
    #[default]
    Total,
    Singly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoisePreset {
    Low,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Noise {
    Sigma(f64),
    Preset(NoisePreset),
}

impl Noise {
    pub fn sigma(self) -> f64 {
        match self {
            Noise::Sigma(s) => s,
            Noise::Preset(NoisePreset::Low) => LOW_NOISE,
            Noise::Preset(NoisePreset::High) => HIGH_NOISE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    pub cost: PathBuf,
    pub log_attraction: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin_distance: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraints: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Dynamics {
    pub epsilon: f64,
    pub delta: f64,
    pub noise: Noise,
    /// Computed from the intensity mass and `y` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    pub dt: f64,
    pub tau: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_max: Option<f64>,
}

impl Default for Dynamics {
    fn default() -> Self {
        Self {
            epsilon: 1.0,
            delta: 0.0,
            noise: Noise::Preset(NoisePreset::Low),
            kappa: None,
            dt: DEFAULT_DT,
            tau: 1,
            theta_max: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossSettings {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_d: Option<f64>,
    pub sigma_t: f64,
    pub sigma_l: f64,
    pub distance_term: bool,
}

impl Default for LossSettings {
    fn default() -> Self {
        Self {
            sigma_d: None,
            sigma_t: DEFAULT_SIGMA_T,
            sigma_l: DEFAULT_SIGMA_L,
            distance_term: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamSettings {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamSettings {
    fn default() -> Self {
        let d = AdamConfig::default();
        Self {
            learning_rate: d.learning_rate,
            beta1: d.beta1,
            beta2: d.beta2,
            eps: d.eps,
        }
    }
}

fn one() -> usize {
    1
}

fn hundred() -> usize {
    100
}

fn hidden() -> usize {
    DEFAULT_HIDDEN
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub iterations: usize,
    #[serde(default = "one")]
    pub ensemble: usize,
    pub scheme: SchemeName,
    #[serde(default)]
    pub intensity: IntensityName,
    /// Mass of a totally constrained intensity when the constraints carry no total.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_intensity: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "hundred")]
    pub burnin: usize,
    #[serde(default = "hundred")]
    pub thin: usize,
    #[serde(default = "one")]
    pub gibbs_moves: usize,
    #[serde(default = "hidden")]
    pub hidden: usize,
    #[serde(default)]
    pub format: StreamFormat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default)]
    pub heatmap: bool,
    pub output: PathBuf,
    pub inputs: Inputs,
    /// Inline constraints; used when `inputs.constraints` is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraints: Option<ConstraintsFile>,
    #[serde(default)]
    pub dynamics: Dynamics,
    #[serde(default)]
    pub loss: LossSettings,
    #[serde(default)]
    pub adam: AdamSettings,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| EngineError::Config(e.to_string()))
    }

    /// Reads a config and makes its paths absolute.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| EngineError::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let base = fs::canonicalize(if base.as_os_str().is_empty() { Path::new(".") } else { base })
            .map_err(|e| EngineError::io(base, e))?;
        cfg.rebase(&base);
        Ok(cfg)
    }

    pub fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output);
        fix(&mut self.inputs.cost);
        fix(&mut self.inputs.log_attraction);
        for p in [
            &mut self.inputs.origin_distance,
            &mut self.inputs.ground_truth,
            &mut self.inputs.constraints,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        if let Some(c) = &mut self.constraints {
            for m in [&mut c.row_sums, &mut c.col_sums].into_iter().flatten() {
                if let io::MarginSpec::Path(p) = m {
                    fix(p);
                }
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(EngineError::Config(m.to_string()));
        if self.iterations == 0 || self.ensemble == 0 {
            return bad("iterations and ensemble must be at least 1");
        }
        if self.thin == 0 {
            return bad("thin must be at least 1");
        }
        if self.workers == Some(0) {
            return bad("workers must be at least 1");
        }
        if self.inputs.constraints.is_some() && self.constraints.is_some() {
            return bad("give constraints either inline or as inputs.constraints, not both");
        }
        Ok(())
    }
}

/// A config with every input loaded and every default made explicit.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    /// The config as persisted to `config.resolved`.
    pub config: RunConfig,
    pub pipeline: PipelineConfig,
    pub tractability: Tractability,
    pub ground_truth: Option<ContingencyTable>,
}

impl LoadedRun {
    pub fn rows(&self) -> usize {
        self.pipeline.rows()
    }

    pub fn cols(&self) -> usize {
        self.pipeline.cols()
    }

    pub fn constraints(&self) -> &ConstraintSet {
        &self.pipeline.constraints
    }
}

pub fn load_run(config: &RunConfig) -> Result<LoadedRun> {
    config.check()?;
    let cost_m = io::read_matrix::<f64>(&config.inputs.cost)?;
    let cost = CostMatrix::new(cost_m.rows, cost_m.cols, cost_m.values)?;
    let y: Vec<f64> = io::read_vector(&config.inputs.log_attraction)?;
    let origin_distance = config
        .inputs
        .origin_distance
        .as_deref()
        .map(io::read_vector::<f64>)
        .transpose()?;
    let ground_truth = config.inputs.ground_truth.as_deref().map(io::read_table).transpose()?;
    let constraints = match (&config.inputs.constraints, &config.constraints) {
        (Some(p), _) => io::read_constraints(p)?,
        (None, Some(c)) => c.resolve(Path::new("."))?,
        (None, None) => ConstraintSet::new(),
    };
    let model = match config.intensity {
        IntensityName::Total => {
            let total = constraints
                .total_mass()
                .map(|t| t as f64)
                .or(config.total_intensity)
                .ok_or_else(|| {
                    EngineError::Config(
                        "a totally constrained intensity needs a table total, margins, or total_intensity".into(),
                    )
                })?;
            IntensityModel::Total { total }
        }
        IntensityName::Singly => {
            let rows = constraints.effective_row_sums().ok_or_else(|| {
                EngineError::Config("a singly constrained intensity needs row sums".into())
            })?;
            IntensityModel::Singly {
                row_totals: rows.iter().map(|&r| r as f64).collect(),
            }
        }
    };
    let d = &config.dynamics;
    let kappa = d.kappa.unwrap_or_else(|| kappa_for(&model, d.delta, &y));
    let mut loss = LossConfig::new(config.scheme.into());
    loss.sigma_d = config.loss.sigma_d;
    loss.sigma_t = config.loss.sigma_t;
    loss.sigma_l = config.loss.sigma_l;
    loss.use_distance_term = config.loss.distance_term;
    let sigma_d = loss.sigma_d_for(cost.cols());
    let a = &config.adam;
    let pipeline = PipelineConfig {
        problem: CalibrationProblem {
            hw: HwParams {
                epsilon: d.epsilon,
                kappa,
                delta: d.delta,
                sigma: d.noise.sigma(),
            },
            dt: d.dt,
            data: ObservedData {
                log_attraction: Some(y),
                origin_distance,
                ground_truth: ground_truth.clone(),
            },
            loss,
            theta_max: d.theta_max,
            cost,
            model,
        },
        constraints: constraints.clone(),
        hidden: config.hidden,
        adam: AdamConfig {
            learning_rate: a.learning_rate,
            beta1: a.beta1,
            beta2: a.beta2,
            eps: a.eps,
        },
        tau: d.tau,
        gibbs_moves: config.gibbs_moves,
    };
    let tractability = pipeline.validate()?;
    let mut resolved = config.clone();
    resolved.inputs.constraints = None;
    resolved.constraints = Some(ConstraintsFile::from_set(&constraints));
    resolved.dynamics.kappa = Some(kappa);
    resolved.dynamics.noise = Noise::Sigma(d.noise.sigma());
    resolved.loss.sigma_d = Some(sigma_d);
    Ok(LoadedRun {
        config: resolved,
        pipeline,
        tractability,
        ground_truth,
    })
}

/// Short description of a constraint set, e.g. `rows+cols+cells`.
pub fn constraint_tag(c: &ConstraintSet) -> String {
    let mut parts = Vec::new();
    if c.total.is_some() {
        parts.push("total");
    }
    if c.row_sums.is_some() {
        parts.push("rows");
    }
    if c.col_sums.is_some() {
        parts.push("cols");
    }
    if !c.fixed_cells.is_empty() {
        parts.push("cells");
    }
    if c.symmetric {
        parts.push("symmetric");
    }
    if parts.is_empty() {
        "none".into()
    } else {
        parts.join("+")
    }
}
