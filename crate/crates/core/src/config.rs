//! Experiment configuration: one JSON document per run.
//!
//! Unknown keys are rejected everywhere, and [`ExperimentConfig::validate`]
//! checks every cross-field constraint (grid divisibility, positive counts,
//! dimensions) before anything is sampled.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixpoint::SchemeConfig;
use crate::operators::{demo, CoefficientFn, Operator};
use crate::pathspace::{sample_driver, DriverEnsemble, PathEnsemble, TimeGrid};
use crate::problems::{InitialValue, PresetSpec, SDEProblem};
use crate::projective::{CompactBox, ProjectionLevel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub a: f64,
    pub b: f64,
    #[serde(rename = "N")]
    pub n: usize,
}

impl GridSpec {
    pub fn build(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.a, self.b, self.n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloSpec {
    #[serde(rename = "M")]
    pub m: usize,
    pub seed: u64,
    #[serde(default = "one")]
    pub d_w: usize,
}

fn one() -> usize {
    1
}

/// Named coefficient functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "fn", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefSpec {
    Identity,
    Zero,
    Constant { value: Vec<f64> },
    Linear { scale: f64, offset: f64 },
    Square,
    Time,
    Driver,
    Tanh { scale: f64 },
    Sin,
    SinDriverClipped { bound: f64 },
}

impl CoefSpec {
    pub fn build(&self, driver_dim: usize) -> CoefficientFn {
        match self {
            CoefSpec::Identity => CoefficientFn::identity(),
            CoefSpec::Zero => CoefficientFn::zero(),
            CoefSpec::Constant { value } => CoefficientFn::constant(value.clone()),
            CoefSpec::Linear { scale, offset } => CoefficientFn::linear(*scale, *offset),
            CoefSpec::Square => CoefficientFn::square(),
            CoefSpec::Time => CoefficientFn::time(),
            CoefSpec::Driver => CoefficientFn::driver(driver_dim),
            CoefSpec::Tanh { scale } => CoefficientFn::tanh(*scale),
            CoefSpec::Sin => CoefficientFn::sin(),
            CoefSpec::SinDriverClipped { bound } => CoefficientFn::sin_driver_clipped(*bound),
        }
    }
}

/// Operator tree by kind and parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OpSpec {
    Identity,
    Constant { value: Vec<f64> },
    Superposition { coefficient: CoefSpec },
    Lebesgue,
    Ito {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        column: Option<usize>,
    },
    Clamp { lo: f64, hi: f64 },
    Interp { n: usize },
    CausalInterp { n: usize },
    Mollify { n: usize },
    /// Parts in application order.
    Composite { parts: Vec<OpSpec> },
    Sum { parts: Vec<OpSpec> },
    /// `x ↦ x + mean over scenarios`; not local.
    NonlocalShift,
    /// `y(t) = W(b)`; not adapted.
    Anticipating,
}

impl OpSpec {
    /// `dim` is the state dimension the operator will see.
    pub fn build(&self, grid: TimeGrid, dim: usize, driver_dim: usize) -> Result<Operator> {
        Ok(match self {
            OpSpec::Identity => Operator::identity(),
            OpSpec::Constant { value } => Operator::constant(value.clone()),
            OpSpec::Superposition { coefficient } => {
                Operator::superposition(coefficient.build(driver_dim))
            }
            OpSpec::Lebesgue => Operator::lebesgue(),
            OpSpec::Ito { column: None } => Operator::ito(),
            OpSpec::Ito { column: Some(j) } => Operator::ito_column(*j),
            OpSpec::Clamp { lo, hi } => Operator::clamp(CompactBox::uniform(grid, dim, *lo, *hi)?),
            OpSpec::Interp { n } => Operator::interp(ProjectionLevel::new(*n)?),
            OpSpec::CausalInterp { n } => Operator::causal_interp(ProjectionLevel::new(*n)?),
            OpSpec::Mollify { n } => Operator::mollify(ProjectionLevel::new(*n)?),
            OpSpec::Composite { parts } => {
                let mut built = Vec::with_capacity(parts.len());
                let mut d = dim;
                for p in parts {
                    let op = p.build(grid, d, driver_dim)?;
                    d = op.output_dim(d, Some(driver_dim))?;
                    built.push(op);
                }
                Operator::composite(built)
            }
            OpSpec::Sum { parts } => Operator::sum(
                parts
                    .iter()
                    .map(|p| p.build(grid, dim, driver_dim))
                    .collect::<Result<_>>()?,
            ),
            OpSpec::NonlocalShift => demo::nonlocal_shift(),
            OpSpec::Anticipating => demo::anticipating(),
        })
    }
}

/// A fixed-point equation `x = h(x)`: either a named SDE preset or an
/// operator with a deterministic starting value (used for the initial guess
/// and the box centre).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProblemSpec {
    Preset(PresetSpec),
    Operator(OperatorProblem),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorProblem {
    pub operator: OpSpec,
    pub x0: Vec<f64>,
}

/// A problem ready to solve.
#[derive(Debug, Clone)]
pub struct BuiltProblem {
    pub h: Operator,
    pub dim: usize,
    pub x0: InitialValue,
    /// Present for presets; localization needs the coefficients.
    pub sde: Option<SDEProblem>,
}

impl ProblemSpec {
    pub fn build(&self, grid: TimeGrid, driver_dim: usize) -> Result<BuiltProblem> {
        match self {
            ProblemSpec::Preset(p) => {
                let sde = p.build();
                if sde.driver_dim != driver_dim {
                    return Err(Error::Config(format!(
                        "preset `{}` needs d_w = {}, config has {driver_dim}",
                        p.name(),
                        sde.driver_dim
                    )));
                }
                Ok(BuiltProblem {
                    h: sde.as_operator()?,
                    dim: sde.dim,
                    x0: sde.x0.clone(),
                    sde: Some(sde),
                })
            }
            ProblemSpec::Operator(o) => {
                if o.x0.is_empty() {
                    return Err(Error::Config("problem.x0 must be nonempty".into()));
                }
                let dim = o.x0.len();
                let h = o.operator.build(grid, dim, driver_dim)?;
                let out = h.output_dim(dim, Some(driver_dim))?;
                if out != dim {
                    return Err(Error::Config(format!(
                        "problem operator maps d = {dim} to d = {out}"
                    )));
                }
                Ok(BuiltProblem {
                    h,
                    dim,
                    x0: InitialValue::Deterministic(o.x0.clone()),
                    sde: None,
                })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TightnessSpec {
    /// Bounds of the uniform input box.
    pub box_lo: f64,
    pub box_hi: f64,
    pub deltas: Vec<f64>,
    pub pair_count: usize,
    pub quantile: f64,
    pub sigma: f64,
    pub rho_values: Vec<f64>,
    pub trials: usize,
}

impl Default for TightnessSpec {
    fn default() -> Self {
        TightnessSpec {
            box_lo: -1.0,
            box_hi: 1.0,
            deltas: vec![0.1, 0.2, 0.5],
            pair_count: 64,
            quantile: 0.995,
            sigma: 0.05,
            rho_values: vec![0.4, 0.2, 0.1, 0.05],
            trials: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSpec {
    pub locality_trials: usize,
    pub adaptedness_trials: usize,
}

impl Default for CheckSpec {
    fn default() -> Self {
        CheckSpec {
            locality_trials: 200,
            adaptedness_trials: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSpec {
    #[serde(default = "default_battery_count")]
    pub battery_count: usize,
    #[serde(default)]
    pub battery_seed: u64,
    /// Operator probed by `check-op` and `tightness`; defaults to the
    /// problem's `h`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operator: Option<OpSpec>,
    #[serde(default)]
    pub tightness: TightnessSpec,
    #[serde(default)]
    pub check: CheckSpec,
}

fn default_battery_count() -> usize {
    8
}

impl Default for DiagnosticsSpec {
    fn default() -> Self {
        DiagnosticsSpec {
            battery_count: default_battery_count(),
            battery_seed: 0,
            operator: None,
            tightness: TightnessSpec::default(),
            check: CheckSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalizationSpec {
    pub radii: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridSpec,
    pub monte_carlo: MonteCarloSpec,
    pub problem: ProblemSpec,
    pub scheme: SchemeConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub localization: Option<LocalizationSpec>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parse and validate.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let cfg = Self::from_json(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let grid = self.grid.build()?;
        if self.monte_carlo.m == 0 {
            return Err(Error::Config("monte_carlo.M must be positive".into()));
        }
        if self.monte_carlo.d_w == 0 {
            return Err(Error::Config("monte_carlo.d_w must be positive".into()));
        }
        self.scheme.validate()?;
        self.scheme.check_grid(&grid)?;
        let problem = self.problem.build(grid, self.monte_carlo.d_w)?;
        if let ProblemSpec::Preset(p) = &self.problem {
            p.build().validate()?;
        }
        if let Some(op) = &self.diagnostics.operator {
            op.build(grid, problem.dim, self.monte_carlo.d_w)?;
        }
        let t = &self.diagnostics.tightness;
        if !(t.box_lo <= t.box_hi) {
            return Err(Error::Config("tightness box needs box_lo <= box_hi".into()));
        }
        if t.deltas.is_empty() || t.deltas.iter().any(|&d| d < grid.dt()) {
            return Err(Error::Config(format!(
                "tightness deltas must be nonempty and at least dt = {}",
                grid.dt()
            )));
        }
        if t.pair_count < 2 {
            return Err(Error::Config("tightness pair_count must be at least 2".into()));
        }
        if !(0.0 < t.quantile && t.quantile <= 1.0) || !(t.sigma >= 0.0) {
            return Err(Error::Config("tightness needs quantile in (0, 1] and sigma >= 0".into()));
        }
        if t.rho_values.is_empty() || t.rho_values.iter().any(|r| !(*r > 0.0)) || t.trials == 0 {
            return Err(Error::Config("tightness needs positive rho_values and trials".into()));
        }
        let c = &self.diagnostics.check;
        if c.locality_trials == 0 || c.adaptedness_trials == 0 {
            return Err(Error::Config("check trials must be positive".into()));
        }
        if let Some(l) = &self.localization {
            if l.radii.is_empty()
                || l.radii.iter().any(|r| !(*r > 0.0))
                || l.radii.windows(2).any(|w| w[0] >= w[1])
            {
                return Err(Error::Config(
                    "localization.radii must be positive and strictly increasing".into(),
                ));
            }
            if problem.sde.is_none() {
                return Err(Error::Config("localization needs a preset problem".into()));
            }
        }
        Ok(())
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        self.grid.build()
    }

    pub fn driver(&self) -> Result<DriverEnsemble> {
        sample_driver(self.time_grid()?, self.monte_carlo.m, self.monte_carlo.d_w, self.monte_carlo.seed)
    }

    pub fn build_problem(&self) -> Result<BuiltProblem> {
        self.problem.build(self.time_grid()?, self.monte_carlo.d_w)
    }

    /// The configured probe operator, or the problem's `h`.
    pub fn probe_operator(&self) -> Result<(Operator, usize)> {
        let problem = self.build_problem()?;
        match &self.diagnostics.operator {
            Some(op) => Ok((op.build(self.time_grid()?, problem.dim, self.monte_carlo.d_w)?, problem.dim)),
            None => Ok((problem.h, problem.dim)),
        }
    }

    pub fn initial_guess(&self, problem: &BuiltProblem) -> Result<PathEnsemble> {
        problem.x0.ensemble(self.time_grid()?, self.monte_carlo.m)
    }
}
