//! Stochastic differential equations as fixed-point problems.
//!
//! `dx = f⁰(t, x) dt + Σ_j f^j(t, x) dW_j`, `x(a) = x₀`, is the fixed point of
//! `(h x)(t) = x₀ + ∫ f⁰(s, x) ds + Σ_j ∫ f^j(s, x) dW_j`. The problem is
//! packaged as an [`Operator`] for the scheme in [`crate::fixpoint`], and can
//! be localized on a ladder of balls around `x₀` with grid-valued stopping
//! times.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixpoint::{solve_fixed_point, SchemeConfig};
use crate::operators::{lebesgue_integral, superposition, CoefArgs, CoefficientFn, Operator};
use crate::pathspace::{DriverEnsemble, PathEnsemble, TimeGrid};

#[derive(Debug, Clone, PartialEq)]
pub enum InitialValue {
    Deterministic(Vec<f64>),
    /// Row-major `[M][d]`, one value per scenario.
    PerScenario { dim: usize, values: Arc<Vec<f64>> },
}

impl InitialValue {
    pub fn dim(&self) -> usize {
        match self {
            InitialValue::Deterministic(v) => v.len(),
            InitialValue::PerScenario { dim, .. } => *dim,
        }
    }

    pub fn at(&self, m: usize) -> &[f64] {
        match self {
            InitialValue::Deterministic(v) => v,
            InitialValue::PerScenario { dim, values } => &values[m * dim..(m + 1) * dim],
        }
    }

    pub fn as_operator(&self) -> Operator {
        match self {
            InitialValue::Deterministic(v) => Operator::constant(v.clone()),
            InitialValue::PerScenario { dim, values } => {
                Operator::scenario_constant(*dim, values.as_ref().clone())
            }
        }
    }

    /// The initial value held constant in time; the usual initial guess.
    pub fn ensemble(&self, grid: TimeGrid, scenarios: usize) -> Result<PathEnsemble> {
        if let InitialValue::PerScenario { dim, values } = self {
            if values.len() != scenarios * dim {
                return Err(Error::shape(format!(
                    "initial values cover {} scenarios, expected {scenarios}",
                    values.len() / dim.max(&1)
                )));
            }
        }
        let d = self.dim();
        Ok(PathEnsemble::from_fn(grid, scenarios, d, |m, _, _, out| {
            out.copy_from_slice(self.at(m))
        }))
    }
}

#[derive(Debug, Clone)]
pub struct SDEProblem {
    pub dim: usize,
    pub driver_dim: usize,
    pub x0: InitialValue,
    pub drift: CoefficientFn,
    /// `diffusions[j]` multiplies `dW_j`; missing columns have zero diffusion.
    pub diffusions: Vec<CoefficientFn>,
}

impl SDEProblem {
    pub fn new(
        driver_dim: usize,
        x0: InitialValue,
        drift: CoefficientFn,
        diffusions: Vec<CoefficientFn>,
    ) -> Result<Self> {
        let p = SDEProblem {
            dim: x0.dim(),
            driver_dim,
            x0,
            drift,
            diffusions,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.x0.dim() != self.dim {
            return Err(Error::dim(format!(
                "state dimension {} but x0 has {}",
                self.dim,
                self.x0.dim()
            )));
        }
        if self.diffusions.len() > self.driver_dim {
            return Err(Error::dim(format!(
                "{} diffusion columns for a driver of dimension {}",
                self.diffusions.len(),
                self.driver_dim
            )));
        }
        for f in std::iter::once(&self.drift).chain(&self.diffusions) {
            if f.out_dim(self.dim) != self.dim {
                return Err(Error::dim(format!(
                    "coefficient `{}` maps d = {} to d = {}",
                    f.name(),
                    self.dim,
                    f.out_dim(self.dim)
                )));
            }
            if f.reads_driver() && self.driver_dim == 0 {
                return Err(Error::dim(format!("coefficient `{}` reads a missing driver", f.name())));
            }
        }
        Ok(())
    }

    /// `x₀ + ∫ f⁰ ds + Σ_j ∫ f^j dW_j`.
    pub fn as_operator(&self) -> Result<Operator> {
        self.validate()?;
        let mut parts = vec![
            self.x0.as_operator(),
            superposition(self.drift.clone()).then(lebesgue_integral()),
        ];
        for (j, f) in self.diffusions.iter().enumerate() {
            parts.push(superposition(f.clone()).then(Operator::ito_column(j)));
        }
        Ok(Operator::sum(parts))
    }

    /// The initial value held constant in time.
    pub fn initial_guess(&self, grid: TimeGrid, scenarios: usize) -> Result<PathEnsemble> {
        self.x0.ensemble(grid, scenarios)
    }

    /// Every coefficient composed with the projection onto the closed ball of
    /// radius `radius` around the scenario's initial value.
    pub fn localized(&self, radius: f64) -> SDEProblem {
        let x0 = Arc::new(self.x0.clone());
        let wrap = |f: &CoefficientFn| ball_composed(f, self.dim, x0.clone(), radius);
        SDEProblem {
            dim: self.dim,
            driver_dim: self.driver_dim,
            x0: self.x0.clone(),
            drift: wrap(&self.drift),
            diffusions: self.diffusions.iter().map(wrap).collect(),
        }
    }
}

/// `x₀ + (x − x₀) min{1, r / ‖x − x₀‖}`; returns `x` itself inside the ball.
pub fn ball_projection(x: &[f64], center: &[f64], radius: f64, out: &mut [f64]) {
    let norm = x
        .iter()
        .zip(center)
        .map(|(a, c)| (a - c) * (a - c))
        .sum::<f64>()
        .sqrt();
    if norm <= radius {
        out.copy_from_slice(x);
    } else {
        let s = radius / norm;
        for i in 0..x.len() {
            out[i] = center[i] + (x[i] - center[i]) * s;
        }
    }
}

fn ball_composed(f: &CoefficientFn, dim: usize, x0: Arc<InitialValue>, radius: f64) -> CoefficientFn {
    let inner = f.clone();
    let mut g = CoefficientFn::new(format!("{}∘κ[{radius}]", f.name()), move |a, out| {
        let mut state = vec![0.0; a.state.len()];
        ball_projection(a.state, x0.at(a.scenario), radius, &mut state);
        inner.eval(&CoefArgs { state: &state, ..*a }, out);
    })
    .with_out_dim(f.out_dim(dim));
    if let Some(b) = f.bound() {
        g = g.with_bound(b);
    }
    if f.reads_driver() {
        g = g.reading_driver();
    }
    g
}

/// Named problem with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum PresetSpec {
    /// `dx = μx dt + σx dW`.
    Gbm { mu: f64, sigma: f64, x0: f64 },
    /// `dx = −θx dt + σ dW`.
    Ou { theta: f64, sigma: f64, x0: f64 },
    /// `dx = c tanh(x) dt + c tanh(x) dW`; coefficients bounded by `|c|`.
    BoundedTanh { c: f64, x0: f64 },
    /// `dx = clamp(sin(W(t)) x, −1, 1) dt`; a random, adapted coefficient.
    DriverCoupled { x0: f64 },
}

impl PresetSpec {
    pub fn name(&self) -> &'static str {
        match self {
            PresetSpec::Gbm { .. } => "gbm",
            PresetSpec::Ou { .. } => "ou",
            PresetSpec::BoundedTanh { .. } => "bounded_tanh",
            PresetSpec::DriverCoupled { .. } => "driver_coupled",
        }
    }

    pub fn build(&self) -> SDEProblem {
        let (x0, drift, diffusion) = match *self {
            PresetSpec::Gbm { mu, sigma, x0 } => (
                x0,
                CoefficientFn::linear(mu, 0.0),
                Some(CoefficientFn::linear(sigma, 0.0)),
            ),
            PresetSpec::Ou { theta, sigma, x0 } => (
                x0,
                CoefficientFn::linear(-theta, 0.0),
                Some(CoefficientFn::constant(vec![sigma])),
            ),
            PresetSpec::BoundedTanh { c, x0 } => {
                (x0, CoefficientFn::tanh(c), Some(CoefficientFn::tanh(c)))
            }
            PresetSpec::DriverCoupled { x0 } => (x0, CoefficientFn::sin_driver_clipped(1.0), None),
        };
        SDEProblem {
            dim: 1,
            driver_dim: 1,
            x0: InitialValue::Deterministic(vec![x0]),
            drift,
            diffusions: diffusion.into_iter().collect(),
        }
    }
}

/// Preset by name with positional parameters:
/// `gbm(μ, σ, x₀)`, `ou(θ, σ, x₀)`, `bounded_tanh(c, x₀)`, `driver_coupled(x₀)`.
pub fn preset(name: &str, params: &[f64]) -> Result<SDEProblem> {
    let want = match name {
        "gbm" | "ou" => 3,
        "bounded_tanh" => 2,
        "driver_coupled" => 1,
        _ => return Err(Error::UnknownPreset(name.to_string())),
    };
    if params.len() != want {
        return Err(Error::InvalidArgument(format!(
            "preset `{name}` takes {want} parameters, got {}",
            params.len()
        )));
    }
    let spec = match name {
        "gbm" => PresetSpec::Gbm {
            mu: params[0],
            sigma: params[1],
            x0: params[2],
        },
        "ou" => PresetSpec::Ou {
            theta: params[0],
            sigma: params[1],
            x0: params[2],
        },
        "bounded_tanh" => PresetSpec::BoundedTanh {
            c: params[0],
            x0: params[1],
        },
        _ => PresetSpec::DriverCoupled { x0: params[0] },
    };
    Ok(spec.build())
}

#[derive(Debug, Clone)]
pub struct LocalizedSolution {
    /// Solution for the largest radius.
    pub path: PathEnsemble,
    /// First node with `‖x − x₀‖ > r` for the largest radius, `N` if none.
    pub stopping_nodes: Vec<usize>,
    pub exit_flags: Vec<bool>,
    /// Per radius: the solution and its stopping nodes.
    pub ladder: Vec<(f64, PathEnsemble, Vec<usize>)>,
    /// Scenarios where consecutive localizations disagree before the
    /// smaller radius' stopping node (inclusive).
    pub inconsistent: Vec<usize>,
}

impl LocalizedSolution {
    pub fn consistent(&self) -> bool {
        self.inconsistent.is_empty()
    }
}

fn stopping_nodes(x: &PathEnsemble, x0: &InitialValue, radius: f64) -> Vec<usize> {
    let d = x.dim();
    (0..x.scenarios())
        .map(|m| {
            let c = x0.at(m);
            let p = x.path(m);
            (0..x.grid().len())
                .find(|&k| {
                    let norm = p[k * d..(k + 1) * d]
                        .iter()
                        .zip(c)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    norm > radius
                })
                .unwrap_or(x.grid().steps())
        })
        .collect()
}

/// Solve the radius ladder, each rung as the grid fixed point of the localized
/// operator (Euler–Maruyama for these problems). Tolerances and damping come
/// from `config`; its levels and box rule are not used.
pub fn solve_localized(
    p: &SDEProblem,
    radii: &[f64],
    driver: &DriverEnsemble,
    config: &SchemeConfig,
) -> Result<LocalizedSolution> {
    if radii.is_empty() || radii.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::InvalidArgument("radii must be positive and nonempty".into()));
    }
    if radii.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("radii must be strictly increasing".into()));
    }
    let grid = *driver.grid();
    let scenarios = driver.scenarios();
    let x_init = p.initial_guess(grid, scenarios)?;
    let mut ladder: Vec<(f64, PathEnsemble, Vec<usize>)> = Vec::with_capacity(radii.len());
    for &r in radii {
        let h = p.localized(r).as_operator()?;
        let sol = solve_fixed_point(&h, &x_init, Some(driver), config)?;
        if !sol.converged {
            return Err(Error::NotConverged(format!(
                "localized solve at radius {r}, worst residual {}",
                sol.residuals.iter().cloned().fold(0.0, f64::max)
            )));
        }
        let tau = stopping_nodes(&sol.alpha, &p.x0, r);
        ladder.push((r, sol.alpha, tau));
    }
    let d = p.dim;
    let mut inconsistent = Vec::new();
    for pair in ladder.windows(2) {
        let (_, a, tau) = &pair[0];
        let (_, b, _) = &pair[1];
        for m in 0..scenarios {
            let upto = (tau[m] + 1) * d;
            let same = a.path(m)[..upto]
                .iter()
                .zip(&b.path(m)[..upto])
                .all(|(u, v)| u.to_bits() == v.to_bits());
            if !same && !inconsistent.contains(&m) {
                inconsistent.push(m);
            }
        }
    }
    inconsistent.sort_unstable();
    let (r_max, path, tau) = ladder.last().cloned().expect("radii are nonempty");
    let exit_flags = (0..scenarios)
        .map(|m| {
            let k = tau[m];
            k < grid.steps() || {
                let x = path.value(m, k);
                x.iter()
                    .zip(p.x0.at(m))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
                    > r_max
            }
        })
        .collect();
    Ok(LocalizedSolution {
        path,
        stopping_nodes: tau,
        exit_flags,
        ladder,
        inconsistent,
    })
}
