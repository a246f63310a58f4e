//! The projection scheme: `h_n = clamp ∘ π̃_n ∘ h`, its per-level fixed
//! points `α_n`, and convergence statistics along the level sequence.
//!
//! `π̃_n` is the lagged interpolant [`causal_interp`]: on `[A_i, A_{i+1}]` it
//! runs from `x(A_{i-1})` to `x(A_i)`. Every output node therefore reads
//! earlier nodes only, so for strictly causal `h` the map `h_n` is strictly
//! causal too and `h_n α = α` is solved exactly by one forward pass over the
//! nodes, scenario by scenario. The solution is adapted: `α_n` at node `k`
//! reads driver increments before `k` only. Other operators fall back to
//! damped Picard iteration.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::eval::{Ctx, Evaluator};
use crate::operators::{apply_with, Causality, EnsembleMap, Operator};
use crate::pathspace::{
    path_distance, prob_metric, write_binary, DriverEnsemble, DriverPath, MetricEstimate, Norm,
    PathEnsemble, TimeGrid,
};
use crate::projective::{causal_interp, CompactBox, ProjectionLevel};
use crate::stats;

/// How the level-`n` box is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoxRule {
    /// `[lo, hi]` at every node, coordinate and level.
    Uniform { lo: f64, hi: f64 },
    /// `[c − R_0 n, c + R_0 n]` around the node-0 mean `c` of the initial guess.
    Growing { radius0: f64 },
    /// A given box for every level.
    #[serde(skip)]
    Explicit(Arc<CompactBox>),
}

impl BoxRule {
    pub fn box_for(&self, level: ProjectionLevel, x_init: &PathEnsemble) -> Result<CompactBox> {
        let grid = *x_init.grid();
        match self {
            BoxRule::Uniform { lo, hi } => CompactBox::uniform(grid, x_init.dim(), *lo, *hi),
            BoxRule::Growing { radius0 } => {
                let d = x_init.dim();
                let mut center = vec![0.0; d];
                for p in x_init.paths() {
                    for i in 0..d {
                        center[i] += p[i];
                    }
                }
                center.iter_mut().for_each(|c| *c /= x_init.scenarios() as f64);
                CompactBox::around(grid, &center, radius0 * level.n() as f64)
            }
            BoxRule::Explicit(bx) => Ok((**bx).clone()),
        }
    }
}

fn default_damping() -> f64 {
    0.5
}

fn default_tol() -> f64 {
    1e-8
}

fn default_max_iter() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    /// Strictly increasing projection levels.
    pub levels: Vec<ProjectionLevel>,
    pub box_rule: BoxRule,
    /// Picard damping `λ ∈ (0, 1]`.
    #[serde(default = "default_damping")]
    pub damping: f64,
    /// Sup-norm residual tolerance.
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

impl SchemeConfig {
    pub fn new(levels: &[usize], box_rule: BoxRule) -> Result<Self> {
        let levels = levels
            .iter()
            .map(|&n| ProjectionLevel::new(n))
            .collect::<Result<Vec<_>>>()?;
        let config = SchemeConfig {
            levels,
            box_rule,
            damping: default_damping(),
            tol: default_tol(),
            max_iter: default_max_iter(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::Config("at least one level is required".into()));
        }
        if self.levels.windows(2).any(|w| w[0].n() >= w[1].n()) {
            return Err(Error::Config("levels must be strictly increasing".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::Config(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        match &self.box_rule {
            BoxRule::Uniform { lo, hi } if !(lo <= hi) => {
                Err(Error::Config(format!("box bounds [{lo}, {hi}] are empty")))
            }
            BoxRule::Growing { radius0 } if !(*radius0 >= 0.0 && radius0.is_finite()) => {
                Err(Error::Config(format!("radius0 must be finite and >= 0, got {radius0}")))
            }
            _ => Ok(()),
        }
    }

    pub fn check_grid(&self, grid: &TimeGrid) -> Result<()> {
        for level in &self.levels {
            level.block_len(grid)?;
        }
        Ok(())
    }
}

/// `h_n = clamp ∘ π̃_n ∘ h` with the lagged interpolant `π̃_n`, remembering
/// its parts.
#[derive(Debug, Clone)]
pub struct ProjectedOperator {
    h: Operator,
    level: ProjectionLevel,
    bx: Arc<CompactBox>,
    op: Operator,
}

impl ProjectedOperator {
    pub fn operator(&self) -> &Operator {
        &self.op
    }

    pub fn inner(&self) -> &Operator {
        &self.h
    }

    pub fn level(&self) -> ProjectionLevel {
        self.level
    }

    pub fn bounding_box(&self) -> &CompactBox {
        &self.bx
    }

    /// Strictly causal whenever `h` is; the solver then needs one pass.
    pub fn causality(&self) -> Causality {
        self.op.causality()
    }
}

pub fn build_hn(h: &Operator, level: ProjectionLevel, bx: &CompactBox) -> Result<ProjectedOperator> {
    level.block_len(bx.grid())?;
    let op = Operator::composite(vec![
        h.clone(),
        Operator::causal_interp(level),
        Operator::clamp(bx.clone()),
    ]);
    Ok(ProjectedOperator {
        h: h.clone(),
        level,
        bx: Arc::new(bx.clone()),
        op,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    ForwardSubstitution,
    Picard,
}

impl fmt::Display for SolveMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolveMethod::ForwardSubstitution => "forward_substitution",
            SolveMethod::Picard => "picard",
        })
    }
}

#[derive(Debug, Clone)]
pub struct LevelSolution {
    pub alpha: PathEnsemble,
    /// Passes per scenario: 1 for forward substitution, evaluations of `h_n`
    /// for Picard.
    pub iterations: Vec<usize>,
    /// `‖h_n α − α‖_sup` per scenario.
    pub residuals: Vec<f64>,
    pub converged: bool,
    pub method: SolveMethod,
}

fn sup_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0_f64, |acc, (x, y)| acc.max((x - y).abs()))
}

fn ctx<'a>(m: usize, input: &'a [f64], driver: Option<DriverPath<'a>>, grid: TimeGrid) -> Ctx<'a> {
    Ctx {
        m,
        input,
        driver,
        grid,
    }
}

/// Forward substitution for one scenario; `alpha` is overwritten. Requires a
/// strictly causal operator, so one pass over the nodes is exact.
fn forward_substitution(
    ev: &mut Evaluator,
    m: usize,
    driver: Option<DriverPath<'_>>,
    alpha: &mut [f64],
) -> Result<()> {
    let grid = *ev.grid();
    let d = ev.out_dim();
    ev.reset(m)?;
    for k in 0..=grid.steps() {
        ev.ensure(k, &ctx(m, alpha, driver, grid))?;
        let v = ev.node_output(k).to_vec();
        alpha[k * d..(k + 1) * d].copy_from_slice(&v);
        ev.rewind(k);
    }
    Ok(())
}

fn picard(
    ev: &mut Evaluator,
    m: usize,
    driver: Option<DriverPath<'_>>,
    config: &SchemeConfig,
    alpha: &mut [f64],
) -> Result<(usize, f64)> {
    let lambda = config.damping;
    let mut iters = 0;
    loop {
        ev.run(m, alpha, driver)?;
        iters += 1;
        let out = ev.output();
        let res = sup_gap(out, alpha);
        if res <= config.tol {
            // Finish on an undamped step so that α lies in the range of h_n.
            alpha.copy_from_slice(out);
            ev.run(m, alpha, driver)?;
            return Ok((iters, sup_gap(ev.output(), alpha)));
        }
        if iters >= config.max_iter {
            return Ok((iters, res));
        }
        for (a, h) in alpha.iter_mut().zip(out) {
            *a = (1.0 - lambda) * *a + lambda * h;
        }
    }
}

fn picard_ensemble(
    op: &Operator,
    x0: &PathEnsemble,
    driver: Option<&DriverEnsemble>,
    config: &SchemeConfig,
) -> Result<LevelSolution> {
    let lambda = config.damping;
    let mut alpha = x0.clone();
    let mut iters = 0;
    loop {
        let h = apply_with(op, &alpha, driver)?;
        iters += 1;
        let residuals: Vec<f64> = (0..alpha.scenarios())
            .map(|m| sup_gap(h.path(m), alpha.path(m)))
            .collect();
        let worst = residuals.iter().cloned().fold(0.0, f64::max);
        if worst <= config.tol {
            let alpha = h;
            let h = apply_with(op, &alpha, driver)?;
            let residuals: Vec<f64> = (0..alpha.scenarios())
                .map(|m| sup_gap(h.path(m), alpha.path(m)))
                .collect();
            return Ok(LevelSolution {
                iterations: vec![iters; alpha.scenarios()],
                converged: residuals.iter().all(|&r| r <= config.tol),
                alpha,
                residuals,
                method: SolveMethod::Picard,
            });
        }
        if iters >= config.max_iter {
            return Ok(LevelSolution {
                iterations: vec![iters; alpha.scenarios()],
                converged: worst <= config.tol,
                alpha,
                residuals,
                method: SolveMethod::Picard,
            });
        }
        alpha = alpha.zip_map(&h, |a, b| (1.0 - lambda) * a + lambda * b)?;
    }
}

/// Approximate fixed point of `h_n`, scenario by scenario.
///
/// `x0` is the initial guess for Picard iteration and fixes the shape; forward
/// substitution does not read it.
pub fn solve_level(
    hn: &ProjectedOperator,
    x0: &PathEnsemble,
    driver: Option<&DriverEnsemble>,
    config: &SchemeConfig,
) -> Result<LevelSolution> {
    if hn.bounding_box().grid() != x0.grid() || hn.bounding_box().dim() != x0.dim() {
        return Err(Error::shape("box and initial guess disagree on grid or dimension"));
    }
    solve(hn.operator(), x0, driver, config)
}

/// Fixed point of `h` itself, without projection or box.
///
/// For a strictly causal `h` this is the explicit recursion on the grid; for
/// the integral form of an SDE it is the Euler–Maruyama scheme.
pub fn solve_fixed_point(
    h: &Operator,
    x0: &PathEnsemble,
    driver: Option<&DriverEnsemble>,
    config: &SchemeConfig,
) -> Result<LevelSolution> {
    solve(h, x0, driver, config)
}

fn solve(
    op: &Operator,
    x0: &PathEnsemble,
    driver: Option<&DriverEnsemble>,
    config: &SchemeConfig,
) -> Result<LevelSolution> {
    let grid = *x0.grid();
    if let Some(w) = driver {
        if w.grid() != &grid || w.scenarios() != x0.scenarios() {
            return Err(Error::shape("driver and initial guess disagree on (M, N)"));
        }
    }
    if !op.is_scenario_wise() {
        return picard_ensemble(op, x0, driver, config);
    }
    let method = if op.causality() == Causality::StrictlyCausal {
        SolveMethod::ForwardSubstitution
    } else {
        SolveMethod::Picard
    };
    let proto = Evaluator::new(op, grid, x0.dim(), driver.map(|w| w.dim()))?;
    if proto.out_dim() != x0.dim() {
        return Err(Error::dim(format!(
            "h maps d = {} to d = {}; a fixed point needs equal dimensions",
            x0.dim(),
            proto.out_dim()
        )));
    }
    let mut alpha = x0.clone();
    let len = x0.path_len();
    let outcomes: Vec<Result<(usize, f64)>> = alpha
        .values_mut()
        .par_chunks_mut(len)
        .enumerate()
        .map_init(
            || proto.clone(),
            |ev, (m, path)| {
                let w = driver.map(|w| w.scenario(m));
                match method {
                    SolveMethod::ForwardSubstitution => {
                        forward_substitution(ev, m, w, path)?;
                        ev.run(m, path, w)?;
                        Ok((1, sup_gap(ev.output(), path)))
                    }
                    SolveMethod::Picard => picard(ev, m, w, config, path),
                }
            },
        )
        .collect();
    let (iterations, residuals): (Vec<usize>, Vec<f64>) =
        outcomes.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();
    let converged = residuals.iter().all(|&r| r <= config.tol);
    Ok(LevelSolution {
        alpha,
        iterations,
        residuals,
        converged,
        method,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub n: usize,
    pub median_residual: f64,
    pub frac_ge_1_over_n: f64,
    pub bound_2_over_n: f64,
    pub frac_ge_2_over_n: f64,
    /// Largest per-scenario iteration count.
    pub iterations: usize,
    pub converged: bool,
    /// Fraction of scenarios where `π_n h α_n` left the box.
    pub clamp_active: f64,
    pub method: SolveMethod,
}

#[derive(Debug, Clone)]
pub struct SchemeResult {
    pub levels: Vec<ProjectionLevel>,
    pub alphas: Vec<PathEnsemble>,
    /// True residuals `‖h α_n − α_n‖_sup`, per level and scenario.
    pub residuals: Vec<Vec<f64>>,
    /// Solver residuals `‖h_n α_n − α_n‖_sup`.
    pub hn_residuals: Vec<Vec<f64>>,
    pub iterations: Vec<Vec<usize>>,
    pub level_stats: Vec<LevelStats>,
    /// `pairwise[i][j] = d(α_{n_i}, α_{n_j})` under the sup norm.
    pub pairwise: Vec<Vec<MetricEstimate>>,
}

impl SchemeResult {
    /// True when every level solve met its tolerance.
    pub fn converged(&self) -> bool {
        self.level_stats.iter().all(|s| s.converged)
    }

    /// Assemble a result from given ensembles, e.g. to diagnose a sequence
    /// produced elsewhere. Residual columns are left empty.
    pub fn from_alphas(levels: Vec<ProjectionLevel>, alphas: Vec<PathEnsemble>) -> Result<Self> {
        if levels.len() != alphas.len() {
            return Err(Error::shape("one ensemble per level is required"));
        }
        let pairwise = pairwise_distances(&alphas)?;
        Ok(SchemeResult {
            level_stats: Vec::new(),
            residuals: vec![Vec::new(); alphas.len()],
            hn_residuals: vec![Vec::new(); alphas.len()],
            iterations: vec![Vec::new(); alphas.len()],
            levels,
            alphas,
            pairwise,
        })
    }

    pub fn write_levels_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "n,median_residual,frac_ge_1_over_n,bound_2_over_n,iterations,frac_ge_2_over_n,converged,clamp_active,method"
        )?;
        for s in &self.level_stats {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                s.n,
                s.median_residual,
                s.frac_ge_1_over_n,
                s.bound_2_over_n,
                s.iterations,
                s.frac_ge_2_over_n,
                s.converged,
                s.clamp_active,
                s.method
            )?;
        }
        Ok(())
    }

    pub fn write_pairwise_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "n,m,distance,std_error")?;
        for (i, row) in self.pairwise.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                writeln!(
                    w,
                    "{},{},{},{}",
                    self.levels[i].n(),
                    self.levels[j].n(),
                    e.value,
                    e.std_error
                )?;
            }
        }
        Ok(())
    }

    /// `alpha_n{n}.bin` per level, `levels.csv` and `pairwise.csv`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for (level, alpha) in self.levels.iter().zip(&self.alphas) {
            let f = fs::File::create(dir.join(format!("alpha_n{}.bin", level.n())))?;
            let mut w = BufWriter::new(f);
            write_binary(alpha, &mut w)?;
            w.flush()?;
        }
        let mut w = BufWriter::new(fs::File::create(dir.join("levels.csv"))?);
        self.write_levels_csv(&mut w)?;
        w.flush()?;
        let mut w = BufWriter::new(fs::File::create(dir.join("pairwise.csv"))?);
        self.write_pairwise_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

fn pairwise_distances(alphas: &[PathEnsemble]) -> Result<Vec<Vec<MetricEstimate>>> {
    alphas
        .iter()
        .map(|a| alphas.iter().map(|b| prob_metric(a, b, Norm::Sup)).collect())
        .collect()
}

/// Run the scheme over every configured level.
pub fn run_scheme(
    h: &Operator,
    config: &SchemeConfig,
    driver: &DriverEnsemble,
    x_init: &PathEnsemble,
) -> Result<SchemeResult> {
    config.validate()?;
    config.check_grid(x_init.grid())?;
    let mut result = SchemeResult {
        levels: config.levels.clone(),
        alphas: Vec::new(),
        residuals: Vec::new(),
        hn_residuals: Vec::new(),
        iterations: Vec::new(),
        level_stats: Vec::new(),
        pairwise: Vec::new(),
    };
    for &level in &config.levels {
        let bx = config.box_rule.box_for(level, x_init)?;
        let hn = build_hn(h, level, &bx)?;
        let sol = solve_level(&hn, x_init, Some(driver), config)?;
        let h_alpha = apply_with(h, &sol.alpha, Some(driver))?;
        let grid = *x_init.grid();
        let dim = x_init.dim();
        let residuals: Vec<f64> = (0..sol.alpha.scenarios())
            .map(|m| path_distance(Norm::Sup, &grid, dim, h_alpha.path(m), sol.alpha.path(m)))
            .collect();
        let projected = causal_interp(&h_alpha, level)?;
        let clamped = projected
            .paths()
            .filter(|p| !bx.contains_path(p))
            .count();
        let n = level.n() as f64;
        let frac = |c: f64| residuals.iter().filter(|&&r| r >= c).count() as f64 / residuals.len() as f64;
        result.level_stats.push(LevelStats {
            n: level.n(),
            median_residual: stats::median(&residuals),
            frac_ge_1_over_n: frac(1.0 / n),
            bound_2_over_n: 2.0 / n,
            frac_ge_2_over_n: frac(2.0 / n),
            iterations: sol.iterations.iter().copied().max().unwrap_or(0),
            converged: sol.converged,
            clamp_active: clamped as f64 / residuals.len() as f64,
            method: sol.method,
        });
        result.residuals.push(residuals);
        result.hn_residuals.push(sol.residuals);
        result.iterations.push(sol.iterations);
        result.alphas.push(sol.alpha);
    }
    result.pairwise = pairwise_distances(&result.alphas)?;
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrongLimitVerdict {
    StrongLimitCandidate,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrongLimitReport {
    pub levels: Vec<usize>,
    /// `d(α_{n_i}, α_{n_{i+1}})`.
    pub successive: Vec<f64>,
    /// `d(α_{n_i}, α_{n_last})`.
    pub to_finest: Vec<f64>,
    pub verdict: StrongLimitVerdict,
}

/// Cauchy-in-probability proxy along the level sequence. A candidate verdict
/// says the distances shrink; it never asserts uniqueness.
pub fn strong_limit_probe(result: &SchemeResult) -> Result<StrongLimitReport> {
    let k = result.alphas.len();
    if k < 2 || result.pairwise.len() != k {
        return Err(Error::InvalidArgument("strong_limit_probe needs at least two levels".into()));
    }
    let successive: Vec<f64> = (0..k - 1).map(|i| result.pairwise[i][i + 1].value).collect();
    let to_finest: Vec<f64> = (0..k).map(|i| result.pairwise[i][k - 1].value).collect();
    let all_zero = successive.iter().all(|&d| d == 0.0);
    let shrinking = stats::decreasing_up_to_one_inversion(&successive)
        && successive.last() < successive.first();
    Ok(StrongLimitReport {
        levels: result.levels.iter().map(|l| l.n()).collect(),
        successive,
        to_finest,
        verdict: if all_zero || shrinking {
            StrongLimitVerdict::StrongLimitCandidate
        } else {
            StrongLimitVerdict::Inconclusive
        },
    })
}

/// The map `(x, driver) ↦ α_n` as an ensemble operator, with `x` as the
/// initial guess. Used to test that the solver only reads driver prefixes.
#[derive(Debug)]
pub struct LevelSolver {
    hn: ProjectedOperator,
    config: SchemeConfig,
}

impl LevelSolver {
    pub fn new(hn: ProjectedOperator, config: SchemeConfig) -> Self {
        LevelSolver { hn, config }
    }

    pub fn into_operator(self) -> Operator {
        Operator::custom(Arc::new(self), Causality::Unknown)
    }
}

impl EnsembleMap for LevelSolver {
    fn name(&self) -> &str {
        "level_solver"
    }

    fn output_dim(&self, input_dim: usize, _driver_dim: Option<usize>) -> Result<usize> {
        Ok(input_dim)
    }

    fn apply(&self, x: &PathEnsemble, driver: Option<&DriverEnsemble>) -> Result<PathEnsemble> {
        Ok(solve_level(&self.hn, x, driver, &self.config)?.alpha)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{
        adaptedness_check, apply, ito_integral, lebesgue_integral, superposition, AdaptednessSetup,
        CoefficientFn,
    };
    use crate::pathspace::sample_driver;

    fn grid(n: usize) -> TimeGrid {
        TimeGrid::new(0.0, 1.0, n).unwrap()
    }

    fn huge(g: TimeGrid, d: usize) -> CompactBox {
        CompactBox::uniform(g, d, -1e300, 1e300).unwrap()
    }

    fn config(levels: &[usize]) -> SchemeConfig {
        SchemeConfig::new(levels, BoxRule::Uniform { lo: -1e300, hi: 1e300 }).unwrap()
    }

    fn gbm(mu: f64, sigma: f64, x0: f64) -> Operator {
        Operator::sum(vec![
            Operator::constant(vec![x0]),
            superposition(CoefficientFn::linear(mu, 0.0)).then(lebesgue_integral()),
            superposition(CoefficientFn::linear(sigma, 0.0)).then(ito_integral()),
        ])
    }

    #[test]
    fn inert_box_leaves_interpolation() {
        let g = grid(16);
        let w = sample_driver(g, 6, 1, 1).unwrap();
        let level = ProjectionLevel::new(4).unwrap();
        let hn = build_hn(&Operator::identity(), level, &huge(g, 1)).unwrap();
        let x = w.to_paths();
        assert_eq!(apply(hn.operator(), &x, &w).unwrap(), causal_interp(&x, level).unwrap());
    }

    #[test]
    fn constants_survive_projection_and_degenerate_boxes_force_them() {
        let g = grid(16);
        let w = sample_driver(g, 6, 1, 2).unwrap();
        let x = w.to_paths();
        let level = ProjectionLevel::new(8).unwrap();
        let hn = build_hn(&Operator::constant(vec![0.3]), level, &huge(g, 1)).unwrap();
        assert!(apply(hn.operator(), &x, &w).unwrap().values().iter().all(|&v| v == 0.3));

        let pinned = CompactBox::uniform(g, 1, -0.7, -0.7).unwrap();
        let hn = build_hn(&ito_integral(), level, &pinned).unwrap();
        assert!(apply(hn.operator(), &x, &w).unwrap().values().iter().all(|&v| v == -0.7));
    }

    #[test]
    fn build_rejects_non_divisor() {
        let g = grid(10);
        let r = build_hn(&Operator::identity(), ProjectionLevel::new(4).unwrap(), &huge(g, 1));
        assert!(matches!(r, Err(Error::Divisibility { n: 4, steps: 10 })));
    }

    #[test]
    fn constant_operator_is_solved_in_one_pass() {
        let g = grid(32);
        let w = sample_driver(g, 5, 1, 3).unwrap();
        let cfg = config(&[4]);
        let hn = build_hn(&Operator::constant(vec![1.25]), cfg.levels[0], &huge(g, 1)).unwrap();
        let sol = solve_level(&hn, &PathEnsemble::zeros(g, 5, 1), Some(&w), &cfg).unwrap();
        assert_eq!(sol.method, SolveMethod::ForwardSubstitution);
        assert!(sol.alpha.values().iter().all(|&v| v == 1.25));
        assert!(sol.residuals.iter().all(|&r| r == 0.0));
        assert!(sol.iterations.iter().all(|&i| i == 1));
    }

    #[test]
    fn deterministic_growth_matches_explicit_euler() {
        // x = 1 + ∫x ds on [0,1]; explicit Euler gives (1 + Δt)^N.
        let g = grid(512);
        let h = Operator::sum(vec![Operator::constant(vec![1.0]), lebesgue_integral()]);
        let cfg = config(&[512]);
        let sol = solve_fixed_point(&h, &PathEnsemble::zeros(g, 2, 1), None, &cfg).unwrap();
        let end = sol.alpha.value(0, 512)[0];
        assert!((end - (1.0 + 1.0 / 512.0_f64).powi(512)).abs() < 1e-12);
        assert!(sol.residuals.iter().all(|&r| r == 0.0));

        // The projected problems approach e at rate O(1/n).
        let errs: Vec<f64> = [16, 64, 256]
            .iter()
            .map(|&n| {
                let hn = build_hn(&h, ProjectionLevel::new(n).unwrap(), &huge(g, 1)).unwrap();
                let sol = solve_level(&hn, &PathEnsemble::zeros(g, 1, 1), None, &cfg).unwrap();
                assert!(sol.residuals.iter().all(|&r| r == 0.0));
                (sol.alpha.value(0, 512)[0] - std::f64::consts::E).abs()
            })
            .collect();
        assert!(errs[0] > 2.0 * errs[1] && errs[1] > 2.0 * errs[2], "{errs:?}");
        assert!(errs[2] < 0.05, "{errs:?}");
    }

    #[test]
    fn picard_on_affine_contraction() {
        let g = grid(8);
        let h = superposition(CoefficientFn::linear(0.5, 1.0)).with_causality(Causality::Unknown);
        let mut cfg = config(&[8]);
        cfg.damping = 1.0;
        let hn = build_hn(&h, cfg.levels[0], &huge(g, 1)).unwrap();
        let sol = solve_level(&hn, &PathEnsemble::zeros(g, 3, 1), None, &cfg).unwrap();
        assert_eq!(sol.method, SolveMethod::Picard);
        assert!(sol.converged);
        assert!(sol.iterations.iter().all(|&i| i <= 60));
        assert!(sol.alpha.values().iter().all(|&v| (v - 2.0).abs() <= 1e-8));
    }

    #[test]
    fn damped_picard_rate_matches_geometric_oracle() {
        // Error after j damped steps is 2 |1 − λ + λq|^j with q = 0.5.
        let g = grid(4);
        let h = superposition(CoefficientFn::linear(0.5, 1.0)).with_causality(Causality::Causal);
        for lambda in [0.25, 0.5, 1.0] {
            let mut cfg = config(&[4]);
            cfg.damping = lambda;
            cfg.tol = 1e-300;
            cfg.max_iter = 11;
            let hn = build_hn(&h, cfg.levels[0], &huge(g, 1)).unwrap();
            let sol = solve_level(&hn, &PathEnsemble::zeros(g, 1, 1), None, &cfg).unwrap();
            assert!(!sol.converged);
            let rate: f64 = 1.0 - lambda + lambda * 0.5;
            let expected = 2.0 * rate.powi(10);
            let err = (sol.alpha.value(0, 2)[0] - 2.0).abs();
            assert!((err - expected).abs() <= 1e-12, "λ={lambda}: {err} vs {expected}");
        }
    }

    #[test]
    fn forward_substitution_reproduces_euler_maruyama() {
        let g = grid(64);
        let w = sample_driver(g, 40, 1, 11).unwrap();
        let cfg = config(&[64]);
        let sol = solve_fixed_point(&gbm(0.05, 0.2, 1.0), &PathEnsemble::zeros(g, 40, 1), Some(&w), &cfg)
            .unwrap();
        assert_eq!(sol.method, SolveMethod::ForwardSubstitution);
        for m in 0..40 {
            let path = w.scenario(m);
            let mut x = 1.0;
            for k in 0..64 {
                assert_eq!(sol.alpha.value(m, k)[0], x);
                x = x + (0.05 * x) * g.dt() + (0.2 * x) * path.increment(k)[0];
            }
            assert_eq!(sol.alpha.value(m, 64)[0], x);
        }
    }

    #[test]
    fn coarse_levels_solve_each_block() {
        let g = grid(64);
        let w = sample_driver(g, 30, 1, 12).unwrap();
        let h = gbm(0.05, 0.2, 1.0);
        for n in [4, 8, 16, 32] {
            let cfg = config(&[n]);
            let hn = build_hn(&h, cfg.levels[0], &huge(g, 1)).unwrap();
            let sol = solve_level(&hn, &PathEnsemble::zeros(g, 30, 1), Some(&w), &cfg).unwrap();
            assert!(sol.converged);
            assert_eq!(sol.method, SolveMethod::ForwardSubstitution);
            assert!(sol.iterations.iter().all(|&i| i == 1));
            assert!(sol.residuals.iter().all(|&r| r == 0.0), "{:?}", sol.residuals);
            assert_eq!(apply(hn.operator(), &sol.alpha, &w).unwrap(), sol.alpha);
        }
    }

    #[test]
    fn alpha_stays_in_box_and_clamp_activity_is_recorded() {
        let g = grid(32);
        let w = sample_driver(g, 200, 1, 13).unwrap();
        let h = gbm(0.0, 1.0, 1.0);
        let cfg = SchemeConfig::new(&[8, 32], BoxRule::Uniform { lo: 0.5, hi: 1.5 }).unwrap();
        let res = run_scheme(&h, &cfg, &w, &PathEnsemble::constant(g, 200, &[1.0])).unwrap();
        for alpha in &res.alphas {
            assert!(alpha.values().iter().all(|&v| (0.5..=1.5).contains(&v)));
        }
        assert!(res.level_stats.iter().all(|s| s.clamp_active > 0.0));
    }

    #[test]
    fn constant_scheme_is_trivial() {
        let g = grid(16);
        let w = sample_driver(g, 10, 1, 14).unwrap();
        let cfg = config(&[2, 4, 8, 16]);
        let res = run_scheme(&Operator::constant(vec![0.5]), &cfg, &w, &PathEnsemble::zeros(g, 10, 1))
            .unwrap();
        for (alpha, r) in res.alphas.iter().zip(&res.residuals) {
            assert!(alpha.values().iter().all(|&v| v == 0.5));
            assert!(r.iter().all(|&v| v == 0.0));
        }
        assert!(res.pairwise.iter().flatten().all(|e| e.value == 0.0));
        let probe = strong_limit_probe(&res).unwrap();
        assert_eq!(probe.verdict, StrongLimitVerdict::StrongLimitCandidate);
    }

    #[test]
    fn gbm_scheme_residuals_and_distances_shrink() {
        let g = grid(64);
        let m = 5000;
        let w = sample_driver(g, m, 1, 2024).unwrap();
        let cfg = config(&[8, 16, 32, 64]);
        let res = run_scheme(&gbm(0.05, 0.2, 1.0), &cfg, &w, &PathEnsemble::constant(g, m, &[1.0]))
            .unwrap();
        let med: Vec<f64> = res.level_stats.iter().map(|s| s.median_residual).collect();
        assert!(stats::strictly_decreasing_up_to_one_inversion(&med), "{med:?}");
        assert!(res.hn_residuals.iter().flatten().all(|&r| r == 0.0));
        let probe = strong_limit_probe(&res).unwrap();
        assert_eq!(probe.verdict, StrongLimitVerdict::StrongLimitCandidate, "{probe:?}");
    }

    #[test]
    fn non_binding_box_residual_is_interpolation_error() {
        let g = grid(32);
        let w = sample_driver(g, 50, 1, 15).unwrap();
        let h = gbm(0.1, 0.3, 1.0);
        let cfg = config(&[4, 8]);
        let res = run_scheme(&h, &cfg, &w, &PathEnsemble::constant(g, 50, &[1.0])).unwrap();
        for (i, level) in cfg.levels.iter().enumerate() {
            assert_eq!(res.level_stats[i].clamp_active, 0.0);
            let h_alpha = apply(&h, &res.alphas[i], &w).unwrap();
            let pi = causal_interp(&h_alpha, *level).unwrap();
            for m in 0..50 {
                let interp_err = path_distance(Norm::Sup, &g, 1, pi.path(m), h_alpha.path(m));
                assert!((res.residuals[i][m] - interp_err).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn alternating_sequence_is_inconclusive() {
        let g = grid(8);
        let a = PathEnsemble::constant(g, 4, &[0.0]);
        let b = PathEnsemble::constant(g, 4, &[0.5]);
        let levels: Vec<ProjectionLevel> =
            [1, 2, 4, 8].iter().map(|&n| ProjectionLevel::new(n).unwrap()).collect();
        let res = SchemeResult::from_alphas(levels, vec![a.clone(), b.clone(), a, b]).unwrap();
        let probe = strong_limit_probe(&res).unwrap();
        assert_eq!(probe.verdict, StrongLimitVerdict::Inconclusive);
        assert!(strong_limit_probe(&SchemeResult::from_alphas(vec![], vec![]).unwrap()).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SchemeConfig::new(&[], BoxRule::Growing { radius0: 1.0 }).is_err());
        assert!(SchemeConfig::new(&[8, 4], BoxRule::Growing { radius0: 1.0 }).is_err());
        assert!(SchemeConfig::new(&[4, 4], BoxRule::Growing { radius0: 1.0 }).is_err());
        let mut cfg = config(&[2]);
        cfg.damping = 0.0;
        assert!(cfg.validate().is_err());
        cfg.damping = 1.0;
        cfg.tol = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn growing_box_is_centred_on_initial_mean() {
        let g = grid(4);
        let x = PathEnsemble::constant(g, 3, &[2.0]);
        let bx = BoxRule::Growing { radius0: 0.5 }
            .box_for(ProjectionLevel::new(4).unwrap(), &x)
            .unwrap();
        assert!(bx.lo().iter().all(|&v| v == 0.0));
        assert!(bx.hi().iter().all(|&v| v == 4.0));
    }

    #[test]
    fn solver_reads_only_driver_prefixes() {
        let g = grid(16);
        let setup = AdaptednessSetup {
            grid: g,
            scenarios: 6,
            dim: 1,
            driver_dim: 1,
        };
        let h = Operator::sum(vec![
            Operator::constant(vec![1.0]),
            superposition(CoefficientFn::sin_driver_clipped(1.0)).then(lebesgue_integral()),
            superposition(CoefficientFn::tanh(1.0)).then(ito_integral()),
        ]);
        for n in [4, 16] {
            let cfg = config(&[n]);
            let hn = build_hn(&h, cfg.levels[0], &huge(g, 1)).unwrap();
            let op = LevelSolver::new(hn, cfg.clone()).into_operator();
            for k in 0..=16 {
                let r = adaptedness_check(&op, &setup, k, 2, 40 + k as u64).unwrap();
                assert!(r.all_passed(), "n={n}, split {k}");
            }
        }
    }
}
