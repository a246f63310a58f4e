//! Discretised spaces of random paths.
//!
//! The probability space is represented by `M` i.i.d. scenarios. Each
//! scenario carries a Brownian driver sampled on a uniform [`TimeGrid`]; the
//! information available at node `k` is the driver prefix (increments
//! `0..k`). A [`PathEnsemble`] is a random point with one path per scenario.
//! Adaptedness of an ensemble is a contract on whoever produced it and is
//! verified empirically by [`crate::operators::adaptedness_check`].

mod io;

pub use io::{read_binary, write_binary, write_csv, BINARY_MAGIC, BINARY_VERSION};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::stats;

/// Uniform grid `a = t_0 < t_1 < ... < t_N = b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    a: f64,
    b: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(a: f64, b: f64, steps: usize) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) || b <= a {
            return Err(Error::InvalidRange { a, b });
        }
        if steps == 0 {
            return Err(Error::ZeroSteps);
        }
        Ok(TimeGrid { a, b, steps })
    }

    pub fn start(&self) -> f64 {
        self.a
    }

    pub fn end(&self) -> f64 {
        self.b
    }

    /// Number of steps `N`; there are `N + 1` nodes.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        (self.b - self.a) / self.steps as f64
    }

    /// Time of node `k`. The last node is `b` exactly.
    pub fn node(&self, k: usize) -> f64 {
        if k >= self.steps {
            self.b
        } else {
            self.a + k as f64 * self.dt()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.node(k)).collect()
    }

    /// Number of whole steps covered by a gap `delta` (tolerant to rounding).
    pub fn steps_within(&self, delta: f64) -> usize {
        ((delta / self.dt()) * (1.0 + 1e-12)).floor() as usize
    }
}

/// Convenience constructor mirroring [`TimeGrid::new`].
pub fn make_grid(a: f64, b: f64, steps: usize) -> Result<TimeGrid> {
    TimeGrid::new(a, b, steps)
}

/// `M` scenario paths of dimension `d` on a common grid, row-major
/// `[scenario][node][coordinate]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    grid: TimeGrid,
    scenarios: usize,
    dim: usize,
    values: Vec<f64>,
}

impl PathEnsemble {
    /// Build from raw row-major values; rejects non-finite entries.
    pub fn new(grid: TimeGrid, scenarios: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if scenarios == 0 || dim == 0 {
            return Err(Error::InvalidArgument(
                "ensembles need at least one scenario and one coordinate".into(),
            ));
        }
        let expected = scenarios * grid.len() * dim;
        if values.len() != expected {
            return Err(Error::shape(format!(
                "expected {expected} values for M={scenarios}, N={}, d={dim}, got {}",
                grid.steps(),
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite entry at flat index {pos}"
            )));
        }
        Ok(PathEnsemble {
            grid,
            scenarios,
            dim,
            values,
        })
    }

    pub(crate) fn from_raw(grid: TimeGrid, scenarios: usize, dim: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), scenarios * grid.len() * dim);
        PathEnsemble {
            grid,
            scenarios,
            dim,
            values,
        }
    }

    pub fn zeros(grid: TimeGrid, scenarios: usize, dim: usize) -> Self {
        Self::from_raw(grid, scenarios, dim, vec![0.0; scenarios * grid.len() * dim])
    }

    /// Every scenario and node holds `value`.
    pub fn constant(grid: TimeGrid, scenarios: usize, value: &[f64]) -> Self {
        let values = value
            .iter()
            .copied()
            .cycle()
            .take(scenarios * grid.len() * value.len())
            .collect();
        Self::from_raw(grid, scenarios, value.len(), values)
    }

    /// Fill entry by entry: `f(scenario, node, time, out)`.
    pub fn from_fn<F>(grid: TimeGrid, scenarios: usize, dim: usize, f: F) -> Self
    where
        F: Fn(usize, usize, f64, &mut [f64]),
    {
        let mut values = vec![0.0; scenarios * grid.len() * dim];
        for (m, path) in values.chunks_mut(grid.len() * dim).enumerate() {
            for (k, out) in path.chunks_mut(dim).enumerate() {
                f(m, k, grid.node(k), out);
            }
        }
        Self::from_raw(grid, scenarios, dim, values)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn scenarios(&self) -> usize {
        self.scenarios
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn path_len(&self) -> usize {
        self.grid.len() * self.dim
    }

    /// Scenario `m` as a flat `[node][coordinate]` slice.
    pub fn path(&self, m: usize) -> &[f64] {
        let len = self.path_len();
        &self.values[m * len..(m + 1) * len]
    }

    pub fn path_mut(&mut self, m: usize) -> &mut [f64] {
        let len = self.path_len();
        &mut self.values[m * len..(m + 1) * len]
    }

    pub fn value(&self, m: usize, k: usize) -> &[f64] {
        let start = (m * self.grid.len() + k) * self.dim;
        &self.values[start..start + self.dim]
    }

    pub fn paths(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.path_len())
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Entrywise map.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_raw(
            self.grid,
            self.scenarios,
            self.dim,
            self.values.iter().map(|&v| f(v)).collect(),
        )
    }

    /// Entrywise combination of two equally shaped ensembles.
    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(Self::from_raw(
            self.grid,
            self.scenarios,
            self.dim,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    /// Scenarios reordered (or subsampled) by `order`.
    pub fn select(&self, order: &[usize]) -> Self {
        let mut values = Vec::with_capacity(order.len() * self.path_len());
        for &m in order {
            values.extend_from_slice(self.path(m));
        }
        Self::from_raw(self.grid, order.len(), self.dim, values)
    }

    /// Scenario-wise splice: scenario `m` comes from `self` where `mask[m]`, else from `other`.
    pub fn splice(&self, other: &Self, mask: &[bool]) -> Result<Self> {
        self.check_same_shape(other)?;
        if mask.len() != self.scenarios {
            return Err(Error::shape("splice mask length differs from scenario count"));
        }
        let mut out = other.clone();
        for (m, &take) in mask.iter().enumerate() {
            if take {
                out.path_mut(m).copy_from_slice(self.path(m));
            }
        }
        Ok(out)
    }

    pub fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid || self.scenarios != other.scenarios || self.dim != other.dim {
            return Err(Error::shape(format!(
                "(M={}, N={}, d={}) vs (M={}, N={}, d={})",
                self.scenarios,
                self.grid.steps(),
                self.dim,
                other.scenarios,
                other.grid.steps(),
                other.dim
            )));
        }
        Ok(())
    }
}

/// Brownian driver scenarios. Increments are `N(0, dt)` per coordinate and a
/// pure function of `(seed, scenario, step)`; paths are their running sums
/// accumulated left to right, so `paths[k + 1] = paths[k] + increments[k]`
/// holds exactly in floating point.
#[derive(Debug, Clone, PartialEq)]
pub struct DriverEnsemble {
    grid: TimeGrid,
    scenarios: usize,
    dim: usize,
    seed: u64,
    increments: Vec<f64>,
    paths: Vec<f64>,
}

/// One scenario's view of the driver.
#[derive(Debug, Clone, Copy)]
pub struct DriverPath<'a> {
    pub dim: usize,
    pub increments: &'a [f64],
    pub paths: &'a [f64],
}

impl<'a> DriverPath<'a> {
    /// `W(t_k)`.
    pub fn value(&self, k: usize) -> &'a [f64] {
        &self.paths[k * self.dim..(k + 1) * self.dim]
    }

    /// `W(t_{k+1}) - W(t_k)`.
    pub fn increment(&self, k: usize) -> &'a [f64] {
        &self.increments[k * self.dim..(k + 1) * self.dim]
    }

    /// The information available at node `k`: path values `0..=k` and increments `0..k`.
    pub fn prefix(&self, k: usize) -> DriverPath<'a> {
        DriverPath {
            dim: self.dim,
            increments: &self.increments[..k * self.dim],
            paths: &self.paths[..(k + 1) * self.dim],
        }
    }

    /// Latest node visible in this view.
    pub fn last_node(&self) -> usize {
        self.paths.len() / self.dim - 1
    }

    /// Driver value at the latest visible node.
    pub fn current(&self) -> &'a [f64] {
        self.value(self.last_node())
    }
}

fn cumulate(grid: &TimeGrid, dim: usize, increments: &[f64], paths: &mut [f64]) {
    paths[..dim].fill(0.0);
    for k in 0..grid.steps() {
        for i in 0..dim {
            paths[(k + 1) * dim + i] = paths[k * dim + i] + increments[k * dim + i];
        }
    }
}

impl DriverEnsemble {
    fn check_dims(scenarios: usize, dim: usize) -> Result<()> {
        if scenarios == 0 || dim == 0 {
            return Err(Error::InvalidArgument(
                "driver needs at least one scenario and one coordinate".into(),
            ));
        }
        if dim > rng::MAX_DRAWS_PER_STEP {
            return Err(Error::InvalidArgument(format!(
                "driver dimension {dim} exceeds {}",
                rng::MAX_DRAWS_PER_STEP
            )));
        }
        Ok(())
    }

    /// Driver from explicit increments `[M][N][d_w]`.
    pub fn from_increments(
        grid: TimeGrid,
        scenarios: usize,
        dim: usize,
        increments: Vec<f64>,
    ) -> Result<Self> {
        Self::check_dims(scenarios, dim)?;
        if increments.len() != scenarios * grid.steps() * dim {
            return Err(Error::shape("increment array does not match (M, N, d_w)"));
        }
        let mut paths = vec![0.0; scenarios * grid.len() * dim];
        for (inc, path) in increments
            .chunks(grid.steps() * dim)
            .zip(paths.chunks_mut(grid.len() * dim))
        {
            cumulate(&grid, dim, inc, path);
        }
        Ok(DriverEnsemble {
            grid,
            scenarios,
            dim,
            seed: 0,
            increments,
            paths,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn scenarios(&self) -> usize {
        self.scenarios
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn paths(&self) -> &[f64] {
        &self.paths
    }

    pub fn scenario(&self, m: usize) -> DriverPath<'_> {
        let ni = self.grid.steps() * self.dim;
        let np = self.grid.len() * self.dim;
        DriverPath {
            dim: self.dim,
            increments: &self.increments[m * ni..(m + 1) * ni],
            paths: &self.paths[m * np..(m + 1) * np],
        }
    }

    /// Copy that keeps increments `0..k_split` and redraws the rest from `tail_seed`.
    ///
    /// Both drivers then carry the same information up to node `k_split`.
    pub fn resample_tail(&self, k_split: usize, tail_seed: u64) -> Self {
        let n = self.grid.steps();
        let dim = self.dim;
        let mut increments = self.increments.clone();
        let mut paths = self.paths.clone();
        let dt_sqrt = self.grid.dt().sqrt();
        increments
            .par_chunks_mut(n * dim)
            .zip(paths.par_chunks_mut((n + 1) * dim))
            .enumerate()
            .for_each(|(m, (inc, path))| {
                for j in k_split.min(n)..n {
                    let slot = &mut inc[j * dim..(j + 1) * dim];
                    rng::fill_normals(tail_seed, m as u64, j as u64, slot);
                    slot.iter_mut().for_each(|z| *z *= dt_sqrt);
                }
                cumulate(&self.grid, dim, inc, path);
            });
        DriverEnsemble {
            increments,
            paths,
            ..self.clone()
        }
    }

    /// Scenarios reordered by `order`.
    pub fn select(&self, order: &[usize]) -> Self {
        let mut increments = Vec::with_capacity(order.len() * self.grid.steps() * self.dim);
        let mut paths = Vec::with_capacity(order.len() * self.grid.len() * self.dim);
        for &m in order {
            let s = self.scenario(m);
            increments.extend_from_slice(s.increments);
            paths.extend_from_slice(s.paths);
        }
        DriverEnsemble {
            grid: self.grid,
            scenarios: order.len(),
            dim: self.dim,
            seed: self.seed,
            increments,
            paths,
        }
    }

    /// The driver paths as a path ensemble of dimension `d_w`.
    pub fn to_paths(&self) -> PathEnsemble {
        PathEnsemble::from_raw(self.grid, self.scenarios, self.dim, self.paths.clone())
    }
}

/// Sample `M` scenarios of a `d_w`-dimensional Brownian driver.
pub fn sample_driver(grid: TimeGrid, scenarios: usize, dim: usize, seed: u64) -> Result<DriverEnsemble> {
    DriverEnsemble::check_dims(scenarios, dim)?;
    let n = grid.steps();
    let dt_sqrt = grid.dt().sqrt();
    let mut increments = vec![0.0; scenarios * n * dim];
    let mut paths = vec![0.0; scenarios * (n + 1) * dim];
    increments
        .par_chunks_mut(n * dim)
        .zip(paths.par_chunks_mut((n + 1) * dim))
        .enumerate()
        .for_each(|(m, (inc, path))| {
            for (j, slot) in inc.chunks_mut(dim).enumerate() {
                rng::fill_normals(seed, m as u64, j as u64, slot);
                slot.iter_mut().for_each(|z| *z *= dt_sqrt);
            }
            cumulate(&grid, dim, inc, path);
        });
    Ok(DriverEnsemble {
        grid,
        scenarios,
        dim,
        seed,
        increments,
        paths,
    })
}

/// Path norm used inside the probability metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    /// Maximum over nodes and coordinates of the absolute value.
    Sup,
    /// Left-Riemann `∫ |v(t)| dt` with the Euclidean point norm.
    L1,
    /// Left-Riemann `(∫ |v(t)|² dt)^{1/2}` with the Euclidean point norm.
    L2,
}

/// Distance between two flat `[node][coordinate]` paths on `grid`.
pub fn path_distance(norm: Norm, grid: &TimeGrid, dim: usize, x: &[f64], y: &[f64]) -> f64 {
    match norm {
        Norm::Sup => x
            .iter()
            .zip(y)
            .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs())),
        Norm::L1 | Norm::L2 => {
            let mut acc = 0.0;
            for k in 0..grid.steps() {
                let sq: f64 = (0..dim)
                    .map(|i| (x[k * dim + i] - y[k * dim + i]).powi(2))
                    .sum();
                acc += if norm == Norm::L1 { sq.sqrt() } else { sq };
            }
            acc *= grid.dt();
            if norm == Norm::L1 {
                acc
            } else {
                acc.sqrt()
            }
        }
    }
}

/// Monte-Carlo estimate of `E min{‖x − y‖, 1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// The metric of convergence in probability between two random points.
pub fn prob_metric(x: &PathEnsemble, y: &PathEnsemble, norm: Norm) -> Result<MetricEstimate> {
    x.check_same_shape(y)?;
    let capped: Vec<f64> = (0..x.scenarios())
        .into_par_iter()
        .map(|m| path_distance(norm, x.grid(), x.dim(), x.path(m), y.path(m)).min(1.0))
        .collect();
    let (value, std_error) = stats::mean_se(&capped);
    Ok(MetricEstimate {
        value,
        std_error,
        samples: capped.len(),
    })
}
