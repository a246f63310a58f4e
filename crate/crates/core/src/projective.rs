//! Finite-dimensional Volterra approximations of paths.
//!
//! A [`ProjectionLevel`] `n` places `n + 1` equally spaced anchors on the
//! grid. [`volterra_interp`] replaces a path by its piecewise-linear
//! interpolant through the anchors; [`mollify`] additionally smooths that
//! interpolant with a causal triangular kernel of width `(b - a) / n`;
//! [`clamp_box`] projects onto an axis-aligned box node by node.
//!
//! The interpolant on `[anchor_k, anchor_{k+1}]` reads the input only at the
//! two anchors, so outputs restricted to `[a, anchor_k]` depend only on
//! inputs restricted to `[a, anchor_k]`.
//!
//! [`causal_interp`] is the lagged variant used inside the fixed-point scheme:
//! on `[anchor_k, anchor_{k+1}]` it runs linearly from `x(anchor_{k-1})` to
//! `x(anchor_k)`, so the output at any node reads the input at earlier nodes
//! only (node 0 excepted, where it copies `x(a)`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pathspace::{prob_metric, Norm, PathEnsemble, TimeGrid};

/// Number of interpolation intervals `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProjectionLevel(usize);

impl ProjectionLevel {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("projection level must be at least 1".into()));
        }
        Ok(ProjectionLevel(n))
    }

    pub fn n(&self) -> usize {
        self.0
    }

    /// Grid steps between consecutive anchors; fails unless `n` divides `N`.
    pub fn block_len(&self, grid: &TimeGrid) -> Result<usize> {
        if self.0 == 0 || !grid.steps().is_multiple_of(self.0) {
            return Err(Error::Divisibility {
                n: self.0,
                steps: grid.steps(),
            });
        }
        Ok(grid.steps() / self.0)
    }

    pub fn anchor_indices(&self, grid: &TimeGrid) -> Result<Vec<usize>> {
        let len = self.block_len(grid)?;
        Ok((0..=self.0).map(|i| i * len).collect())
    }

    pub fn anchor_nodes(&self, grid: &TimeGrid) -> Result<Vec<f64>> {
        Ok(self
            .anchor_indices(grid)?
            .into_iter()
            .map(|k| grid.node(k))
            .collect())
    }
}

/// Axis-aligned box `lo[k][i] <= x[k][i] <= hi[k][i]` over the whole grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CompactBox {
    grid: TimeGrid,
    dim: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl CompactBox {
    pub fn new(grid: TimeGrid, dim: usize, lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let len = grid.len() * dim;
        if dim == 0 || lo.len() != len || hi.len() != len {
            return Err(Error::shape(format!(
                "box bounds need {len} entries per side"
            )));
        }
        for (l, h) in lo.iter().zip(&hi) {
            if !(l.is_finite() && h.is_finite()) || l > h {
                return Err(Error::InvalidArgument(format!(
                    "box bounds must be finite with lo <= hi, got [{l}, {h}]"
                )));
            }
        }
        Ok(CompactBox { grid, dim, lo, hi })
    }

    /// Same bounds at every node and coordinate.
    pub fn uniform(grid: TimeGrid, dim: usize, lo: f64, hi: f64) -> Result<Self> {
        let len = grid.len() * dim;
        Self::new(grid, dim, vec![lo; len], vec![hi; len])
    }

    /// `[center - radius, center + radius]` at every node.
    pub fn around(grid: TimeGrid, center: &[f64], radius: f64) -> Result<Self> {
        let lo = center
            .iter()
            .map(|c| c - radius)
            .cycle()
            .take(grid.len() * center.len())
            .collect();
        let hi = center
            .iter()
            .map(|c| c + radius)
            .cycle()
            .take(grid.len() * center.len())
            .collect();
        Self::new(grid, center.len(), lo, hi)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn contains_path(&self, path: &[f64]) -> bool {
        path.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (l, h))| l <= v && v <= h)
    }

    pub fn contains(&self, x: &PathEnsemble) -> bool {
        x.paths().all(|p| self.contains_path(p))
    }

    pub(crate) fn check_shape(&self, grid: &TimeGrid, dim: usize) -> Result<()> {
        if &self.grid != grid || self.dim != dim {
            return Err(Error::shape(format!(
                "box is (N={}, d={}), paths are (N={}, d={dim})",
                self.grid.steps(),
                self.dim,
                grid.steps()
            )));
        }
        Ok(())
    }
}

/// Interpolant at node `k` of the flat path `x`; reads only the anchors bracketing `k`.
pub(crate) fn interp_node(x: &[f64], dim: usize, block: usize, k: usize, out: &mut [f64]) {
    let left = (k / block) * block;
    if left == k {
        out.copy_from_slice(&x[k * dim..(k + 1) * dim]);
        return;
    }
    let right = left + block;
    let theta = (k - left) as f64 / block as f64;
    for i in 0..dim {
        let xl = x[left * dim + i];
        let xr = x[right * dim + i];
        out[i] = xl + theta * (xr - xl);
    }
}

/// Lagged interpolant at node `k`: reads anchors strictly before `k`, or node 0
/// when `k = 0`.
pub(crate) fn lag_interp_node(x: &[f64], dim: usize, block: usize, k: usize, out: &mut [f64]) {
    let at = |j: usize| &x[j * dim..(j + 1) * dim];
    if k < block {
        out.copy_from_slice(at(0));
        return;
    }
    let left = (k / block) * block;
    let prev = left - block;
    if left == k {
        out.copy_from_slice(at(prev));
        return;
    }
    let theta = (k - left) as f64 / block as f64;
    for i in 0..dim {
        let xl = x[prev * dim + i];
        let xr = x[left * dim + i];
        out[i] = xl + theta * (xr - xl);
    }
}

/// Discrete mass of the triangular bump on `[0, block * dt]`, sampled at the
/// cell midpoints of lags `1..=block` and normalised to sum to one.
pub(crate) fn mollifier_weights(block: usize) -> Vec<f64> {
    let raw: Vec<f64> = (1..=block)
        .map(|j| {
            let s = (j as f64 - 0.5) / block as f64;
            1.0 - (2.0 * s - 1.0).abs()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// `Σ_{j=1}^{min(k, L)} w_j p[k - j]`: only strictly earlier nodes contribute.
pub(crate) fn mollify_node(p: &[f64], dim: usize, weights: &[f64], k: usize, out: &mut [f64]) {
    out.fill(0.0);
    for (j, w) in weights.iter().enumerate().take(k) {
        let src = (k - j - 1) * dim;
        for i in 0..dim {
            out[i] += w * p[src + i];
        }
    }
}

pub(crate) fn clamp_node(x: &[f64], lo: &[f64], hi: &[f64], out: &mut [f64]) {
    for i in 0..x.len() {
        out[i] = x[i].clamp(lo[i], hi[i]);
    }
}

/// Piecewise-linear interpolation through the level's anchors, per scenario.
pub fn volterra_interp(x: &PathEnsemble, level: ProjectionLevel) -> Result<PathEnsemble> {
    let block = level.block_len(x.grid())?;
    let dim = x.dim();
    let mut out = x.clone();
    for m in 0..x.scenarios() {
        let src = x.path(m);
        let dst = out.path_mut(m);
        for k in 0..x.grid().len() {
            interp_node(src, dim, block, k, &mut dst[k * dim..(k + 1) * dim]);
        }
    }
    Ok(out)
}

/// Lagged piecewise-linear interpolation: on `[anchor_k, anchor_{k+1}]` the
/// output runs from `x(anchor_{k-1})` to `x(anchor_k)`, with
/// `x(anchor_{-1}) = x(a)`.
///
/// Constants are preserved and `‖π̃_n x − x‖_sup → 0` for continuous `x`,
/// but anchors are not reproduced, so the map is not idempotent.
pub fn causal_interp(x: &PathEnsemble, level: ProjectionLevel) -> Result<PathEnsemble> {
    let block = level.block_len(x.grid())?;
    let dim = x.dim();
    let mut out = x.clone();
    for m in 0..x.scenarios() {
        let src = x.path(m);
        let dst = out.path_mut(m);
        for k in 0..x.grid().len() {
            lag_interp_node(src, dim, block, k, &mut dst[k * dim..(k + 1) * dim]);
        }
    }
    Ok(out)
}

/// Causal kernel smoothing of the level-`n` interpolant.
pub fn mollify(x: &PathEnsemble, level: ProjectionLevel) -> Result<PathEnsemble> {
    let p = volterra_interp(x, level)?;
    let block = level.block_len(x.grid())?;
    let weights = mollifier_weights(block);
    let dim = x.dim();
    let mut out = p.clone();
    for m in 0..x.scenarios() {
        let src = p.path(m);
        let dst = out.path_mut(m);
        for k in 0..x.grid().len() {
            mollify_node(src, dim, &weights, k, &mut dst[k * dim..(k + 1) * dim]);
        }
    }
    Ok(out)
}

/// Coordinatewise clamp onto `bx`; idempotent and the identity inside the box.
pub fn clamp_box(x: &PathEnsemble, bx: &CompactBox) -> Result<PathEnsemble> {
    bx.check_shape(x.grid(), x.dim())?;
    let len = x.path_len();
    let mut out = x.clone();
    for m in 0..x.scenarios() {
        let src = x.path(m);
        let dst = out.path_mut(m);
        clamp_node(src, &bx.lo, &bx.hi, &mut dst[..len]);
    }
    Ok(out)
}

/// One row of the empirical strong-convergence table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiProbeRow {
    pub n: usize,
    pub distance: f64,
    pub std_error: f64,
}

/// `d_sup(π_n x, x)` for each level.
pub fn property_pi_probe(x: &PathEnsemble, levels: &[ProjectionLevel]) -> Result<Vec<PiProbeRow>> {
    levels
        .iter()
        .map(|&level| {
            let est = prob_metric(&volterra_interp(x, level)?, x, Norm::Sup)?;
            Ok(PiProbeRow {
                n: level.n(),
                distance: est.value,
                std_error: est.std_error,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathspace::sample_driver;
    use crate::stats;

    fn lvl(n: usize) -> ProjectionLevel {
        ProjectionLevel::new(n).unwrap()
    }

    #[test]
    fn anchors() {
        let g = TimeGrid::new(0.0, 2.0, 8).unwrap();
        assert_eq!(lvl(4).anchor_nodes(&g).unwrap(), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        assert!(matches!(lvl(3).block_len(&g), Err(Error::Divisibility { n: 3, steps: 8 })));
        assert!(ProjectionLevel::new(0).is_err());
    }

    #[test]
    fn lagged_interpolation() {
        let g = TimeGrid::new(0.0, 1.0, 4).unwrap();
        let lin = PathEnsemble::from_fn(g, 1, 1, |_, _, t, o| o[0] = t);
        let p = causal_interp(&lin, lvl(2)).unwrap();
        assert_eq!(p.path(0), &[0.0, 0.0, 0.0, 0.25, 0.5]);
        let c = PathEnsemble::constant(g, 2, &[1.7, -2.0]);
        assert_eq!(causal_interp(&c, lvl(4)).unwrap(), c);
        assert!(causal_interp(&c, lvl(3)).is_err());
    }

    #[test]
    fn lagged_interpolation_reads_only_the_past() {
        let g = TimeGrid::new(0.0, 1.0, 24).unwrap();
        let x = sample_driver(g, 3, 1, 5).unwrap().to_paths();
        for n in [1, 2, 3, 4, 6, 8, 12, 24] {
            for k in 1..=24 {
                let mut y = x.clone();
                for m in 0..3 {
                    y.path_mut(m)[k..].iter_mut().for_each(|v| *v += 1.0);
                }
                let (px, py) = (causal_interp(&x, lvl(n)).unwrap(), causal_interp(&y, lvl(n)).unwrap());
                for m in 0..3 {
                    assert_eq!(px.path(m)[..=k], py.path(m)[..=k], "n={n}, k={k}");
                }
            }
        }
    }

    #[test]
    fn lagged_interpolation_converges_on_brownian_paths() {
        let g = TimeGrid::new(0.0, 1.0, 64).unwrap();
        let w = sample_driver(g, 2000, 1, 3).unwrap().to_paths();
        let d: Vec<f64> = [2, 4, 8, 16, 32]
            .iter()
            .map(|&n| prob_metric(&causal_interp(&w, lvl(n)).unwrap(), &w, Norm::Sup).unwrap().value)
            .collect();
        assert!(stats::strictly_decreasing_up_to_one_inversion(&d), "{d:?}");
    }

    #[test]
    fn interpolation_examples() {
        let g = TimeGrid::new(0.0, 1.0, 4).unwrap();
        let sq = PathEnsemble::from_fn(g, 1, 1, |_, _, t, o| o[0] = t * t);
        let p = volterra_interp(&sq, lvl(2)).unwrap();
        assert_eq!(p.value(0, 1)[0], 0.125);
        assert_eq!(p.value(0, 2)[0], 0.25);
        assert_eq!(p.value(0, 3)[0], 0.25 + 0.5 * 0.75);

        let lin = PathEnsemble::from_fn(g, 1, 1, |_, _, t, o| o[0] = t);
        let pl = volterra_interp(&lin, lvl(2)).unwrap();
        for (a, b) in pl.values().iter().zip(lin.values()) {
            assert!((a - b).abs() < 1e-15);
        }

        let c = PathEnsemble::constant(g, 3, &[1.7, -2.0]);
        assert_eq!(volterra_interp(&c, lvl(2)).unwrap(), c);
    }

    #[test]
    fn interpolation_divisibility_error() {
        let g = TimeGrid::new(0.0, 1.0, 4).unwrap();
        let x = PathEnsemble::zeros(g, 1, 1);
        assert!(matches!(volterra_interp(&x, lvl(3)), Err(Error::Divisibility { .. })));
        assert!(matches!(mollify(&x, lvl(3)), Err(Error::Divisibility { .. })));
    }

    #[test]
    fn mollifier_weights_have_unit_mass() {
        for block in 1..12 {
            let w = mollifier_weights(block);
            assert_eq!(w.len(), block);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            assert!(w.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn mollify_constants_and_zero() {
        let g = TimeGrid::new(0.0, 1.0, 16).unwrap();
        let c = PathEnsemble::constant(g, 2, &[3.0]);
        let level = lvl(4);
        let out = mollify(&c, level).unwrap();
        let block = level.block_len(&g).unwrap();
        for m in 0..2 {
            for k in block..=16 {
                assert!((out.value(m, k)[0] - 3.0).abs() < 1e-14);
            }
        }
        let z = PathEnsemble::zeros(g, 2, 1);
        assert_eq!(mollify(&z, level).unwrap(), z);
    }

    #[test]
    fn mollify_converges_on_brownian_paths() {
        // d_L2(mollify(x), x) should shrink as n grows; one inversion over
        // the ladder is tolerated per seed, and at most one seed may break
        // that.
        let g = TimeGrid::new(0.0, 1.0, 64).unwrap();
        let mut bad = 0;
        for seed in 0..20 {
            let x = sample_driver(g, 200, 1, seed).unwrap().to_paths();
            let dists: Vec<f64> = [2, 4, 8, 16]
                .iter()
                .map(|&n| {
                    prob_metric(&mollify(&x, lvl(n)).unwrap(), &x, Norm::L2)
                        .unwrap()
                        .value
                })
                .collect();
            if stats::inversions(&dists, true) > 0 {
                bad += 1;
            }
        }
        assert!(bad <= 1, "{bad} seeds out of order");
    }

    #[test]
    fn clamp_examples() {
        let g = TimeGrid::new(0.0, 1.0, 2).unwrap();
        let x = PathEnsemble::new(g, 1, 1, vec![-2.0, 0.5, 3.0]).unwrap();
        let bx = CompactBox::uniform(g, 1, -1.0, 1.0).unwrap();
        let y = clamp_box(&x, &bx).unwrap();
        assert_eq!(y.values(), &[-1.0, 0.5, 1.0]);
        assert_eq!(clamp_box(&y, &bx).unwrap(), y);
        let inside = PathEnsemble::new(g, 1, 1, vec![0.1, -0.9, 1.0]).unwrap();
        assert_eq!(clamp_box(&inside, &bx).unwrap(), inside);
    }

    #[test]
    fn clamp_shape_mismatch() {
        let g = TimeGrid::new(0.0, 1.0, 2).unwrap();
        let bx = CompactBox::uniform(g, 2, -1.0, 1.0).unwrap();
        let x = PathEnsemble::zeros(g, 1, 1);
        assert!(matches!(clamp_box(&x, &bx), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn box_validation() {
        let g = TimeGrid::new(0.0, 1.0, 1).unwrap();
        assert!(CompactBox::new(g, 1, vec![1.0, 0.0], vec![0.0, 0.0]).is_err());
        assert!(CompactBox::new(g, 1, vec![0.0], vec![1.0]).is_err());
        assert!(CompactBox::uniform(g, 1, f64::NEG_INFINITY, 0.0).is_err());
    }

    #[test]
    fn pi_probe_examples() {
        let g = TimeGrid::new(0.0, 1.0, 64).unwrap();
        let levels: Vec<_> = [2, 4, 8, 16].iter().map(|&n| lvl(n)).collect();
        let c = PathEnsemble::constant(g, 4, &[2.0]);
        assert!(property_pi_probe(&c, &levels).unwrap().iter().all(|r| r.distance == 0.0));
        let lin = PathEnsemble::from_fn(g, 4, 1, |m, _, t, o| o[0] = m as f64 * t - 0.5);
        assert!(property_pi_probe(&lin, &levels)
            .unwrap()
            .iter()
            .all(|r| r.distance < 1e-14));

        let w = sample_driver(g, 2000, 1, 5).unwrap().to_paths();
        let rows = property_pi_probe(&w, &levels).unwrap();
        let col: Vec<f64> = rows.iter().map(|r| r.distance).collect();
        assert!(stats::decreasing_up_to_one_inversion(&col), "{col:?}");
    }
}
