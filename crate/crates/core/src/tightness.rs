//! Empirical diagnostics for tight sets and tight operators.
//!
//! Compacts of `C[a, b]` are described by a sup-norm bound together with a
//! finite list of modulus-of-continuity constraints `mod_δ ≤ η`, which is the
//! finite form of the Arzelà–Ascoli characterisation. A family of random
//! points is probed by the mass it puts outside the σ-neighbourhood of such a
//! compact.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{apply, Operator};
use crate::pathspace::{prob_metric, sample_driver, DriverEnsemble, Norm, PathEnsemble, TimeGrid};
use crate::projective::{clamp_box, CompactBox};
use crate::rng::{mix, stream_rng};
use crate::stats;

fn point_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn lag_for(grid: &TimeGrid, delta: f64) -> Result<usize> {
    let lag = grid.steps_within(delta);
    if lag == 0 || !delta.is_finite() {
        return Err(Error::BelowResolution {
            delta,
            dt: grid.dt(),
        });
    }
    Ok(lag.min(grid.steps()))
}

fn path_modulus(path: &[f64], dim: usize, lag: usize) -> f64 {
    let nodes = path.len() / dim;
    let mut worst = 0.0_f64;
    for k in 0..nodes {
        let a = &path[k * dim..(k + 1) * dim];
        for j in k + 1..=(k + lag).min(nodes - 1) {
            worst = worst.max(point_dist(a, &path[j * dim..(j + 1) * dim]));
        }
    }
    worst
}

fn sup_norm(path: &[f64]) -> f64 {
    path.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Per-scenario modulus of continuity `mod_δ`: the largest point distance
/// between nodes at most `δ` apart.
pub fn moduli(y: &PathEnsemble, delta: f64) -> Result<Vec<f64>> {
    let lag = lag_for(y.grid(), delta)?;
    Ok((0..y.scenarios())
        .into_par_iter()
        .map(|m| path_modulus(y.path(m), y.dim(), lag))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulusRow {
    pub delta: f64,
    pub median: f64,
    pub p95: f64,
}

/// Median and 95th percentile of `mod_δ` over scenarios, one row per gap.
pub fn modulus_report(y: &PathEnsemble, deltas: &[f64]) -> Result<Vec<ModulusRow>> {
    deltas
        .iter()
        .map(|&delta| {
            let mods = moduli(y, delta)?;
            Ok(ModulusRow {
                delta,
                median: stats::median(&mods),
                p95: stats::quantile(&mods, 0.95),
            })
        })
        .collect()
}

pub fn write_modulus_csv<W: Write>(rows: &[ModulusRow], mut w: W) -> Result<()> {
    writeln!(w, "delta,median,p95")?;
    for r in rows {
        writeln!(w, "{},{},{}", r.delta, r.median, r.p95)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentPair {
    /// `|t − s|`.
    pub gap: f64,
    /// Estimate of `E‖y(t) − y(s)‖²`.
    pub estimate: f64,
    pub std_error: f64,
}

/// Log-log fit of increment second moments, `E‖y(t) − y(s)‖² ≈ C |t − s|^γ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityFit {
    pub pairs: Vec<MomentPair>,
    /// `γ`; `None` when the fit is degenerate.
    pub fitted_exponent: Option<f64>,
    pub fitted_constant: Option<f64>,
    pub r2: Option<f64>,
    /// Set when fewer than two distinct gaps carry a positive estimate.
    pub degenerate: bool,
}

/// Sample `pair_count` node pairs with log-uniform gaps and fit the moment
/// growth exponent.
pub fn kolmogorov_estimate(y: &PathEnsemble, pair_count: usize, seed: u64) -> Result<RegularityFit> {
    if pair_count < 2 {
        return Err(Error::InvalidArgument(format!(
            "kolmogorov_estimate needs at least 2 pairs, got {pair_count}"
        )));
    }
    let grid = *y.grid();
    let steps = grid.steps();
    let dim = y.dim();
    let pairs: Vec<MomentPair> = (0..pair_count as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i, 0);
            let u: f64 = rng.gen();
            let lag = ((u * (steps as f64).ln()).exp().round() as usize).clamp(1, steps);
            let s = rng.gen_range(0..=steps - lag);
            let sq: Vec<f64> = y
                .paths()
                .map(|p| {
                    let d = point_dist(&p[s * dim..(s + 1) * dim], &p[(s + lag) * dim..(s + lag + 1) * dim]);
                    d * d
                })
                .collect();
            let (estimate, std_error) = stats::mean_se(&sq);
            MomentPair {
                gap: grid.node(s + lag) - grid.node(s),
                estimate,
                std_error,
            }
        })
        .collect();

    let pts: Vec<(f64, f64)> = pairs
        .iter()
        .filter(|p| p.estimate > 0.0 && p.gap > 0.0)
        .map(|p| (p.gap.ln(), p.estimate.ln()))
        .collect();
    if !pts.iter().any(|p| p.0 != pts[0].0) {
        return Ok(RegularityFit {
            pairs,
            fitted_exponent: None,
            fitted_constant: None,
            r2: None,
            degenerate: true,
        });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Ok(RegularityFit {
        pairs,
        fitted_exponent: Some(slope),
        fitted_constant: Some(intercept.exp()),
        r2: Some(r2),
        degenerate: false,
    })
}

pub fn write_regularity_csv<W: Write>(fit: &RegularityFit, mut w: W) -> Result<()> {
    writeln!(w, "gap,estimate,std_error")?;
    for p in &fit.pairs {
        writeln!(w, "{},{},{}", p.gap, p.estimate, p.std_error)?;
    }
    let show = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |x| x.to_string());
    writeln!(w, "# exponent,{}", show(fit.fitted_exponent))?;
    writeln!(w, "# constant,{}", show(fit.fitted_constant))?;
    writeln!(w, "# r2,{}", show(fit.r2))?;
    writeln!(w, "# degenerate,{}", fit.degenerate)?;
    Ok(())
}

/// A compact of `C[a, b]`: `sup ‖x‖ ≤ sup_bound` and `mod_δ ≤ η` for every
/// `(δ, η)` in `moduli`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompactSpec {
    pub sup_bound: f64,
    pub moduli: Vec<(f64, f64)>,
}

impl CompactSpec {
    /// Bounds set at the `quantile` of a reference ensemble's sup norms and
    /// moduli.
    pub fn calibrate(reference: &PathEnsemble, deltas: &[f64], quantile: f64) -> Result<Self> {
        let sups: Vec<f64> = reference.paths().map(sup_norm).collect();
        let moduli = deltas
            .iter()
            .map(|&d| Ok((d, stats::quantile(&moduli(reference, d)?, quantile))))
            .collect::<Result<Vec<_>>>()?;
        Ok(CompactSpec {
            sup_bound: stats::quantile(&sups, quantile),
            moduli,
        })
    }

    fn lags(&self, grid: &TimeGrid) -> Result<Vec<(usize, f64)>> {
        self.moduli
            .iter()
            .map(|&(d, eta)| Ok((lag_for(grid, d)?, eta)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TightnessReport {
    /// Worst fraction of scenarios outside the σ-neighbourhood.
    pub exceedance: f64,
    pub sigma: f64,
    pub compact_spec: CompactSpec,
    /// Fraction outside, per probed ensemble.
    pub per_ensemble: Vec<f64>,
}

/// Mass outside the σ-neighbourhood of the compact described by `spec`,
/// worst case over `ys`.
pub fn tight_set_probe(ys: &[PathEnsemble], spec: &CompactSpec, sigma: f64) -> Result<TightnessReport> {
    if ys.is_empty() {
        return Err(Error::InvalidArgument("tight_set_probe needs at least one ensemble".into()));
    }
    let per_ensemble = ys
        .iter()
        .map(|y| {
            let lags = spec.lags(y.grid())?;
            let outside = (0..y.scenarios())
                .into_par_iter()
                .filter(|&m| {
                    let p = y.path(m);
                    sup_norm(p) > spec.sup_bound + sigma
                        || lags
                            .iter()
                            .any(|&(lag, eta)| path_modulus(p, y.dim(), lag) > eta + sigma)
                })
                .count();
            Ok(outside as f64 / y.scenarios() as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(TightnessReport {
        exceedance: per_ensemble.iter().cloned().fold(0.0, f64::max),
        sigma,
        compact_spec: spec.clone(),
        per_ensemble,
    })
}

pub fn write_tightness_csv<W: Write>(report: &TightnessReport, mut w: W) -> Result<()> {
    writeln!(w, "ensemble,exceedance,sigma,sup_bound")?;
    for (i, e) in report.per_ensemble.iter().enumerate() {
        writeln!(w, "{},{},{},{}", i, e, report.sigma, report.compact_spec.sup_bound)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuityRow {
    pub rho: f64,
    /// Largest `d(h u, h v)` over the trials.
    pub max_distance: f64,
    pub mean_distance: f64,
}

/// Random inputs inside `bx`: a scaled Brownian path around the box centre,
/// clamped into the box.
pub fn box_inputs(bx: &CompactBox, scenarios: usize, seed: u64) -> Result<PathEnsemble> {
    let grid = *bx.grid();
    let dim = bx.dim();
    let w = sample_driver(grid, scenarios, dim, seed)?;
    let (lo, hi) = (bx.lo(), bx.hi());
    let raw = PathEnsemble::from_fn(grid, scenarios, dim, |m, k, _, out| {
        let wk = w.scenario(m).value(k);
        for i in 0..dim {
            let j = k * dim + i;
            let (l, h) = (lo[j], hi[j]);
            out[i] = if l.is_finite() && h.is_finite() {
                0.5 * (l + h) + 0.5 * (h - l) * wk[i]
            } else {
                wk[i]
            };
        }
    });
    clamp_box(&raw, bx)
}

/// For each `ρ`, pairs `u, v` inside `bx` with `‖u − v‖_sup ≤ ρ` in every
/// scenario, and the observed `d(h u, h v)` under the sup norm.
///
/// Each trial uses one input `u` and one perturbation direction `p` with
/// entries in `[−1, 1]`, shared by all `ρ`: `v = clamp(u + ρ p)`. Rows are
/// ordered by decreasing `ρ`.
pub fn uniform_continuity_probe(
    op: &Operator,
    bx: &CompactBox,
    rho_values: &[f64],
    trials: usize,
    driver: &DriverEnsemble,
    seed: u64,
) -> Result<Vec<ContinuityRow>> {
    if rho_values.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "rho values must be positive, got {rho_values:?}"
        )));
    }
    let mut rhos = rho_values.to_vec();
    rhos.sort_by(|a, b| b.total_cmp(a));
    let scenarios = driver.scenarios();
    let mut observed = vec![Vec::with_capacity(trials); rhos.len()];
    for t in 0..trials as u64 {
        let u = box_inputs(bx, scenarios, mix(seed, 2 * t))?;
        let pseed = mix(seed, 2 * t + 1);
        let len = u.path_len();
        let mut dir = vec![0.0; u.values().len()];
        dir.par_chunks_mut(len).enumerate().for_each(|(m, chunk)| {
            let mut rng = stream_rng(pseed, m as u64, 0);
            chunk.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..=1.0));
        });
        let hu = apply(op, &u, driver)?;
        for (i, &rho) in rhos.iter().enumerate() {
            let shifted = PathEnsemble::new(
                *u.grid(),
                scenarios,
                u.dim(),
                u.values().iter().zip(&dir).map(|(a, p)| a + rho * p).collect(),
            )?;
            let v = clamp_box(&shifted, bx)?;
            let hv = apply(op, &v, driver)?;
            observed[i].push(prob_metric(&hu, &hv, Norm::Sup)?.value);
        }
    }
    Ok(rhos
        .iter()
        .zip(observed)
        .map(|(&rho, d)| ContinuityRow {
            rho,
            max_distance: d.iter().cloned().fold(0.0, f64::max),
            mean_distance: stats::mean_se(&d).0,
        })
        .collect())
}

pub fn write_continuity_csv<W: Write>(rows: &[ContinuityRow], mut w: W) -> Result<()> {
    writeln!(w, "rho,max_distance,mean_distance")?;
    for r in rows {
        writeln!(w, "{},{},{}", r.rho, r.max_distance, r.mean_distance)?;
    }
    Ok(())
}
