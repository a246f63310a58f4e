//! Test-functional diagnostics for narrow convergence of `α_n`.
//!
//! Narrow convergence of the random Dirac measures `δ_{α_n}` means
//! `E g(α_n)` converges for every bounded Carathéodory `g`. A finite, seeded
//! battery of such functionals stands in for "every".

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixpoint::SchemeResult;
use crate::pathspace::{DriverEnsemble, DriverPath, PathEnsemble, TimeGrid};
use crate::rng::stream_rng;
use crate::stats;

/// What a functional sees of one scenario.
#[derive(Debug, Clone, Copy)]
pub struct FunctionalArgs<'a> {
    pub grid: &'a TimeGrid,
    pub dim: usize,
    pub path: &'a [f64],
    pub driver: Option<DriverPath<'a>>,
}

type Rule = dyn Fn(&FunctionalArgs<'_>) -> f64 + Send + Sync;

/// A bounded functional of `(path, driver)`; values are clipped to `[−1, 1]`.
#[derive(Clone)]
pub struct TestFunctional {
    name: String,
    rule: Arc<Rule>,
}

impl fmt::Debug for TestFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunctional").field("name", &self.name).finish()
    }
}

impl TestFunctional {
    pub fn new<F>(name: impl Into<String>, rule: F) -> Self
    where
        F: Fn(&FunctionalArgs<'_>) -> f64 + Send + Sync + 'static,
    {
        TestFunctional {
            name: name.into(),
            rule: Arc::new(rule),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// The clipped value; NaN maps to 0.
    pub fn eval(&self, args: &FunctionalArgs<'_>) -> f64 {
        let v = (self.rule)(args);
        if v.is_nan() {
            0.0
        } else {
            v.clamp(-1.0, 1.0)
        }
    }

    /// Values over all scenarios of `x`.
    pub fn values(&self, x: &PathEnsemble, driver: Option<&DriverEnsemble>) -> Vec<f64> {
        (0..x.scenarios())
            .into_par_iter()
            .map(|m| {
                self.eval(&FunctionalArgs {
                    grid: x.grid(),
                    dim: x.dim(),
                    path: x.path(m),
                    driver: driver.map(|w| w.scenario(m)),
                })
            })
            .collect()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn node<'a>(a: &FunctionalArgs<'a>, k: usize) -> &'a [f64] {
    &a.path[k * a.dim..(k + 1) * a.dim]
}

fn driver_dot(a: &FunctionalArgs<'_>, k: usize) -> f64 {
    match a.driver {
        Some(w) => node(a, k).iter().zip(w.value(k)).map(|(x, y)| x * y).sum(),
        None => 0.0,
    }
}

fn random_linear(grid: &TimeGrid, d: usize, seed: u64, stream: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, stream, 0);
    let len = grid.len() * d;
    let scale = 1.0 / (len as f64).sqrt();
    (0..len).map(|_| rng.sample::<f64, _>(StandardNormal) * scale).collect()
}

/// The seeded battery: endpoint, sup norm, time average, `sin` of a random
/// linear functional and `sin(x(t*)·W(t*))`, followed by `count − 5` further
/// random functionals when `count > 5`.
pub fn test_battery(grid: &TimeGrid, d: usize, count: usize, seed: u64) -> Result<Vec<TestFunctional>> {
    if count == 0 {
        return Err(Error::InvalidArgument("a battery needs at least one functional".into()));
    }
    if d == 0 {
        return Err(Error::dim("battery for a zero-dimensional state"));
    }
    let g = *grid;
    let mut out = vec![
        TestFunctional::new("endpoint", |a| norm(node(a, a.grid.steps())).min(1.0)),
        TestFunctional::new("sup_norm", |a| {
            (0..a.grid.len()).map(|k| norm(node(a, k))).fold(0.0, f64::max).min(1.0)
        }),
        TestFunctional::new("time_average", |a| {
            let s: f64 = (0..a.grid.steps()).map(|k| node(a, k)[0]).sum();
            s / a.grid.steps() as f64
        }),
    ];
    let c = random_linear(&g, d, seed, 0);
    out.push(TestFunctional::new("sin_linear_0", move |a| {
        a.path.iter().zip(&c).map(|(x, w)| x * w).sum::<f64>().sin()
    }));
    let t_star = stream_rng(seed, 1, 0).gen_range(1..=g.steps());
    out.push(TestFunctional::new(format!("sin_x_dot_w_at_{t_star}"), move |a| {
        driver_dot(a, t_star).sin()
    }));
    for i in 5..count {
        let stream = i as u64 + 1;
        let f = match i % 3 {
            0 => {
                let c = random_linear(&g, d, seed, stream);
                TestFunctional::new(format!("sin_linear_{i}"), move |a| {
                    a.path.iter().zip(&c).map(|(x, w)| x * w).sum::<f64>().sin()
                })
            }
            1 => {
                let k = stream_rng(seed, stream, 0).gen_range(1..=g.steps());
                TestFunctional::new(format!("cos_x_dot_w_at_{k}"), move |a| driver_dot(a, k).cos())
            }
            _ => {
                let mut rng = stream_rng(seed, stream, 0);
                let k = rng.gen_range(0..=g.steps());
                let shift: f64 = rng.gen_range(-1.0..1.0);
                TestFunctional::new(format!("tanh_node_{k}"), move |a| (node(a, k)[0] + shift).tanh())
            }
        };
        out.push(f);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NarrowRow {
    pub functional: String,
    pub n: usize,
    pub estimate: f64,
    pub std_error: f64,
    /// `|Ê g(α_n) − Ê g(α_prev)|`, absent on the first level.
    pub diff: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NarrowTable {
    pub rows: Vec<NarrowRow>,
    /// Per functional: successive differences decrease up to one inversion.
    pub settling: Vec<(String, bool)>,
}

impl NarrowTable {
    /// Fraction of functionals whose differences settle.
    pub fn settled_fraction(&self) -> f64 {
        let ok = self.settling.iter().filter(|(_, b)| *b).count();
        ok as f64 / self.settling.len().max(1) as f64
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "functional,n,estimate,se,diff")?;
        for r in &self.rows {
            let diff = r.diff.map(|d| d.to_string()).unwrap_or_default();
            writeln!(w, "{},{},{},{},{}", r.functional, r.n, r.estimate, r.std_error, diff)?;
        }
        Ok(())
    }
}

/// [`narrow_stats`] for an arbitrary labelled sequence of ensembles.
pub fn narrow_stats_for(
    levels: &[usize],
    alphas: &[PathEnsemble],
    driver: Option<&DriverEnsemble>,
    battery: &[TestFunctional],
) -> Result<NarrowTable> {
    if battery.is_empty() {
        return Err(Error::InvalidArgument("empty battery".into()));
    }
    if levels.len() != alphas.len() {
        return Err(Error::shape("one ensemble per level is required"));
    }
    let mut rows = Vec::new();
    let mut settling = Vec::new();
    for g in battery {
        let mut prev: Option<f64> = None;
        let mut diffs = Vec::new();
        for (&n, alpha) in levels.iter().zip(alphas) {
            let (estimate, std_error) = stats::mean_se(&g.values(alpha, driver));
            let diff = prev.map(|p| (estimate - p).abs());
            diffs.extend(diff);
            rows.push(NarrowRow {
                functional: g.name().to_string(),
                n,
                estimate,
                std_error,
                diff,
            });
            prev = Some(estimate);
        }
        settling.push((g.name().to_string(), stats::decreasing_up_to_one_inversion(&diffs)));
    }
    Ok(NarrowTable { rows, settling })
}

/// `Ê g(α_n)` with standard errors and successive differences along the
/// scheme's levels.
pub fn narrow_stats(
    result: &SchemeResult,
    driver: &DriverEnsemble,
    battery: &[TestFunctional],
) -> Result<NarrowTable> {
    let levels: Vec<usize> = result.levels.iter().map(|l| l.n()).collect();
    narrow_stats_for(&levels, &result.alphas, Some(driver), battery)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeMoments {
    pub node: usize,
    pub time: f64,
    pub coord: usize,
    pub mean: f64,
    pub mean_se: f64,
    pub variance: f64,
    pub variance_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakSummary {
    pub moments: Vec<NodeMoments>,
    /// `(R, P{sup ‖x‖ > R})`.
    pub exceedance: Vec<(f64, f64)>,
}

pub const DEFAULT_LADDER: [f64; 6] = [0.5, 1.0, 2.0, 5.0, 10.0, 1e18];

/// Per-node moments of every coordinate and exceedance probabilities of the
/// sup norm over `ladder`.
pub fn weak_summary(alpha: &PathEnsemble, ladder: &[f64]) -> WeakSummary {
    let grid = alpha.grid();
    let d = alpha.dim();
    let moments = (0..grid.len() * d)
        .into_par_iter()
        .map(|j| {
            let (k, i) = (j / d, j % d);
            let xs: Vec<f64> = alpha.paths().map(|p| p[j]).collect();
            let (mean, mean_se) = stats::mean_se(&xs);
            let (variance, variance_se) = stats::variance_se(&xs);
            NodeMoments {
                node: k,
                time: grid.node(k),
                coord: i,
                mean,
                mean_se,
                variance,
                variance_se,
            }
        })
        .collect();
    let sups: Vec<f64> = alpha
        .paths()
        .map(|p| p.chunks(d).map(norm).fold(0.0, f64::max))
        .collect();
    let exceedance = ladder
        .iter()
        .map(|&r| (r, sups.iter().filter(|&&s| s > r).count() as f64 / sups.len() as f64))
        .collect();
    WeakSummary {
        moments,
        exceedance,
    }
}

impl WeakSummary {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "node,time,coord,mean,mean_se,variance,variance_se")?;
        for m in &self.moments {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                m.node, m.time, m.coord, m.mean, m.mean_se, m.variance, m.variance_se
            )?;
        }
        Ok(())
    }

    pub fn write_exceedance_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "radius,probability")?;
        for (r, p) in &self.exceedance {
            writeln!(w, "{r},{p}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixpoint::{run_scheme, BoxRule, SchemeConfig};
    use crate::pathspace::sample_driver;
    use crate::problems::preset;

    fn grid(n: usize) -> TimeGrid {
        TimeGrid::new(0.0, 1.0, n).unwrap()
    }

    #[test]
    fn battery_basics() {
        let g = grid(16);
        let battery = test_battery(&g, 1, 5, 3).unwrap();
        assert_eq!(battery.len(), 5);
        let w = sample_driver(g, 4, 1, 0).unwrap();
        let zero = PathEnsemble::zeros(g, 4, 1);
        assert!(battery[0].values(&zero, Some(&w)).iter().all(|&v| v == 0.0));
        let three = PathEnsemble::constant(g, 4, &[3.0]);
        assert!(battery[1].values(&three, Some(&w)).iter().all(|&v| v == 1.0));
        assert!(test_battery(&g, 1, 0, 3).is_err());
    }

    #[test]
    fn battery_is_deterministic_and_bounded() {
        let g = grid(32);
        let w = sample_driver(g, 50, 2, 5).unwrap();
        let wild = sample_driver(g, 50, 2, 6).unwrap().to_paths().map(|v| v * 1e6);
        let a = test_battery(&g, 2, 12, 9).unwrap();
        let b = test_battery(&g, 2, 12, 9).unwrap();
        assert_eq!(a.len(), 12);
        for (f, h) in a.iter().zip(&b) {
            assert_eq!(f.name(), h.name());
            let va = f.values(&wild, Some(&w));
            assert_eq!(va, h.values(&wild, Some(&w)));
            assert!(va.iter().all(|v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn identical_levels_have_zero_differences() {
        let g = grid(16);
        let w = sample_driver(g, 40, 1, 1).unwrap();
        let x = w.to_paths();
        let battery = test_battery(&g, 1, 8, 2).unwrap();
        let table =
            narrow_stats_for(&[2, 4, 8], &[x.clone(), x.clone(), x], Some(&w), &battery).unwrap();
        assert!(table.rows.iter().all(|r| r.diff.is_none_or(|d| d == 0.0)));
        assert_eq!(table.settled_fraction(), 1.0);
    }

    #[test]
    fn converging_sequence_settles() {
        let g = grid(32);
        let w = sample_driver(g, 500, 1, 7).unwrap();
        let x = w.to_paths();
        let levels = [1, 2, 4, 8, 16, 32];
        let alphas: Vec<PathEnsemble> =
            levels.iter().map(|&n| x.map(|v| v + v / n as f64)).collect();
        let battery = test_battery(&g, 1, 10, 4).unwrap();
        let table = narrow_stats_for(&levels, &alphas, Some(&w), &battery).unwrap();
        for (name, ok) in &table.settling {
            assert!(ok, "{name}");
        }
    }

    #[test]
    fn gbm_scheme_expectations_settle() {
        let g = grid(64);
        let m = 5000;
        let w = sample_driver(g, m, 1, 2024).unwrap();
        let p = preset("gbm", &[0.05, 0.2, 1.0]).unwrap();
        let cfg = SchemeConfig::new(&[8, 16, 32, 64], BoxRule::Uniform { lo: -1e300, hi: 1e300 })
            .unwrap();
        let res = run_scheme(&p.as_operator().unwrap(), &cfg, &w, &p.initial_guess(g, m).unwrap())
            .unwrap();
        let battery = test_battery(&g, 1, 10, 11).unwrap();
        let t1 = narrow_stats(&res, &w, &battery).unwrap();
        let t2 = narrow_stats(&res, &w, &battery).unwrap();
        assert_eq!(t1, t2);
        assert!(t1.settling[0].1, "endpoint: {:?}", t1.rows);
        assert!(t1.settled_fraction() >= 0.8, "{:?}", t1.settling);
    }

    #[test]
    fn joint_permutation_leaves_expectations() {
        let g = grid(16);
        let w = sample_driver(g, 64, 1, 3).unwrap();
        let x = sample_driver(g, 64, 1, 4).unwrap().to_paths();
        let order: Vec<usize> = (0..64).rev().collect();
        let battery = test_battery(&g, 1, 8, 1).unwrap();
        let a = narrow_stats_for(&[16], std::slice::from_ref(&x), Some(&w), &battery).unwrap();
        let b = narrow_stats_for(&[16], &[x.select(&order)], Some(&w.select(&order)), &battery)
            .unwrap();
        for (r, s) in a.rows.iter().zip(&b.rows) {
            assert!((r.estimate - s.estimate).abs() < 1e-12);
        }
    }

    #[test]
    fn summary_of_constants_and_brownian_motion() {
        let g = grid(32);
        let c = weak_summary(&PathEnsemble::constant(g, 20, &[0.5]), &DEFAULT_LADDER);
        assert!(c.moments.iter().all(|m| m.mean == 0.5 && m.variance == 0.0));
        assert_eq!(c.exceedance.last().unwrap().1, 0.0);
        assert_eq!(c.exceedance[0].1, 0.0);
        assert_eq!(c.exceedance[1].1, 0.0);

        let w = sample_driver(g, 10_000, 1, 8).unwrap().to_paths();
        let s = weak_summary(&w, &[1e18]);
        for m in &s.moments[1..] {
            assert!((m.variance - m.time).abs() < 4.0 * m.variance_se, "{m:?}");
        }
        assert_eq!(s.exceedance[0].1, 0.0);
    }
}
