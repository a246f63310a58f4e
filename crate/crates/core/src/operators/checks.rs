//! Empirical harnesses for locality and adaptedness.
//!
//! Both compare outputs bitwise: scenario-wise evaluation is deterministic,
//! so any difference is a genuine dependence.

use rand::Rng;
use serde::Serialize;

use super::{apply, apply_with, Operator};
use crate::error::Result;
use crate::pathspace::{sample_driver, DriverEnsemble, PathEnsemble, TimeGrid};
use crate::rng::{mix, stream_rng};

/// Where a property first failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Counterexample {
    pub trial: usize,
    pub scenario: usize,
    pub node: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalityReport {
    pub trials: usize,
    pub passed: usize,
    pub failed: usize,
    /// Scenario membership of the splice set `A` for the first failing trial.
    pub counterexample: Option<(Counterexample, Vec<bool>)>,
}

impl LocalityReport {
    pub fn all_passed(&self) -> bool {
        self.failed == 0
    }
}

fn first_difference(a: &PathEnsemble, b: &PathEnsemble, m: usize) -> Option<usize> {
    let dim = a.dim();
    a.path(m)
        .iter()
        .zip(b.path(m))
        .position(|(x, y)| x.to_bits() != y.to_bits())
        .map(|pos| pos / dim)
}

/// Splice `x` on a random scenario set `A` with `y` off `A` and check that
/// `h` of the splice agrees with `h(x)` on `A` and with `h(y)` off `A`.
pub fn locality_check(
    op: &Operator,
    x: &PathEnsemble,
    y: &PathEnsemble,
    driver: &DriverEnsemble,
    trials: usize,
    seed: u64,
) -> Result<LocalityReport> {
    x.check_same_shape(y)?;
    let hx = apply(op, x, driver)?;
    let hy = apply(op, y, driver)?;
    let mut report = LocalityReport {
        trials,
        passed: 0,
        failed: 0,
        counterexample: None,
    };
    for trial in 0..trials {
        let mut rng = stream_rng(seed, trial as u64, 0);
        let mask: Vec<bool> = (0..x.scenarios()).map(|_| rng.gen_bool(0.5)).collect();
        let z = x.splice(y, &mask)?;
        let hz = apply(op, &z, driver)?;
        let failure = (0..x.scenarios()).find_map(|m| {
            let reference = if mask[m] { &hx } else { &hy };
            first_difference(&hz, reference, m).map(|node| Counterexample {
                trial,
                scenario: m,
                node,
            })
        });
        match failure {
            None => report.passed += 1,
            Some(c) => {
                report.failed += 1;
                if report.counterexample.is_none() {
                    report.counterexample = Some((c, mask));
                }
            }
        }
    }
    Ok(report)
}

/// Shapes of the random problems generated by [`adaptedness_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptednessSetup {
    pub grid: TimeGrid,
    pub scenarios: usize,
    pub dim: usize,
    pub driver_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdaptednessReport {
    pub k_split: usize,
    pub trials: usize,
    pub passed: usize,
    pub failed: usize,
    pub counterexample: Option<Counterexample>,
}

impl AdaptednessReport {
    pub fn all_passed(&self) -> bool {
        self.failed == 0
    }
}

/// Couple two drivers that share increments before `k_split` and are
/// independent afterwards; with identical inputs, the outputs of an adapted
/// operator must agree on nodes `0..=k_split`.
pub fn adaptedness_check(
    op: &Operator,
    setup: &AdaptednessSetup,
    k_split: usize,
    trials: usize,
    seed: u64,
) -> Result<AdaptednessReport> {
    let mut report = AdaptednessReport {
        k_split,
        trials,
        passed: 0,
        failed: 0,
        counterexample: None,
    };
    let k_split = k_split.min(setup.grid.steps());
    for trial in 0..trials {
        let t = trial as u64;
        let base = sample_driver(setup.grid, setup.scenarios, setup.driver_dim, mix(seed, 3 * t))?;
        let coupled = base.resample_tail(k_split, mix(seed, 3 * t + 1));
        let x = sample_driver(setup.grid, setup.scenarios, setup.dim, mix(seed, 3 * t + 2))?
            .to_paths();
        let y1 = apply_with(op, &x, Some(&base))?;
        let y2 = apply_with(op, &x, Some(&coupled))?;
        let prefix = (k_split + 1) * y1.dim();
        let failure = (0..setup.scenarios).find_map(|m| {
            y1.path(m)[..prefix]
                .iter()
                .zip(&y2.path(m)[..prefix])
                .position(|(a, b)| a.to_bits() != b.to_bits())
                .map(|pos| Counterexample {
                    trial,
                    scenario: m,
                    node: pos / y1.dim(),
                })
        });
        match failure {
            None => report.passed += 1,
            Some(c) => {
                report.failed += 1;
                report.counterexample.get_or_insert(c);
            }
        }
    }
    Ok(report)
}

/// [`adaptedness_check`] at every split `0..=N`.
pub fn adaptedness_sweep(
    op: &Operator,
    setup: &AdaptednessSetup,
    trials: usize,
    seed: u64,
) -> Result<Vec<AdaptednessReport>> {
    (0..=setup.grid.steps())
        .map(|k| adaptedness_check(op, setup, k, trials, mix(seed, k as u64)))
        .collect()
}
