//! Deliberately defective operators used to show that the harnesses catch
//! violations.

use std::sync::Arc;

use super::{Causality, EnsembleMap, Operator};
use crate::error::{Error, Result};
use crate::pathspace::{DriverEnsemble, PathEnsemble};

/// `x ↦ x + mean over scenarios of x` at every node. Causal but not local.
#[derive(Debug)]
pub struct CrossScenarioShift;

impl EnsembleMap for CrossScenarioShift {
    fn name(&self) -> &str {
        "cross_scenario_shift"
    }

    fn output_dim(&self, input_dim: usize, _driver_dim: Option<usize>) -> Result<usize> {
        Ok(input_dim)
    }

    fn apply(&self, x: &PathEnsemble, _driver: Option<&DriverEnsemble>) -> Result<PathEnsemble> {
        let len = x.path_len();
        let mut mean = vec![0.0; len];
        for p in x.paths() {
            for (acc, v) in mean.iter_mut().zip(p) {
                *acc += v;
            }
        }
        let scale = 1.0 / x.scenarios() as f64;
        mean.iter_mut().for_each(|v| *v *= scale);
        let mut out = x.clone();
        for m in 0..x.scenarios() {
            for (o, s) in out.path_mut(m).iter_mut().zip(&mean) {
                *o += s;
            }
        }
        Ok(out)
    }
}

/// `y(t) = W(b)` at every node: local but anticipating.
#[derive(Debug)]
pub struct TerminalDriver;

impl EnsembleMap for TerminalDriver {
    fn name(&self) -> &str {
        "terminal_driver"
    }

    fn output_dim(&self, _input_dim: usize, driver_dim: Option<usize>) -> Result<usize> {
        driver_dim.ok_or_else(|| Error::dim("terminal_driver needs a driver"))
    }

    fn apply(&self, x: &PathEnsemble, driver: Option<&DriverEnsemble>) -> Result<PathEnsemble> {
        let w = driver.ok_or_else(|| Error::dim("terminal_driver needs a driver"))?;
        let n = x.grid().steps();
        Ok(PathEnsemble::from_fn(*x.grid(), x.scenarios(), w.dim(), |m, _, _, out| {
            out.copy_from_slice(w.scenario(m).value(n))
        }))
    }
}

pub fn nonlocal_shift() -> Operator {
    Operator::custom(Arc::new(CrossScenarioShift), Causality::Causal)
}

pub fn anticipating() -> Operator {
    Operator::custom(Arc::new(TerminalDriver), Causality::Unknown)
}
