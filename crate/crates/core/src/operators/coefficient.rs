use std::fmt;
use std::sync::Arc;

use crate::pathspace::DriverPath;

/// Arguments seen by a coefficient at one grid node of one scenario.
///
/// `driver` exposes only the prefix up to `node`, so a coefficient cannot
/// read future noise.
#[derive(Debug, Clone, Copy)]
pub struct CoefArgs<'a> {
    /// Scenario index; lets a coefficient read fixed per-scenario data such
    /// as an initial value.
    pub scenario: usize,
    pub node: usize,
    pub time: f64,
    pub state: &'a [f64],
    pub driver: Option<DriverPath<'a>>,
}

impl<'a> CoefArgs<'a> {
    /// `W(t_node)`; zeros are not substituted, a missing driver panics.
    pub fn driver_now(&self) -> &'a [f64] {
        self.driver
            .expect("coefficient reads the driver but none was supplied")
            .current()
    }
}

type Rule = dyn Fn(&CoefArgs<'_>, &mut [f64]) + Send + Sync;

/// Random Carathéodory coefficient `f(ω, t, x)`, with `ω` entering through
/// the driver prefix only. The rule must be re-entrant.
#[derive(Clone)]
pub struct CoefficientFn {
    name: String,
    out_dim: Option<usize>,
    bound: Option<f64>,
    growth: Option<f64>,
    reads_driver: bool,
    rule: Arc<Rule>,
}

impl fmt::Debug for CoefficientFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientFn")
            .field("name", &self.name)
            .field("out_dim", &self.out_dim)
            .field("bound", &self.bound)
            .field("growth", &self.growth)
            .field("reads_driver", &self.reads_driver)
            .finish()
    }
}

impl CoefficientFn {
    /// A rule whose output has the same dimension as the state.
    pub fn new<F>(name: impl Into<String>, rule: F) -> Self
    where
        F: Fn(&CoefArgs<'_>, &mut [f64]) + Send + Sync + 'static,
    {
        CoefficientFn {
            name: name.into(),
            out_dim: None,
            bound: None,
            growth: None,
            reads_driver: false,
            rule: Arc::new(rule),
        }
    }

    pub fn with_out_dim(mut self, dim: usize) -> Self {
        self.out_dim = Some(dim);
        self
    }

    /// Declared uniform bound `|f| <= bound`.
    pub fn with_bound(mut self, bound: f64) -> Self {
        self.bound = Some(bound);
        self
    }

    /// Declared growth exponent `|f(x)| <= A + C |x|^p`.
    pub fn with_growth(mut self, p: f64) -> Self {
        self.growth = Some(p);
        self
    }

    pub fn reading_driver(mut self) -> Self {
        self.reads_driver = true;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn out_dim(&self, state_dim: usize) -> usize {
        self.out_dim.unwrap_or(state_dim)
    }

    pub fn bound(&self) -> Option<f64> {
        self.bound
    }

    pub fn growth(&self) -> Option<f64> {
        self.growth
    }

    pub fn reads_driver(&self) -> bool {
        self.reads_driver
    }

    pub fn eval(&self, args: &CoefArgs<'_>, out: &mut [f64]) {
        (self.rule)(args, out)
    }

    /// Convenience evaluation without a driver.
    pub fn eval_at(&self, node: usize, time: f64, state: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.out_dim(state.len())];
        self.eval(
            &CoefArgs {
                scenario: 0,
                node,
                time,
                state,
                driver: None,
            },
            &mut out,
        );
        out
    }

    pub fn identity() -> Self {
        Self::new("identity", |a, out| out.copy_from_slice(a.state)).with_growth(1.0)
    }

    pub fn zero() -> Self {
        Self::new("zero", |_, out| out.fill(0.0)).with_bound(0.0)
    }

    /// State-independent constant; output dimension is `value.len()`.
    pub fn constant(value: Vec<f64>) -> Self {
        let dim = value.len();
        let bound = value.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        Self::new("constant", move |_, out| out.copy_from_slice(&value))
            .with_out_dim(dim)
            .with_bound(bound)
    }

    /// `scale * x + offset`, coordinatewise.
    pub fn linear(scale: f64, offset: f64) -> Self {
        Self::new("linear", move |a, out| {
            for (o, x) in out.iter_mut().zip(a.state) {
                *o = scale * x + offset;
            }
        })
        .with_growth(1.0)
    }

    pub fn square() -> Self {
        Self::new("square", |a, out| {
            for (o, x) in out.iter_mut().zip(a.state) {
                *o = x * x;
            }
        })
        .with_growth(2.0)
    }

    /// `f(t, x) = t` in every coordinate.
    pub fn time() -> Self {
        Self::new("time", |a, out| out.fill(a.time))
    }

    /// `f(t, x, W) = W(t)`; output dimension follows the driver.
    pub fn driver(driver_dim: usize) -> Self {
        Self::new("driver", |a, out| out.copy_from_slice(a.driver_now()))
            .with_out_dim(driver_dim)
            .reading_driver()
    }

    /// `scale * tanh(x)`, bounded by `|scale|`.
    pub fn tanh(scale: f64) -> Self {
        Self::new("tanh", move |a, out| {
            for (o, x) in out.iter_mut().zip(a.state) {
                *o = scale * x.tanh();
            }
        })
        .with_bound(scale.abs())
    }

    /// `sin(x)`, Lipschitz-1 and bounded by one.
    pub fn sin() -> Self {
        Self::new("sin", |a, out| {
            for (o, x) in out.iter_mut().zip(a.state) {
                *o = x.sin();
            }
        })
        .with_bound(1.0)
    }

    /// `clamp(sin(W_1(t)) * x, -bound, bound)`: a random, adapted coefficient.
    pub fn sin_driver_clipped(bound: f64) -> Self {
        Self::new("sin_driver_clipped", move |a, out| {
            let w = a.driver_now()[0].sin();
            for (o, x) in out.iter_mut().zip(a.state) {
                *o = (w * x).clamp(-bound, bound);
            }
        })
        .with_bound(bound)
        .reading_driver()
    }
}
