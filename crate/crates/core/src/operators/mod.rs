//! Local operators on ensembles of adapted paths.
//!
//! An [`Operator`] is a description of `h`; it is applied scenario by
//! scenario, so scenario `m` of `h(x)` is a function of scenario `m` of `x`
//! and of the driver only. Built-in kinds are evaluated incrementally node by
//! node (see `eval`), which also powers the forward-substitution solver in
//! [`crate::fixpoint`]. Ensemble-level maps ([`EnsembleMap`]) may break
//! locality; they exist to plant violations for the property harnesses.

mod checks;
mod coefficient;
pub mod demo;
pub(crate) mod eval;

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use checks::{
    adaptedness_check, adaptedness_sweep, locality_check, AdaptednessReport, AdaptednessSetup,
    Counterexample, LocalityReport,
};
pub use coefficient::{CoefArgs, CoefficientFn};

use crate::error::{Error, Result};
use crate::pathspace::{DriverEnsemble, PathEnsemble};
use crate::projective::{CompactBox, ProjectionLevel};
use eval::Evaluator;

/// Dependence of output node `k` on input nodes, at grid resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Causality {
    /// Anything may be read, including future nodes.
    Unknown,
    /// Output at `k` reads inputs at nodes `<= k`.
    Causal,
    /// Output at `k` reads inputs at nodes `< k` only.
    StrictlyCausal,
}

impl Causality {
    /// Causality of a chain of operators.
    pub fn chain(parts: impl IntoIterator<Item = Causality>) -> Causality {
        let mut any_strict = false;
        let mut all_causal = true;
        for c in parts {
            any_strict |= c == Causality::StrictlyCausal;
            all_causal &= c >= Causality::Causal;
        }
        match (all_causal, any_strict) {
            (true, true) => Causality::StrictlyCausal,
            (true, false) => Causality::Causal,
            _ => Causality::Unknown,
        }
    }

    /// Causality of a pointwise sum.
    pub fn sum(parts: impl IntoIterator<Item = Causality>) -> Causality {
        parts.into_iter().min().unwrap_or(Causality::StrictlyCausal)
    }

    pub fn label(&self) -> &'static str {
        match self {
            Causality::Unknown => "unknown",
            Causality::Causal => "causal",
            Causality::StrictlyCausal => "strictly_causal",
        }
    }
}

/// Operator acting on a whole ensemble at once. Nothing forces such a map to
/// be local; the harnesses in this module detect it when it is not.
pub trait EnsembleMap: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    fn output_dim(&self, input_dim: usize, driver_dim: Option<usize>) -> Result<usize>;
    fn apply(&self, x: &PathEnsemble, driver: Option<&DriverEnsemble>) -> Result<PathEnsemble>;
}

#[derive(Debug, Clone)]
pub enum OpKind {
    Identity,
    /// The same state at every node of every scenario.
    Constant(Vec<f64>),
    /// A per-scenario state `[M][d]`, constant in time.
    ScenarioConstant { dim: usize, values: Arc<Vec<f64>> },
    /// A fixed ensemble, independent of the input.
    Fixed(Arc<PathEnsemble>),
    Superposition(CoefficientFn),
    /// `Σ_{j<k} x_j Δt`.
    Lebesgue,
    /// `Σ_{j<k} x_j ΔW_j`; `column` pairs every state coordinate with one
    /// driver coordinate, otherwise coordinates are paired one to one.
    Ito { column: Option<usize> },
    Clamp(Arc<CompactBox>),
    Interp(ProjectionLevel),
    CausalInterp(ProjectionLevel),
    Mollify(ProjectionLevel),
    /// Parts in application order: `parts[0]` acts first.
    Composite(Vec<Operator>),
    Sum(Vec<Operator>),
    Custom(Arc<dyn EnsembleMap>),
}

#[derive(Debug, Clone)]
pub struct Operator {
    kind: OpKind,
    causality: Causality,
}

impl Operator {
    fn with(kind: OpKind, causality: Causality) -> Self {
        Operator { kind, causality }
    }

    pub fn identity() -> Self {
        Self::with(OpKind::Identity, Causality::Causal)
    }

    pub fn constant(value: Vec<f64>) -> Self {
        Self::with(OpKind::Constant(value), Causality::StrictlyCausal)
    }

    /// Per-scenario initial values, `values.len() = M * dim`.
    pub fn scenario_constant(dim: usize, values: Vec<f64>) -> Self {
        Self::with(
            OpKind::ScenarioConstant {
                dim,
                values: Arc::new(values),
            },
            Causality::StrictlyCausal,
        )
    }

    pub fn fixed(x: PathEnsemble) -> Self {
        Self::with(OpKind::Fixed(Arc::new(x)), Causality::StrictlyCausal)
    }

    pub fn superposition(f: CoefficientFn) -> Self {
        Self::with(OpKind::Superposition(f), Causality::Causal)
    }

    pub fn lebesgue() -> Self {
        Self::with(OpKind::Lebesgue, Causality::StrictlyCausal)
    }

    pub fn ito() -> Self {
        Self::with(OpKind::Ito { column: None }, Causality::StrictlyCausal)
    }

    /// Itô integral of every state coordinate against driver coordinate `j`.
    pub fn ito_column(j: usize) -> Self {
        Self::with(OpKind::Ito { column: Some(j) }, Causality::StrictlyCausal)
    }

    pub fn clamp(bx: CompactBox) -> Self {
        Self::with(OpKind::Clamp(Arc::new(bx)), Causality::Causal)
    }

    /// Node-level causality is unknown: interior nodes read the next anchor.
    pub fn interp(level: ProjectionLevel) -> Self {
        Self::with(OpKind::Interp(level), Causality::Unknown)
    }

    /// Lagged interpolation; every node reads only earlier input nodes.
    pub fn causal_interp(level: ProjectionLevel) -> Self {
        Self::with(OpKind::CausalInterp(level), Causality::Causal)
    }

    pub fn mollify(level: ProjectionLevel) -> Self {
        Self::with(OpKind::Mollify(level), Causality::Unknown)
    }

    /// Chain in application order.
    pub fn composite(parts: Vec<Operator>) -> Self {
        let causality = Causality::chain(parts.iter().map(|p| p.causality));
        Self::with(OpKind::Composite(parts), causality)
    }

    /// `outer ∘ self`.
    pub fn then(self, outer: Operator) -> Self {
        Self::composite(vec![self, outer])
    }

    pub fn sum(parts: Vec<Operator>) -> Self {
        let causality = Causality::sum(parts.iter().map(|p| p.causality));
        Self::with(OpKind::Sum(parts), causality)
    }

    pub fn custom(map: Arc<dyn EnsembleMap>, causality: Causality) -> Self {
        Self::with(OpKind::Custom(map), causality)
    }

    /// Override the declared causality.
    pub fn with_causality(mut self, causality: Causality) -> Self {
        self.causality = causality;
        self
    }

    pub fn kind(&self) -> &OpKind {
        &self.kind
    }

    pub fn causality(&self) -> Causality {
        self.causality
    }

    pub fn kind_label(&self) -> &'static str {
        match self.kind {
            OpKind::Identity => "identity",
            OpKind::Constant(_) | OpKind::ScenarioConstant { .. } | OpKind::Fixed(_) => "constant",
            OpKind::Superposition(_) => "superposition",
            OpKind::Lebesgue => "lebesgue",
            OpKind::Ito { .. } => "ito",
            OpKind::Clamp(_) => "clamp",
            OpKind::Interp(_) => "interp",
            OpKind::CausalInterp(_) => "causal_interp",
            OpKind::Mollify(_) => "mollify",
            OpKind::Composite(_) => "composite",
            OpKind::Sum(_) => "sum",
            OpKind::Custom(_) => "custom",
        }
    }

    /// True when every part acts scenario by scenario.
    pub fn is_scenario_wise(&self) -> bool {
        match &self.kind {
            OpKind::Custom(_) => false,
            OpKind::Composite(ps) | OpKind::Sum(ps) => ps.iter().all(|p| p.is_scenario_wise()),
            _ => true,
        }
    }

    pub fn needs_driver(&self) -> bool {
        match &self.kind {
            OpKind::Ito { .. } => true,
            OpKind::Superposition(f) => f.reads_driver(),
            OpKind::Composite(ps) | OpKind::Sum(ps) => ps.iter().any(|p| p.needs_driver()),
            OpKind::Custom(_) => true,
            _ => false,
        }
    }

    pub fn output_dim(&self, input_dim: usize, driver_dim: Option<usize>) -> Result<usize> {
        match &self.kind {
            OpKind::Identity
            | OpKind::Lebesgue
            | OpKind::Interp(_)
            | OpKind::CausalInterp(_)
            | OpKind::Mollify(_) => {
                Ok(input_dim)
            }
            OpKind::Constant(v) => Ok(v.len()),
            OpKind::ScenarioConstant { dim, .. } => Ok(*dim),
            OpKind::Fixed(x) => Ok(x.dim()),
            OpKind::Superposition(f) => Ok(f.out_dim(input_dim)),
            OpKind::Ito { column } => {
                let dw = driver_dim.ok_or_else(|| Error::dim("the Itô integral needs a driver"))?;
                match column {
                    Some(j) if *j >= dw => Err(Error::dim(format!(
                        "driver column {j} out of range for d_w = {dw}"
                    ))),
                    Some(_) => Ok(input_dim),
                    None if input_dim != dw => Err(Error::dim(format!(
                        "Itô integrand has d = {input_dim} but the driver has d_w = {dw}"
                    ))),
                    None => Ok(input_dim),
                }
            }
            OpKind::Clamp(b) => {
                if b.dim() != input_dim {
                    return Err(Error::dim(format!(
                        "box has d = {}, input has d = {input_dim}",
                        b.dim()
                    )));
                }
                Ok(input_dim)
            }
            OpKind::Composite(ps) => ps
                .iter()
                .try_fold(input_dim, |d, p| p.output_dim(d, driver_dim)),
            OpKind::Sum(ps) => {
                let dims = ps
                    .iter()
                    .map(|p| p.output_dim(input_dim, driver_dim))
                    .collect::<Result<Vec<_>>>()?;
                match dims.split_first() {
                    None => Err(Error::dim("empty sum")),
                    Some((first, rest)) if rest.iter().any(|d| d != first) => {
                        Err(Error::dim(format!("sum parts disagree on dimension: {dims:?}")))
                    }
                    Some((first, _)) => Ok(*first),
                }
            }
            OpKind::Custom(map) => map.output_dim(input_dim, driver_dim),
        }
    }
}

/// Superposition operator generated by `f`.
pub fn superposition(f: CoefficientFn) -> Operator {
    Operator::superposition(f)
}

/// Left-Riemann drift integral.
pub fn lebesgue_integral() -> Operator {
    Operator::lebesgue()
}

/// Left-point Itô integral against the driver.
pub fn ito_integral() -> Operator {
    Operator::ito()
}

fn check_driver(x: &PathEnsemble, driver: Option<&DriverEnsemble>) -> Result<()> {
    if let Some(d) = driver {
        if d.grid() != x.grid() || d.scenarios() != x.scenarios() {
            return Err(Error::shape(format!(
                "driver is (M={}, N={}), input is (M={}, N={})",
                d.scenarios(),
                d.grid().steps(),
                x.scenarios(),
                x.grid().steps()
            )));
        }
    }
    Ok(())
}

/// Apply `op` to `x` under `driver`.
pub fn apply(op: &Operator, x: &PathEnsemble, driver: &DriverEnsemble) -> Result<PathEnsemble> {
    apply_with(op, x, Some(driver))
}

/// Apply `op`; `driver` may be omitted for operators that never read it.
pub fn apply_with(
    op: &Operator,
    x: &PathEnsemble,
    driver: Option<&DriverEnsemble>,
) -> Result<PathEnsemble> {
    check_driver(x, driver)?;
    if driver.is_none() && op.needs_driver() {
        return Err(Error::InvalidArgument(format!(
            "operator `{}` reads the driver but none was supplied",
            op.kind_label()
        )));
    }
    if !op.is_scenario_wise() {
        return apply_ensemble(op, x, driver);
    }
    let proto = Evaluator::new(op, *x.grid(), x.dim(), driver.map(|d| d.dim()))?;
    let out_dim = proto.out_dim();
    let out_len = x.grid().len() * out_dim;
    let mut values = vec![0.0; x.scenarios() * out_len];
    let outcomes: Vec<Result<()>> = values
        .par_chunks_mut(out_len)
        .enumerate()
        .map_init(
            || proto.clone(),
            |ev, (m, chunk)| {
                ev.run(m, x.path(m), driver.map(|d| d.scenario(m)))?;
                chunk.copy_from_slice(ev.output());
                Ok(())
            },
        )
        .collect();
    outcomes.into_iter().collect::<Result<Vec<()>>>()?;
    Ok(PathEnsemble::from_raw(*x.grid(), x.scenarios(), out_dim, values))
}

fn apply_ensemble(
    op: &Operator,
    x: &PathEnsemble,
    driver: Option<&DriverEnsemble>,
) -> Result<PathEnsemble> {
    match &op.kind {
        OpKind::Custom(map) => map.apply(x, driver),
        OpKind::Composite(parts) => parts
            .iter()
            .try_fold(x.clone(), |acc, p| apply_with(p, &acc, driver)),
        OpKind::Sum(parts) => {
            let mut iter = parts.iter();
            let first = iter.next().ok_or_else(|| Error::dim("empty sum"))?;
            let mut acc = apply_with(first, x, driver)?;
            for p in iter {
                acc = acc.zip_map(&apply_with(p, x, driver)?, |a, b| a + b)?;
            }
            Ok(acc)
        }
        _ => apply_with(op, x, driver),
    }
}
