//! Monte-Carlo fixed points of local operators on spaces of adapted random
//! paths.
//!
//! The crate discretises random points `x(ω, t)` on a uniform grid with `M`
//! Brownian scenarios and solves `x = h(x)` for local operators `h`
//! (superpositions, Lebesgue and Itô integrals, and compositions of them) by
//! the projection scheme `h_n = clamp ∘ π̃_n ∘ h`, where `π̃_n` is the
//! lagged causal interpolant. Alongside the solver it ships empirical
//! diagnostics for the structural hypotheses the scheme relies on: locality,
//! adaptedness, tightness and narrow convergence of the approximate fixed
//! points.
//!
//! Module map:
//!
//! - [`pathspace`]: grids, Brownian drivers, path ensembles, the metric of
//!   convergence in probability and file formats.
//! - [`projective`]: Volterra interpolation `π_n`, its lagged causal
//!   variant `π̃_n`, mollifier, box clamping.
//! - [`operators`]: local operators and the locality/adaptedness harnesses.
//! - [`tightness`]: moduli of continuity, Kolmogorov moment fits, tight-set
//!   and uniform-continuity probes.
//! - [`fixpoint`]: the per-level solver and the scheme driver.
//! - [`youngdiag`]: test-functional diagnostics of narrow convergence.
//! - [`problems`]: stochastic differential equations packaged as operators.
//! - [`config`] and [`cli`]: the experiment runner behind the `apfx` binary.

pub mod cli;
pub mod config;
pub mod error;
pub mod fixpoint;
pub mod operators;
pub mod pathspace;
pub mod problems;
pub mod projective;
pub mod rng;
pub mod stats;
pub mod tightness;
pub mod youngdiag;

pub use error::{Error, Result};
