//! Left-point Itô integrals: telescoping, isometry and the Itô formula.

use apfx::operators::{apply, ito_integral, superposition, CoefficientFn, Operator};
use apfx::pathspace::{sample_driver, PathEnsemble, TimeGrid};
use apfx::stats;

fn main() -> apfx::Result<()> {
    let grid = TimeGrid::new(0.0, 1.0, 256)?;
    let m = 10_000;
    let w = sample_driver(grid, m, 1, 2024)?;
    let j = ito_integral();

    let ones = PathEnsemble::constant(grid, m, &[1.0]);
    let j1 = apply(&j, &ones, &w)?;
    assert_eq!(j1.values(), w.paths());
    let ends: Vec<f64> = (0..m).map(|s| j1.value(s, 256)[0]).collect();
    let (var, se) = stats::variance_se(&ends);
    println!("Var J(1)(1) = {var:.4} ± {se:.4}  (isometry: 1)");

    let jw = apply(&j, &w.to_paths(), &w)?;
    let gaps: Vec<f64> = (0..m)
        .map(|s| {
            let w1 = w.scenario(s).value(256)[0];
            (jw.value(s, 256)[0] - (w1 * w1 - 1.0) / 2.0).abs()
        })
        .collect();
    let (mean, se) = stats::mean_se(&gaps);
    println!("E|J(W)(1) − (W(1)² − 1)/2| = {mean:.4} ± {se:.4}");

    // ∫ sin(W) dW through a superposition followed by the integral.
    let op = superposition(CoefficientFn::sin()).then(Operator::ito());
    let y = apply(&op, &w.to_paths(), &w)?;
    let ends: Vec<f64> = (0..m).map(|s| y.value(s, 256)[0]).collect();
    let (mean, se) = stats::mean_se(&ends);
    println!("E ∫ sin(W) dW = {mean:.4} ± {se:.4}  (martingale: 0)");
    Ok(())
}
