//! Sample a Brownian driver, check its moments, and compare two ensembles in
//! the metric of convergence in probability.

use apfx::pathspace::{prob_metric, sample_driver, write_csv, Norm, TimeGrid};
use apfx::stats;

fn main() -> apfx::Result<()> {
    let grid = TimeGrid::new(0.0, 1.0, 256)?;
    let w = sample_driver(grid, 10_000, 1, 42)?;
    let ends: Vec<f64> = (0..w.scenarios()).map(|m| w.scenario(m).value(256)[0]).collect();
    let (mean, mean_se) = stats::mean_se(&ends);
    let (var, var_se) = stats::variance_se(&ends);
    println!("W(1): mean {mean:.4} ± {mean_se:.4}, variance {var:.4} ± {var_se:.4}");

    // Same seed, same paths; a different seed is an independent copy.
    let again = sample_driver(grid, 10_000, 1, 42)?;
    assert_eq!(again.paths(), w.paths());
    let other = sample_driver(grid, 10_000, 1, 43)?;
    let d = prob_metric(&w.to_paths(), &other.to_paths(), Norm::Sup)?;
    println!("d(W, W') = {:.4} ± {:.4}", d.value, d.std_error);

    let few = sample_driver(TimeGrid::new(0.0, 1.0, 8)?, 2, 1, 42)?;
    write_csv(&few.to_paths(), std::io::stdout().lock())?;
    Ok(())
}
