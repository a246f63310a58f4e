//! The projection scheme on geometric Brownian motion: residuals, distances
//! between levels, and the Euler–Maruyama fixed point of the unprojected
//! equation.

use apfx::fixpoint::{run_scheme, solve_fixed_point, strong_limit_probe, BoxRule, SchemeConfig};
use apfx::pathspace::sample_driver;
use apfx::problems::preset;
use apfx::stats;

fn main() -> apfx::Result<()> {
    let grid = apfx::pathspace::TimeGrid::new(0.0, 1.0, 64)?;
    let m = 5_000;
    let w = sample_driver(grid, m, 1, 11)?;
    let problem = preset("gbm", &[0.05, 0.2, 1.0])?;
    let h = problem.as_operator()?;
    let init = problem.initial_guess(grid, m)?;

    let config = SchemeConfig::new(&[8, 16, 32, 64], BoxRule::Growing { radius0: 4.0 })?;
    let res = run_scheme(&h, &config, &w, &init)?;
    println!("n    median ‖hα−α‖  frac ≥ 1/n  method");
    for s in &res.level_stats {
        println!("{:<4} {:<14.5} {:<11.3} {}", s.n, s.median_residual, s.frac_ge_1_over_n, s.method);
    }
    let probe = strong_limit_probe(&res)?;
    println!("successive distances {:?}: {:?}", probe.successive, probe.verdict);

    let em = solve_fixed_point(&h, &init, Some(&w), &config)?;
    let ends: Vec<f64> = (0..m).map(|s| em.alpha.value(s, 64)[0]).collect();
    let (mean, se) = stats::mean_se(&ends);
    println!("E x(1) = {mean:.4} ± {se:.4}  (exact e^0.05 = {:.4})", 0.05_f64.exp());
    Ok(())
}
