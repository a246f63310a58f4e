//! Expectations of a battery of test functionals along the scheme's levels.

use apfx::fixpoint::{run_scheme, BoxRule, SchemeConfig};
use apfx::pathspace::{sample_driver, TimeGrid};
use apfx::problems::preset;
use apfx::youngdiag::{narrow_stats, test_battery, weak_summary, DEFAULT_LADDER};

fn main() -> apfx::Result<()> {
    let grid = TimeGrid::new(0.0, 1.0, 64)?;
    let m = 5_000;
    let w = sample_driver(grid, m, 1, 5)?;
    let problem = preset("bounded_tanh", &[1.0, 0.5])?;
    let config = SchemeConfig::new(&[8, 16, 32, 64], BoxRule::Growing { radius0: 4.0 })?;
    let res = run_scheme(&problem.as_operator()?, &config, &w, &problem.initial_guess(grid, m)?)?;

    let battery = test_battery(&grid, 1, 8, 3)?;
    let table = narrow_stats(&res, &w, &battery)?;
    table.write_csv(std::io::stdout().lock())?;
    println!("settled fraction: {:.2}", table.settled_fraction());

    let summary = weak_summary(res.alphas.last().expect("levels"), &DEFAULT_LADDER);
    let end = summary.moments.last().expect("nodes");
    println!("x(1): mean {:.4} ± {:.4}, variance {:.4}", end.mean, end.mean_se, end.variance);
    Ok(())
}
