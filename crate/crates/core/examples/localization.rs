//! Localize an SDE on a ladder of balls and record where each scenario
//! leaves them.

use apfx::fixpoint::{BoxRule, SchemeConfig};
use apfx::pathspace::{sample_driver, TimeGrid};
use apfx::problems::{preset, solve_localized};

fn main() -> apfx::Result<()> {
    let grid = TimeGrid::new(0.0, 1.0, 128)?;
    let w = sample_driver(grid, 1_000, 1, 3)?;
    let problem = preset("gbm", &[0.1, 0.6, 1.0])?;
    let config = SchemeConfig::new(&[128], BoxRule::Growing { radius0: 4.0 })?;
    let radii = [0.25, 0.5, 1.0, 2.0];
    let sol = solve_localized(&problem, &radii, &w, &config)?;
    for (r, _, tau) in &sol.ladder {
        let exited = tau.iter().filter(|&&k| k < 128).count();
        println!("radius {r:<5} exited in {exited} of {} scenarios", tau.len());
    }
    println!("ladder consistent before stopping nodes: {}", sol.consistent());
    Ok(())
}
