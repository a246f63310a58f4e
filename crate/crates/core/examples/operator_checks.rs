//! Locality and adaptedness harnesses on built-in and deliberately broken
//! operators.

use apfx::operators::{
    adaptedness_sweep, demo, ito_integral, lebesgue_integral, locality_check, superposition,
    AdaptednessSetup, CoefficientFn,
};
use apfx::pathspace::{sample_driver, TimeGrid};

fn main() -> apfx::Result<()> {
    let grid = TimeGrid::new(0.0, 1.0, 32)?;
    let w = sample_driver(grid, 64, 1, 1)?;
    let x = sample_driver(grid, 64, 1, 2)?.to_paths();
    let y = sample_driver(grid, 64, 1, 3)?.to_paths();
    let setup = AdaptednessSetup {
        grid,
        scenarios: 16,
        dim: 1,
        driver_dim: 1,
    };

    let ops = [
        ("tanh superposition", superposition(CoefficientFn::tanh(1.0))),
        ("lebesgue", lebesgue_integral()),
        ("ito", ito_integral()),
        ("nonlocal shift", demo::nonlocal_shift()),
        ("anticipating", demo::anticipating()),
    ];
    println!("{:<20} {:>10} {:>16}", "operator", "local", "adapted splits");
    for (name, op) in &ops {
        let loc = locality_check(op, &x, &y, &w, 200, 9)?;
        let sweep = adaptedness_sweep(op, &setup, 2, 9)?;
        let adapted = sweep.iter().filter(|r| r.all_passed()).count();
        println!(
            "{name:<20} {:>10} {:>16}",
            loc.all_passed(),
            format!("{adapted}/{}", sweep.len())
        );
    }
    Ok(())
}
