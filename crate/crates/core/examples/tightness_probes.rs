//! Moduli of continuity, Kolmogorov moment fits, the tight-set probe and
//! uniform continuity for `J ∘ tanh` on bounded inputs.

use apfx::operators::{apply, superposition, CoefficientFn, Operator};
use apfx::pathspace::{sample_driver, TimeGrid};
use apfx::projective::CompactBox;
use apfx::tightness::{
    box_inputs, kolmogorov_estimate, modulus_report, tight_set_probe, uniform_continuity_probe,
    CompactSpec,
};

fn main() -> apfx::Result<()> {
    let grid = TimeGrid::new(0.0, 1.0, 256)?;
    let m = 2_000;
    let op = superposition(CoefficientFn::tanh(1.0)).then(Operator::ito());
    let bx = CompactBox::uniform(grid, 1, -1.0, 1.0)?;
    let w = sample_driver(grid, m, 1, 1)?;
    let y = apply(&op, &box_inputs(&bx, m, 2)?, &w)?;

    let deltas = [0.05, 0.1, 0.2, 0.5];
    for row in modulus_report(&y, &deltas)? {
        println!("δ = {:<5} median mod {:.4}, p95 {:.4}", row.delta, row.median, row.p95);
    }
    let fit = kolmogorov_estimate(&y, 64, 3)?;
    println!("Kolmogorov exponent {:?}, r² {:?}", fit.fitted_exponent, fit.r2);

    // Calibrate the compact on an independent input family and driver.
    let reference = apply(&op, &box_inputs(&bx, m, 4)?, &sample_driver(grid, m, 1, 5)?)?;
    let spec = CompactSpec::calibrate(&reference, &deltas, 0.995)?;
    let report = tight_set_probe(&[y], &spec, 0.05)?;
    println!("exceedance {:.4}", report.exceedance);

    for row in uniform_continuity_probe(&op, &bx, &[0.4, 0.2, 0.1, 0.05], 4, &w, 6)? {
        println!("ρ = {:<5} max d {:.4}", row.rho, row.max_distance);
    }
    Ok(())
}
