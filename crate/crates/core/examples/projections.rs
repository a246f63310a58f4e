//! Volterra interpolation, its lagged variant, the mollifier and box clamping.

use apfx::pathspace::{sample_driver, TimeGrid};
use apfx::projective::{
    causal_interp, clamp_box, mollify, property_pi_probe, volterra_interp, CompactBox,
    ProjectionLevel,
};

fn main() -> apfx::Result<()> {
    let grid = TimeGrid::new(0.0, 1.0, 64)?;
    let w = sample_driver(grid, 2_000, 1, 7)?.to_paths();
    let levels: Vec<ProjectionLevel> = [2, 4, 8, 16, 32, 64]
        .iter()
        .map(|&n| ProjectionLevel::new(n))
        .collect::<apfx::Result<_>>()?;

    println!("n    d(π_n W, W)");
    for row in property_pi_probe(&w, &levels)? {
        println!("{:<4} {:.4} ± {:.4}", row.n, row.distance, row.std_error);
    }

    let level = ProjectionLevel::new(8)?;
    let pi = volterra_interp(&w, level)?;
    assert_eq!(volterra_interp(&pi, level)?, pi);
    let lagged = causal_interp(&w, level)?;
    let smooth = mollify(&w, level)?;
    let k = 12;
    println!(
        "node {k}: W {:.4}, π_8 W {:.4}, lagged {:.4}, mollified {:.4}",
        w.value(0, k)[0],
        pi.value(0, k)[0],
        lagged.value(0, k)[0],
        smooth.value(0, k)[0]
    );

    let bx = CompactBox::uniform(grid, 1, -0.5, 0.5)?;
    let clamped = clamp_box(&w, &bx)?;
    assert!(bx.contains(&clamped));
    assert_eq!(clamp_box(&clamped, &bx)?, clamped);
    println!("clamped ensemble lies in [-0.5, 0.5]");
    Ok(())
}
