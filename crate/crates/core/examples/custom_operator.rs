//! A user-defined coefficient and an operator that is not strictly causal,
//! solved by damped Picard iteration.

use apfx::fixpoint::{build_hn, solve_level, BoxRule, SchemeConfig};
use apfx::operators::{apply, superposition, CoefficientFn, Operator};
use apfx::pathspace::{sample_driver, PathEnsemble, TimeGrid};
use apfx::projective::{CompactBox, ProjectionLevel};

fn main() -> apfx::Result<()> {
    let grid = TimeGrid::new(0.0, 1.0, 32)?;
    let w = sample_driver(grid, 100, 1, 8)?;

    // x = 1 + 0.5 cos(x) + ∫ tanh(x) dW: the superposition term reads the
    // current node, so the equation is only causal.
    let cos = CoefficientFn::new("half_cos", |a, out| {
        for (o, x) in out.iter_mut().zip(a.state) {
            *o = 0.5 * x.cos();
        }
    })
    .with_bound(0.5);
    let h = Operator::sum(vec![
        Operator::constant(vec![1.0]),
        superposition(cos),
        superposition(CoefficientFn::tanh(1.0)).then(Operator::ito()),
    ]);
    println!("causality of h: {}", h.causality().label());

    let config = SchemeConfig::new(&[32], BoxRule::Uniform { lo: -10.0, hi: 10.0 })?;
    let bx = CompactBox::uniform(grid, 1, -10.0, 10.0)?;
    let hn = build_hn(&h, ProjectionLevel::new(32)?, &bx)?;
    let sol = solve_level(&hn, &PathEnsemble::constant(grid, 100, &[1.0]), Some(&w), &config)?;
    let worst_iter = sol.iterations.iter().max().copied().unwrap_or(0);
    println!("{} in at most {worst_iter} iterations, converged {}", sol.method, sol.converged);

    let again = apply(hn.operator(), &sol.alpha, &w)?;
    let gap = again
        .values()
        .iter()
        .zip(sol.alpha.values())
        .fold(0.0_f64, |g, (a, b)| g.max((a - b).abs()));
    println!("‖h_n α − α‖ = {gap:.2e}");
    Ok(())
}
