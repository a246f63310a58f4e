use apfx::config::ExperimentConfig;
use apfx::operators::{apply, locality_check, Causality, CoefficientFn, Operator};
use apfx::pathspace::{prob_metric, sample_driver, Norm, PathEnsemble, TimeGrid};
use apfx::projective::{causal_interp, clamp_box, volterra_interp, CompactBox, ProjectionLevel};
use proptest::prelude::*;

const N: usize = 8;
const M: usize = 6;

fn grid() -> TimeGrid {
    TimeGrid::new(0.0, 1.0, N).unwrap()
}

fn ensemble() -> impl Strategy<Value = PathEnsemble> {
    prop::collection::vec(-3.0..3.0f64, M * (N + 1))
        .prop_map(|v| PathEnsemble::new(grid(), M, 1, v).unwrap())
}

fn level() -> impl Strategy<Value = ProjectionLevel> {
    prop::sample::select(vec![1usize, 2, 4, 8]).prop_map(|n| ProjectionLevel::new(n).unwrap())
}

fn causality() -> impl Strategy<Value = Causality> {
    prop::sample::select(vec![Causality::Unknown, Causality::Causal, Causality::StrictlyCausal])
}

fn building_block() -> impl Strategy<Value = Operator> {
    prop::sample::select(vec![0usize, 1, 2, 3, 4, 5, 6]).prop_map(|i| match i {
        0 => Operator::identity(),
        1 => Operator::ito(),
        2 => Operator::lebesgue(),
        3 => Operator::superposition(CoefficientFn::tanh(1.5)),
        4 => Operator::interp(ProjectionLevel::new(2).unwrap()),
        5 => Operator::causal_interp(ProjectionLevel::new(4).unwrap()),
        _ => Operator::mollify(ProjectionLevel::new(4).unwrap()),
    })
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc.max((x - y).abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metric_is_a_bounded_symmetric_pseudometric(
        x in ensemble(), y in ensemble(), z in ensemble(),
        norm in prop::sample::select(vec![Norm::Sup, Norm::L1, Norm::L2]),
    ) {
        let xy = prob_metric(&x, &y, norm).unwrap().value;
        let yx = prob_metric(&y, &x, norm).unwrap().value;
        let xz = prob_metric(&x, &z, norm).unwrap().value;
        let zy = prob_metric(&z, &y, norm).unwrap().value;
        prop_assert_eq!(xy, yx);
        prop_assert!((0.0..=1.0).contains(&xy));
        prop_assert!(xy <= xz + zy + 1e-12);
        prop_assert_eq!(prob_metric(&x, &x, norm).unwrap().value, 0.0);
    }

    #[test]
    fn interpolation_is_linear_and_idempotent(
        x in ensemble(), y in ensemble(), a in -2.0..2.0f64, n in level(),
    ) {
        let combo = x.zip_map(&y, |u, v| a * u + v).unwrap();
        let lhs = volterra_interp(&combo, n).unwrap();
        let rhs = volterra_interp(&x, n).unwrap()
            .zip_map(&volterra_interp(&y, n).unwrap(), |u, v| a * u + v).unwrap();
        prop_assert!(max_abs_diff(lhs.values(), rhs.values()) < 1e-12);
        let once = volterra_interp(&x, n).unwrap();
        let twice = volterra_interp(&once, n).unwrap();
        prop_assert!(max_abs_diff(once.values(), twice.values()) < 1e-12);
    }

    #[test]
    fn lagged_interpolation_reads_only_the_past(
        x in ensemble(), y in ensemble(), split in 0..=N, n in level(),
    ) {
        // Agree up to node `split`, arbitrary afterwards.
        let mut z = y.clone();
        for m in 0..M {
            z.path_mut(m)[..=split].copy_from_slice(&x.path(m)[..=split]);
        }
        let px = causal_interp(&x, n).unwrap();
        let pz = causal_interp(&z, n).unwrap();
        let horizon = (split + 1).min(N);
        for m in 0..M {
            prop_assert_eq!(&px.path(m)[..=horizon], &pz.path(m)[..=horizon]);
        }
    }

    #[test]
    fn clamp_is_an_idempotent_contraction_into_the_box(
        x in ensemble(), y in ensemble(), lo in -2.0..0.0f64, width in 0.0..3.0f64,
    ) {
        let bx = CompactBox::uniform(grid(), 1, lo, lo + width).unwrap();
        let cx = clamp_box(&x, &bx).unwrap();
        let cy = clamp_box(&y, &bx).unwrap();
        prop_assert!(bx.contains(&cx));
        prop_assert_eq!(clamp_box(&cx, &bx).unwrap(), cx.clone());
        for (i, (a, b)) in cx.values().iter().zip(cy.values()).enumerate() {
            prop_assert!((a - b).abs() <= (x.values()[i] - y.values()[i]).abs());
        }
    }

    #[test]
    fn causality_chain_and_sum_rules(parts in prop::collection::vec(causality(), 1..6)) {
        let chain = Causality::chain(parts.iter().copied());
        let all_causal = parts.iter().all(|&c| c >= Causality::Causal);
        let any_strict = parts.contains(&Causality::StrictlyCausal);
        prop_assert_eq!(chain == Causality::StrictlyCausal, all_causal && any_strict);
        prop_assert_eq!(chain == Causality::Unknown, !all_causal);
        let sum = Causality::sum(parts.iter().copied());
        prop_assert!(parts.iter().all(|&c| sum <= c));
        prop_assert!(parts.contains(&sum));
    }

    #[test]
    fn declared_causality_holds_under_perturbation(
        parts in prop::collection::vec(building_block(), 1..4),
        x in ensemble(), k in 0..=N, bump in 0.5..2.0f64, seed in any::<u64>(),
    ) {
        let op = Operator::composite(parts);
        let driver = sample_driver(grid(), M, 1, seed).unwrap();
        let mut z = x.clone();
        for m in 0..M {
            for v in &mut z.path_mut(m)[k..] {
                *v += bump;
            }
        }
        let hx = apply(&op, &x, &driver).unwrap();
        let hz = apply(&op, &z, &driver).unwrap();
        let unaffected = match op.causality() {
            Causality::Unknown => 0,
            Causality::Causal => k,
            Causality::StrictlyCausal => k + 1,
        };
        for m in 0..M {
            prop_assert_eq!(&hx.path(m)[..unaffected], &hz.path(m)[..unaffected]);
        }
    }

    #[test]
    fn operators_are_local_on_random_splices(
        parts in prop::collection::vec(building_block(), 1..4),
        x in ensemble(), y in ensemble(), seed in any::<u64>(),
    ) {
        let op = Operator::composite(parts);
        let driver = sample_driver(grid(), M, 1, seed).unwrap();
        let report = locality_check(&op, &x, &y, &driver, 5, seed ^ 1).unwrap();
        prop_assert!(report.all_passed());
    }

    #[test]
    fn drivers_are_reproducible_and_resampling_keeps_the_past(
        seed in any::<u64>(), tail in any::<u64>(), split in 0..=N,
    ) {
        let a = sample_driver(grid(), M, 2, seed).unwrap();
        let b = sample_driver(grid(), M, 2, seed).unwrap();
        prop_assert_eq!(a.paths(), b.paths());
        let r = a.resample_tail(split, tail);
        for m in 0..M {
            for k in 0..=split {
                prop_assert_eq!(a.scenario(m).value(k), r.scenario(m).value(k));
            }
        }
    }

    #[test]
    fn config_round_trips_through_json(
        steps in prop::sample::select(vec![8usize, 16, 64]),
        scenarios in 1usize..500, seed in any::<u64>(), radius in 0.1..10.0f64,
    ) {
        let text = format!(r#"{{
            "grid": {{"a": 0.0, "b": 2.0, "N": {steps}}},
            "monte_carlo": {{"M": {scenarios}, "seed": {seed}}},
            "problem": {{"operator": {{"kind": "composite", "parts": [
                {{"kind": "superposition", "coefficient": {{"fn": "tanh", "scale": 2.0}}}},
                {{"kind": "ito"}}]}}, "x0": [0.5]}},
            "scheme": {{"levels": [2, {steps}], "box_rule": {{"kind": "growing", "radius0": {radius}}}}}
        }}"#);
        let cfg = ExperimentConfig::from_json(&text).unwrap();
        let again = ExperimentConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        prop_assert_eq!(cfg, again);
    }
}
