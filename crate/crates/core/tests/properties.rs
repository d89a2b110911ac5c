use std::sync::Arc;

use idslab_core::fourier::{char_function, duhamel_bound_check, TimeGrid};
use idslab_core::operator::spectrum_support_check;
use idslab_core::spectral::{ids_empirical, ids_on_grid, local_spectral_sample, sample_ensemble};
use idslab_core::{assemble, realize_disorder, BumpSsd, EnsembleSpec, GraphSpec};
use proptest::prelude::*;

fn chain_spec(side: usize, lambda: f64, n: usize, seed: u64) -> EnsembleSpec {
    EnsembleSpec::new(
        Arc::new(GraphSpec::build_box(1, side).unwrap()),
        Arc::new(BumpSsd::new(6, -1.0, 1.0).unwrap()),
        lambda,
        n,
        seed,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn box_distance_is_a_metric(u in 0usize..49, v in 0usize..49, w in 0usize..49) {
        let g = GraphSpec::build_box(2, 7).unwrap();
        let d = |a, b| g.distance(a, b).unwrap();
        prop_assert_eq!(d(u, u), 0);
        prop_assert_eq!(d(u, v), d(v, u));
        prop_assert!(d(u, w) <= d(u, v) + d(v, w));
        if u != v {
            prop_assert!(d(u, v) > 0);
        }
    }

    #[test]
    fn tree_distance_is_a_metric(u in 0usize..31, v in 0usize..31, w in 0usize..31) {
        let g = GraphSpec::build_bethe(2, 4).unwrap();
        let d = |a, b| g.distance(a, b).unwrap();
        prop_assert_eq!(d(u, v), d(v, u));
        prop_assert!(d(u, w) <= d(u, v) + d(v, w));
    }

    #[test]
    fn kr_distance_is_linear_in_the_gap(l1 in 0.1f64..40.0, l2 in 0.1f64..40.0, m in 0usize..7) {
        let ssd = BumpSsd::new(m, -1.0, 1.0).unwrap();
        let d = ssd.kr_distance_scaled(l1, l2).unwrap();
        prop_assert!((d - (l1 - l2).abs() * ssd.abs_moment()).abs() <= 1e-8);
    }

    #[test]
    fn cdf_is_monotone(x in -1.2f64..1.2, dx in 0.0f64..0.5) {
        let ssd = BumpSsd::new(3, -1.0, 1.0).unwrap();
        let (a, b) = (ssd.cdf(x), ssd.cdf(x + dx));
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!(a <= b + 1e-15);
    }

    #[test]
    fn realization_is_independent_of_lambda(seed in any::<u64>(), index in 0usize..8) {
        let a = realize_disorder(&chain_spec(21, 16.0, 8, seed), index).unwrap();
        let b = realize_disorder(&chain_spec(21, 31.5, 8, seed), index).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn local_measure_is_a_probability_on_the_support(seed in any::<u64>(), lambda in 0.0f64..40.0) {
        let spec = chain_spec(31, lambda, 1, seed);
        let h = assemble(&spec.graph, lambda, &realize_disorder(&spec, 0).unwrap()).unwrap();
        let s = local_spectral_sample(&h, spec.graph.origin()).unwrap();
        let mass: f64 = s.weights.iter().sum();
        prop_assert!((mass - 1.0).abs() < 1e-12);
        prop_assert!(s.weights.iter().all(|&w| w >= 0.0));
        prop_assert!(spectrum_support_check(&spec, &s.eigenvalues).passed);
    }
}

#[test]
fn ids_is_a_distribution_function() {
    let ens = sample_ensemble(&chain_spec(51, 20.0, 60, 7)).unwrap();
    let xs: Vec<f64> = (0..400).map(|i| -25.0 + 0.125 * i as f64).collect();
    let grid = ids_on_grid(&ens, &xs);
    assert!(grid.windows(2).all(|w| w[0] <= w[1] + 1e-15));
    assert!(grid[0].abs() < 1e-15);
    assert!((grid[grid.len() - 1] - 1.0).abs() < 1e-12);
    for (i, &x) in xs.iter().enumerate().step_by(37) {
        assert!((grid[i] - ids_empirical(&ens.samples, x)).abs() < 1e-12);
    }
}

#[test]
fn char_function_invariants_and_coupled_bound() {
    let s1 = chain_spec(41, 16.0, 50, 11);
    let s2 = s1.at_lambda(17.0).unwrap();
    let grid = TimeGrid::new(0.01, 4.0).unwrap();
    let c1 = char_function(&sample_ensemble(&s1).unwrap(), grid).unwrap();
    let c2 = char_function(&sample_ensemble(&s2).unwrap(), grid).unwrap();
    assert!(c1.invariant_defect() < 1e-12);
    assert!(c2.invariant_defect() < 1e-12);
    let report = duhamel_bound_check(&s1, &c1, &s2, &c2, 1e-10).unwrap();
    assert!(report.holds(), "{report:?}");
    assert!(report.ratio <= 1.0 + 1e-9);
}

#[test]
fn uncoupled_ensembles_are_rejected() {
    let s1 = chain_spec(41, 16.0, 10, 1);
    let s2 = chain_spec(41, 17.0, 10, 2);
    let grid = TimeGrid::new(0.05, 1.0).unwrap();
    let c1 = char_function(&sample_ensemble(&s1).unwrap(), grid).unwrap();
    let c2 = char_function(&sample_ensemble(&s2).unwrap(), grid).unwrap();
    assert!(duhamel_bound_check(&s1, &c1, &s2, &c2, 1e-10).is_err());
}
