use proptest::prelude::*;

use spatial_logistic::configspace::{
    correlation_of_density, density_of_correlation, k_inverse, k_transform, lp_integral, pairing,
    SiteLattice, SubsetSpace, TruncatedFunction,
};
use spatial_logistic::estimators::{estimate_k2_radial, Geometry};
use spatial_logistic::kernels::Kernel;
use spatial_logistic::simulator::Snapshot;

fn function(sites: usize, values: &[f64]) -> TruncatedFunction {
    let space = SubsetSpace::full(sites).unwrap();
    TruncatedFunction::from_fn(&space, |m| values[m as usize % values.len()])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // ⟨⟨KG, R⟩⟩ = ⟨⟨G, k_R⟩⟩, the integration rule behind the correlation map
    #[test]
    fn k_transform_is_dual_to_correlation_map(
        sites in 1usize..6,
        g in prop::collection::vec(-1.0f64..1.0, 1..40),
        r in prop::collection::vec(-1.0f64..1.0, 1..40),
        box_len in 0.5f64..4.0,
    ) {
        let lat = SiteLattice::new(box_len, 1, sites).unwrap();
        let (g, r) = (function(sites, &g), function(sites, &r));
        let lhs = pairing(&k_transform(&g), &r, &lat);
        let rhs = pairing(&g, &correlation_of_density(&r, &lat), &lat);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn k_inverse_and_positivity(sites in 1usize..7, g in prop::collection::vec(0.0f64..1.0, 1..70)) {
        let g = function(sites, &g);
        let kg = k_transform(&g);
        prop_assert!(kg.values().iter().all(|&x| x >= 0.0));
        prop_assert!(k_inverse(&kg).max_abs_diff(&g) <= 1e-12);
    }

    #[test]
    fn density_correlation_maps_invert(
        sites in 1usize..6,
        r in prop::collection::vec(0.0f64..1.0, 1..40),
        box_len in 0.5f64..4.0,
    ) {
        let lat = SiteLattice::new(box_len, 1, sites).unwrap();
        let r = function(sites, &r);
        let back = density_of_correlation(&correlation_of_density(&r, &lat), &lat);
        prop_assert!(back.max_abs_diff(&r) <= 1e-10);
        // the empty-set correlation is the total mass
        let q = correlation_of_density(&r, &lat);
        prop_assert!((q.get(0) - lp_integral(&r, &lat)).abs() <= 1e-12 * (1.0 + q.get(0)));
    }

    #[test]
    fn kernels_are_even(x in -3.0f64..3.0, y in -3.0f64..3.0, sigma in 0.2f64..1.5) {
        for k in [
            Kernel::gaussian(sigma, 1.0, 2).unwrap(),
            Kernel::tophat(0.3, sigma, 2).unwrap(),
            Kernel::exponential(1.0 / sigma, 1.0, 2).unwrap(),
        ] {
            prop_assert_eq!(k.eval(&[x, y]), k.eval(&[-x, -y]));
        }
    }

    #[test]
    fn k2_is_translation_invariant(
        pts in prop::collection::vec(0.0f64..10.0, 0..30),
        shift in 0.0f64..10.0,
    ) {
        let geom = Geometry { box_len: 10.0, dim: 1 };
        let a = vec![Snapshot { t: 0.0, points: pts.iter().map(|&x| [x, 0.0]).collect() }];
        let b = vec![Snapshot { t: 0.0, points: pts.iter().map(|&x| [(x + shift) % 10.0, 0.0]).collect() }];
        let edges = [0.0, 0.7, 1.9, 3.3];
        let (ka, kb) = (
            estimate_k2_radial(&a, &edges, geom).unwrap(),
            estimate_k2_radial(&b, &edges, geom).unwrap(),
        );
        // distances right at a bin edge may round to either side
        for (x, y) in ka.k2.iter().zip(&kb.k2) {
            prop_assert!((x - y).abs() <= 2.0 / (10.0 * 2.0 * 0.7) + 1e-12);
        }
    }
}
