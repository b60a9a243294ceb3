use proptest::prelude::*;

use twoscale::frobenius;
use twoscale::gamma::{default_candidates, fhom_via_measures};
use twoscale::grid::cell_coordinates;
use twoscale::integrand::{Integrand, Laminate};
use twoscale::measure::{
    average_measure, barycenter, p_moment, Atom, Binning, DiscreteMeasure, TwoScaleYoungMeasure,
};

fn atoms(dim: usize) -> impl Strategy<Value = Vec<Atom>> {
    prop::collection::vec(
        (prop::collection::vec(-5.0f64..5.0, dim), 0.01f64..1.0),
        1..12,
    )
    .prop_map(|v| v.into_iter().map(|(xi, w)| Atom { xi, w }).collect())
}

fn measure(dim: usize) -> impl Strategy<Value = DiscreteMeasure> {
    atoms(dim).prop_map(|a| DiscreteMeasure::from_weighted(a, 0.0).unwrap())
}

fn two_scale(seed_atoms: Vec<Atom>, shift: f64) -> TwoScaleYoungMeasure {
    TwoScaleYoungMeasure::from_fn(
        1,
        1,
        Binning {
            merge_radius: 0.0,
            ..Binning::new(2, 4)
        },
        2.0,
        |x, y| {
            let a = seed_atoms
                .iter()
                .map(|a| Atom {
                    xi: vec![a.xi[0] + shift * (x[0] + y[0])],
                    w: a.w,
                })
                .collect();
            DiscreteMeasure::from_weighted(a, 0.0).unwrap()
        },
    )
    .unwrap()
}

fn builtins() -> Vec<Integrand> {
    vec![
        Integrand::p_norm(2.0).unwrap(),
        Integrand::p_norm(3.0).unwrap(),
        Integrand::laminate(Laminate::new(vec![1.0, 4.0], 0).unwrap(), 2.0).unwrap(),
        Integrand::modulated_laminate(Laminate::new(vec![1.0, 2.0, 3.0], 0).unwrap()),
        Integrand::double_well(),
    ]
}

proptest! {
    #[test]
    fn weights_form_a_probability(a in atoms(2), r in 0.0f64..0.5) {
        let mu = DiscreteMeasure::from_weighted(a, r).unwrap();
        let total: f64 = mu.atoms().iter().map(|a| a.w).sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        prop_assert!(mu.atoms().iter().all(|a| a.w > 0.0));
    }

    #[test]
    fn merging_keeps_the_barycenter(a in atoms(2), r in 0.0f64..0.5) {
        let exact = DiscreteMeasure::from_weighted(a.clone(), 0.0).unwrap();
        let merged = DiscreteMeasure::from_weighted(a, r).unwrap();
        for (u, v) in exact.barycenter().iter().zip(merged.barycenter()) {
            prop_assert!((u - v).abs() <= 1e-9 * (1.0 + u.abs()));
        }
    }

    #[test]
    fn barycenter_is_linear_under_affine_maps(mu in measure(2), s in -3.0f64..3.0, b in -3.0f64..3.0) {
        let bar = mu.barycenter();
        let mapped = mu.map(|xi| xi.iter().map(|v| s * v + b).collect());
        for (u, v) in bar.iter().zip(mapped.barycenter()) {
            prop_assert!((s * u + b - v).abs() <= 1e-9 * (1.0 + u.abs()));
        }
    }

    #[test]
    fn p_moment_is_homogeneous(mu in measure(2), s in 0.1f64..4.0, p in 1.0f64..4.0) {
        let scaled = mu.map(|xi| xi.iter().map(|v| s * v).collect());
        let lhs = scaled.p_moment(p);
        let rhs = s.powf(p) * mu.p_moment(p);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs));
    }

    #[test]
    fn transport_distance_is_a_metric(a in measure(1), b in measure(1), c in measure(1)) {
        let ab = a.transport_distance(&b).unwrap();
        let ba = b.transport_distance(&a).unwrap();
        let ac = a.transport_distance(&c).unwrap();
        let cb = c.transport_distance(&b).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-12 * (1.0 + ab));
        prop_assert!(ab <= ac + cb + 1e-12);
        prop_assert!(a.transport_distance(&a).unwrap() <= 1e-12);
    }

    #[test]
    fn transport_distance_of_a_shift_is_the_shift(a in measure(1), s in -4.0f64..4.0) {
        let shifted = a.map(|xi| vec![xi[0] + s]);
        prop_assert!((a.transport_distance(&shifted).unwrap() - s.abs()).abs() <= 1e-12 * (1.0 + s.abs()));
    }

    #[test]
    fn averaging_is_idempotent(a in atoms(1), shift in -2.0f64..2.0) {
        let nu = two_scale(a, shift);
        let avg = average_measure(&nu).unwrap();
        prop_assert_eq!(average_measure(&avg).unwrap(), avg.clone());
        prop_assert_eq!(avg.x_count(), 1);
    }

    #[test]
    fn averaging_keeps_the_pooled_moments(a in atoms(1), shift in -2.0f64..2.0) {
        let nu = two_scale(a, shift);
        let avg = average_measure(&nu).unwrap();
        let before = p_moment(&nu, 2.0).total;
        let after = p_moment(&avg, 2.0).total;
        prop_assert!((before - after).abs() <= 1e-10 * (1.0 + before));
        let mean = |m: &TwoScaleYoungMeasure| barycenter(m).iter().map(|b| b[0]).sum::<f64>() / barycenter(m).len() as f64;
        prop_assert!((mean(&nu) - mean(&avg)).abs() <= 1e-10 * (1.0 + mean(&nu).abs()));
    }

    #[test]
    fn measures_survive_json(a in atoms(1), shift in -2.0f64..2.0) {
        let nu = two_scale(a, shift);
        let text = serde_json::to_string(&nu).unwrap();
        let back: TwoScaleYoungMeasure = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, nu);
    }

    #[test]
    fn cell_coordinates_lie_in_the_unit_cell(x in prop::collection::vec(-10.0f64..10.0, 1..3), m in 1u32..200) {
        let eps = 1.0 / m as f64;
        let y = cell_coordinates(&x, eps).unwrap();
        prop_assert!(y.iter().all(|v| (0.0..1.0).contains(v)));
    }

    #[test]
    fn cell_coordinates_are_periodic(x in -3.0f64..3.0, k in -20i32..20, m in 1u32..64) {
        let eps = 1.0 / m as f64;
        let a = cell_coordinates(&[x], eps).unwrap()[0];
        let b = cell_coordinates(&[x + k as f64 * eps], eps).unwrap()[0];
        let d = (a - b).abs();
        prop_assert!(d.min(1.0 - d) <= 1e-9);
    }

    #[test]
    fn builtins_respect_their_growth(
        x in prop::collection::vec(0.0f64..1.0, 2),
        y in prop::collection::vec(0.0f64..1.0, 2),
        xi in prop::collection::vec(-6.0f64..6.0, 2),
    ) {
        for f in builtins() {
            let v = f.evaluate(&x, &y, &xi).unwrap();
            let g = f.growth();
            let n = frobenius(&xi);
            prop_assert!(g.lower(n) <= v + 1e-9 * (1.0 + v.abs()), "{}: {} < lower {}", f.name(), v, g.lower(n));
            prop_assert!(v <= g.upper(n) * (1.0 + 1e-12), "{}: {} > upper {}", f.name(), v, g.upper(n));
        }
    }

    #[test]
    fn scaled_integrand_scales_values(xi in prop::collection::vec(-3.0f64..3.0, 1), s in 0.1f64..5.0) {
        for f in builtins() {
            let g = f.scaled(s).unwrap();
            let a = g.evaluate(&[0.3], &[0.7], &xi).unwrap();
            let b = s * f.evaluate(&[0.3], &[0.7], &xi).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn measure_minimum_scales_with_the_integrand(f in -2.0f64..2.0, s in 0.1f64..5.0) {
        let g = Integrand::double_well();
        let candidates = default_candidates(&[f], 1, 4.0, &[]).unwrap();
        let a = fhom_via_measures(&g, &[f], &candidates).unwrap();
        let b = fhom_via_measures(&g.scaled(s).unwrap(), &[f], &candidates).unwrap();
        prop_assert_eq!(&a.argmin, &b.argmin);
        prop_assert!((b.value - s * a.value).abs() <= 1e-12 * (1.0 + b.value.abs()));
    }
}
