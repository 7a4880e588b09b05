use std::sync::Arc;

use gibbslab::entropy::{entropy_of_weights, potential_along_orbit, shannon_entropy};
use gibbslab::measure::{
    birkhoff_sum, empirical_measure, weak_star_distance, GridMeasure, GridPartition, MeasureDistanceConfig,
};
use gibbslab::perturb::{perturb, PerturbationFamily, PerturbationKind};
use gibbslab::pressure::{greedy_separated_set, pressure_from_sums};
use gibbslab::system::finite_difference_jacobian;
use gibbslab::systems::{build_system, make_cat_map, SystemSpec};
use gibbslab::tangent::bowen_ball_contains;
use gibbslab::{iterate, jacobian_at, PhaseSpace, SmoothSystem};
use proptest::prelude::*;

fn partition(res: usize) -> GridPartition {
    GridPartition::new(PhaseSpace::torus(2), res).unwrap()
}

fn measure(res: usize) -> impl Strategy<Value = GridMeasure> {
    prop::collection::vec(0.0f64..1.0, res * res)
        .prop_filter("nonzero mass", |w| w.iter().sum::<f64>() > 1e-6)
        .prop_map(move |w| {
            let s: f64 = w.iter().sum();
            GridMeasure::from_weights(partition(res), w.into_iter().map(|x| x / s).collect()).unwrap()
        })
}

fn point2() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, 2)
}

fn perturbed_cat(eps: f64) -> Arc<dyn SmoothSystem> {
    let fam = PerturbationFamily::new(
        Arc::new(make_cat_map()),
        PerturbationKind::BumpTranslation {
            direction: vec![1.0, 0.3],
        },
        vec![0.4, 0.6],
        0.2,
        eps,
    )
    .unwrap();
    perturb(&fam).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weak_star_distance_is_a_metric(a in measure(8), b in measure(8), c in measure(8), k in 1usize..=3) {
        let cfg = MeasureDistanceConfig::new(k).unwrap();
        let ab = weak_star_distance(&a, &b, &cfg).unwrap();
        let ba = weak_star_distance(&b, &a, &cfg).unwrap();
        let ac = weak_star_distance(&a, &c, &cfg).unwrap();
        let cb = weak_star_distance(&c, &b, &cfg).unwrap();
        prop_assert_eq!(weak_star_distance(&a, &a, &cfg).unwrap(), 0.0);
        prop_assert!((ab - ba).abs() < 1e-15);
        prop_assert!(ab <= ac + cb + 1e-12);
        prop_assert!((0.0..=1.0).contains(&ab));
    }

    #[test]
    fn full_depth_distance_separates(a in measure(4), b in measure(4)) {
        let cfg = MeasureDistanceConfig::for_partition(a.partition());
        let d = weak_star_distance(&a, &b, &cfg).unwrap();
        let tv = a.total_variation(&b).unwrap();
        prop_assert!(tv == 0.0 || d > 0.0);
    }

    #[test]
    fn shannon_entropy_bounded_by_log_support(m in measure(4)) {
        let h = shannon_entropy(&m);
        prop_assert!(h >= 0.0);
        prop_assert!(h <= (m.support_size() as f64).ln() + 1e-12);
    }

    #[test]
    fn entropy_ignores_zero_weights(w in prop::collection::vec(0.01f64..1.0, 1..20), zeros in 0usize..5) {
        let s: f64 = w.iter().sum();
        let mut p: Vec<f64> = w.iter().map(|x| x / s).collect();
        let h = entropy_of_weights(&p);
        p.extend(std::iter::repeat_n(0.0, zeros));
        prop_assert_eq!(entropy_of_weights(&p), h);
    }

    #[test]
    fn potential_cocycle_is_additive(x in point2(), m in 1usize..20, n in 1usize..20) {
        let built = build_system(&SystemSpec::Cat).unwrap();
        let src = built.splitting_source(100);
        let sys = built.system.as_ref();
        let whole: f64 = potential_along_orbit(sys, &x, m + n, src.as_ref()).unwrap().iter().sum();
        let head: f64 = potential_along_orbit(sys, &x, m, src.as_ref()).unwrap().iter().sum();
        let fm = iterate(sys, &x, m + 1, false).unwrap().points[m].clone();
        let tail: f64 = potential_along_orbit(sys, &fm, n, src.as_ref()).unwrap().iter().sum();
        prop_assert!((whole - head - tail).abs() < 1e-12 * (m + n) as f64);
    }

    #[test]
    fn bowen_balls_shrink_with_time(x in point2(), y in point2(), delta in 0.01f64..0.5, n in 1usize..12) {
        let cat = make_cat_map();
        let longer = bowen_ball_contains(&cat, &x, &y, delta, n + 1).unwrap();
        let shorter = bowen_ball_contains(&cat, &x, &y, delta, n).unwrap();
        prop_assert!(!longer || shorter);
        let wider = bowen_ball_contains(&cat, &x, &y, delta * 1.5, n).unwrap();
        prop_assert!(!shorter || wider);
    }

    #[test]
    fn torus_maps_respect_wrapping(x in point2(), k in -3i32..=3, l in -3i32..=3) {
        let space = PhaseSpace::torus(2);
        let cat = make_cat_map();
        let y = cat.apply(&x).unwrap();
        let mut shifted = vec![x[0] + k as f64, x[1] + l as f64];
        space.wrap(&mut shifted);
        prop_assert!(space.distance(&shifted, &x) < 1e-12);
        let z = cat.apply(&shifted).unwrap();
        prop_assert!(space.distance(&y, &z) < 1e-12);
        let o = vec![0.5, 0.5];
        prop_assert!((space.distance(&o, &x) - space.distance(&o, &shifted)).abs() < 1e-12);
    }

    #[test]
    fn jacobian_chain_rule(x in point2(), eps in 0.0f64..0.1) {
        let g = perturbed_cat(eps);
        let orbit = iterate(g.as_ref(), &x, 2, true).unwrap();
        let js = orbit.jacobians.unwrap();
        let composed = &js[1] * &js[0];
        struct Twice(Arc<dyn SmoothSystem>);
        impl SmoothSystem for Twice {
            fn space(&self) -> &PhaseSpace { self.0.space() }
            fn label(&self) -> &str { "twice" }
            fn apply_into(&self, x: &[f64], out: &mut [f64]) -> gibbslab::Result<()> {
                let y = self.0.apply(x)?;
                self.0.apply_into(&y, out)
            }
        }
        let fd = finite_difference_jacobian(&Twice(g.clone()), &x, 1e-6);
        prop_assert!((composed - fd).amax() < 1e-4);
        let single = jacobian_at(g.as_ref(), &x);
        prop_assert!((single - &js[0]).amax() < 1e-14);
    }

    #[test]
    fn greedy_set_is_maximal_and_separated(
        pts in prop::collection::vec(point2(), 1..60),
        delta in 0.05f64..0.3,
        m in 1usize..4,
    ) {
        let cat = make_cat_map();
        let set = greedy_separated_set(&pts, &cat, delta, m).unwrap();
        for (i, a) in set.points.iter().enumerate() {
            for b in &set.points[i + 1..] {
                prop_assert!(!bowen_ball_contains(&cat, a, b, delta, m).unwrap());
            }
        }
        for p in &pts {
            let covered = set
                .points
                .iter()
                .any(|k| bowen_ball_contains(&cat, k, p, delta, m).unwrap());
            prop_assert!(covered);
        }
    }

    #[test]
    fn pressure_ignores_order(
        (sums, shuffled) in prop::collection::vec(-50.0f64..50.0, 1..40)
            .prop_flat_map(|v| (Just(v.clone()), Just(v).prop_shuffle())),
        m in 1usize..20,
    ) {
        let p = pressure_from_sums(&sums, m).unwrap();
        prop_assert!((p - pressure_from_sums(&shuffled, m).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn pushforward_moves_empirical_measure_little(x in point2(), n in 1usize..400) {
        let cat = make_cat_map();
        let part = partition(8);
        let mu = empirical_measure(&cat, &x, n, &part).unwrap();
        let fx = cat.apply(&x).unwrap();
        let pushed = empirical_measure(&cat, &fx, n, &part).unwrap();
        prop_assert!(mu.total_variation(&pushed).unwrap() <= 2.0 / n as f64 + 1e-12);
    }

    #[test]
    fn birkhoff_sums_are_linear(x in point2(), a in -3.0f64..3.0, b in -3.0f64..3.0, n in 1usize..200) {
        let cat = make_cat_map();
        let phi = |p: &[f64]| (std::f64::consts::TAU * p[0]).sin();
        let psi = |p: &[f64]| p[1] * p[1];
        let lhs = birkhoff_sum(&cat, &x, n, |p| a * phi(p) + b * psi(p)).unwrap();
        let rhs = a * birkhoff_sum(&cat, &x, n, phi).unwrap() + b * birkhoff_sum(&cat, &x, n, psi).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-10 * n as f64);
    }
}
