use std::collections::BTreeMap;

use overshoot_core::kernels::detailed_balance_q;
use overshoot_core::measures::InvariantMeasure;
use overshoot_core::stats::{
    tv_distance, v_gamma_distance, EmpiricalDistribution, Geometry, Masses,
};
use overshoot_core::{IncrementSpec, LatticePmf, RngStream, Simulator};
use proptest::prelude::*;

/// Mixture of two zero-mean two-point laws {-a, b} and {-c, e} with weight
/// k/10 on the first (0 < k < 10), written with exact fractions.
fn lattice_law() -> impl Strategy<Value = IncrementSpec> {
    (1i64..6, 1i64..6, 1i64..6, 1i64..6, 1u64..10)
        .prop_filter("span must be 1", |&(a, b, c, e, _)| {
            gcd(gcd(a, b), gcd(c, e)) == 1
        })
        .prop_map(|(a, b, c, e, k)| {
            let d = 10 * (a + b) * (c + e);
            let mut atoms: BTreeMap<i64, i64> = BTreeMap::new();
            *atoms.entry(-a).or_default() += k as i64 * b * (c + e);
            *atoms.entry(b).or_default() += k as i64 * a * (c + e);
            *atoms.entry(-c).or_default() += (10 - k as i64) * e * (a + b);
            *atoms.entry(e).or_default() += (10 - k as i64) * c * (a + b);
            let support: Vec<f64> = atoms.keys().map(|&u| u as f64).collect();
            let probs: Vec<String> = atoms.values().map(|n| format!("{n}/{d}")).collect();
            IncrementSpec::lattice(
                LatticePmf::new(1.0, &support, &probs).expect("zero mean, span 1 by construction"),
            )
        })
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

fn masses(len: usize) -> impl Strategy<Value = Masses> {
    prop::collection::vec(0.0f64..1.0, len)
        .prop_filter("nonzero", |w| w.iter().sum::<f64>() > 1e-3)
        .prop_map(move |w| {
            let t: f64 = w.iter().sum();
            let g = Geometry::binned(0.1, 0.0, 0.1 * len as f64).unwrap();
            Masses::new(
                g,
                w.iter()
                    .enumerate()
                    .map(|(i, v)| (i as i64, v / t))
                    .collect(),
            )
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tv_is_a_metric(a in masses(12), b in masses(12), c in masses(12)) {
        let ab = tv_distance(&a, &b).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&ab));
        prop_assert_eq!(ab, tv_distance(&b, &a).unwrap());
        prop_assert_eq!(tv_distance(&a, &a).unwrap(), 0.0);
        prop_assert!(tv_distance(&a, &c).unwrap() <= ab + tv_distance(&b, &c).unwrap() + 1e-12);
    }

    #[test]
    fn coarsening_does_not_increase_tv(a in masses(24), b in masses(24), f in 1u32..7) {
        let fine = tv_distance(&a, &b).unwrap();
        let coarse = tv_distance(&a.coarsen(f).unwrap(), &b.coarsen(f).unwrap()).unwrap();
        prop_assert!(coarse <= fine + 1e-12);
    }

    #[test]
    fn v_gamma_dominates_twice_tv(a in masses(12), b in masses(12), gamma in 0.0f64..2.0) {
        prop_assert!(v_gamma_distance(&a, &b, gamma).unwrap() >= 2.0 * tv_distance(&a, &b).unwrap() - 1e-12);
    }

    #[test]
    fn merge_is_associative_and_commutative(
        xs in prop::collection::vec(-1.0f64..3.0, 0..50),
        ys in prop::collection::vec(-1.0f64..3.0, 0..50),
        zs in prop::collection::vec(-1.0f64..3.0, 0..50),
    ) {
        let g = Geometry::binned(0.25, 0.0, 2.0).unwrap();
        let e = |v: &[f64]| EmpiricalDistribution::from_samples(g, v).unwrap();
        let mut left = e(&xs);
        left.merge(&e(&ys)).unwrap();
        left.merge(&e(&zs)).unwrap();
        let mut yz = e(&ys);
        yz.merge(&e(&zs)).unwrap();
        let mut right = e(&xs);
        right.merge(&yz).unwrap();
        prop_assert_eq!(&left, &right);
        let mut swapped = e(&zs);
        swapped.merge(&e(&ys)).unwrap();
        swapped.merge(&e(&xs)).unwrap();
        prop_assert_eq!(&left, &swapped);
        let all: Vec<f64> = xs.iter().chain(&ys).chain(&zs).copied().collect();
        prop_assert_eq!(&left, &e(&all));
    }

    #[test]
    fn invariant_measures_have_unit_mass(spec in lattice_law(), h in 1i64..4) {
        let pi_h = InvariantMeasure::pi_h(&spec, h as f64).unwrap();
        for m in [InvariantMeasure::pi_plus(&spec), InvariantMeasure::pi_minus(&spec), pi_h] {
            let total: f64 = m.atoms().unwrap().iter().map(|a| a.1).sum();
            prop_assert!((total - 1.0).abs() < 1e-12, "{total}");
            let exact: num::BigRational = m.exact_atoms().unwrap().into_iter().map(|a| a.1).sum();
            prop_assert_eq!(exact, num::BigRational::from_integer(1.into()));
        }
    }

    #[test]
    fn q_is_exactly_balanced(spec in lattice_law()) {
        let r = detailed_balance_q(&spec, None).unwrap();
        prop_assert!(r.exact_zero);
        prop_assert_eq!(r.max_residual, 0.0);
    }

    #[test]
    fn crossings_are_well_formed(spec in lattice_law(), x in -20i64..20, seed in 0u64..1000) {
        let sim = Simulator::new(&spec).unwrap();
        let lo = spec.inf_support();
        let hi = spec.sup_support();
        for e in sim.overshoot_chain(x as f64, 5, &RngStream::new(seed, 0)).unwrap() {
            // One step of size at most sup X carries U < 0 to O >= 0.
            prop_assert!(e.overshoot >= 0.0 && e.undershoot < 0.0);
            prop_assert!(e.overshoot < hi && e.undershoot >= -hi);
            prop_assert!(e.overshoot - e.undershoot <= hi);
        }
        for e in sim.down_chain(x as f64, 5, &RngStream::new(seed, 1)).unwrap() {
            prop_assert!(e.overshoot < 0.0 && e.undershoot >= 0.0);
            prop_assert!(e.overshoot >= lo && e.undershoot < -lo);
            prop_assert!(e.overshoot - e.undershoot >= lo);
        }
    }

    #[test]
    fn laplace_quantile_inverts_cdf(u in 1e-9f64..(1.0 - 1e-9)) {
        let m = InvariantMeasure::pi_plus(&IncrementSpec::laplace(1.0).unwrap());
        let y = m.quantile(u).unwrap();
        prop_assert!((m.cdf(y) - u).abs() < 1e-9);
        prop_assert!((y - (-(1.0 - u).ln())).abs() < 1e-8 * y.max(1.0));
    }

    #[test]
    fn same_stream_same_chain(seed in any::<u64>(), id in 0u64..1 << 40) {
        let sim = Simulator::new(&IncrementSpec::laplace(1.0).unwrap()).unwrap();
        let a = sim.overshoot_chain(0.0, 3, &RngStream::new(seed, id)).unwrap();
        let b = sim.overshoot_chain(0.0, 3, &RngStream::new(seed, id)).unwrap();
        prop_assert_eq!(a, b);
    }
}
